import numpy as np
import pytest

from homd import operators as ops
from homd import primitives as prim
from homd.errors import NonFinite, ZeroNormal
from homd.filtering import (
    FilterConfig,
    FilterState,
    _pcg,
    compute_face_weights,
    compute_weights,
    denoise_scalar_field,
    energy,
    filter_normals,
    filter_normals_laplacian,
    n_system,
    project_unit,
    scalar_objective,
    shrink,
    solve_n_linear,
    solve_n_sub,
    solve_p_sub,
    update_multiplier,
)
from homd.mesh import Mesh


@pytest.fixture(scope="module")
def ico():
    return Mesh(*prim.icosahedron())


def _unit(rng, n):
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# config -----------------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        dict(alpha=0, r_p=1), dict(alpha=1, r_p=-1), dict(alpha=1, r_p=1, eps=0),
        dict(alpha=1, r_p=1, max_iter=0), dict(alpha=1, r_p=1, cg_max=0),
        dict(alpha=1, r_p=1, regularizer="tv"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        FilterConfig(**kwargs)


def test_config_defaults():
    c = FilterConfig(alpha=1.0, r_p=1.0)
    assert (c.eps, c.max_iter, c.cg_max, c.use_dynamic_weights) == (1e-4, 100, 10, True)


# weights ----------------------------------------------------------------------

def test_weights_flat_region_is_one(ico):
    N = np.tile([0.0, 0.0, 1.0], (20, 1))
    assert np.all(compute_weights(ico, N) == 1.0)
    assert np.all(compute_face_weights(ico, N) == 1.0)


def test_weight_of_unit_second_difference(ico):
    t, j = 0, 0
    N = np.zeros((20, 3))
    N[ico.line_plus[t, j]] = [1.0, 0.0, 0.0]
    assert compute_weights(ico, N)[t, j] == pytest.approx(np.exp(-1.0), rel=1e-15)


def test_weights_decrease_with_stencil_magnitude(ico):
    t, j = 0, 0
    values = []
    for x in np.linspace(0.0, 2.0, 21):
        N = np.zeros((20, 3))
        N[ico.line_plus[t, j]] = [x, 0.0, 0.0]
        values.append(compute_weights(ico, N)[t, j])
    assert np.all(np.diff(values) < 0)
    assert values[0] == 1.0


def test_boundary_lines_weight_one(rng):
    m = Mesh(*prim.grid_patch(4, 4))
    w = compute_weights(m, _unit(rng, m.n_faces))
    assert np.all(w[~m.line_active] == 1.0)
    assert np.all((w > 0) & (w <= 1))


# shrinkage and multiplier ------------------------------------------------------

def test_shrink_examples():
    np.testing.assert_allclose(shrink(np.array([3.0, 0, 0]), 0.5), [2.5, 0, 0])
    np.testing.assert_array_equal(shrink(np.array([0.2, 0, 0]), 0.5), [0, 0, 0])
    xi = np.array([[0.3, -0.1, 2.0]])
    np.testing.assert_array_equal(shrink(xi, np.zeros(1)), xi)
    np.testing.assert_array_equal(shrink(np.zeros((2, 3)), np.ones(2)), np.zeros((2, 3)))


def test_solve_p_sub_uses_weight_over_rp():
    DN = np.array([[[3.0, 0.0, 0.0]]])
    p = solve_p_sub(DN, np.zeros_like(DN), np.ones((1, 1)), 2.0)
    np.testing.assert_allclose(p, [[[2.5, 0, 0]]])
    p = solve_p_sub(DN, np.zeros_like(DN), np.zeros((1, 1)), 2.0)
    np.testing.assert_array_equal(p, DN)


def test_update_multiplier(rng):
    lam = rng.normal(size=(5, 3, 3))
    DN = rng.normal(size=(5, 3, 3))
    np.testing.assert_array_equal(update_multiplier(lam, DN, DN, 3.0), lam)
    r = rng.normal(size=(5, 3, 3))
    np.testing.assert_allclose(update_multiplier(np.zeros_like(r), DN + r, DN, 1.0), r)
    p1, p2 = rng.normal(size=(2, 5, 3, 3))
    twice = update_multiplier(update_multiplier(lam, p1, DN, 2.0), p2, DN, 2.0)
    np.testing.assert_allclose(twice, lam + 2.0 * (p1 - DN) + 2.0 * (p2 - DN))


# N-subproblem --------------------------------------------------------------------

def test_fidelity_only_system_returns_input(ico, rng):
    N_in = _unit(rng, 20)
    zeros = np.zeros((20, 3, 3))
    A, b = n_system(ico, N_in, zeros, zeros, alpha=1.0, r_p=0.0)
    x, _, _ = _pcg(A, b, np.zeros_like(N_in), A.diagonal(), 10, 1e-12)
    np.testing.assert_allclose(x, N_in, atol=1e-14)
    np.testing.assert_allclose(project_unit(x), N_in, atol=1e-14)


def test_huge_alpha_keeps_input(ico, rng):
    N_in = _unit(rng, 20)
    cfg = FilterConfig(alpha=1e12, r_p=5.0)
    state = FilterState(N=N_in, p=rng.normal(size=(20, 3, 3)), lambda_p=np.zeros((20, 3, 3)),
                        w=np.ones((20, 3)))
    N = solve_n_sub(ico, state, N_in, cfg, x0=np.zeros_like(N_in))
    assert ops.norm(ico, "V", N - N_in) <= 1e-4


def test_linear_solve_matches_dense(rng):
    m = Mesh(*prim.icosphere(1))
    N_in = _unit(rng, m.n_faces)
    p, lam = rng.normal(size=(2, m.n_faces, 3, 3))
    cfg = FilterConfig(alpha=3.0, r_p=2.0, cg_max=500, cg_tol=1e-13)
    x, hist, _ = solve_n_linear(m, N_in, p, lam, cfg)
    A, b = n_system(m, N_in, p, lam, cfg.alpha, cfg.r_p)
    dense = np.linalg.solve(A.toarray(), b)
    assert np.linalg.norm(x - dense) <= 1e-6 * np.linalg.norm(dense)
    assert hist[-1] <= 1e-12 * np.linalg.norm(b)


def test_linear_system_is_first_order_condition(rng):
    # r_p D*D N + alpha N = r_p D*p + D*lambda + alpha N_in, with D* the adjoint
    m = Mesh(*prim.icosphere(1))
    N_in = _unit(rng, m.n_faces)
    p, lam = rng.normal(size=(2, m.n_faces, 3, 3))
    alpha, r_p = 3.0, 2.0
    A, b = n_system(m, N_in, p, lam, alpha, r_p)
    N = np.linalg.solve(A.toarray(), b)
    lhs = r_p * ops.second_diff_adjoint(m, ops.second_diff(m, N)) + alpha * N
    rhs = ops.second_diff_adjoint(m, r_p * p + lam) + alpha * N_in
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())


def test_cg_objective_is_non_increasing(noisy_cube):
    cfg = FilterConfig(alpha=100.0, r_p=3.0, max_iter=20)
    _, state = filter_normals(noisy_cube, noisy_cube.face_normals, cfg)
    assert len(state.cg_objective) == state.k
    for obj, res in zip(state.cg_objective, state.cg_residuals):
        obj = np.asarray(obj)
        assert np.all(np.diff(obj) <= 1e-12 * np.abs(obj).max())
        assert len(res) <= cfg.cg_max + 1
        assert res[-1] <= res[0]


def test_project_unit_zero_vector():
    N = np.array([[0.0, 0.0, 0.0], [0.0, 3.0, 4.0]])
    with pytest.raises(ZeroNormal):
        project_unit(N)
    prev = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(project_unit(N, prev), [[1, 0, 0], [0, 0.6, 0.8]])


# energy --------------------------------------------------------------------------

def test_energy_examples(ico, rng):
    N = np.tile([0.0, 1.0, 0.0], (20, 1))
    w = np.ones((20, 3))
    assert energy(ico, N, N, w, alpha=7.0) == 0.0
    N = _unit(rng, 20)
    w = rng.uniform(size=(20, 3))
    assert energy(ico, N, N, w, 7.0) == pytest.approx(ops.regularizer_value(ico, "vhow", N, w))
    N_in = _unit(rng, 20)
    expect = ops.regularizer_value(ico, "vhow", N, w) + 3.5 * ops.inner_product(
        ico, "V", N - N_in, N - N_in
    )
    assert energy(ico, N, N_in, w, 7.0) == pytest.approx(expect, rel=1e-13)
    wf = rng.uniform(size=20)
    assert energy(ico, N, N, wf, 7.0, kind="lap") == pytest.approx(
        ops.regularizer_value(ico, "vlapw", N, wf)
    )


# full solver ---------------------------------------------------------------------

def test_smooth_input_is_nearly_fixed(rng):
    m = Mesh(*prim.icosphere(3))
    N_in = m.face_normals
    N, state = filter_normals(m, N_in, FilterConfig(alpha=1e5, r_p=1.0))
    assert ops.norm(m, "V", N - N_in) <= 1e-3
    assert state.converged


def test_unit_norm_after_every_iteration(noisy_cube):
    norms = []
    cfg = FilterConfig(alpha=100.0, r_p=3.0, max_iter=15)
    filter_normals(noisy_cube, noisy_cube.face_normals, cfg,
                   callback=lambda s: norms.append(np.abs(np.linalg.norm(s.N, axis=1) - 1).max()))
    assert len(norms) == 15
    assert max(norms) <= 1e-12


def test_weights_off_stay_one(noisy_cube):
    cfg = FilterConfig(alpha=100.0, r_p=3.0, max_iter=5, use_dynamic_weights=False)
    seen = []
    filter_normals(noisy_cube, noisy_cube.face_normals, cfg, callback=lambda s: seen.append(s.w))
    assert all(np.all(w == 1.0) for w in seen)


def test_unweighted_energy_matches_vho(noisy_cube):
    cfg = FilterConfig(alpha=100.0, r_p=3.0, max_iter=3, use_dynamic_weights=False)
    N, state = filter_normals(noisy_cube, noisy_cube.face_normals, cfg)
    N_in = noisy_cube.face_normals
    expect = ops.regularizer_value(noisy_cube, "vho", N) + 50.0 * ops.inner_product(
        noisy_cube, "V", N - N_in, N - N_in
    )
    assert state.energy_trace[-1] == pytest.approx(expect, rel=1e-12)


def test_multiplier_residual_shrinks(cube, noisy_cube):
    cfg = FilterConfig(alpha=100.0, r_p=3.0)
    _, state = filter_normals(noisy_cube, noisy_cube.face_normals, cfg)
    assert state.converged
    assert state.residual_trace[-1] < state.residual_trace[0]


def test_non_finite_input_raises(ico, rng):
    N_in = _unit(rng, 20)
    N_in[3] = np.nan
    with pytest.raises(NonFinite):
        filter_normals(ico, N_in, FilterConfig(alpha=1.0, r_p=1.0, max_iter=3))


def test_laplacian_filter_constant_input_is_fixed():
    m = Mesh(*prim.grid_patch(6, 6))
    N_in = m.face_normals
    N, state = filter_normals_laplacian(m, N_in, FilterConfig(alpha=10.0, r_p=1.0))
    np.testing.assert_allclose(N, N_in, atol=1e-12)
    assert np.all(state.w == 1.0)
    assert state.w.shape == (m.n_faces,)


# scalar fields -------------------------------------------------------------------

def test_scalar_constant_is_fixed(ico):
    f = np.full(20, 2.5)
    for kind in ("ho", "lap"):
        np.testing.assert_allclose(denoise_scalar_field(ico, f, kind, alpha=1.0), f, atol=1e-10)


def test_scalar_huge_alpha_keeps_data(ico, rng):
    f = rng.normal(size=20)
    u = denoise_scalar_field(ico, f, "ho", alpha=1e9)
    assert ops.norm(ico, "V", u - f) <= 1e-4


def _subgradient_oracle(mesh, f, kind, alpha, iters=100_000):
    """Weighted-average subgradient descent with step 2 / (mu (k + 1)) on a strongly convex objective."""
    M = ops.assemble(mesh)
    D = (M.second if kind == "ho" else M.laplace).toarray()
    meas = M.line_length if kind == "ho" else M.face_area
    s = mesh.face_area
    mu = alpha * s.min()
    u = f.copy()
    avg = np.zeros_like(f)
    total = 0.0
    for k in range(1, iters + 1):
        g = D.T @ (meas * np.sign(D @ u)) + alpha * s * (u - f)
        u = u - 2.0 * g / (mu * (k + 1))
        avg += k * u
        total += k
    return avg / total


@pytest.mark.parametrize("kind", ["ho", "lap"])
def test_scalar_matches_subgradient_oracle(kind):
    m = Mesh(*prim.octahedron())
    f = np.random.default_rng(0).normal(size=8)
    alpha = 20.0
    ours = scalar_objective(m, denoise_scalar_field(m, f, kind, alpha), f, kind, alpha)
    oracle = scalar_objective(m, _subgradient_oracle(m, f, kind, alpha), f, kind, alpha)
    assert abs(ours - oracle) <= 1e-4
    # the ADMM solution is at least as good as the oracle up to its residual
    assert ours <= oracle + 1e-8
