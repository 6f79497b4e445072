"""Face-normal filtering by augmented Lagrangian splitting with dynamic weights.

Two regularizers share one solver skeleton:

``ho``
    weighted second-difference norm over barycenter-to-vertex lines,
    weights ``exp(-|N_plus + N_minus - 2 N_t|**4)``.
``lap``
    weighted norm of the face Laplacian, weights
    ``exp(-|sum over ring (N_t - N_nb)|**4)``.

Each outer iteration solves a linear system for the normals (a few Jacobi-PCG
steps, warm started), projects them onto the unit sphere, shrinks the
auxiliary variable in closed form, updates the multiplier and reweights.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from . import operators as ops
from .errors import NonFinite, ZeroNormal

logger = logging.getLogger(__name__)

_ZERO_NORMAL = 1e-12


@dataclass
class FilterConfig:
    """Solver parameters.

    ``alpha`` weighs fidelity to the input normals, ``r_p`` is the penalty of the
    splitting constraint; both have to be tuned per mesh. Small ``alpha`` or large
    ``r_p`` over-smooth, large ``alpha`` or small ``r_p`` leave noise.
    """

    alpha: float
    r_p: float
    eps: float = 1e-4
    max_iter: int = 100
    cg_max: int = 10
    cg_tol: float = 1e-6
    use_dynamic_weights: bool = True
    regularizer: str = "ho"
    # report the energy with the initial (unit) weights instead of the current ones
    trace_fixed_weights: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.r_p > 0:
            raise ValueError("r_p must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iter < 1 or self.cg_max < 1:
            raise ValueError("max_iter and cg_max must be at least 1")
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")
        if self.regularizer not in ("ho", "lap"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")


@dataclass
class FilterState:
    N: np.ndarray
    p: np.ndarray
    lambda_p: np.ndarray
    w: np.ndarray
    k: int = 0
    energy_trace: list = field(default_factory=list)
    delta_trace: list = field(default_factory=list)
    # ||p - D N|| in the auxiliary space, per iteration
    residual_trace: list = field(default_factory=list)
    cg_residuals: list = field(default_factory=list)
    cg_objective: list = field(default_factory=list)
    converged: bool = False


# weights --------------------------------------------------------------------

def compute_weights(mesh, N):
    """Per-line dynamic weights in (0, 1]; lines flanked by the boundary get 1."""
    d = ops.second_diff(mesh, N)
    w = np.exp(-np.sum(d * d, axis=-1) ** 2)
    return np.where(mesh.line_active, w, 1.0)


def compute_face_weights(mesh, N):
    """Per-face dynamic weights of the Laplacian filter."""
    nb = mesh.face_neighbors
    has = nb >= 0
    diff = (N[:, None, :] - N[np.where(has, nb, 0)]) * has[..., None]
    s = diff.sum(axis=1)
    return np.exp(-np.sum(s * s, axis=-1) ** 2)


# splitting ------------------------------------------------------------------

class _Splitting:
    """Linear operator D, its per-entry measure and weights for one regularizer."""

    def __init__(self, mesh, kind):
        self.mesh = mesh
        self.kind = kind
        m = ops.assemble(mesh)
        if kind == "ho":
            self.D = m.second
            self.measure = m.line_length
            self.shape = (mesh.n_faces, 3)
        else:
            self.D = m.laplace
            self.measure = m.face_area
            self.shape = (mesh.n_faces,)
        self.Dt_W = (self.D.T @ sparse.diags(self.measure)).tocsr()
        self.normal = (self.Dt_W @ self.D).tocsr()

    def apply(self, N):
        return (self.D @ N).reshape(self.shape + (N.shape[-1],))

    def weights(self, N):
        if self.kind == "ho":
            return compute_weights(self.mesh, N)
        return compute_face_weights(self.mesh, N)

    def unit_weights(self):
        return np.ones(self.shape)

    def regularizer(self, N, w):
        d = self.apply(N)
        return float(np.sum(w * np.sqrt(np.sum(d * d, axis=-1)) * self.measure.reshape(self.shape)))

    def norm(self, a):
        return float(np.sqrt(np.sum(self.measure.reshape(self.shape + (1,)) * a * a)))


def _pcg(A, b, x0, diag, maxiter, rtol):
    """Jacobi-preconditioned CG on independent right-hand-side columns.

    Returns the solution, the Frobenius norm of the residual after each step
    (index 0 is the initial one) and the quadratic objective
    ``1/2 x'Ax - b'x`` summed over columns after each step. CG decreases the
    objective (the A^-1-norm of the residual) monotonically; the Euclidean
    residual norm usually falls too but may rise on some steps.
    """
    x = x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b, axis=0)
    bnorm[bnorm == 0] = 1.0
    minv = (1.0 / diag)[:, None]
    z = minv * r
    d = z.copy()
    rz = np.sum(r * z, axis=0)
    history = [float(np.linalg.norm(r))]
    objective = [-0.5 * float(np.sum(x * (b + r)))]
    for _ in range(maxiter):
        if np.all(np.linalg.norm(r, axis=0) <= rtol * bnorm):
            break
        Ad = A @ d
        dAd = np.sum(d * Ad, axis=0)
        step = np.divide(rz, dAd, out=np.zeros_like(rz), where=dAd > 0)
        x += step * d
        r -= step * Ad
        z = minv * r
        rz_new = np.sum(r * z, axis=0)
        beta = np.divide(rz_new, rz, out=np.zeros_like(rz), where=rz > 0)
        d = z + beta * d
        rz = rz_new
        history.append(float(np.linalg.norm(r)))
        objective.append(-0.5 * float(np.sum(x * (b + r))))
    return x, history, objective


def n_system(mesh, N_in, p, lambda_p, alpha, r_p, kind="ho"):
    """Symmetric form ``(A, b)`` of the normal update's first-order condition.

    ``r_p D*D N + alpha N = r_p D*p + D*lambda + alpha N_in`` multiplied by the face
    areas, so that ``A`` is symmetric positive definite.
    """
    sp = _splitting(mesh, kind)
    area = mesh.face_area
    A = (r_p * sp.normal + alpha * sparse.diags(area)).tocsr()
    flat = (r_p * p + lambda_p).reshape(-1, N_in.shape[-1])
    b = sp.Dt_W @ flat + alpha * area[:, None] * N_in
    return A, b


def _splitting(mesh, kind):
    key = ("splitting", kind)
    sp = mesh._cache.get(key)
    if sp is None:
        sp = mesh._cache[key] = _Splitting(mesh, kind)
    return sp


def solve_n_linear(mesh, N_in, p, lambda_p, config, x0=None):
    """Approximate solution of the unconstrained normal system (before projection)."""
    A, b = n_system(mesh, N_in, p, lambda_p, config.alpha, config.r_p, config.regularizer)
    x0 = N_in if x0 is None else x0
    return _pcg(A, b, np.array(x0, dtype=float), A.diagonal(), config.cg_max, config.cg_tol)


def project_unit(N, previous=None):
    """Normalize each face vector; near-zero vectors fall back to ``previous``."""
    mag = np.linalg.norm(N, axis=1)
    small = mag < _ZERO_NORMAL
    if small.any():
        if previous is None:
            raise ZeroNormal(f"face {int(np.flatnonzero(small)[0])} has a vanishing normal")
        out = np.array(previous, dtype=float)
        good = ~small
        out[good] = N[good] / mag[good, None]
        return out
    return N / mag[:, None]


def solve_n_sub(mesh, state, N_in, config, x0=None):
    """Normal update: a few PCG steps on the linear system, then projection onto spheres."""
    N_prev = state.N if state.k > 0 else None
    x, hist, obj = solve_n_linear(mesh, N_in, state.p, state.lambda_p, config, x0=x0)
    state.cg_residuals.append(hist)
    state.cg_objective.append(obj)
    return project_unit(x, N_prev)


def shrink(xi, threshold):
    """Vector soft thresholding: ``max(0, 1 - threshold / |xi|) * xi`` along the last axis."""
    mag = np.sqrt(np.sum(xi * xi, axis=-1, keepdims=True))
    threshold = np.asarray(threshold, dtype=float)
    if threshold.ndim == mag.ndim - 1:
        threshold = threshold[..., None]
    scale = np.maximum(0.0, 1.0 - np.divide(threshold, mag, out=np.full_like(mag, np.inf), where=mag > 0))
    scale = np.where(mag > threshold, scale, 0.0)
    return scale * xi


def solve_p_sub(DN, lambda_p, w, r_p):
    """Closed-form auxiliary update given the current ``D N`` (per-element shrinkage)."""
    return shrink(DN - lambda_p / r_p, np.asarray(w) / r_p)


def update_multiplier(lambda_p, p, DN, r_p):
    return lambda_p + r_p * (p - DN)


def energy(mesh, N, N_in, w, alpha, kind="ho"):
    """Filter objective: weighted regularizer plus ``alpha/2 ||N - N_in||^2`` (area weighted)."""
    sp = _splitting(mesh, kind)
    fid = ops.inner_product(mesh, "V", N - N_in, N - N_in)
    return sp.regularizer(N, w) + 0.5 * alpha * fid


def filter_normals(mesh, N_in, config, callback=None):
    """Filter a unit face-normal field.

    Parameters
    ----------
    mesh : Mesh
    N_in : ndarray, shape (T, 3)
        Unit face normals of the noisy surface.
    config : FilterConfig
    callback : callable, optional
        Called as ``callback(state)`` after every outer iteration.

    Returns
    -------
    N : ndarray, shape (T, 3)
    state : FilterState
        Final iterate, multiplier, weights and per-iteration traces.
    """
    N_in = np.asarray(N_in, dtype=float)
    sp = _splitting(mesh, config.regularizer)
    aux_shape = sp.shape + (N_in.shape[1],)
    state = FilterState(
        N=np.zeros_like(N_in),
        p=np.zeros(aux_shape),
        lambda_p=np.zeros(aux_shape),
        w=sp.unit_weights(),
    )
    fixed_w = sp.unit_weights()
    r_p = config.r_p
    for k in range(config.max_iter):
        state.k = k
        x0 = N_in if k == 0 else state.N
        N = solve_n_sub(mesh, state, N_in, config, x0=x0)
        DN = sp.apply(N)
        state.p = solve_p_sub(DN, state.lambda_p, state.w, r_p)
        state.lambda_p = update_multiplier(state.lambda_p, state.p, DN, r_p)
        if config.use_dynamic_weights:
            state.w = sp.weights(N)

        delta = ops.norm(mesh, "V", N - state.N)
        e = energy(
            mesh, N, N_in, fixed_w if config.trace_fixed_weights else state.w,
            config.alpha, config.regularizer,
        )
        if not np.isfinite(e) or not np.all(np.isfinite(N)):
            raise NonFinite(f"filter diverged at iteration {k}")
        state.N = N
        state.energy_trace.append(e)
        state.delta_trace.append(delta)
        state.residual_trace.append(sp.norm(state.p - DN))
        logger.debug("iter %d energy %.6e delta %.3e", k, e, delta)
        if callback is not None:
            callback(state)
        if delta < config.eps:
            state.converged = True
            break
    state.k = len(state.energy_trace)
    return state.N, state


def filter_normals_laplacian(mesh, N_in, config, callback=None):
    """Same solver with the weighted Laplacian regularizer in place of second differences."""
    if config.regularizer != "lap":
        config = FilterConfig(**{**config.__dict__, "regularizer": "lap"})
    return filter_normals(mesh, N_in, config, callback=callback)


# scalar fields --------------------------------------------------------------

def scalar_objective(mesh, u, f, kind, alpha):
    u = np.asarray(u, dtype=float)
    reg = ops.regularizer_value(mesh, kind, u)
    return reg + 0.5 * alpha * ops.inner_product(mesh, "V", u - f, u - f)


def denoise_scalar_field(mesh, f, kind="ho", alpha=1.0, r_p=1.0, max_iter=2000, tol=1e-10):
    """Minimize ``R(u) + alpha/2 ||u - f||^2`` for a scalar face field.

    ``kind`` selects the second-difference (``ho``) or Laplacian (``lap``)
    regularizer. No weights and no projection; the linear step is solved exactly
    with a sparse factorization, so the iteration is a convergent ADMM.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1:
        raise ValueError("denoise_scalar_field expects a single-channel field")
    sp = _splitting(mesh, kind)
    A, _ = n_system(mesh, f[:, None], np.zeros(sp.shape + (1,)), np.zeros(sp.shape + (1,)),
                    alpha, r_p, kind)
    solve = splinalg.factorized(A.tocsc())
    u = f[:, None].copy()
    p = np.zeros(sp.shape + (1,))
    lam = np.zeros_like(p)
    w = sp.unit_weights()
    for _ in range(max_iter):
        _, b = n_system(mesh, f[:, None], p, lam, alpha, r_p, kind)
        u_new = solve(b[:, 0])[:, None]
        if not np.all(np.isfinite(u_new)):
            raise NonFinite("scalar denoising diverged")
        Du = sp.apply(u_new)
        p = solve_p_sub(Du, lam, w, r_p)
        lam = update_multiplier(lam, p, Du, r_p)
        step = ops.norm(mesh, "V", u_new - u)
        u = u_new
        if step < tol:
            break
    return u[:, 0]
