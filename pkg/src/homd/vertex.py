"""Vertex reconstruction from a filtered face-normal field.

``update_vertices`` minimizes the orientation-aware energy

    E(v) = -sum_t s_t N_t . n_t(v) + eta/2 |v - v_in|^2

where ``n_t(v)`` is the unit normal of triangle ``t`` at positions ``v`` and
``s_t`` its area on the input mesh. ``sun_update`` is the classical
orthogonality model ``sum_t sum_edges s_t (N_t . (v_i - v_j))^2``, which cannot
tell ``N_t`` from ``-N_t``.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .errors import DegenerateFace

logger = logging.getLogger(__name__)


@dataclass
class UpdateConfig:
    eta: float = 1e-3
    max_iters: int = 500
    # stop when |grad| <= grad_tol * sqrt(V) * bbox diagonal
    grad_tol: float = 1e-8
    # stop when an accepted step lowers the energy by less than ftol * |E|
    ftol: float = 1e-13
    history: int = 8
    c1: float = 1e-4
    c2: float = 0.9
    # faces whose twice-area drops below this fraction of their input area are rejected
    degenerate_ratio: float = 1e-14

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not (self.max_iters >= 1 and self.grad_tol > 0 and self.history >= 1):
            raise ValueError("max_iters, grad_tol and history must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line search constants need 0 < c1 < c2 < 1")


@dataclass
class UpdateResult:
    vertices: np.ndarray
    energy_trace: list = field(default_factory=list)
    foldover_count: int = 0
    iterations: int = 0
    converged: bool = False
    line_search_failed: bool = False


def _frames(faces, v):
    i, j, k = faces[:, 0], faces[:, 1], faces[:, 2]
    cross = np.cross(v[j] - v[i], v[k] - v[i])
    mag = np.linalg.norm(cross, axis=1)
    return cross, mag


def _check(mag, s, ratio=0.0):
    bad = mag <= ratio * s
    if bad.any():
        raise DegenerateFace(int(np.flatnonzero(bad)[0]))


def energy_v(faces, v, N, s, v_in, eta):
    """Orientation-aware vertex energy; raises :class:`DegenerateFace` on collapsed faces."""
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    cross, mag = _frames(faces, v)
    _check(mag, s)
    align = np.sum(N * cross, axis=1) / mag
    d = v - v_in
    return float(-np.dot(s, align) + 0.5 * eta * np.sum(d * d))


def gradient_v(faces, v, N, s, v_in, eta):
    """Exact gradient of :func:`energy_v`, shape (V, 3).

    For ``t = (v_i, v_j, v_k)`` the contribution to ``v_i`` is
    ``s_t ((N_t . n_t) n_t - N_t) x (v_k - v_j) / |cross_t|``, and cyclically.
    """
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    cross, mag = _frames(faces, v)
    _check(mag, s)
    n = cross / mag[:, None]
    m = (np.sum(N * n, axis=1)[:, None] * n - N) * (s / mag)[:, None]
    i, j, k = faces[:, 0], faces[:, 1], faces[:, 2]
    g = eta * (v - v_in)
    np.add.at(g, i, np.cross(m, v[k] - v[j]))
    np.add.at(g, j, np.cross(m, v[i] - v[k]))
    np.add.at(g, k, np.cross(m, v[j] - v[i]))
    return g


def energy_v_loop(faces, v, N, s, v_in, eta):
    """Per-face reference evaluation of :func:`energy_v` (slow; for checks)."""
    total = 0.0
    for t, (i, j, k) in enumerate(faces):
        c = np.cross(v[j] - v[i], v[k] - v[i])
        total -= s[t] * float(np.dot(N[t], c)) / float(np.linalg.norm(c))
    for a, b in zip(v, v_in):
        total += 0.5 * eta * float(np.dot(a - b, a - b))
    return total


def foldover_count(faces, v, N):
    """Number of faces whose normal at ``v`` points against the target (dot <= 0)."""
    cross, _ = _frames(faces, np.asarray(v, dtype=float))
    return int(np.sum(np.sum(cross * N, axis=1) <= 0.0))


class _Objective:
    """Energy and gradient on flattened positions with a one-entry cache.

    Near-degenerate trial points evaluate to +inf, which the line search treats
    as too long a step and shortens.
    """

    def __init__(self, faces, N, s, v_in, eta, ratio):
        self.faces, self.N, self.s = faces, N, s
        self.v_in, self.eta = v_in, eta
        self.limit = ratio * s
        self.evaluations = 0
        self._x = None

    def _eval(self, x):
        if self._x is not None and np.array_equal(x, self._x):
            return
        self.evaluations += 1
        v = x.reshape(-1, 3)
        _, mag = _frames(self.faces, v)
        self._x = x.copy()
        if np.any(mag <= self.limit) or not np.all(np.isfinite(v)):
            self._f, self._g = np.inf, None
            return
        self._f = energy_v(self.faces, v, self.N, self.s, self.v_in, self.eta)
        self._g = gradient_v(self.faces, v, self.N, self.s, self.v_in, self.eta).ravel()

    def f(self, x):
        self._eval(x)
        return self._f

    def g(self, x):
        self._eval(x)
        if self._g is None:
            raise DegenerateFace(int(np.argmin(_frames(self.faces, x.reshape(-1, 3))[1])))
        return self._g


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _backtrack(obj, x, f, g, d, c1, halvings=60):
    slope = float(np.dot(g, d))
    step = 1.0
    for _ in range(halvings):
        fn = obj.f(x + step * d)
        if fn <= f + c1 * step * slope:
            return step
        step *= 0.5
    return None


def update_vertices(mesh, N, config=None):
    """Fit vertex positions to target face normals ``N`` with limited-memory BFGS.

    Starts from the mesh's own vertices; areas ``s_t`` stay those of the input.
    Steps satisfy the strong Wolfe conditions, with Armijo backtracking along
    the steepest descent direction as a fallback. Iteration stops when the
    gradient is small, the energy stops decreasing, or ``max_iters`` is reached.
    """
    config = config or UpdateConfig()
    faces = mesh.triangles
    N = np.asarray(N, dtype=float)
    v_in = mesh.vertices.copy()
    s = mesh.face_area.copy()
    obj = _Objective(faces, N, s, v_in, config.eta, config.degenerate_ratio)

    diag = float(np.linalg.norm(v_in.max(axis=0) - v_in.min(axis=0)))
    gtol = config.grad_tol * np.sqrt(mesh.n_vertices) * diag

    x = v_in.ravel().copy()
    f, g = obj.f(x), obj.g(x)
    result = UpdateResult(vertices=v_in, energy_trace=[f])
    S, Y = [], []
    old_f = f + np.linalg.norm(g) / 2.0
    it = 0
    while it < config.max_iters:
        if np.linalg.norm(g) <= gtol:
            result.converged = True
            break
        d = _two_loop(g, S, Y)
        if np.dot(d, g) >= 0:
            S, Y = [], []
            d = -g
        with warnings.catch_warnings():
            # failures are handled below by the backtracking fallback
            warnings.filterwarnings("ignore", message="The line search", category=RuntimeWarning)
            step, _, _, f_new, _, _ = line_search(
                obj.f, obj.g, x, d, gfk=g, old_fval=f, old_old_fval=old_f,
                c1=config.c1, c2=config.c2,
            )
        if step is None or f_new is None or not f_new < f:
            S, Y = [], []
            d = -g
            step = _backtrack(obj, x, f, g, d, config.c1)
            if step is None:
                result.line_search_failed = True
                warnings.warn("vertex update line search failed; returning best iterate")
                break
            f_new = obj.f(x + step * d)
        if not f_new < f:
            break
        x_new = x + step * d
        g_new = obj.g(x_new)
        sk, yk = x_new - x, g_new - g
        if np.dot(sk, yk) > 1e-12 * np.linalg.norm(sk) * np.linalg.norm(yk):
            S.append(sk)
            Y.append(yk)
            if len(S) > config.history:
                S.pop(0)
                Y.pop(0)
        old_f = f
        x, f, g = x_new, f_new, g_new
        it += 1
        result.energy_trace.append(f)
        logger.debug("bfgs iter %d energy %.10e |g| %.3e", it, f, np.linalg.norm(g))
        if old_f - f <= config.ftol * max(abs(old_f), abs(f), 1.0):
            result.converged = True
            break

    result.vertices = x.reshape(-1, 3)
    result.iterations = it
    result.foldover_count = foldover_count(faces, result.vertices, N)
    return result


# orthogonality baseline -------------------------------------------------------

def sun_energy(faces, v, N, s):
    """``sum_t sum_{edges (i, j) of t} s_t (N_t . (v_i - v_j))^2``."""
    v = np.asarray(v, dtype=float)
    total = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        e = v[faces[:, a]] - v[faces[:, b]]
        total += np.sum(s * np.sum(N * e, axis=1) ** 2)
    return float(total)


def sun_gradient(faces, v, N, s):
    v = np.asarray(v, dtype=float)
    g = np.zeros_like(v)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        e = v[faces[:, a]] - v[faces[:, b]]
        c = (2.0 * s * np.sum(N * e, axis=1))[:, None] * N
        np.add.at(g, faces[:, a], c)
        np.add.at(g, faces[:, b], -c)
    return g


def sun_update(mesh, N, iters=50):
    """Gradient descent on the orthogonality model.

    Per-vertex step ``1 / (6 * sum of incident areas)``: the area-weighted form of
    the classic update ``v_i += mean over faces of N (N . (c_t - v_i))``.
    """
    faces = mesh.triangles
    N = np.asarray(N, dtype=float)
    s = mesh.face_area.copy()
    v = mesh.vertices.copy()
    step = 1.0 / (6.0 * (mesh.vertex_face_incidence @ s))[:, None]
    trace = [sun_energy(faces, v, N, s)]
    for _ in range(iters):
        v = v - step * sun_gradient(faces, v, N, s)
        trace.append(sun_energy(faces, v, N, s))
    return UpdateResult(
        vertices=v,
        energy_trace=trace,
        foldover_count=foldover_count(faces, v, N),
        iterations=iters,
        converged=True,
    )
