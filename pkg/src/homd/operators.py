"""Calculus on piecewise-constant (per-face) fields over a triangle mesh.

Field layouts (``...`` are optional channel axes, e.g. 3 for normals):

* face field ``(T, ...)`` - one value per triangle
* edge field ``(E, ...)`` - one value per edge, zero on boundary edges
* line field ``(T, 3, ...)`` - one value per barycenter-to-vertex line

Every operator has a matrix-free stencil form (the functions below) and an
assembled sparse form (:func:`assemble`). The two agree to round-off.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ChannelMismatch, MeshMismatch, WeightShapeMismatch


def _trail(a, ndim):
    """Reshape a (n,) weight vector so it broadcasts against an ndim-dim field."""
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


# inner products -------------------------------------------------------------

_SPACES = ("V", "Q", "P")


def _measure(mesh, space):
    if space == "V":
        return mesh.face_area
    if space == "Q":
        return mesh.edge_length
    if space == "P":
        return mesh.b1_lengths
    raise ValueError(f"unknown space {space!r}; expected one of {_SPACES}")


def _check_field(mesh, space, a):
    if space not in _SPACES:
        raise ValueError(f"unknown space {space!r}; expected one of {_SPACES}")
    a = np.asarray(a, dtype=float)
    lead = {"V": (mesh.n_faces,), "Q": (mesh.n_edges,), "P": (mesh.n_faces, 3)}[space]
    if a.shape[: len(lead)] != lead:
        raise MeshMismatch(f"{space}-field of shape {a.shape} does not fit mesh (expects {lead})")
    return a


def inner_product(mesh, space, a, b):
    """Weighted inner product in ``V`` (areas), ``Q`` (edge lengths) or ``P`` (line lengths).

    Multi-channel fields sum their channel-wise products.
    """
    a = _check_field(mesh, space, a)
    b = _check_field(mesh, space, b)
    if a.shape != b.shape:
        raise ChannelMismatch(f"channel layouts differ: {a.shape} vs {b.shape}")
    w = _measure(mesh, space)
    return float(np.sum(_trail(w, a.ndim) * a * b))


def norm(mesh, space, a):
    return float(np.sqrt(inner_product(mesh, space, a, a)))


# first order ----------------------------------------------------------------

def gradient(mesh, u):
    """Jump of ``u`` over every edge, ``sum_t u_t sgn(e, t)``; zero on boundary edges."""
    u = _check_field(mesh, "V", u)
    ef, sg = mesh.edge_faces, mesh.edge_face_signs
    interior = ef[:, 1] >= 0
    out = np.zeros((mesh.n_edges,) + u.shape[1:])
    i = np.flatnonzero(interior)
    s0 = _trail(sg[i, 0].astype(float), u.ndim)
    s1 = _trail(sg[i, 1].astype(float), u.ndim)
    out[i] = u[ef[i, 0]] * s0 + u[ef[i, 1]] * s1
    return out


def divergence(mesh, q):
    """Negative adjoint of :func:`gradient` with respect to the V and Q inner products."""
    q = _check_field(mesh, "Q", q)
    fe = mesh.face_edges
    interior = ~mesh.boundary_edges[fe]
    coef = mesh.face_edge_signs * mesh.edge_length[fe] * interior
    acc = np.sum(q[fe] * _trail(coef, q.ndim + 1), axis=1)
    return -acc / _trail(mesh.face_area, acc.ndim)


def laplace(mesh, u):
    """Face-based Laplacian ``-(1/s_t) sum_e (u_t - u_nb) len(e)`` over interior edges."""
    u = _check_field(mesh, "V", u)
    nb = mesh.face_neighbors
    interior = nb >= 0
    nbv = u[np.where(interior, nb, 0)]
    diff = (u[:, None] - nbv) * _trail(mesh.edge_length[mesh.face_edges] * interior, u.ndim + 1)
    return -np.sum(diff, axis=1) / _trail(mesh.face_area, u.ndim)


# second order ---------------------------------------------------------------

def second_diff(mesh, u):
    """Second difference across each line: ``u_plus + u_minus - 2 u_t``.

    Lines flanked by a boundary edge are zero.
    """
    u = _check_field(mesh, "V", u)
    act = mesh.line_active
    plus = np.where(act, mesh.line_plus, 0)
    minus = np.where(act, mesh.line_minus, 0)
    out = u[plus] + u[minus] - 2.0 * u[:, None]
    return out * _trail(act.astype(float), out.ndim)


def second_diff_adjoint(mesh, p):
    """Adjoint of :func:`second_diff` with respect to the P and V inner products.

    On each face this is ``(sum over B2 lines of p len - 2 sum over own lines of p len) / s``,
    restricted to lines not flanked by the boundary.
    """
    p = _check_field(mesh, "P", p)
    act = mesh.line_active
    weighted = p * _trail(mesh.b1_lengths * act, p.ndim)
    out = -2.0 * weighted.sum(axis=1)
    rows, cols = np.nonzero(act)
    np.add.at(out, mesh.line_plus[rows, cols], weighted[rows, cols])
    np.add.at(out, mesh.line_minus[rows, cols], weighted[rows, cols])
    return out / _trail(mesh.face_area, out.ndim)


# assembled form -------------------------------------------------------------

@dataclass(frozen=True)
class OperatorMatrices:
    """Sparse matrices acting on flattened single-channel fields.

    Line fields are flattened as ``3 * t + j``. Multi-channel fields are handled
    by multiplying ``(n, channels)`` arrays.
    """

    grad: sparse.csr_matrix            # (E, T)
    div: sparse.csr_matrix             # (T, E)
    second: sparse.csr_matrix          # (3T, T)
    second_adj: sparse.csr_matrix      # (T, 3T)
    laplace: sparse.csr_matrix         # (T, T)
    face_area: np.ndarray
    edge_length: np.ndarray
    line_length: np.ndarray            # (3T,)


def assemble(mesh):
    """Build (and cache on the mesh) the sparse operator matrices."""
    cached = mesh._cache.get("operators")
    if cached is not None:
        return cached
    nt, ne = mesh.n_faces, mesh.n_edges
    s = mesh.face_area
    ef, sg = mesh.edge_faces, mesh.edge_face_signs
    inner = np.flatnonzero(ef[:, 1] >= 0)
    grad = sparse.csr_matrix(
        (
            np.concatenate([sg[inner, 0], sg[inner, 1]]).astype(float),
            (np.concatenate([inner, inner]), np.concatenate([ef[inner, 0], ef[inner, 1]])),
        ),
        shape=(ne, nt),
    )
    s_inv = sparse.diags(1.0 / s)
    div = (-s_inv @ grad.T @ sparse.diags(mesh.edge_length)).tocsr()

    rows, cols = np.nonzero(mesh.line_active)
    r = 3 * rows + cols
    second = sparse.csr_matrix(
        (
            np.concatenate([np.ones(len(r)), np.ones(len(r)), np.full(len(r), -2.0)]),
            (
                np.concatenate([r, r, r]),
                np.concatenate([mesh.line_plus[rows, cols], mesh.line_minus[rows, cols], rows]),
            ),
        ),
        shape=(3 * nt, nt),
    )
    line_length = mesh.b1_lengths.ravel()
    second_adj = (s_inv @ second.T @ sparse.diags(line_length)).tocsr()
    ops = OperatorMatrices(
        grad=grad,
        div=div,
        second=second,
        second_adj=second_adj,
        laplace=(div @ grad).tocsr(),
        face_area=s,
        edge_length=mesh.edge_length,
        line_length=line_length,
    )
    mesh._cache["operators"] = ops
    return ops


# regularizers ---------------------------------------------------------------

_LINE_KINDS = ("ho", "vho", "vhow")
_FACE_KINDS = ("lap", "vlap", "vlapw")


def regularizer_value(mesh, kind, u, weights=None):
    """Evaluate a sparsity regularizer of a face field.

    ``ho``/``vho``/``vhow`` sum ``w_l |second difference| len(l)`` over lines;
    ``lap``/``vlap``/``vlapw`` sum ``w_t |laplacian| s_t`` over faces. The ``v*``
    kinds take the Euclidean norm across channels; the scalar kinds require a
    single channel. ``*w`` kinds require ``weights``; the others accept optional ones.
    """
    u = _check_field(mesh, "V", u)
    if kind in _LINE_KINDS:
        d = second_diff(mesh, u)
        measure = mesh.b1_lengths
        wshape = (mesh.n_faces, 3)
    elif kind in _FACE_KINDS:
        d = laplace(mesh, u)
        measure = mesh.face_area
        wshape = (mesh.n_faces,)
    else:
        raise ValueError(f"unknown regularizer kind {kind!r}")

    if kind in ("ho", "lap"):
        if u.ndim > 1 and int(np.prod(u.shape[1:])) != 1:
            raise ChannelMismatch(f"{kind!r} needs a scalar field, got shape {u.shape}")
        mag = np.abs(d.reshape(wshape))
    else:
        mag = np.sqrt(np.sum(d.reshape(wshape + (-1,)) ** 2, axis=-1))

    if weights is None:
        if kind.endswith("w"):
            raise WeightShapeMismatch(f"{kind!r} requires weights of shape {wshape}")
        w = 1.0
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != wshape:
            raise WeightShapeMismatch(f"weights of shape {w.shape}; {kind!r} expects {wshape}")
        if np.any(w < 0):
            raise WeightShapeMismatch("weights must be nonnegative")
    return float(np.sum(w * mag * measure))
