"""Immutable triangle mesh with the combinatorics used by the face-based operators.

Conventions
-----------
* Triangles are vertex-index triples in counterclockwise order.
* Edge ``e`` is stored as ``(a, b)`` with ``a < b``; ``sgn(e, t) = +1`` iff the
  pair ``(a, b)`` occurs in the vertex cycle of ``t``.
* Face edge slot ``k`` of triangle ``t`` joins ``t[k]`` and ``t[(k + 1) % 3]``.
* Line slot ``j`` of triangle ``t`` joins its barycenter to vertex ``t[j]``.
  It is flanked by face edge slots ``j`` (``plus``) and ``j - 1`` (``minus``).
"""

import numpy as np
from scipy import sparse

from .errors import (
    DegenerateTriangle,
    IndexOutOfRange,
    InconsistentOrientation,
    NonManifoldEdge,
)

# relative to the squared longest edge of the face
_DEGENERATE_AREA = 1e-14


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Triangulated surface with derived adjacency and metric data.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
        Vertex positions.
    triangles : array_like of int, shape (T, 3)
        Counterclockwise vertex-index triples.

    Attributes
    ----------
    vertices, triangles : ndarray
        Input arrays (read-only copies).
    edges : ndarray, shape (E, 2)
        Edge endpoints, smaller index first, sorted lexicographically.
    edge_faces : ndarray, shape (E, 2)
        Incident faces; the second entry is -1 on boundary edges.
    edge_face_signs : ndarray, shape (E, 2)
        ``sgn(e, t)`` for the faces in ``edge_faces`` (0 where absent).
    face_edges, face_edge_signs : ndarray, shape (T, 3)
        Edge index and relative orientation of each face edge slot.
    face_neighbors : ndarray, shape (T, 3)
        Face across each face edge slot, -1 across the boundary.
    face_area, edge_length : ndarray
    face_normals, barycenters : ndarray, shape (T, 3)
    b1_lengths : ndarray, shape (T, 3)
        Barycenter-to-vertex line lengths.
    line_plus, line_minus : ndarray, shape (T, 3)
        Faces across the two edges flanking each line (-1 across the boundary).
    line_active : ndarray of bool, shape (T, 3)
        False for lines flanked by at least one boundary edge.
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=float)
        f = np.array(triangles)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (V, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"triangles must have shape (T, 3), got {f.shape}")
        if f.size and not np.issubdtype(f.dtype, np.integer):
            if not np.all(np.mod(f, 1) == 0):
                raise ValueError("triangle indices must be integers")
        f = f.astype(np.int64)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        nv = len(v)
        if f.size and (f.min() < 0 or f.max() >= nv):
            bad = int(np.flatnonzero((f < 0).any(1) | (f >= nv).any(1))[0])
            raise IndexOutOfRange(f"triangle {bad} references a vertex outside [0, {nv})")
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if repeated.any():
            raise DegenerateTriangle(
                f"triangle {int(np.flatnonzero(repeated)[0])} repeats a vertex"
            )

        self.vertices = _readonly(v)
        self.triangles = _readonly(f)
        self._build_topology()
        self._build_geometry()
        self._cache = {}

    # construction ---------------------------------------------------------

    def _build_topology(self):
        f = self.triangles
        nt, nv = len(f), len(self.vertices)
        start = f.ravel()
        end = np.roll(f, -1, axis=1).ravel()
        lo, hi = np.minimum(start, end), np.maximum(start, end)
        keys = lo * nv + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            a, b = divmod(int(uniq[np.argmax(counts > 2)]), nv)
            raise NonManifoldEdge(f"edge ({a}, {b}) has more than two incident triangles")
        ne = len(uniq)
        edges = np.stack([uniq // nv, uniq % nv], axis=1) if ne else np.zeros((0, 2), int)
        signs = np.where(start < end, 1, -1)
        face_of_half = np.repeat(np.arange(nt), 3)

        order = np.argsort(inverse, kind="stable")
        first = np.searchsorted(inverse[order], np.arange(ne))
        edge_faces = np.full((ne, 2), -1, dtype=np.int64)
        edge_signs = np.zeros((ne, 2), dtype=np.int64)
        edge_faces[:, 0] = face_of_half[order[first]]
        edge_signs[:, 0] = signs[order[first]]
        two = counts == 2
        second = order[first[two] + 1]
        edge_faces[two, 1] = face_of_half[second]
        edge_signs[two, 1] = signs[second]

        bad = two & (edge_signs[:, 0] * edge_signs[:, 1] != -1)
        if bad.any():
            a, b = edges[np.argmax(bad)]
            raise InconsistentOrientation(
                f"edge ({a}, {b}) is traversed in the same direction by both faces"
            )

        face_edges = inverse.reshape(nt, 3)
        # the other face across each face edge slot
        ef = edge_faces[face_edges]
        own = np.arange(nt)[:, None]
        neighbors = np.where(ef[..., 0] == own, ef[..., 1], ef[..., 0])

        self.edges = _readonly(edges)
        self.edge_faces = _readonly(edge_faces)
        self.edge_face_signs = _readonly(edge_signs)
        self.face_edges = _readonly(face_edges)
        self.face_edge_signs = _readonly(signs.reshape(nt, 3))
        self.face_neighbors = _readonly(neighbors)
        self.boundary_edges = _readonly(edge_faces[:, 1] < 0)
        self.line_plus = _readonly(neighbors)
        self.line_minus = _readonly(np.roll(neighbors, 1, axis=1))
        self.line_active = _readonly((self.line_plus >= 0) & (self.line_minus >= 0))

    def _build_geometry(self):
        v, f = self.vertices, self.triangles
        p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        cross = np.cross(p1 - p0, p2 - p0)
        twice_area = np.linalg.norm(cross, axis=1)
        longest = np.max(
            [np.sum((p1 - p0) ** 2, 1), np.sum((p2 - p1) ** 2, 1), np.sum((p0 - p2) ** 2, 1)],
            axis=0,
        )
        degenerate = twice_area <= _DEGENERATE_AREA * longest
        if degenerate.any():
            raise DegenerateTriangle(f"triangle {int(np.flatnonzero(degenerate)[0])} has zero area")
        bary = (p0 + p1 + p2) / 3.0
        self.face_area = _readonly(0.5 * twice_area)
        self.face_normals = _readonly(cross / twice_area[:, None])
        self.barycenters = _readonly(bary)
        self.edge_length = _readonly(
            np.linalg.norm(v[self.edges[:, 0]] - v[self.edges[:, 1]], axis=1)
        )
        self.b1_lengths = _readonly(np.linalg.norm(v[f] - bary[:, None, :], axis=2))

    # sizes ----------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.triangles)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def __repr__(self):
        return f"Mesh(V={self.n_vertices}, E={self.n_edges}, T={self.n_faces})"

    # adjacency queries ----------------------------------------------------

    def sgn(self, e, t):
        """Relative orientation of edge ``e`` to triangle ``t``."""
        slots = np.flatnonzero(self.face_edges[t] == e)
        if len(slots) == 0:
            raise IndexError(f"edge {e} is not an edge of triangle {t}")
        return int(self.face_edge_signs[t, slots[0]])

    def ring(self, t):
        """1-ring ``D1(t)``: triangles sharing an edge with ``t``."""
        nb = self.face_neighbors[t]
        return [int(x) for x in nb if x >= 0]

    def b1_lines(self, t):
        """Lines ``B1(t)`` as ``(t, slot)`` pairs."""
        self.triangles[t]  # index check
        return [(int(t), j) for j in range(3)]

    def b2_lines(self, t):
        """Lines ``B2(t)`` as ``(neighbor, slot)`` references into neighbors' ``B1``.

        These are the lines of neighboring triangles that end at a vertex of ``t``,
        i.e. exactly the lines whose second difference involves the value on ``t``.
        """
        own = set(self.triangles[t].tolist())
        out = []
        for nb in self.ring(t):
            for j, vert in enumerate(self.triangles[nb]):
                if int(vert) in own:
                    out.append((nb, j))
        return out

    @property
    def vertex_face_incidence(self):
        """Sparse (V, T) 0/1 incidence matrix."""
        m = self._cache.get("vf")
        if m is None:
            nt = self.n_faces
            m = sparse.csr_matrix(
                (np.ones(3 * nt), (self.triangles.ravel(), np.repeat(np.arange(nt), 3))),
                shape=(self.n_vertices, nt),
            )
            self._cache["vf"] = m
        return m

    def vertex_faces(self, v):
        """1-disk ``M1(v)``: triangles containing vertex ``v``."""
        m = self.vertex_face_incidence
        return m.indices[m.indptr[v] : m.indptr[v + 1]].tolist()

    def vertex_neighbors(self, v):
        """1-neighborhood ``N1(v)``: vertices joined to ``v`` by an edge."""
        e = self.edges
        return sorted(set(e[e[:, 0] == v, 1].tolist()) | set(e[e[:, 1] == v, 0].tolist()))

    # derived meshes -------------------------------------------------------

    def with_vertices(self, vertices):
        """New mesh with the same connectivity and moved vertices."""
        return Mesh(vertices, self.triangles)


def build_mesh(vertices, faces):
    """Construct a :class:`Mesh`, validating manifoldness, orientation and areas."""
    return Mesh(vertices, faces)


def face_geometry(mesh, t):
    """Return ``(area, unit_normal, barycenter)`` of triangle ``t``."""
    return float(mesh.face_area[t]), mesh.face_normals[t].copy(), mesh.barycenters[t].copy()


def triangle_geometry(p0, p1, p2):
    """Area, unit normal and barycenter of a single triangle given by its corners."""
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    cross = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(cross)
    if norm == 0.0:
        raise DegenerateTriangle("triangle has zero area")
    return 0.5 * norm, cross / norm, (p0 + p1 + p2) / 3.0


def compute_face_normals(vertices, triangles):
    """Unit face normals of raw arrays; zero vectors for collapsed faces."""
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(triangles)
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    mag = np.linalg.norm(cross, axis=1, keepdims=True)
    return np.divide(cross, mag, out=np.zeros_like(cross), where=mag > 0)


def mean_edge_length(mesh):
    return float(np.mean(mesh.edge_length))
