"""Synthetic noise and error/quality measures for denoised meshes."""

import numpy as np
from scipy.spatial import cKDTree

from .errors import CountMismatch
from .mesh import Mesh, mean_edge_length


def add_gaussian_noise(mesh, level, seed=None):
    """Displace every vertex by ``g * d`` with ``g ~ N(0, (level * mean_edge)^2)``.

    ``d`` is uniform on the unit sphere (normalized 3D Gaussian). Draws come from
    numpy's PCG64 generator seeded with ``seed``, so output is reproducible.
    Returns a new :class:`Mesh` with identical connectivity.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return Mesh(mesh.vertices, mesh.triangles)
    rng = np.random.Generator(np.random.PCG64(seed))
    sigma = level * mean_edge_length(mesh)
    d = rng.standard_normal((mesh.n_vertices, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    g = rng.normal(0.0, sigma, size=mesh.n_vertices)
    return mesh.with_vertices(mesh.vertices + g[:, None] * d)


def msae(N_result, N_clean):
    """Mean over faces of the squared angle (radians^2) between two unit normal fields."""
    a = np.asarray(N_result, dtype=float)
    b = np.asarray(N_clean, dtype=float)
    if a.shape != b.shape:
        raise CountMismatch(f"normal fields differ in shape: {a.shape} vs {b.shape}")
    cos = np.clip(np.sum(a * b, axis=1), -1.0, 1.0)
    return float(np.mean(np.arccos(cos) ** 2))


def quality_metrics(mesh):
    """``(d_global, d_local)``: min/max face area ratio and worst shortest/longest edge ratio."""
    area = mesh.face_area
    lengths = mesh.edge_length[mesh.face_edges]
    d_global = float(area.min() / area.max())
    d_local = float(np.min(lengths.min(axis=1) / lengths.max(axis=1)))
    return d_global, d_local


# point-to-triangle distance ---------------------------------------------------

def closest_points_on_triangles(p, a, b, c):
    """Closest point of each triangle ``(a, b, c)`` to the matching point ``p``.

    All inputs are ``(n, 3)``; the Voronoi-region case analysis covers the
    interior, the three edges and the three corners.
    """
    p, a, b, c = (np.asarray(x, dtype=float) for x in (p, a, b, c))
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]

        # edges
        bc_w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(on_bc[:, None], b + (c - b) * bc_w[:, None], out)
        ac_w = d2 / (d2 - d6)
        on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(on_ac[:, None], a + ac * ac_w[:, None], out)
        ab_v = d1 / (d1 - d3)
        on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(on_ab[:, None], a + ab * ab_v[:, None], out)

    # corners take precedence
    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    return out


def point_triangle_distance(p, a, b, c):
    q = closest_points_on_triangles(p, a, b, c)
    return np.linalg.norm(np.asarray(p, dtype=float) - q, axis=1)


def _distances_brute(points, mesh, chunk=2_000_000):
    tri = mesh.vertices[mesh.triangles]
    nt = len(tri)
    out = np.full(len(points), np.inf)
    per = max(1, chunk // max(nt, 1))
    for s in range(0, len(points), per):
        pts = points[s : s + per]
        p = np.repeat(pts, nt, axis=0)
        t = np.tile(tri, (len(pts), 1, 1))
        d = point_triangle_distance(p, t[:, 0], t[:, 1], t[:, 2])
        out[s : s + per] = d.reshape(len(pts), nt).min(axis=1)
    return out


def _distances_tree(points, mesh, k=8):
    """Exact distances using centroid k-d tree candidate pruning.

    A triangle can only be closer than the best candidate ``U`` if its centroid
    lies within ``U + R`` of the point, ``R`` being the largest centroid-to-corner
    distance on the mesh.
    """
    tri = mesh.vertices[mesh.triangles]
    cent = tri.mean(axis=1)
    radius = float(np.max(np.linalg.norm(tri - cent[:, None], axis=2)))
    tree = cKDTree(cent)
    k = min(k, len(cent))
    _, near = tree.query(points, k=k)
    near = np.asarray(near).reshape(len(points), k)
    pi = np.repeat(np.arange(len(points)), k)
    ti = near.ravel()
    t = tri[ti]
    upper = point_triangle_distance(points[pi], t[:, 0], t[:, 1], t[:, 2]).reshape(-1, k).min(1)
    cand = tree.query_ball_point(points, upper + radius + 1e-12)
    counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(points))
    pi = np.repeat(np.arange(len(points)), counts)
    ti = np.fromiter((j for c in cand for j in c), dtype=np.int64, count=int(counts.sum()))
    t = tri[ti]
    d = point_triangle_distance(points[pi], t[:, 0], t[:, 1], t[:, 2])
    out = upper.copy()
    np.minimum.at(out, pi, d)
    return out


def distances_to_mesh(points, mesh, method="auto"):
    """Distance from each point to the closest triangle of ``mesh``.

    ``method`` is ``"brute"``, ``"tree"`` or ``"auto"`` (brute force for small
    problems); both return identical values up to round-off.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if method == "auto":
        method = "brute" if len(points) * mesh.n_faces <= 2_000_000 else "tree"
    if method == "brute":
        return _distances_brute(points, mesh)
    if method == "tree":
        return _distances_tree(points, mesh)
    raise ValueError(f"unknown method {method!r}")


def e_v2(result, clean_mesh, method="auto"):
    """Area-weighted RMS distance from result vertices to the clean surface.

    Vertex weights are the summed areas of the result's incident faces.
    ``result`` is a :class:`Mesh` or a ``(vertices, triangles)`` pair, so that
    outputs with collapsed faces can still be scored.
    """
    if isinstance(result, Mesh):
        v, f = result.vertices, result.triangles
    else:
        v, f = (np.asarray(a) for a in result)
    v = np.asarray(v, dtype=float)
    area = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
    weights = np.zeros(len(v))
    np.add.at(weights, f.ravel(), np.repeat(area, 3))
    dist = distances_to_mesh(v, clean_mesh, method=method)
    return float(np.sqrt(np.sum(weights * dist**2) / (3.0 * area.sum())))
