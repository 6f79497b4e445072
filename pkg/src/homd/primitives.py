"""Small procedural meshes used for experiments and tests.

Every generator returns ``(vertices, triangles)`` with counterclockwise,
outward-facing triangles; wrap with :func:`homd.mesh.build_mesh` as needed.
"""

import numpy as np


def single_triangle():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return v, np.array([[0, 1, 2]])


def tetrahedron():
    """Regular tetrahedron inscribed in the unit sphere."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return v, f


def octahedron():
    v = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
    )
    f = np.array(
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    )
    return v, f


def icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v, f


def icosphere(level=2):
    """Loop-style midpoint subdivision of the icosahedron projected to the unit sphere."""
    v, f = icosahedron()
    verts = [tuple(p) for p in v]
    for _ in range(level):
        midpoint = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                p = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0
                verts.append(tuple(p / np.linalg.norm(p)))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        faces = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(faces)
    return np.array(verts), f


def uv_sphere(n_lon=32, n_lat=32):
    """Latitude-longitude sphere with pole vertices; ``2 * n_lon * (n_lat - 1)`` faces."""
    theta = np.linspace(0.0, np.pi, n_lat + 1)[1:-1]
    phi = np.linspace(0.0, 2.0 * np.pi, n_lon, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    ring = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
    v = np.vstack([[0.0, 0.0, 1.0], ring.reshape(-1, 3), [0.0, 0.0, -1.0]])
    south = len(v) - 1

    def idx(i, j):
        return 1 + i * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append([0, idx(0, j), idx(0, j + 1)])
    for i in range(n_lat - 2):
        for j in range(n_lon):
            a, b = idx(i, j), idx(i, j + 1)
            c, d = idx(i + 1, j), idx(i + 1, j + 1)
            faces += [[a, c, d], [a, d, b]]
    for j in range(n_lon):
        faces.append([south, idx(n_lat - 2, j + 1), idx(n_lat - 2, j)])
    return v, np.array(faces)


def grid_patch(nx=8, ny=8, size=1.0):
    """Flat bordered square in the z=0 plane, split into ``2 * nx * ny`` triangles."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b, c, d = a + ny + 1, a + 1, a + ny + 2
            faces += [[a, b, d], [a, d, c]]
    return v, np.array(faces)


def subdivided_cube(n=16, size=1.0):
    """Axis-aligned cube centred at the origin; each side is an n-by-n grid of split squares.

    Returns ``12 * n**2`` triangles sharing welded vertices along cube edges.
    """
    lattice = {}
    verts = []

    def vid(p):
        key = tuple(int(x) for x in p)
        if key not in lattice:
            lattice[key] = len(verts)
            verts.append(key)
        return lattice[key]

    # (origin, u axis, v axis) with u x v pointing outward, integer lattice units
    sides = []
    for axis in range(3):
        e = np.eye(3, dtype=int)
        a, b = e[(axis + 1) % 3], e[(axis + 2) % 3]
        normal = e[axis]
        sides.append((normal * n, a, b))          # +axis side
        sides.append((np.zeros(3, int), b, a))    # -axis side
    faces = []
    for origin, u, w in sides:
        for i in range(n):
            for j in range(n):
                p00 = vid(origin + i * u + j * w)
                p10 = vid(origin + (i + 1) * u + j * w)
                p01 = vid(origin + i * u + (j + 1) * w)
                p11 = vid(origin + (i + 1) * u + (j + 1) * w)
                # alternate diagonals to avoid a directional bias
                if (i + j) % 2 == 0:
                    faces += [[p00, p10, p11], [p00, p11, p01]]
                else:
                    faces += [[p00, p10, p01], [p10, p11, p01]]
    v = (np.array(verts, dtype=float) / n - 0.5) * size
    return v, np.array(faces)


def equilateral_strip(n=4):
    """Flat strip of ``2 * n`` equilateral unit triangles."""
    h = np.sqrt(3.0) / 2.0
    bottom = [[i, 0.0, 0.0] for i in range(n + 1)]
    top = [[i + 0.5, h, 0.0] for i in range(n + 1)]
    v = np.array(bottom + top)
    faces = []
    for i in range(n):
        t = n + 1 + i
        faces += [[i, i + 1, t], [i + 1, t + 1, t]]
    return v, np.array(faces)
