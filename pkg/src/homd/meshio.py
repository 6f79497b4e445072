"""Reading and writing triangle meshes as Wavefront OBJ and OFF text.

Readers take ``bytes`` or ``str`` and return ``(vertices, faces)`` arrays;
polygons are fan-triangulated. Any malformed input raises :class:`ParseError`.
Writers emit a canonical form: positional decimals with at most 9 significant
digits, LF line endings and no comments, so write(read(write(m))) is stable.
"""

import logging
import math
import os

import numpy as np

from .errors import ParseError
from .mesh import Mesh

logger = logging.getLogger(__name__)

_INT_LIMIT = 2**53
_SKIPPED_OBJ = {"vn", "vt", "vp", "mtllib", "usemtl", "g", "s", "o", "l", "p", "cstype", "deg"}


def _text(data):
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text ({exc.reason} at byte {exc.start})") from None


def _float(tok, lineno):
    try:
        x = float(tok)
    except ValueError:
        raise ParseError(f"bad number {tok!r}", lineno) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite coordinate {tok!r}", lineno)
    return x


def _int(tok, lineno):
    try:
        x = int(tok)
    except ValueError:
        raise ParseError(f"bad index {tok!r}", lineno) from None
    if abs(x) > _INT_LIMIT:
        raise ParseError(f"integer {tok!r} out of range", lineno)
    return x


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _arrays(verts, faces):
    v = np.array(verts, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return v, f


# OBJ ------------------------------------------------------------------------

def read_obj(data):
    """Parse OBJ ``v`` and ``f`` records (1-based or negative relative indices)."""
    verts, faces, face_lines = [], [], []
    skipped = 0
    for lineno, raw in enumerate(_text(data).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "v":
            if len(tok) < 4:
                raise ParseError("vertex needs three coordinates", lineno)
            # an optional w or vertex color may follow
            verts.append([_float(t, lineno) for t in tok[1:4]])
        elif kind == "f":
            if len(tok) < 4:
                raise ParseError("face needs at least three vertices", lineno)
            poly = []
            for t in tok[1:]:
                idx = _int(t.split("/", 1)[0], lineno)
                if idx < 0:
                    idx = len(verts) + idx
                    if idx < 0:
                        raise ParseError(f"relative index {t!r} out of range", lineno)
                elif idx == 0:
                    raise ParseError("index 0 is invalid in OBJ", lineno)
                else:
                    idx -= 1
                poly.append(idx)
            for tri in _fan(poly):
                faces.append(tri)
                face_lines.append(lineno)
        elif kind in _SKIPPED_OBJ or kind.isalpha():
            skipped += 1
        else:
            raise ParseError(f"unknown record {kind!r}", lineno)
    if skipped:
        logger.warning("skipped %d unsupported OBJ records", skipped)
    v, f = _arrays(verts, faces)
    if f.size:
        bad = np.flatnonzero((f >= len(v)).any(axis=1))
        if len(bad):
            raise ParseError(f"vertex index out of range (have {len(v)} vertices)", face_lines[bad[0]])
    return v, f


def _fmt(x):
    s = np.format_float_positional(float(x), precision=9, unique=False, fractional=False, trim="-")
    return "0" if s == "-0" else s


def _vertex_lines(v):
    return [" ".join(_fmt(c) for c in p) for p in v]


def _unpack(mesh_or_arrays):
    if isinstance(mesh_or_arrays, Mesh):
        v, f = mesh_or_arrays.vertices, mesh_or_arrays.triangles
    else:
        v, f = mesh_or_arrays
    v = np.asarray(v, dtype=float)
    f = np.asarray(f, dtype=np.int64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot write non-finite coordinates")
    return v, f


def write_obj(mesh):
    """Serialize a :class:`Mesh` or ``(vertices, faces)`` pair to OBJ bytes."""
    v, f = _unpack(mesh)
    lines = ["v " + s for s in _vertex_lines(v)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f]
    return ("\n".join(lines) + "\n").encode("ascii")


# OFF ------------------------------------------------------------------------

def read_off(data):
    """Parse an ASCII OFF file (0-based indices, counts in the header)."""
    rows = []
    for lineno, raw in enumerate(_text(data).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows or not rows[0][1][0].upper().endswith("OFF"):
        raise ParseError("missing OFF header", rows[0][0] if rows else None)
    head_line, head = rows[0]
    if head[0] != "OFF":
        raise ParseError(f"unsupported OFF variant {head[0]!r}", head_line)
    pos = 1
    counts = head[1:]
    if not counts:
        if len(rows) < 2:
            raise ParseError("missing vertex/face counts")
        head_line, counts = rows[1]
        pos = 2
    if len(counts) < 2:
        raise ParseError("header needs vertex and face counts", head_line)
    nv, nf = _int(counts[0], head_line), _int(counts[1], head_line)
    if nv < 0 or nf < 0:
        raise ParseError("negative element count", head_line)
    if len(rows) - pos != nv + nf:
        raise ParseError(
            f"header declares {nv} vertices and {nf} faces but file has {len(rows) - pos} records"
        )
    verts = []
    for lineno, tok in rows[pos : pos + nv]:
        if len(tok) < 3:
            raise ParseError("vertex needs three coordinates", lineno)
        verts.append([_float(t, lineno) for t in tok[:3]])
    faces = []
    for lineno, tok in rows[pos + nv :]:
        n = _int(tok[0], lineno)
        if n < 3:
            raise ParseError("face needs at least three vertices", lineno)
        if len(tok) < n + 1:
            raise ParseError(f"face declares {n} vertices but lists {len(tok) - 1}", lineno)
        poly = [_int(t, lineno) for t in tok[1 : n + 1]]
        if min(poly) < 0 or max(poly) >= nv:
            raise ParseError(f"vertex index out of range (have {nv} vertices)", lineno)
        faces.extend(_fan(poly))
    return _arrays(verts, faces)


def write_off(mesh):
    """Serialize a :class:`Mesh` or ``(vertices, faces)`` pair to OFF bytes."""
    v, f = _unpack(mesh)
    if f.size:
        e = np.sort(np.stack([f, np.roll(f, -1, axis=1)], axis=-1).reshape(-1, 2), axis=1)
        ne = len(np.unique(e, axis=0))
    else:
        ne = 0
    lines = ["OFF", f"{len(v)} {len(f)} {ne}"]
    lines += _vertex_lines(v)
    lines += [f"3 {a} {b} {c}" for a, b, c in f]
    return ("\n".join(lines) + "\n").encode("ascii")


# files ------------------------------------------------------------------------

_READERS = {".obj": read_obj, ".off": read_off}
_WRITERS = {".obj": write_obj, ".off": write_off}


def _ext(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _READERS:
        raise ValueError(f"unsupported mesh format {ext!r}; use .obj or .off")
    return ext


def load_mesh(path):
    """Read an ``.obj`` or ``.off`` file into a validated :class:`Mesh`."""
    ext = _ext(path)
    with open(path, "rb") as fh:
        data = fh.read()
    return Mesh(*_READERS[ext](data))


def save_mesh(path, mesh):
    ext = _ext(path)
    with open(path, "wb") as fh:
        fh.write(_WRITERS[ext](mesh))
