"""Feature-preserving triangle mesh denoising.

Stage one filters face normals with a weighted second-order regularizer
(:func:`filter_normals`); stage two moves vertices to match them without
flipping faces (:func:`update_vertices`).
"""

from .errors import (
    ChannelMismatch,
    CountMismatch,
    DegenerateFace,
    DegenerateTriangle,
    FieldError,
    HomdError,
    InconsistentOrientation,
    IndexOutOfRange,
    MeshError,
    MeshMismatch,
    NonFinite,
    NonManifoldEdge,
    ParseError,
    SolverError,
    WeightShapeMismatch,
    ZeroNormal,
)
from .filtering import FilterConfig, FilterState, filter_normals, filter_normals_laplacian
from .mesh import Mesh, build_mesh, mean_edge_length
from .meshio import load_mesh, read_obj, read_off, save_mesh, write_obj, write_off
from .metrics import add_gaussian_noise, e_v2, msae, quality_metrics
from .vertex import UpdateConfig, UpdateResult, sun_update, update_vertices

__version__ = "0.1.0"
