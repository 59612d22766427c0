"""Fast kernel summation on the sphere.

Treecode (CSTC) and dual-traversal fast multipole (CSFMM) summation over a
cubed-sphere quadtree with barycentric Chebyshev interpolation, plus the
Poisson, biharmonic, vortex-method and self-attraction/loading drivers
built on top.
"""

__version__ = "0.1.0"

from .errors import (
    CSFMMError,
    ConfigurationError,
    DegenerateReferenceError,
    DimensionMismatchError,
    DomainError,
    EmptyTreeError,
    InputFormatError,
    InvalidFaceError,
    OutOfCellError,
    SingularityError,
    UnknownKernelError,
    UnknownMethodError,
)
from .geometry import GridKind, SphericalGrid, build_grid, face_project, face_unproject, lonlat_to_xyz, xyz_to_lonlat
from .interpolation import CellInterpolant, bary_basis_1d, bary_weights, chebyshev_nodes
from .kernels import Kernel, SalParams, dilog, get_kernel, sal_closed_form
from .tree import ClusterTree, ParticleSet, build_tree, downward_pass, upward_pass
from .summation import SumResult, TraversalConfig, cstc_sum, csfmm_sum, direct_sum, fast_sum, set_threads
from .applications import (
    BveConfig,
    BveState,
    ScalarField,
    bve_initial,
    bve_run,
    bve_step,
    relative_l2_error,
    sal_potential,
    solve_greens,
)

__all__ = [name for name in dir() if not name.startswith("_")]
