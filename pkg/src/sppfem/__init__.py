"""Structure-preserving parametric finite elements for anisotropic surface diffusion of closed curves."""
from .anisotropy import (
    Anisotropy,
    AnisotropyError,
    Custom,
    Isotropic,
    LrNorm,
    MFold,
    RegularizedL1,
    Riemannian,
    Scaled,
    custom_from_expression,
    frank_diagram,
    make_anisotropy,
)
from .diagnostics import ConvergenceTable, convergence_study, iteration_stats, order_fit
from .estimator import CurveEvolver
from .geometry import CurveError, PolygonalCurve, ellipse, manifold_distance, rectangle
from .records import DiagnosticsRecord
from .scheme import CurveState, NewtonError, SchemeConfig, evolve, newton_solve, semi_implicit_step
from .stabilization import CachedK0, k0_explicit, k0_numeric, make_stabilizer

__version__ = "0.1.0"
