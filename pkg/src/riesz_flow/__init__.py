"""riesz-flow: numerical laboratory for Riesz-potential integral flows.

Discretizes singular integral operators of Riesz type on spheres (and
user-supplied geometries), solves the associated extremal and steady
problems, time-integrates the growth/blow-up and normalized critical flows
with full diagnostics, and provides the sphere conformal toolbox (bubbles,
Kelvin transforms, spectra of the linearized operator).
"""

from .errors import ConfigError, NumericalError, RieszFlowError, ValidationError
from .manifold import (Geometry, build_sphere, load_geometry, save_geometry,
                       sphere_volume, validate_geometry)
from .kernel import (KernelOperator, KernelReport, QCurvatureField, apply,
                     build_intertwining_kernel, build_power_kernel,
                     critical_exponent, dual_Q, lattice_constant, load_kernel,
                     pole_constant, save_kernel, total_Q_functional,
                     validate_kernel)
from .steady import (AubinReport, SteadySolution, J_m, aubin_check,
                     hls_constant, rescaled_steady, solve_extremal,
                     steady_from_extremal)
from .flow import (BlowupReport, ComparisonReport, DiagnosticsRecord,
                   FlowState, GrowthReport, LimitIdentityReport, Trajectory,
                   beta_coefficient, comparison_run, detect_blowup,
                   diagnostics, evolve, growth_check, limit_identity_check,
                   make_state, rescale_to_tau, rescaled_companion, rhs,
                   separable_solution)
from .sphere import (BubbleFit, BubbleParams, KelvinCheckReport, bubble,
                     check_kelvin_identities, conformal_invariance_check,
                     fit_bubble, kelvin, stereographic_inverse,
                     stereographic_jacobian, stereographic_project)
from .spectral import SpectrumResult, linearized_spectrum, predict_linear_growth
from ._accel import backend, worker_count

__version__ = "0.1.0"

__all__ = [
    "RieszFlowError", "ConfigError", "ValidationError", "NumericalError",
    "Geometry", "build_sphere", "load_geometry", "save_geometry",
    "sphere_volume", "validate_geometry",
    "KernelOperator", "KernelReport", "QCurvatureField", "apply",
    "build_intertwining_kernel", "build_power_kernel", "critical_exponent",
    "dual_Q", "lattice_constant", "load_kernel", "pole_constant",
    "save_kernel", "total_Q_functional", "validate_kernel",
    "SteadySolution", "AubinReport", "J_m", "aubin_check", "hls_constant",
    "rescaled_steady", "solve_extremal", "steady_from_extremal",
    "FlowState", "DiagnosticsRecord", "Trajectory", "BlowupReport",
    "ComparisonReport", "GrowthReport", "LimitIdentityReport",
    "beta_coefficient", "comparison_run", "detect_blowup", "diagnostics",
    "evolve", "growth_check", "limit_identity_check", "make_state",
    "rescale_to_tau", "rescaled_companion", "rhs", "separable_solution",
    "BubbleParams", "BubbleFit", "KelvinCheckReport", "bubble",
    "check_kelvin_identities", "conformal_invariance_check", "fit_bubble",
    "kelvin", "stereographic_inverse", "stereographic_jacobian",
    "stereographic_project",
    "SpectrumResult", "linearized_spectrum", "predict_linear_growth",
    "backend", "worker_count",
    "__version__",
]
