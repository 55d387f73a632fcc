"""Length-preserving curve diffusion of closed plane curves, with diagnostics.

Modules: :mod:`periodic` (periodic calculus and inequalities),
:mod:`curve` (closed curves and their geometry), :mod:`flow` (time
stepping), :mod:`diagnostics` (monitored quantities and checks),
:mod:`scenarios` (initial data and experiment bundles) and :mod:`cli`.
"""

from .curve import ClosedCurve, DegenerateCurveError, GeometryCache, geometry, is_embedded, read_curve_csv, \
    resample_by_arclength, write_curve_csv
from .diagnostics import DiagnosticsRecord, KoscBudget, fit_decay, record, solve_k_star, soliton_residual
from .flow import FlowAborted, FlowConfig, FlowState, Trajectory, compute_h, evolve, step, velocity
from .periodic import PeriodicField, check_h_bound, check_iterated_interpolation, check_psw, derivative, integral
from .scenarios import SCENARIOS, Scenario, get_scenario, make_curve, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ClosedCurve", "DegenerateCurveError", "GeometryCache", "geometry", "is_embedded", "read_curve_csv",
    "resample_by_arclength", "write_curve_csv",
    "DiagnosticsRecord", "KoscBudget", "fit_decay", "record", "solve_k_star", "soliton_residual",
    "FlowAborted", "FlowConfig", "FlowState", "Trajectory", "compute_h", "evolve", "step", "velocity",
    "PeriodicField", "check_h_bound", "check_iterated_interpolation", "check_psw", "derivative", "integral",
    "SCENARIOS", "Scenario", "get_scenario", "make_curve", "run_scenario",
]
