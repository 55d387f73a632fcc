"""Initial-curve families and named, reproducible experiment bundles."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .curve import ClosedCurve, DegenerateCurveError, geometry, is_embedded, resample_by_arclength, write_curve_csv
from .diagnostics import CheckReport, KoscBudget
from .flow import FlowConfig, FlowState, Trajectory, evolve
from .periodic import PeriodicField, check_psw

log = logging.getLogger(__name__)

FAMILIES = ("circle", "fourier_circle", "ellipse", "multi_circle")
ORACLE_SAMPLES = 4096
# |k| L beyond this is treated as a cusp at the working resolution
MAX_SCALED_CURVATURE = 1e3
# a coordinate spectrum still above this at the top quarter is under-resolved
RESOLUTION_TOL = 1e-10


# --------------------------------------------------------------------------
# curve families

def _radial_points(theta: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.column_stack((rho * np.cos(theta), rho * np.sin(theta)))


def _fourier_rho(theta, r, modes):
    rho = np.ones_like(theta)
    for m, amplitude, phase in modes:
        rho = rho + amplitude * np.cos(m * theta + phase)
    return r * rho


def make_curve(family: str, params: dict, n: int = 256) -> ClosedCurve:
    """Counterclockwise curve of the given family on ``n`` uniform arc-length nodes.

    ``circle``: ``r``. ``fourier_circle``: ``r`` and ``modes``, a list of
    ``(m, amplitude, phase)`` giving ``rho(theta) = r (1 + sum a cos(m theta + phase))``.
    ``ellipse``: semi-axes ``a``, ``b``. ``multi_circle``: ``r`` traversed
    ``omega`` times.
    """
    params = dict(params)
    if family not in FAMILIES:
        raise ValueError(f"unknown curve family {family!r}; expected one of {FAMILIES}")
    if n < 16 or n % 2:
        raise ValueError(f"n must be even and >= 16, got {n}")
    theta_n = 2 * np.pi * np.arange(n) / n
    if family == "circle":
        r = _positive(params, "r", 1.0)
        return ClosedCurve(_radial_points(theta_n, np.full(n, r)))
    if family == "multi_circle":
        r = _positive(params, "r", 1.0)
        omega = int(params.get("omega", 1))
        if omega < 1:
            raise ValueError(f"omega must be >= 1, got {omega}")
        return ClosedCurve(_radial_points(omega * theta_n, np.full(n, r)))

    theta = 2 * np.pi * np.arange(ORACLE_SAMPLES) / ORACLE_SAMPLES
    if family == "ellipse":
        a, b = _positive(params, "a", 2.0), _positive(params, "b", 1.0)
        dense = np.column_stack((a * np.cos(theta), b * np.sin(theta)))
    else:
        r = _positive(params, "r", 1.0)
        modes = [tuple(m) for m in params.get("modes", [])]
        for mode in modes:
            if len(mode) != 3 or int(mode[0]) != mode[0] or mode[0] < 1:
                raise ValueError(f"fourier mode must be (m >= 1 integer, amplitude, phase), got {mode}")
        rho = _fourier_rho(theta, r, modes)
        if rho.min() <= 0:
            i = int(np.argmin(rho))
            raise DegenerateCurveError(
                f"radial function reaches {rho[i]:.4g} <= 0 at theta={theta[i]:.4f}; the curve passes through the origin")
        dense = _radial_points(theta, rho)
    curve = resample_by_arclength(ClosedCurve(dense), n)
    _check_regular(curve)
    return curve


def _positive(params, key, default):
    value = float(params.get(key, default))
    if not value > 0:
        raise ValueError(f"{key} must be positive, got {value}")
    return value


def _check_regular(curve: ClosedCurve) -> None:
    geom = geometry(curve)
    scaled = np.abs(geom.k) * geom.length
    i = int(np.argmax(scaled))
    if scaled[i] > MAX_SCALED_CURVATURE:
        raise DegenerateCurveError(
            f"curvature extremum k={geom.k[i]:.4g} at node {i} (|k| L = {scaled[i]:.3g}) indicates a cusp")
    coeffs = np.abs(np.fft.rfft(curve.points, axis=0)).max(axis=1)
    top = coeffs[3 * curve.n // 8:].max() / coeffs[1:].max()
    if top > RESOLUTION_TOL:
        raise DegenerateCurveError(
            f"curve is under-resolved at n={curve.n} (relative spectral tail {top:.2e}); "
            f"curvature extremum k={geom.k[i]:.4g} at node {i}")


@dataclass(frozen=True)
class HypothesisStatus:
    K_osc: float
    I: float
    K_star: float
    omega: int
    holds: bool

    def to_dict(self) -> dict:
        return {"K_osc0": self.K_osc, "I0": self.I, "K_star": self.K_star,
                "two_K_star": 2 * self.K_star, "omega": self.omega, "holds": self.holds}


def hypothesis_status(curve: ClosedCurve) -> HypothesisStatus:
    """Smallness hypotheses for global existence and convergence, at ``curve``."""
    geom = geometry(curve)
    omega = curve.winding
    budget = KoscBudget.from_values(geom.length, geom.area, omega)
    I = geom.length**2 / (4 * math.pi * geom.area)
    return HypothesisStatus(geom.k_osc, I, budget.K_star, omega, budget.hypotheses_hold(geom.k_osc, I))


# --------------------------------------------------------------------------
# scenario registry

@dataclass(frozen=True)
class Scenario:
    name: str
    family: str
    params: dict
    config: FlowConfig
    checks: tuple
    description: str = ""
    hypotheses: bool | None = None
    # mode whose linearised rate the decay check compares against
    decay_mode: int | None = None
    expect_nonconvex: bool = False
    # explicit initial data (ad-hoc runs from a CSV file)
    curve: ClosedCurve | None = None

    def initial_curve(self) -> ClosedCurve:
        if self.curve is not None:
            return self.curve
        return make_curve(self.family, self.params, self.config.n)

    def with_overrides(self, overrides: dict | None) -> "Scenario":
        if not overrides:
            return self
        merged = {**self.config.to_dict(), **overrides}
        return replace(self, config=FlowConfig.from_dict(merged))


STATIC_CHECKS = ("conservation", "identities_vanish", "static_motion", "inequalities", "solitons",
                 "hypotheses", "kosc_budget", "nonconvex")
CONVERGING_CHECKS = ("converged", "conservation", "circle_limit", "identities", "inequalities",
                     "kosc_budget", "nonconvex", "embedded", "displacement", "solitons", "hypotheses")

SCENARIOS: dict[str, Scenario] = {s.name: s for s in (
    Scenario("circle_static", "circle", {"r": 1.0},
             FlowConfig(t_end=0.05, kosc_stop=0.0), STATIC_CHECKS + ("embedded",),
             "unit circle; every velocity term vanishes", hypotheses=True),
    Scenario("circle_static_w2", "multi_circle", {"r": 1.0, "omega": 2},
             FlowConfig(t_end=0.05, kosc_stop=0.0), STATIC_CHECKS,
             "doubly covered unit circle", hypotheses=False),
    Scenario("thm1_mode2", "fourier_circle", {"r": 1.0, "modes": [(2, 0.05, 0.0)]},
             FlowConfig(t_end=2.0), CONVERGING_CHECKS + ("decay",),
             "rho = 1 + 0.05 cos 2theta; converges to the circle of radius L0/2pi",
             hypotheses=False, decay_mode=2),
    Scenario("thm1_small", "fourier_circle", {"r": 1.0, "modes": [(2, 0.01, 0.0)]},
             FlowConfig(t_end=2.0), CONVERGING_CHECKS + ("decay",),
             "rho = 1 + 0.01 cos 2theta; inside the smallness hypotheses",
             hypotheses=True, decay_mode=2),
    Scenario("nonconvex_m3", "fourier_circle", {"r": 1.0, "modes": [(3, 0.18, 0.0)]},
             FlowConfig(t_end=2.0), CONVERGING_CHECKS + ("decay",),
             "rho = 1 + 0.18 cos 3theta; starts non-convex", hypotheses=False,
             decay_mode=3, expect_nonconvex=True),
    Scenario("mixed_modes", "fourier_circle", {"r": 1.0, "modes": [(2, 0.03, 0.0), (3, 0.02, 0.7), (5, 0.004, 1.3)]},
             FlowConfig(t_end=2.0), CONVERGING_CHECKS + ("decay",),
             "three modes with unrelated phases; the slowest (m=2) sets the late rate",
             hypotheses=False, decay_mode=2),
)}


ADHOC_CHECKS = ("conservation", "inequalities", "kosc_budget", "nonconvex")


def adhoc_scenario(name: str, curve: ClosedCurve, config: FlowConfig) -> Scenario:
    """Scenario wrapping user-supplied initial data; the node count comes from the curve."""
    if config.n != curve.n:
        config = replace(config, n=curve.n)
    checks = ADHOC_CHECKS + (("embedded",) if is_embedded(curve) else ())
    return Scenario(name, "csv", {}, config, checks, "user-supplied curve", curve=curve)


def get_scenario(name: str, overrides: dict | None = None) -> Scenario:
    try:
        scenario = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None
    return scenario.with_overrides(overrides)


# --------------------------------------------------------------------------
# checks

IDENTITY_TOL = 1e-4
VANISH_TOL = 1e-12
LENGTH_TOL = 1e-6
AREA_STEP_TOL = 1e-10
RADIUS_TOL = 1e-6
DECAY_REL_TOL = 0.05
DECAY_R2 = 0.999
DISPLACEMENT_R2 = 0.99
SOLITON_CIRCLE_TOL = 1e-8
SOLITON_NONCIRCLE_MIN = 1e-2
STATIC_DISP_TOL = 1e-12


@dataclass
class RunContext:
    scenario: Scenario
    initial: ClosedCurve
    budget: KoscBudget
    hypotheses: HypothesisStatus
    trajectory: Trajectory | None = None
    inequality_failures: list = field(default_factory=list)
    inequality_count: int = 0


def _max(values) -> float:
    arr = np.array(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.max()) if arr.size else 0.0


def _check_converged(ctx):
    t = ctx.trajectory
    K = t.records[-1].K_osc
    return [CheckReport("converged", ctx.scenario.config.kosc_stop, K, t.converged,
                        detail=f"stop_reason={t.stop_reason}, t={t.final_state.t:.6g}")]


def _check_conservation(ctx):
    recs = ctx.trajectory.records
    L0 = ctx.trajectory.final_state.L0
    drift = _max([abs(r.L - L0) / L0 for r in recs])
    A = np.array([r.A for r in recs])
    dA = np.diff(A)
    tol = AREA_STEP_TOL * np.abs(A[1:])
    worst = float((dA / np.abs(A[1:])).min()) if dA.size else 0.0
    out = [CheckReport("length_drift", LENGTH_TOL, drift, drift <= LENGTH_TOL),
           CheckReport("area_nondecreasing", -AREA_STEP_TOL, worst, bool(np.all(dA >= -tol)))]
    total = [abs(r.kbar * r.L - 2 * math.pi * r.omega) / (2 * math.pi * abs(r.omega)) for r in recs if r.omega]
    out.append(CheckReport("total_curvature", 1e-8, _max(total), _max(total) <= 1e-8))
    return out


def _check_circle_limit(ctx):
    state = ctx.trajectory.final_state
    pts = state.curve.points
    radius = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    dev = float(np.abs(radius - state.L0 / (2 * math.pi)).max())
    return [CheckReport("circle_limit", RADIUS_TOL * state.L0, dev, dev <= RADIUS_TOL * state.L0)]


def _check_identities(ctx):
    out = []
    recs = ctx.trajectory.records[1:]
    for name in ("r_iii", "r_iv", "r_v", "r_vi"):
        worst = _max([getattr(r, name) for r in recs])
        out.append(CheckReport(f"identity_{name[2:]}", IDENTITY_TOL, worst, worst <= IDENTITY_TOL))
    return out


def _check_identities_vanish(ctx):
    out = []
    recs = ctx.trajectory.records[1:]
    for name in ("r_iii", "r_iv", "r_v", "r_vi"):
        worst = _max([getattr(r, name) for r in recs])
        out.append(CheckReport(f"identity_{name[2:]}_vanishes", VANISH_TOL, worst, worst <= VANISH_TOL))
    return out


def _check_static_motion(ctx):
    disp = _max([r.max_disp for r in ctx.trajectory.records])
    return [CheckReport("static_motion", STATIC_DISP_TOL, disp, disp <= STATIC_DISP_TOL)]


def _check_inequalities(ctx):
    failures = ctx.inequality_failures
    detail = f"{ctx.inequality_count} evaluations"
    if failures:
        detail += "; first failure " + failures[0]
    return [CheckReport("inequality_suite", 0, len(failures), not failures, detail=detail)]


def _check_kosc_budget(ctx):
    return diag.check_kosc_budget(ctx.trajectory.records, ctx.budget)


def _check_nonconvex(ctx):
    state = ctx.trajectory.final_state
    out = diag.check_nonconvex_bound(ctx.trajectory.records, ctx.budget, state.nonconvex_time)
    if ctx.scenario.expect_nonconvex:
        out.append(CheckReport("nonconvex_time_positive", 0.0, state.nonconvex_time, state.nonconvex_time > 0))
    return out


def _check_embedded(ctx):
    flags = [bool(r.embedded) for r in ctx.trajectory.records]
    return [CheckReport("embedded", len(flags), sum(flags), all(flags))]


def _late(records):
    return [r for r in records if r.K_osc <= 1e-4]


def _check_decay(ctx):
    m = ctx.scenario.decay_mode
    recs = ctx.trajectory.records
    rho = ctx.trajectory.final_state.L0 / (2 * math.pi)
    predicted = diag.linearized_rate(m, rho)
    out = []
    for label, fieldname in (("decay_kosc", "K_osc"), ("decay_kss", "nkss2")):
        try:
            fit = diag.fit_decay(recs, fieldname)
        except ValueError as exc:
            out.append(CheckReport(label, predicted, float("nan"), False, detail=str(exc)))
            continue
        rel = abs(fit.rate - predicted) / predicted
        out.append(CheckReport(label, predicted, fit.rate, rel <= DECAY_REL_TOL and fit.r_squared > DECAY_R2,
                               detail=f"r2={fit.r_squared:.6f}, window=[{fit.t_start:.4g}, {fit.t_end:.4g}]"))
    return out


def displacement_fit(records):
    """Log-linear fit of per-unit-time displacement increments in the late regime."""
    late = _late(records)
    if len(late) < 11:
        raise ValueError("too few late-time records for a displacement fit")
    t = np.array([r.t for r in late])
    d = np.array([r.max_disp for r in late])
    rate = np.abs(np.diff(d)) / np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    keep = rate > 0
    return diag.fit_log_linear(mid[keep], rate[keep])


def _check_displacement(ctx):
    recs = ctx.trajectory.records
    disp = np.array([r.max_disp for r in recs])
    L0 = ctx.trajectory.final_state.L0
    out = [CheckReport("displacement_bounded", L0, float(disp.max()),
                       bool(np.all(np.isfinite(disp)) and disp.max() < L0))]
    try:
        fit = displacement_fit(recs)
        out.append(CheckReport("displacement_increments_decay", DISPLACEMENT_R2, fit.r_squared,
                               fit.r_squared > DISPLACEMENT_R2 and fit.rate > 0,
                               detail=f"rate={fit.rate:.6g}"))
    except ValueError as exc:
        out.append(CheckReport("displacement_increments_decay", DISPLACEMENT_R2, float("nan"), False, detail=str(exc)))
    return out


def _check_solitons(ctx):
    curve = ctx.initial
    out = []
    circle = ctx.hypotheses.K_osc <= 1e-20
    for kind in diag.SOLITON_KINDS:
        fit = diag.soliton_fit(curve, kind)
        if circle:
            ok = fit.residual <= SOLITON_CIRCLE_TOL
            if kind == "translator":
                ok = ok and math.hypot(*fit.parameters) <= SOLITON_CIRCLE_TOL
            out.append(CheckReport(f"soliton_{kind}", SOLITON_CIRCLE_TOL, fit.residual, ok))
        else:
            out.append(CheckReport(f"soliton_{kind}", SOLITON_NONCIRCLE_MIN, fit.residual,
                                   fit.residual > SOLITON_NONCIRCLE_MIN))
    return out


def _check_hypotheses(ctx):
    declared = ctx.scenario.hypotheses
    actual = ctx.hypotheses.holds
    ok = declared is None or declared == actual
    return [CheckReport("hypotheses_declared", float(bool(declared)), float(actual), ok,
                        detail=f"K_osc0={ctx.hypotheses.K_osc:.6g}, I0={ctx.hypotheses.I:.10g}, "
                               f"K*={ctx.hypotheses.K_star:.6g}")]


CHECKS = {
    "converged": _check_converged,
    "conservation": _check_conservation,
    "circle_limit": _check_circle_limit,
    "identities": _check_identities,
    "identities_vanish": _check_identities_vanish,
    "static_motion": _check_static_motion,
    "inequalities": _check_inequalities,
    "kosc_budget": _check_kosc_budget,
    "nonconvex": _check_nonconvex,
    "embedded": _check_embedded,
    "decay": _check_decay,
    "displacement": _check_displacement,
    "solitons": _check_solitons,
    "hypotheses": _check_hypotheses,
}


# --------------------------------------------------------------------------
# running

def inequality_observer(ctx: RunContext):
    """Evaluate the static inequality suite at every recorded state."""

    def observe(state: FlowState, rec) -> None:
        geom = geometry(state.curve, denoise=True)
        outcomes = [(r.name, r.holds) for r in check_psw(PeriodicField(geom.k, geom.length / geom.n)).reports]
        outcomes += [(r.check, r.holds) for r in diag.static_inequality_reports([rec])]
        ctx.inequality_count += len(outcomes)
        ctx.inequality_failures.extend(f"{name} at t={state.t:.6g}" for name, holds in outcomes if not holds)

    return observe


def snapshot_observer(out_dir: Path, every: int, svg: bool):
    def observe(state: FlowState, rec) -> None:
        if every and state.step % every == 0:
            write_curve_csv(state.curve, out_dir / f"curve_{state.step}.csv")
            if svg:
                write_svg(state.curve, out_dir / f"snapshot_{state.step}.svg")

    return observe


def write_svg(curve: ClosedCurve, path, viewport: float = 2.5, size: int = 400) -> None:
    """Closed path on a fixed viewport ``[-viewport, viewport]^2``, stroke only."""
    scale = size / (2 * viewport)
    pts = (curve.points * [1, -1] + viewport) * scale
    d = "M " + " L ".join(f"{x:.4f} {y:.4f}" for x, y in pts) + " Z"
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<path d="{d}" fill="none" stroke="black" stroke-width="1"/>\n</svg>\n')


@dataclass
class ScenarioResult:
    scenario: Scenario
    trajectory: Trajectory
    checks: list
    hypotheses: HypothesisStatus
    budget: KoscBudget

    @property
    def passed(self) -> bool:
        return all(c.holds for c in self.checks) and not self.trajectory.aborted

    def summary(self) -> dict:
        t = self.trajectory
        fs = t.final_state
        return {
            "scenario": self.scenario.name,
            "description": self.scenario.description,
            "family": self.scenario.family,
            "params": self.scenario.params,
            "config": self.scenario.config.to_dict(),
            "hypotheses": self.hypotheses.to_dict(),
            "budget": {"two_K_star": self.budget.K_star_2, "l1_bound": self.budget.l1_bound,
                       "nonconvex_bound": self.budget.nonconvex_bound},
            "final": {"t": fs.t, "steps": fs.step, "K_osc": t.records[-1].K_osc,
                      "nonconvex_time": fs.nonconvex_time, "converged": t.converged,
                      "stop_reason": t.stop_reason, "error": t.error, "wall_time": t.wall_time},
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }


def run_scenario(scenario: Scenario | str, out_dir=None, svg: bool = False) -> ScenarioResult:
    """Run a scenario, evaluate its checks and optionally write the output bundle.

    Files under ``out_dir/<name>/``: ``diagnostics.csv``, ``curve_<step>.csv``
    (initial, final and every ``config.snapshot_every`` steps),
    ``summary.json`` and, with ``svg``, ``snapshot_<step>.svg``.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    unknown = set(scenario.checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"scenario {scenario.name} references unknown checks {sorted(unknown)}")
    curve = scenario.initial_curve()
    status = hypothesis_status(curve)
    geom = geometry(curve)
    budget = KoscBudget.from_values(geom.length, geom.area, curve.winding)
    state = FlowState.start(curve)

    target = None
    if out_dir is not None:
        target = Path(out_dir) / scenario.name
        target.mkdir(parents=True, exist_ok=True)

    ctx = RunContext(scenario, curve, budget, status)
    observers = [inequality_observer(ctx)]
    if target is not None:
        observers.append(snapshot_observer(target, scenario.config.snapshot_every, svg))
    traj = evolve(state, scenario.config, observers)
    ctx.trajectory = traj

    checks = []
    for name in scenario.checks:
        checks.extend(CHECKS[name](ctx))
    result = ScenarioResult(scenario, traj, checks, status, budget)

    if target is not None:
        diag.write_diagnostics_csv(traj.records, target / "diagnostics.csv")
        for s in (state, traj.final_state):
            write_curve_csv(s.curve, target / f"curve_{s.step}.csv")
            if svg:
                write_svg(s.curve, target / f"snapshot_{s.step}.svg")
        (target / "summary.json").write_text(json.dumps(to_jsonable(result.summary()), indent=2) + "\n")
    for c in checks:
        if not c.holds:
            log.warning("%s: check %s failed (bound %s, observed %s)", scenario.name, c.check, c.bound, c.observed)
    return result


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else str(obj)
    return obj
