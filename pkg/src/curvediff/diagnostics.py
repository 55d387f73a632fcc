"""Monitored scalars, evolution-identity residuals and the checks built on them."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .curve import ClosedCurve, GeometryCache, geometry, is_embedded
from .flow import FlowState, compute_h
from .periodic import REL_SLACK, h_bound, inequality_holds, interpolation_bound

CSV_COLUMNS = ("t", "L", "A", "I", "kbar", "K_osc", "h", "nk2", "nks2", "nkss2", "nks32",
               "min_k", "embedded", "max_disp", "r_iii", "r_v", "r_vi")
IDENTITIES = ("iii", "iv", "v", "vi", "vi_uncorrected")
# below this many ulps of the differenced quantity a time derivative is noise
_FD_NOISE_ULPS = 64
# terms below this fraction of the curve's rate scale are products of rounding errors
VANISH_FLOOR = 1e-20


@dataclass
class DiagnosticsRecord:
    t: float
    step: int
    L: float
    A: float
    I: float
    kbar: float
    K_osc: float
    h: float
    nk2: float
    nks2: float
    nkss2: float
    nks32: float
    min_k: float
    embedded: bool
    max_disp: float
    omega: int
    nonconvex_time: float = 0.0
    r_iii: float = float("nan")
    r_iv: float = float("nan")
    r_v: float = float("nan")
    r_vi: float = float("nan")
    r_vi_uncorrected: float = float("nan")
    # identity name -> (differentiated quantity, right-hand-side terms)
    identity_terms: dict = field(default_factory=dict, repr=False)
    # extra norms used by the static inequality checks
    nks42: float = float("nan")

    def csv_row(self) -> list:
        row = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            row.append(int(value) if isinstance(value, (bool, np.bool_)) else value)
        return row

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in CSV_COLUMNS}
        out.update(step=self.step, omega=self.omega, nonconvex_time=self.nonconvex_time,
                   r_iv=self.r_iv, r_vi_uncorrected=self.r_vi_uncorrected)
        out["embedded"] = bool(out["embedded"])
        return out


def identity_terms(geom: GeometryCache, h: float) -> dict[str, tuple[float, tuple[float, ...], float]]:
    """Left-hand quantities, right-hand terms and rate scales of the curvature evolution identities.

    ``int k^2 ds`` is differentiated through ``int (k - kbar)^2 ds``: the
    difference ``kbar^2 L = (2 pi omega)^2 / L`` is constant while length is.
    The rate scale is the size the time derivative would have for an
    order-one shape perturbation of a curve with mean curvature ``kbar``.
    """
    I = geom.integrate
    k, ks, kss, ks3, ks4 = geom.k, geom.k_s, geom.k_ss, geom.k_s3, geom.k_s4
    L, kbar = geom.length, geom.kbar
    dev = k - kbar
    osc = I(dev**2)
    rate = kbar**4 * L
    return {
        "iii": (osc, (-2 * I(kss**2), 3 * I(k**2 * ks**2), h * I(k**3)), rate * kbar**2),
        "iv": (L * osc, (-2 * L * I(kss**2), 3 * L * I(dev**2 * ks**2), 6 * L * kbar * I(dev * ks**2),
                         2 * kbar**2 * L * I(ks**2), L * h * I(dev**3), 3 * L * h * kbar * I(dev**2)),
               rate * kbar**2 * L),
        "v": (I(ks**2), (-2 * I(ks3**2), 2 * I(k**2 * kss**2), I(ks**4) / 3, 5 * h * I(k * ks**2)),
              rate * kbar**4),
        "vi": (I(kss**2), (-2 * I(ks4**2), 2 * I(k**2 * ks3**2), -3 * I(ks**2 * kss**2),
                           -4 * I(k * kss**3), 7 * h * I(k * kss**2)), rate * kbar**6),
        "vi_uncorrected": (I(kss**2), (-2 * I(ks4**2), 2 * I(k**2 * ks3**2), -I(ks**2 * kss**2),
                                 7 * h * I(k * kss**2)), rate * kbar**6),
    }


def record(state: FlowState, h_mode: str = "discrete_exact") -> DiagnosticsRecord:
    """All monitored scalars from one geometry pass over ``state.curve``."""
    curve = state.curve
    geom = geometry(curve, denoise=True)
    omega = curve.winding
    h = compute_h(geom, h_mode, omega) if omega else float("nan")
    L, A = geom.length, geom.area
    initial = state.initial if state.initial is not None else curve
    if initial.n == curve.n:
        max_disp = float(np.max(np.linalg.norm(curve.points - initial.points, axis=1)))
    else:
        max_disp = float("nan")
    rec = DiagnosticsRecord(
        t=state.t, step=state.step, L=L, A=A,
        I=L**2 / (4 * math.pi * A) if A != 0 else float("inf"),
        kbar=geom.kbar, K_osc=geom.k_osc, h=h,
        nk2=geom.integrate(geom.k**2), nks2=geom.integrate(geom.k_s**2),
        nkss2=geom.integrate(geom.k_ss**2), nks32=geom.integrate(geom.k_s3**2),
        min_k=float(np.min(geom.k)), embedded=is_embedded(curve), max_disp=max_disp,
        omega=omega, nonconvex_time=state.nonconvex_time,
        nks42=geom.integrate(geom.k_s4**2),
    )
    if omega:
        rec.identity_terms = identity_terms(geom, h)
    return rec


def identity_residuals(prev: DiagnosticsRecord, nxt: DiagnosticsRecord) -> dict[str, float]:
    """Relative residuals of the evolution identities over one record interval.

    The time derivative is the difference quotient of the two records; the
    right-hand side is the average of its values at both ends (second order
    in the interval). ``scale`` is the largest term magnitude involved.

    The identity is satisfied trivially, with residual 0, when every term and
    the difference quotient are below round-off resolution: either below
    ``VANISH_FLOOR`` times the rate scale of the curve (a circle, where every
    term is a product of rounding errors) or below the resolution of the
    difference quotient itself.
    """
    dt = nxt.t - prev.t
    out = {}
    for name in IDENTITIES:
        if name not in prev.identity_terms or name not in nxt.identity_terms or dt <= 0:
            out[name] = float("nan")
            continue
        q0, terms0, ref0 = prev.identity_terms[name]
        q1, terms1, ref1 = nxt.identity_terms[name]
        lhs = (q1 - q0) / dt
        rhs = 0.5 * (sum(terms0) + sum(terms1))
        magnitudes = [abs(lhs)] + [abs(x) for x in terms0 + terms1]
        scale = max(max(magnitudes), 1e-30)
        noise = max(_FD_NOISE_ULPS * np.finfo(float).eps * max(abs(q0), abs(q1)) / dt,
                    VANISH_FLOOR * max(abs(ref0), abs(ref1)))
        if max(magnitudes) <= noise:
            out[name] = 0.0
        else:
            out[name] = abs(lhs - rhs) / scale
    return out


def attach_residuals(prev: DiagnosticsRecord, nxt: DiagnosticsRecord) -> None:
    """Store the residuals of the interval ``(prev, nxt)`` on ``nxt``."""
    res = identity_residuals(prev, nxt)
    nxt.r_iii, nxt.r_iv, nxt.r_v = res["iii"], res["iv"], res["v"]
    nxt.r_vi, nxt.r_vi_uncorrected = res["vi"], res["vi_uncorrected"]


def write_diagnostics_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in rec.csv_row()])


def read_diagnostics_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected diagnostics header {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]


# --------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class CheckReport:
    check: str
    bound: float
    observed: float
    holds: bool
    detail: str = ""

    def to_dict(self) -> dict:
        out = {"check": self.check, "bound": _jsonable(self.bound),
               "observed": _jsonable(self.observed), "holds": bool(self.holds)}
        if self.detail:
            out["detail"] = self.detail
        return out


def _jsonable(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


# --------------------------------------------------------------------------
# K_osc budget

def k_star_equation(K: float, omega: int = 1) -> float:
    """Coefficient whose smallest positive root is ``2 K*``."""
    return (2 - K**1.5 / (4 * math.pi**2 * math.sqrt(2 * math.pi) * omega)
            - 3 * K / (2 * math.pi) - 6 * omega * math.sqrt(K))


def solve_k_star(omega: int = 1, tol: float = 1e-12) -> float:
    """Smallest positive root of :func:`k_star_equation` on ``(0, 4]`` by bisection.

    The function is 2 at ``K = 0`` and strictly decreasing, so the root is
    unique. Returns ``2 K*``.
    """
    if omega < 1:
        raise ValueError(f"omega must be >= 1, got {omega}")
    lo, hi = 0.0, 4.0
    if k_star_equation(hi, omega) >= 0:
        raise ValueError(f"no sign change of the K* equation on (0, 4] for omega={omega}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if k_star_equation(mid, omega) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def k_s3_coefficient(K: float) -> float:
    """Coefficient of ``||k_sss||^2`` in the ``int k_s^2`` estimate, at ``K_osc = K``."""
    return 2 - 5 * (1 / 27 + K / math.pi) - (5 * K / (8 * math.pi**2)) * (math.sqrt(K) / math.sqrt(2 * math.pi) + 2)


@dataclass(frozen=True)
class KoscBudget:
    K_star_2: float
    l1_bound: float
    nonconvex_bound: float
    L0: float
    A0: float
    omega: int

    @property
    def K_star(self) -> float:
        return 0.5 * self.K_star_2

    @classmethod
    def from_curve(cls, curve: ClosedCurve) -> "KoscBudget":
        geom = geometry(curve)
        return cls.from_values(geom.length, geom.area, curve.winding)

    @classmethod
    def from_values(cls, L0: float, A0: float, omega: int = 1) -> "KoscBudget":
        deficit = L0**2 / (4 * math.pi) - A0
        return cls(
            K_star_2=solve_k_star(max(omega, 1)),
            l1_bound=L0**2 / (2 * math.pi) * deficit,
            nonconvex_bound=L0**2 / (4 * math.pi**3) * deficit,
            L0=L0, A0=A0, omega=omega,
        )

    def hypotheses_hold(self, K_osc0: float, I0: float) -> bool:
        """Smallness conditions on the initial oscillation and isoperimetric ratio."""
        K = self.K_star
        return self.omega == 1 and K_osc0 < K and I0 < 4 * math.pi**2 / (4 * math.pi**2 - K)


def _time_integral(t, y) -> float:
    return float(trapezoid(y, t)) if len(t) > 1 else 0.0


AREA_TOL = 1e-10


def check_kosc_budget(series, budget: KoscBudget, rel_tol: float = REL_SLACK) -> list[CheckReport]:
    t = np.array([r.t for r in series])
    K = np.array([r.K_osc for r in series])
    A = np.array([r.A for r in series])
    reports = []

    l1 = _time_integral(t, K)
    # a circle's K_osc is a square of rounding errors rather than exactly 0
    floor = (_FD_NOISE_ULPS * np.finfo(float).eps * 2 * math.pi * max(abs(budget.omega), 1)) ** 2
    l1_allowed = budget.l1_bound + floor * (t[-1] - t[0])
    reports.append(CheckReport("kosc_l1", budget.l1_bound, l1, inequality_holds(l1, l1_allowed, rel_tol)))

    K0, I0 = series[0].K_osc, series[0].I
    if budget.hypotheses_hold(K0, I0):
        peak = float(K.max())
        reports.append(CheckReport("kosc_below_2kstar", budget.K_star_2, peak, peak < budget.K_star_2))
    else:
        reports.append(CheckReport("kosc_below_2kstar", budget.K_star_2, float(K.max()), True,
                                   detail="hypotheses fail at t=0; nothing to check"))

    coeff = 16 * math.pi**3 * budget.omega**3 / budget.L0**2
    running = K0 + coeff * (A - budget.A0)
    # area carries the same per-sample rounding allowance as the monotonicity check
    slack = coeff * AREA_TOL * np.abs(A)
    excess = K - running - slack
    worst = int(np.argmax(excess))
    ok = all(inequality_holds(k, b + e, rel_tol) for k, b, e in zip(K, running, slack))
    reports.append(CheckReport("kosc_running_bound", float(running[worst]), float(K[worst]), ok,
                               detail=f"worst sample t={t[worst]:.6g}"))
    return reports


def check_nonconvex_bound(series, budget: KoscBudget, nonconvex_time: float | None = None) -> list[CheckReport]:
    """Total non-convex time against its bound, and the area-growth mechanism.

    The second check requires ``dA/dt >= 4 pi^3 / L0^2`` at every record
    with ``min_k <= 0``; ``dA/dt`` is the centred difference of the area
    series (one-sided at the ends).
    """
    if nonconvex_time is None:
        nonconvex_time = series[-1].nonconvex_time
    reports = [CheckReport("nonconvex_time", budget.nonconvex_bound, nonconvex_time,
                           nonconvex_time <= budget.nonconvex_bound * (1 + REL_SLACK) + 1e-30)]
    t = np.array([r.t for r in series])
    A = np.array([r.A for r in series])
    mink = np.array([r.min_k for r in series])
    rate_bound = 4 * math.pi**3 / budget.L0**2
    idx = np.nonzero(mink <= 0)[0]
    if len(t) > 1 and idx.size:
        dA = np.gradient(A, t)
        worst = idx[np.argmin(dA[idx])]
        reports.append(CheckReport("nonconvex_area_rate", rate_bound, float(dA[worst]),
                                   bool(np.all(dA[idx] >= rate_bound)),
                                   detail=f"{idx.size} non-convex samples"))
    else:
        reports.append(CheckReport("nonconvex_area_rate", rate_bound, float("nan"), True,
                                   detail="no non-convex samples"))
    return reports


# --------------------------------------------------------------------------
# decay fits

@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    n_samples: int
    t_start: float
    t_end: float


def fit_decay(series, field: str = "K_osc", window=None, kosc_window=(1e-9, 1e-4)) -> DecayFit:
    """Least-squares line through ``(t, log field)``; ``rate`` is minus the slope.

    ``window`` is a ``(t_start, t_end)`` pair. Without it the samples with
    ``kosc_window[0] <= K_osc <= kosc_window[1]`` are used (late-time,
    linear regime, above round-off).
    """
    t = np.array([r.t for r in series])
    y = np.array([getattr(r, field) for r in series], dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
    else:
        K = np.array([r.K_osc for r in series])
        sel = (K >= kosc_window[0]) & (K <= kosc_window[1])
    t, y = t[sel], y[sel]
    return fit_log_linear(t, y)


def fit_log_linear(t, y) -> DecayFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 10:
        raise ValueError(f"need at least 10 samples for a decay fit, got {t.size}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("decay fit needs positive finite values")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = np.sum((logy - logy.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=-slope, r_squared=float(r2), n_samples=int(t.size),
                    t_start=float(t[0]), t_end=float(t[-1]))


def linearized_rate(m: int, rho: float, squared: bool = True) -> float:
    """Decay rate of mode ``m`` about a circle of radius ``rho``; doubled for squared norms."""
    rate = (m**4 - m**2) / rho**4
    return 2 * rate if squared else rate


def displacement_increments(series) -> tuple[np.ndarray, np.ndarray]:
    """Interval midpoints and ``|max_disp(t_{j+1}) - max_disp(t_j)|``."""
    t = np.array([r.t for r in series])
    d = np.array([r.max_disp for r in series])
    return 0.5 * (t[1:] + t[:-1]), np.abs(np.diff(d))


# --------------------------------------------------------------------------
# static checks along a series

def static_inequality_reports(series) -> list[CheckReport]:
    """Interpolation and h-bound inequalities re-evaluated from recorded norms."""
    reports = []
    for rec in series:
        norms = [rec.nk2, rec.nks2, rec.nkss2, rec.nks32, rec.nks42]
        for n in range(1, 5):
            lhs, rhs = interpolation_bound(norms, n)
            reports.append(CheckReport(f"interpolation_n{n}", rhs, lhs, inequality_holds(lhs, rhs)))
            bound = h_bound(norms[0], norms[n], n)
            reports.append(CheckReport(f"h_bound_n{n}", bound, abs(rec.h), inequality_holds(abs(rec.h), bound)))
    return reports


# --------------------------------------------------------------------------
# solitons

SOLITON_KINDS = ("stationary", "translator", "rotator")


@dataclass(frozen=True)
class SolitonFit:
    kind: str
    residual: float
    parameters: tuple

    def to_dict(self) -> dict:
        return {"kind": self.kind, "residual": self.residual, "parameters": list(self.parameters)}


def soliton_fit(curve: ClosedCurve, kind: str) -> SolitonFit:
    """Best fit of ``h - k_ss`` to a rigid motion of the given kind.

    stationary: no motion. translator: ``<V, nu>`` over ``V`` in R^2.
    rotator: ``2 S <gamma - c, gamma_s>`` over ``S``, ``c`` the centroid.
    The residual is the ``L^2(ds)`` misfit divided by
    ``max(||k_ss||_2, 1/L)``.
    """
    if kind not in SOLITON_KINDS:
        raise ValueError(f"soliton kind must be one of {SOLITON_KINDS}, got {kind!r}")
    omega = curve.winding
    if omega == 0:
        raise ValueError("winding number is zero; soliton equations are undefined")
    geom = geometry(curve, denoise=True)
    w = geom.weights
    F = compute_h(geom, "continuum", omega) - geom.k_ss
    if kind == "stationary":
        basis = np.zeros((F.size, 0))
    elif kind == "translator":
        basis = geom.normal
    else:
        rel = geom.points - geom.points.mean(axis=0)
        basis = (2 * np.sum(rel * geom.tangent, axis=1))[:, None]
    if basis.shape[1]:
        G = basis.T @ (w[:, None] * basis)
        rhs = basis.T @ (w * F)
        scale = np.trace(G) / max(G.shape[0], 1)
        if scale <= 1e-300:
            params = np.zeros(basis.shape[1])
        else:
            # tiny ridge keeps the normal equations solvable when a basis
            # column vanishes (rotations of a circle)
            params = np.linalg.solve(G + 1e-14 * scale * np.eye(G.shape[0]), rhs)
        misfit = F - basis @ params
    else:
        params = np.zeros(0)
        misfit = F
    norm = math.sqrt(np.sum(w * misfit**2))
    scale = max(math.sqrt(np.sum(w * geom.k_ss**2)), 1 / geom.length)
    return SolitonFit(kind, norm / scale, tuple(float(p) for p in params))


def soliton_residual(curve: ClosedCurve, kind: str) -> float:
    return soliton_fit(curve, kind).residual
