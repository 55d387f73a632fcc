"""Calculus for smooth periodic fields sampled on a uniform grid.

Spectral differentiation is the working kernel. An 8th-order centred
finite-difference differentiator is kept alongside it purely as an
independent cross-check.

The ``check_*`` functions evaluate the Poincare-Sobolev-Wirtinger
inequalities, the iterated interpolation inequality for curvature
derivatives and the resulting bound on the constraint term ``h``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

REL_SLACK = 1e-8
ABS_FLOOR = 1e-30
MAX_ORDER = 6


@dataclass(frozen=True)
class PeriodicField:
    """Samples ``values[i] = f(i * spacing)`` of a field with period ``n * spacing``."""

    values: np.ndarray
    spacing: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("PeriodicField needs a one-dimensional array of at least 2 samples")
        if not np.all(np.isfinite(values)):
            raise ValueError("PeriodicField values must be finite")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func, n: int, period: float) -> "PeriodicField":
        x = np.arange(n) * (period / n)
        return cls(func(x), period / n)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def period(self) -> float:
        return self.n * self.spacing

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def with_values(self, values) -> "PeriodicField":
        return PeriodicField(values, self.spacing)

    def __mul__(self, other):
        if isinstance(other, PeriodicField):
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __neg__(self):
        return self.with_values(-self.values)

    def __sub__(self, other):
        return self + (-other)


def spectral_derivative(values: np.ndarray, order: int, period: float = 2 * np.pi) -> np.ndarray:
    """Differentiate periodic samples along axis 0 using the FFT.

    The Nyquist coefficient is dropped for odd orders, so the operator is
    real, exact on trigonometric polynomials of degree below ``n/2`` and
    skew-adjoint for odd ``order``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    coeffs = np.fft.rfft(values, axis=0)
    wavenumber = 2 * np.pi * np.arange(coeffs.shape[0]) / period
    multiplier = (1j * wavenumber) ** order
    if order % 2 == 1 and n % 2 == 0:
        multiplier[-1] = 0.0
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(coeffs * multiplier.reshape(shape), n=n, axis=0)


def derivative(f: PeriodicField, order: int = 1) -> PeriodicField:
    """Return the ``order``-th derivative of ``f`` (1 <= order <= 6)."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"derivative order must lie in [1, {MAX_ORDER}], got {order}")
    return f.with_values(spectral_derivative(f.values, order, f.period))


# 8th-order centred stencils, offsets -4..4.
_FD8_FIRST = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_FD8_SECOND = np.array(
    [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]
)


def _apply_stencil(values: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    for offset, weight in zip(range(-4, 5), stencil):
        if weight:
            out += weight * np.roll(values, -offset)
    return out


def finite_difference_derivative(f: PeriodicField, order: int = 1) -> PeriodicField:
    """8th-order centred finite differences; cross-validation oracle only."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"derivative order must lie in [1, {MAX_ORDER}], got {order}")
    values = f.values
    remaining = order
    while remaining >= 2:
        values = _apply_stencil(values, _FD8_SECOND) / f.spacing**2
        remaining -= 2
    if remaining:
        values = _apply_stencil(values, _FD8_FIRST) / f.spacing
    return f.with_values(values)


def integral(f: PeriodicField) -> float:
    """Trapezoidal rule, which is spectrally accurate for periodic data."""
    return float(f.spacing * np.sum(f.values))


@dataclass(frozen=True)
class InequalityReport:
    """One evaluated inequality ``lhs <= rhs`` with relative slack."""

    name: str
    lhs: float
    rhs: float
    slack: float = REL_SLACK
    holds: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "holds", inequality_holds(self.lhs, self.rhs, self.slack))

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "holds": bool(self.holds)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def inequality_holds(lhs: float, rhs: float, slack: float = REL_SLACK) -> bool:
    return lhs <= rhs + slack * max(abs(lhs), abs(rhs)) + ABS_FLOOR


@dataclass(frozen=True)
class PSWReport:
    lhs_i: float
    rhs_i: float
    lhs_ii: float
    rhs_ii: float
    subtracted_mean: float

    @property
    def reports(self) -> list[InequalityReport]:
        return [InequalityReport("psw_i", self.lhs_i, self.rhs_i),
                InequalityReport("psw_ii", self.lhs_ii, self.rhs_ii)]

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.reports)

    @property
    def equality_gap_i(self) -> float:
        """Relative gap in (i); zero exactly for a first-harmonic sinusoid."""
        return (self.rhs_i - self.lhs_i) / max(abs(self.rhs_i), ABS_FLOOR)

    def to_dict(self) -> dict:
        return {"subtracted_mean": self.subtracted_mean, "holds": self.holds,
                "checks": [r.to_dict() for r in self.reports]}


def check_psw(f: PeriodicField) -> PSWReport:
    """Wirtinger (i) and sup-norm (ii) inequalities for the mean-free part of ``f``."""
    mean = integral(f) / f.period
    g = f - mean
    energy = integral(derivative(g, 1) * derivative(g, 1))
    P = f.period
    return PSWReport(
        lhs_i=integral(g * g),
        rhs_i=P**2 / (4 * np.pi**2) * energy,
        lhs_ii=float(np.max(np.abs(g.values)) ** 2),
        rhs_ii=P / (2 * np.pi) * energy,
        subtracted_mean=mean,
    )


def derivative_norms(k: PeriodicField, max_order: int) -> list[float]:
    """``[int k^2, int k_s^2, ..., int k_{s^max_order}^2]``."""
    norms = [integral(k * k)]
    for m in range(1, max_order + 1):
        dk = derivative(k, m)
        norms.append(integral(dk * dk))
    return norms


def interpolation_bound(norms: list[float], n: int) -> tuple[float, float]:
    """Both sides of ``int k_{s^(n-1)}^2 <= (int k^2)^(1/n) (int k_{s^n}^2)^((n-1)/n)``."""
    lhs = norms[n - 1]
    rhs = norms[0] ** (1.0 / n) * norms[n] ** ((n - 1.0) / n)
    return lhs, rhs


def check_iterated_interpolation(k: PeriodicField, n: int) -> InequalityReport:
    if not 1 <= n <= 4:
        raise ValueError(f"n must lie in [1, 4], got {n}")
    lhs, rhs = interpolation_bound(derivative_norms(k, n), n)
    return InequalityReport(f"interpolation_n{n}", lhs, rhs)


def h_bound(norm_k2: float, norm_kn2: float, n: int) -> float:
    """``(1/2pi) (int k^2)^(1-1/n) (int k_{s^n}^2)^(1/n)``."""
    return (norm_k2 ** (1.0 - 1.0 / n)) * (norm_kn2 ** (1.0 / n)) / (2 * np.pi)


def check_h_bound(curve, n: int) -> InequalityReport:
    """Bound ``|h|`` (continuum definition) by curvature norms of order ``n``."""
    from .curve import geometry
    from .flow import compute_h

    if not 1 <= n <= 4:
        raise ValueError(f"n must lie in [1, 4], got {n}")
    geom = geometry(curve)
    h = compute_h(geom, "continuum", curve.winding)
    derivs = [geom.k, geom.k_s, geom.k_ss, geom.k_s3, geom.k_s4]
    norm_k2 = geom.integrate(geom.k**2)
    norm_kn2 = geom.integrate(derivs[n] ** 2)
    return InequalityReport(f"h_bound_n{n}", abs(h), h_bound(norm_k2, norm_kn2, n))


def band_limited_field(rng: np.random.Generator, n: int, period: float,
                       max_mode: int | None = None, decay: float = 0.0) -> PeriodicField:
    """Random real field with modes ``1..max_mode`` and zero mean."""
    if max_mode is None:
        max_mode = n // 4
    modes = np.arange(1, max_mode + 1)
    amp = rng.normal(size=max_mode) * np.exp(-decay * modes)
    phase = rng.uniform(0, 2 * np.pi, size=max_mode)
    x = np.arange(n) * (period / n)
    values = np.sum(amp[:, None] * np.cos(2 * np.pi * modes[:, None] * x / period + phase[:, None]), axis=0)
    return PeriodicField(values, period / n)
