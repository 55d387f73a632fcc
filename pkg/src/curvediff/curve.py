"""Closed plane curves sampled at N nodes.

Orientation conventions: the tangent points along increasing node index,
the normal is the tangent rotated by +90 degrees. A counterclockwise convex
curve therefore has an inward normal, positive curvature, positive area
and winding number +1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .periodic import spectral_derivative

MIN_NODES = 16
MIN_LENGTH = 1e-12


class DegenerateCurveError(ValueError):
    """Raised for curves that cannot be represented (NaN, zero length, repeated nodes)."""


@dataclass(frozen=True)
class ClosedCurve:
    """Ordered nodes of a closed polyline; index arithmetic is cyclic."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegenerateCurveError(f"points must have shape (n, 2), got {pts.shape}")
        if pts.shape[0] < 3:
            raise DegenerateCurveError(f"need at least 3 nodes, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argmax(~np.all(np.isfinite(pts), axis=1)))
            raise DegenerateCurveError(f"non-finite coordinates at node {bad}")
        chords = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if chords.sum() < MIN_LENGTH:
            raise DegenerateCurveError(f"curve length {chords.sum():.3e} is below {MIN_LENGTH}")
        if np.min(chords) <= 0:
            raise DegenerateCurveError(f"repeated consecutive node at index {int(np.argmin(chords))}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @cached_property
    def chords(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    @cached_property
    def winding(self) -> int:
        """Turning number of the polyline: sum of signed exterior angles / 2pi."""
        edges = np.roll(self.points, -1, axis=0) - self.points
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        dot = np.sum(edges * nxt, axis=1)
        return int(round(np.sum(np.arctan2(cross, dot)) / (2 * np.pi)))

    @cached_property
    def length(self) -> float:
        """Length of the trigonometric interpolant through the nodes."""
        d1 = spectral_derivative(self.points, 1)
        return float(np.sum(np.hypot(d1[:, 0], d1[:, 1])) * 2 * np.pi / self.n)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @cached_property
    def _geometry(self) -> "GeometryCache":
        return geometry_arrays(self.points)

    @cached_property
    def _smooth_geometry(self) -> "GeometryCache":
        return geometry_arrays(self.points, denoise=True)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def scaled(self, factor: float, center=None) -> "ClosedCurve":
        center = self.centroid if center is None else np.asarray(center, dtype=float)
        return ClosedCurve(center + factor * (self.points - center))

    def translated(self, offset) -> "ClosedCurve":
        return ClosedCurve(self.points + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class GeometryCache:
    """Per-node frame, curvature and its arc-length derivatives, plus integrals.

    ``weights`` are the quadrature weights ``ds`` of each node, so that
    ``integrate(f) = sum(f * weights)``. On a uniform arc-length grid all
    weights equal ``length / n``.
    """

    points: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    k: np.ndarray
    k_s: np.ndarray
    k_ss: np.ndarray
    k_s3: np.ndarray
    k_s4: np.ndarray
    weights: np.ndarray
    length: float
    area: float
    kbar: float

    def __post_init__(self):
        for name in ("points", "tangent", "normal", "k", "k_s", "k_ss", "k_s3", "k_s4", "weights"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.k.size

    @property
    def k_derivs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.k_s, self.k_ss, self.k_s3, self.k_s4

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.weights))

    @property
    def total_curvature(self) -> float:
        return self.integrate(self.k)

    @property
    def k_osc(self) -> float:
        return self.length * self.integrate((self.k - self.kbar) ** 2)


def _spectral_cut(points: np.ndarray, rel_tol: float) -> int:
    """First rfft index past the last coordinate mode above ``rel_tol`` of the largest one."""
    coeffs = np.fft.rfft(points, axis=0)
    mag = np.max(np.abs(coeffs[1:]), axis=1)
    keep = np.nonzero(mag > rel_tol * mag.max())[0]
    return keep[-1] + 2 if keep.size else 1


def _lowpass(values: np.ndarray, cut: int) -> np.ndarray:
    coeffs = np.fft.rfft(values, axis=0)
    coeffs[cut:] = 0.0
    return np.fft.irfft(coeffs, n=values.shape[0], axis=0)


def denoise_spectrum(points: np.ndarray, rel_tol: float = 1e-13) -> np.ndarray:
    """Drop the Fourier tail of the coordinates once it falls to round-off level.

    Coefficients are compared against ``rel_tol`` times the largest
    non-constant coefficient; every mode above the last one exceeding that
    threshold is zeroed. Smooth curves lose nothing but rounding noise,
    which otherwise dominates fifth and sixth derivatives of the positions.
    """
    return _lowpass(points, _spectral_cut(points, rel_tol))


def geometry_arrays(points: np.ndarray, denoise: bool = False) -> GeometryCache:
    """Geometry of the trigonometric interpolant through ``points``.

    The node index is a parameter ``x`` on ``[0, 2pi)``; arc-length
    derivatives are ``d/ds = |gamma_x|^{-1} d/dx``. On a uniform arc-length
    grid this is plain spectral differentiation in ``s``.

    With ``denoise`` the coordinates are truncated to their significant
    band and curvature and each of its derivatives are projected onto twice
    that band (room for quadratic harmonics). Pointwise products reintroduce rounding noise in every mode
    and repeated differentiation would otherwise amplify it by ``q`` per
    order.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if denoise:
        cut = _spectral_cut(pts, 1e-13)
        pts = _lowpass(pts, cut)

        def clean(f):
            return _lowpass(f, 2 * cut)
    else:
        def clean(f):
            return f
    d1 = spectral_derivative(pts, 1)
    d2 = spectral_derivative(pts, 2)
    speed = np.hypot(d1[:, 0], d1[:, 1])
    tangent = d1 / speed[:, None]
    normal = np.column_stack((-tangent[:, 1], tangent[:, 0]))
    k = clean((d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3)

    def d_ds(f):
        return clean(spectral_derivative(f, 1) / speed)

    k_s = d_ds(k)
    k_ss = d_ds(k_s)
    k_s3 = d_ds(k_ss)
    k_s4 = d_ds(k_s3)
    dx = 2 * np.pi / n
    weights = speed * dx
    length = float(weights.sum())
    area = 0.5 * float(np.sum(pts[:, 0] * d1[:, 1] - pts[:, 1] * d1[:, 0]) * dx)
    kbar = float(np.sum(k * weights)) / length
    return GeometryCache(points=pts, tangent=tangent, normal=normal, k=k, k_s=k_s, k_ss=k_ss,
                         k_s3=k_s3, k_s4=k_s4, weights=weights, length=length, area=area, kbar=kbar)


def geometry(curve: ClosedCurve, denoise: bool = False) -> GeometryCache:
    """Geometry of ``curve``, computed once per curve and shared read-only."""
    return curve._smooth_geometry if denoise else curve._geometry


# --------------------------------------------------------------------------
# resampling

def _split_spectrum(values: np.ndarray) -> tuple[complex, np.ndarray, np.ndarray]:
    """Coefficients ``(c_0, c_{+q}, c_{-q})`` for ``q = 1..m/2``, Nyquist split in half."""
    m = values.shape[0]
    c = np.fft.fft(values) / m
    half = m // 2
    pos = c[1:half + 1].copy()
    neg = c[:m - half - 1:-1][:half].copy() if m % 2 else np.concatenate((c[:half:-1], c[half:half + 1]))
    if m % 2 == 0:
        pos[-1] /= 2
        neg[-1] /= 2
    return c[0], pos, neg


def _powers(x: np.ndarray, qmax: int) -> np.ndarray:
    """``exp(1j * q * x)`` for ``q = 1..qmax`` as an ``(len(x), qmax)`` array."""
    w = np.exp(1j * x)
    return np.cumprod(np.broadcast_to(w[:, None], (x.size, qmax)), axis=1)


def _fourier_resample(points: np.ndarray, n: int) -> np.ndarray:
    m = points.shape[0]
    z = points[:, 0] + 1j * points[:, 1]
    c0, c_pos, c_neg = _split_spectrum(z)
    q = np.arange(1, c_pos.size + 1)

    d1 = spectral_derivative(points, 1)
    speed_nodes = np.hypot(d1[:, 0], d1[:, 1])
    a0, a_pos, _ = _split_spectrum(speed_nodes)
    a0 = float(np.real(a0))
    a_int = a_pos / (1j * q)
    total = a0 * 2 * np.pi

    def arclength(x):
        P = _powers(x, q.size)
        s = a0 * x + 2 * np.real(P @ a_int - np.sum(a_int))
        return s, a0 + 2 * np.real(P @ a_pos)

    x_nodes = 2 * np.pi * np.arange(m) / m
    s_nodes = np.concatenate(([0.0], np.cumsum(0.5 * (speed_nodes + np.roll(speed_nodes, -1)))))
    s_nodes *= total / s_nodes[-1]
    targets = total * np.arange(n) / n
    x = np.interp(targets, s_nodes, np.append(x_nodes, 2 * np.pi))
    for _ in range(50):
        s, ds = arclength(x)
        step = (s - targets) / ds
        step[0] = 0.0
        x = x - step
        if np.max(np.abs(step)) < 1e-14:
            break
    P = _powers(x, q.size)
    w = c0 + P @ c_pos + np.conj(P) @ c_neg
    w[0] = z[0]
    return np.column_stack((w.real, w.imag))


def _gauss_segment_lengths(spline: CubicSpline, knots: np.ndarray, order: int = 8) -> np.ndarray:
    nodes, wts = np.polynomial.legendre.leggauss(order)
    a, b = knots[:-1], knots[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    u = mid[:, None] + half[:, None] * nodes[None, :]
    d = spline(u, 1)
    return half * np.sum(wts * np.hypot(d[..., 0], d[..., 1]), axis=1)


def _spline_resample(points: np.ndarray, n: int) -> np.ndarray:
    closed = np.vstack((points, points[:1]))
    chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    knots = np.concatenate(([0.0], np.cumsum(chord)))
    spline = CubicSpline(knots, closed, bc_type="periodic")
    seg = _gauss_segment_lengths(spline, knots)
    s_knots = np.concatenate(([0.0], np.cumsum(seg)))
    total = s_knots[-1]
    targets = total * np.arange(n) / n
    idx = np.clip(np.searchsorted(s_knots, targets, side="right") - 1, 0, len(seg) - 1)
    u = knots[idx] + (targets - s_knots[idx]) / seg[idx] * (knots[idx + 1] - knots[idx])
    nodes, wts = np.polynomial.legendre.leggauss(8)
    for _ in range(30):
        a = knots[idx]
        half = 0.5 * (u - a)
        pts = 0.5 * (u + a)[:, None] + half[:, None] * nodes[None, :]
        d = spline(pts, 1)
        s = s_knots[idx] + half * np.sum(wts * np.hypot(d[..., 0], d[..., 1]), axis=1)
        du = spline(u, 1)
        step = (s - targets) / np.hypot(du[:, 0], du[:, 1])
        u = u - step
        if np.max(np.abs(step)) < 1e-15 * total:
            break
    return spline(u)


def resample_by_arclength(curve: ClosedCurve, n: int | None = None,
                          method: str = "fourier") -> ClosedCurve:
    """Redistribute nodes at equal arc-length spacing, keeping node 0 fixed.

    ``method="fourier"`` walks the trigonometric interpolant of the nodes
    (spectrally accurate for smooth curves). ``method="spline"`` walks a
    periodic cubic spline with Gauss-Legendre arc length.
    """
    n = curve.n if n is None else int(n)
    if n < MIN_NODES or n % 2:
        raise ValueError(f"n must be even and >= {MIN_NODES}, got {n}")
    if method == "fourier":
        pts = _fourier_resample(curve.points, n)
    elif method == "spline":
        pts = _spline_resample(curve.points, n)
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    return ClosedCurve(pts)


# --------------------------------------------------------------------------
# embeddedness

def _orient(p, q, r):
    return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])


def _on_segment(p, q, r):
    """``r`` inside the bounding box of segment ``pq`` (collinearity assumed)."""
    return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


@lru_cache(maxsize=8)
def _edge_pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    return i[keep], j[keep]


def intersecting_edge_pairs(points: np.ndarray) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, of non-adjacent polyline edges that touch or cross.

    Pairs whose bounding boxes are disjoint are discarded first; the exact
    orientation tests run only on the survivors.
    """
    a = np.asarray(points, dtype=float)
    b = np.roll(a, -1, axis=0)
    n = a.shape[0]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    i, j = _edge_pair_indices(n)
    overlap = ((lo[i, 0] <= hi[j, 0]) & (lo[j, 0] <= hi[i, 0])
               & (lo[i, 1] <= hi[j, 1]) & (lo[j, 1] <= hi[i, 1]))
    i, j = i[overlap], j[overlap]
    ai, bi, aj, bj = a[i], b[i], a[j], b[j]
    o1 = np.sign(_orient(ai, bi, aj))
    o2 = np.sign(_orient(ai, bi, bj))
    o3 = np.sign(_orient(aj, bj, ai))
    o4 = np.sign(_orient(aj, bj, bi))
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    hit |= (o1 == 0) & _on_segment(ai, bi, aj)
    hit |= (o2 == 0) & _on_segment(ai, bi, bj)
    hit |= (o3 == 0) & _on_segment(aj, bj, ai)
    hit |= (o4 == 0) & _on_segment(aj, bj, bi)
    return np.column_stack((i[hit], j[hit]))


def is_embedded(curve: ClosedCurve) -> bool:
    """True iff no two non-adjacent edges of the polyline intersect."""
    return intersecting_edge_pairs(curve.points).shape[0] == 0


# --------------------------------------------------------------------------
# CSV

def read_curve_csv(path) -> ClosedCurve:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric coordinate {row!r}") from None
    pts = np.array(rows, dtype=float).reshape(-1, 2)
    if pts.shape[0] < MIN_NODES:
        raise ValueError(f"{path}: need at least {MIN_NODES} nodes, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: non-finite coordinates")
    if np.array_equal(pts[0], pts[-1]):
        raise ValueError(f"{path}: last row repeats the first; closure is implicit")
    return ClosedCurve(pts)


def write_curve_csv(curve: ClosedCurve, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in curve.points:
            writer.writerow([repr(float(x)), repr(float(y))])
