import math

import numpy as np
import pytest

from curvediff.curve import ClosedCurve
from curvediff.scenarios import run_scenario

_RESULTS = {}


def scenario_result(name):
    """Run a registered scenario once per test session."""
    if name not in _RESULTS:
        _RESULTS[name] = run_scenario(name)
    return _RESULTS[name]


@pytest.fixture(scope="session")
def results():
    return scenario_result


def circle(n=256, r=1.0, center=(0.0, 0.0), omega=1):
    th = 2 * np.pi * np.arange(n) / n
    return ClosedCurve(np.column_stack((center[0] + r * np.cos(omega * th), center[1] + r * np.sin(omega * th))))


def radial_oracle(modes, samples=4096, r=1.0):
    """K_osc, L and A of rho(theta) = r (1 + sum a cos(m theta + phase)) by theta quadrature.

    Uses the closed-form polar expressions: ds = sqrt(rho^2 + rho'^2) dtheta and
    k = (rho^2 + 2 rho'^2 - rho rho'') / (rho^2 + rho'^2)^(3/2).
    """
    th = 2 * np.pi * np.arange(samples) / samples
    rho = np.ones_like(th)
    d1 = np.zeros_like(th)
    d2 = np.zeros_like(th)
    for m, a, p in modes:
        rho += a * np.cos(m * th + p)
        d1 += -a * m * np.sin(m * th + p)
        d2 += -a * m * m * np.cos(m * th + p)
    rho, d1, d2 = r * rho, r * d1, r * d2
    speed = np.sqrt(rho**2 + d1**2)
    k = (rho**2 + 2 * d1**2 - rho * d2) / speed**3
    dth = 2 * np.pi / samples
    L = float(np.sum(speed) * dth)
    A = float(0.5 * np.sum(rho**2) * dth)
    kbar = float(np.sum(k * speed) * dth) / L
    K_osc = L * float(np.sum((k - kbar) ** 2 * speed) * dth)
    return {"K_osc": K_osc, "L": L, "A": A, "kbar": kbar, "min_k": float(k.min())}


def ellipse_perimeter(a, b):
    """Perimeter 4a E(1 - b^2/a^2) for a >= b, via the complete elliptic integral."""
    from scipy.special import ellipe

    a, b = max(a, b), min(a, b)
    return float(4 * a * ellipe(1 - (b / a) ** 2))


def brute_force_embedded(points):
    """Pure-Python O(N^2) segment test, independent of the vectorised implementation."""
    pts = [tuple(map(float, p)) for p in points]
    n = len(pts)

    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return (v > 0) - (v < 0)

    def on_seg(p, q, r):
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    def touch(p1, p2, p3, p4):
        o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
        if o1 * o2 < 0 and o3 * o4 < 0:
            return True
        return ((o1 == 0 and on_seg(p1, p2, p3)) or (o2 == 0 and on_seg(p1, p2, p4))
                or (o3 == 0 and on_seg(p3, p4, p1)) or (o4 == 0 and on_seg(p3, p4, p2)))

    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if touch(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def random_polygon(rng):
    n = int(rng.integers(8, 40))
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = rng.uniform(0.3, 1.5, n)
    # swapping a few vertices produces crossings in some samples
    for _ in range(int(rng.integers(0, 3))):
        i, j = rng.integers(0, n, 2)
        angles[[i, j]] = angles[[j, i]]
    return np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))
