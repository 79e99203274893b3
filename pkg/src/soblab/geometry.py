"""Volume densities, isoperimetry and Brunn-Minkowski on metric measure spaces.

Two kinds of space are handled: finite point clouds (:class:`DiscreteMMS`)
and weighted intervals (:class:`~soblab.grids.WeightedGrid`) with the
interval distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from ._validation import check_dimension, check_exponent, check_positive, check_values
from .constants import comparison_volume, distortion_sigma, eucl_constant, sobolev_conjugate, unit_ball_volume
from .grids import SampledFunction, WeightedGrid, dirichlet_energy, lp_norm
from .sobolev import bliss_profile

__all__ = [
    "DiscreteMMS",
    "DensityProfile",
    "ModelViolationError",
    "ball_mass",
    "density_profile",
    "avr_estimate",
    "perimeter_superlevel",
    "minkowski_content",
    "isoperimetric_constant",
    "brunn_minkowski_check",
    "local_sobolev_check",
]

TRIANGLE_SLACK = 1e-9


class ModelViolationError(ValueError):
    """A computed profile contradicts the comparison geometry it should satisfy."""


@dataclass(frozen=True, eq=False)
class DiscreteMMS:
    """Finite metric measure space: a distance matrix and point masses."""

    distance: np.ndarray
    mass: np.ndarray
    validate: bool = True

    def __post_init__(self):
        d = np.array(self.distance, dtype=float)
        m = check_values(self.mass, name="mass").copy()
        n = m.size
        if d.shape != (n, n):
            raise ValueError(f"distance must be {n}x{n}, got {d.shape}")
        if np.any(m <= 0):
            raise ValueError("every point needs positive mass")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distances must be finite and non-negative")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix needs a zero diagonal")
        if self.validate and n <= 2000:
            for k in range(n):
                if np.any(d > d[:, k : k + 1] + d[k : k + 1, :] + TRIANGLE_SLACK):
                    raise ValueError(f"triangle inequality fails through point {k}")
        d.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "mass", m)

    @property
    def n_points(self) -> int:
        return self.mass.size

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "DiscreteMMS":
        """Build from ``{"distance", "mass"}`` or the edge-list form ``{"n", "edges", "mass"}``."""
        if "distance" in data:
            return cls(np.asarray(data["distance"], dtype=float), data["mass"], validate)
        n = int(data["n"])
        edges = np.asarray(data["edges"], dtype=float).reshape(-1, 3)
        i, j, w = edges[:, 0].astype(int), edges[:, 1].astype(int), edges[:, 2]
        if np.any(w <= 0):
            raise ValueError("edge lengths must be positive")
        graph = csr_matrix((w, (i, j)), shape=(n, n))
        dist = csgraph.shortest_path(graph, directed=False)
        if not np.all(np.isfinite(dist)):
            raise ValueError("edge list does not describe a connected space")
        return cls(dist, data["mass"], validate)

    @classmethod
    def from_json(cls, path, validate: bool = True) -> "DiscreteMMS":
        return cls.from_dict(json.loads(Path(path).read_text()), validate)


@dataclass(frozen=True)
class DensityProfile:
    center: float
    radii: np.ndarray
    theta_r: np.ndarray
    theta_0_estimate: float
    smallest_radius_value: float
    comparison_sup: float
    log_slope: float

    def to_dict(self) -> dict:
        return {
            "center": self.center,
            "radii": self.radii.tolist(),
            "theta_r": self.theta_r.tolist(),
            "theta_0_estimate": "infinite" if math.isinf(self.theta_0_estimate) else self.theta_0_estimate,
            "smallest_radius_value": self.smallest_radius_value,
            "comparison_sup": self.comparison_sup,
            "log_slope": self.log_slope,
        }


def _check_center(space, x):
    if isinstance(space, DiscreteMMS):
        if isinstance(x, bool) or int(x) != x or not 0 <= int(x) < space.n_points:
            raise ValueError(f"center must be a point index in [0, {space.n_points}), got {x}")
        return int(x)
    x = float(x)
    if not space.nodes[0] <= x <= space.nodes[-1]:
        raise ValueError(f"center {x} lies outside [{space.nodes[0]}, {space.nodes[-1]}]")
    return x


def ball_mass(space, x, r):
    """m(B_r(x)) of the open ball; ``r`` may be an array."""
    x = _check_center(space, x)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    if isinstance(space, DiscreteMMS):
        d = space.distance[x]
        order = np.argsort(d)
        cum = np.concatenate([[0.0], np.cumsum(space.mass[order])])
        out = cum[np.searchsorted(d[order], r, side="left")]
    else:
        out = space.mass_below(x + r) - space.mass_below(x - r)
    return float(out) if out.ndim == 0 else out


def density_profile(space, x, N: float, radii=None, K: float = 0.0) -> DensityProfile:
    """theta_{N,r}(x) = m(B_r(x)) / (omega_N r^N) over ``radii``.

    ``theta_0_estimate`` is the sup of m(B_r) / v_{K,N}(r) over the radii,
    or ``inf`` when the profile blows up like a power of 1/r at small radii.
    """
    N = check_dimension(N)
    x = _check_center(space, x)
    if radii is None:
        scale = space.diameter if isinstance(space, WeightedGrid) else float(space.distance.max())
        radii = np.geomspace(1e-4, 1e-1, 31) * scale
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 2 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    mass = np.asarray(ball_mass(space, x, radii), dtype=float)
    theta = mass / (unit_ball_volume(N) * radii**N)
    comparison = np.array([comparison_volume(K, N, r) for r in radii])
    ratio = mass / comparison
    m = max(3, radii.size // 3)
    small = slice(0, m)
    pos = theta[small] > 0
    slope = float(np.polyfit(np.log(radii[small][pos]), np.log(theta[small][pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    sup = float(np.max(ratio))
    estimate = math.inf if slope < -0.5 else sup
    return DensityProfile(
        center=float(x),
        radii=radii,
        theta_r=theta,
        theta_0_estimate=estimate,
        smallest_radius_value=float(theta[0]),
        comparison_sup=sup,
        log_slope=slope,
    )


def avr_estimate(grid: WeightedGrid, x: float = 0.0, N: float | None = None, rtol: float = 1e-9) -> dict:
    """Asymptotic volume ratio from theta_{N,r} over the largest decade of radii.

    theta_{N,r} must be non-increasing there (Bishop-Gromov with K = 0).
    """
    if not isinstance(grid, WeightedGrid) or not grid.unbounded:
        raise ValueError("the asymptotic volume ratio needs an unbounded (cone-like) model")
    N = check_dimension(N if N is not None else grid.N)
    x = _check_center(grid, x)
    R = grid.nodes[-1] - x
    radii = np.geomspace(R / 10, R, 41)
    theta = np.asarray(ball_mass(grid, x, radii)) / (unit_ball_volume(N) * radii**N)
    rises = np.diff(theta) > rtol * theta[:-1]
    if np.any(rises):
        raise ModelViolationError(
            f"theta_(N,r) increases with r (max rise {np.max(np.diff(theta) / theta[:-1]):.2e}); not CD(0,{N})"
        )
    return {"avr": float(theta[-1]), "radii": radii.tolist(), "theta_r": theta.tolist()}


def _is_free_end(grid: WeightedGrid, side: int) -> bool:
    """Whether a domain endpoint is an artificial cut that carries perimeter."""
    return side == 1 and grid.unbounded


def perimeter_superlevel(grid: WeightedGrid, u, t: float) -> float:
    """Per({u > t}): the density summed over the boundary points of the superlevel set."""
    values = u.values if isinstance(u, SampledFunction) else check_values(u, grid.n_nodes)
    f = values - float(t)
    a, b = f[:-1], f[1:]
    if np.any((a == 0) & (b == 0)):
        raise ValueError(f"t={t} is not a regular value: u has a plateau at that level")
    cross = (a > 0) != (b > 0)
    idx = np.nonzero(cross)[0]
    s = a[idx] / (a[idx] - b[idx])
    pts = grid.nodes[idx] + s * grid.widths[idx]
    per = float(np.sum(grid.density_at(pts)))
    if _is_free_end(grid, 1) and f[-1] > 0:
        per += float(grid.density_at(grid.nodes[-1]))
    return per


def minkowski_content(space, E, delta_list) -> dict:
    """Finite-difference proxies (m(E^delta) - m(E)) / delta; the minimum is the liminf estimate.

    ``E`` is a list of point indices for a :class:`DiscreteMMS`, or an
    interval ``(a, b)`` for a grid.
    """
    deltas = np.asarray(delta_list, dtype=float)
    if deltas.size == 0 or np.any(deltas <= 0):
        raise ValueError("delta_list must hold positive values")
    if np.any(np.diff(deltas) >= 0) and deltas.size > 1:
        raise ValueError("delta_list must be decreasing")
    if isinstance(space, DiscreteMMS):
        idx = np.unique(np.asarray(E, dtype=int))
        if idx.size == 0:
            raise ValueError("E must be non-empty")
        dist_to_E = space.distance[:, idx].min(axis=1)
        m_E = float(space.mass[idx].sum())
        m_delta = np.array([space.mass[dist_to_E < d].sum() for d in deltas])
    else:
        a, b = float(E[0]), float(E[1])
        if not a < b:
            raise ValueError("E must be a non-empty interval")
        m_E = space.restrict_mass(a, b)
        m_delta = np.array([space.restrict_mass(a - d, b + d) for d in deltas])
    est = (m_delta - m_E) / deltas
    return {"value": float(est.min()), "estimates": est.tolist(), "deltas": deltas.tolist(), "mass": m_E}


def _interval_perimeter(grid: WeightedGrid, lo, hi):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    left = np.where(lo > grid.nodes[0], grid.density_at(lo), 0.0)
    end = grid.nodes[-1]
    right_free = _is_free_end(grid, 1)
    right = np.where((hi < end) | right_free, grid.density_at(hi), 0.0)
    return left + right


def isoperimetric_constant(grid: WeightedGrid, region=None, N: float | None = None, n_scan: int = 400) -> dict:
    """Empirical C_Isop = inf Per(E) / m(E)^((N-1)/N) over intervals E inside ``region``.

    Single intervals anchored at either end of the region and all interior
    pairs of a ``n_scan``-point lattice are scanned; unions of two
    intervals on a coarser lattice give an upper bound.
    """
    N = check_dimension(N if N is not None else grid.N)
    a, b = (grid.nodes[0], grid.nodes[-1]) if region is None else (float(region[0]), float(region[1]))
    if not (grid.nodes[0] <= a < b <= grid.nodes[-1]):
        raise ValueError("region must be a non-empty sub-interval of the domain")
    expo = (N - 1) / N
    pts = np.linspace(a, b, int(n_scan))
    cum = np.asarray(grid.mass_below(pts))
    i, j = np.triu_indices(pts.size, k=1)
    mass = cum[j] - cum[i]
    per = _interval_perimeter(grid, pts[i], pts[j])
    ok = mass > 0
    if not np.any(ok):
        raise ValueError("region carries no mass to scan")
    ratio = np.where(ok, per / np.where(ok, mass, 1.0) ** expo, np.inf)
    best = int(np.argmin(ratio))

    coarse = np.linspace(a, b, 41)
    cc = np.asarray(grid.mass_below(coarse))
    ci, cj = np.triu_indices(coarse.size, k=1)
    m1 = cc[cj] - cc[ci]
    p1 = _interval_perimeter(grid, coarse[ci], coarse[cj])
    # disjoint pairs: the first interval ends strictly before the second starts
    first, second = np.meshgrid(np.arange(ci.size), np.arange(ci.size), indexing="ij")
    disjoint = cj[first] < ci[second]
    fm, sm = first[disjoint], second[disjoint]
    two_mass = m1[fm] + m1[sm]
    two_per = p1[fm] + p1[sm]
    pos = two_mass > 0
    two = float(np.min(two_per[pos] / two_mass[pos] ** expo)) if np.any(pos) else math.inf
    return {
        "C_isop": float(ratio[best]),
        "argmin": [float(pts[i[best]]), float(pts[j[best]])],
        "two_interval_upper_bound": min(two, float(ratio[best])),
        "region": [a, b],
        "N": N,
    }


def brunn_minkowski_check(grid: WeightedGrid, A0, A1, t: float, K: float, N: float, slack: float = 1e-9) -> dict:
    """m(A_t)^(1/N) >= sigma^(1-t)(theta) m(A0)^(1/N) + sigma^(t)(theta) m(A1)^(1/N) on intervals.

    theta is the least distance between the sets for K >= 0 and the largest for K < 0.
    """
    N = check_dimension(N, minimum=0.0)
    a0, b0 = sorted(map(float, A0))
    a1, b1 = sorted(map(float, A1))
    t = float(t)
    lo, hi = grid.nodes[0], grid.nodes[-1]
    if not (lo <= a0 and b0 <= hi and lo <= a1 and b1 <= hi):
        raise ValueError("A0 and A1 must lie in the domain")
    if K >= 0:
        theta = max(0.0, a1 - b0, a0 - b1)
    else:
        theta = max(b1 - a0, b0 - a1)
    at = ((1 - t) * a0 + t * a1, (1 - t) * b0 + t * b1)
    m0, m1, mt = grid.restrict_mass(a0, b0), grid.restrict_mass(a1, b1), grid.restrict_mass(*at)
    s0 = distortion_sigma(1 - t, K, N, theta)
    s1 = distortion_sigma(t, K, N, theta)
    report = {"A_t": list(at), "theta": theta, "m_A0": m0, "m_A1": m1, "m_At": mt, "sigma": [s0, s1]}
    if math.isinf(s0) or math.isinf(s1):
        report.update(passed=True, vacuous=True, status="vacuous (infinite coefficient)")
        return report
    lhs = mt ** (1 / N)
    rhs = s0 * m0 ** (1 / N) + s1 * m1 ** (1 / N)
    passed = lhs >= rhs - slack * max(1.0, rhs)
    report.update(lhs=lhs, rhs=rhs, passed=bool(passed), vacuous=False, status="pass" if passed else "fail")
    return report


def _trial_function(grid: WeightedGrid, x: float, r: float, rng: np.random.Generator) -> np.ndarray:
    lo, hi = max(grid.nodes[0], x - r), min(grid.nodes[-1], x + r)
    k = int(rng.integers(3, 12))
    knots = np.sort(rng.uniform(lo, hi, k))
    vals = rng.uniform(0.0, 1.0, k)
    xs = np.concatenate([[lo], knots, [hi]])
    ys = np.concatenate([[0.0 if lo > grid.nodes[0] else rng.uniform()], vals, [0.0]])
    return np.interp(grid.nodes, xs, ys, left=0.0, right=0.0)


def local_sobolev_check(
    grid: WeightedGrid,
    x: float,
    r: float,
    R: float,
    N: float,
    p: float = 2.0,
    trials: int = 500,
    seed=0,
    eps: float = 0.0,
    delta: float | None = None,
    functions=None,
) -> dict:
    """Check ||u||_{p*} <= (1 + eps) Eucl(N, p) theta_{N,R}(x)^(-1/N) ||u'||_p for u supported in B_r(x).

    Trials are seeded random tents plus truncated Bliss profiles; extra
    ``functions`` must also be supported in B_r(x).
    """
    N = check_dimension(N)
    p = check_exponent(p, N)
    r, R = check_positive(r, "r"), check_positive(R, "R")
    x = _check_center(grid, x)
    if not r < R:
        raise ValueError("need r < R")
    p_star = sobolev_conjugate(N, p)
    theta_R = ball_mass(grid, x, R) / (unit_ball_volume(N) * R**N)
    bound = (1 + eps) * eucl_constant(N, p) * theta_R ** (-1 / N)
    inside = np.abs(grid.nodes - x) < r

    candidates = []
    rng = np.random.default_rng(seed)
    for _ in range(int(trials)):
        candidates.append(_trial_function(grid, x, r, rng))
    dist = np.abs(grid.nodes - x)
    for b in (0.5, 1.0, 4.0, 16.0, 64.0) if x == grid.nodes[0] else ():
        v, _ = bliss_profile(dist, b / r ** (p / (p - 1)), N, p)
        v_r, _ = bliss_profile(np.array(r), b / r ** (p / (p - 1)), N, p)
        candidates.append(np.where(inside, np.maximum(v - v_r, 0.0), 0.0))
    for f in functions or ():
        vals = f.values if isinstance(f, SampledFunction) else np.asarray(f, dtype=float)
        if np.any(vals[~inside] != 0):
            raise ValueError("supplied function is not supported in B_r(x)")
        candidates.append(vals)

    worst, worst_ratio, violations = None, -math.inf, 0
    for vals in candidates:
        u = SampledFunction(grid, vals)
        energy = dirichlet_energy(u, p)
        if energy <= 0:
            continue
        ratio = lp_norm(u, p_star) / energy ** (1 / p)
        if ratio > bound * (1 + 1e-9):
            violations += 1
        if ratio > worst_ratio:
            worst_ratio, worst = ratio, vals
    regime = "inside theorem regime"
    if delta is not None and not r < delta * R:
        regime = "outside theorem regime"
    return {
        "passed": violations == 0,
        "violations": violations,
        "bound": bound,
        "theta_R": theta_R,
        "worst_ratio": worst_ratio,
        "tightness": worst_ratio / bound,
        "witness": None if worst is None else SampledFunction(grid, worst),
        "regime": regime,
        "trials": len(candidates),
    }
