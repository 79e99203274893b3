"""Diagnostics for Sobolev-extremising sequences on a fixed grid.

A normalised sequence either converges to a non-constant function, flattens
to a constant, or concentrates its critical mass at a point.
:func:`classify_sequence` decides between these from trend tests and
reports ``"inconclusive"`` when no case is supported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_dimension, check_exponent
from .constants import eucl_constant
from .grids import SampledFunction, WeightedGrid, dirichlet_energy, lp_norm

__all__ = [
    "BALL_FRACTION",
    "DECAY_FACTOR",
    "ENERGY_FLOOR",
    "SequenceDiagnostics",
    "classify_sequence",
    "brezis_lieb_check",
    "concentration_density_bound",
]

BALL_FRACTION = 0.9
DECAY_FACTOR = 0.1
ENERGY_FLOOR = 1e-8


@dataclass
class SequenceDiagnostics:
    classification: str
    location: float | None = None
    mass_in_shrinking_balls: list = field(default_factory=list)
    ball_radii: list = field(default_factory=list)
    l2_norms: np.ndarray = None
    lq_norms: np.ndarray = None
    energy: np.ndarray = None
    quotient_trace: np.ndarray = None
    cauchy_gaps: np.ndarray = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "classification": self.classification,
            "location": self.location,
            "mass_in_shrinking_balls": arr(self.mass_in_shrinking_balls),
            "ball_radii": arr(self.ball_radii),
            "l2_norms": arr(self.l2_norms),
            "lq_norms": arr(self.lq_norms),
            "energy": arr(self.energy),
            "quotient_trace": arr(self.quotient_trace),
            "cauchy_gaps": arr(self.cauchy_gaps),
            "notes": list(self.notes),
        }


def _running_mode(grid: WeightedGrid, values: np.ndarray, q: float) -> float:
    cell = grid.quad_weights * np.abs(grid.interpolate(values)) ** q
    mass = cell.sum(axis=1)
    smooth = np.convolve(mass, np.ones(3), mode="same")
    i = int(np.argmax(smooth))
    return float(0.5 * (grid.nodes[i] + grid.nodes[i + 1]))


def _ball_fraction(grid: WeightedGrid, values: np.ndarray, q: float, y: float, r: float) -> float:
    at_q = np.abs(grid.interpolate(values)) ** q
    total = grid.integrate(at_q)
    inside = np.abs(grid.quad_points - y) < r
    return float(np.sum(grid.quad_weights * at_q * inside) / total)


def _radius_for_fraction(grid: WeightedGrid, values: np.ndarray, q: float, y: float, frac: float) -> float:
    at_q = np.abs(grid.interpolate(values)) ** q
    w = (grid.quad_weights * at_q).ravel()
    d = np.abs(grid.quad_points.ravel() - y)
    order = np.argsort(d)
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, frac * cum[-1]))
    return float(d[order][min(k, d.size - 1)])


def _tail_slope(values: np.ndarray) -> float:
    """Least-squares slope of log(values) against the index, over the tail half."""
    v = np.asarray(values, dtype=float)
    tail = v[v.size // 2 :]
    if tail.size < 2 or np.any(tail <= 0):
        return -math.inf if np.any(tail <= 0) else 0.0
    return float(np.polyfit(np.arange(tail.size), np.log(tail), 1)[0])


def classify_sequence(
    grid: WeightedGrid,
    seq,
    q: float,
    ball_fraction: float = BALL_FRACTION,
    decay_factor: float = DECAY_FACTOR,
    energy_floor: float = ENERGY_FLOOR,
    margin: float = 0.05,
) -> SequenceDiagnostics:
    """Place a sequence into the concentration-compactness trichotomy.

    Each term is rescaled to unit L^q norm first.
    """
    seq = list(seq)
    if len(seq) < 4:
        raise ValueError("classification needs at least 4 terms")
    q = float(q)
    vals = []
    for u in seq:
        v = u.values if isinstance(u, SampledFunction) else np.asarray(u, dtype=float)
        if isinstance(u, SampledFunction) and u.grid is not grid:
            raise ValueError("all terms must live on the given grid")
        nq = lp_norm(SampledFunction(grid, v), q)
        if nq == 0:
            raise ValueError("a term of the sequence vanishes identically")
        if abs(nq - 1) > 1e-10:
            if not vals:
                warnings.warn("terms rescaled to unit L^q norm", stacklevel=2)
        vals.append(v / nq)
    fns = [SampledFunction(grid, v) for v in vals]
    l2 = np.array([lp_norm(f, 2) for f in fns])
    lq = np.array([lp_norm(f, q) for f in fns])
    energy = np.array([dirichlet_energy(f, 2) for f in fns])
    quot = np.where(energy > 0, lq / np.sqrt(np.where(energy > 0, energy, 1.0)), np.inf)
    gaps = np.array([lp_norm(SampledFunction(grid, vals[k + 1] - vals[k]), 2) for k in range(len(vals) - 1)])
    diag = SequenceDiagnostics(
        classification="inconclusive",
        l2_norms=l2,
        lq_norms=lq,
        energy=energy,
        quotient_trace=quot,
        cauchy_gaps=gaps,
    )
    n = len(vals)
    tail = list(range(n // 2, n))

    # concentration: L^2 mass disappears while the L^q mass collects in shrinking balls
    if l2[-1] < decay_factor * l2[0] and _tail_slope(l2) < -margin:
        modes = [_running_mode(grid, vals[k], q) for k in tail]
        r0 = _radius_for_fraction(grid, vals[tail[0]], q, modes[-1], ball_fraction)
        radii = [max(2 * r0 * 0.5**j, 0.0) for j in range(len(tail))]
        fracs = [_ball_fraction(grid, vals[k], q, modes[-1], radii[j]) for j, k in enumerate(tail)]
        drift = max(abs(m - modes[-1]) for m in modes[-2:])
        diag.mass_in_shrinking_balls = fracs
        diag.ball_radii = radii
        if min(fracs) >= ball_fraction and drift <= radii[-1]:
            diag.classification = "Concentration"
            diag.location = modes[-1]
            return diag
        diag.notes.append("L^2 norms decay but the L^q mass does not collect in shrinking balls")

    cauchy = gaps[-1] <= decay_factor * max(gaps[0], 1e-300) or gaps[-1] <= 1e-12 * l2[-1]
    if l2[-1] > 0.5 * l2[0] and cauchy:
        e_tail = energy[tail[0]]
        if energy[-1] < energy_floor or (energy[-1] <= decay_factor * e_tail and _tail_slope(energy) < -margin):
            diag.classification = "ConstantLimit"
            return diag
        if energy[-1] >= energy_floor and energy[-1] >= 0.5 * e_tail:
            diag.classification = "NonConstantLimit"
            return diag
    diag.notes.append("no trend supports any of the three cases")
    return diag


def _distances(grid, seq, target, p):
    return np.array([lp_norm(SampledFunction(grid, np.asarray(s) - target), p) for s in seq])


def _values(seq):
    return [s.values if isinstance(s, SampledFunction) else np.asarray(s, dtype=float) for s in seq]


def brezis_lieb_check(grid: WeightedGrid, u_seq, v_seq, q: float, q_prime: float, u_inf=None) -> dict:
    """defect_k = | int|u_k|^q - int|u_k - v_k|^q - int|u_inf|^q |.

    ``u_inf`` defaults to the last term of ``v_seq``.  Preconditions are
    checked as trends: ||u_k - u_inf||_{q'} and ||v_k - u_inf||_{q'}, _q
    must shrink.
    """
    q, qp = float(q), float(q_prime)
    if not 1 < qp < q:
        raise ValueError("need 1 < q' < q")
    us, vs = _values(u_seq), _values(v_seq)
    if len(us) != len(vs) or len(us) < 2:
        raise ValueError("u_seq and v_seq need equal length >= 2")
    target = vs[-1] if u_inf is None else np.asarray(getattr(u_inf, "values", u_inf), dtype=float)

    def decreasing(d):
        return d[-1] <= 1e-12 or d[-1] <= 0.5 * d[0]

    du = _distances(grid, us, target, qp)
    dvp = _distances(grid, vs, target, qp)
    dvq = _distances(grid, vs, target, q)
    uq = np.array([lp_norm(SampledFunction(grid, u), q) for u in us])
    problems = []
    if not decreasing(du):
        problems.append("u_k does not converge to u_inf in L^q'")
    if not decreasing(dvp):
        problems.append("v_k does not converge to u_inf in L^q'")
    if not decreasing(dvq):
        problems.append("v_k does not converge to u_inf in L^q")
    if uq.max() > 1e3 * max(uq[0], 1e-300):
        problems.append("u_k is not bounded in L^q")
    if problems:
        raise ValueError("; ".join(problems))
    lim = lp_norm(SampledFunction(grid, target), q) ** q
    defect = np.array(
        [abs(lp_norm(SampledFunction(grid, u), q) ** q - lp_norm(SampledFunction(grid, u - v), q) ** q - lim) for u, v in zip(us, vs)]
    )
    tail = defect[len(defect) // 2 :]
    monotone = bool(np.all(np.diff(defect) <= 1e-14 * max(defect.max(), 1.0)))
    return {
        "defect": defect.tolist(),
        "max_tail_defect": float(tail.max()),
        "monotone": monotone,
        "decaying": bool(defect[-1] <= 1e-12 or defect[-1] < defect[0]),
        "limit_mass": lim,
    }


def concentration_density_bound(theta: float, limsup_A: float, N: float, p: float, rtol: float = 1e-9) -> dict:
    """theta_N(y0) <= Eucl(N, p)^N (limsup A_n)^(-N/p) at a concentration point."""
    N = check_dimension(N)
    p = check_exponent(p, N)
    A = float(limsup_A)
    if A < 0:
        raise ValueError("limsup_A must be non-negative")
    if math.isinf(theta):
        passed = A <= rtol
        return {"passed": passed, "bound": math.inf if A == 0 else eucl_constant(N, p) ** N * A ** (-N / p), "saturation": math.inf}
    bound = math.inf if A == 0 else eucl_constant(N, p) ** N * A ** (-N / p)
    passed = theta <= bound * (1 + rtol)
    return {"passed": bool(passed), "bound": bound, "saturation": theta / bound if bound > 0 else math.inf}
