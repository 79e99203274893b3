"""Sobolev quotients, the optimal tight-Sobolev constant and related checks.

The central object is the ratio

    Q_q(u) = (||u||_q^2 - ||u||_2^2) / ||u'||_2^2

on a probability grid, whose supremum over non-constant ``u`` is the
optimal constant ``A_q^opt`` of the tight inequality
``||u||_q^2 <= A ||u'||_2^2 + ||u||_2^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._optim import H1Preconditioner, run_restarts, stiffness_apply, tridiag_matvec
from ._validation import (
    DegenerateInputError,
    check_dimension,
    check_exponent,
    check_positive,
    check_unit_mass,
)
from .constants import eucl_constant, sobolev_conjugate
from .grids import SampledFunction, WeightedGrid, build_cone_model, dirichlet_energy, lp_norm
from .spectral import spectral_gap

__all__ = [
    "QuotientReport",
    "sobolev_quotient",
    "optimize_aopt",
    "SobolevConstantEstimator",
    "bliss_profile",
    "bliss_quotient",
    "TruncationError",
    "alpha_p_value",
    "avr_lower_bound_from_sobolev",
    "linearization_check",
    "tight_sobolev_check",
    "ledoux_dimension",
]

ENERGY_FLOOR = 1e-14


class TruncationError(ValueError):
    """The truncated cone model carries too little of the function's mass."""

    def __init__(self, message: str, suggested_R_max: float):
        super().__init__(message)
        self.suggested_R_max = suggested_R_max


@dataclass
class QuotientReport:
    value: float
    argmax: SampledFunction
    iterations: int
    grad_norm_final: float
    trace: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    restart_values: list = field(default_factory=list)
    best_restart: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "grad_norm_final": self.grad_norm_final,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "restart_values": self.restart_values,
            "best_restart": self.best_restart,
            "trace_length": len(self.trace),
        }


def ledoux_dimension(q: float) -> float:
    """N(q) = 2q / (q - 2), the dimension for which q is the critical exponent."""
    if q <= 2:
        raise ValueError("q must exceed 2")
    return 2 * q / (q - 2)


def _norm_gap(grid: WeightedGrid, values: np.ndarray, q: float, uq=None) -> float:
    """||u||_q^2 - ||u||_2^2 on a unit-mass grid, free of cancellation near constants."""
    if uq is None:
        uq = grid.interpolate(values)
    c = grid.integrate(uq)
    if abs(c) < 1e-3 * np.sqrt(grid.integrate(uq * uq)):
        return grid.integrate(np.abs(uq) ** q) ** (2 / q) - grid.integrate(uq * uq)
    g = uq / c - 1.0
    with np.errstate(divide="ignore"):
        log_abs = np.where(g > -1, np.log1p(np.maximum(g, -1 + 1e-300)), np.log(np.abs(1 + g)))
    i_q = grid.integrate(np.expm1(q * log_abs))
    j_2 = grid.integrate(2 * g + g * g)
    return c * c * (np.expm1((2 / q) * np.log1p(i_q)) - j_2)


def sobolev_quotient(u: SampledFunction, q: float) -> float:
    """Q_q(u) = (||u||_q^2 - ||u||_2^2) / ||u'||_2^2 on a probability grid."""
    check_unit_mass(u.grid)
    q = float(q)
    energy = dirichlet_energy(u, 2.0)
    if energy <= ENERGY_FLOOR * max(1.0, float(np.max(np.abs(u.values))) ** 2):
        raise DegenerateInputError("Sobolev quotient is undefined for (near-)constant u")
    if q == 2:
        return 0.0
    return _norm_gap(u.grid, u.values, q) / energy


class _QuotientProblem:
    def __init__(self, grid: WeightedGrid, q: float):
        self.grid = grid
        self.q = q
        self.pre = H1Preconditioner(grid)

    def value_and_grad(self, v: np.ndarray):
        g, q = self.grid, self.q
        uq = g.interpolate(v)
        lq = g.integrate(np.abs(uq) ** q)
        Ku, energy = stiffness_apply(g, v)
        Mu = tridiag_matvec(self.pre.md, self.pre.mo, v)
        if energy <= ENERGY_FLOOR * max(1.0, float(np.max(np.abs(v))) ** 2):
            return None, None
        num = _norm_gap(g, v, q, uq)
        val = num / energy
        grad_lq = 2 * lq ** (2 / q - 1) * g.integrate_against_hats(np.abs(uq) ** (q - 2) * uq)
        grad = (grad_lq - 2 * Mu - val * 2 * Ku) / energy
        return val, grad

    def normalize(self, v: np.ndarray) -> np.ndarray:
        return v / lp_norm(SampledFunction(self.grid, v), self.q)


STALL_WINDOW = 100


def _projected_ascent(
    problem, v0, max_iter, gtol, maximize=True, retract=None, project_grad=None, stall_rtol=1e-5
):
    """Armijo-backtracked gradient steps in the W^{1,2} geometry.

    Stops on a small gradient, a failed line search, or when the objective
    moved by less than ``stall_rtol`` (relative) over the last
    ``STALL_WINDOW`` steps.  Returns (v, value, trace, iterations,
    grad_norm, stop_reason).
    """
    retract = retract or problem.normalize
    sign = 1.0 if maximize else -1.0
    v = retract(v0)
    val, grad = problem.value_and_grad(v)
    if val is None:
        return v, None, [], 0, math.inf, "degenerate-start"
    trace = [val]
    step = 1.0
    first_try = True
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        if project_grad is not None:
            grad = project_grad(v, grad)
        direction = problem.pre.solve(grad)
        gnorm = math.sqrt(max(float(grad @ direction), 0.0))
        if gnorm <= gtol:
            return v, val, trace, it - 1, gnorm, "gradient-tolerance"
        slope = gnorm * gnorm
        if first_try:
            step = min(step * 2.0, 1e6)
        first_try = True
        while True:
            cand = retract(v + sign * step * direction)
            cval, cgrad = problem.value_and_grad(cand)
            if cval is not None and sign * (cval - val) >= 1e-4 * step * slope:
                break
            step *= 0.5
            first_try = False
            if step < 1e-14:
                return v, val, trace, it - 1, gnorm, "line-search-stalled"
        v, val, grad = cand, cval, cgrad
        trace.append(val)
        if len(trace) > STALL_WINDOW and abs(val - trace[-STALL_WINDOW - 1]) <= stall_rtol * max(abs(val), 1e-300):
            return v, val, trace, it, gnorm, "stagnated"
    return v, val, trace, max_iter, gnorm, "max-iter"


def _starting_points(grid: WeightedGrid, n_restarts: int, seed, first_mode=None):
    """Deterministic start shapes: constant-plus-eigenmode, constant-plus-Fourier, bumps."""
    seeds = np.random.SeedSequence(seed).spawn(n_restarts)
    x = grid.nodes
    L = x[-1] - x[0]
    s = (x - x[0]) / L
    starts = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        if i == 0 and first_mode is not None:
            starts.append(1.0 + 1e-3 * first_mode / np.max(np.abs(first_mode)))
            continue
        if i % 2 == 0:
            k = np.arange(1, 7)
            coef = rng.normal(size=k.size) / k
            f = np.cos(np.pi * np.outer(s, k)) @ coef
            f /= np.max(np.abs(f))
            amp = rng.uniform(0.02, 0.6)
            starts.append(1.0 + amp * f)
        else:
            centre = rng.choice([0.0, 1.0, rng.uniform()])
            width = rng.uniform(0.05, 0.4)
            starts.append(0.05 + np.exp(-(((s - centre) / width) ** 2)))
    return starts, seeds


def optimize_aopt(
    grid: WeightedGrid,
    q: float,
    n_restarts: int = 8,
    max_iter: int = 5000,
    gtol: float = 1e-7,
    seed=0,
    n_jobs: int | None = None,
) -> QuotientReport:
    """Lower estimate of A_q^opt by multi-start projected gradient ascent of Q_q."""
    check_unit_mass(grid)
    q = float(q)
    if q <= 2:
        raise ValueError(f"q must exceed 2, got {q}")
    if grid.N is not None and grid.N > 2 and q > 2 * grid.N / (grid.N - 2) * (1 + 1e-12):
        raise ValueError(f"q={q} exceeds the critical exponent 2N/(N-2) of the grid (N={grid.N})")
    problem = _QuotientProblem(grid, q)
    mode = spectral_gap(grid).eigenfunction.values
    starts, seeds = _starting_points(grid, n_restarts, seed, first_mode=mode)

    def one(i, _ss):
        v, val, trace, its, gnorm, why = _projected_ascent(problem, starts[i], max_iter, gtol)
        return v, val, trace, its, gnorm, why

    results = run_restarts(one, seeds, n_jobs)
    values = [r[1] if r[1] is not None else -math.inf for r in results]
    best = int(np.argmax(values))
    v, val, trace, its, gnorm, why = results[best]
    return QuotientReport(
        value=float(val),
        argmax=SampledFunction(grid, v),
        iterations=its,
        grad_norm_final=gnorm,
        trace=list(trace),
        converged=why == "gradient-tolerance",
        stop_reason=why,
        restart_values=[float(x) for x in values],
        best_restart=best,
    )


class SobolevConstantEstimator(BaseEstimator):
    """Estimator form of :func:`optimize_aopt`.

    ``fit(grid)`` sets ``value_`` (a lower estimate of A_q^opt),
    ``maximizer_`` and ``report_``.
    """

    def __init__(self, q=3.0, n_restarts=8, max_iter=5000, gtol=1e-7, seed=0, n_jobs=None):
        self.q = q
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.gtol = gtol
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, grid: WeightedGrid, y=None):
        rep = optimize_aopt(
            grid,
            self.q,
            n_restarts=self.n_restarts,
            max_iter=self.max_iter,
            gtol=self.gtol,
            seed=self.seed,
            n_jobs=self.n_jobs,
        )
        self.report_ = rep
        self.value_ = rep.value
        self.maximizer_ = rep.argmax
        return self

    def score(self, u: SampledFunction, y=None) -> float:
        """Sobolev quotient of ``u`` (uses the fitted exponent)."""
        check_is_fitted(self, "value_")
        return sobolev_quotient(u, self.q)


def bliss_profile(r, b: float, N: float, p: float):
    """v_b(r) = (1 + b r^(p/(p-1)))^((p-N)/p) and its derivative."""
    r = np.asarray(r, dtype=float)
    a = p / (p - 1)
    c = (p - N) / p
    base = 1.0 + b * r**a
    return base**c, c * base ** (c - 1) * b * a * r ** (a - 1)


def bliss_quotient(
    b: float,
    N: float,
    p: float,
    R_max: float = 200.0,
    n_nodes: int = 100_000,
    tail_tol: float = 1e-6,
) -> float:
    """||v_b||_{p*} / ||v_b'||_p on the cone model I_{0,N}.

    [0, R_max] is discretised; the remaining half-line tails of both
    integrals are added by adaptive quadrature of the closed-form profile.
    Raises :class:`TruncationError` when more than ``tail_tol`` of the
    L^{p*} mass lies beyond ``R_max``.
    """
    b = check_positive(b, "b")
    N = check_dimension(N)
    p = check_exponent(p, N)
    p_star = sobolev_conjugate(N, p)
    grid = build_cone_model(N, R_max, n_nodes)
    sigma = grid.weight_at_node[-1] / R_max ** (N - 1)

    def tail(power, which):
        val, _ = integrate.quad(
            lambda t: abs(bliss_profile(t, b, N, p)[which]) ** power * sigma * t ** (N - 1),
            R_max,
            np.inf,
            epsabs=0.0,
            epsrel=1e-10,
            limit=200,
        )
        return val

    v, _ = bliss_profile(grid.nodes, b, N, p)
    u = SampledFunction(grid, v)
    head_star = lp_norm(u, p_star) ** p_star
    tail_star = tail(p_star, 0)
    if tail_star > tail_tol * (head_star + tail_star):
        R = R_max
        while True:
            R *= 2
            t_R, _ = integrate.quad(
                lambda t: abs(bliss_profile(t, b, N, p)[0]) ** p_star * sigma * t ** (N - 1),
                R,
                np.inf,
                epsrel=1e-8,
            )
            if t_R <= tail_tol * (head_star + tail_star) or R > 1e12:
                break
        raise TruncationError(
            f"{tail_star / (head_star + tail_star):.2e} of the L^p* mass lies beyond R_max={R_max}",
            suggested_R_max=R,
        )
    energy = dirichlet_energy(u, p) + tail(p, 1)
    return (head_star + tail_star) ** (1 / p_star) / energy ** (1 / p)


def alpha_p_value(min_theta: float, N: float, p: float) -> float:
    """alpha_p = (Eucl(N, p) / min_theta^(1/N))^p; zero for collapsed spaces."""
    if math.isinf(min_theta):
        return 0.0
    min_theta = check_positive(min_theta, "min_theta")
    return (eucl_constant(N, p) / min_theta ** (1 / N)) ** p


def avr_lower_bound_from_sobolev(A: float, N: float, p: float) -> float:
    """(Eucl(N, p) / A)^N: volume-ratio floor forced by a (p*, p) Sobolev inequality."""
    A = check_positive(A, "A")
    return (eucl_constant(N, p) / A) ** N


def linearization_check(grid: WeightedGrid, f: SampledFunction, q: float, eps_list) -> dict:
    """Compare Q_q(1 + eps f) with (q - 2) ||f - mean||_2^2 / ||f'||_2^2.

    ``f`` must have zero mean.  The defect order is the least-squares slope
    of log|defect| against log(eps); ``predicted_order`` is min(1, q - 2).
    """
    check_unit_mass(grid)
    q = float(q)
    f_l2 = lp_norm(f, 2)
    energy = dirichlet_energy(f, 2)
    if energy <= ENERGY_FLOOR:
        raise DegenerateInputError("f is constant")
    mean = f.mean()
    if abs(mean) > 1e-10 * max(f_l2, 1.0):
        raise ValueError(f"f must have zero mean, got {mean:.3e}")
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if np.any(eps * f_l2 > 0.5):
        raise ValueError("||eps f||_2 must not exceed 1/2")
    centred = f.values - mean
    rhs = (q - 2) * lp_norm(f.with_values(centred), 2) ** 2 / energy
    lhs = np.array([sobolev_quotient(f.with_values(1.0 + e * f.values), q) for e in eps])
    defect = np.abs(lhs - rhs)
    order = math.nan
    ok = defect > 0
    if q != 2 and ok.sum() >= 2:
        order = float(np.polyfit(np.log(eps[ok]), np.log(defect[ok]), 1)[0])
    return {
        "eps": eps.tolist(),
        "lhs": lhs.tolist(),
        "rhs": float(rhs),
        "defect": defect.tolist(),
        "order": order,
        "predicted_order": min(1.0, q - 2),
        "max_defect_ratio": float(np.max(defect) / abs(rhs)) if rhs else float(np.max(defect)),
    }


def _random_smooth(grid: WeightedGrid, rng: np.random.Generator) -> np.ndarray:
    s = (grid.nodes - grid.nodes[0]) / grid.diameter
    k = np.arange(1, 9)
    coef = rng.normal(size=(2, k.size)) / k**rng.uniform(0.5, 2.0)
    f = np.cos(np.pi * np.outer(s, k)) @ coef[0] + np.sin(np.pi * np.outer(s, k)) @ coef[1]
    f /= np.max(np.abs(f))
    return rng.normal() + rng.uniform(0.01, 3.0) * f


def tight_sobolev_check(
    grid: WeightedGrid,
    q: float,
    A: float,
    trials: int = 1000,
    seed=0,
    rtol: float = 1e-9,
    optimizer_restarts: int = 4,
) -> dict:
    """Search for u violating ||u||_q^2 <= A ||u'||_2^2 + ||u||_2^2.

    Random smooth trials are followed by a short :func:`optimize_aopt`
    run, whose maximiser is the strongest candidate witness.
    """
    check_unit_mass(grid)
    rng = np.random.default_rng(seed)
    worst_ratio, worst = -math.inf, None
    candidates = [np.ones(grid.n_nodes)] + [_random_smooth(grid, rng) for _ in range(trials - 1)]
    violations = 0

    def excess(v):
        u = SampledFunction(grid, v)
        lhs = lp_norm(u, q) ** 2
        rhs = A * dirichlet_energy(u, 2) + lp_norm(u, 2) ** 2
        return lhs - rhs, lhs, rhs

    for v in candidates:
        d, lhs, rhs = excess(v)
        if d > rtol * max(rhs, 1e-300):
            violations += 1
        energy = dirichlet_energy(SampledFunction(grid, v), 2)
        if energy > ENERGY_FLOOR:
            ratio = sobolev_quotient(SampledFunction(grid, v), q)
            if ratio > worst_ratio:
                worst_ratio, worst = ratio, v
    if optimizer_restarts:
        rep = optimize_aopt(grid, q, n_restarts=optimizer_restarts, max_iter=2000, seed=seed)
        d, lhs, rhs = excess(rep.argmax.values)
        if d > rtol * max(rhs, 1e-300):
            violations += 1
        if rep.value > worst_ratio:
            worst_ratio, worst = rep.value, rep.argmax.values
    return {
        "passed": violations == 0,
        "violations": violations,
        "A": float(A),
        "worst_ratio": float(worst_ratio),
        "witness": None if worst is None else SampledFunction(grid, worst),
        "trials": int(trials),
    }
