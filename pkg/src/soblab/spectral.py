"""First non-trivial Neumann eigenvalue of a weighted interval.

Discretises -(h u')' = lambda h u with P1 elements.  Stiffness and mass
matrices are both symmetric tridiagonal; the eigenpair is bracketed from the
lumped-mass problem, located with Sturm (inertia) counts of the pencil and
polished by Rayleigh-quotient inverse iteration on the consistent pencil.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_unit_mass
from .grids import SampledFunction, WeightedGrid

__all__ = ["SpectralGapResult", "spectral_gap", "sturm_count", "SpectralGap"]


@dataclass(frozen=True)
class SpectralGapResult:
    lam: float
    eigenfunction: SampledFunction
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "residual": self.residual, "iterations": self.iterations}


def sturm_count(kd, ko, md, mo, sigma: float) -> int:
    """Number of eigenvalues of the pencil (K, M) strictly below ``sigma``.

    Counts negative pivots of the LDL^T factorisation of K - sigma M.
    """
    a = (kd - sigma * md).tolist()
    b2 = ((ko - sigma * mo) ** 2).tolist()
    tiny = 1e-300
    count = 0
    d = a[0]
    if d < 0:
        count += 1
    for i in range(1, len(a)):
        if d == 0.0:
            d = tiny
        d = a[i] - b2[i - 1] / d
        if d < 0:
            count += 1
    return count


def _banded(d, o):
    ab = np.zeros((3, d.size))
    ab[0, 1:] = o
    ab[1] = d
    ab[2, :-1] = o
    return ab


def _matvec(d, o, x):
    y = d * x
    y[:-1] += o * x[1:]
    y[1:] += o * x[:-1]
    return y


def _bisect(kd, ko, md, mo, lo, hi, index=1, rtol=1e-13):
    while hi - lo > rtol * max(abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        if sturm_count(kd, ko, md, mo, mid) > index:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def spectral_gap(grid: WeightedGrid, normalize: bool = False, max_iter: int = 30) -> SpectralGapResult:
    """Smallest non-zero Neumann eigenvalue of the weighted grid."""
    if normalize:
        grid = grid.normalized()
    check_unit_mass(grid)
    if not np.any(grid.cell_mass > 0):
        raise ValueError("degenerate weight: all cell masses vanish")
    kd, ko = grid.stiffness_bands()
    md, mo = grid.mass_bands()

    lumped = grid.lumped_mass
    if np.any(lumped <= 0):
        raise ValueError("every node must carry positive mass")
    s = 1.0 / np.sqrt(lumped)
    vals, vecs = linalg.eigh_tridiagonal(
        kd * s * s, ko * s[:-1] * s[1:], select="i", select_range=(0, 1)
    )
    u = vecs[:, 1] * s
    lam = float(vals[1])

    ones = np.ones(grid.n_nodes)
    m1 = _matvec(md, mo, ones)  # M 1; constants are the lambda = 0 mode

    def project(v):
        v = v - (v @ m1) / (ones @ m1) * ones
        return v / np.sqrt(v @ _matvec(md, mo, v))

    u = project(u)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        shift = lam
        rhs = _matvec(md, mo, u)
        try:
            x = linalg.solve_banded((1, 1), _banded(kd - shift * md, ko - shift * mo), rhs)
        except linalg.LinAlgError:
            x = linalg.solve_banded(
                (1, 1), _banded(kd - shift * (1 + 1e-12) * md, ko - shift * (1 + 1e-12) * mo), rhs
            )
        u_new = project(x)
        if u_new @ _matvec(md, mo, u) < 0:
            u_new = -u_new
        lam_new = float(u_new @ _matvec(kd, ko, u_new))
        done = abs(lam_new - lam) <= 1e-11 * abs(lam_new)
        u, lam = u_new, lam_new
        if done:
            break

    delta = 1e-9 * lam
    below = sturm_count(kd, ko, md, mo, lam - delta)
    above = sturm_count(kd, ko, md, mo, lam + delta)
    if not (below == 1 and above >= 2):
        # inverse iteration latched onto the wrong mode: fall back to bisection
        hi = max(lam, 1.0)
        while sturm_count(kd, ko, md, mo, hi) < 2:
            hi *= 2
        lam = _bisect(kd, ko, md, mo, 0.0, hi)
        rhs = _matvec(md, mo, project(np.cos(np.linspace(0, np.pi, grid.n_nodes))))
        for _ in range(5):
            u = project(linalg.solve_banded((1, 1), _banded(kd - lam * md, ko - lam * mo), rhs))
            rhs = _matvec(md, mo, u)
        lam = float(u @ _matvec(kd, ko, u))

    if u[0] < 0:
        u = -u
    residual = float(np.linalg.norm(_matvec(kd, ko, u) - lam * _matvec(md, mo, u)))
    return SpectralGapResult(lam, SampledFunction(grid, u), residual, iterations)


class SpectralGap(BaseEstimator):
    """Estimator wrapper around :func:`spectral_gap`.

    Attributes after ``fit``: ``lambda_``, ``eigenfunction_``, ``residual_``.
    """

    def __init__(self, normalize: bool = False, max_iter: int = 30):
        self.normalize = normalize
        self.max_iter = max_iter

    def fit(self, grid: WeightedGrid, y=None):
        res = spectral_gap(grid, normalize=self.normalize, max_iter=self.max_iter)
        self.lambda_ = res.lam
        self.eigenfunction_ = res.eigenfunction
        self.residual_ = res.residual
        self.n_iter_ = res.iterations
        return self

    def transform(self, grid=None):
        check_is_fitted(self, "lambda_")
        return self.eigenfunction_.values
