"""Shared machinery for the H^1-preconditioned projected gradient methods."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg


def worker_count(n_jobs: int | None = None) -> int:
    if n_jobs is not None and n_jobs > 0:
        return int(n_jobs)
    env = os.environ.get("SOBLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run_restarts(fn, seeds, n_jobs: int | None = None):
    """Apply ``fn(index, seed_sequence)`` to every restart, in index order."""
    workers = min(worker_count(n_jobs), len(seeds))
    if workers <= 1:
        return [fn(i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(seeds)), seeds))


class H1Preconditioner:
    """Solves (K + M) g = r: the Riesz representative of a gradient in W^{1,2}."""

    def __init__(self, grid):
        kd, ko = grid.stiffness_bands()
        md, mo = grid.mass_bands()
        d, o = kd + md, ko + mo
        ab = np.zeros((2, d.size))
        ab[0, 1:] = o
        ab[1] = d
        self._chol = linalg.cholesky_banded(ab, lower=False)
        self.kd, self.ko, self.md, self.mo = kd, ko, md, mo

    def solve(self, r: np.ndarray) -> np.ndarray:
        return linalg.cho_solve_banded((self._chol, False), r)


def stiffness_apply(grid, v):
    """(K v, v.K v) from nodal differences, exact for constants."""
    c = grid.cell_mass / grid.widths**2
    flux = c * np.diff(v)
    Kv = np.zeros_like(v, dtype=float)
    Kv[:-1] -= flux
    Kv[1:] += flux
    return Kv, float(np.sum(flux * np.diff(v)))


def tridiag_matvec(d, o, x):
    y = d * x
    y[:-1] += o * x[1:]
    y[1:] += o * x[:-1]
    return y
