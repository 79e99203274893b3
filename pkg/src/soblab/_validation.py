"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import math
import numbers

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when a quotient is undefined, e.g. for constant functions."""


def check_dimension(N, minimum: float = 1.0, strict: bool = True) -> float:
    if isinstance(N, bool) or not isinstance(N, numbers.Real):
        raise TypeError(f"dimension must be a real number, got {type(N).__name__}")
    N = float(N)
    if not math.isfinite(N):
        raise ValueError("dimension must be finite")
    if (strict and N <= minimum) or (not strict and N < minimum):
        op = ">" if strict else ">="
        raise ValueError(f"dimension must satisfy N {op} {minimum}, got {N}")
    return N


def check_exponent(p, N: float) -> float:
    p = float(p)
    if not 1.0 < p < N:
        raise ValueError(f"exponent must satisfy 1 < p < N={N}, got {p}")
    return p


def check_positive(x, name: str) -> float:
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"{name} must be finite and > 0, got {x}")
    return x


def check_values(values, n: int | None = None, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_non_negative(values, name: str = "u") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative values (min {arr.min():.3g}); rearrangement needs u >= 0")
    return arr


def check_unit_mass(grid, tol: float = 1e-8) -> None:
    if abs(grid.total_mass - 1.0) > tol:
        raise ValueError(f"grid must carry a probability measure, total mass is {grid.total_mass!r}")


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
