"""Synthetic sequences shared by the concentration tests and the acceptance suite."""

import numpy as np

from soblab.constants import critical_exponent


def constant_limit(grid, n_terms=8):
    return [grid.evaluate(lambda t, k=k: 1 + 0.5**k * np.cos(t)) for k in range(n_terms)]


def nonconstant_limit(grid, n_terms=8):
    return [grid.evaluate(lambda t, k=k: 2 + np.cos(t) + 0.5**k * np.cos(2 * t)) for k in range(n_terms)]


def scaling_bumps(grid, N, n_terms=8, ratio=0.45, eps0=0.5):
    """Bubbles (1 + (t/eps)^2)^(-(N-2)/2) concentrating at the tip t = 0."""
    return [
        grid.evaluate(lambda t, e=eps0 * ratio**k: (1 + (t / e) ** 2) ** (-(N - 2) / 2))
        for k in range(n_terms)
    ]


def oscillating(grid, n_terms=8):
    return [grid.evaluate(lambda t, k=k: 1 + 0.5 * np.cos((1 + k % 2) * t)) for k in range(n_terms)]


def sliding_bump(grid, q, n_terms=8):
    """u_k = f + b_k with b_k a unit-L^q bump sliding to the right end and narrowing.

    Returns (u_seq, v_seq, f); v_k = f for every k.
    """
    f = grid.evaluate(lambda t: 1 + 0.5 * np.cos(np.pi * t))
    L = grid.nodes[-1]
    us = []
    for k in range(n_terms):
        eps = 0.2 * 0.5**k
        c = L - 2 * eps
        b = np.maximum(0.0, 1 - np.abs(grid.nodes - c) / eps) * eps ** (-1 / q)
        us.append(f.with_values(f.values + b))
    return us, [f] * n_terms, f


def critical_q(N):
    return critical_exponent(N)


def random_piecewise_linear(grid, seed, knots=12):
    """Seeded non-negative piecewise-linear function with some zero stretches."""
    rng = np.random.default_rng(seed)
    xk = np.linspace(grid.nodes[0], grid.nodes[-1], knots)
    yk = rng.uniform(0, 1, knots)
    yk[rng.uniform(size=knots) < 0.2] = 0.0
    yk[rng.integers(knots)] = rng.uniform(0.5, 2)
    return grid.function(np.interp(grid.nodes, xk, yk))
