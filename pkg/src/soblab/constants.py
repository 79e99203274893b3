"""Closed-form constants: ball/sphere volumes, sharp Euclidean Sobolev
constants, comparison volumes and distortion coefficients.

All functions are pure and accept non-integer dimensions ``N``.
"""

from __future__ import annotations

import math

from scipy import integrate

from ._validation import check_dimension, check_exponent

__all__ = [
    "gamma",
    "unit_ball_volume",
    "unit_sphere_volume",
    "eucl_constant",
    "eucl_constant_2",
    "sobolev_conjugate",
    "critical_exponent",
    "comparison_volume",
    "bonnet_myers_radius",
    "distortion_sigma",
    "distortion_tau",
]


def gamma(x: float) -> float:
    """Euler Gamma function on the positive half-line."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"gamma is only defined here for finite x > 0, got {x!r}")
    return math.gamma(x)


def unit_ball_volume(N: float) -> float:
    """omega_N = pi^(N/2) / Gamma(N/2 + 1)."""
    N = check_dimension(N, minimum=1.0, strict=False)
    return math.pi ** (N / 2) / gamma(N / 2 + 1)


def unit_sphere_volume(N: float) -> float:
    """sigma_{N-1} = N * omega_N, the area of the unit sphere bounding the N-ball."""
    N = check_dimension(N, minimum=1.0, strict=False)
    return N * unit_ball_volume(N)


def sobolev_conjugate(N: float, p: float) -> float:
    """p* = pN / (N - p)."""
    N = check_dimension(N)
    p = check_exponent(p, N)
    return p * N / (N - p)


def critical_exponent(N: float) -> float:
    """2* = 2N / (N - 2), defined for N > 2."""
    N = check_dimension(N, minimum=2.0)
    return 2 * N / (N - 2)


def eucl_constant(N: float, p: float) -> float:
    """Sharp constant in ||u||_{p*} <= Eucl(N, p) ||Du||_p (Aubin-Talenti)."""
    N = check_dimension(N)
    p = check_exponent(p, N)
    lead = ((N * (p - 1)) / (N - p)) ** ((p - 1) / p) / N
    # log-space keeps Gamma(N + 1) from overflowing for large N
    log_ratio = (
        math.lgamma(N + 1)
        - math.log(N * unit_ball_volume(N))
        - math.lgamma(N / p)
        - math.lgamma(N + 1 - N / p)
    )
    return lead * math.exp(log_ratio / N)


def eucl_constant_2(N: float) -> float:
    """Eucl(N, 2) through the sphere volume: (4 / (N (N-2) sigma_N^(2/N)))^(1/2)."""
    N = check_dimension(N, minimum=2.0)
    sigma_N = unit_sphere_volume(N + 1)
    return math.sqrt(4.0 / (N * (N - 2) * sigma_N ** (2.0 / N)))


def bonnet_myers_radius(K: float, N: float) -> float:
    """pi * sqrt((N - 1) / K) for K > 0, infinity otherwise."""
    if K <= 0:
        return math.inf
    return math.pi * math.sqrt((N - 1) / K)


def _comparison_profile(K: float, N: float):
    # normalised so that s(t) ~ t at the origin, hence v_{K,N}(r) ~ omega_N r^N
    if K == 0:
        return lambda t: t
    scale = math.sqrt(abs(K) / (N - 1))
    if K > 0:
        return lambda t: math.sin(t * scale) / scale
    return lambda t: math.sinh(t * scale) / scale


def comparison_volume(K: float, N: float, r: float) -> float:
    """Volume v_{K,N}(r) of the radius-r ball in the (K, N) comparison model.

    Evaluated by adaptive Gauss-Kronrod quadrature (abs 1e-12, rel 1e-10);
    the K = 0 case is returned in closed form.
    """
    N = check_dimension(N, minimum=1.0, strict=False)
    r = float(r)
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    if r > bonnet_myers_radius(K, N) * (1 + 1e-12):
        raise ValueError(
            f"r={r} exceeds the Bonnet-Myers radius {bonnet_myers_radius(K, N)} for K={K}, N={N}"
        )
    if r == 0:
        return 0.0
    if K == 0 or N == 1:
        # N = 1: |s|^0 = 1 for every K
        return unit_ball_volume(N) * r**N if K == 0 else unit_sphere_volume(N) * r
    s = _comparison_profile(K, N)
    value, _ = integrate.quad(
        lambda t: abs(s(t)) ** (N - 1), 0.0, r, epsabs=1e-12, epsrel=1e-10, limit=200
    )
    return unit_sphere_volume(N) * value


def distortion_sigma(t: float, K: float, N: float, theta: float) -> float:
    """Distortion coefficient sigma^{(t)}_{K,N}(theta).

    Returns ``math.inf`` on the branch K theta^2 >= N pi^2.
    """
    t, theta = float(t), float(theta)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if theta < 0 or N < 0:
        raise ValueError("theta and N must be non-negative")
    k_theta2 = K * theta * theta
    if k_theta2 >= N * math.pi**2:
        return math.inf
    if k_theta2 == 0 or (k_theta2 < 0 and N == 0):
        return t
    if k_theta2 > 0:
        a = theta * math.sqrt(K / N)
        return math.sin(t * a) / math.sin(a)
    a = theta * math.sqrt(-K / N)
    return math.sinh(t * a) / math.sinh(a)


def distortion_tau(t: float, K: float, N: float, theta: float) -> float:
    """tau^{(t)}_{K,N}(theta) = t^(1/N) sigma^{(t)}_{K,N-1}(theta)^(1 - 1/N)."""
    if N < 1:
        raise ValueError(f"tau needs N >= 1, got {N}")
    if N == 1:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        return float(t) if K <= 0 else math.inf
    s = distortion_sigma(t, K, N - 1, theta)
    if math.isinf(s):
        return math.inf
    return float(t) ** (1.0 / N) * s ** (1.0 - 1.0 / N)
