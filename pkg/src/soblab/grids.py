"""Weighted one-dimensional grids and piecewise-linear functions on them.

A :class:`WeightedGrid` discretises an interval carrying the measure
``h(t) dt``.  Functions are continuous and piecewise linear between nodes;
every integral against the measure is computed with a fixed per-cell
quadrature rule (5-point Gauss-Legendre, or Gauss-Jacobi in cells touching
an endpoint where the density vanishes like a power), so discrete
Sobolev quotients never exceed their continuum counterparts by more than
the quadrature error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from ._validation import check_dimension, check_positive, check_values
from .constants import unit_ball_volume

__all__ = [
    "WeightedGrid",
    "SampledFunction",
    "build_sphere_model",
    "build_cone_model",
    "build_custom_grid",
    "lp_norm",
    "dirichlet_energy",
    "read_function",
    "write_function",
]

QUAD_ORDER = 5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(QUAD_ORDER)
_GL_S = (1 + _GL_X) / 2
# antiderivative coefficients (monomial, ascending, no constant) of the
# Lagrange basis on the Gauss nodes mapped to [0, 1]
_LAGRANGE_INT = np.linalg.inv(np.vander(_GL_S, increasing=True)) / np.arange(1, QUAD_ORDER + 1)[:, None]


@dataclass(frozen=True, eq=False)
class WeightedGrid:
    """Discretised weighted interval.

    ``quad_points``/``quad_weights`` have shape ``(n - 1, QUAD_ORDER)`` and
    integrate against ``h(t) dt`` cell by cell; ``cell_mass`` is their row sum.
    """

    nodes: np.ndarray
    weight_at_node: np.ndarray
    cell_mass: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    kind: str = "custom"
    N: float | None = None
    R_max: float | None = None
    unbounded: bool = False
    endpoint_powers: tuple = (0.0, 0.0)
    density: Callable | None = field(default=None, repr=False)
    _bary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("nodes", "weight_at_node", "cell_mass", "quad_points", "quad_weights"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        nodes = self.nodes
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a grid needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(np.asarray(self.cell_mass) < 0) or np.any(np.asarray(self.weight_at_node) < 0):
            raise ValueError("weights and cell masses must be non-negative")
        h = np.diff(nodes)
        bary = (self.quad_points - nodes[:-1, None]) / h[:, None]
        object.__setattr__(self, "_bary", bary)
        for name in ("nodes", "weight_at_node", "cell_mass", "quad_points", "quad_weights", "_bary"):
            getattr(self, name).flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def total_mass(self) -> float:
        return float(self.cell_mass.sum())

    @property
    def diameter(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    @property
    def cumulative_mass(self) -> np.ndarray:
        """m([x_0, x_i]) at every node."""
        return np.concatenate([[0.0], np.cumsum(self.cell_mass)])

    @property
    def lumped_mass(self) -> np.ndarray:
        """Integral of each hat function against the measure."""
        w = self.quad_weights
        lam = self._bary
        out = np.zeros(self.n_nodes)
        out[:-1] += (w * (1 - lam)).sum(axis=1)
        out[1:] += (w * lam).sum(axis=1)
        return out

    def interpolate(self, values) -> np.ndarray:
        """Values of the piecewise-linear interpolant at the quadrature points."""
        v = np.asarray(values, dtype=float)
        return v[:-1, None] * (1 - self._bary) + v[1:, None] * self._bary

    def integrate(self, at_quad: np.ndarray) -> float:
        return float(np.sum(self.quad_weights * at_quad))

    def integrate_against_hats(self, at_quad: np.ndarray) -> np.ndarray:
        """Vector of integrals of ``g * phi_i`` for every hat function phi_i."""
        wg = self.quad_weights * at_quad
        out = np.zeros(self.n_nodes)
        out[:-1] += (wg * (1 - self._bary)).sum(axis=1)
        out[1:] += (wg * self._bary).sum(axis=1)
        return out

    def mass_bands(self, density_at_quad: np.ndarray | None = None):
        """Diagonal and off-diagonal of the consistent mass matrix.

        With ``density_at_quad`` given, the matrix of ``int S phi_i phi_j dm``.
        """
        w = self.quad_weights if density_at_quad is None else self.quad_weights * density_at_quad
        lam = self._bary
        diag = np.zeros(self.n_nodes)
        diag[:-1] += (w * (1 - lam) ** 2).sum(axis=1)
        diag[1:] += (w * lam**2).sum(axis=1)
        off = (w * lam * (1 - lam)).sum(axis=1)
        return diag, off

    def stiffness_bands(self):
        """Diagonal and off-diagonal of ``int phi_i' phi_j' dm``."""
        c = self.cell_mass / self.widths**2
        diag = np.zeros(self.n_nodes)
        diag[:-1] += c
        diag[1:] += c
        return diag, -c

    def density_at(self, x):
        """The density h(x); nodal samples are interpolated when no callable is stored."""
        x = np.asarray(x, dtype=float)
        if self.density is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.asarray(self.density(x), dtype=float)
        return np.interp(x, self.nodes, self.weight_at_node)

    def restrict_mass(self, a: float, b: float) -> float:
        """Measure of [a, b]."""
        return float(self.mass_below(b) - self.mass_below(a))

    def partial_mass(self, cells, s):
        """m([x_i, x_i + s h_i]) for cell indices ``cells`` and fractions ``s``.

        Interior cells integrate the degree-4 interpolant of the density
        through the Gauss nodes; end cells with a power-law density use
        the leading power.
        """
        cells = np.asarray(cells, dtype=int)
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        dens = self.quad_weights[cells] / (_GL_W / 2)
        powers = s[..., None] ** np.arange(1, QUAD_ORDER + 1)
        out = ((powers @ _LAGRANGE_INT) * dens).sum(axis=-1)
        p0, p1 = self.endpoint_powers
        m = self.cell_mass[cells]
        if p0 > 0:
            out = np.where(cells == 0, m * s ** (p0 + 1), out)
        if p1 > 0:
            out = np.where(cells == self.n_nodes - 2, m * (1 - (1 - s) ** (p1 + 1)), out)
        return out

    def mass_below(self, x):
        """m([x_0, x])."""
        x = np.clip(np.asarray(x, dtype=float), self.nodes[0], self.nodes[-1])
        cells = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.n_nodes - 2)
        frac = (x - self.nodes[cells]) / self.widths[cells]
        return self.cumulative_mass[cells] + self.partial_mass(cells, frac)

    def normalized(self) -> "WeightedGrid":
        total = self.total_mass
        if total <= 0:
            raise ValueError("cannot normalise a grid of zero mass")
        dens = None if self.density is None else (lambda t, f=self.density: f(t) / total)
        return WeightedGrid(
            nodes=self.nodes.copy(),
            weight_at_node=self.weight_at_node / total,
            cell_mass=self.cell_mass / total,
            quad_points=self.quad_points.copy(),
            quad_weights=self.quad_weights / total,
            kind=self.kind,
            N=self.N,
            R_max=self.R_max,
            unbounded=self.unbounded,
            endpoint_powers=self.endpoint_powers,
            density=dens,
        )

    def function(self, values) -> "SampledFunction":
        return SampledFunction(self, values)

    def evaluate(self, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledFunction":
        return SampledFunction(self, fn(self.nodes))


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Nodal values of a continuous piecewise-linear function on a grid."""

    grid: WeightedGrid
    values: np.ndarray

    def __post_init__(self):
        v = check_values(self.values, self.grid.n_nodes)
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "SampledFunction":
        return SampledFunction(self.grid, values)

    def lp_norm(self, p: float) -> float:
        return lp_norm(self, p)

    def dirichlet_energy(self, p: float = 2.0) -> float:
        return dirichlet_energy(self, p)

    def mean(self) -> float:
        g = self.grid
        return g.integrate(g.interpolate(self.values)) / g.total_mass

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, SampledFunction):
            if other.grid is not self.grid:
                raise ValueError("functions live on different grids")
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + float(other))


def lp_norm(u: SampledFunction, p: float) -> float:
    """(int |u|^p dm)^(1/p), with the integral taken over the piecewise-linear u."""
    p = float(p)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    g = u.grid
    return g.integrate(np.abs(g.interpolate(u.values)) ** p) ** (1.0 / p)


def dirichlet_energy(u: SampledFunction, p: float = 2.0) -> float:
    """Sum over cells of |du/dx|^p times the cell mass."""
    p = float(p)
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    g = u.grid
    slope = np.diff(u.values) / g.widths
    return float(np.sum(np.abs(slope) ** p * g.cell_mass))


def _cell_rule(a: float, b: float, density, power_left: float, power_right: float):
    """Quadrature nodes and weights for int_a^b f(t) density(t) dt."""
    h = b - a
    if power_left > 0:
        x, w = special.roots_jacobi(QUAD_ORDER, 0.0, power_left)
        t = a + h * (1 + x) / 2
        smooth = density(t) / (t - a) ** power_left
        return t, (h / 2) ** (power_left + 1) * w * smooth
    if power_right > 0:
        x, w = special.roots_jacobi(QUAD_ORDER, power_right, 0.0)
        t = a + h * (1 + x) / 2
        smooth = density(t) / (b - t) ** power_right
        return t, (h / 2) ** (power_right + 1) * w * smooth
    t = a + h * (1 + _GL_X) / 2
    return t, (h / 2) * _GL_W * density(t)


def _assemble(nodes: np.ndarray, density, endpoint_powers=(0.0, 0.0)):
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    pts = a[:, None] + h[:, None] * (1 + _GL_X[None, :]) / 2
    wts = (h[:, None] / 2) * _GL_W[None, :] * density(pts)
    p0, p1 = endpoint_powers
    if p0 > 0:
        pts[0], wts[0] = _cell_rule(a[0], b[0], density, p0, 0.0)
    if p1 > 0:
        pts[-1], wts[-1] = _cell_rule(a[-1], b[-1], density, 0.0, p1)
    return pts, wts


def build_sphere_model(N: float, n_nodes: int = 1024) -> WeightedGrid:
    """The model space I_N: [0, pi] with density sin^(N-1)(t) / c_N."""
    N = check_dimension(N)
    n_nodes = int(n_nodes)
    if n_nodes < 16:
        raise ValueError(f"sphere models need at least 16 nodes, got {n_nodes}")
    nodes = np.linspace(0.0, math.pi, n_nodes)

    def density(t):
        return np.sin(t) ** (N - 1)

    pts, wts = _assemble(nodes, density, (N - 1, N - 1))
    c_N = float(wts.sum())
    weight = density(nodes)
    weight[[0, -1]] = 0.0
    return WeightedGrid(
        nodes=nodes,
        weight_at_node=weight / c_N,
        cell_mass=wts.sum(axis=1) / c_N,
        quad_points=pts,
        quad_weights=wts / c_N,
        kind="sphere",
        N=N,
        endpoint_powers=(N - 1, N - 1),
        density=lambda t: np.abs(np.sin(t)) ** (N - 1) / c_N,
    )


def build_cone_model(N: float, R_max: float, n_nodes: int = 1024) -> WeightedGrid:
    """The Euclidean model I_{0,N} truncated to [0, R_max]: density sigma_{N-1} t^(N-1)."""
    N = check_dimension(N)
    R_max = check_positive(R_max, "R_max")
    n_nodes = int(n_nodes)
    if n_nodes < 3:
        raise ValueError("a grid needs at least 3 nodes")
    nodes = np.linspace(0.0, R_max, n_nodes)
    omega = unit_ball_volume(N)
    sigma = N * omega

    def density(t):
        return sigma * t ** (N - 1)

    pts, wts = _assemble(nodes, density, (N - 1, 0.0))
    exact = omega * (nodes[1:] ** N - nodes[:-1] ** N)
    wts = wts * (exact / wts.sum(axis=1))[:, None]
    return WeightedGrid(
        nodes=nodes,
        weight_at_node=density(nodes),
        cell_mass=exact,
        quad_points=pts,
        quad_weights=wts,
        kind="cone",
        N=N,
        R_max=R_max,
        unbounded=True,
        endpoint_powers=(N - 1, 0.0),
        density=density,
    )


def build_custom_grid(
    nodes,
    weight,
    *,
    normalize: bool = False,
    endpoint_powers=(0.0, 0.0),
    N: float | None = None,
    unbounded: bool = False,
) -> WeightedGrid:
    """Grid for an arbitrary density.

    ``weight`` is either a vectorised callable or an array of nodal samples
    (linearly interpolated inside cells).  ``endpoint_powers`` declares a
    density vanishing like ``(t - a)^p0`` / ``(b - t)^p1`` so the end cells
    use Gauss-Jacobi rules; it requires a callable weight.
    """
    nodes = check_values(nodes, name="nodes")
    if nodes.size < 3 or np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must be strictly increasing with at least 3 entries")
    if callable(weight):
        density = weight
        at_nodes = np.asarray(density(nodes), dtype=float)
    else:
        at_nodes = check_values(weight, nodes.size, name="weight")
        if any(p > 0 for p in endpoint_powers):
            raise ValueError("endpoint_powers requires a callable weight")

        def density(t):
            return np.interp(t, nodes, at_nodes)

    if np.any(at_nodes < 0):
        raise ValueError("weights must be non-negative")
    endpoint_powers = tuple(float(p) for p in endpoint_powers)
    pts, wts = _assemble(nodes, density, endpoint_powers)
    if not np.any(wts > 0):
        raise ValueError("weight vanishes identically")
    grid = WeightedGrid(
        nodes=nodes,
        weight_at_node=at_nodes,
        cell_mass=wts.sum(axis=1),
        quad_points=pts,
        quad_weights=wts,
        kind="custom",
        N=None if N is None else float(N),
        unbounded=unbounded,
        endpoint_powers=endpoint_powers,
        density=density,
    )
    return grid.normalized() if normalize else grid


def read_function(path, grid: WeightedGrid) -> SampledFunction:
    """Load a function from CSV (``node,value``) or JSON (``{"nodes", "values"}``)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        nodes = np.asarray(data["nodes"], dtype=float)
        values = np.asarray(data["values"], dtype=float)
    else:
        rows = []
        with path.open(newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        arr = np.asarray(rows, dtype=float).reshape(-1, 2)
        nodes, values = arr[:, 0], arr[:, 1]
    if nodes.shape != grid.nodes.shape or np.max(np.abs(nodes - grid.nodes)) > 1e-12:
        raise ValueError(f"nodes in {path} do not match the grid to 1e-12")
    return SampledFunction(grid, values)


def write_function(u: SampledFunction, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        payload = {"nodes": u.grid.nodes.tolist(), "values": u.values.tolist()}
        path.write_text(json.dumps(payload))
        return
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "value"])
        for x, v in zip(u.grid.nodes, u.values):
            writer.writerow([repr(float(x)), repr(float(v))])
