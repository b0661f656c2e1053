"""Energy-axis discretization.

The energy half-line is truncated at ``x_max`` and sampled on ``N`` graded
nodes ``0 < x_1 < ... < x_N = x_max``.  Quadrature weights are composite
trapezoid weights on the nodes; the first cell ``(0, x_1]`` is lumped onto
``x_1`` so that ``int_0^{x_1} x^{-a0} dx`` is integrated exactly for the
grid's reference singularity exponent ``a0`` (0 gives the plain rule).

Distributions are stored as nonnegative samples ``f_i = f(x_i)`` of the
occupation number, i.e. a density with respect to ``dx``.  Off-grid values
are obtained by linear interpolation, held constant below ``x_1`` and set
to zero above ``x_max``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "GridSpec",
    "EnergyGrid",
    "Distribution",
    "build_grid",
    "integrate",
    "sample",
    "partial_integral",
    "write_grid",
    "read_grid",
    "format_grading",
    "parse_grading",
]

GRADINGS = ("uniform", "geometric", "power")


@dataclass(frozen=True)
class GridSpec:
    """Parameters of a graded energy mesh.

    ``grading`` is one of ``"uniform"``, ``"geometric"`` (uses ``ratio``) or
    ``"power"`` (uses ``exponent``).  ``first_node`` is only used by the
    geometric grading; for the other two the first node follows from the
    formula.  ``singular_exponent`` selects the first-cell weight mode.
    """

    node_count: int = 128
    x_max: float = 20.0
    grading: str = "power"
    ratio: float = 1.1
    exponent: float = 2.0
    first_node: Optional[float] = None
    singular_exponent: float = 0.0

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 8:
            raise ValueError(f"node_count must be an integer >= 8, got {self.node_count}")
        if not (math.isfinite(self.x_max) and self.x_max > 0):
            raise ValueError(f"x_max must be positive and finite, got {self.x_max}")
        if self.grading not in GRADINGS:
            raise ValueError(f"unknown grading {self.grading!r}; expected one of {GRADINGS}")
        if self.grading == "geometric" and not (math.isfinite(self.ratio) and self.ratio > 1):
            raise ValueError(f"geometric ratio must be finite and > 1, got {self.ratio}")
        if self.grading == "power" and not (math.isfinite(self.exponent) and self.exponent > 1):
            raise ValueError(f"power exponent must be finite and > 1, got {self.exponent}")
        if self.first_node is not None and not (0 < self.first_node < self.x_max):
            raise ValueError(
                f"first_node must satisfy 0 < first_node < x_max, got {self.first_node}")
        if not (0.0 <= self.singular_exponent < 1.0):
            raise ValueError("singular_exponent must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class EnergyGrid:
    """Nodes and quadrature weights built from a :class:`GridSpec`."""

    nodes: np.ndarray
    weights: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def with_singular_exponent(self, alpha: float) -> "EnergyGrid":
        """Same nodes, first-cell weight exact for ``x**-alpha``."""
        return build_grid(replace(self.spec, singular_exponent=alpha))

    def __eq__(self, other):
        if not isinstance(other, EnergyGrid):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.nodes.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True, eq=False)
class Distribution:
    """Samples of the occupation number on a grid at a given time."""

    grid: EnergyGrid
    values: np.ndarray
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"expected {self.grid.size} values, got array of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution values must be finite")
        if np.any(values < 0):
            raise ValueError("distribution values must be nonnegative")
        if not (math.isfinite(self.time) and self.time >= 0):
            raise ValueError(f"time must be finite and >= 0, got {self.time}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def evolve(self, values, time=None, step=None) -> "Distribution":
        return Distribution(self.grid, values,
                            self.time if time is None else time,
                            self.step if step is None else step)

    @classmethod
    def from_function(cls, grid: EnergyGrid, func, time: float = 0.0) -> "Distribution":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float), time)


def _nodes(spec: GridSpec) -> np.ndarray:
    n = spec.node_count
    k = np.arange(1, n + 1, dtype=float)
    if spec.grading == "uniform":
        return spec.x_max * k / n
    if spec.grading == "power":
        return spec.x_max * (k / n) ** spec.exponent
    # geometric: gaps g0 * r**m; without first_node the gap from 0 to x_1 is g0
    r = spec.ratio
    if spec.first_node is None:
        g0 = spec.x_max * (r - 1.0) / (r ** n - 1.0)
        nodes = g0 * np.cumsum(r ** np.arange(n))
    else:
        x1 = spec.first_node
        g0 = (spec.x_max - x1) * (r - 1.0) / (r ** (n - 1) - 1.0)
        nodes = np.concatenate(([x1], x1 + g0 * np.cumsum(r ** np.arange(n - 1))))
    nodes[-1] = spec.x_max
    return nodes


def build_grid(spec: GridSpec) -> EnergyGrid:
    """Build nodes and trapezoid weights for ``spec``.

    Examples
    --------
    >>> g = build_grid(GridSpec(node_count=8, x_max=1.0, grading="uniform"))
    >>> g.nodes[0], float(g.weights.sum())
    (0.125, 1.0)
    """
    nodes = _nodes(spec)
    if not np.all(np.diff(nodes) > 0) or nodes[0] <= 0:
        raise ValueError("grid construction produced non-increasing nodes; "
                         "check ratio/first_node")
    gaps = np.diff(nodes)
    weights = np.empty_like(nodes)
    weights[0] = 0.5 * gaps[0]
    weights[1:-1] = 0.5 * (gaps[:-1] + gaps[1:])
    weights[-1] = 0.5 * gaps[-1]
    weights[0] += nodes[0] / (1.0 - spec.singular_exponent)
    return EnergyGrid(nodes, weights, spec)


def integrate(dist: Distribution, moment_power: float = 0.0) -> float:
    """Quadrature of ``x**p * f(x)`` over ``(0, x_max]``.

    ``moment_power=0.5`` gives the mass, ``1.5`` the energy.
    """
    if not math.isfinite(moment_power) or moment_power < 0:
        raise ValueError("moment_power must be finite and >= 0")
    g = dist.grid
    if moment_power == 0:
        return float(np.dot(g.weights, dist.values))
    return float(np.dot(g.weights * g.nodes ** moment_power, dist.values))


def sample(dist: Distribution, x):
    """Interpolate ``f`` at energies ``x`` (scalar or array).

    Linear between nodes, ``f_1`` on ``[0, x_1)`` and zero beyond ``x_max``.
    """
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)) or np.any(xa < 0):
        raise ValueError("sample points must be finite and >= 0")
    v = dist.values
    out = np.interp(xa, dist.grid.nodes, v, left=v[0], right=0.0)
    return float(out) if np.ndim(out) == 0 else out


def partial_integral(grid: EnergyGrid, values: np.ndarray, upper) -> np.ndarray:
    """``int_0^X g(x) dx`` for the piecewise model of nodal values ``g``.

    The model is the one the quadrature weights integrate exactly: linear
    between nodes, and ``g_1 (x/x_1)^{-a0}`` on the first cell.  ``upper``
    may be an array; values beyond ``x_max`` are clipped.
    """
    x = grid.nodes
    g = np.asarray(values, dtype=float)
    a0 = grid.spec.singular_exponent
    X = np.clip(np.asarray(upper, dtype=float), 0.0, x[-1])
    first = g[0] * x[0] / (1.0 - a0)
    cells = 0.5 * np.diff(x) * (g[:-1] + g[1:])
    cum = np.concatenate(([first], first + np.cumsum(cells)))

    k = np.searchsorted(x, X, side="right") - 1  # x[k] <= X < x[k+1]
    out = np.empty_like(X)
    below = k < 0
    if np.any(below):
        Xb = X[below]
        out[below] = g[0] * x[0] ** a0 * Xb ** (1.0 - a0) / (1.0 - a0)
    inside = ~below
    if np.any(inside):
        kk = np.minimum(k[inside], x.size - 2)
        Xi = X[inside]
        h = x[kk + 1] - x[kk]
        theta = (Xi - x[kk]) / h
        gX = (1.0 - theta) * g[kk] + theta * g[kk + 1]
        out[inside] = cum[kk] + 0.5 * (Xi - x[kk]) * (g[kk] + gX)
    return out


def format_grading(spec: GridSpec) -> str:
    if spec.grading == "geometric":
        return f"geometric({spec.ratio!r})"
    if spec.grading == "power":
        return f"power({spec.exponent!r})"
    return "uniform"


_GRADING_RE = re.compile(r"^(uniform|geometric|power)(?:\(([^)]*)\))?$")


def parse_grading(text: str) -> dict:
    m = _GRADING_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse grading {text!r}")
    kind, arg = m.groups()
    if kind == "geometric":
        return {"grading": kind, "ratio": float(arg)}
    if kind == "power":
        return {"grading": kind, "exponent": float(arg)}
    return {"grading": kind}


def grid_block(grid: EnergyGrid) -> str:
    spec = grid.spec
    lines = [f"# bn-grid N={grid.size} xmax={grid.x_max!r} grading={format_grading(spec)}"]
    lines += [f"{x:.17g} {w:.17g}" for x, w in zip(grid.nodes, grid.weights)]
    return "\n".join(lines) + "\n"


def write_grid(grid: EnergyGrid, path) -> None:
    """Write the grid snapshot text format (header + ``x_i weight_i`` lines)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(grid_block(grid))


_HEADER_RE = re.compile(r"^#\s*bn-grid\s+N=(\d+)\s+xmax=(\S+)\s+grading=(\S+)\s*$")


def parse_grid_lines(lines):
    """Parse a grid block; returns ``(grid, remaining_lines)``."""
    if not lines:
        raise ValueError("empty grid file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"line 1: expected '# bn-grid N=<n> xmax=<v> grading=<g>' header")
    n = int(m.group(1))
    x_max = float(m.group(2))
    kw = parse_grading(m.group(3))
    rows = lines[1:1 + n]
    if len(rows) < n:
        raise ValueError(f"grid header declares N={n} but only {len(rows)} rows follow")
    data = np.empty((n, 2))
    for i, line in enumerate(rows):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {i + 2}: expected 'x weight', got {line!r}")
        data[i] = float(parts[0]), float(parts[1])
    first_node = float(data[0, 0]) if kw["grading"] == "geometric" else None
    # first-cell mode is recoverable from w_1 = (x_2 - x_1)/2 + x_1/(1 - a0)
    lump = data[0, 1] - 0.5 * (data[1, 0] - data[0, 0])
    a0 = 1.0 - data[0, 0] / lump
    if abs(a0) < 1e-9:
        a0 = 0.0
    spec = GridSpec(node_count=n, x_max=x_max, first_node=first_node,
                    singular_exponent=a0, **kw)
    grid = EnergyGrid(data[:, 0].copy(), data[:, 1].copy(), spec)
    return grid, lines[1 + n:]


def read_grid(path) -> EnergyGrid:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    grid, _ = parse_grid_lines(lines)
    return grid
