"""Positive measures on the energy half-line and the sliding-window class.

A :class:`RadonMeasure` is a finite list of atoms plus an optional gridded
density.  Atoms never evolve; they exist for norm and bound checks.  The
window norm uses open unit windows ``(R, R+1)``, ``R >= 0``; an atom
sitting exactly at the origin therefore lies in no window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import gbeta_norm, window_candidates, window_integrals
from .grid import Distribution, EnergyGrid, integrate

__all__ = [
    "RadonMeasure",
    "GBetaParams",
    "gbeta_norm_measure",
    "mass_bound_check",
    "existence_horizon",
    "calibration_constant",
    "calibrate_constant",
    "first_exit_time",
    "singular_init",
    "write_measure",
    "read_measure",
]

EPS = 1e-12


@dataclass(frozen=True)
class RadonMeasure:
    atoms: Tuple[Tuple[float, float], ...] = ()
    density: Optional[Distribution] = None

    def __post_init__(self):
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        for x, m in atoms:
            if not (math.isfinite(x) and x >= 0):
                raise ValueError(f"atom position must be finite and >= 0, got {x}")
            if not (math.isfinite(m) and m > 0):
                raise ValueError(f"atom mass must be finite and > 0, got {m}")
        object.__setattr__(self, "atoms", atoms)

    @property
    def positions(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms], dtype=float)

    def total_mass(self) -> float:
        """``mu(R_+)``: atom masses plus the integral of the density."""
        total = float(self.masses.sum()) if self.atoms else 0.0
        if self.density is not None:
            total += integrate(self.density, 0.0)
        return total

    def scaled(self, factor: float) -> "RadonMeasure":
        dens = None if self.density is None else self.density.evolve(self.density.values * factor)
        return RadonMeasure(tuple((x, m * factor) for x, m in self.atoms), dens)


@dataclass(frozen=True)
class GBetaParams:
    beta: float
    kappa: float

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    def contains(self, mu: RadonMeasure) -> bool:
        return gbeta_norm_measure(mu, self.beta) <= self.kappa


def _atom_windows(pos, weighted, origins):
    # open windows: R < a < R + 1
    inside = (pos[None, :] > origins[:, None]) & (pos[None, :] < origins[:, None] + 1.0)
    return inside.astype(float) @ weighted


def gbeta_norm_measure(mu: RadonMeasure, beta: float) -> float:
    """``sup_{R >= 0} mu-integral of e^{beta x}`` over the open window ``(R, R+1)``.

    The supremum is taken over a finite candidate set that contains the
    maximizing origins: for atoms, positions just left of ``a`` and of
    ``a - 1``; for the density, the grid candidates.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    cands = [np.array([0.0])]
    if mu.atoms:
        a = mu.positions
        for shift in (0.0, -1.0):
            base = a + shift
            cands.append(np.concatenate((base, base - EPS, base + EPS)))
    if mu.density is not None:
        cands.append(window_candidates(mu.density.grid.nodes))
    R = np.unique(np.concatenate(cands))
    R = R[R >= 0.0]
    total = np.zeros_like(R)
    if mu.atoms:
        total += _atom_windows(mu.positions, mu.masses * np.exp(beta * mu.positions), R)
    if mu.density is not None:
        total += window_integrals(mu.density, beta, R)
    return float(total.max()) if total.size else 0.0


def mass_bound_check(mu: RadonMeasure, beta: float = 1.2):
    """``(total_mass, 3 * norm, total_mass <= 3 * norm)``."""
    if beta < 1.2:
        raise ValueError("beta must be >= 1.2")
    total = mu.total_mass()
    bound = 3.0 * gbeta_norm_measure(mu, beta)
    return total, bound, bool(total <= bound)


def existence_horizon(f0_norm: float, mass: float, beta: float, kappa: float,
                      calib_C: float) -> float:
    """Largest ``T`` with ``n0 + C (T + 1/(m sqrt(beta))) kappa^2 (1 + kappa) <= kappa``.

    Zero when no positive window exists.
    """
    if not (mass > 0 and beta > 0 and calib_C > 0):
        raise ValueError("mass, beta and calib_C must be positive")
    if not kappa > f0_norm:
        raise ValueError("kappa must exceed the initial norm")
    T = (kappa - f0_norm) / (calib_C * kappa ** 2 * (1.0 + kappa)) - 1.0 / (mass * math.sqrt(beta))
    return max(T, 0.0)


def calibration_constant(f0_norm: float, mass: float, beta: float, kappa: float,
                         window: float) -> float:
    """The ``C`` for which :func:`existence_horizon` returns exactly ``window``."""
    return (kappa - f0_norm) / ((window + 1.0 / (mass * math.sqrt(beta)))
                                * kappa ** 2 * (1.0 + kappa))


def first_exit_time(path: Sequence[Distribution], beta: float, kappa: float) -> Optional[float]:
    """Time of the first state whose window norm exceeds ``kappa`` (None if never)."""
    for d in path:
        if gbeta_norm(d, beta) > kappa:
            return d.time - path[0].time
    return None


@dataclass
class Calibration:
    calib_C: float
    samples: List[dict] = field(default_factory=list)


def calibrate_constant(initials: Iterable[Distribution], beta: float, kappa_factor: float,
                       horizon: float, levels: int = 32, max_iters: int = 40,
                       tol: float = 1e-9) -> Calibration:
    """Back out the horizon constant from empirical self-mapping windows.

    For each initial datum the Picard path on ``[0, horizon]`` is computed
    and the first time its window norm exceeds ``kappa = kappa_factor *
    norm(f0)`` is the empirical window (``horizon`` if it never does, which
    can only overstate the constant).  Each window gives a constant through
    :func:`calibration_constant`; the largest is returned, so that
    predictions on the calibration set never exceed the observed windows.
    """
    from .integrator import picard_mild

    if kappa_factor <= 1:
        raise ValueError("kappa_factor must exceed 1")
    best = 0.0
    samples = []
    for f0 in initials:
        n0 = gbeta_norm(f0, beta)
        kappa = kappa_factor * n0
        mass = integrate(f0, 0.5)
        res = picard_mild(f0, horizon, max_iters=max_iters, tol=tol, levels=levels)
        exit_t = first_exit_time(res.path, beta, kappa)
        window = horizon if exit_t is None else exit_t
        c = calibration_constant(n0, mass, beta, kappa, window)
        samples.append({"norm0": n0, "kappa": kappa, "mass": mass, "window": window,
                        "censored": exit_t is None, "converged": res.converged, "C": c})
        best = max(best, c)
    if not best > 0:
        raise ValueError("no calibration data")
    return Calibration(best, samples)


def singular_init(alpha: float, scale: float, decay: float, grid: EnergyGrid) -> Distribution:
    """``scale * x**-alpha * exp(-decay x)`` on ``grid`` with exact first-cell weight.

    The returned distribution lives on a copy of ``grid`` whose first-cell
    weight integrates ``x**-alpha`` exactly.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1); alpha >= 1 is not integrable at 0")
    if not (scale > 0 and decay > 0):
        raise ValueError("scale and decay must be positive")
    g = grid.with_singular_exponent(alpha)
    x = g.nodes
    return Distribution(g, scale * x ** -alpha * np.exp(-decay * x))


# --- file format -----------------------------------------------------------

def write_measure(mu: RadonMeasure, path, density_path: Optional[str] = None) -> None:
    """``atom <x> <mass>`` lines, then ``density <path>`` when given."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x, m in mu.atoms:
            fh.write(f"atom {x:.17g} {m:.17g}\n")
        if density_path is not None:
            fh.write(f"density {density_path}\n")


def read_measure(path) -> RadonMeasure:
    """Inverse of :func:`write_measure`; density paths are relative to the file."""
    import os
    from .integrator import read_checkpoint

    atoms = []
    density = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "atom" and len(parts) == 3:
                atoms.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "density" and len(parts) == 2:
                ref = parts[1]
                if not os.path.isabs(ref):
                    ref = os.path.join(os.path.dirname(os.path.abspath(path)), ref)
                density, _ = read_checkpoint(ref)
            else:
                raise ValueError(f"{path}:{lineno}: expected 'atom <x> <mass>' or "
                                 f"'density <path>', got {raw.rstrip()!r}")
    return RadonMeasure(tuple(atoms), density)
