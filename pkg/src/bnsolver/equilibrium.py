"""Bose-Einstein equilibria: construction, moments and parameter fitting.

The occupation number of an equilibrium is ``1/(exp(beta x + alpha) - 1)``
with ``alpha >= 0``; when ``alpha = 0`` a condensate of mass ``m0`` may sit
at ``x = 0``.  The condensate is carried as metadata only.

Moments are computed by Gauss-Legendre quadrature after the substitution
``x = u**2 / beta``, which removes the ``x**-1/2`` endpoint behaviour of the
critical (``alpha = 0``) mass integrand.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .grid import Distribution, EnergyGrid

__all__ = [
    "BEParams",
    "be_distribution",
    "be_moments",
    "critical_mass",
    "fit_equilibrium",
    "FitError",
]


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class BEParams:
    alpha: float
    beta: float
    m0: float = 0.0
    supercritical: bool = False

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta > 0 and self.m0 >= 0):
            raise ValueError(f"invalid equilibrium parameters {self}")
        if self.alpha * self.m0 != 0:
            raise ValueError("alpha and m0 cannot both be positive")

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "m0": self.m0,
                "supercritical": self.supercritical}


def be_distribution(params: BEParams, grid: EnergyGrid, time: float = 0.0) -> Distribution:
    """Sample ``1/(exp(beta x + alpha) - 1)`` on the grid nodes."""
    u = params.beta * grid.nodes + params.alpha
    if np.any(np.expm1(u) <= 0):
        raise ValueError(
            "beta*x_1 + alpha underflows; raise first_node or use a coarser grading")
    return Distribution(grid, 1.0 / np.expm1(u), time)


@lru_cache(maxsize=1)
def _rule():
    # composite Gauss-Legendre on u in [0, 8]; exp(-64) is below double
    # precision.  Geometric panels near 0 resolve the u ~ sqrt(alpha) layer.
    t, w = np.polynomial.legendre.leggauss(16)
    edges = np.concatenate(([0.0], np.geomspace(1e-6, 1.0, 48), np.linspace(1.0, 8.0, 57)[1:]))
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * t + 0.5 * (b + a)).ravel()
    wu = (0.5 * (b - a) * w).ravel()
    return u, wu


def _reduced_moments(alpha: float):
    """``int sqrt(x)/(e^{x+alpha}-1) dx`` and the ``x**1.5`` analogue."""
    u, wu = _rule()
    u2 = u * u
    if alpha == 0:
        # u**2 / expm1(u**2) -> 1 as u -> 0
        ratio = np.where(u2 > 0, u2 / np.expm1(np.where(u2 > 0, u2, 1.0)), 1.0)
        mass = np.sum(wu * 2.0 * ratio)
        energy = np.sum(wu * 2.0 * u2 * ratio)
        return float(mass), float(energy)
    occ = 1.0 / np.expm1(u2 + alpha)
    mass = np.sum(wu * 2.0 * u2 * occ)
    energy = np.sum(wu * 2.0 * u2 * u2 * occ)
    return float(mass), float(energy)


def be_moments(alpha: float, beta: float):
    """``(mass, energy)`` of the non-condensed part of an equilibrium.

    Mass scales as ``beta**-1.5`` and energy as ``beta**-2.5``.
    """
    if alpha < 0 or beta <= 0:
        raise ValueError("need alpha >= 0 and beta > 0")
    m, e = _reduced_moments(float(alpha))
    return m * beta ** -1.5, e * beta ** -2.5


def _ratio(alpha: float) -> float:
    # scale-free combination mass / energy**(3/5), decreasing in alpha
    m, e = _reduced_moments(alpha)
    return m / e ** 0.6


@lru_cache(maxsize=1)
def _check_monotone():
    grid = np.concatenate(([0.0], np.geomspace(1e-6, 500.0, 400)))
    r = np.array([_ratio(a) for a in grid])
    if not np.all(np.diff(r) < 0):
        raise FitError("mass/energy**0.6 is not strictly decreasing on the search bracket")
    return True


def critical_mass(energy: float) -> float:
    """Largest condensate-free equilibrium mass at the given energy."""
    if energy <= 0:
        raise ValueError("energy must be positive")
    m, e = _reduced_moments(0.0)
    beta = (e / energy) ** 0.4
    return m * beta ** -1.5


def fit_equilibrium(mass: float, energy: float, max_iter: int = 200) -> BEParams:
    """Equilibrium parameters with the given mass and energy.

    Supercritical data get ``alpha = 0`` and the mass excess as ``m0``.
    """
    if not (mass > 0 and energy > 0):
        raise ValueError("mass and energy must be positive")
    _check_monotone()
    target = mass / energy ** 0.6
    r0 = _ratio(0.0)
    if target >= r0:
        m_red, e_red = _reduced_moments(0.0)
        beta = (e_red / energy) ** 0.4
        m0 = max(mass - m_red * beta ** -1.5, 0.0)
        return BEParams(0.0, beta, m0, supercritical=m0 > 0)

    lo, hi = 0.0, 1.0
    while _ratio(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 700.0:
            raise FitError(f"mass/energy ratio {target:.3e} below representable range "
                           f"(bracket [{lo}, {hi}])")
    # absolute xtol near zero: the ratio moves like sqrt(alpha) there
    alpha, info = optimize.brentq(lambda a: _ratio(a) - target, lo, hi, xtol=1e-300,
                                  maxiter=max_iter, full_output=True, disp=False)
    if not info.converged:
        raise FitError(f"root search did not converge: {info.flag}")
    _, e_red = _reduced_moments(alpha)
    beta = (e_red / energy) ** 0.4
    return BEParams(alpha, beta, 0.0, supercritical=False)

