"""Pointwise collision kernels.

``w_kernel`` is the kernel of the equation for the occupation number ``f``,
``phi_kernel`` the symmetric kernel of the equation for the energy density
``g = sqrt(x) f``.  ``g_aux`` is the auxiliary function appearing in the
split of the loss rate into ``2 sqrt(x) m(f)`` plus a remainder; it is only
used for diagnostics.

All three accept scalars or broadcastable arrays.
"""
import math

import numpy as np

__all__ = ["w_kernel", "phi_kernel", "g_aux"]


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def _check_nonneg(*args):
    for a in args:
        if np.any(np.asarray(a) < 0):
            raise ValueError("energies must be nonnegative")


def w_kernel(x, w, y, z):
    """``min(sqrt x, sqrt w, sqrt y, sqrt z) / sqrt x``; always in ``[0, 1]``."""
    if type(x) is float and type(w) is float and type(y) is float and type(z) is float:
        if not x > 0:
            raise ValueError("w_kernel is undefined at x = 0")
        if w < 0 or y < 0 or z < 0:
            raise ValueError("energies must be nonnegative")
        return math.sqrt(min(x, w, y, z)) / math.sqrt(x)
    if np.any(np.asarray(x) <= 0):
        raise ValueError("w_kernel is undefined at x = 0")
    _check_nonneg(w, y, z)
    m = np.minimum(np.minimum(x, w), np.minimum(y, z))
    return _out(np.sqrt(m) / np.sqrt(x))


def phi_kernel(w, x, y, z):
    """Minimum of the four square roots (symmetric in all arguments)."""
    _check_nonneg(w, x, y, z)
    return _out(np.sqrt(np.minimum(np.minimum(w, x), np.minimum(y, z))))


def g_aux(x, w):
    """Two-branch auxiliary function of the loss-rate split.

    ``(w/x)**1.5 / 3`` for ``w <= x`` and ``1/3 + w/x - sqrt(w/x)`` above;
    both branches equal ``1/3`` at ``w = x``.
    """
    if np.any(np.asarray(x) <= 0):
        raise ValueError("g_aux requires x > 0")
    _check_nonneg(w)
    r = np.asarray(w, dtype=float) / x
    return _out(np.where(r <= 1.0, r ** 1.5 / 3.0, 1.0 / 3.0 + r - np.sqrt(r)))
