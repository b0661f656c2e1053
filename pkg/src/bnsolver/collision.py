"""Discrete loss rate, gain rate and collision operator.

For a node ``x_i`` the rates are double sums over grid nodes ``y_j, z_k``
restricted to ``w = y_j + z_k - x_i >= 0``::

    a_i = sum_jk om_j om_k W(x_i, w, y_j, z_k) f(w) (f_j + f_k + 1)
    J_i = sum_jk om_j om_k W(x_i, w, y_j, z_k) f_j f_k (f_i + f(w) + 1)

with ``f(w)`` linearly interpolated.  The summand is symmetric in
``j <-> k``; the compiled path sums ``k >= j`` with doubled off-diagonal
weights, the oracle sums every ordered pair.

Each rate is returned split by homogeneity: ``a = A2 + A1`` (quadratic and
linear in f) and ``J = C3 + C2`` (cubic and quadratic).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from .grid import Distribution, integrate, sample
from .kernel import phi_kernel, w_kernel

__all__ = [
    "CollisionRates",
    "rate_parts",
    "collision_rates",
    "loss_rate",
    "gain_rate",
    "collision_rhs",
    "loss_gain_oracle",
    "weak_action",
    "weak_action_terms",
    "conservative_remap",
    "ORACLE_MAX_NODES",
]

ORACLE_MAX_NODES = 64


def _configure_threads():
    # prefer OpenMP over TBB unless the user picked a layer; an outdated TBB
    # otherwise triggers a warning on the first parallel call
    if not (os.environ.get("NUMBA_THREADING_LAYER")
            or os.environ.get("NUMBA_THREADING_LAYER_PRIORITY")):
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
    cap = os.environ.get("BN_THREADS")
    if cap:
        try:
            numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass


_configure_threads()


@dataclass(frozen=True)
class CollisionRates:
    loss: np.ndarray
    gain: np.ndarray
    source_time: float = 0.0


@numba.njit(parallel=True, cache=True)
def _rate_kernel(x, om, f, out, wmin_scale):
    n = x.shape[0]
    xmax = x[n - 1]
    for i in numba.prange(n):
        xi = x[i]
        isx = 1.0 / math.sqrt(xi)
        fi = f[i]
        a2 = 0.0
        a1 = 0.0
        c3 = 0.0
        c2 = 0.0
        for j in range(n):
            yj = x[j]
            fj = f[j]
            oj = om[j]
            # first k >= j with y_j + z_k >= x_i
            lo = xi - yj
            k0 = j
            if x[k0] < lo:
                hi = n
                while k0 < hi:
                    mid = (k0 + hi) // 2
                    if x[mid] < lo:
                        k0 = mid + 1
                    else:
                        hi = mid
            m = 0
            for k in range(k0, n):
                zk = x[k]
                w = yj + zk - xi
                if w < 0.0:
                    continue
                mn = xi
                if yj < mn:
                    mn = yj
                if zk < mn:
                    mn = zk
                kw = oj * om[k] * isx
                if w < mn:
                    kw *= math.sqrt(w) * wmin_scale
                else:
                    kw *= math.sqrt(mn)
                if k > j:
                    kw *= 2.0
                if w > xmax:
                    fw = 0.0
                elif w <= x[0]:
                    fw = f[0]
                else:
                    while x[m + 1] < w:
                        m += 1
                    th = (w - x[m]) / (x[m + 1] - x[m])
                    fw = (1.0 - th) * f[m] + th * f[m + 1]
                fk = f[k]
                t = kw * fw
                a1 += t
                a2 += t * (fj + fk)
                q = kw * fj * fk
                c2 += q
                c3 += q * (fi + fw)
        out[0, i] = a2
        out[1, i] = a1
        out[2, i] = c3
        out[3, i] = c2


def rate_parts(dist: Distribution, wmin_scale: float = 1.0) -> np.ndarray:
    """Homogeneous parts ``(A2, A1, C3, C2)`` as a ``(4, N)`` array.

    ``wmin_scale`` multiplies the kernel wherever ``w`` is strictly the
    smallest energy; values other than 1 deliberately corrupt the operator
    and exist only for suite-sensitivity experiments.
    """
    g = dist.grid
    out = np.empty((4, g.size))
    _rate_kernel(np.ascontiguousarray(g.nodes), np.ascontiguousarray(g.weights),
                 np.ascontiguousarray(dist.values), out, float(wmin_scale))
    bad = ~np.isfinite(out)
    if np.any(bad):
        i = int(np.argwhere(bad)[0, 1])
        raise FloatingPointError(
            f"non-finite collision rate at node {i} (x = {g.nodes[i]:.6g}, "
            f"f = {dist.values[i]:.6g})")
    return out


def collision_rates(dist: Distribution) -> CollisionRates:
    p = rate_parts(dist)
    return CollisionRates(loss=p[0] + p[1], gain=p[2] + p[3], source_time=dist.time)


def loss_rate(dist: Distribution) -> np.ndarray:
    p = rate_parts(dist)
    return p[0] + p[1]


def gain_rate(dist: Distribution) -> np.ndarray:
    p = rate_parts(dist)
    return p[2] + p[3]


def collision_rhs(dist: Distribution, rates: CollisionRates | None = None) -> np.ndarray:
    """``Q_i = J_i - f_i a_i``."""
    if rates is None:
        rates = collision_rates(dist)
    return rates.gain - dist.values * rates.loss


def loss_gain_oracle(dist: Distribution, kernel=w_kernel):
    """Reference ``(a, J)`` from a literal triple loop.

    Every ordered ``(j, k)`` is visited, the kernel comes from
    :func:`bnsolver.kernel.w_kernel` and ``f(w)`` from
    :func:`bnsolver.grid.sample`.  Test use only; refuses ``N > 64``.
    ``kernel`` replaces the kernel function (same signature as ``w_kernel``).
    """
    g = dist.grid
    n = g.size
    if n > ORACLE_MAX_NODES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_NODES} nodes, grid has {n}")
    x = [float(v) for v in g.nodes]
    om = [float(v) for v in g.weights]
    f = [float(v) for v in dist.values]
    loss = np.zeros(n)
    gain = np.zeros(n)
    grid_sum = g.nodes[:, None] + g.nodes[None, :]
    for i in range(n):
        a = 0.0
        jg = 0.0
        # f(w) for every ordered pair of this row, from the grid interpolant
        frow = sample(dist, np.maximum(grid_sum - x[i], 0.0)).tolist()
        for j in range(n):
            for k in range(n):
                w = x[j] + x[k] - x[i]
                if w < 0:
                    continue
                kern = om[j] * om[k] * kernel(x[i], w, x[j], x[k])
                fw = frow[j][k]
                a += kern * fw * (f[j] + f[k] + 1.0)
                jg += kern * f[j] * f[k] * (f[i] + fw + 1.0)
        loss[i] = a
        gain[i] = jg
    return loss, gain


def weak_action_terms(dist: Distribution, testfn, magnitude: bool = False):
    """Per-pair contributions to the symmetrized weak form.

    For each unordered node pair ``(x_i, y_j)`` with ``s = x_i + y_j`` the
    pair term is::

        om_i om_j f_i f_j * int_0^s [phi(w) + phi(s-w) - phi(x) - phi(y)]
                              * Phi(w, x, y, s-w) * (f(w) + f(s-w) + 1)/2 dw

    (times 2 off the diagonal).  The ``f(w) + f(s-w)`` part is the cubic
    term, the ``1`` part the quadratic one.  The ``w`` integral uses the
    symmetry ``w <-> s - w`` and a trapezoid rule on ``{0, nodes < s/2,
    s/2}``.  Returns ``(cubic, quadratic)`` arrays over pairs.

    With ``magnitude=True`` the bracket is replaced by
    ``|phi(w)| + |phi(s-w)| + |phi(x)| + |phi(y)|``, giving the size of the
    terms before cancellation.
    """
    g = dist.grid
    x = g.nodes
    f = dist.values
    n = g.size
    iu, ju = np.triu_indices(n)
    xi, yj = x[iu], x[ju]
    s = xi + yj
    half = 0.5 * s
    pref = g.weights[iu] * g.weights[ju] * f[iu] * f[ju] * np.where(iu == ju, 1.0, 2.0)

    # quadrature points per pair: nodes below s/2 plus the point s/2
    cnt = np.searchsorted(x, half, side="left")
    npts = cnt + 1
    pair = np.repeat(np.arange(iu.size), npts)
    start = np.cumsum(npts) - npts
    local = np.arange(pair.size) - start[pair]
    is_mid = local == cnt[pair]
    w = np.where(is_mid, half[pair], x[np.minimum(local, n - 1)])
    prev = np.where(local == 0, 0.0, x[np.maximum(local - 1, 0)])
    nxt = np.where(local + 1 == cnt[pair], half[pair],
                   x[np.minimum(local + 1, n - 1)])
    tw = np.where(is_mid, 0.5 * (w - prev), 0.5 * (nxt - prev))

    xp, yp, sp = xi[pair], yj[pair], s[pair]
    z = sp - w
    phi = np.asarray(testfn(np.concatenate((w, z, xp, yp))), dtype=float)
    m = w.size
    if phi.shape != (4 * m,):
        phi = np.broadcast_to(phi, (4 * m,))
    if magnitude:
        bracket = np.abs(phi).reshape(4, m).sum(axis=0)
    else:
        bracket = (phi[:m] + phi[m:2 * m]) - (phi[2 * m:3 * m] + phi[3 * m:])
    kern = phi_kernel(w, xp, yp, np.maximum(z, 0.0))
    base = 2.0 * tw * bracket * kern * 0.5  # factor 2 from w <-> s-w folding
    fw = sample(dist, w)
    fz = sample(dist, np.maximum(z, 0.0))
    cubic = pref * np.bincount(pair, base * (fw + fz), minlength=iu.size)
    quad = pref * np.bincount(pair, base, minlength=iu.size)
    return cubic, quad


def weak_action(dist: Distribution, testfn) -> float:
    """Discrete ``d/dt int phi(x) sqrt(x) f(x) dx`` for a fixed test function.

    Exactly zero for constant ``phi`` (the bracket vanishes before any
    summation).
    """
    cubic, quad = weak_action_terms(dist, testfn)
    return float(np.sum(cubic + quad))


def conservative_remap(dist: Distribution, target_mass: float, target_energy: float):
    """Rescale ``f_i -> f_i (A + B x_i)`` to hit the target mass and energy.

    Returns ``(new_dist, ok)``.  ``ok`` is False when the 2x2 system is
    singular (all mass on one node) or the clipped solution cannot match
    the targets; in the singular case the input is returned unchanged.
    """
    if target_mass <= 0 or target_energy <= 0:
        raise ValueError("targets must be positive")
    if integrate(dist, 0.5) == target_mass and integrate(dist, 1.5) == target_energy:
        return dist, True
    g = dist.grid
    x = g.nodes
    base = g.weights * np.sqrt(x) * dist.values

    def solve(mask):
        b = base * mask
        m0 = b.sum()
        m1 = (b * x).sum()
        m2 = (b * x * x).sum()
        det = m0 * m2 - m1 * m1
        if not det > 1e-14 * m0 * m2:
            return None
        A = (target_mass * m2 - target_energy * m1) / det
        B = (m0 * target_energy - m1 * target_mass) / det
        return A, B

    ones = np.ones_like(x)
    sol = solve(ones)
    if sol is None:
        return dist, False
    A, B = sol
    scale = A + B * x
    if np.any((scale < 0) & (dist.values > 0)):
        active = (scale > 0).astype(float)
        sol = solve(active)
        if sol is None:
            return dist.evolve(np.maximum(dist.values * scale, 0.0)), False
        A, B = sol
        scale = (A + B * x) * active
    new = dist.values * scale
    ok = bool(np.all(new >= 0))
    return dist.evolve(np.maximum(new, 0.0)), ok
