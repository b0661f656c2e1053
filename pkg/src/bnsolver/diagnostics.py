"""Norms, bound formulas and inequality checks for simulated trajectories.

Everything here is a read-only evaluation on :class:`~bnsolver.grid.Distribution`
objects or on a trajectory (any object with ``records`` and ``snapshots``
attributes, see :class:`bnsolver.integrator.Trajectory`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize

from .grid import Distribution, integrate, partial_integral

__all__ = [
    "DiagnosticsConfig",
    "DiagnosticsRecord",
    "BlowupFit",
    "make_record",
    "weighted_sup",
    "sup_xf",
    "local_mass",
    "window_integrals",
    "gbeta_norm",
    "tail_moment",
    "tail_constant",
    "kappa_theorem1",
    "blowup_lower_bound",
    "riccati_constant",
    "riccati_check",
    "blowup_fit",
    "fit_profile_exponent",
    "comparison_profile",
    "verify_comparison",
    "loss_lowerbound_ratio",
    "write_records_csv",
    "read_records_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("t", "mass", "energy", "l1_total", "l1_local", "wsup", "supxf", "gbeta", "dt")


@dataclass(frozen=True)
class DiagnosticsConfig:
    delta: float = 1.0
    wsup_alpha: float = 0.0
    wsup_gamma: float = 9.0
    gbeta: float = 1.2


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    energy: float
    l1_total: float
    l1_local: float
    wsup: float
    supxf: float
    gbeta: float
    dt: float

    def row(self):
        return (self.time, self.mass, self.energy, self.l1_total, self.l1_local,
                self.wsup, self.supxf, self.gbeta, self.dt)


def make_record(dist: Distribution, dt: float, cfg: DiagnosticsConfig) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        time=dist.time,
        mass=integrate(dist, 0.5),
        energy=integrate(dist, 1.5),
        l1_total=integrate(dist, 0.0),
        l1_local=local_mass(dist, min(cfg.delta, dist.grid.x_max)),
        wsup=weighted_sup(dist, cfg.wsup_alpha, cfg.wsup_gamma),
        supxf=sup_xf(dist),
        gbeta=gbeta_norm(dist, cfg.gbeta),
        dt=dt,
    )


# --- norms -----------------------------------------------------------------

def weighted_sup(dist: Distribution, alpha: float, gamma: float) -> float:
    """``max_i x_i**alpha (1 + x_i)**gamma f_i``."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    x = dist.grid.nodes
    return float(np.max(x ** alpha * (1.0 + x) ** gamma * dist.values))


def sup_xf(dist: Distribution) -> float:
    return float(np.max(dist.grid.nodes * dist.values))


def local_mass(dist: Distribution, delta: float) -> float:
    """``int_0^delta f dx`` with the straddling cell split linearly."""
    if not 0 < delta <= dist.grid.x_max * (1 + 1e-15):
        raise ValueError("delta must lie in (0, x_max]")
    return float(partial_integral(dist.grid, dist.values, np.array([delta]))[0])


def window_integrals(dist: Distribution, beta: float, origins) -> np.ndarray:
    """``int_R^{R+1} exp(beta x) f(x) dx`` for each window origin ``R``."""
    g = dist.grid
    vals = np.exp(beta * g.nodes) * dist.values
    R = np.asarray(origins, dtype=float)
    return partial_integral(g, vals, R + 1.0) - partial_integral(g, vals, R)


def window_candidates(nodes) -> np.ndarray:
    x = np.asarray(nodes, dtype=float)
    c = np.concatenate(([0.0], x, x - 1.0))
    return np.unique(c[c >= 0.0])


def gbeta_norm(dist: Distribution, beta: float) -> float:
    """Sliding unit-window norm ``sup_R int_R^{R+1} e^{beta x} f dx``.

    The window touching the origin (``R -> 0+``) is included.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not np.any(dist.values):
        return 0.0
    return float(np.max(window_integrals(dist, beta, window_candidates(dist.grid.nodes))))


def tail_moment(dist: Distribution, R: float, power: float = 1.5) -> float:
    """``int_R^{x_max} x**power f dx``."""
    g = dist.grid
    vals = g.nodes ** power * dist.values
    top, low = partial_integral(g, vals, np.array([g.x_max, R]))
    return float(top - low)


def tail_constant(power: float, beta: float) -> float:
    """``K`` with ``int_R^inf x^p f <= K ||f||_{G^beta} e^{-beta R/2}`` for densities.

    Cover ``(R, inf)`` by unit windows starting at ``floor(R)`` and bound
    ``x^p e^{-beta x}`` by ``sup_x x^p e^{-beta x/2} * e^{-beta l/2}`` on the
    window ``(l, l+1)``.
    """
    peak = (2.0 * power / (beta * math.e)) ** power if power > 0 else 1.0
    return peak * math.exp(beta / 2.0) / (1.0 - math.exp(-beta / 2.0))


# --- bound formulas --------------------------------------------------------

def kappa_theorem1(gamma: float, alpha: float, T: float, cT: float, energy: float) -> float:
    """Contraction constant of the weighted-sup estimate over a window ``T``.

    ``1 - 2.5e/(g-1) - (2^{a+g+1} g^1.5/(g-1) e + 2^g (2-a)/(1-a) c
    + (1 + 2^{a+g+1}) c^2) T``; may be negative.
    """
    if gamma <= 2.5 * math.e + 1:
        raise ValueError(f"gamma must exceed 2.5e + 1 = {2.5 * math.e + 1:.6f}")
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if T <= 0:
        raise ValueError("T must be positive")
    p = 2.0 ** (alpha + gamma + 1)
    slope = (p * gamma ** 1.5 / (gamma - 1) * energy
             + 2.0 ** gamma * (2 - alpha) / (1 - alpha) * cT
             + (1 + p) * cT ** 2)
    return 1.0 - 2.5 * math.e / (gamma - 1) - slope * T


def riccati_constant(mass: float, delta: float) -> float:
    """``max(m/sqrt(delta), 1 + delta)``."""
    return max(mass / math.sqrt(delta), 1.0 + delta)


def blowup_lower_bound(t: float, t_star: float, mass: float, delta: float) -> float:
    """``1/sqrt(2 (T* - t)) - max(m/sqrt(delta), 1 + delta)``."""
    if t >= t_star:
        raise ValueError("need t < t_star")
    return 1.0 / math.sqrt(2.0 * (t_star - t)) - riccati_constant(mass, delta)


@dataclass
class RiccatiReport:
    passed: bool
    constant: float
    checked: int
    violations: List[dict] = field(default_factory=list)
    max_ratio: float = 0.0  # max of derivative / (l + C)^3 over checked points


def _column(traj, name):
    return np.array([getattr(r, name) for r in traj.records], dtype=float)


def riccati_check(traj, delta: float, slack: float = 0.05) -> RiccatiReport:
    """Compare ``d/dt l_delta`` against ``(l_delta + C)^3`` at interior records.

    The derivative is the three-point (nonuniform) central difference; its
    truncation error ``h1 h2 |l'''| / 6`` is added as an allowance.
    """
    if len(traj.records) < 3:
        raise ValueError("need at least 3 records")
    t = _column(traj, "time")
    lv = _column(traj, "l1_local")
    mass = traj.records[0].mass
    C = riccati_constant(mass, delta)

    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    l0, l1, l2 = lv[:-2], lv[1:-1], lv[2:]
    deriv = (-h2 / (h1 * (h1 + h2)) * l0 + (h2 - h1) / (h1 * h2) * l1
             + h1 / (h2 * (h1 + h2)) * l2)
    second = 2.0 * (h1 * l2 - (h1 + h2) * l1 + h2 * l0) / (h1 * h2 * (h1 + h2))
    mids = t[1:-1]
    third = np.zeros_like(second)
    if second.size > 1:
        d3 = np.diff(second) / np.diff(mids)
        third[:-1] = np.abs(d3)
        third[1:] = np.maximum(third[1:], np.abs(d3))
    allowance = h1 * h2 * third / 6.0
    bound = (l1 + C) ** 3
    limit = bound * (1.0 + slack) + allowance
    bad = np.nonzero(deriv > limit)[0]
    violations = [{"time": float(mids[i]), "derivative": float(deriv[i]),
                   "bound": float(bound[i]), "allowance": float(allowance[i])}
                  for i in bad]
    return RiccatiReport(passed=not violations, constant=C, checked=int(deriv.size),
                         violations=violations, max_ratio=float(np.max(deriv / bound)))


# --- blow-up fitting -------------------------------------------------------

@dataclass(frozen=True)
class BlowupFit:
    t_star: float
    exponent: float
    c_offset: float
    window: tuple
    residual: float
    exponent_residual: float = 0.0
    profile_window: tuple = ()

    def as_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        d["profile_window"] = list(self.profile_window)
        d["distance_to_1_234"] = abs(self.exponent - 1.234) if math.isfinite(self.exponent) else None
        return d


class FitRefused(ValueError):
    pass


def fit_blowup_time(t, l):
    """Least-squares fit of ``l(t) = 1/sqrt(2 (T* - t)) - c``.

    Returns ``(t_star, c, rms_residual)``.  The starting point comes from
    the linearisation ``1/l^2 = 2 (T* - t)`` (exact when ``c = 0``).
    """
    t = np.asarray(t, dtype=float)
    l = np.asarray(l, dtype=float)
    t0 = float(np.mean(t + 0.5 / l ** 2))
    span = max(t[-1] - t[0], 1e-300)
    if t0 <= t[-1]:
        t0 = t[-1] + 1e-3 * span

    def resid(p):
        gap = np.maximum(p[0] - t, 1e-300)
        return 1.0 / np.sqrt(2.0 * gap) - p[1] - l

    r0 = resid([t0, 0.0])
    if np.max(np.abs(r0)) <= 1e-14 * np.max(np.abs(l)):
        return t0, 0.0, float(np.sqrt(np.mean(r0 ** 2)))
    sol = optimize.least_squares(resid, x0=[t0, 0.0],
                                 bounds=([t[-1] + 1e-12 * span, -np.inf], [np.inf, np.inf]),
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    return float(sol.x[0]), float(sol.x[1]), float(np.sqrt(np.mean(sol.fun ** 2)))


def fit_profile_exponent(x, f):
    """Power ``nu`` with ``f ~ x**-nu`` by log-log least squares; returns ``(nu, rms)``."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    keep = f > 0
    if keep.sum() < 2:
        raise FitRefused("need at least two positive samples for the profile fit")
    lx, lf = np.log(x[keep]), np.log(f[keep])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, lf, rcond=None)
    res = lf - A @ coef
    return float(-coef[0]), float(np.sqrt(np.mean(res ** 2)))


def profile_window(nodes, values=None, x_lo: Optional[float] = None, min_nodes: int = 4):
    """Decade ``[lo, 10 lo]`` used for the profile-exponent fit.

    With ``x_lo`` given it is used as ``lo``.  Otherwise ``lo`` is ten times
    the node where ``x f`` peaks (the inner edge of the developed power-law
    region), or the first node once that peak sits there.  On strongly
    graded grids a decade can hold fewer than ``min_nodes`` nodes; the upper
    end is then widened to the ``min_nodes``-th node above ``lo``.
    """
    x = np.asarray(nodes)
    if x_lo is not None:
        lo = float(x_lo)
    elif values is not None:
        peak = int(np.argmax(x * np.asarray(values)))
        lo = float(x[0]) if peak == 0 else float(10.0 * x[peak])
    else:
        lo = float(x[0])
    hi = 10.0 * lo
    inside = np.nonzero((x >= lo * (1 - 1e-12)) & (x <= hi * (1 + 1e-12)))[0]
    if inside.size < min_nodes:
        start = int(np.searchsorted(x, lo * (1 - 1e-12)))
        hi = float(x[min(start + min_nodes - 1, x.size - 1)])
    return lo, hi


def blowup_fit(traj, delta: float, min_growth: float = 3.0,
               profile_lo: Optional[float] = None) -> BlowupFit:
    """Fit the blow-up time from ``l_delta(t)`` and the near-origin profile exponent.

    ``delta`` must match the one the trajectory's records were made with.
    The time fit uses the records in the last decade of ``l_delta`` growth;
    the profile window is described in :func:`profile_window`.  Raises
    :class:`FitRefused` when ``l_delta`` grew by less than ``min_growth``.
    """
    t = _column(traj, "time")
    lv = _column(traj, "l1_local")
    if lv.size < 3 or lv[-1] < min_growth * lv[0]:
        raise FitRefused(f"insufficient dynamic range: l_delta grew "
                         f"{lv[-1] / max(lv[0], 1e-300):.3g}x (< {min_growth}x)")
    sel = lv >= lv[-1] / 10.0
    first = int(np.argmax(sel))
    ts, ls = t[first:], lv[first:]
    if ts.size < 3:
        ts, ls = t[-3:], lv[-3:]
    t_star, c, res = fit_blowup_time(ts, ls)

    exponent, eres, pw = float("nan"), float("nan"), ()
    snaps = getattr(traj, "snapshots", None)
    if snaps:
        final = snaps[-1]
        lo, hi = profile_window(final.grid.nodes, final.values, profile_lo)
        x = final.grid.nodes
        m = (x >= lo * (1 - 1e-12)) & (x <= hi * (1 + 1e-12))
        exponent, eres = fit_profile_exponent(x[m], final.values[m])
        pw = (lo, hi)
    return BlowupFit(t_star=t_star, exponent=exponent, c_offset=c,
                     window=(float(ts[0]), float(ts[-1])), residual=res,
                     exponent_residual=eres, profile_window=pw)


# --- comparison function ---------------------------------------------------

def comparison_lambda(t, C: float, energy: float):
    with np.errstate(over="ignore"):
        return np.exp(C * np.asarray(t, dtype=float) * (2.0 * energy + 11.0 * C * C + 2.0 * C))


def comparison_profile(t: float, C: float, energy: float):
    """``x -> C min(lambda(t), 1/x)`` with ``lambda(t) = exp(C t (2e + 11C^2 + 2C))``."""
    if C < 1:
        raise ValueError("C must be >= 1")
    lam = float(comparison_lambda(t, C, energy))

    def profile(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(x > 0, 1.0 / np.where(x > 0, x, 1.0), np.inf)
        out = C * np.minimum(lam, inv)
        return float(out) if out.ndim == 0 else out

    profile.lam = lam
    return profile


@dataclass
class ComparisonReport:
    passed: bool
    C: float
    C_min: Optional[float]
    first_violation: Optional[dict]
    checked_times: int
    needed_C: List[tuple] = field(default_factory=list)  # (t, smallest C passing up to t)


def _needed_C_at(dist: Distribution, energy: float, tol: float, lo=1.0, hi=1024.0):
    x = dist.grid.nodes
    f = dist.values

    def ok(C):
        return bool(np.all(f <= comparison_profile(dist.time, C, energy)(x) + tol))

    if ok(lo):
        return lo
    if not ok(hi):
        return None
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < 1e-6:
            break
    return hi


def verify_comparison(traj, C: Optional[float] = None, t_max: Optional[float] = None,
                      tol: float = 1e-12) -> ComparisonReport:
    """Check ``f(x_i, t) <= C min(lambda(t), 1/x_i)`` on every stored snapshot.

    With ``C=None`` only the bisection for the smallest passing ``C`` in
    ``[1, 2**10]`` is performed and the report passes when it exists.
    """
    snaps = [s for s in traj.snapshots if t_max is None or s.time <= t_max * (1 + 1e-12)]
    if not snaps:
        raise ValueError("trajectory has no snapshots in range")
    f0 = snaps[0]
    x = f0.grid.nodes
    if np.any(f0.values > np.minimum(1.0, 1.0 / x) * (1 + 1e-12) + tol):
        raise ValueError("initial data must satisfy f(x,0) <= min(1, 1/x)")
    energy = integrate(f0, 1.5)

    needed = []
    running = 1.0
    for s in snaps:
        c = _needed_C_at(s, energy, tol)
        running = float("inf") if c is None else max(running, c)
        needed.append((s.time, running))
    C_min = None if not math.isfinite(running) else running

    first = None
    check_C = C if C is not None else C_min
    if check_C is not None:
        for s in snaps:
            phi = comparison_profile(s.time, check_C, energy)(x)
            bad = np.nonzero(s.values > phi + tol)[0]
            if bad.size:
                i = int(bad[0])
                first = {"time": s.time, "node": i, "x": float(x[i]),
                         "f": float(s.values[i]), "bound": float(phi[i])}
                break
    passed = check_C is not None and first is None
    return ComparisonReport(passed=passed, C=check_C if check_C is not None else float("nan"),
                            C_min=C_min, first_violation=first,
                            checked_times=len(snaps), needed_C=needed)


def loss_lowerbound_ratio(dist: Distribution, loss: Optional[np.ndarray] = None) -> float:
    """``min_i a_i / (2 sqrt(x_i) m(f))``.

    A value at or above 1 would mean the decay floor ``exp(-2 sqrt(x) m t)``
    holds for the discrete loss rate.  Measured and returned either way.
    """
    m = integrate(dist, 0.5)
    if not m > 0:
        raise ValueError("distribution has zero mass")
    if loss is None:
        from .collision import loss_rate
        loss = loss_rate(dist)
    return float(np.min(loss / (2.0 * np.sqrt(dist.grid.nodes) * m)))


# --- CSV stream ------------------------------------------------------------

def write_records_csv(records: Sequence[DiagnosticsRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for r in records:
            fh.write(",".join(f"{v:.17g}" for v in r.row()) + "\n")


def read_records_csv(path) -> List[DiagnosticsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"unexpected diagnostics header {header}")
        return [DiagnosticsRecord(*(float(v) for v in row)) for row in reader if row]
