"""Time stepping in mild (exponential) form.

Within a step the loss rate ``a`` and gain rate ``J`` are frozen, so the
update ``f e^{-a dt} + J (1 - e^{-a dt})/a`` is a sum of nonnegative terms
and positivity holds for any step size.  ``etd_midpoint`` re-evaluates the
rates at a predicted half-step state.

:func:`picard_mild` iterates the same formula as a fixed-point map on a
whole time interval instead of marching step by step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .collision import CollisionRates, collision_rates, conservative_remap
from .diagnostics import DiagnosticsConfig, DiagnosticsRecord, make_record, sup_xf
from .grid import Distribution, integrate, grid_block, parse_grid_lines

__all__ = [
    "StepControls",
    "Trajectory",
    "StopReason",
    "SCHEMES",
    "step_exponential",
    "choose_dt",
    "StepUnderflow",
    "run",
    "picard_mild",
    "PicardResult",
    "write_checkpoint",
    "write_snapshot",
    "read_checkpoint",
]

SCHEMES = ("etd1", "etd_midpoint")
_SMALL_EXPONENT = 1e-8


class StopReason:
    REACHED_T_END = "reached_t_end"
    BLOWUP_THRESHOLD = "blowup_threshold"
    STEP_UNDERFLOW = "step_underflow"
    NUMERIC_FAULT = "numeric_fault"
    ALL = (REACHED_T_END, BLOWUP_THRESHOLD, STEP_UNDERFLOW, NUMERIC_FAULT)


@dataclass(frozen=True)
class StepControls:
    """Step-size caps and stopping rules.

    ``rel_floor`` keeps the relative-change cap from collapsing on nodes
    where ``f`` is tiny: the change at node ``i`` is measured against
    ``f_i + rel_floor * max(f)``.
    """

    dt_init: float = 1e-3
    dt_max: float = 0.05
    cfl_loss: float = 0.5
    rel_change_cap: float = 0.05
    blowup_threshold: float = 1e4
    t_end: float = 1.0
    rel_floor: float = 1e-3

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "cfl_loss", "rel_change_cap",
                     "blowup_threshold", "t_end", "rel_floor"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.cfl_loss > 1:
            raise ValueError("cfl_loss must not exceed 1")
        if not math.isfinite(self.t_end):
            raise ValueError("t_end must be finite")


@dataclass
class Trajectory:
    snapshots: List[Distribution] = field(default_factory=list)
    records: List[DiagnosticsRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None
    message: str = ""
    remap_failures: int = 0
    state: dict = field(default_factory=dict)

    def set_stop(self, reason: str, message: str = "") -> None:
        if self.stop_reason is not None:
            raise RuntimeError("stop reason already set")
        if reason not in StopReason.ALL:
            raise ValueError(reason)
        self.stop_reason = reason
        self.message = message

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self) -> Distribution:
        return self.snapshots[-1]


def _phi1_update(f, a, J, dt):
    z = a * dt
    small = z < _SMALL_EXPONENT
    zs = np.where(small, 1.0, z)
    frac = np.where(small, dt, -np.expm1(-zs) / np.where(small, 1.0, a))
    return f * np.exp(-z) + J * frac


def _check_rates(rates: CollisionRates):
    if not (np.all(np.isfinite(rates.loss)) and np.all(np.isfinite(rates.gain))):
        raise FloatingPointError("non-finite collision rates")


def step_exponential(dist: Distribution, dt: float, scheme: str = "etd1",
                     rates: Optional[CollisionRates] = None) -> Distribution:
    """One exponential step of size ``dt``.

    ``rates`` may carry the already evaluated rates at ``dist``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if rates is None:
        rates = collision_rates(dist)
    _check_rates(rates)
    f = dist.values
    if scheme == "etd_midpoint":
        half = dist.evolve(_phi1_update(f, rates.loss, rates.gain, 0.5 * dt),
                           time=dist.time + 0.5 * dt)
        rates = collision_rates(half)
        _check_rates(rates)
    new = _phi1_update(f, rates.loss, rates.gain, dt)
    return dist.evolve(np.maximum(new, 0.0), time=dist.time + dt, step=dist.step + 1)


class StepUnderflow(ArithmeticError):
    """Step controller asked for ``dt < 1e-14 t_end``."""

    def __init__(self, dt):
        super().__init__(f"step size {dt:.3e} underflows")
        self.dt = dt


def choose_dt(dist: Distribution, rates: CollisionRates, controls: StepControls,
              dt_prev: float) -> float:
    """Largest step allowed by the growth, loss-rate and relative-change caps.

    Raises :class:`StepUnderflow` below ``1e-14 * t_end``.
    """
    dt = min(controls.dt_max, 1.5 * dt_prev)
    amax = float(np.max(rates.loss)) if rates.loss.size else 0.0
    if amax > 0:
        dt = min(dt, controls.cfl_loss / amax)
    f = dist.values
    q = np.abs(rates.gain - f * rates.loss)
    qmax = float(np.max(q)) if q.size else 0.0
    if qmax > 0:
        ref = f + controls.rel_floor * float(np.max(f))
        with np.errstate(divide="ignore"):
            rate = np.max(q / np.where(ref > 0, ref, np.inf))
        if rate > 0:
            dt = min(dt, controls.rel_change_cap / rate)
    if not dt >= 1e-14 * controls.t_end:
        raise StepUnderflow(dt)
    return dt


# --- checkpoints -----------------------------------------------------------

_STATE_KEYS = ("step", "dt_prev", "mass0", "energy0", "supxf0")


def write_checkpoint(path, dist: Distribution, state: Optional[dict] = None) -> None:
    """Grid block, ``t=<time>``, one metadata line, then one ``f_i`` per line.

    Without ``state`` the metadata line is omitted (a plain snapshot).
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(grid_block(dist.grid))
        fh.write(f"t={dist.time:.17g}\n")
        if state is not None:
            meta = " ".join(f"{k}={int(state[k])}" if k == "step" else f"{k}={state[k]:.17g}"
                            for k in _STATE_KEYS)
            fh.write(f"# {meta}\n")
        for v in dist.values:
            fh.write(f"{v:.17g}\n")


def write_snapshot(path, dist: Distribution) -> None:
    write_checkpoint(path, dist, None)


def read_checkpoint(path):
    """Inverse of :func:`write_checkpoint`; returns ``(dist, state)``.

    Also reads plain snapshots, whose state is then empty.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    grid, rest = parse_grid_lines(lines)
    rest = [ln for ln in rest if ln.strip()]
    if not rest or not rest[0].startswith("t="):
        raise ValueError(f"{path}: missing 't=' line after grid block")
    time = float(rest[0][2:])
    state = {}
    body = rest[1:]
    if body and body[0].startswith("#"):
        for tok in body[0][1:].split():
            k, v = tok.split("=", 1)
            state[k] = int(v) if k == "step" else float(v)
        body = body[1:]
    values = np.array([float(v) for v in body])
    if values.size != grid.size:
        raise ValueError(f"{path}: {values.size} values for a {grid.size}-node grid")
    return Distribution(grid, values, time, int(state.get("step", 0))), state


# --- marching --------------------------------------------------------------

def run(initial: Distribution, controls: StepControls, scheme: str = "etd1",
        remap_on: bool = True, diagnostics: DiagnosticsConfig = DiagnosticsConfig(),
        snapshot_stride: int = 1, resume: Optional[dict] = None,
        checkpoint_path=None, checkpoint_every: int = 0,
        on_step: Optional[Callable[[Distribution, DiagnosticsRecord], None]] = None,
        ) -> Trajectory:
    """March ``initial`` to ``controls.t_end``.

    The first record is the initial state with ``dt = 0``.  Remapping (when
    on) restores the moments of the initial state, or of ``resume``.  The
    blow-up rule compares ``sup x f`` with its initial value and is inactive
    when that value is zero.  The state that triggers it is the last one
    kept.

    ``resume`` is the state dict returned by :func:`read_checkpoint`; passing
    it with the checkpointed distribution continues the original run
    bit-for-bit.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")

    if resume:
        mass0, energy0 = resume["mass0"], resume["energy0"]
        supxf0, dt_prev = resume["supxf0"], resume["dt_prev"]
    else:
        mass0, energy0 = integrate(initial, 0.5), integrate(initial, 1.5)
        supxf0 = sup_xf(initial)
        dt_prev = controls.dt_init / 1.5

    traj = Trajectory()
    dist = initial
    traj.snapshots.append(dist)
    traj.records.append(make_record(dist, 0.0, diagnostics))
    do_remap = remap_on and mass0 > 0 and energy0 > 0

    def state():
        return {"step": dist.step, "dt_prev": dt_prev, "mass0": mass0,
                "energy0": energy0, "supxf0": supxf0}

    steps = 0
    t_end = controls.t_end
    while True:
        if dist.time >= t_end * (1 - 1e-14):
            traj.set_stop(StopReason.REACHED_T_END)
            break
        try:
            rates = collision_rates(dist)
            dt = choose_dt(dist, rates, controls, dt_prev)
            if dist.time + dt > t_end or t_end - (dist.time + dt) < 1e-12 * t_end:
                dt = t_end - dist.time
            new = step_exponential(dist, dt, scheme, rates=rates)
        except StepUnderflow as exc:
            traj.set_stop(StopReason.STEP_UNDERFLOW, str(exc))
            break
        except FloatingPointError as exc:
            traj.set_stop(StopReason.NUMERIC_FAULT, str(exc))
            break
        if new.time <= dist.time:
            traj.set_stop(StopReason.STEP_UNDERFLOW, "time did not advance")
            break
        if do_remap:
            new, ok = conservative_remap(new, mass0, energy0)
            if not ok:
                traj.remap_failures += 1
        if not np.all(np.isfinite(new.values)):
            traj.set_stop(StopReason.NUMERIC_FAULT, "non-finite state after step")
            break
        dist = new
        dt_prev = dt
        steps += 1
        rec = make_record(dist, dt, diagnostics)
        traj.records.append(rec)
        blown = supxf0 > 0 and rec.supxf >= controls.blowup_threshold * supxf0
        finished = dist.time >= t_end * (1 - 1e-14)
        if steps % snapshot_stride == 0 or blown or finished:
            traj.snapshots.append(dist)
        if checkpoint_path is not None and checkpoint_every and steps % checkpoint_every == 0:
            write_checkpoint(checkpoint_path, dist, state())
        if on_step is not None:
            on_step(dist, rec)
        if blown:
            traj.set_stop(StopReason.BLOWUP_THRESHOLD,
                          f"sup x f = {rec.supxf:.6g} >= {controls.blowup_threshold:g} x "
                          f"{supxf0:.6g}")
            break
    traj.state = state()
    return traj


# --- Picard iteration ------------------------------------------------------

class PicardResult(NamedTuple):
    path: List[Distribution]
    converged: bool
    iterations: int
    residual: float


def _mild_map(f0, times, loss, gain):
    """Apply the mild-form map to rate histories ``loss, gain`` of shape ``(M+1, N)``."""
    h = np.diff(times)[:, None]
    # cumulative trapezoid of the loss rate
    A = np.vstack([np.zeros_like(f0), np.cumsum(0.5 * h * (loss[1:] + loss[:-1]), axis=0)])
    out = np.empty_like(loss)
    out[0] = f0
    for n in range(1, times.size):
        decay = np.exp(-(A[n] - A[: n + 1]))  # e^{-(A_n - A_m)}, m = 0..n
        wts = np.full(n + 1, times[1] - times[0])
        wts[0] *= 0.5
        wts[-1] *= 0.5
        out[n] = f0 * decay[0] + np.sum(wts[:, None] * decay * gain[: n + 1], axis=0)
    return out


def picard_mild(initial: Distribution, horizon: float, max_iters: int = 50,
                tol: float = 1e-10, levels: int = 64) -> PicardResult:
    """Fixed-point iteration of the mild-form map on ``[0, horizon]``.

    The time axis has ``levels`` uniform intervals; both the exponent
    integral and the Duhamel integral use the composite trapezoid rule.
    The iteration starts from the constant path ``f(t) = initial``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    times = initial.time + np.linspace(0.0, horizon, levels + 1)
    f0 = initial.values
    path = np.tile(f0, (levels + 1, 1))
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        loss = np.empty_like(path)
        gain = np.empty_like(path)
        for n in range(levels + 1):
            r = collision_rates(initial.evolve(path[n], time=times[n]))
            loss[n], gain[n] = r.loss, r.gain
        new = _mild_map(f0, times, loss, gain)
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("non-finite Picard iterate")
        residual = float(np.max(np.abs(new - path)))
        scale = 1.0 + float(np.max(path))
        path = np.maximum(new, 0.0)
        if residual <= tol * scale:
            converged = True
            break
    dists = [initial.evolve(path[n], time=times[n], step=n) for n in range(levels + 1)]
    return PicardResult(dists, converged, it, residual)
