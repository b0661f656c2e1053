"""Command line front end: ``bn simulate|equilibrium|verify|blowup-fit|norms``.

Run configurations are flat ``key = value`` files with dotted section
prefixes, for example::

    grid.node_count = 128
    grid.grading = power
    initial.kind = be
    initial.alpha = 1.0
    controls.t_end = 1.0

``#`` starts a comment.  A ``summary.json`` written by ``bn simulate`` is
also accepted as a configuration; its embedded ``config`` block is used.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .diagnostics import (DiagnosticsConfig, FitRefused, blowup_fit, gbeta_norm, local_mass,
                          read_records_csv, sup_xf, weighted_sup, write_records_csv)
from .equilibrium import BEParams, FitError, be_distribution, fit_equilibrium
from .grid import Distribution, GridSpec, build_grid, integrate
from .integrator import (SCHEMES, StepControls, StopReason, read_checkpoint, run,
                         write_snapshot)

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "build_initial",
           "cmd_simulate", "cmd_equilibrium", "cmd_verify", "cmd_blowup_fit", "cmd_norms",
           "main"]

INITIAL_KINDS = ("be", "singular", "bump", "file")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "be"
    alpha: float = 1.0
    beta: float = 1.0
    scale: float = 1.0
    decay: float = 1.0
    center: float = 1.0
    width: float = 0.5
    height: float = 1.0
    critical_ratio: float = 0.0  # > 0: rescale amplitude to this multiple of critical mass
    path: str = ""


@dataclass(frozen=True)
class FitSpec:
    profile_lo: float = 0.0  # 0: start the profile window at the first node


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = GridSpec()
    initial: InitialSpec = InitialSpec()
    controls: StepControls = StepControls()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    fit: FitSpec = FitSpec()
    scheme: str = "etd1"
    remap_on: bool = True
    output_dir: str = "bn-output"
    snapshot_stride: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be an integer >= 1")
        if self.initial.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}")

    def flat(self) -> dict:
        out = {}
        for sect in ("grid", "initial", "controls", "diagnostics", "fit"):
            for k, v in asdict(getattr(self, sect)).items():
                out[f"{sect}.{k}"] = v
        for k in ("scheme", "remap_on", "output_dir", "snapshot_stride", "checkpoint_every"):
            out[k] = getattr(self, k)
        return out


_SECTIONS = {"grid": GridSpec, "initial": InitialSpec, "controls": StepControls,
             "diagnostics": DiagnosticsConfig, "fit": FitSpec}
_TOP = {"scheme": str, "remap_on": bool, "output_dir": str, "snapshot_stride": int,
        "checkpoint_every": int}


def _convert(text, typ, default):
    if isinstance(text, bool) or (typ is not str and not isinstance(text, str)):
        value = text
        if typ is bool and not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    t = text.strip()
    if typ is bool or isinstance(default, bool):
        low = t.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {t!r}")
    if typ is int or (isinstance(default, int) and not isinstance(default, bool)):
        return int(t)
    if typ is float or isinstance(default, float):
        return float(t)
    if default is None:  # optional float
        return None if t.lower() in ("", "none") else float(t)
    return t


def _field_defaults(cls):
    return {f.name: (None, f.default) for f in fields(cls)}


def _resolve(pairs):
    """Build a :class:`RunConfig` from ``[(key, value, lineno)]``."""
    sect_kw = {s: {} for s in _SECTIONS}
    top_kw = {}
    for key, value, lineno in pairs:
        where = f"line {lineno}: " if lineno else ""
        if "." in key:
            sect, name = key.split(".", 1)
            if sect not in _SECTIONS:
                raise ConfigError(f"{where}unknown section {sect!r}")
            known = _field_defaults(_SECTIONS[sect])
            if name not in known:
                raise ConfigError(f"{where}unknown key {key!r}")
            typ, default = known[name]
            try:
                sect_kw[sect][name] = _convert(value, typ, default)
            except ValueError as exc:
                raise ConfigError(f"{where}{key}: {exc}") from None
        else:
            if key not in _TOP:
                raise ConfigError(f"{where}unknown key {key!r}")
            try:
                top_kw[key] = _convert(value, _TOP[key], getattr(RunConfig, key, None))
            except ValueError as exc:
                raise ConfigError(f"{where}{key}: {exc}") from None
    try:
        built = {s: cls(**sect_kw[s]) for s, cls in _SECTIONS.items()}
        return RunConfig(**built, **top_kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def parse_config(text: str) -> RunConfig:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        pairs.append((key, value, lineno))
    return _resolve(pairs)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if str(path).endswith(".json"):
        try:
            blob = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
        cfg = blob.get("config", blob)
        return _resolve([(k, v, 0) for k, v in cfg.items()])
    return parse_config(text)


def build_initial(cfg: RunConfig) -> Distribution:
    from .measures import singular_init

    ini = cfg.initial
    if ini.kind == "file":
        dist, _ = read_checkpoint(ini.path)
        return dist.evolve(dist.values, time=0.0, step=0)
    grid = build_grid(cfg.grid)
    if ini.kind == "be":
        dist = be_distribution(BEParams(ini.alpha, ini.beta), grid)
    elif ini.kind == "singular":
        dist = singular_init(ini.alpha, ini.scale, ini.decay, grid)
    else:
        x = grid.nodes
        dist = Distribution(grid, ini.height * np.maximum(
            0.0, 1.0 - ((x - ini.center) / ini.width) ** 2) ** 2)
    if ini.critical_ratio > 0:
        from .verify import scaled_to_critical_ratio
        dist = scaled_to_critical_ratio(dist, ini.critical_ratio)
    return dist


def _moments(dist):
    return {"time": dist.time, "mass": integrate(dist, 0.5), "energy": integrate(dist, 1.5),
            "l1_total": integrate(dist, 0.0), "supxf": sup_xf(dist)}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def cmd_simulate(config_path, out=None) -> int:
    try:
        cfg = load_config(config_path)
        initial = build_initial(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return 1
    outdir = cfg.output_dir
    snapdir = os.path.join(outdir, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    traj = run(initial, cfg.controls, cfg.scheme, cfg.remap_on, cfg.diagnostics,
               cfg.snapshot_stride,
               checkpoint_path=os.path.join(outdir, "checkpoint.dat") if cfg.checkpoint_every else None,
               checkpoint_every=cfg.checkpoint_every)
    write_records_csv(traj.records, os.path.join(outdir, "diagnostics.csv"))
    for i, snap in enumerate(traj.snapshots):
        write_snapshot(os.path.join(snapdir, f"{i:04d}.dat"), snap)

    summary = {"stop_reason": traj.stop_reason, "message": traj.message,
               "steps": len(traj.records) - 1, "remap_failures": traj.remap_failures,
               "initial": _moments(traj.snapshots[0]), "final": _moments(traj.final),
               "blowup_fit": None, "config": cfg.flat()}
    if traj.stop_reason in (StopReason.BLOWUP_THRESHOLD, StopReason.STEP_UNDERFLOW):
        try:
            fit = blowup_fit(traj, cfg.diagnostics.delta,
                             profile_lo=cfg.fit.profile_lo or None)
            summary["blowup_fit"] = fit.as_dict()
        except FitRefused as exc:
            summary["blowup_fit"] = {"refused": str(exc)}
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(summary), fh, indent=2)
        fh.write("\n")
    print(json.dumps({"stop_reason": traj.stop_reason, "output_dir": outdir}),
          file=out or sys.stdout)
    return 2 if traj.stop_reason == StopReason.NUMERIC_FAULT else 0


def cmd_equilibrium(mass, energy, out=None) -> int:
    try:
        params = fit_equilibrium(mass, energy)
    except (FitError, ValueError) as exc:
        print(f"equilibrium fit failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(params.as_dict()), file=out or sys.stdout)
    return 0


def cmd_verify(level="fast", out=None) -> int:
    from .verify import run_suite

    report = run_suite(level)
    print(json.dumps(_json_safe(report), indent=1), file=out or sys.stdout)
    return 0 if report["passed"] else 1


class _CsvTrajectory:
    def __init__(self, records, snapshots=()):
        self.records = records
        self.snapshots = list(snapshots)


def cmd_blowup_fit(csv_path, delta, snapshot=None, profile_lo=None, out=None) -> int:
    try:
        records = read_records_csv(csv_path)
        snaps = [read_checkpoint(snapshot)[0]] if snapshot else []
    except (OSError, ValueError) as exc:
        print(f"{exc}", file=sys.stderr)
        return 1
    try:
        fit = blowup_fit(_CsvTrajectory(records, snaps), delta, profile_lo=profile_lo)
    except FitRefused as exc:
        print(f"fit refused: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_json_safe(fit.as_dict())), file=out or sys.stdout)
    return 0


def cmd_norms(snapshot, beta, gamma, alpha, delta=1.0, out=None) -> int:
    try:
        dist, _ = read_checkpoint(snapshot)
    except (OSError, ValueError) as exc:
        print(f"{exc}", file=sys.stderr)
        return 1
    rep = _moments(dist)
    rep.update({"weighted_sup": weighted_sup(dist, alpha, gamma),
                "gbeta": gbeta_norm(dist, beta),
                "l_delta": local_mass(dist, min(delta, dist.grid.x_max)),
                "alpha": alpha, "gamma": gamma, "beta": beta, "delta": delta})
    print(json.dumps(rep), file=out or sys.stdout)
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="bn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation from a config file")
    s.add_argument("config")

    e = sub.add_parser("equilibrium", help="fit equilibrium parameters to mass and energy")
    e.add_argument("--mass", type=float, required=True)
    e.add_argument("--energy", type=float, required=True)

    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--level", choices=("fast", "full"), default="fast")

    b = sub.add_parser("blowup-fit", help="fit blow-up time from a diagnostics CSV")
    b.add_argument("csv")
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--snapshot", help="final snapshot for the profile exponent")
    b.add_argument("--profile-lo", type=float, default=None)

    n = sub.add_parser("norms", help="evaluate norms of a snapshot")
    n.add_argument("snapshot")
    n.add_argument("--beta", type=float, default=1.2)
    n.add_argument("--gamma", type=float, default=9.0)
    n.add_argument("--alpha", type=float, default=0.0)
    n.add_argument("--delta", type=float, default=1.0)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args.config)
    if args.command == "equilibrium":
        return cmd_equilibrium(args.mass, args.energy)
    if args.command == "verify":
        return cmd_verify(args.level)
    if args.command == "blowup-fit":
        return cmd_blowup_fit(args.csv, args.delta, args.snapshot, args.profile_lo)
    return cmd_norms(args.snapshot, args.beta, args.gamma, args.alpha, args.delta)


if __name__ == "__main__":
    sys.exit(main())
