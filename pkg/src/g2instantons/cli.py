"""Command-line entry point: ``g2inst <verb> [--config PATH] [--out DIR] ...``.

Verbs: fixed-points, tune-metric, integrate, shoot, sweep, verify, plot.
Exit status is 0 on success, 1 on a numeric failure and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from . import dynamics as dyn
from .errors import ConfigError, G2InstantonError, NoBracket, NumericFailure
from .instanton import BundleIndex, LocalData, integrate_connection, trajectory_diagnostics
from .metric import (CONE_K, INEQUALITIES, MetricParams, _atomic_write, ac_profile, classify_beta, inequality_audit,
                     profile_manifest, tuned_ac_profile, write_profile_csv)
from .plotting import line_chart
from .verify import run_all


@dataclass
class RunConfig:
    """Validated run settings; every field can be set in a flat ``key = value`` file."""

    m: int = 1
    n: int = 1
    r0: float = 1.0
    beta: str = "tune"
    j: int = 1
    f0: float = 0.1
    h0: Optional[float] = None
    f0_min: float = 0.05
    f0_max: float = 0.25
    f0_count: int = 5
    t0: Optional[float] = None
    T_max: float = 100.0
    tol: float = 1e-11
    eps_conv: float = dyn.EPS_CONV
    R_big: float = dyn.R_BIG
    tau_check: float = dyn.TAU_CHECK
    tau_end: float = dyn.TAU_END
    seed: int = 0
    jobs: int = 1
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            MetricParams(self.m, self.n, self.r0, 1.0)
            BundleIndex(self.m, self.n, self.j)
        except (ValueError, G2InstantonError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.beta != "tune":
            try:
                b = float(self.beta)
            except ValueError as exc:
                raise ConfigError(f"beta must be 'tune' or a positive number, got {self.beta!r}") from exc
            if not b > 0:
                raise ConfigError("beta must be positive")
        if self.f0_count < 1 or not self.f0_min <= self.f0_max:
            raise ConfigError("f0 grid needs f0_count >= 1 and f0_min <= f0_max")
        if self.t0 is not None and not self.t0 > 0:
            raise ConfigError("t0 must be positive")
        for name in ("T_max", "tol", "eps_conv", "R_big", "tau_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.tau_check >= self.tau_end:
            raise ConfigError("tau_check must be smaller than tau_end")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser["run"].items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _convert(key, raw, types[key])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        return cls.from_text(text, **overrides)

    def params(self, beta: Optional[float] = None) -> MetricParams:
        return MetricParams(self.m, self.n, self.r0, float(self.beta) if beta is None else beta)

    def as_dict(self):
        return dataclasses.asdict(self)


def _convert(key, raw, typ):
    raw = raw.strip()
    try:
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
        if typ in ("Optional[float]",):
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


# output helpers ---------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    def writer(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])

    _atomic_write(path, writer)


def write_text(path, text):
    _atomic_write(path, lambda fh: fh.write(text))


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _profile(cfg: RunConfig):
    if cfg.beta == "tune":
        return tuned_ac_profile(cfg.params(1.0))
    return ac_profile(cfg.params())


# commands -----------------------------------------------------------------------------

def cmd_fixed_points(cfg: RunConfig, out: str) -> dict:
    records = [dyn.linearize(loc) for loc in ("z0", "z+", "z-")]
    data = [r.as_dict() for r in records]
    write_text(os.path.join(out, "fixed_points.json"), dumps(data))
    for r in records:
        lam = ", ".join(f"{x:g}" for x in r.eigenvalues)
        print(f"{r.location:>3}  eigenvalues {{{lam}}}  fd-vs-analytic {r.fd_error:.1e}")
    return {"fixed_points": {r.location: [float(x) for x in r.eigenvalues] for r in records},
            "max_fd_error": max(r.fd_error for r in records)}


def _scan_table(cfg: RunConfig, lo=0.5, hi=3.0, n=11):
    rows = []
    for beta in np.linspace(lo, hi, n):
        try:
            rows.append((float(beta), classify_beta(cfg.params(float(beta)))))
        except NumericFailure as exc:
            rows.append((float(beta), type(exc).__name__))
    return rows


def cmd_tune_metric(cfg: RunConfig, out: str) -> dict:
    try:
        prof = _profile(cfg)
    except NoBracket:
        print("beta      classification")
        for beta, c in _scan_table(cfg):
            print(f"{beta:<9.4f} {c}")
        raise
    T = prof.info["T_max"]
    ts = np.geomspace(prof.info["t0"], T, 400)
    write_profile_csv(prof, ts, os.path.join(out, "profile.csv"))
    audit = inequality_audit(prof, ts)
    print(f"beta = {prof.params.beta!r}")
    print(f"decay exponent = {prof.info['exponent']:.6f}")
    for label in INEQUALITIES:
        print(f"  {label:<10} {'pass' if audit[label].all() else 'FAIL'}")
    a, b, _, _ = prof.state(T)
    info = profile_manifest(prof)
    info["audit"] = {k: bool(v.all()) for k, v in audit.items()}
    info["far_end_ratio"] = [a / (CONE_K * T**3), b / (CONE_K * T**3)]
    return info


TRAJECTORY_HEADER = ("t", "f", "fp", "g", "h", "residual", "curvature_norm")


def _trajectory_rows(traj, prof):
    res, curv = trajectory_diagnostics(traj, prof)
    return [(t, *z, r, c) for t, z, r, c in zip(traj.t, traj.z, res, curv)]


def _plot_trajectory(rows, path, title):
    arr = np.array([r[:5] for r in rows], dtype=float)
    svg = line_chart(np.log10(arr[:, 0]), {"f": arr[:, 1], "fp": arr[:, 2], "g": arr[:, 3], "h": arr[:, 4]},
                     "log10 t", "value", title)
    write_text(path, svg)


def cmd_integrate(cfg: RunConfig, out: str) -> dict:
    prof = _profile(cfg)
    h0 = 0.0 if cfg.h0 is None else cfg.h0
    traj = integrate_connection(BundleIndex(cfg.m, cfg.n, cfg.j), LocalData(cfg.f0, h0), prof, cfg.t0,
                                cfg.T_max * cfg.r0, tol=cfg.tol, strict=False)
    rows = _trajectory_rows(traj, prof)
    write_csv(os.path.join(out, "trajectory.csv"), TRAJECTORY_HEADER, rows)
    _plot_trajectory(rows, os.path.join(out, "trajectory.svg"), f"f0={cfg.f0:g}, h0={h0:g}")
    print(f"exit: {traj.exit_reason} at t={traj.t_exit:.6g}")
    return {"exit_reason": traj.exit_reason, "t_exit": traj.t_exit, "f0": cfg.f0, "h0": h0}


def _shoot_kw(cfg: RunConfig) -> dict:
    return dict(t0=cfg.t0, tau_end=cfg.tau_end, R_big=cfg.R_big, eps_conv=cfg.eps_conv, tau_check=cfg.tau_check)


def cmd_shoot(cfg: RunConfig, out: str) -> dict:
    prof = _profile(cfg)
    res = dyn.shoot_h0(cfg.f0, prof, j=cfg.j, **_shoot_kw(cfg))
    rows = _trajectory_rows(res.trajectory, prof)
    write_csv(os.path.join(out, "trajectory.csv"), TRAJECTORY_HEADER, rows)
    _plot_trajectory(rows, os.path.join(out, "trajectory.svg"), f"f0={cfg.f0:g}, h0={res.h0:.10g}")
    summary = {"f0": res.f0, "h0": res.h0, "classification": res.classification, "exit_tau": res.exit_tau,
               "distance_to_target": res.distance_to_target, "bracket": list(res.bracket),
               "iterations": res.iterations}
    if res.converged:
        d = dyn.diagnose(res, prof)
        summary.update(far_field_distance=d.far_field_distance, max_curvature=d.max_curvature,
                       g_monotone=d.g_monotone, parity_passed=d.parity_passed)
    print(f"f0={res.f0!r}  h0={res.h0!r}  {res.classification}")
    return summary


def cmd_sweep(cfg: RunConfig, out: str) -> dict:
    prof = _profile(cfg)
    grid = np.linspace(cfg.f0_min, cfg.f0_max, cfg.f0_count)
    rep = dyn.family_sweep(grid, prof, jobs=cfg.jobs, j=cfg.j, **_shoot_kw(cfg))
    write_csv(os.path.join(out, "sweep.csv"), dyn.SWEEP_HEADER, [r.csv_row() for r in rep.rows])
    ok = sorted(rep.converged_rows, key=lambda r: r.f0)
    if ok:
        svg = line_chart([r.f0 for r in ok], {"h0": [r.h0 for r in ok]}, "f0", "h0", "converged family")
        write_text(os.path.join(out, "sweep.svg"), svg)
    for r in rep.rows:
        print(f"f0={r.f0:<8.4g} h0={r.h0:<22.17g} {r.classification}")
    return {"achieved_epsilon": rep.achieved_epsilon, "max_adjacent_jump": rep.max_adjacent_jump,
            "max_slope": rep.max_slope, "converged": len(ok), "total": len(rep.rows)}


def cmd_verify(cfg: RunConfig, out: str) -> dict:
    prof = _profile(cfg)
    results = run_all(prof, cfg.seed)
    for r in results:
        print(r.line())
    summary = {r.name: {"passed": r.passed, "value": r.value, "tolerance": r.tolerance} for r in results}
    if not all(r.passed for r in results):
        failed = [r.name for r in results if not r.passed]
        raise VerificationFailed(f"failed suites: {', '.join(failed)}", summary)
    return summary


class VerificationFailed(NumericFailure):
    def __init__(self, message, summary):
        super().__init__(message)
        self.summary = summary


def cmd_plot(path: str, out: str) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float, ndmin=2)
    x, xlabel = data[:, 0], header[0]
    if header[0] == "t":
        x, xlabel = np.log10(x), "log10 t"
    series = {h: data[:, i] for i, h in enumerate(header) if i > 0 and np.isfinite(data[:, i]).any()}
    target = os.path.join(out, os.path.splitext(os.path.basename(path))[0] + ".svg")
    write_text(target, line_chart(x, series, xlabel, "value", os.path.basename(path)))
    print(target)
    return {"input": path, "svg": target}


COMMANDS = {
    "fixed-points": cmd_fixed_points,
    "tune-metric": cmd_tune_metric,
    "integrate": cmd_integrate,
    "shoot": cmd_shoot,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="g2inst", description="Invariant instantons on asymptotically conical G2 metrics.")
    ap.add_argument("command", choices=[*COMMANDS, "plot"])
    ap.add_argument("csv", nargs="?", help="input CSV for the plot command")
    ap.add_argument("--config", help="flat 'key = value' configuration file")
    ap.add_argument("--out", help="output directory (default from config, else ./out)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--jobs", type=int)
    return ap


def write_manifest(out, command, cfg, started, status, summary):
    manifest = {
        "command": command,
        "config": cfg.as_dict() if cfg is not None else None,
        "version": __version__,
        "started": started,
        "elapsed_seconds": time.time() - started,
        "status": status,
        "results": summary,
    }
    write_text(os.path.join(out, "run_manifest.json"), dumps(manifest))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    cfg = None
    try:
        overrides = dict(seed=args.seed, tol=args.tol, jobs=args.jobs, out=args.out)
        cfg = RunConfig.from_file(args.config, **overrides) if args.config else RunConfig.from_text("", **overrides)
        out = cfg.out
        os.makedirs(out, exist_ok=True)
        if args.command == "plot":
            if not args.csv:
                raise ConfigError("plot needs a CSV path")
            if not os.path.exists(args.csv):
                raise ConfigError(f"no such file: {args.csv!r}")
            summary = cmd_plot(args.csv, out)
        else:
            summary = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        write_manifest(cfg.out, args.command, cfg, started, "failed", getattr(exc, "summary", {"error": str(exc)}))
        return 1
    write_manifest(out, args.command, cfg, started, "ok", summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
