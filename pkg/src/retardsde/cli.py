"""Command line entry point ``retard``.

Exit codes: 0 success, 1 a check or verdict failed, 2 bad usage or config.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .experiments import EXPERIMENTS, run_named_experiment
from .fundsol import AllZeroTail, fit_decay, fundamental_neutral, fundamental_retarded
from .output import csv_text, fmt, json_text
from .simulate import replica_increments, simulate_ensemble
from .spectrum import CharSpec, characteristic, rightmost_roots
from .stationarity import (coupling_contraction, segment_moment_bound,
                           stationarity_convergence_test)
from .voc import VocContext, voc_path, voc_reconstruct


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets global flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="run configuration file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit seed")
    p.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for CSV/JSON output")
    p.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                   help="nonzero exit when any verdict fails")
    p.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                   help="print machine-readable JSON")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="retard", parents=[common],
                                     description="Delay equation spectra, solutions and stationarity checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roots", parents=[common], help="rightmost characteristic roots")
    p.add_argument("--count", type=int, default=None)

    p = sub.add_parser("fundsol", parents=[common], help="fundamental solution and decay fit")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)

    p = sub.add_parser("voc", parents=[common], help="variation-of-constants solve")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--check-identity", action="store_true",
                   help="compare an Euler path with its reconstruction on shared noise")
    p.add_argument("--tol", type=float, default=0.02)

    p = sub.add_parser("simulate", parents=[common], help="simulate replica paths")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV file (default paths.csv in --out-dir)")
    p.add_argument("--thin", type=int, default=None)

    p = sub.add_parser("stationarity", parents=[common], help="contraction/moment/law diagnostics")
    p.add_argument("--replicas", type=int, default=None)

    p = sub.add_parser("experiment", parents=[common], help="run a named scenario")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario parameter")
    return parser


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    if path is None:
        raise UsageError(f"'{args.command}' needs --config")
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    dt = getattr(args, "dt", None)
    if dt is not None and dt != cfg.dt:
        cfg = cfg.with_dt(dt)
    return cfg


def _out_dir(args) -> Path:
    d = Path(getattr(args, "out_dir", None) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _charspec(cfg: RunConfig) -> CharSpec:
    m = cfg.model
    if m.kind == "neutral_diffusion":
        return CharSpec.neutral(m.rho, m.mu)
    return CharSpec.retarded(m.mu)


def cmd_roots(args) -> int:
    cfg = _config(args)
    spec = _charspec(cfg)
    rep = rightmost_roots(spec, args.count or cfg.root_count)
    rows = [(z.real, z.imag, abs(characteristic(spec, z))) for z in rep.roots]
    payload = {"roots": [{"re": r, "im": i, "residual": e} for r, i, e in rows],
               "v0_estimate": rep.v0_estimate, "certified_negative": rep.certified_negative,
               "essential_abscissa": rep.essential_abscissa, "notes": rep.notes,
               "box": list(rep.box)}
    if getattr(args, "out_dir", None):
        d = _out_dir(args)
        _write(d / "roots.csv", csv_text(["re", "im", "residual"], rows))
        _write(d / "roots.json", json_text(payload))
    if getattr(args, "json", False):
        sys.stdout.write(json_text(payload))
    else:
        print(f"{'re':>22} {'im':>22} {'|residual|':>12}")
        for r, i, e in rows:
            print(f"{r:>22.15g} {i:>22.15g} {e:>12.3g}")
        print(f"v0 estimate: {rep.v0_estimate:.10g}")
        print(f"certified negative: {rep.certified_negative}")
        for note in rep.notes:
            print(f"note: {note}")
    return 0 if rep.certified_negative else 1


def _fundsol(cfg: RunConfig, T: float, dt: float):
    m = cfg.model
    if m.kind == "neutral_diffusion":
        return fundamental_neutral(m.rho, m.mu, T, dt)
    return fundamental_retarded(m.mu, T, dt)


def cmd_fundsol(args) -> int:
    cfg = _config(args)
    T, dt = args.T or cfg.T, cfg.dt
    r = _fundsol(cfg, T, dt)
    try:
        fit = fit_decay(r)
        decay = {"c": fit.c, "gamma": fit.gamma}
    except AllZeroTail:
        decay = {"c": 0.0, "gamma": -np.inf}
    except ValueError as exc:
        decay = {"error": str(exc)}
    d = _out_dir(args)
    pos = r.t >= -1e-12
    _write(d / "fundsol.csv", csv_text(["t", "r"], zip(r.t[pos], r.values[pos])))
    _write(d / "fundsol.json", json_text(decay))
    sys.stdout.write(json_text(decay))
    return 0


def cmd_voc(args) -> int:
    cfg = _config(args)
    T, dt = args.T or cfg.T, cfg.dt
    m = cfg.model
    r = _fundsol(cfg, T, dt)
    rho = m.rho if m.kind == "neutral_diffusion" else None
    ctx = VocContext(r, m.mu, cfg.xi, rho)
    d = _out_dir(args)
    if not args.check_identity:
        x = voc_path(ctx, T)
        t = np.arange(len(x)) * dt
        _write(d / "voc.csv", csv_text(["t", "x"], zip(t, x)))
        return 0
    if m.kind != "retarded_diffusion":
        raise UsageError("--check-identity supports retarded_diffusion models")
    ens = simulate_ensemble(m, cfg.xi, T, dt, cfg.seed, replica_ids=[0])
    path = ens.path(0)
    dW = replica_increments(m, T, dt, cfg.seed, 0)
    g = np.array([m.sigma(path.segment(i * dt)) for i in range(len(dW))])
    rec = voc_reconstruct(ctx, g, dW)
    rms = float(np.sqrt(np.mean((rec - path.values[path.n:]) ** 2)))
    ok = rms < args.tol
    result = {"rms": rms, "tol": args.tol, "passed": ok}
    _write(d / "voc_identity.json", json_text(result))
    if getattr(args, "json", False):
        sys.stdout.write(json_text(result))
    else:
        print(f"RMS gap {fmt(rms)}: {'PASS' if ok else 'FAIL'} (tol {args.tol:g})")
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    cfg = _config(args)
    T, dt = args.T or cfg.T, cfg.dt
    R = args.replicas or cfg.replicas
    thin = args.thin or cfg.thin
    ens = simulate_ensemble(cfg.model, cfg.xi, T, dt, cfg.seed, replicas=R, thin=thin)
    out = Path(args.out) if args.out else _out_dir(args) / (cfg.output_paths or "paths.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = ((int(ens.replica_ids[j]), ens.t[k], ens.values[k, j])
            for j in range(len(ens.replica_ids)) for k in range(len(ens.t)))
    _write(out, csv_text(["replica", "t", "x"], rows))
    return 0


def cmd_stationarity(args) -> int:
    cfg = _config(args)
    R = args.replicas or cfg.replicas
    m = cfg.model
    conv = stationarity_convergence_test(m, cfg.xi, cfg.eta, cfg.checkpoints, cfg.dt, R,
                                         cfg.seed, cfg.offsets)
    cc = coupling_contraction(m, cfg.xi, cfg.eta, cfg.checkpoints[-1], cfg.dt, R, cfg.seed)
    p = 2
    if m.kind in ("levy_ou", "levy_multiplicative") and not m.noise.large_jump_second_moment_finite:
        p = 1
    mb = segment_moment_bound(m, cfg.xi, cfg.checkpoints[-1], cfg.dt, R, cfg.seed, p=p)
    rows = []
    for name in ("convergence", "uniqueness", "contraction"):
        t, v = conv.curves[name]
        rows += [(name, ti, vi) for ti, vi in zip(t, v)]
    rows += [("moment", ti, vi) for ti, vi in zip(mb.times, mb.moments)]
    verdicts = dict(conv.verdicts)
    verdicts["moment"] = mb.verdict
    payload = {"verdicts": verdicts, "floor": conv.floor,
               "fitted_rates": {"contraction_msd": cc.fitted_rate, **conv.fitted_rates},
               "moment_p": p, "replicas": R, "seed": cfg.seed}
    d = _out_dir(args)
    _write(d / "stationarity_curves.csv", csv_text(["curve", "t", "value"], rows))
    _write(d / "stationarity.json", json_text(payload))
    if getattr(args, "json", False):
        sys.stdout.write(json_text(payload))
    else:
        for k, v in verdicts.items():
            print(f"{k:>12}: {v}")
        print(f"contraction rate: {cc.fitted_rate:.6g}")
    failed = [k for k, v in verdicts.items() if v not in ("Converging", "Bounded")]
    return 1 if failed and getattr(args, "strict", False) else 0


def cmd_experiment(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("seed", str(args.seed))
    try:
        res = run_named_experiment(args.name, overrides)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    d = _out_dir(args)
    for fname, text in res.artifacts.items():
        _write(d / fname, text)
    if getattr(args, "json", False):
        sys.stdout.write(json_text(res.as_dict()))
    else:
        for c in res.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value!r} (target {c.target})")
        print(f"{res.name}: {'PASS' if res.passed else 'FAIL'} in {res.seconds:.1f}s")
    return 0 if res.passed else 1


COMMANDS = {"roots": cmd_roots, "fundsol": cmd_fundsol, "voc": cmd_voc, "simulate": cmd_simulate,
            "stationarity": cmd_stationarity, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("config errors:", file=sys.stderr)
        for ln, msg in exc.errors:
            print(f"  line {ln}: {msg}" if ln else f"  {msg}", file=sys.stderr)
        return 2
    except (UsageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
