"""Command-line entry points.

Exit codes: 0 success, 1 threshold failure, 2 usage or IO error, 3 optimizer
stopped without converging (stall or step budget spent).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import io as eio
from .config import ConfigError, RunConfig, parse_number
from .diagnostics import DiagnosticsConfig, full_report
from .eigensolve import ConvergenceError, analytic_spectrum, solve
from .grid_geometry import Grid, box_phi, disk_phi, make_shape, perimeter, resample, volume
from .objective import ObjectiveSpec
from .optimize import history_csv, run
from .svg import line_plot

logger = logging.getLogger("eigenshape")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_STALL = 0, 1, 2, 3


def _setup_logging():
    level = os.environ.get("EIGENSHAPE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# -- eig / baseline ------------------------------------------------------------------

def _eig_settings(args) -> dict:
    d = _load_json(args.config)
    for key in ("domain", "size", "N", "h", "threshold"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    d.setdefault("domain", "square")
    d.setdefault("size", 1.0)
    d.setdefault("N", 3)
    d.setdefault("threshold", 0.005)
    return d


def _domain_shape(name: str, size: float, h: float, margin: float):
    if name == "square":
        grid = Grid.from_box((-margin, -margin), (size + margin, size + margin), h)
        return make_shape(grid, box_phi(grid, (size / 2, size / 2), size))
    if name == "disk":
        ext = size + margin
        grid = Grid.from_box((-ext, -ext), (ext, ext), h)
        return make_shape(grid, disk_phi(grid, (0.0, 0.0), size))
    raise ConfigError(f"unknown domain {name!r}")


def cmd_eig(args) -> int:
    d = _eig_settings(args)
    name, size, N = str(d["domain"]).lower(), parse_number(d["size"]), int(d["N"])
    h = parse_number(d.get("h", "1/64"))
    threshold = parse_number(d["threshold"])
    exact = analytic_spectrum(name, N, size)
    shape = _domain_shape(name, size, h, parse_number(d.get("margin", 0.25)))
    try:
        spec = solve(shape, N, seed=args.seed or 0)
    except (ConvergenceError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_USAGE
    lines = ["k,computed,analytic,rel_error"]
    ok = True
    for k, (lam, ref) in enumerate(zip(spec.eigenvalues, exact), start=1):
        err = abs(lam - ref) / ref
        ok &= err <= threshold
        lines.append(f"{k},{float(lam)!r},{float(ref)!r},{float(err)!r}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eig.csv").write_text(text)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_baseline(args) -> int:
    d = _eig_settings(args)
    vals = analytic_spectrum(str(d["domain"]).lower(), int(d["N"]), parse_number(d["size"]))
    sys.stdout.write("k,analytic\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(vals, start=1)))
    return EXIT_OK


# -- optimize ------------------------------------------------------------------------

def _write_plots(out: Path, rep: dict) -> None:
    fd = rep.get("flatness_decay") or {}
    if fd.get("centers"):
        series = [(f"center {i}", c["radii"], c["f"]) for i, c in enumerate(fd["centers"])]
        (out / "flatness_decay.svg").write_text(
            line_plot(series, "flatness decay", "r", "f(r)", logx=True, logy=True))
    we = rep.get("weiss") or {}
    if we.get("centers"):
        series = [(f"center {i}", c["r"], c["phi"]) for i, c in enumerate(we["centers"])]
        (out / "weiss.svg").write_text(line_plot(series, "Weiss energy", "r", "phi(r)", logx=True))


def _write_report(out: Path, rep_dict: dict, extra: dict | None = None) -> None:
    doc = dict(extra or {}, diagnostics=rep_dict)
    (out / "report.json").write_text(eio.to_json(doc))
    (out / "profiles.csv").write_text(eio.profiles_csv(rep_dict))
    _write_plots(out, rep_dict)


def cmd_optimize(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else None
    if cfg is None:
        raise ConfigError("optimize needs --config")
    if args.seed is not None:
        cfg.optimizer.seed = cfg.diagnostics.seed = cfg.seed = args.seed
    out = Path(args.out) if args.out else cfg.out
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    init = cfg.initial_shape()
    every = cfg.optimizer.checkpoint_every

    def on_step(state):
        if every and state.step % every == 0 and not state.stalled:
            eio.save_shape(out / "checkpoints" / f"step_{state.step:06d}.lsshape", state.shape, state.step)

    t0 = time.perf_counter()
    state, report = run(init, cfg.objective, cfg.optimizer, N=cfg.N, diagnostics=cfg.diagnostics,
                        callback=on_step)
    elapsed = time.perf_counter() - t0
    (out / "history.csv").write_text(history_csv(state.history))
    eio.save_shape(out / "final.lsshape", state.shape, state.step)
    eio.save_spectrum(out / "final_spectrum.json", state.spectrum)
    converged = bool(state.shape.metadata.get("converged"))
    area, perim = volume(state.shape), perimeter(state.shape)
    summary = {
        "objective": state.objective_value,
        "eigenvalues": list(state.spectrum.eigenvalues),
        "volume": area,
        "isoperimetric_defect": perim ** 2 / (4 * math.pi * area) - 1 if state.shape.grid.ndim == 2 else None,
        "steps": state.step,
        "converged": converged,
        "stalled": state.stalled,
        "fb_residual_sup": state.fb_sup,
        "p": "inf" if not math.isfinite(state.p) else state.p,
        "elapsed_s": elapsed,
        "config": cfg.raw,
    }
    _write_report(out, report.to_dict() if report else {}, summary)
    print(f"objective {state.objective_value:.10g} after {state.step} steps; converged={converged}")
    return EXIT_OK if converged else EXIT_STALL


# -- diagnose ------------------------------------------------------------------------

def cmd_diagnose(args) -> int:
    d = _load_json(args.config)
    try:
        spec = ObjectiveSpec.from_dict(d.get("objective", {"form": "linear", "mu": [1.0]}))
        dcfg = DiagnosticsConfig.from_dict(dict(d.get("diagnostics", {}),
                                                **({"seed": args.seed} if args.seed is not None else {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.no_thresholds:
        dcfg.thresholds_enabled = False
    shape = eio.load_shape(args.checkpoint)
    N = int(d.get("N") or (len(spec.mu) if spec.mu is not None else 1))
    seed = args.seed or 0
    if dcfg.refine_h:
        g = shape.grid
        fine = Grid.from_box(g.origin, g.upper, parse_number(dcfg.refine_h))
        shape = resample(shape, fine)
        spectrum = solve(shape, N, seed=seed)
    elif args.spectrum and not args.recompute:
        spectrum = eio.load_spectrum(args.spectrum)
        if spectrum.grid != shape.grid:
            raise ConfigError("spectrum grid does not match checkpoint grid")
    else:
        spectrum = solve(shape, N, seed=seed)
    rep = full_report(shape, spectrum, spec, dcfg)
    out = Path(args.out or "diagnose_out")
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, rep.to_dict(), {"checkpoint": str(args.checkpoint),
                                      "eigenvalues": list(spectrum.eigenvalues)})
    for name, ok in rep.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if not dcfg.thresholds_enabled:
        return EXIT_OK
    return EXIT_OK if rep.passed else EXIT_FAIL


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed (u64)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; kernels are sequential so this never changes results")

    p = argparse.ArgumentParser(prog="eigenshape", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("eig", "solve a reference domain and compare with the exact spectrum"),
                           ("baseline", "print the exact spectrum of a reference domain")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--domain")
        s.add_argument("--size", type=float)
        s.add_argument("--N", type=int)
        s.add_argument("--h")
        s.add_argument("--threshold", type=float)
    sub.add_parser("optimize", parents=[common], help="run the shape optimizer")
    s = sub.add_parser("diagnose", parents=[common], help="free-boundary diagnostics of a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--spectrum", help="saved spectrum matching the checkpoint")
    s.add_argument("--recompute", action="store_true", help="re-solve the spectrum")
    s.add_argument("--no-thresholds", action="store_true", help="report only, always exit 0")
    return p


COMMANDS = {"eig": cmd_eig, "baseline": cmd_baseline, "optimize": cmd_optimize, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:  # ConfigError and FormatError included
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
