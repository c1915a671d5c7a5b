"""Command line front end.

Every subcommand reads one configuration (``--config``, defaults when
omitted), writes ``config.json`` (the echoed, default-filled form) and a
report into ``--out``, and exits with the code attached to the raised
error: 0 success, 2 validation, 3 contraction, 4 signature loss, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_config, load_config, validate
from .data import gauge_wave
from .exceptions import ConfigurationError, InadmissibleDataError, ReportIOError, UnshieldedError
from .picard import SpacetimeFields, harmonic_residual
from .report import Pipeline, emit_report

logger = logging.getLogger("unshielded")

COMMANDS = ("build-data", "check-data", "evolve", "sweep", "residual", "curvature", "gap-length",
            "verify-kernel", "report")


def _global_parser(defaults: bool) -> argparse.ArgumentParser:
    # shared flags accepted before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    sup = argparse.SUPPRESS
    p.add_argument("--config", type=Path, default=None if defaults else sup, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=Path("out") if defaults else sup, help="output directory")
    p.add_argument("--seed", type=int, default=None if defaults else sup, help="override the configured seed")
    p.add_argument("-v", "--verbose", action="count", default=0 if defaults else sup)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unshielded", parents=[_global_parser(True)],
                                     description="Viscous Picard solver for the reduced harmonic system.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_parser(False)
    sub.add_parser("build-data", parents=[common], help="build and save singular initial data")
    sub.add_parser("check-data", parents=[common], help="admissibility report for the initial data")
    ev = sub.add_parser("evolve", parents=[common], help="run the fixed-point iteration and monitors")
    ev.add_argument("--checkpoint", type=Path, default=None, help="directory for per-iteration checkpoints")
    ev.add_argument("--resume", action="store_true", help="resume from the latest checkpoint")
    sub.add_parser("sweep", parents=[common], help="viscosity sweep over scheme.nu_sequence")
    rs = sub.add_parser("residual", parents=[common], help="inviscid residual of the evolved fields")
    rs.add_argument("--gauge-wave", action="store_true", help="also report the exact gauge-wave residual")
    cv = sub.add_parser("curvature", parents=[common], help="blow-up fit on the data slice")
    cv.add_argument("--evolved", action="store_true", help="also evolve and record curvature per slice")
    sub.add_parser("gap-length", parents=[common], help="g.a.p. lengths of the configured curves")
    sub.add_parser("verify-kernel", parents=[common], help="heat-kernel L1 bound table")
    rp = sub.add_parser("report", parents=[common], help="run every stage and write the full report")
    rp.add_argument("--no-kernel", action="store_true", help="skip the kernel table")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config is not None else validate(RunConfig())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _print(obj):
    print(json.dumps(obj, indent=2, default=float))


def _gauge_wave_baseline(pipe: Pipeline, T: float) -> dict:
    grid, M = pipe.grid, pipe.cfg.time.M
    times = np.linspace(0.0, T, M + 1)
    g, dg, h = zip(*(gauge_wave(grid, t) for t in times))
    fields = SpacetimeFields(grid, times, np.array(g), np.array(dg), np.array(h), 0.0)
    return harmonic_residual(fields, pipe.cfg.diagnostics.r_excl, pipe.cfg.scheme.prefactor)


def run(args) -> int:
    cfg = _config(args)
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(str(exc), path=out) from exc
    dump_config(cfg, out / "config.json")
    pipe = Pipeline(cfg, out, checkpoint=getattr(args, "checkpoint", None), resume=getattr(args, "resume", False))
    rep = pipe.report
    cmd = args.command
    code = 0
    try:
        if cmd == "build-data":
            files = pipe.save_data()
            pipe.admissibility()
            _print({"files": files, "margin": pipe.data().admissibility["lorentz"]["margin"]})
        elif cmd == "check-data":
            adm = pipe.admissibility()
            _print({"passed": adm["passed"], "flags": adm["flags"]})
            if not adm["passed"]:
                code = InadmissibleDataError.exit_code
        elif cmd == "evolve":
            pipe.admissibility()
            _, rec = pipe.evolve()
            pipe.monitors()
            _print({"converged": rec.converged, "iterations": rec.iterations, "T": rec.T,
                    "ratios": rec.ratios})
        elif cmd == "sweep":
            if not cfg.scheme.nu_sequence or len(cfg.scheme.nu_sequence) < 2:
                raise ConfigurationError("sweep needs at least two values", path="scheme.nu_sequence")
            sw = pipe.sweep()
            _print({"nu": sw.nu, "distances": sw.distances, "ratios": sw.distance_ratios})
        elif cmd == "residual":
            res = pipe.residual()
            out_res = {k: res[k] for k in ("eq_g", "eq_dg", "eq_h", "max", "r_excl")}
            if args.gauge_wave:
                _, record = pipe.evolve()
                base = _gauge_wave_baseline(pipe, record.T)
                rep.sections["residual"]["data"]["gauge_wave_baseline"] = base["max"]
                out_res["gauge_wave_baseline"] = base["max"]
            _print(out_res)
        elif cmd == "curvature":
            fit = pipe.blowup()
            if args.evolved:
                pipe.monitors()
            _print(fit.to_dict())
        elif cmd == "gap-length":
            if not cfg.diagnostics.curves:
                raise ConfigurationError("no curves configured", path="diagnostics.curves")
            rows = pipe.gap_lengths()
            _print(rows)
        elif cmd == "verify-kernel":
            res = pipe.kernel()
            _print({k: res[k] for k in ("spread", "uniform", "below_cap", "lipschitz_ok")})
        elif cmd == "report":
            pipe.run_all(kernel=not args.no_kernel)
            _print(rep.summary)
    finally:
        emit_report(rep, out)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.verbose == 0:
        warnings.simplefilter("ignore")
    try:
        return run(args)
    except UnshieldedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ReportIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
