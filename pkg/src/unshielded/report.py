"""Run orchestration, the master report and its CSV tables.

A :class:`Pipeline` holds one validated :class:`~unshielded.config.RunConfig`
and fills a :class:`RunReport` section by section.  Every section is either
computed (``status`` ``"ok"`` or ``"fail"``) or explicitly skipped with a
reason.  :func:`emit_report` writes ``report.json`` plus one CSV per table
and a manifest of raw dumps.
"""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import DataList, build_singular_data, check_admissible
from .diagnostics import (
    GAP_CONVENTIONS,
    constraint_monitor,
    curvature_history,
    data_slice_curvature,
    default_radii,
    fit_blowup_exponent,
    gap_length,
    signature_monitor,
    straight_curve,
)
from .exceptions import FitError, ReportIOError, UnshieldedError
from .grid import write_raw
from .kernel import verify_uniform_l1
from .picard import HarmonicPicardSolver, harmonic_residual, viscosity_sweep

logger = logging.getLogger(__name__)

SECTIONS = ("admissibility", "contraction", "sweep", "residual", "blowup", "monitors", "gap_length", "kernel")
KERNEL_NU = (1e-1, 1e-2, 1e-3, 1e-4)


def skipped(reason: str) -> dict:
    return {"status": "skipped", "reason": reason}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class RunReport:
    """Everything one run produced.

    ``tables`` maps a CSV stem to ``(header, rows)``; ``artifacts`` lists
    raw dumps written during the run.
    """

    config_hash: str
    config: dict
    sections: dict = field(default_factory=lambda: {s: skipped("not requested") for s in SECTIONS})
    timings: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @classmethod
    def for_config(cls, cfg: RunConfig) -> "RunReport":
        return cls(cfg.hash(), cfg.to_dict())

    def set(self, name: str, data: dict, ok: bool = True):
        if name not in SECTIONS:
            raise KeyError(name)
        self.sections[name] = {"status": "ok" if ok else "fail", "data": _jsonable(data)}

    def skip(self, name: str, reason: str):
        self.sections[name] = skipped(reason)

    @property
    def summary(self) -> dict:
        status = {k: v["status"] for k, v in self.sections.items()}
        return {"sections": status, "all_pass": all(s != "fail" for s in status.values())}

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config,
            "summary": self.summary,
            "sections": self.sections,
            "timings": _jsonable(self.timings),
            "tables": {k: f"{k}.csv" for k in self.tables},
            "manifest": [str(a) for a in self.artifacts],
        }


def load_schema() -> dict:
    return json.loads(resources.files("unshielded").joinpath("report.schema.json").read_text())


def validate_report(doc: dict):
    """Validate a report dictionary against the shipped JSON schema."""
    import jsonschema

    jsonschema.validate(doc, load_schema())


def write_table(path, header, rows):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    return path


def emit_report(report: RunReport, out_dir, format: str = "json") -> list:
    """Write the master report and its tables; returns the written paths.

    ``format`` is ``"json"`` (report plus CSV tables) or ``"csv"`` (tables
    only).  I/O failures raise :class:`ReportIOError` naming the path.
    """
    if format not in ("json", "csv"):
        raise ValueError("format must be 'json' or 'csv'")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(str(exc), path=out) from exc
    written = [write_table(out / f"{name}.csv", *tab) for name, tab in report.tables.items()]
    manifest = out / "manifest.json"
    try:
        manifest.write_text(json.dumps({"config_hash": report.config_hash,
                                        "raw": [str(a) for a in report.artifacts],
                                        "tables": [p.name for p in written]}, indent=2))
    except OSError as exc:
        raise ReportIOError(str(exc), path=manifest) from exc
    written.append(manifest)
    if format == "json":
        doc = report.to_dict()
        path = out / "report.json"
        try:
            path.write_text(json.dumps(doc, indent=2))
        except OSError as exc:
            raise ReportIOError(str(exc), path=path) from exc
        written.append(path)
    return written


class _Timer:
    def __init__(self, report, key):
        self.report, self.key = report, key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.key] = time.perf_counter() - self.t0
        return False


class Pipeline:
    """Lazy run orchestration over one configuration.

    Stages cache their products, so ``residual()`` after ``evolve()`` does
    not re-run the solver.
    """

    def __init__(self, cfg: RunConfig, out_dir=None, checkpoint=None, resume: bool = False):
        self.cfg = cfg
        self.checkpoint = checkpoint
        self.resume = resume
        self.out = None if out_dir is None else Path(out_dir)
        self.report = RunReport.for_config(cfg)
        self.grid = cfg.grid_spec()
        self._data = None
        self._fields = None
        self._record = None
        np.random.seed(cfg.seed)

    # -- data -----------------------------------------------------------
    def data(self) -> DataList:
        if self._data is None:
            c = self.cfg.data
            with _Timer(self.report, "build_data"):
                self._data = build_singular_data(self.grid, self.cfg.profile_params(), c.amp, profile=c.profile,
                                                 h0_mode=c.h0_mode, min_margin=0.0)
        return self._data

    def save_data(self):
        if self.out is None:
            return []
        paths = self.data().save(self.out / "data")
        self.report.artifacts.extend(str(p) for p in paths.values())
        return paths

    def admissibility(self) -> dict:
        with _Timer(self.report, "admissibility"):
            rep = check_admissible(self.data())
        self.report.set("admissibility", rep, ok=bool(rep["passed"]))
        return rep

    # -- evolution ------------------------------------------------------
    def solver(self) -> HarmonicPicardSolver:
        s = self.cfg.scheme
        return HarmonicPicardSolver(T=self.cfg.time.T, M=self.cfg.time.M, nu0=s.nu0, max_iters=s.max_iters,
                                    tol_fix=s.tol_fix, tol_contract=s.tol_contract, prefactor=s.prefactor,
                                    quadrature=s.quadrature, auto_T=s.auto_T,
                                    resolution_policy=s.resolution_policy, checkpoint=self.checkpoint,
                                    resume=self.resume)

    def evolve(self):
        if self._fields is None:
            est = self.solver()
            with _Timer(self.report, "evolve"):
                try:
                    est.fit(self.data())
                finally:
                    attempts = getattr(est, "attempts_", [])
                self._fields, self._record = est.fields_, est.record_
            rec = self._record
            data = rec.to_dict()
            data["attempts"] = attempts
            data["consecutive_below_tol"] = rec.consecutive_below(self.cfg.scheme.tol_contract)
            self.report.set("contraction", data, ok=rec.converged)
            inc = rec.increments
            self.report.tables["contraction"] = (
                ["iteration", "increment", "sup", "norm_g", "norm_dg", "norm_h", "ratio"],
                [[i + 1, r["norm"], r["sup"], r["g"]["norm"], r["dg"]["norm"], r["h"]["norm"],
                  rec.ratios[i - 1] if i >= 1 else ""] for i, r in enumerate(inc)],
            )
            if self.out is not None:
                fdir = self.out / "fields"
                try:
                    fdir.mkdir(parents=True, exist_ok=True)
                except OSError as exc:
                    raise ReportIOError(str(exc), path=fdir) from exc
                for name in ("g", "dg", "h"):
                    p = fdir / f"{name}.raw"
                    write_raw(p, self.grid, getattr(self._fields, name))
                    self.report.artifacts.append(str(p))
        return self._fields, self._record

    def sweep(self):
        seq = self.cfg.scheme.nu_sequence
        if not seq or len(seq) < 2:
            self.report.skip("sweep", "no viscosity sequence with at least two values configured")
            return None
        T = self._record.T if self._record is not None else self.cfg.time.T
        with _Timer(self.report, "sweep"):
            rep = viscosity_sweep(self.data(), self.cfg.scheme_config(T=T), seq)
        ok = all(r.converged for r in rep.records)
        self.report.set("sweep", rep.to_dict(), ok=ok)
        self.report.tables["sweep"] = (
            ["nu_coarse", "nu_fine", "distance", "ratio"],
            [[a, b, dist, rep.distance_ratios[i - 1] if i >= 1 else ""]
             for i, (a, b, dist) in enumerate(zip(rep.nu, rep.nu[1:], rep.distances))],
        )
        return rep

    def residual(self) -> dict:
        fields, _ = self.evolve()
        with _Timer(self.report, "residual"):
            res = harmonic_residual(fields, self.cfg.diagnostics.r_excl, self.cfg.scheme.prefactor)
        self.report.set("residual", res)
        return res

    # -- diagnostics ----------------------------------------------------
    def blowup(self):
        dg = self.cfg.diagnostics
        with _Timer(self.report, "blowup"):
            R = data_slice_curvature(self.data(), dg.convention)
            if dg.radii is not None:
                radii = np.asarray(dg.radii, dtype=float)
            else:
                r_max = dg.r_max if dg.r_max is not None else 0.8 * self.cfg.data.delta_supp
                radii = default_radii(self.grid, r_max)
            fit = fit_blowup_exponent(R, radii, grid=self.grid, q=dg.q)
        self.report.set("blowup", {"data_slice": fit.to_dict(), "convention": dg.convention})
        self.report.tables["curvature_fit"] = (["radius", "max_abs_R"], list(zip(fit.radii, fit.maxima)))
        return fit

    def monitors(self) -> dict:
        fields, _ = self.evolve()
        dg = self.cfg.diagnostics
        with _Timer(self.report, "monitors"):
            con = constraint_monitor(fields, dg.r_excl)
            sig = signature_monitor(fields)
            curv = curvature_history(fields, dg.convention, dg.r_excl)
        out = {"constraint": con, "signature": sig, "curvature": curv.to_dict()}
        self.report.set("monitors", out, ok=sig["first_failure"] is None)
        D = self.grid.n + 1
        self.report.tables["constraint"] = (
            ["t"] + [f"sup_Gamma{mu}" for mu in range(D)] + ["sup_total"],
            [[t] + list(row) + [tot] for t, row, tot in zip(con["times"], con["sup"], con["sup_total"])],
        )
        self.report.tables["signature"] = (["t", "margin"], list(zip(sig["times"], sig["margin"])))
        self.report.tables["curvature"] = (
            ["t", "sup_R_outside", "sup_R_all"],
            list(zip(curv.times.tolist(), curv.sup_outside.tolist(), curv.sup_all.tolist())),
        )
        return out

    def gap_lengths(self):
        curves = self.cfg.diagnostics.curves
        if not curves:
            self.report.skip("gap_length", "no curves configured")
            return None
        fields, _ = self.evolve()
        rows = []
        with _Timer(self.report, "gap_length"):
            for i, c in enumerate(curves):
                cur = straight_curve(c["start"], c["end"], c["samples"])
                rows.append([i] + [gap_length(cur, fields, conv) for conv in GAP_CONVENTIONS])
        self.report.set("gap_length", {"curves": curves, "lengths": [
            dict(zip(GAP_CONVENTIONS, r[1:])) for r in rows]},
            ok=all(np.isfinite(r[1:]).all() for r in rows))
        self.report.tables["gap_length"] = (["curve"] + list(GAP_CONVENTIONS), rows)
        return rows

    def kernel(self, nu_list=KERNEL_NU):
        with _Timer(self.report, "kernel"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = verify_uniform_l1(list(nu_list), self.cfg.time.T, n=self.grid.n, grid=self.grid)
        self.report.set("kernel", res)
        rows = res["rows"]
        keys = list(rows[0].keys()) if rows else []
        self.report.tables["kernel_bounds"] = (keys, [[r[k] for k in keys] for r in rows])
        return res

    # -- everything ------------------------------------------------------
    def run_all(self, kernel: bool = True) -> RunReport:
        """Run every stage; solver failures mark the dependent sections."""
        self.admissibility()
        try:
            self.blowup()
        except FitError as exc:
            self.report.skip("blowup", f"fit preconditions not met: {exc}")
        try:
            self.evolve()
        except UnshieldedError as exc:
            self.report.sections["contraction"] = {"status": "fail", "data": {"error": str(exc)}}
            for s in ("sweep", "residual", "monitors", "gap_length"):
                self.report.skip(s, "evolution failed")
        else:
            self.sweep()
            self.residual()
            self.monitors()
            self.gap_lengths()
        if kernel:
            self.kernel()
        else:
            self.report.skip("kernel", "disabled")
        return self.report
