"""Viscosity-regularised Picard iteration for the first-order harmonic system.

Unknowns are the metric ``g``, its spatial derivatives ``dg`` (evolved as
independent fields) and ``h = d_t g``.  Each iterate is obtained from the
previous one through heat-kernel representations in which every spatial
derivative of an unknown has been moved onto the kernel:

    g^l      = g0 *_sp G + h^{l-1} * G
    g^l_{,k} = g0_{,k} *_sp G + h^{l-1} * G_{,k}
    h^l      = h0 *_sp G - (A^k h) * G_{,k} + (A^k_{,k} h) * G
               - (B^{km} g_{,k}) * G_{,m} + (B^{km}_{,m} g_{,k}) * G
               + 2 (P H) * G

with ``P`` the prefactor, ``A^k = 2 P g^{0k}`` and ``B^{km} = P g^{km}``.
Coefficient derivatives use the evolved ``dg`` through the chain rule, so
no field is differentiated numerically inside the loop.

History arrays are time-first: ``g`` and ``h`` have shape
``(M + 1, D, D, *grid.shape)`` and ``dg`` has ``(M + 1, n, D, D, *grid.shape)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import DataList, check_admissible
from .exceptions import (
    ConfigurationError,
    ContractionError,
    DegenerateMetricError,
    DivergenceError,
    InadmissibleDataError,
    ReportIOError,
    ResolutionError,
    SignatureLossError,
)
from .grid import GridSpec, TimeGrid, read_raw, write_raw
from .kernel import QUADRATURES, derivative_symbol, duhamel_hat
from .tensor import EPS_DET, harmonic_source, inverse_derivative

logger = logging.getLogger(__name__)

PREFACTORS = ("g00", "inv_g00")
RESOLUTION_POLICIES = ("spectral", "strict")


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    """Iteration settings.

    ``quadrature`` selects the time rule of the space-time convolution:
    ``"product"`` integrates the piecewise-linear interpolant of the
    integrand exactly against the heat multiplier, ``"trapezoid"`` is the
    plain trapezoid rule with the kernel at ``s = t`` acting as identity.
    """

    T: float = 0.05
    M: int = 32
    nu0: float = 1e-2
    max_iters: int = 50
    tol_fix: float = 1e-8
    tol_contract: float = 0.9
    prefactor: str = "g00"
    quadrature: str = "product"
    eps_det: float = EPS_DET
    resolution_policy: str = "spectral"
    patience: int = 3

    def __post_init__(self):
        TimeGrid(self.T, self.M)
        if not self.nu0 > 0:
            raise ConfigurationError(f"nu0 must be positive, got {self.nu0}", path="scheme.nu0")
        if self.max_iters < 2:
            raise ConfigurationError("max_iters must be >= 2", path="scheme.max_iters")
        if not 0 < self.tol_contract < 1:
            raise ConfigurationError("tol_contract must lie in (0, 1)", path="scheme.tol_contract")
        if not self.tol_fix > 0:
            raise ConfigurationError("tol_fix must be positive", path="scheme.tol_fix")
        if self.prefactor not in PREFACTORS:
            raise ConfigurationError(f"prefactor must be one of {PREFACTORS}", path="scheme.prefactor")
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(f"quadrature must be one of {QUADRATURES}", path="scheme.quadrature")
        if self.resolution_policy not in RESOLUTION_POLICIES:
            raise ConfigurationError(
                f"resolution_policy must be one of {RESOLUTION_POLICIES}", path="scheme.resolution_policy"
            )

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.M)

    @property
    def dt(self) -> float:
        return self.T / self.M


def resolution_check(grid: GridSpec, cfg: SchemeConfig) -> dict:
    """Kernel-resolution policy: ``sqrt(4 nu dt) >= h`` and ``nu >= h^2``.

    Under ``"strict"`` a violation raises; under ``"spectral"`` it warns,
    since exact Fourier multipliers keep the heat semigroup exact on the
    grid regardless of kernel width.
    """
    width = float(np.sqrt(4 * cfg.nu0 * cfg.dt))
    ok = width >= grid.h and cfg.nu0 >= grid.h ** 2
    info = {"kernel_width": width, "h": grid.h, "resolved": bool(ok), "policy": cfg.resolution_policy}
    if not ok:
        msg = f"nu0={cfg.nu0:g} under-resolved: sqrt(4 nu dt)={width:.3g}, h={grid.h:.3g}"
        if cfg.resolution_policy == "strict":
            raise ResolutionError(msg)
        warnings.warn(msg, ResolutionWarning, stacklevel=3)
    return info


# ------------------------------------------------------------------ fields


@dataclass
class SpacetimeFields:
    """Sampled space-time solution on ``times`` (time-first histories)."""

    grid: GridSpec
    times: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    h: np.ndarray
    nu0: float = 0.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def M(self) -> int:
        return len(self.times) - 1

    def slice_data(self, j: int, negate_h: bool = False) -> DataList:
        h = -self.h[j] if negate_h else self.h[j]
        return DataList(self.grid, self.g[j].copy(), h.copy(), self.dg[j].copy())

    def full_dg(self) -> np.ndarray:
        """``(M + 1, D, D, D, ...)`` with the time direction first."""
        return np.concatenate([self.h[:, None], self.dg], axis=1)


@dataclass
class IterationState:
    l: int
    cfg: SchemeConfig
    data: DataList
    g: np.ndarray
    dg: np.ndarray
    h: np.ndarray
    prev: tuple | None = None
    increment_norms: list = field(default_factory=list)

    @property
    def grid(self) -> GridSpec:
        return self.data.grid

    def fields(self) -> SpacetimeFields:
        return SpacetimeFields(self.grid, self.cfg.time_grid.times, self.g, self.dg, self.h, self.cfg.nu0)


# ------------------------------------------------------------ core algebra


def _rfft(a, grid):
    return np.fft.rfftn(a, axes=tuple(range(a.ndim - grid.n, a.ndim)))


def _irfft(a, grid):
    return np.fft.irfftn(a, s=grid.shape, axes=tuple(range(a.ndim - grid.n, a.ndim)))


def _heat_history(values, grid, nu0, times):
    """``values *_sp G(t)`` for every ``t``; result is time-first."""
    vh = _rfft(values, grid)
    mult = np.exp(-nu0 * grid.rk2 * times.reshape((-1,) + (1,) * grid.n))
    mult = mult.reshape((len(times),) + (1,) * (values.ndim - grid.n) + grid.rk2.shape)
    return _irfft(vh[None] * mult, grid)


def _to_points(a, ncomp):
    """Time-first history -> component-first with time as first point axis."""
    return np.moveaxis(a, 0, ncomp)


def _from_points(a, ncomp):
    return np.moveaxis(a, ncomp, 0)


def _inverse_checked(g_hist, eps_det):
    """Inverse metric over a history; locates degeneracy or signature loss."""
    pts = np.moveaxis(g_hist, (1, 2), (-2, -1))
    if not np.all(np.isfinite(pts)):
        raise DivergenceError("non-finite metric values")
    det = np.linalg.det(pts)
    bad = ~(np.abs(det) > eps_det)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateMetricError(
            f"degenerate metric at slice {idx[0]}, point {idx[1:]}: det={det[idx]:.3e}",
            det=float(det[idx]), location=idx[1:], slice_index=idx[0],
        )
    lam = np.linalg.eigvalsh(pts)
    neg = np.sum(lam < 0, axis=-1)
    if np.any(neg != 1):
        idx = tuple(int(i) for i in np.argwhere(neg != 1)[0])
        raise SignatureLossError(
            f"Lorentz signature lost at slice {idx[0]}, point {idx[1:]}",
            det=float(det[idx]), location=idx[1:], slice_index=idx[0],
        )
    return np.moveaxis(np.linalg.inv(pts), (-2, -1), (1, 2))


def _prefactor(g_hist, ginv_hist, dg_hist, dginv, kind):
    """``P`` and its spatial derivatives ``dP[:, k]`` (time-first)."""
    if kind == "g00":
        return g_hist[:, 0, 0], dg_hist[:, :, 0, 0]
    inv00 = ginv_hist[:, 0, 0]
    return 1.0 / inv00, -dginv[:, :, 0, 0] / inv00[:, None] ** 2


def picard_sources(g, dg, h, cfg: SchemeConfig, grid: GridSpec):
    """Integrands of the ``h`` representation for one iterate.

    Returns ``(S0, Sk)`` with ``S0`` convolved against ``G`` and ``Sk[:, m]``
    against ``G_{,m}``; both are time-first histories.
    """
    n = grid.n
    ginv = _inverse_checked(g, cfg.eps_det)
    # d_k g^{mu nu} from the evolved first derivatives
    dginv = _from_points(inverse_derivative(_to_points(ginv, 2), _to_points(dg, 3)), 3)
    P, dP = _prefactor(g, ginv, dg, dginv, cfg.prefactor)
    bc = (slice(None), None, None)  # broadcast a (T, *S) scalar over (T, D, D, *S)

    A = 2.0 * P[:, None] * ginv[:, 0, 1:]                       # (T, n, *S)
    dA = 2.0 * (dP * ginv[:, 0, 1:] + P[:, None] * np.stack([dginv[:, k, 0, k + 1] for k in range(n)], axis=1))
    divA = dA.sum(axis=1)
    B = P[:, None, None] * ginv[:, 1:, 1:]                     # (T, n, n, *S)
    # B^{km}_{,m}
    divB = np.stack(
        [sum(dP[:, m] * ginv[:, k + 1, m + 1] + P * dginv[:, m, k + 1, m + 1] for m in range(n)) for k in range(n)],
        axis=1,
    )

    dg_full = np.concatenate([h[:, None], dg], axis=1)
    H = _from_points(
        harmonic_source(_to_points(g, 2), _to_points(ginv, 2), _to_points(dg_full, 3)), 2
    )

    S0 = (divA[:, None, None] * h) + 2.0 * P[bc] * H
    S0 = S0 + sum(divB[:, k][bc] * dg[:, k] for k in range(n))
    Sk = np.stack(
        [-(A[:, m][bc] * h) - sum(B[:, k, m][bc] * dg[:, k] for k in range(n)) for m in range(n)],
        axis=1,
    )
    return S0, Sk


def _duhamel_with_derivatives(S0, Sk, grid, cfg):
    """``S0 * G + sum_m Sk[:, m] * G_{,m}`` as a time-first history."""
    total = _rfft(S0, grid)
    Skh = _rfft(Sk, grid)
    for m in range(grid.n):
        total = total + derivative_symbol(grid, m) * Skh[:, m]
    return _irfft(duhamel_hat(total, grid, cfg.dt, cfg.nu0, cfg.quadrature), grid)


def _symmetrize(a, ax0):
    return 0.5 * (a + np.swapaxes(a, ax0, ax0 + 1))


# ------------------------------------------------------------------ norms


def _h2_slices(a, grid):
    """Discrete H^2 norm of every component of every slice."""
    c = _rfft(a, grid) * np.sqrt(grid.cell_volume / grid.N ** grid.n)
    w = (1.0 + grid.rk2) ** 2
    # rfft halves the last axis; double interior columns for Parseval
    mult = np.full(grid.rk2.shape[-1], 2.0)
    mult[0] = 1.0
    if grid.N % 2 == 0:
        mult[-1] = 1.0
    s = np.abs(c) ** 2 * w * mult
    return np.sqrt(s.sum(axis=tuple(range(a.ndim - grid.n, a.ndim))))


def increment_norm(delta, grid: GridSpec) -> dict:
    """Sup norm, Lipschitz proxy (first periodic differences over ``h``)
    and per-slice H^2 norm of one increment family."""
    sup = float(np.abs(delta).max())
    lip = 0.0
    for ax in range(delta.ndim - grid.n, delta.ndim):
        lip = max(lip, float(np.abs(np.diff(delta, axis=ax, append=np.take(delta, [0], axis=ax))).max()) / grid.h)
    h2 = float(_h2_slices(delta, grid).max())
    return {"sup": sup, "lip": lip, "h2": h2, "norm": max(sup, lip, h2)}


def _increment_record(new, old, grid):
    rec = {}
    for name, a, b in zip(("g", "dg", "h"), new, old):
        rec[name] = increment_norm(a - b, grid)
    rec["norm"] = max(rec[k]["norm"] for k in ("g", "dg", "h"))
    rec["sup"] = max(rec[k]["sup"] for k in ("g", "dg", "h"))
    rec["t0"] = max(float(np.abs(a[0] - b[0]).max()) for a, b in zip(new, old))
    return rec


# ------------------------------------------------------------- iteration


def init_iteration(d: DataList, cfg: SchemeConfig, require_admissible: bool = True) -> IterationState:
    """Iterate 0: the data smoothed by the heat semigroup at every slice."""
    if require_admissible:
        rep = d.admissibility if d.admissibility is not None else check_admissible(d, min_margin=0.0)
        if not rep["lorentz"]["lorentzian"]:
            raise InadmissibleDataError("data fail the Lorentz gate", report=rep, margin=rep["lorentz"]["margin"])
    grid = d.grid
    times = cfg.time_grid.times
    g = _heat_history(d.g0, grid, cfg.nu0, times)
    dg = _heat_history(d.dg0, grid, cfg.nu0, times)
    h = _heat_history(d.h0, grid, cfg.nu0, times)
    # the t = 0 slice carries the data exactly
    g[0], dg[0], h[0] = d.g0, d.dg0, d.h0
    return IterationState(0, cfg, d, g, dg, h)


def picard_map(d: DataList, g, dg, h, cfg: SchemeConfig, base=None):
    """Apply the representation once; returns ``(g, dg, h)`` histories."""
    grid = d.grid
    if base is None:
        base = _heat_history_base(d, cfg)
    g0s, dg0s, h0s = base
    hh = duhamel_hat(_rfft(h, grid), grid, cfg.dt, cfg.nu0, cfg.quadrature)
    g_new = g0s + _irfft(hh, grid)
    dg_new = dg0s + np.stack([_irfft(derivative_symbol(grid, k) * hh, grid) for k in range(grid.n)], axis=1)
    S0, Sk = picard_sources(g, dg, h, cfg, grid)
    h_new = h0s + _duhamel_with_derivatives(S0, Sk, grid, cfg)
    g_new[0], dg_new[0], h_new[0] = d.g0, d.dg0, d.h0
    return _symmetrize(g_new, 1), _symmetrize(dg_new, 2), _symmetrize(h_new, 1)


def _heat_history_base(d, cfg):
    times = cfg.time_grid.times
    return tuple(_heat_history(a, d.grid, cfg.nu0, times) for a in (d.g0, d.dg0, d.h0))


def picard_step(state: IterationState, cfg: SchemeConfig | None = None, base=None) -> IterationState:
    cfg = state.cfg if cfg is None else cfg
    new = picard_map(state.data, state.g, state.dg, state.h, cfg, base)
    if not all(np.all(np.isfinite(a)) for a in new):
        raise DivergenceError(f"non-finite values at iteration {state.l + 1}")
    rec = _increment_record(new, (state.g, state.dg, state.h), state.grid)
    rec["l"] = state.l + 1
    return IterationState(
        state.l + 1, cfg, state.data, *new, prev=(state.g, state.dg, state.h),
        increment_norms=state.increment_norms + [rec],
    )


@dataclass
class ContractionRecord:
    increments: list
    ratios: list
    converged: bool
    iterations: int
    T: float
    nu0: float
    wall_time: float = 0.0
    resolution: dict | None = None

    def max_tail_ratio(self, k=3):
        return max(self.ratios[-k:]) if len(self.ratios) >= k else float("nan")

    def consecutive_below(self, threshold):
        best = run = 0
        for c in self.ratios:
            run = run + 1 if c <= threshold else 0
            best = max(best, run)
        return best

    def to_dict(self):
        return {
            "increments": self.increments,
            "ratios": self.ratios,
            "converged": self.converged,
            "iterations": self.iterations,
            "T": self.T,
            "nu0": self.nu0,
            "wall_time": self.wall_time,
            "resolution": self.resolution,
        }


def _ratio(a, b):
    if b == 0.0:
        return 0.0 if a == 0.0 else float("inf")
    return a / b


def run_fixed_point(d: DataList, cfg: SchemeConfig, checkpoint=None, resume: bool = False, callback=None):
    """Iterate until the increment norm falls below ``tol_fix``.

    Returns ``(fields, record)``.  Ratios ``c_l = |delta_l| / |delta_{l-1}|``
    start at ``l = 2``.

    Raises
    ------
    ContractionError
        When ``c_l >= 1`` for ``cfg.patience`` consecutive iterations.
    DivergenceError
        On non-finite values.
    SignatureLossError, DegenerateMetricError
        When an iterate leaves the Lorentzian regime.
    """
    t_start = time.perf_counter()
    res = resolution_check(d.grid, cfg)
    base = _heat_history_base(d, cfg)
    state = None
    ckpt = Checkpointer(checkpoint, cfg, d) if checkpoint is not None else None
    if resume and ckpt is not None:
        state = ckpt.load_latest()
    if state is None:
        state = init_iteration(d, cfg)
    ratios = [
        _ratio(b["norm"], a["norm"]) for a, b in zip(state.increment_norms, state.increment_norms[1:])
    ]
    streak = 0
    converged = bool(state.increment_norms) and state.increment_norms[-1]["norm"] < cfg.tol_fix
    while not converged and state.l < cfg.max_iters:
        state = picard_step(state, cfg, base)
        rec = state.increment_norms[-1]
        if len(state.increment_norms) >= 2:
            c = _ratio(rec["norm"], state.increment_norms[-2]["norm"])
            ratios.append(c)
            streak = streak + 1 if c >= 1.0 else 0
        logger.debug("iteration %d: increment %.3e", state.l, rec["norm"])
        if ckpt is not None:
            ckpt.save(state)
        if callback is not None:
            callback(state)
        record = ContractionRecord(list(state.increment_norms), list(ratios), False, state.l, cfg.T, cfg.nu0,
                                   time.perf_counter() - t_start, res)
        if streak >= cfg.patience:
            raise ContractionError(
                f"no contraction: ratios {['%.3g' % c for c in ratios[-cfg.patience:]]} at T={cfg.T:g}",
                record=record,
            )
        converged = rec["norm"] < cfg.tol_fix
    record = ContractionRecord(list(state.increment_norms), ratios, bool(converged), state.l, cfg.T, cfg.nu0,
                               time.perf_counter() - t_start, res)
    return state.fields(), record


# ------------------------------------------------------------ checkpoints


_STOPPING_FIELDS = ("max_iters", "tol_fix", "tol_contract", "patience", "resolution_policy")


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class Checkpointer:
    """Per-iteration raw dumps plus a JSON manifest; resumable."""

    def __init__(self, directory, cfg: SchemeConfig, data: DataList):
        self.dir = Path(directory)
        self.cfg = cfg
        self.data = data
        # stopping criteria do not change the iterates, so a resume may extend them
        scheme = {k: v for k, v in asdict(cfg).items() if k not in _STOPPING_FIELDS}
        digest = hashlib.sha256(b"".join(np.ascontiguousarray(a).tobytes() for a in (data.g0, data.dg0, data.h0)))
        self.hash = config_hash({"scheme": scheme, "grid": [data.grid.n, data.grid.N, data.grid.L, data.grid.offset],
                                 "data": digest.hexdigest()})
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ReportIOError(str(exc), path=self.dir) from exc

    @property
    def manifest_path(self):
        return self.dir / "manifest.json"

    def _manifest(self):
        if not self.manifest_path.exists():
            return {"config_hash": self.hash, "iterations": []}
        try:
            return json.loads(self.manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ReportIOError(str(exc), path=self.manifest_path) from exc

    def save(self, state: IterationState):
        grid = state.grid
        sub = self.dir / f"iter_{state.l:04d}"
        try:
            sub.mkdir(exist_ok=True)
        except OSError as exc:
            raise ReportIOError(str(exc), path=sub) from exc
        for name in ("g", "dg", "h"):
            arr = getattr(state, name)
            write_raw(sub / f"{name}.raw", grid, arr.reshape((-1,) + grid.shape))
        man = self._manifest()
        man["config_hash"] = self.hash
        man["iterations"] = [e for e in man["iterations"] if e["l"] != state.l]
        man["iterations"].append({
            "l": state.l,
            "nu0": state.cfg.nu0,
            "dir": sub.name,
            "norms": state.increment_norms,
        })
        try:
            self.manifest_path.write_text(json.dumps(man, indent=2))
        except OSError as exc:
            raise ReportIOError(str(exc), path=self.manifest_path) from exc

    def load_latest(self) -> IterationState | None:
        man = self._manifest()
        if not man["iterations"]:
            return None
        if man["config_hash"] != self.hash:
            raise ConfigurationError("checkpoint was written with a different configuration", path="checkpoint")
        last = max(man["iterations"], key=lambda e: e["l"])
        sub = self.dir / last["dir"]
        grid = self.data.grid
        M1, D, n = self.cfg.M + 1, grid.n + 1, grid.n
        arrs = {}
        for name, shape in (("g", (M1, D, D)), ("dg", (M1, n, D, D)), ("h", (M1, D, D))):
            _, comp = read_raw(sub / f"{name}.raw")
            arrs[name] = comp.reshape(shape + grid.shape)
        return IterationState(last["l"], self.cfg, self.data, arrs["g"], arrs["dg"], arrs["h"],
                              increment_norms=list(last["norms"]))


# ------------------------------------------------------------- estimators


class HarmonicPicardSolver(BaseEstimator):
    """Fixed-point solver with optional automatic horizon selection.

    ``fit(data)`` runs the iteration on a :class:`DataList`.  With
    ``auto_T`` the horizon is halved until every ratio ``c_l`` (l >= 2)
    is at most ``tol_contract`` and the run converges.

    Attributes
    ----------
    fields_ : SpacetimeFields
    record_ : ContractionRecord
    T_ : float
        Horizon actually used.
    attempts_ : list of dict
        One entry per horizon tried.
    """

    def __init__(self, T=0.05, M=32, nu0=1e-2, max_iters=50, tol_fix=1e-8, tol_contract=0.9,
                 prefactor="g00", quadrature="product", auto_T=False, max_halvings=8,
                 resolution_policy="spectral", checkpoint=None, resume=False):
        self.T = T
        self.M = M
        self.nu0 = nu0
        self.max_iters = max_iters
        self.tol_fix = tol_fix
        self.tol_contract = tol_contract
        self.prefactor = prefactor
        self.quadrature = quadrature
        self.auto_T = auto_T
        self.max_halvings = max_halvings
        self.resolution_policy = resolution_policy
        self.checkpoint = checkpoint
        self.resume = resume

    def _cfg(self, T):
        return SchemeConfig(T=T, M=self.M, nu0=self.nu0, max_iters=self.max_iters, tol_fix=self.tol_fix,
                            tol_contract=self.tol_contract, prefactor=self.prefactor, quadrature=self.quadrature,
                            resolution_policy=self.resolution_policy)

    def _accepted(self, rec):
        tail = rec.ratios
        return rec.converged and (not tail or max(tail) <= self.tol_contract)

    def fit(self, X, y=None):
        if not isinstance(X, DataList):
            raise TypeError("HarmonicPicardSolver.fit expects a DataList")
        T = float(self.T)
        self.attempts_ = []
        for _ in range(self.max_halvings + 1 if self.auto_T else 1):
            cfg = self._cfg(T)
            try:
                fields, rec = run_fixed_point(X, cfg, checkpoint=self.checkpoint, resume=self.resume)
            except ContractionError as exc:
                self.attempts_.append({"T": T, "outcome": "contraction_failure",
                                       "ratios": exc.record.ratios if exc.record else None})
                if not self.auto_T:
                    raise
                T *= 0.5
                continue
            self.attempts_.append({"T": T, "outcome": "converged" if rec.converged else "max_iters",
                                   "ratios": rec.ratios})
            if not self.auto_T or self._accepted(rec):
                self.fields_, self.record_, self.T_ = fields, rec, T
                return self
            T *= 0.5
        raise ContractionError(f"no accepted horizon after {self.max_halvings} halvings", record=None)

    def predict(self, X=None):
        """The converged space-time fields."""
        check_is_fitted(self, "fields_")
        return self.fields_


# ------------------------------------------------------------------- sweep


@dataclass
class SweepReport:
    nu: list
    records: list
    fields: list
    distances: list = field(default_factory=list)
    extrapolated: SpacetimeFields | None = None

    @property
    def distance_ratios(self):
        return [b / a if a > 0 else float("nan") for a, b in zip(self.distances, self.distances[1:])]

    def to_dict(self):
        out = {"nu": self.nu, "records": [r.to_dict() for r in self.records]}
        if len(self.nu) > 1:
            out["cauchy"] = {"distances": self.distances, "ratios": self.distance_ratios,
                             "extrapolation": "linear in nu from the two smallest viscosities"}
        return out


def fields_distance(a: SpacetimeFields, b: SpacetimeFields) -> float:
    return float(max(np.abs(a.g - b.g).max(), np.abs(a.dg - b.dg).max(), np.abs(a.h - b.h).max()))


def richardson(a: SpacetimeFields, b: SpacetimeFields) -> SpacetimeFields:
    """Linear extrapolation to zero viscosity from ``a`` (larger nu) and ``b``."""
    w = b.nu0 / (a.nu0 - b.nu0)
    ext = lambda x, y: y + w * (y - x)
    return SpacetimeFields(b.grid, b.times, ext(a.g, b.g), ext(a.dg, b.dg), ext(a.h, b.h), 0.0)


def viscosity_sweep(d: DataList, cfg_base: SchemeConfig, nu_sequence) -> SweepReport:
    nus = [float(v) for v in nu_sequence]
    if not nus:
        raise ConfigurationError("empty viscosity sequence", path="scheme.nu_sequence")
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ConfigurationError("viscosity sequence must be strictly decreasing", path="scheme.nu_sequence")
    recs, flds = [], []
    for nu in nus:
        try:
            f, r = run_fixed_point(d, replace(cfg_base, nu0=nu))
        except (ContractionError, DegenerateMetricError, ResolutionError) as exc:
            exc.args = (f"nu0={nu:g}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            exc.nu0 = nu
            raise
        recs.append(r)
        flds.append(f)
    rep = SweepReport(nus, recs, flds)
    if len(nus) > 1:
        rep.distances = [fields_distance(a, b) for a, b in zip(flds, flds[1:])]
        rep.extrapolated = richardson(flds[-2], flds[-1])
    return rep


class ViscositySweep(BaseEstimator):
    """Estimator wrapper around :func:`viscosity_sweep`."""

    def __init__(self, nu_sequence=(4e-2, 2e-2, 1e-2), T=0.05, M=32, max_iters=50, tol_fix=1e-8,
                 tol_contract=0.9, prefactor="g00", quadrature="product", resolution_policy="spectral"):
        self.nu_sequence = nu_sequence
        self.T = T
        self.M = M
        self.max_iters = max_iters
        self.tol_fix = tol_fix
        self.tol_contract = tol_contract
        self.prefactor = prefactor
        self.quadrature = quadrature
        self.resolution_policy = resolution_policy

    def fit(self, X, y=None):
        cfg = SchemeConfig(T=self.T, M=self.M, nu0=self.nu_sequence[0], max_iters=self.max_iters,
                           tol_fix=self.tol_fix, tol_contract=self.tol_contract, prefactor=self.prefactor,
                           quadrature=self.quadrature, resolution_policy=self.resolution_policy)
        self.report_ = viscosity_sweep(X, cfg, self.nu_sequence)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "report_")
        return self.report_.extrapolated if self.report_.extrapolated is not None else self.report_.fields[-1]


# ---------------------------------------------------------------- residual


def _excluded_mask(grid: GridSpec, r_excl: float):
    return grid.radius > r_excl


def harmonic_residual(fields: SpacetimeFields, r_excl: float | None = None, prefactor: str = "g00",
                      eps_det: float = EPS_DET) -> dict:
    """Residuals of the inviscid system on interior slices.

    Time derivatives are second-order centred differences, spatial
    derivatives spectral.  Sup norms are taken outside the ball of radius
    ``r_excl`` (default ``4h``) around the origin.
    """
    grid = fields.grid
    if fields.g.shape[0] < 3:
        raise ValueError("residual needs at least three time slices")
    if r_excl is None:
        r_excl = 4 * grid.h
    dt = fields.dt
    g, dg, h = fields.g, fields.dg, fields.h
    gt = (g[2:] - g[:-2]) / (2 * dt)
    dgt = (dg[2:] - dg[:-2]) / (2 * dt)
    ht = (h[2:] - h[:-2]) / (2 * dt)
    gi, dgi, hi = g[1:-1], dg[1:-1], h[1:-1]
    n = grid.n
    dkh = np.stack([spectral_derivative_free(hi, grid, k) for k in range(n)], axis=1)
    r1 = gt - hi
    r2 = dgt - dkh
    ginv = _inverse_checked(gi, eps_det)
    dginv = _from_points(inverse_derivative(_to_points(ginv, 2), _to_points(dgi, 3)), 3)
    P, _ = _prefactor(gi, ginv, dgi, dginv, prefactor)
    dg_full = np.concatenate([hi[:, None], dgi], axis=1)
    H = _from_points(harmonic_source(_to_points(gi, 2), _to_points(ginv, 2), _to_points(dg_full, 3)), 2)
    bc = (slice(None), None, None)
    rhs = sum(2 * ginv[:, 0, k + 1][bc] * dkh[:, k] for k in range(n))
    for k in range(n):
        for m in range(n):
            rhs = rhs + ginv[:, k + 1, m + 1][bc] * spectral_derivative_free(dgi[:, k], grid, m)
    rhs = rhs - 2 * H
    r3 = ht + P[bc] * rhs
    mask = _excluded_mask(grid, r_excl)

    def sup(r):
        return float(np.abs(r[..., mask]).max()) if mask.any() else float("nan")

    out = {"eq_g": sup(r1), "eq_dg": sup(r2), "eq_h": sup(r3), "r_excl": r_excl}
    out["max"] = max(out["eq_g"], out["eq_dg"], out["eq_h"])
    out["per_slice"] = [
        max(float(np.abs(a[j][..., mask]).max()) for a in (r1, r2, r3)) for j in range(r1.shape[0])
    ]
    return out


def spectral_derivative_free(a, grid: GridSpec, axis: int):
    """Spectral derivative along a spatial axis of a batched array."""
    ah = _rfft(a, grid)
    return _irfft(derivative_symbol(grid, axis) * ah, grid)
