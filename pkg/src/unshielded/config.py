"""Run configuration: one JSON file per run, strict keys, defaults echoed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import H0_MODES, PROFILES, SingularProfileParams
from .exceptions import ConfigurationError, ReportIOError
from .grid import GridSpec, TimeGrid
from .kernel import QUADRATURES
from .picard import PREFACTORS, RESOLUTION_POLICIES, SchemeConfig


@dataclass
class GridSection:
    n: int = 2
    N: int = 64
    L: float = 1.0
    offset: bool = True


@dataclass
class TimeSection:
    T: float = 0.0125
    M: int = 32


@dataclass
class DataSection:
    C: float = 1.0
    alpha: float = 0.75
    delta_supp: float = 0.3
    eps_supp: float = 0.6
    amp: float = 0.1
    profile: str = "radial"
    h0_mode: str = "zero"


@dataclass
class SchemeSection:
    nu0: float = 1e-4
    nu_sequence: list | None = None
    max_iters: int = 50
    tol_fix: float = 1e-8
    tol_contract: float = 0.9
    prefactor: str = "g00"
    quadrature: str = "product"
    auto_T: bool = False
    resolution_policy: str = "spectral"


@dataclass
class CurveSection:
    start: list
    end: list
    samples: int = 65


@dataclass
class DiagnosticsSection:
    radii: list | None = None
    r_max: float | None = None
    q: float = 1.5
    r_excl: float | None = None
    convention: str = "standard"
    curves: list = field(default_factory=list)


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    time: TimeSection = field(default_factory=TimeSection)
    data: DataSection = field(default_factory=DataSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    seed: int = 0

    # typed views -------------------------------------------------------
    def grid_spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(g.n, g.N, g.L, g.offset)

    def profile_params(self) -> SingularProfileParams:
        d = self.data
        return SingularProfileParams(d.C, d.alpha, d.delta_supp, d.eps_supp)

    def scheme_config(self, nu0: float | None = None, T: float | None = None) -> SchemeConfig:
        s = self.scheme
        return SchemeConfig(
            T=self.time.T if T is None else T, M=self.time.M, nu0=s.nu0 if nu0 is None else nu0,
            max_iters=s.max_iters, tol_fix=s.tol_fix, tol_contract=s.tol_contract, prefactor=s.prefactor,
            quadrature=s.quadrature, resolution_policy=s.resolution_policy,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {
    "grid": GridSection,
    "time": TimeSection,
    "data": DataSection,
    "scheme": SchemeSection,
    "diagnostics": DiagnosticsSection,
}

_TYPES = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}


def _coerce(value, annotation, path):
    """Check a scalar against a dataclass field annotation (as a string)."""
    ann = str(annotation)
    optional = "None" in ann
    if value is None:
        if optional:
            return None
        raise ConfigurationError("value may not be null", path=path)
    if ann.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}", path=path)
        return value
    if ann.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", path=path)
        return float(value)
    if ann.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true/false, got {value!r}", path=path)
        return value
    if ann.startswith("str"):
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", path=path)
        return value
    if ann.startswith("list"):
        if not isinstance(value, list):
            raise ConfigurationError(f"expected a list, got {value!r}", path=path)
        return value
    return value


def _build_section(cls, raw, prefix):
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", path=prefix)
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigurationError(f"unknown key (allowed: {', '.join(sorted(known))})", path=f"{prefix}.{key}")
    kwargs = {}
    for name, f in known.items():
        if name in raw:
            kwargs[name] = _coerce(raw[name], f.type, f"{prefix}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc), path=prefix) from exc


def _build_curves(raw):
    curves = []
    for i, c in enumerate(raw):
        path = f"diagnostics.curves[{i}]"
        sec = _build_section(CurveSection, c, path)
        for key in ("start", "end"):
            v = getattr(sec, key)
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigurationError("coordinates must be numbers", path=f"{path}.{key}")
        if len(sec.start) != len(sec.end):
            raise ConfigurationError("start and end differ in length", path=path)
        if sec.samples < 2:
            raise ConfigurationError("need at least two samples", path=f"{path}.samples")
        curves.append(asdict(sec))
    return curves


def _rewrap(exc: ConfigurationError, path: str):
    msg = str(exc)
    if exc.path and msg.startswith(f"{exc.path}: "):
        msg = msg[len(exc.path) + 2:]
    return ConfigurationError(msg, path=exc.path or path)


def validate(cfg: RunConfig) -> RunConfig:
    """Re-validate every component invariant; raises with a dotted path."""
    try:
        grid = cfg.grid_spec()
    except ConfigurationError as exc:
        raise _rewrap(exc, "grid")
    try:
        TimeGrid(cfg.time.T, cfg.time.M)
    except ConfigurationError as exc:
        raise _rewrap(exc, "time")
    try:
        cfg.profile_params().validate_for(grid)
    except ConfigurationError as exc:
        raise _rewrap(exc, "data")
    if cfg.data.profile not in PROFILES:
        raise ConfigurationError(f"must be one of {PROFILES}", path="data.profile")
    if cfg.data.h0_mode not in H0_MODES:
        raise ConfigurationError(f"must be one of {H0_MODES}", path="data.h0_mode")
    s = cfg.scheme
    if s.prefactor not in PREFACTORS:
        raise ConfigurationError(f"must be one of {PREFACTORS}", path="scheme.prefactor")
    if s.quadrature not in QUADRATURES:
        raise ConfigurationError(f"must be one of {QUADRATURES}", path="scheme.quadrature")
    if s.resolution_policy not in RESOLUTION_POLICIES:
        raise ConfigurationError(f"must be one of {RESOLUTION_POLICIES}", path="scheme.resolution_policy")
    try:
        cfg.scheme_config()
    except ConfigurationError as exc:
        raise _rewrap(exc, "scheme")
    if s.nu_sequence is not None:
        seq = s.nu_sequence
        if not seq or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in seq):
            raise ConfigurationError("must be a non-empty list of positive numbers", path="scheme.nu_sequence")
        if any(b >= a for a, b in zip(seq, seq[1:])):
            raise ConfigurationError("must be strictly decreasing", path="scheme.nu_sequence")
    dgn = cfg.diagnostics
    if dgn.convention not in ("standard", "as_printed"):
        raise ConfigurationError("must be 'standard' or 'as_printed'", path="diagnostics.convention")
    if dgn.q <= 1:
        raise ConfigurationError("annulus ratio must exceed 1", path="diagnostics.q")
    if dgn.radii is not None and not all(isinstance(r, (int, float)) and r > 0 for r in dgn.radii):
        raise ConfigurationError("radii must be positive numbers", path="diagnostics.radii")
    for i, c in enumerate(dgn.curves):
        if len(c["start"]) != grid.n + 1:
            raise ConfigurationError(f"points need {grid.n + 1} coordinates (t, x...)", path=f"diagnostics.curves[{i}]")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        raise ConfigurationError("expected an integer", path="seed")
    return cfg


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("top level must be an object")
    allowed = set(_SECTIONS) | {"seed"}
    for key in raw:
        if key not in allowed:
            raise ConfigurationError(f"unknown key (allowed: {', '.join(sorted(allowed))})", path=key)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in raw:
            sec = dict(raw[name]) if isinstance(raw[name], dict) else raw[name]
            curves = None
            if name == "diagnostics" and isinstance(sec, dict) and "curves" in sec:
                curves = sec.pop("curves")
                if not isinstance(curves, list):
                    raise ConfigurationError("expected a list", path="diagnostics.curves")
            built = _build_section(cls, sec, name)
            if curves is not None:
                built.curves = _build_curves(curves)
            kwargs[name] = built
    if "seed" in raw:
        kwargs["seed"] = _coerce(raw["seed"], "int", "seed")
    return validate(RunConfig(**kwargs))


def load_config(path) -> RunConfig:
    """Parse, validate and default-fill a JSON run configuration.

    Raises
    ------
    ConfigurationError
        Parse errors carry the line number; validation errors the dotted
        field path.
    ReportIOError
        When the file cannot be read.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(exc.msg, path=str(path), line=exc.lineno) from exc
    return config_from_dict(raw)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    try:
        path.write_text(cfg.canonical_json() + "\n")
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    return path
