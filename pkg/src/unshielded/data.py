"""Singular Cauchy data: mollifier, C^{1,delta} profile, metric perturbation
and admissibility checks.  Also samples the gauge-wave metric used as an
exact reference solution."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DegenerateMetricError, InadmissibleDataError, ReportIOError, UndefinedPointError
from .grid import GridSpec, ScalarGridField, sobolev_norm, write_raw
from .tensor import invert_metric, lorentz_report, minkowski

PROFILES = ("radial", "axis")
H0_MODES = ("zero", "smooth")


@dataclass(frozen=True)
class SingularProfileParams:
    """Parameters of ``f(z) = (C + z^3 cos(|z|^-alpha)) phi(z)``.

    ``delta_supp`` is the radius of the unit plateau of the mollifier and
    ``eps_supp`` the radius of its support.
    """

    C: float = 1.0
    alpha: float = 0.75
    delta_supp: float = 0.3
    eps_supp: float = 0.6

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigurationError(f"C must be positive, got {self.C}", path="data.C")
        if not 0.5 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in the open band (0.5, 1), got {self.alpha}", path="data.alpha")
        if not 0 < self.delta_supp < self.eps_supp:
            raise ConfigurationError("need 0 < delta_supp < eps_supp", path="data.delta_supp")

    def validate_for(self, grid: GridSpec):
        if not self.eps_supp < grid.L:
            raise ConfigurationError(f"eps_supp={self.eps_supp} must be below L={grid.L}", path="data.eps_supp")


# ------------------------------------------------------------------ mollifier


def _psi(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _psi_derivs(u):
    u = np.asarray(u, dtype=float)
    p = _psi(u)
    d1 = np.zeros_like(u)
    d2 = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    d1[pos] = p[pos] / up ** 2
    d2[pos] = p[pos] * (1.0 / up ** 4 - 2.0 / up ** 3)
    return p, d1, d2


def _smoothstep(u):
    """``S(u) = psi(u) / (psi(u) + psi(1-u))``: 0 for u<=0, 1 for u>=1,
    C-infinity in between, with its first two derivatives."""
    A, A1, A2 = _psi_derivs(u)
    B, B1, B2 = _psi_derivs(1.0 - u)
    B1 = -B1
    den = A + B
    S = A / den
    num = A1 * B - A * B1
    S1 = num / den ** 2
    S2 = (A2 * B - A * B2) / den ** 2 - 2.0 * num * (A1 + B1) / den ** 3
    return S, S1, S2


def bump_derivs(z, delta_supp, eps_supp):
    """Mollifier ``phi`` and its first two derivatives in ``z``."""
    z = np.asarray(z, dtype=float)
    w = eps_supp - delta_supp
    u = (eps_supp - np.abs(z)) / w
    S, S1, S2 = _smoothstep(u)
    du = -np.sign(z) / w
    return S, S1 * du, S2 / w ** 2


def bump(z, delta_supp, eps_supp):
    """Smooth cutoff: 1 on ``|z| <= delta_supp``, 0 on ``|z| >= eps_supp``."""
    out = bump_derivs(z, delta_supp, eps_supp)[0]
    return out if np.ndim(out) else float(out)


# -------------------------------------------------------------------- profile


def _oscillation(z, alpha):
    """``q = z^3 cos(|z|^-alpha)`` and two derivatives; 0 at the origin."""
    z = np.asarray(z, dtype=float)
    q = np.zeros_like(z)
    q1 = np.zeros_like(z)
    q2 = np.zeros_like(z)
    nz = z != 0
    a = np.abs(z[nz])
    s = np.sign(z[nz])
    ph = a ** -alpha
    c, sn = np.cos(ph), np.sin(ph)
    q[nz] = s * a ** 3 * c
    q1[nz] = 3 * a ** 2 * c + alpha * a ** (2 - alpha) * sn
    q2[nz] = s * (6 * a * c + (3 * alpha + alpha * (2 - alpha)) * a ** (1 - alpha) * sn - alpha ** 2 * a ** (1 - 2 * alpha) * c)
    return q, q1, q2


def profile_derivs(z, p: SingularProfileParams):
    """``f, f', f''``; the second derivative at ``z = 0`` is reported as NaN."""
    z = np.asarray(z, dtype=float)
    q, q1, q2 = _oscillation(z, p.alpha)
    b, b1, b2 = bump_derivs(z, p.delta_supp, p.eps_supp)
    f = (p.C + q) * b
    f1 = q1 * b + (p.C + q) * b1
    f2 = q2 * b + 2 * q1 * b1 + (p.C + q) * b2
    f2 = np.where(z == 0, np.nan, f2)
    return f, f1, f2


def singular_profile(z, p: SingularProfileParams):
    out = profile_derivs(z, p)[0]
    return out if np.ndim(out) else float(out)


def singular_profile_d1(z, p: SingularProfileParams):
    out = profile_derivs(z, p)[1]
    return out if np.ndim(out) else float(out)


def singular_profile_d2(z, p: SingularProfileParams):
    """Second derivative of the profile; undefined at the origin."""
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise UndefinedPointError("second derivative of the profile is undefined at z = 0")
    out = profile_derivs(z, p)[2]
    return out if np.ndim(out) else float(out)


def plateau_d2(z, alpha):
    """Closed form of ``f''`` where the mollifier is identically 1."""
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise UndefinedPointError("second derivative of the profile is undefined at z = 0")
    return _oscillation(z, alpha)[2]


def singular_term(z, alpha):
    """Leading term ``-alpha^2 |z|^(1-2 alpha) cos(|z|^-alpha)``."""
    a = np.abs(np.asarray(z, dtype=float))
    return -alpha ** 2 * a ** (1 - 2 * alpha) * np.cos(a ** -alpha)


# --------------------------------------------------------------- data lists


@dataclass
class DataList:
    """Cauchy data ``(g0, h0, dg0)`` on one grid.

    ``g0`` and ``h0`` have shape ``(D, D, *grid.shape)``; ``dg0`` has shape
    ``(n, D, D, *grid.shape)``.  ``d2g0`` (second spatial derivatives, shape
    ``(n, n, D, D, ...)``) is kept when the data were built analytically.
    """

    grid: GridSpec
    g0: np.ndarray
    h0: np.ndarray
    dg0: np.ndarray
    d2g0: np.ndarray | None = None
    params: SingularProfileParams | None = None
    amp: float = 0.0
    profile: str = "radial"
    h0_mode: str = "zero"
    admissibility: dict | None = field(default=None)

    @property
    def n(self):
        return self.grid.n

    @property
    def D(self):
        return self.grid.n + 1

    def full_dg0(self):
        return np.concatenate([self.h0[None], self.dg0], axis=0)

    def sidecar(self):
        return {
            "grid": {"n": self.grid.n, "N": self.grid.N, "L": self.grid.L, "offset": self.grid.offset},
            "params": asdict(self.params) if self.params is not None else None,
            "amp": self.amp,
            "profile": self.profile,
            "h0_mode": self.h0_mode,
            "admissibility": self.admissibility,
            "layout": {"g0": list(self.g0.shape), "h0": list(self.h0.shape), "dg0": list(self.dg0.shape)},
        }

    def save(self, directory) -> dict:
        """Write raw dumps of ``g0``, ``h0``, ``dg0`` plus a JSON sidecar."""
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ReportIOError(str(exc), path=directory) from exc
        files = {}
        for name in ("g0", "h0", "dg0"):
            arr = getattr(self, name)
            files[name] = str(write_raw(directory / f"{name}.raw", self.grid, arr.reshape((-1,) + self.grid.shape)))
        meta = self.sidecar()
        meta["files"] = files
        side = directory / "data.json"
        try:
            side.write_text(json.dumps(meta, indent=2, default=_json_default))
        except OSError as exc:
            raise ReportIOError(str(exc), path=side) from exc
        files["sidecar"] = str(side)
        return files


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def flat_data(grid: GridSpec) -> DataList:
    D = grid.n + 1
    g0 = minkowski(grid.n, grid.shape)
    z = np.zeros((D, D) + grid.shape)
    return DataList(grid, g0, z.copy(), np.zeros((grid.n, D, D) + grid.shape), np.zeros((grid.n, grid.n, D, D) + grid.shape))


def _perturbation(grid: GridSpec, p: SingularProfileParams, profile: str):
    """Scalar ``G = phi f`` on the grid with first and second derivatives."""
    n = grid.n
    if profile == "axis":
        x = grid.coords[0]
        f, f1, f2 = profile_derivs(x, p)
        b, b1, b2 = bump_derivs(x, p.delta_supp, p.eps_supp)
        G = b * f
        G1 = b1 * f + b * f1
        G2 = b2 * f + 2 * b1 * f1 + b * f2
        dG = np.zeros((n,) + grid.shape)
        d2G = np.zeros((n, n) + grid.shape)
        dG[0] = G1
        d2G[0, 0] = G2
        return G, dG, d2G
    r = grid.radius
    if np.any(r == 0):
        raise UndefinedPointError("the radial profile needs a grid that avoids the origin (offset=True)")
    f, f1, f2 = profile_derivs(r, p)
    b, b1, b2 = bump_derivs(r, p.delta_supp, p.eps_supp)
    G = b * f
    G1 = b1 * f + b * f1
    G2 = b2 * f + 2 * b1 * f1 + b * f2
    xs = grid.coords
    dG = np.stack([G1 * x / r for x in xs])
    d2G = np.empty((n, n) + grid.shape)
    for i in range(n):
        for j in range(n):
            xx = xs[i] * xs[j] / r ** 2
            d2G[i, j] = G2 * xx + G1 * ((1.0 if i == j else 0.0) - xx) / r
    return G, dG, d2G


def smooth_h0(grid: GridSpec, p: SingularProfileParams, amp_h: float = 0.01) -> np.ndarray:
    """Compactly supported smooth ``h0``: only the 11 component, a bump."""
    D = grid.n + 1
    h0 = np.zeros((D, D) + grid.shape)
    h0[1, 1] = amp_h * bump(grid.radius, p.delta_supp, p.eps_supp)
    return h0


def build_singular_data(
    grid: GridSpec,
    p: SingularProfileParams,
    amp: float,
    profile: str = "radial",
    h0_mode: str = "zero",
    min_margin: float = 0.5,
    s: float | None = None,
) -> DataList:
    """Flat background with ``g_11 <- 1 + amp * phi * f``.

    ``profile="radial"`` evaluates the profile at ``|x|`` so the only
    non-smooth point is the origin.  ``profile="axis"`` uses ``x^1`` alone,
    which gives a curvature-free metric (a coordinate change of flat space)
    and is kept for comparison.

    Raises
    ------
    InadmissibleDataError
        When the uniform Lorentz margin is below ``min_margin``.
    """
    if profile not in PROFILES:
        raise ConfigurationError(f"profile must be one of {PROFILES}", path="data.profile")
    if h0_mode not in H0_MODES:
        raise ConfigurationError(f"h0 mode must be one of {H0_MODES}", path="data.h0_mode")
    p.validate_for(grid)
    d = flat_data(grid)
    G, dG, d2G = _perturbation(grid, p, profile)
    d.g0[1, 1] = 1.0 + amp * G
    d.dg0[:, 1, 1] = amp * dG
    d.d2g0[:, :, 1, 1] = amp * d2G
    if h0_mode == "smooth":
        d.h0 = smooth_h0(grid, p)
    d.params, d.amp, d.profile, d.h0_mode = p, float(amp), profile, h0_mode
    rep = check_admissible(d, s=s, min_margin=min_margin)
    if not rep["lorentz"]["lorentzian"] or rep["lorentz"]["margin"] < min_margin:
        raise InadmissibleDataError(
            f"uniform Lorentz margin {rep['lorentz']['margin']:.4g} below {min_margin}",
            report=rep,
            margin=rep["lorentz"]["margin"],
        )
    return d


def check_admissible(d: DataList, s: float | None = None, min_margin: float = 0.5) -> dict:
    """Admissibility report; always produced, gating is left to the caller.

    Contains the Lorentz margin, discrete ``H^s`` norms of every ``g0``,
    ``h0`` component, ``max |g0_{mu nu} g0^{lambda rho}|`` and pass flags.
    """
    n = d.grid.n
    if s is None:
        s = n / 2 + 1.1
    if not s > n / 2 + 1:
        raise ConfigurationError(f"s must exceed n/2 + 1 = {n / 2 + 1}, got {s}", path="data.s")
    lor = lorentz_report(d.g0)
    try:
        ginv = invert_metric(d.g0)
        prod = float(max(
            np.max(np.abs(d.g0[m, nu] * ginv[la, rh]))
            for m in range(d.D) for nu in range(d.D) for la in range(d.D) for rh in range(d.D)
        ))
    except DegenerateMetricError:
        prod = float("inf")
    norms = {}
    for name, arr in (("g0", d.g0), ("h0", d.h0)):
        for m in range(d.D):
            for nu in range(m, d.D):
                norms[f"{name}_{m}{nu}"] = sobolev_norm(ScalarGridField(d.grid, arr[m, nu]), s)
    finite = bool(all(np.isfinite(v) for v in norms.values()))
    margin_ok = lor.lorentzian and lor.margin >= min_margin
    rep = {
        "s": s,
        "lorentz": lor.to_dict(),
        "sobolev": norms,
        "product_bound": prod,
        "flags": {
            "lorentz": bool(margin_ok),
            "sobolev_finite": finite,
            "product_finite": bool(np.isfinite(prod)),
        },
    }
    rep["passed"] = all(rep["flags"].values())
    d.admissibility = rep
    return rep


# ----------------------------------------------------------------- gauge wave


def gauge_wave(grid: GridSpec, t, A: float = 0.1, wavelength: float | None = None):
    """Exact gauge-wave metric ``diag(-H, H, 1, ...)`` with
    ``H = 1 - A sin(2 pi (x^1 - t) / d)``.

    Returns ``(g, dg, h)`` at time ``t`` (scalar) with analytic derivatives.
    """
    d = 2 * grid.L if wavelength is None else wavelength
    k = 2 * np.pi / d
    x = grid.coords[0]
    ph = k * (x - t)
    Hf = 1 - A * np.sin(ph)
    Hx = -A * k * np.cos(ph)
    D = grid.n + 1
    g = minkowski(grid.n, grid.shape)
    g[0, 0] = -Hf
    g[1, 1] = Hf
    dg = np.zeros((grid.n, D, D) + grid.shape)
    dg[0, 0, 0] = -Hx
    dg[0, 1, 1] = Hx
    h = np.zeros((D, D) + grid.shape)
    h[0, 0] = Hx
    h[1, 1] = -Hx
    return g, dg, h


def gauge_wave_data(grid: GridSpec, A: float = 0.1, wavelength: float | None = None) -> DataList:
    g, dg, h = gauge_wave(grid, 0.0, A, wavelength)
    d = DataList(grid, g, h, dg, None, amp=A, profile="gauge_wave")
    check_admissible(d, min_margin=0.0)
    return d
