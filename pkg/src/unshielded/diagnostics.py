"""Curvature along the evolution, blow-up exponent fits, generalised affine
parameter lengths of curves, and constraint/signature monitors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import DataList
from .exceptions import DomainError, FitError, ShapeError, StencilError
from .grid import GridSpec, ScalarGridField
from .kernel import derivative_symbol
from .picard import SpacetimeFields, _from_points, _inverse_checked, _irfft, _rfft, _to_points
from .tensor import christoffel, christoffel_derivative, invert_metric, lorentz_report, ricci

NOISE_FLOOR = 1e-10
GAP_CONVENTIONS = ("as_written", "standard")


# ---------------------------------------------------------------- curvature


@dataclass
class CurvatureHistory:
    """Scalar curvature ``R[j]`` on every stored slice.

    ``near_origin`` marks points within ``r_excl`` of the origin; they are
    kept, not masked.  ``sup_outside[j]`` is the maximum of ``|R|`` outside
    that ball.
    """

    grid: GridSpec
    times: np.ndarray
    R: np.ndarray
    near_origin: np.ndarray
    sup_outside: np.ndarray
    sup_all: np.ndarray

    def to_dict(self):
        return {"times": self.times.tolist(), "sup_outside": self.sup_outside.tolist(),
                "sup_all": self.sup_all.tolist()}


def _spectral_grad(a, grid):
    ah = _rfft(a, grid)
    return [_irfft(derivative_symbol(grid, k) * ah, grid) for k in range(grid.n)]


def curvature_history(fields: SpacetimeFields, convention: str = "standard", r_excl: float | None = None,
                      eps_det: float = 1e-10) -> CurvatureHistory:
    """Ricci scalar per slice.

    The connection is built from ``g``, ``h`` and the evolved ``dg``;
    its time derivative uses second-order differences across slices
    (one-sided at the ends) and its spatial derivatives are spectral.
    """
    grid = fields.grid
    if fields.g.shape[0] < 3:
        raise StencilError("curvature needs at least three time slices")
    r_excl = 4 * grid.h if r_excl is None else r_excl
    ginv = _inverse_checked(fields.g, eps_det)
    dg_full = fields.full_dg()
    con = christoffel(_to_points(ginv, 2), _to_points(dg_full, 3))
    Gam = _from_points(con.Gamma, 3)                          # (T, D, D, D, *S)
    dt_Gam = np.gradient(Gam, fields.dt, axis=0, edge_order=2)
    dGam = np.stack([dt_Gam] + _spectral_grad(Gam, grid), axis=1)  # (T, D, D, D, D, *S)
    _, R = ricci(_to_points(Gam, 3), _to_points(dGam, 4), _to_points(ginv, 2), convention)
    near = grid.radius <= r_excl
    sup_out = np.array([np.abs(r[~near]).max() if (~near).any() else np.nan for r in R])
    sup_all = np.abs(R).reshape(R.shape[0], -1).max(axis=1)
    return CurvatureHistory(grid, np.asarray(fields.times), R, near, sup_out, sup_all)


def data_slice_curvature(d: DataList, convention: str = "standard") -> ScalarGridField:
    """Scalar curvature of the data slice from analytic derivatives.

    The slice is treated as static: second time derivatives of the metric
    are set to zero, mixed time-space derivatives come from ``h0``.
    """
    if d.d2g0 is None:
        raise ValueError("data carry no second derivatives; build them analytically")
    grid = d.grid
    D = d.D
    dg = d.full_dg0()
    d2 = np.zeros((D, D, D, D) + grid.shape)
    d2[1:, 1:] = d.d2g0
    dh = np.stack(_spectral_grad(d.h0, grid))
    d2[1:, 0] = dh
    d2[0, 1:] = dh
    g_inv = invert_metric(d.g0)
    con = christoffel(g_inv, dg)
    dGam = christoffel_derivative(g_inv, dg, d2)
    _, R = ricci(con, dGam, g_inv, convention)
    return ScalarGridField(grid, R)


# ------------------------------------------------------------------ blow-up


@dataclass
class BlowupFit:
    radii: np.ndarray
    maxima: np.ndarray
    beta: float
    intercept: float
    residual: float
    rejected: bool = False
    reason: str = ""

    def to_dict(self):
        return {
            "radii": self.radii.tolist(),
            "maxima": self.maxima.tolist(),
            "beta": None if not np.isfinite(self.beta) else self.beta,
            "intercept": None if not np.isfinite(self.intercept) else self.intercept,
            "residual": None if not np.isfinite(self.residual) else self.residual,
            "rejected": self.rejected,
            "reason": self.reason,
        }


def default_radii(grid: GridSpec, r_max: float, count: int = 6, r_min: float | None = None) -> np.ndarray:
    """Geometric radii from ``r_max`` down to ``r_min`` (default ``8h``)."""
    r_min = 8 * grid.h if r_min is None else r_min
    if not r_max > r_min:
        raise FitError(f"r_max={r_max:g} must exceed r_min={r_min:g}")
    return np.geomspace(r_max, r_min, count)


def shell_maxima(values, grid: GridSpec, radii, center=None, q: float = 1.5):
    """``max |values|`` over the annuli ``r / q < |x - center| <= r``."""
    center = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    dist = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center)))
    out = []
    for r in radii:
        m = (dist > r / q) & (dist <= r)
        out.append(float(np.abs(values[m]).max()) if m.any() else np.nan)
    return np.array(out)


def fit_blowup_exponent(R_slice, radii, center=None, grid: GridSpec | None = None, q: float = 1.5,
                        noise_floor: float = NOISE_FLOOR) -> BlowupFit:
    """Least-squares slope of ``log max|R|`` against ``log r`` over shells.

    Raises
    ------
    FitError
        Fewer than four usable radii, radii below ``2h``, or a span of less
        than one decade.
    """
    if isinstance(R_slice, ScalarGridField):
        grid = R_slice.grid
        values = R_slice.values
    else:
        if grid is None:
            raise ShapeError("a grid is required for raw arrays")
        values = np.asarray(R_slice, dtype=float)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if np.any(radii < 2 * grid.h):
        raise FitError(f"radii below 2h = {2 * grid.h:g}")
    if radii[0] / radii[-1] < 10.0 * (1 - 1e-9):
        raise FitError("radii must span at least one decade")
    maxima = shell_maxima(values, grid, radii, center, q)
    usable = np.isfinite(maxima)
    if usable.sum() < 4:
        raise FitError(f"only {int(usable.sum())} usable radii, need 4")
    if np.all(maxima[usable] < noise_floor):
        return BlowupFit(radii, maxima, np.nan, np.nan, np.nan, True, "all maxima below the noise floor")
    usable &= maxima >= noise_floor
    if usable.sum() < 4:
        raise FitError(f"only {int(usable.sum())} radii above the noise floor, need 4")
    x, y = np.log(radii[usable]), np.log(maxima[usable])
    beta, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (beta * x + icpt)) ** 2)))
    return BlowupFit(radii, maxima, float(beta), float(icpt), res)


class BlowupFitter(BaseEstimator):
    """Estimator form of :func:`fit_blowup_exponent` for raw field arrays.

    Parameters
    ----------
    radii : array-like or None
        Probe radii; ``None`` uses :func:`default_radii` with ``r_max``.
    r_max : float
    L, offset : grid description of the input field.
    q : float
        Annulus ratio.
    """

    def __init__(self, radii=None, r_max=0.04, L=1.0, offset=True, q=1.5, center=None):
        self.radii = radii
        self.r_max = r_max
        self.L = L
        self.offset = offset
        self.q = q
        self.center = center

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim not in (1, 2, 3) or len(set(X.shape)) != 1:
            raise ShapeError(f"expected a square field, got shape {X.shape}")
        grid = GridSpec(X.ndim, X.shape[0], self.L, self.offset)
        radii = default_radii(grid, self.r_max) if self.radii is None else self.radii
        self.fit_ = fit_blowup_exponent(X, radii, self.center, grid, self.q)
        self.beta_ = self.fit_.beta
        self.residual_ = self.fit_.residual
        return self

    def predict(self, radii):
        """Fitted envelope ``exp(b) r^beta``."""
        check_is_fitted(self, "fit_")
        return np.exp(self.fit_.intercept) * np.asarray(radii, dtype=float) ** self.fit_.beta


# --------------------------------------------------------------------- g.a.p.


@dataclass
class CurveSample:
    """Curve ``gamma(s_j)`` in space-time with a frame per sample.

    ``positions`` has shape ``(J, D)`` with time first; ``frames`` has shape
    ``(J, D, D)`` with ``frames[j, i]`` the vector ``e_i``.  The coordinate
    basis is used when no frame is given.
    """

    s: np.ndarray
    positions: np.ndarray
    frames: np.ndarray | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[0] != self.s.size:
            raise ShapeError("positions must have shape (J, D) matching s")
        if self.s.size < 2 or np.any(np.diff(self.s) <= 0):
            raise ValueError("s must be strictly increasing with at least two samples")
        D = self.positions.shape[1]
        if self.frames is None:
            self.frames = np.broadcast_to(np.eye(D), (self.s.size, D, D)).copy()
        self.frames = np.asarray(self.frames, dtype=float)
        if np.any(np.abs(np.linalg.det(self.frames)) <= 1e-8):
            raise ValueError("frame vectors must be linearly independent")

    @property
    def tangents(self) -> np.ndarray:
        edge = 2 if self.s.size >= 3 else 1
        return np.gradient(self.positions, self.s, axis=0, edge_order=edge)


def straight_curve(start, end, samples: int = 65, c: float = 1.0, reparam=None) -> CurveSample:
    """Segment from ``start`` to ``end`` with parameter range ``[0, c]``.

    ``reparam`` maps ``[0, 1]`` monotonically onto itself and is applied to
    the position, giving the same point set with a different speed.
    """
    s = np.linspace(0.0, c, samples)
    u = s / c
    if reparam is not None:
        u = reparam(u)
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    return CurveSample(s, start[None] + u[:, None] * (end - start)[None])


def interpolate_metric(fields: SpacetimeFields, points) -> np.ndarray:
    """Multilinear interpolation of ``g`` (time linear, space periodic)
    at space-time points of shape ``(J, D)``; returns ``(J, D, D)``."""
    grid = fields.grid
    points = np.asarray(points, dtype=float)
    t = points[:, 0]
    tmin, tmax = fields.times[0], fields.times[-1]
    tol = 1e-12 * max(1.0, abs(tmax))
    if np.any(t < tmin - tol) or np.any(t > tmax + tol):
        raise DomainError("curve leaves the evolved time interval")
    x = points[:, 1:]
    if np.any(x < -grid.L) or np.any(x > grid.L):
        raise DomainError("curve leaves the spatial box")
    ti = np.clip((t - tmin) / fields.dt, 0, fields.M)
    x0 = grid.axis[0]
    xi = (x - x0) / grid.h
    # pad one wrapped layer per spatial axis so map_coordinates can clamp
    pad = [(0, 0)] + [(1, 1)] * grid.n
    coords = np.vstack([ti[None], (xi + 1).T])
    D = grid.n + 1
    out = np.empty((points.shape[0], D, D))
    for a in range(D):
        for b in range(a, D):
            arr = np.pad(fields.g[:, a, b], pad, mode="wrap")
            v = ndimage.map_coordinates(arr, coords, order=1, mode="nearest")
            out[:, a, b] = v
            out[:, b, a] = v
    return out


def gap_length(curve: CurveSample, fields: SpacetimeFields, convention: str = "as_written") -> float:
    """Generalised affine parameter length by trapezoid quadrature.

    ``"as_written"`` integrates ``sum_i g(gamma', e_i)``;
    ``"standard"`` integrates ``sqrt(sum_i g(gamma', e_i)^2)``.
    """
    if convention not in GAP_CONVENTIONS:
        raise ValueError(f"convention must be one of {GAP_CONVENTIONS}")
    g = interpolate_metric(fields, curve.positions)
    proj = np.einsum("jab,ja,jib->ji", g, curve.tangents, curve.frames)
    integrand = proj.sum(axis=1) if convention == "as_written" else np.sqrt((proj ** 2).sum(axis=1))
    return float(np.trapezoid(integrand, curve.s))


# ----------------------------------------------------------------- monitors


def constraint_monitor(fields: SpacetimeFields, r_excl: float | None = None, eps_det: float = 1e-10) -> dict:
    """Per-slice ``sup |Gamma^mu|`` outside the excluded ball."""
    grid = fields.grid
    r_excl = 4 * grid.h if r_excl is None else r_excl
    ginv = _inverse_checked(fields.g, eps_det)
    con = christoffel(_to_points(ginv, 2), _to_points(fields.full_dg(), 3))
    Gc = _from_points(con.contracted, 1)                    # (T, D, *S)
    mask = grid.radius > r_excl
    series = np.abs(Gc[..., mask]).max(axis=-1)             # (T, D)
    return {
        "times": np.asarray(fields.times).tolist(),
        "sup": series.tolist(),
        "sup_total": series.max(axis=1).tolist(),
        "initial": series[0].tolist(),
        "initial_total": float(series[0].max()),
        "max": float(series.max()),
        "r_excl": r_excl,
    }


def signature_monitor(fields: SpacetimeFields) -> dict:
    """Uniform Lorentz margin per slice and the first failing slice."""
    margins = []
    first = None
    for j, gj in enumerate(fields.g):
        rep = lorentz_report(gj)
        margins.append(rep.margin)
        if first is None and rep.margin == 0.0:
            first = j
    return {"times": np.asarray(fields.times).tolist(), "margin": margins, "first_failure": first,
            "min_margin": float(min(margins))}
