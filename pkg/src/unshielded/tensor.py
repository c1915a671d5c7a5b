"""Tensor algebra on metric fields.

Arrays are component-first: a metric field has shape ``(D, D, *spatial)``
with ``D = n + 1`` and index 0 the time direction.  Full first derivatives
are stacked as ``dg[rho, alpha, beta] = d_rho g_{alpha beta}`` with shape
``(D, D, D, *spatial)``; the ``rho = 0`` entry is the evolved ``h``.  Every
function also accepts a single point (no trailing axes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateMetricError, ShapeError

EPS_DET = 1e-10

CONVENTIONS = ("standard", "as_printed")


def _check_metric(g):
    g = np.asarray(g, dtype=float)
    if g.ndim < 2 or g.shape[0] != g.shape[1]:
        raise ShapeError(f"metric must have shape (D, D, ...), got {g.shape}")
    return g


def _points_last(a, lead=2):
    """Move the leading component axes behind the spatial ones."""
    return np.moveaxis(a, tuple(range(lead)), tuple(range(-lead, 0)))


def _points_first(a, lead=2):
    return np.moveaxis(a, tuple(range(-lead, 0)), tuple(range(lead)))


def metric_det(g) -> np.ndarray:
    return np.linalg.det(_points_last(_check_metric(g)))


def invert_metric(g, eps_det: float = EPS_DET) -> np.ndarray:
    """Inverse metric field.

    Raises
    ------
    DegenerateMetricError
        If ``|det g| <= eps_det`` anywhere; carries the worst determinant
        and its grid index.
    """
    g = _check_metric(g)
    pts = _points_last(g)
    det = np.linalg.det(pts)
    bad = ~(np.abs(det) > eps_det)
    if np.any(bad):
        idx = np.unravel_index(np.argmin(np.where(np.isfinite(det), np.abs(det), -1.0)), det.shape) if det.ndim else ()
        worst = float(det[idx]) if det.ndim else float(det)
        raise DegenerateMetricError(
            f"degenerate metric: det = {worst:.3e} at index {tuple(int(i) for i in idx)}",
            det=worst,
            location=tuple(int(i) for i in idx),
        )
    return _points_first(np.linalg.inv(pts))


def full_derivatives(h, dg) -> np.ndarray:
    """Stack ``h = d_0 g`` on top of the spatial derivatives ``dg``."""
    h = np.asarray(h, dtype=float)
    dg = np.asarray(dg, dtype=float)
    if dg.shape[1:] != h.shape:
        raise ShapeError(f"spatial derivatives {dg.shape} do not match h {h.shape}")
    return np.concatenate([h[None], dg], axis=0)


def _pl(a, k):
    """Components-first -> contiguous points-last (``k`` component axes)."""
    a = np.asarray(a, dtype=float)
    return np.ascontiguousarray(np.moveaxis(a, tuple(range(k)), tuple(range(a.ndim - k, a.ndim))))


def _pf(a, k):
    return np.moveaxis(a, tuple(range(a.ndim - k, a.ndim)), tuple(range(k)))


def _lower_pl(dg):
    """Points-last ``Gamma_{rho alpha beta}`` from points-last ``dg``."""
    low = 0.5 * (np.swapaxes(np.swapaxes(dg, -3, -2), -2, -1)  # d_b g_{ra} -> [r, a, b]
                 + np.swapaxes(dg, -3, -2)                     # d_a g_{rb} -> [r, a, b]
                 - dg)
    return 0.5 * (low + np.swapaxes(low, -1, -2))


def christoffel_lower(dg) -> np.ndarray:
    """``Gamma_{rho alpha beta} = (d_beta g_{rho alpha} + d_alpha g_{rho beta} - d_rho g_{alpha beta}) / 2``."""
    return _pf(_lower_pl(_pl(dg, 3)), 3)


@dataclass(frozen=True)
class Christoffel:
    """Connection coefficients ``Gamma[mu, alpha, beta]`` and their trace
    ``contracted[mu] = g^{alpha beta} Gamma^mu_{alpha beta}``."""

    Gamma: np.ndarray
    contracted: np.ndarray


def _christoffel_pl(gi, dg):
    D = gi.shape[-1]
    low = _lower_pl(dg)
    Gam = (gi @ low.reshape(low.shape[:-3] + (D, D * D))).reshape(low.shape)
    Gam = 0.5 * (Gam + np.swapaxes(Gam, -1, -2))
    Gc = (Gam.reshape(Gam.shape[:-2] + (D * D,)) @ gi.reshape(gi.shape[:-2] + (D * D, 1)))[..., 0]
    return Gam, Gc


def christoffel(g_inv, dg) -> Christoffel:
    Gam, Gc = _christoffel_pl(_pl(g_inv, 2), _pl(dg, 3))
    return Christoffel(_pf(Gam, 3), _pf(Gc, 1))


def _inverse_derivative_pl(gi, dg):
    return -(gi[..., None, :, :] @ dg @ gi[..., None, :, :])


def inverse_derivative(g_inv, dg) -> np.ndarray:
    """``d_rho g^{mu nu} = -g^{mu a} d_rho g_{ab} g^{b nu}``."""
    return _pf(_inverse_derivative_pl(_pl(g_inv, 2), _pl(dg, 3)), 3)


def christoffel_derivative(g_inv, dg, d2g) -> np.ndarray:
    """``dGamma[sigma, mu, alpha, beta] = d_sigma Gamma^mu_{alpha beta}``
    from analytic first and second metric derivatives
    (``d2g[sigma, rho, alpha, beta]``)."""
    gi, dgp, d2 = _pl(g_inv, 2), _pl(dg, 3), _pl(d2g, 4)
    D = gi.shape[-1]
    low = _lower_pl(dgp).reshape(dgp.shape[:-3] + (D, D * D))
    dlow = _lower_pl(d2).reshape(d2.shape[:-3] + (D, D * D))
    dginv = _inverse_derivative_pl(gi, dgp)
    out = dginv @ low[..., None, :, :] + gi[..., None, :, :] @ dlow
    out = out.reshape(out.shape[:-1] + (D, D))
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    return _pf(out, 4)


def _ricci_pl(Gam, dGam, sign):
    D = Gam.shape[-1]
    # d_a Gamma^a_{mn} and d_n Gamma^a_{am}
    div = sum(dGam[..., a, a, :, :] for a in range(D))
    tr_d = sum(dGam[..., :, a, a, :] for a in range(D))          # [n, m]
    trace = sum(Gam[..., b, :, b] for b in range(D))              # Gamma^b_{a b} -> [a]
    lin = (trace[..., None, :] @ Gam.reshape(Gam.shape[:-3] + (D, D * D))).reshape(Gam.shape[:-3] + (D, D))
    A = np.swapaxes(Gam, -3, -2).reshape(Gam.shape[:-3] + (D, D * D))                     # [m, (a, b)]
    B = np.moveaxis(Gam, -1, -3).reshape(Gam.shape[:-3] + (D, D, D))                       # [a, b, n]
    B = B.reshape(Gam.shape[:-3] + (D * D, D))
    quad = A @ B
    return div - np.swapaxes(tr_d, -1, -2) + sign * lin - quad


def ricci(Gamma, dGamma, g_inv=None, convention: str = "standard"):
    """Ricci tensor and (if ``g_inv`` is given) scalar curvature.

    ``R_{mu nu} = d_a Gamma^a_{mu nu} - d_nu Gamma^a_{a mu}
    + s Gamma^a_{mu nu} Gamma^b_{a b} - Gamma^a_{mu b} Gamma^b_{nu a}``

    with ``s = +1`` for ``convention="standard"`` and ``s = -1`` for
    ``"as_printed"``.  The latter does not vanish on flat metrics written in
    curvilinear coordinates and is kept only for comparison.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    Gamma = Gamma.Gamma if isinstance(Gamma, Christoffel) else np.asarray(Gamma, dtype=float)
    dGamma = np.asarray(dGamma, dtype=float)
    if dGamma.shape[1:] != Gamma.shape or dGamma.shape[0] != Gamma.shape[0]:
        raise ShapeError(f"dGamma shape {dGamma.shape} incompatible with Gamma {Gamma.shape}")
    sign = 1.0 if convention == "standard" else -1.0
    Ric = _ricci_pl(_pl(Gamma, 3), _pl(dGamma, 4), sign)
    R = None
    if g_inv is not None:
        R = np.sum(Ric * _pl(g_inv, 2), axis=(-1, -2))
    return _pf(Ric, 2), R


def ricci_from_metric_derivatives(g, dg, d2g, convention: str = "standard", eps_det: float = EPS_DET):
    """Curvature from analytic metric derivatives up to second order."""
    g_inv = invert_metric(g, eps_det)
    Gam = christoffel(g_inv, dg)
    dGam = christoffel_derivative(g_inv, dg, d2g)
    return ricci(Gam, dGam, g_inv, convention)


def _harmonic_source_pl(g, gi, dg):
    D = g.shape[-1]
    Gam, Gc = _christoffel_pl(gi, dg)
    # quadratic term g^{ab} g_{de} Gamma^d_{mb} Gamma^e_{na}
    Lo = (g[..., None, :, :] @ np.swapaxes(Gam, -3, -2)).swapaxes(-3, -2)  # Gamma_{e m b} as [e, m, b]
    Y = Gam @ gi[..., None, :, :]                                        # sum_a Gamma^e_{n a} g^{a b}
    quad = np.sum(Lo @ np.swapaxes(Y, -1, -2), axis=-3)                 # sum_e sum_b L[e,m,b] Y[e,n,b]
    trace_term = (Gc[..., None, :] @ dg.reshape(dg.shape[:-3] + (D, D * D))).reshape(g.shape)
    # Gup[r, e, s] = Gamma^r_{ab} g^{ae} g^{bs}
    Gup = gi[..., None, :, :] @ Gam @ gi[..., None, :, :]
    # U[r, m] = Gup[r, e, s] d_m g_{es}
    U = Gup.reshape(Gup.shape[:-2] + (D * D,)) @ np.swapaxes(dg.reshape(dg.shape[:-2] + (D * D,)), -1, -2)
    mixed = np.swapaxes(g @ U, -1, -2)                                   # [m, n] = g_{n r} U[r, m]
    H = quad + 0.5 * (trace_term + mixed + np.swapaxes(mixed, -1, -2))
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def harmonic_source(g, g_inv, dg, h=None) -> np.ndarray:
    """Quadratic first-derivative source ``H_{mu nu}`` of the reduced system.

    ``dg`` holds all ``D`` derivative directions, or only the ``n`` spatial
    ones when ``h`` supplies the time derivative.
    """
    if h is not None:
        dg = full_derivatives(h, dg)
    return _pf(_harmonic_source_pl(_pl(g, 2), _pl(g_inv, 2), _pl(dg, 3)), 2)


@dataclass(frozen=True)
class Signature:
    neg: int
    pos: int
    margin: float

    @property
    def degenerate(self) -> bool:
        return self.neg + self.pos < 1 or self.margin == 0.0

    def __iter__(self):
        return iter((self.neg, self.pos, self.margin))


def _eigenvalues(g):
    return np.linalg.eigvalsh(_points_last(_check_metric(g)))


def signature(g, zero_tol: float = 0.0) -> Signature:
    """Eigenvalue sign counts of one symmetric matrix and ``min |lambda|``."""
    lam = np.linalg.eigvalsh(np.asarray(g, dtype=float))
    return Signature(int(np.sum(lam < -zero_tol)), int(np.sum(lam > zero_tol)), float(np.min(np.abs(lam))))


@dataclass(frozen=True)
class LorentzReport:
    """Pointwise eigenvalue margin over a slice.

    ``margin`` is zero when any point fails the one-negative-eigenvalue
    count.  ``ratio_inf`` and ``ratio_sup`` are the extreme values of
    ``|g_00 / sum_{i,j>=1} g_ij|`` over the slice, reported as a secondary
    statistic only.
    """

    margin: float
    lorentzian: bool
    failures: int
    first_failure: tuple | None
    worst_location: tuple
    ratio_inf: float
    ratio_sup: float

    def to_dict(self):
        return {
            "margin": self.margin,
            "lorentzian": self.lorentzian,
            "failures": self.failures,
            "first_failure": list(self.first_failure) if self.first_failure is not None else None,
            "worst_location": list(self.worst_location),
            "ratio_inf": self.ratio_inf,
            "ratio_sup": self.ratio_sup,
        }


def lorentz_report(g) -> LorentzReport:
    g = _check_metric(g)
    lam = _eigenvalues(g)
    neg = np.sum(lam < 0, axis=-1)
    minabs = np.min(np.abs(lam), axis=-1)
    ok = (neg == 1) & (minabs > 0)
    fail_idx = np.argwhere(~np.atleast_1d(ok)) if minabs.ndim else (np.zeros((0, 0), int) if ok else np.zeros((1, 0), int))
    worst = np.unravel_index(np.argmin(minabs), minabs.shape) if minabs.ndim else ()
    spatial = np.sum(g[1:, 1:], axis=(0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(g[0, 0] / spatial)
    finite = ratio[np.isfinite(ratio)] if np.ndim(ratio) else np.array([ratio])
    all_ok = bool(np.all(ok))
    return LorentzReport(
        margin=float(np.min(minabs)) if all_ok else 0.0,
        lorentzian=all_ok,
        failures=int(np.sum(~ok)),
        first_failure=tuple(int(i) for i in fail_idx[0]) if len(fail_idx) else None,
        worst_location=tuple(int(i) for i in worst),
        ratio_inf=float(np.min(finite)) if finite.size else float("nan"),
        ratio_sup=float(np.max(finite)) if finite.size else float("nan"),
    )


def uniform_lorentz_margin(g) -> float:
    """Minimum ``|lambda|`` over the slice, or 0 if any point is not
    Lorentzian with exactly one negative eigenvalue."""
    return lorentz_report(g).margin


def unknown_count(n: int) -> int:
    """Number of scalar unknowns ``g, g_{,k}, h`` of the first-order system."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (n + 1) * (n + 2) ** 2 // 2


def minkowski(n: int, spatial_shape=()) -> np.ndarray:
    D = n + 1
    eta = np.diag([-1.0] + [1.0] * n)
    return np.broadcast_to(eta.reshape((D, D) + (1,) * len(spatial_shape)), (D, D) + tuple(spatial_shape)).copy()
