import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import symbolic
from oracles import random_metric, random_symmetric_derivs, ref_christoffel, ref_harmonic_source, ref_ricci
from unshielded.exceptions import DegenerateMetricError, ShapeError
from unshielded.tensor import (
    christoffel,
    christoffel_derivative,
    harmonic_source,
    invert_metric,
    lorentz_report,
    minkowski,
    ricci,
    ricci_from_metric_derivatives,
    signature,
    uniform_lorentz_margin,
    unknown_count,
)


def seeds():
    return st.integers(0, 2 ** 31 - 1)


# ------------------------------------------------------------------- inverse


def test_minkowski_self_inverse():
    eta = minkowski(3)
    np.testing.assert_array_equal(invert_metric(eta), eta)


def test_diagonal_inverse():
    g = np.diag([-2.0, 0.5, 0.5])
    np.testing.assert_allclose(invert_metric(g), np.diag([-0.5, 2.0, 2.0]), rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=seeds())
def test_inverse_residual(seed):
    g = random_metric(np.random.default_rng(seed), 4, (5, 3))
    gi = invert_metric(g)
    prod = np.einsum("ab...,bc...->ac...", g, gi)
    assert np.abs(prod - np.eye(4)[:, :, None, None]).max() < 1e-10


def test_degenerate_metric_reports_location():
    g = minkowski(2, (4, 4))
    g[1, 1, 2, 3] = 0.0
    with pytest.raises(DegenerateMetricError) as exc:
        invert_metric(g)
    assert exc.value.location == (2, 3)
    assert exc.value.det == 0.0


def test_metric_shape_checked():
    with pytest.raises(ShapeError):
        invert_metric(np.zeros((3, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=seeds(), D=st.integers(2, 4))
def test_trace_identity(seed, D):
    g = random_metric(np.random.default_rng(seed), D, (6,))
    tr = np.einsum("ab...,ab...->...", invert_metric(g), g)
    assert np.abs(tr - D).max() < 1e-10


# ------------------------------------------------------------------ Christoffel


def test_flat_christoffel_zero():
    con = christoffel(minkowski(2, (3,)), np.zeros((3, 3, 3, 3)))
    assert not con.Gamma.any() and not con.contracted.any()


@pytest.mark.parametrize("eps, x1", [(0.1, 0.3), (0.5, -0.7), (0.01, 0.9)])
def test_linear_g11_christoffel(eps, x1):
    g = np.diag([-1.0, 1.0 + eps * x1, 1.0])
    dg = np.zeros((3, 3, 3))
    dg[1, 1, 1] = eps
    G = christoffel(invert_metric(g), dg).Gamma
    assert G[1, 1, 1] == pytest.approx(eps / (2 * (1 + eps * x1)), rel=1e-14)
    # the only other entries come from d_1 g_11 through lowering
    mask = np.ones_like(G, dtype=bool)
    mask[1, 1, 1] = False
    assert np.abs(G[mask]).max() == 0.0


def test_linear_g11_christoffel_symbolic():
    eps = sp.Rational(1, 7)
    g = sp.diag(-1, 1 + eps * symbolic.x, 1)
    _, G, _ = symbolic.christoffel(g)
    assert sp.simplify(G[1][1][1] - eps / (2 * (1 + eps * symbolic.x))) == 0


@settings(max_examples=30, deadline=None)
@given(seed=seeds())
def test_christoffel_matches_oracle_and_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    g = random_metric(rng, 3, (4,))
    dg = random_symmetric_derivs(rng, 3, (4,))
    gi = invert_metric(g)
    con = christoffel(gi, dg)
    G, Gc = ref_christoffel(gi, dg)
    np.testing.assert_allclose(con.Gamma, G, atol=1e-13)
    np.testing.assert_allclose(con.contracted, Gc, atol=1e-13)
    np.testing.assert_array_equal(con.Gamma, np.swapaxes(con.Gamma, 1, 2))


def _polynomial_metric(rng, D=3, scale=0.1):
    """g(X) = eta + A X + X B X / 2 with exact derivatives."""
    eta = np.diag([-1.0] + [1.0] * (D - 1))
    A = rng.normal(scale=scale, size=(D, D, D))
    A = 0.5 * (A + np.swapaxes(A, 1, 2))            # A[r, a, b]
    B = rng.normal(scale=scale, size=(D, D, D, D))
    B = 0.5 * (B + np.swapaxes(B, 0, 1))            # B[s, r, a, b]
    B = 0.5 * (B + np.swapaxes(B, 2, 3))

    def at(X):
        X = np.asarray(X, dtype=float)
        g = eta + np.einsum("rab,r->ab", A, X) + 0.5 * np.einsum("srab,s,r->ab", B, X, X)
        dg = A + np.einsum("srab,s->rab", B, X)
        return g, dg, B
    return at


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_christoffel_derivative_finite_difference(seed):
    at = _polynomial_metric(np.random.default_rng(seed))
    X0 = np.array([0.1, -0.2, 0.3])
    g, dg, d2g = at(X0)
    dG = christoffel_derivative(invert_metric(g), dg, d2g)
    eps = 1e-5
    for s in range(3):
        e = np.zeros(3)
        e[s] = eps
        gp, dgp, _ = at(X0 + e)
        gm, dgm, _ = at(X0 - e)
        fd = (christoffel(invert_metric(gp), dgp).Gamma - christoffel(invert_metric(gm), dgm).Gamma) / (2 * eps)
        assert np.abs(fd - dG[s]).max() <= 1e-6 * max(1.0, np.abs(dG[s]).max())


# ----------------------------------------------------------------------- Ricci


def test_flat_ricci_zero():
    Ric, R = ricci(np.zeros((3, 3, 3, 5)), np.zeros((3, 3, 3, 3, 5)), minkowski(2, (5,)))
    assert not Ric.any() and not R.any()


@settings(max_examples=20, deadline=None)
@given(seed=seeds(), convention=st.sampled_from(["standard", "as_printed"]))
def test_ricci_matches_oracle(seed, convention):
    rng = np.random.default_rng(seed)
    G = random_symmetric_derivs(rng, 3, (4,))
    dG = rng.normal(size=(3, 3, 3, 3, 4))
    dG = 0.5 * (dG + np.swapaxes(dG, 2, 3))
    Ric, _ = ricci(G, dG, convention=convention)
    sign = 1.0 if convention == "standard" else -1.0
    np.testing.assert_allclose(Ric, ref_ricci(G, dG, sign), atol=1e-12)


@pytest.mark.parametrize("seed", [3, 4])
def test_ricci_symmetric_for_metric_input(seed):
    at = _polynomial_metric(np.random.default_rng(seed))
    Ric, _ = ricci_from_metric_derivatives(*at([0.05, 0.1, -0.1]))
    assert np.abs(Ric - Ric.T).max() < 1e-8


def test_curvilinear_flat_metric_standard_vs_as_printed():
    # g_11 = a(x) is flat space in stretched coordinates
    X0 = 0.3
    a, a1, a2 = 1 + 0.2 * np.sin(X0), 0.2 * np.cos(X0), -0.2 * np.sin(X0)
    g = np.diag([-1.0, a, 1.0])
    dg = np.zeros((3, 3, 3))
    dg[1, 1, 1] = a1
    d2g = np.zeros((3, 3, 3, 3))
    d2g[1, 1, 1, 1] = a2
    _, R_std = ricci_from_metric_derivatives(g, dg, d2g, "standard")
    _, R_pr = ricci_from_metric_derivatives(g, dg, d2g, "as_printed")
    assert abs(R_std) < 1e-15
    assert abs(R_pr) > 1e-3


def test_unknown_convention_rejected():
    with pytest.raises(ValueError):
        ricci(np.zeros((3, 3, 3)), np.zeros((3, 3, 3, 3)), convention="other")


@pytest.mark.parametrize("point", [(0.0, 0.1, 0.2), (0.3, -0.4, 0.7)])
def test_gauge_wave_ricci_vanishes(point):
    g = symbolic.gauge_wave_metric(sp.Rational(1, 10), 2)
    Ric, R = ricci_from_metric_derivatives(*symbolic.numeric_derivatives(g, point))
    assert np.abs(Ric).max() < 1e-14 and abs(R) < 1e-14


def test_curvature_linear_in_amplitude():
    # smooth non-gauge perturbation of g_11: R = O(a)
    def R_for(a):
        gs = sp.diag(-1, 1 + a * sp.sin(sp.pi * symbolic.x) * sp.cos(sp.pi * symbolic.y), 1)
        return ricci_from_metric_derivatives(*symbolic.numeric_derivatives(gs, (0.0, 0.3, 0.2)))[1]
    r1, r2 = R_for(sp.Rational(1, 1000)), R_for(sp.Rational(1, 10000))
    assert abs(r1) > 0
    assert abs(r1 / r2) == pytest.approx(10.0, rel=1e-3)


# ------------------------------------------------------------- harmonic source


def test_flat_harmonic_source_zero():
    g = minkowski(2, (4,))
    assert not harmonic_source(g, g, np.zeros((3, 3, 3, 4))).any()


@settings(max_examples=30, deadline=None)
@given(seed=seeds())
def test_harmonic_source_dual_implementation(seed):
    rng = np.random.default_rng(seed)
    g = random_metric(rng, 3, (5,))
    dg = random_symmetric_derivs(rng, 3, (5,))
    gi = invert_metric(g)
    H = harmonic_source(g, gi, dg)
    ref = ref_harmonic_source(g, gi, dg)
    assert np.abs(H - ref).max() < 1e-12
    assert np.abs(H - np.swapaxes(H, 0, 1)).max() < 1e-10


def test_harmonic_source_with_separate_time_derivative(rng):
    g = random_metric(rng, 3, (4,))
    dg = random_symmetric_derivs(rng, 3, (4,))
    gi = invert_metric(g)
    np.testing.assert_allclose(harmonic_source(g, gi, dg[1:], h=dg[0]), harmonic_source(g, gi, dg), atol=0)


def _harmonic_sample(rng, D=3):
    """Point derivatives with vanishing contracted Christoffel symbols."""
    g = random_metric(rng, D, scale=0.05)
    gi = invert_metric(g)
    iu = [(r, a, b) for r in range(D) for a in range(D) for b in range(a, D)]

    def unpack(v):
        dg = np.zeros((D, D, D))
        for val, (r, a, b) in zip(v, iu):
            dg[r, a, b] = dg[r, b, a] = val
        return dg
    M = np.stack([ref_christoffel(gi, unpack(e))[1] for e in np.eye(len(iu))], axis=1)
    v = rng.normal(size=len(iu))
    v -= np.linalg.pinv(M) @ (M @ v)
    return g, gi, unpack(v)


def test_vanishing_contraction_keeps_quadratic_terms(rng):
    g, gi, dg = _harmonic_sample(rng)
    G, Gc = ref_christoffel(gi, dg)
    assert np.abs(Gc).max() < 1e-12 and np.abs(G).max() > 0.1
    # the d g * Gamma^mu term drops; the rest of the source survives
    H = harmonic_source(g, gi, dg)
    full = ref_harmonic_source(g, gi, dg)
    t_term = np.einsum("amn,a->mn", dg, Gc)
    assert np.abs(t_term).max() < 1e-12
    assert np.abs(H).max() > 1e-2
    np.testing.assert_allclose(H, full, atol=1e-12)


def test_gauge_wave_source_vanishes():
    g, dg, _ = symbolic.numeric_derivatives(symbolic.gauge_wave_metric(sp.Rational(1, 10), 2), (0.1, 0.2, 0.0))
    gi = invert_metric(g)
    assert np.abs(christoffel(gi, dg).contracted).max() < 1e-15
    assert np.abs(harmonic_source(g, gi, dg)).max() < 1e-14


def test_harmonic_source_closes_reduced_ricci():
    # R_mn = -1/2 g^ab d_a d_b g_mn + 1/2 (g_mr d_n Gamma^r + g_nr d_m Gamma^r) + H_mn
    rng = np.random.default_rng(7)
    at = _polynomial_metric(rng)
    X0 = np.array([0.1, -0.2, 0.3])
    g, dg, d2g = at(X0)
    gi = invert_metric(g)
    Ric, _ = ricci_from_metric_derivatives(g, dg, d2g)
    dG = christoffel_derivative(gi, dg, d2g)
    con = christoffel(gi, dg)
    dgi = -np.einsum("ma,rab,bn->rmn", gi, dg, gi)
    dGc = np.einsum("sab,mab->sm", dgi, con.Gamma) + np.einsum("ab,smab->sm", gi, dG)
    box = np.einsum("ab,abmn->mn", gi, d2g)
    gam = 0.5 * (np.einsum("mr,nr->mn", g, dGc) + np.einsum("nr,mr->mn", g, dGc))
    H = harmonic_source(g, gi, dg)
    np.testing.assert_allclose(Ric, -0.5 * box + gam + H, atol=1e-12)


@pytest.mark.slow
def test_gauge_wave_solves_harmonic_system_symbolically():
    g = symbolic.gauge_wave_metric()
    _, _, Gc = symbolic.christoffel(g)
    assert all(sp.simplify(c) == 0 for c in Gc)
    assert symbolic.ricci(g) == sp.zeros(3)
    assert sp.simplify(symbolic.harmonic_source(g)) == sp.zeros(3)


# ------------------------------------------------------------------ signature


def test_signature_minkowski():
    assert tuple(signature(minkowski(3))) == (1, 3, 1.0)


def test_signature_diagonal():
    assert tuple(signature(np.diag([-0.5, 2.0, 3.0]))) == (1, 2, 0.5)


def test_signature_degenerate():
    s = signature(np.diag([-1.0, 0.0, 1.0]))
    assert s.margin == 0.0 and s.degenerate


def test_uniform_margin_flat():
    assert uniform_lorentz_margin(minkowski(2, (8, 8))) == 1.0


def test_uniform_margin_perturbed(rng):
    g = minkowski(2, (16, 16))
    g[1, 1] += 0.1 * np.sin(np.linspace(0, 6, 256)).reshape(16, 16)
    rep = lorentz_report(g)
    assert rep.lorentzian and rep.margin >= 0.9
    assert rep.failures == 0


def test_uniform_margin_signature_flip():
    g = minkowski(2, (8, 8))
    g[0, 0, 5, 2] = 1.0
    rep = lorentz_report(g)
    assert rep.margin == 0.0 and not rep.lorentzian
    assert rep.first_failure == (5, 2)
    assert rep.failures == 1


@pytest.mark.parametrize("n, count", [(1, 9), (2, 24), (3, 50)])
def test_unknown_count(n, count):
    assert unknown_count(n) == count
