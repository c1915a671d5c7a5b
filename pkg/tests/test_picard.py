import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from unshielded.data import DataList, flat_data, gauge_wave, gauge_wave_data
from unshielded.exceptions import (
    ConfigurationError,
    ContractionError,
    InadmissibleDataError,
    ResolutionError,
)
from unshielded.grid import make_grid
from unshielded.picard import (
    HarmonicPicardSolver,
    ResolutionWarning,
    SchemeConfig,
    SpacetimeFields,
    ViscositySweep,
    fields_distance,
    harmonic_residual,
    init_iteration,
    picard_map,
    richardson,
    run_fixed_point,
    viscosity_sweep,
)
from unshielded.tensor import minkowski


def exact_gauge_wave(grid, T, M, A=0.1):
    times = np.linspace(0.0, T, M + 1)
    g, dg, h = zip(*(gauge_wave(grid, t, A) for t in times))
    return SpacetimeFields(grid, times, np.array(g), np.array(dg), np.array(h))


# -------------------------------------------------------------------- config


@pytest.mark.parametrize(
    "kwargs, path",
    [
        ({"nu0": 0.0}, "scheme.nu0"),
        ({"max_iters": 1}, "scheme.max_iters"),
        ({"tol_contract": 1.0}, "scheme.tol_contract"),
        ({"tol_fix": 0.0}, "scheme.tol_fix"),
        ({"prefactor": "one"}, "scheme.prefactor"),
        ({"quadrature": "simpson"}, "scheme.quadrature"),
        ({"resolution_policy": "lax"}, "scheme.resolution_policy"),
    ],
)
def test_scheme_config_rejects(kwargs, path):
    with pytest.raises(ConfigurationError) as exc:
        SchemeConfig(**kwargs)
    assert exc.value.path == path


def test_strict_resolution_raises_and_spectral_warns(grid32):
    cfg = dict(T=0.0125, M=16, nu0=1e-4)
    with pytest.raises(ResolutionError):
        run_fixed_point(flat_data(grid32), SchemeConfig(resolution_policy="strict", **cfg))
    with pytest.warns(ResolutionWarning):
        run_fixed_point(flat_data(grid32), SchemeConfig(**cfg))


def test_lorentz_gate(grid32):
    g = minkowski(2, grid32.shape)
    g[0, 0] = 1.0
    d = DataList(grid32, g, np.zeros_like(g), np.zeros((2,) + g.shape))
    with pytest.raises(InadmissibleDataError):
        init_iteration(d, SchemeConfig())


# ---------------------------------------------------------------- flat space


def test_flat_is_fixed_point_after_one_step(flat_run, grid32):
    fields, rec = flat_run
    assert rec.converged
    assert rec.iterations == 1
    assert rec.increments[0]["norm"] == 0.0
    eta = minkowski(2, grid32.shape)
    assert np.all(fields.g == eta[None])
    assert np.all(fields.h == 0.0) and np.all(fields.dg == 0.0)


def test_flat_residual_vanishes(flat_run):
    res = harmonic_residual(flat_run[0])
    assert res["max"] < 1e-12


# ------------------------------------------------------------- singular data


def test_singular_run_contracts(singular_run):
    _, rec = singular_run
    assert rec.converged
    assert rec.increments[-1]["norm"] < 1e-8
    assert max(rec.ratios) < 1.0
    assert rec.consecutive_below(0.9) >= 3


def test_increments_vanish_at_initial_slice(singular_run):
    assert all(r["t0"] == 0.0 for r in singular_run[1].increments)


def test_initial_slice_carries_data(singular_run, singular32):
    f = singular_run[0]
    np.testing.assert_array_equal(f.g[0], singular32.g0)
    np.testing.assert_array_equal(f.dg[0], singular32.dg0)
    np.testing.assert_array_equal(f.h[0], singular32.h0)


def test_iterates_stay_symmetric(singular_run):
    f = singular_run[0]
    np.testing.assert_array_equal(f.g, np.swapaxes(f.g, 1, 2))
    np.testing.assert_array_equal(f.h, np.swapaxes(f.h, 1, 2))
    np.testing.assert_array_equal(f.dg, np.swapaxes(f.dg, 2, 3))
    assert all(np.all(np.isfinite(a)) for a in (f.g, f.dg, f.h))


def test_converged_fields_are_fixed_point(singular_run, singular32, small_cfg):
    f = singular_run[0]
    g, dg, h = picard_map(singular32, f.g, f.dg, f.h, small_cfg)
    gap = max(np.abs(g - f.g).max(), np.abs(dg - f.dg).max(), np.abs(h - f.h).max())
    assert gap < 1e-8


def test_record_to_dict_round_trips(singular_run):
    d = singular_run[1].to_dict()
    assert d["iterations"] == len(d["increments"])
    assert len(d["ratios"]) == d["iterations"] - 1


def test_large_horizon_fails_to_contract(singular32):
    cfg = SchemeConfig(T=0.2, M=16, nu0=1e-3, max_iters=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        with pytest.raises(ContractionError) as exc:
            run_fixed_point(singular32, cfg)
    rec = exc.value.record
    assert rec is not None and all(c >= 1.0 for c in rec.ratios[-cfg.patience:])
    assert exc.value.exit_code == 3


# ---------------------------------------------------------------- gauge wave


@pytest.mark.parametrize("prefactor", ["g00", "inv_g00"])
@pytest.mark.parametrize("quadrature", ["product", "trapezoid"])
def test_gauge_wave_tracks_exact_solution(prefactor, quadrature):
    grid = make_grid(2, 32)
    cfg = SchemeConfig(T=0.0125, M=16, nu0=1e-4, prefactor=prefactor, quadrature=quadrature)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        fields, rec = run_fixed_point(gauge_wave_data(grid), cfg)
    assert rec.converged
    assert fields_distance(fields, exact_gauge_wave(grid, cfg.T, cfg.M)) < 1e-5


def test_gauge_wave_residual_second_order():
    errs = []
    for N in (16, 32, 64):
        errs.append(harmonic_residual(exact_gauge_wave(make_grid(2, N), 0.5, N))["max"])
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_residual_needs_three_slices(grid32):
    f = exact_gauge_wave(grid32, 0.1, 1)
    with pytest.raises(ValueError):
        harmonic_residual(f)


# --------------------------------------------------------------- checkpoints


def _gw_cfg(**kw):
    return SchemeConfig(T=0.0125, M=8, nu0=1e-3, **kw)


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    grid = make_grid(2, 16)
    d = gauge_wave_data(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        full, rec_full = run_fixed_point(d, _gw_cfg(max_iters=40))
        assert rec_full.iterations > 3
        _, part = run_fixed_point(d, _gw_cfg(max_iters=3), checkpoint=tmp_path)
        assert part.iterations == 3 and not part.converged
        resumed, rec = run_fixed_point(d, _gw_cfg(max_iters=40), checkpoint=tmp_path, resume=True)
    assert rec.iterations == rec_full.iterations
    assert fields_distance(resumed, full) == 0.0
    assert (tmp_path / "manifest.json").exists()
    assert (tmp_path / "iter_0003" / "h.raw").exists()


@pytest.mark.parametrize("change", ["nu0", "data"])
def test_checkpoint_rejects_mismatch(tmp_path, change):
    grid = make_grid(2, 16)
    d = gauge_wave_data(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        run_fixed_point(d, _gw_cfg(max_iters=2), checkpoint=tmp_path)
        cfg = _gw_cfg(max_iters=4)
        if change == "nu0":
            cfg = SchemeConfig(T=0.0125, M=8, nu0=2e-3, max_iters=4)
        else:
            d = gauge_wave_data(grid, A=0.05)
        with pytest.raises(ConfigurationError):
            run_fixed_point(d, cfg, checkpoint=tmp_path, resume=True)


# --------------------------------------------------------------------- sweep


def test_sweep_on_flat_data_has_zero_distances(grid32):
    rep = viscosity_sweep(flat_data(grid32), SchemeConfig(T=0.0125, M=8), [4e-2, 2e-2, 1e-2])
    assert rep.distances == [0.0, 0.0]
    d = rep.to_dict()
    assert d["cauchy"]["distances"] == [0.0, 0.0]
    assert len(d["records"]) == 3


def test_single_viscosity_has_no_cauchy_section(grid32):
    rep = viscosity_sweep(flat_data(grid32), SchemeConfig(T=0.0125, M=8), [1e-2])
    assert "cauchy" not in rep.to_dict()
    assert rep.extrapolated is None


@pytest.mark.parametrize("seq", [[], [1e-2, 2e-2], [1e-2, 1e-2]])
def test_sweep_rejects_bad_sequences(grid32, seq):
    with pytest.raises(ConfigurationError):
        viscosity_sweep(flat_data(grid32), SchemeConfig(), seq)


def test_richardson_exact_for_linear_dependence(rng, grid32):
    times = np.linspace(0, 0.1, 3)
    shapes = [(3, 3, 3) + grid32.shape, (3, 2, 3, 3) + grid32.shape, (3, 3, 3) + grid32.shape]
    base = [rng.normal(size=s) for s in shapes]
    slope = [rng.normal(size=s) for s in shapes]

    def at(nu):
        return SpacetimeFields(grid32, times, *[b + nu * s for b, s in zip(base, slope)], nu)

    ext = richardson(at(2e-3), at(1e-3))
    assert fields_distance(ext, SpacetimeFields(grid32, times, *base)) < 1e-12


# ---------------------------------------------------------------- estimators


def test_solver_params_and_clone():
    s = HarmonicPicardSolver(T=0.1, nu0=5e-3, auto_T=True)
    c = clone(s)
    assert c.get_params() == s.get_params()
    with pytest.raises(NotFittedError):
        c.predict()
    with pytest.raises(TypeError):
        c.fit(np.zeros(3))


def test_solver_auto_horizon(singular32):
    s = HarmonicPicardSolver(T=0.2, M=16, nu0=1e-3, max_iters=30, auto_T=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        s.fit(singular32)
    assert s.attempts_[0]["outcome"] == "contraction_failure"
    assert s.T_ < 0.2
    assert s.record_.converged and max(s.record_.ratios) <= 0.9
    assert s.predict() is s.fields_


def test_solver_without_auto_horizon_raises(singular32):
    s = HarmonicPicardSolver(T=0.2, M=16, nu0=1e-3, max_iters=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        with pytest.raises(ContractionError):
            s.fit(singular32)


def test_sweep_estimator_on_flat(grid32):
    est = ViscositySweep(nu_sequence=(4e-2, 2e-2), T=0.0125, M=8).fit(flat_data(grid32))
    out = est.predict()
    assert np.all(out.g == minkowski(2, grid32.shape)[None])
    assert clone(est).get_params()["nu_sequence"] == (4e-2, 2e-2)
