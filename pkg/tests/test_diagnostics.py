import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from multicoag.diagnostics import (
    DiagnosticError,
    ExponentFit,
    SweepResult,
    default_z_grid,
    existence_sweep,
    fit_tail_exponent,
    isotropic_ratio,
    localization_ratio,
    trend_verdict,
    window_constants,
)
from multicoag.kernels import Constant
from multicoag.lattice import ClusterDistribution, Source
from multicoag.solver import SolverConfig


def power_law_1d(exponent, kmax):
    k = np.arange(1, kmax + 1)
    return ClusterDistribution.from_arrays(k[:, None], k.astype(float) ** exponent)


# --- tail exponent ---------------------------------------------------------

def test_exponent_fit_validates():
    with pytest.raises(DiagnosticError):
        ExponentFit(-1.5, 0.0, 1.0, (8.0, 8.0), 5)
    with pytest.raises(DiagnosticError):
        ExponentFit(-1.5, 0.0, 1.0, (8.0, 16.0), 3)


def test_synthetic_three_halves_law():
    fit = fit_tail_exponent(power_law_1d(-1.5, 4096), z_grid=np.geomspace(16, 2048, 15))
    # window mass of k^{-3/2} decays like z^{-3/2}
    assert fit.slope == pytest.approx(-1.5, abs=0.05)
    assert fit.r_squared > 0.999


def test_flat_law():
    state = ClusterDistribution.from_arrays(np.arange(1, 65)[:, None], np.ones(64))
    fit = fit_tail_exponent(state, z_grid=[8, 12, 16, 24, 32])
    # W(z) = (floor(z) - ceil(z/2) + 1) / z, so the O(1/z) count correction tilts the slope
    assert fit.slope == pytest.approx(0.0, abs=0.15)
    assert -0.15 < fit.slope < 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.5, -0.5), st.floats(0.3, 0.7))
def test_exact_power_law_over_two_decades(a, b):
    # n_k = k^a gives W(z) ~ z^a
    fit = fit_tail_exponent(power_law_1d(a, 20000), b=b, z_grid=np.geomspace(100, 10000, 17))
    assert fit.slope == pytest.approx(a, abs=0.02)


def test_empty_windows_dropped_then_too_few():
    state = ClusterDistribution(1, {(10,): 1.0, (20,): 1.0, (40,): 1.0})
    with pytest.raises(DiagnosticError, match="non-empty"):
        fit_tail_exponent(state, z_grid=[8, 9, 25, 30, 45])


def test_grid_range_checked():
    state = power_law_1d(-1.5, 256)
    with pytest.raises(DiagnosticError):
        fit_tail_exponent(state, z_grid=[4, 8, 16, 32], M=256)
    with pytest.raises(DiagnosticError):
        fit_tail_exponent(state, z_grid=[16, 32, 64, 200], M=256)
    with pytest.raises(DiagnosticError):
        fit_tail_exponent(state, z_grid=[16, 32, 64, 128], L=10, M=256)


def test_default_grid_keeps_off_both_boundaries():
    z = default_z_grid(256, 1)
    assert z[0] == 8 and z[-1] == 128  # too narrow to move inward
    z = default_z_grid(4096, 1)
    assert z[0] == pytest.approx(32) and z[-1] == pytest.approx(512)
    with pytest.raises(DiagnosticError):
        default_z_grid(12, 1)


def test_steady_constant_kernel_slope(run_1d_const):
    _, _, res = run_1d_const
    fit = fit_tail_exponent(res.state, z_grid=np.geomspace(8, 64, 10))
    assert fit.slope == pytest.approx(-1.5, abs=0.15)


def test_window_constants_flat_for_exact_law():
    state = power_law_1d(-2.5, 4096)
    z = 2.0 ** np.arange(6, 12)
    c = window_constants(state, z, 2.5, injection=4.0)
    assert c.max() / c.min() < 1.05
    # continuum value int_{1/2}^1 u^{-5/2} du / 2
    assert c[-1] == pytest.approx((2 ** 1.5 - 1) / 1.5 / 2, rel=0.01)


# --- localization ----------------------------------------------------------

def test_diagonal_support_gives_one():
    state = ClusterDistribution(2, {(k, k): 1.0 / k for k in range(1, 40)})
    assert localization_ratio(state, 8, theta=(0.5, 0.5)) == 1.0


def test_support_outside_cone_gives_zero():
    state = ClusterDistribution(2, {(k, 0): 1.0 for k in range(1, 40)})
    assert localization_ratio(state, 8, theta=(0.5, 0.5)) == 0.0


def test_empty_band_is_an_error_not_zero():
    state = ClusterDistribution(2, {(1, 0): 1.0})
    with pytest.raises(DiagnosticError, match="band"):
        localization_ratio(state, 8, theta=(0.5, 0.5))


def test_theta_defaults_to_injection_direction():
    state = ClusterDistribution(2, {(3 * k, k): 1.0 for k in range(1, 20)})
    src = Source(2, {(1, 0): 3.0, (0, 1): 1.0})
    assert localization_ratio(state, 8, src=src) == 1.0
    with pytest.raises(DiagnosticError):
        localization_ratio(state, 8)


def test_bad_parameters_rejected():
    state = ClusterDistribution(2, {(5, 5): 1.0})
    with pytest.raises(DiagnosticError):
        localization_ratio(state, 8, zeta_band=1.0, theta=(0.5, 0.5))
    with pytest.raises(DiagnosticError):
        localization_ratio(state, 8, eps_angle=0.0, theta=(0.5, 0.5))
    with pytest.raises(DiagnosticError):
        localization_ratio(state, 8, theta=(0.6, 0.6))


@pytest.mark.parametrize("R", [6, 10, 24])
@pytest.mark.parametrize("theta", [(0.5, 0.5), (0.75, 0.25)])
def test_isotropic_ratio_by_enumeration(R, theta):
    # every site (i, m-i) of every shell R <= m <= 2R with unit weight
    inside = total = 0
    for m in range(R, 2 * R + 1):
        for i in range(m + 1):
            total += 1
            if abs(i / m - theta[0]) + abs((m - i) / m - theta[1]) < 0.1:
                inside += 1
    assert isotropic_ratio(2, R, 2.0, 0.1, theta) == pytest.approx(inside / total, rel=1e-15)


def test_isotropic_state_matches_isotropic_ratio():
    keys = [(i, m - i) for m in range(1, 50) for i in range(m + 1)]
    state = ClusterDistribution(2, {k: 1.0 for k in keys})
    assert localization_ratio(state, 12, theta=(0.5, 0.5)) == isotropic_ratio(2, 12, theta=(0.5, 0.5))


@settings(max_examples=60)
@given(st.dictionaries(st.tuples(st.integers(0, 60), st.integers(0, 60)).filter(lambda c: sum(c) >= 1),
                       st.floats(1e-9, 10.0), min_size=1, max_size=40),
       st.floats(1.0, 30.0), st.floats(0.0, 1.0))
def test_ratio_in_unit_interval(entries, R, t):
    state = ClusterDistribution(2, entries)
    try:
        r = localization_ratio(state, R, theta=(t, 1 - t))
    except DiagnosticError:
        assume(False)
    assert 0.0 <= r <= 1.0


def test_localization_trend_on_skew_run(run_2d_skew):
    _, src, res = run_2d_skew
    lo = localization_ratio(res.state, 8, src=src)
    hi = localization_ratio(res.state, 32 / 2, src=src)  # largest band that fits inside M/2
    assert hi >= lo


# --- trend verdicts and sweeps -----------------------------------------------

@pytest.mark.parametrize("series,verdict", [
    ([[1.0]], "inconclusive"),
    ([[1.0, 1.01]], "saturating"),
    ([[1.0, 1.1, 1.12]], "saturating"),
    ([[1.0, 1.5, 2.3]], "diverging"),
    ([[1.0, 1.5, 1.51]], "inconclusive"),
    ([[1.0, 1.01], [1.0, 1.5]], "inconclusive"),
    ([[1.0, 1.3, 1.2]], "inconclusive"),
])
def test_trend_verdict(series, verdict):
    assert trend_verdict(series) == verdict


@given(st.lists(st.floats(0.1, 100.0), min_size=2, max_size=6), st.floats(0.1, 100.0))
def test_appending_refinement_never_jumps_between_verdicts(seq, nxt):
    before = trend_verdict([seq])
    after = trend_verdict([seq + [nxt]])
    assert {before, after} != {"saturating", "diverging"}


@pytest.fixture(scope="module")
def small_sweep():
    src = Source(1, {(1,): 1.0})
    return existence_sweep(Constant(1.0), src, [0.1], [16, 32], SolverConfig(steady_tol=1e-7))


def test_singleton_grid_is_inconclusive():
    res = existence_sweep(Constant(1.0), Source(1, {(1,): 1.0}), [0.1], [16], SolverConfig(steady_tol=1e-7))
    assert res.verdict == "inconclusive"
    assert res.axis_verdicts == {}
    assert len(res.cells) == 1 and res.cells[0].converged


def test_non_converged_cell_taints_verdict():
    res = existence_sweep(Constant(1.0), Source(1, {(1,): 1.0}), [0.1], [16, 32],
                          SolverConfig(max_steps=3))
    assert not any(c.converged for c in res.cells)
    assert res.verdict == "inconclusive"


def test_sweep_layout(small_sweep):
    res = small_sweep
    assert isinstance(res, SweepResult)
    assert [(c.epsilon, c.M) for c in res.cells] == [(0.1, 16.0), (0.1, 32.0)]
    assert res.R == 2.0
    lines = res.to_csv().splitlines()
    assert lines[0] == "epsilon,M,total_number,tail_count,moment,converged,residual,steps"
    assert len(lines) == 3
    assert list(res.axis_verdicts) == ["M@eps=0.1"]


def test_sweep_is_reproducible_in_parallel(small_sweep):
    src = Source(1, {(1,): 1.0})
    par = existence_sweep(Constant(1.0), src, [0.1], [16, 32], SolverConfig(steady_tol=1e-7), workers=2)
    assert par.cells == small_sweep.cells


def test_sweep_rejects_unsorted_lists():
    src = Source(1, {(1,): 1.0})
    with pytest.raises(DiagnosticError):
        existence_sweep(Constant(1.0), src, [0.01, 0.1], [16, 32])
    with pytest.raises(DiagnosticError):
        existence_sweep(Constant(1.0), src, [0.1], [32, 16])


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("COAG_THREADS", "lots")
    with pytest.raises(DiagnosticError, match="COAG_THREADS"):
        existence_sweep(Constant(1.0), Source(1, {(1,): 1.0}), [0.1], [16])
