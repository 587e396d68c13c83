import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multicoag.lattice import (
    ClusterDistribution,
    LatticeError,
    Source,
    dyadic_window_mass,
    enumerate_compositions,
    format_snapshot,
    merge,
    moments,
    parse_snapshot,
    read_snapshot,
    tail_count,
    write_snapshot,
)


def sparse_states(dim, max_size=30, max_entries=20):
    comp = st.tuples(*[st.integers(0, max_size)] * dim).filter(lambda c: sum(c) >= 1)
    val = st.floats(1e-12, 1e3, allow_nan=False, allow_infinity=False)
    return st.dictionaries(comp, val, max_size=max_entries).map(lambda e: ClusterDistribution(dim, e))


# --- construction ----------------------------------------------------------

def test_rejects_negative_concentration():
    with pytest.raises(LatticeError):
        ClusterDistribution(1, {(1,): -1.0})


def test_rejects_origin_and_wrong_dim():
    with pytest.raises(LatticeError):
        ClusterDistribution(2, {(0, 0): 1.0})
    with pytest.raises(LatticeError):
        ClusterDistribution(2, {(1,): 1.0})


def test_rejects_entries_beyond_cap():
    with pytest.raises(LatticeError):
        ClusterDistribution(1, {(9,): 1.0}, cap=8)


def test_absent_key_is_zero_and_zeros_dropped():
    st_ = ClusterDistribution(2, {(1, 0): 2.0, (0, 1): 0.0})
    assert st_[(5, 5)] == 0.0
    assert list(st_.entries) == [(1, 0)]


def test_keys_sorted_lexicographically():
    st_ = ClusterDistribution(2, {(2, 0): 1.0, (0, 3): 1.0, (1, 1): 1.0})
    assert list(st_.entries) == [(0, 3), (1, 1), (2, 0)]


def test_source_reach_and_validation():
    src = Source(2, {(1, 0): 1.0, (2, 1): 0.5})
    assert src.reach == 3
    with pytest.raises(LatticeError):
        Source(1, {(1,): -0.5})
    with pytest.raises(LatticeError):
        Source(1, {(1,): math.inf})


# --- moments ---------------------------------------------------------------

def test_moments_empty_state_with_source():
    m = moments(ClusterDistribution(2), Source(2, {(1, 0): 1.0}))
    assert m.total_number == 0
    assert m.injection.tolist() == [1.0, 0.0]
    assert m.injection_norm == 1.0


def test_moments_single_entry():
    m = moments(ClusterDistribution(2, {(1, 1): 2.0}))
    assert m.species_mass.tolist() == [2.0, 2.0]
    assert m.total_number == 2.0


def test_injection_direction():
    src = Source(2, {(1, 0): 3.0, (0, 1): 1.0})
    m = moments(ClusterDistribution(2), src)
    assert m.injection.tolist() == [3.0, 1.0]
    assert m.injection_norm == 4.0
    assert src.direction().tolist() == [0.75, 0.25]


def test_injection_norm_is_sum_of_size_times_rate():
    src = Source(3, {(1, 0, 0): 2.0, (1, 2, 0): 0.5, (0, 0, 4): 0.25})
    assert moments(ClusterDistribution(3), src).injection_norm == pytest.approx(2 + 1.5 + 1.0)


def test_moments_dimension_mismatch():
    with pytest.raises(LatticeError):
        moments(ClusterDistribution(1), Source(2, {(1, 0): 1.0}))


@given(sparse_states(2), sparse_states(2))
def test_moments_additive_on_disjoint_support(a, b):
    b = ClusterDistribution(2, {k: v for k, v in b.entries.items() if k not in a.entries})
    both = merge([a, b])
    ma, mb, mab = moments(a), moments(b), moments(both)
    assert mab.total_number == pytest.approx(ma.total_number + mb.total_number, rel=1e-12)
    assert np.allclose(mab.species_mass, ma.species_mass + mb.species_mass, rtol=1e-12)


# --- window mass / tail ----------------------------------------------------

def test_window_mass_empty():
    for z in (1.0, 10.0, 1e6):
        assert dyadic_window_mass(ClusterDistribution(3), z) == 0.0


def test_window_mass_single_entry():
    assert dyadic_window_mass(ClusterDistribution(2, {(4, 4): 1.0}), 8, 0.5) == 1 / 8


def test_window_bounds_closed():
    state = ClusterDistribution(1, {(4,): 1.0, (8,): 2.0, (9,): 4.0, (3,): 8.0})
    assert dyadic_window_mass(state, 8, 0.5) == pytest.approx(3 / 8)


def test_window_mass_power_law():
    k = np.arange(1, 4097)
    state = ClusterDistribution.from_arrays(k[:, None], k ** -1.5)
    z = 1024
    direct = sum(x ** -1.5 for x in range(512, 1025)) / z
    assert dyadic_window_mass(state, z, 0.5) == pytest.approx(direct, rel=1e-12)
    # continuum constant int_{1/2}^1 u^{-3/2} du = 2 (sqrt 2 - 1)
    c = 2 * (math.sqrt(2) - 1)
    assert dyadic_window_mass(state, z, 0.5) == pytest.approx(c * z ** -1.5, rel=0.01)


def test_window_ratio_validated():
    for b in (0.0, 1.0, 1.5):
        with pytest.raises(LatticeError):
            dyadic_window_mass(ClusterDistribution(1), 4, b)


@settings(max_examples=60)
@given(sparse_states(2, max_size=40), st.floats(1.0, 80.0), st.floats(0.05, 0.95))
def test_window_mass_brute_force(state, z, b):
    total = 0.0
    for key, val in state.entries.items():
        if b * z <= sum(key) <= z:
            total += val
    assert dyadic_window_mass(state, z, b) * z == pytest.approx(total, rel=1e-12, abs=1e-300)


def test_tail_count_examples():
    assert tail_count(ClusterDistribution(2), 1) == 0
    state = ClusterDistribution(2, {(1, 0): 5.0})
    assert tail_count(state, 1) == 5.0
    assert tail_count(state, 2) == 0.0


def test_tail_count_constants_on_steady_state(run_2d_const):
    # tail_count(R) ~ C sqrt(|J0|) R^{-1/2} for gamma = 0; fit the two constants
    _, src, res = run_2d_const
    J = moments(res.state, src).injection_norm
    R = np.arange(8, 25)
    c = np.array([tail_count(res.state, r) for r in R]) * np.sqrt(R) / math.sqrt(J)
    assert np.all(c > 0)
    assert c.max() / c.min() < 10


# --- snapshots -------------------------------------------------------------

def test_snapshot_header_and_precision():
    text = format_snapshot(ClusterDistribution(2, {(1, 2): 1 / 3}, time=2.5), 16)
    lines = text.splitlines()
    assert lines[0] == "# d=2 M=16.0 t=2.5"
    assert lines[1] == "1 2 0.33333333333333331"


@settings(max_examples=80)
@given(st.integers(1, 3).flatmap(lambda d: sparse_states(d)), st.floats(0, 1e6))
def test_snapshot_round_trip_bit_exact(state, t):
    state.time = t
    back, M = parse_snapshot(format_snapshot(state, 64.0))
    assert M == 64.0
    assert back.time == state.time
    assert back.entries == state.entries
    assert all(back.entries[k] == v for k, v in state.entries.items())


def test_snapshot_file_round_trip(tmp_path):
    state = ClusterDistribution(2, {(1, 0): math.pi, (3, 4): 1e-25}, time=7.0)
    path = tmp_path / "snap.txt"
    write_snapshot(path, state, 12)
    back, M = read_snapshot(path)
    assert M == 12 and back.entries == state.entries and back.time == 7.0


@pytest.mark.parametrize("text,line", [
    ("1 0 1.0\n", 1),
    ("# d=2 M=8 t=0\n1 0 1.0\n1 x 2.0\n", 3),
    ("# d=2 M=8 t=0\n1 0\n", 2),
    ("# d=2 M=8 t=0\n1 0 -1\n", 2),
    ("# d=2 M=8 t=0\n1 0 1\n1 0 2\n", 3),
    ("# d=2 M=8 t=0\n0 0 1\n", 2),
    ("# d=two M=8\n", 1),
])
def test_snapshot_errors_carry_line_numbers(text, line):
    with pytest.raises(LatticeError, match=f"line {line}"):
        parse_snapshot(text)


# --- enumeration -----------------------------------------------------------

@pytest.mark.parametrize("dim,nmax", [(1, 7), (2, 9), (3, 6)])
def test_enumerate_compositions_count(dim, nmax):
    sites = enumerate_compositions(dim, nmax)
    assert len(sites) == math.comb(nmax + dim, dim) - 1
    assert np.all(sites.sum(1) >= 1) and np.all(sites.sum(1) <= nmax)
    assert [tuple(s) for s in sites] == sorted(tuple(s) for s in sites)
