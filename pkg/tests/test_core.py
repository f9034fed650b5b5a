import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import tiltedwalk as tw
from tiltedwalk.core import _block_layout
from tiltedwalk.errors import TiltOverflowError

# Multiples of 2^-10 with bounded magnitude: double arithmetic on these is
# exact, so bit-for-bit properties are actually testable.
dyadic = st.integers(-(2**20), 2**20).map(lambda k: k / 1024.0)


# ---------------------------------------------------------------------------
# partial sums
# ---------------------------------------------------------------------------

def test_partial_sums_examples():
    got = tw.partial_sums(tw.IncrementPath(1, [1.0, -1.0, 2.0]))
    assert got.sums.tolist() == [0.0, 1.0, 0.0, 2.0]
    assert tw.partial_sums(tw.IncrementPath(1, [])).sums.tolist() == [0.0]
    assert tw.partial_sums(tw.IncrementPath(1, [0.0, 0.0, 0.0])).sums.tolist() == [
        0.0,
        0.0,
        0.0,
        0.0,
    ]


@given(st.lists(dyadic, max_size=200))
def test_partial_sums_roundtrip_exact(values):
    path = tw.IncrementPath(1, values)
    sums = tw.partial_sums(path)
    assert len(sums) == len(path) + 1
    assert sums.sums[0] == 0.0
    # dyadic inputs keep every operation exact, so recovery is bit-for-bit
    assert sums.increments().tolist() == path.values.tolist()


@given(st.lists(dyadic, min_size=1, max_size=50), st.integers(-5, 5))
def test_path_end_index(values, start):
    path = tw.IncrementPath(start, values)
    assert path.end_index == start + len(values) - 1


# ---------------------------------------------------------------------------
# tilted weights
# ---------------------------------------------------------------------------

def test_tilted_weight_examples():
    flat = tw.partial_sums(tw.IncrementPath(1, [1.0, -1.0]))
    assert tw.tilted_weight(flat, 3.7) == 1.0
    assert tw.tilted_weight(tw.partial_sums(tw.IncrementPath(1, [2.0, 5.0])), 0.0) == 1.0
    halving = tw.partial_sums(tw.IncrementPath(1, [math.log(2.0)]))
    assert tw.tilted_weight(halving, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_tilted_weight_overflow_guard():
    sums = tw.partial_sums(tw.IncrementPath(1, [-800.0]))
    with pytest.raises(TiltOverflowError):
        tw.tilted_weight(sums, 1.0)
    # underflow on the other side is fine
    assert tw.tilted_weight(tw.partial_sums(tw.IncrementPath(1, [800.0])), 1.0) == 0.0


# ---------------------------------------------------------------------------
# seeded streams
# ---------------------------------------------------------------------------

def test_stream_rng_reproducible_and_distinct():
    a = tw.stream_rng(123, 5).standard_normal(16)
    b = tw.stream_rng(123, 5).standard_normal(16)
    c = tw.stream_rng(123, 6).standard_normal(16)
    assert a.tolist() == b.tolist()
    assert a.tolist() != c.tolist()


def test_stream_rng_rejects_bad_keys():
    with pytest.raises(ValueError):
        tw.stream_rng(-1, 0)
    with pytest.raises(ValueError):
        tw.stream_rng(0, 2**64)


def test_streams_statistically_independent(two_state):
    sampler = tw.MarkovSampler(two_state)
    n = 20000
    x = sampler.sample_block(99, 0, n, 1)[:, 0]
    y = sampler.sample_block(99, 1, n, 1)[:, 0]
    corr = np.corrcoef(x, y)[0, 1]
    assert abs(corr) < 4.0 / math.sqrt(n)


def test_sampler_stationarity_windows(two_state):
    # any length-k window has the same law regardless of position
    sampler = tw.MarkovSampler(two_state)
    paths = sampler.sample_block(17, 0, 40000, 12)
    head = paths[:, 0:4].mean(axis=1)
    tail = paths[:, 8:12].mean(axis=1)
    se = math.sqrt(head.var(ddof=1) / head.size + tail.var(ddof=1) / tail.size)
    assert abs(head.mean() - tail.mean()) < 4 * se


# ---------------------------------------------------------------------------
# Monte Carlo engine
# ---------------------------------------------------------------------------

def test_mc_estimate_invariants():
    est = tw.MCEstimate(1.0, 0.1, 100, 7)
    assert est.within(1.2, 4.0) and not est.within(2.0, 4.0)
    with pytest.raises(ValueError):
        tw.MCEstimate(0.0, -1.0, 10, 0)
    with pytest.raises(ValueError):
        tw.MCEstimate(0.0, 0.0, 0, 0)


def test_mc_theta_zero_exact(two_state):
    est = tw.mc_tilted_expectation(
        tw.MarkovSampler(two_state), 0.0, 10, n_samples=5000, seed=1
    )
    assert est.mean == 1.0
    assert est.stderr == 0.0


def test_mc_stderr_matches_numpy_oracle(gauss_iid):
    sampler = tw.GaussianSampler(gauss_iid)
    est = tw.mc_tilted_expectation(sampler, 0.5, 3, n_samples=4096, seed=3)
    paths = sampler.sample_block(3, 0, 4096, 3)
    w = np.exp(-0.5 * paths.sum(axis=1))
    assert est.mean == pytest.approx(w.mean(), rel=1e-12)
    assert est.stderr == pytest.approx(w.std(ddof=1) / math.sqrt(4096), rel=1e-9)


def test_mc_wald_identity_iid_normal(gauss_iid):
    # E exp(-theta X) = 1 at theta = 2 mu / sigma^2, so every n gives mean 1;
    # n is kept small so plain MC has sampleable variance
    est = tw.mc_tilted_expectation(
        tw.GaussianSampler(gauss_iid), 2.0, 2, n_samples=10**5, seed=42
    )
    assert est.within(1.0, 3.0)


def test_mc_matches_matrix_power_oracle(two_state, two_state_tilt):
    n = 8
    Q = tw.tilt_matrix(two_state, two_state_tilt.theta)
    exact = float(two_state.pi @ np.linalg.matrix_power(Q, n) @ np.ones(2))
    est = tw.mc_tilted_expectation(
        tw.MarkovSampler(two_state), two_state_tilt.theta, n, n_samples=10**5, seed=2
    )
    assert est.within(exact, 3.0)


def test_mc_exact_agreement_over_100_seeds(two_state, two_state_tilt):
    # >= 99% of seeds within 4 stderr of the matrix-power value
    n = 8
    Q = tw.tilt_matrix(two_state, two_state_tilt.theta)
    exact = float(two_state.pi @ np.linalg.matrix_power(Q, n) @ np.ones(2))
    sampler = tw.MarkovSampler(two_state)
    hits = 0
    for seed in range(100):
        est = tw.mc_tilted_expectation(
            sampler, two_state_tilt.theta, n, n_samples=10**4, seed=seed
        )
        hits += est.within(exact, 4.0)
    assert hits >= 99


def test_mc_reproducible_bit_for_bit(two_state):
    kw = dict(n_samples=30000, seed=909)
    a = tw.mc_tilted_expectation(tw.MarkovSampler(two_state), 0.3, 6, **kw)
    b = tw.mc_tilted_expectation(tw.MarkovSampler(two_state), 0.3, 6, **kw)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_mc_threads_do_not_change_result(gauss_ar1):
    sampler = tw.GaussianSampler(gauss_ar1)
    kw = dict(n_samples=20000, seed=5, block_size=1024)
    a = tw.mc_tilted_expectation(sampler, 0.4, 10, threads=1, **kw)
    b = tw.mc_tilted_expectation(sampler, 0.4, 10, threads=4, **kw)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_mc_event_cylinder(two_state, two_state_tilt):
    # E(e^{-theta S_n}; X_1 = s_a) has the exact value
    # pi_a e^{-theta s_a} [Q^{n-1} 1]_a
    theta = two_state_tilt.theta
    n = 6
    Q = tw.tilt_matrix(two_state, theta)
    exact = float(
        two_state.pi[0]
        * math.exp(-theta * two_state.states[0])
        * (np.linalg.matrix_power(Q, n - 1) @ np.ones(2))[0]
    )
    est = tw.mc_tilted_expectation(
        tw.MarkovSampler(two_state),
        theta,
        n,
        n_samples=10**5,
        seed=8,
        event=lambda p: p.values[0] == two_state.states[0],
    )
    assert est.within(exact, 4.0)


def test_mc_overflow_propagates(gauss_iid):
    with pytest.raises(TiltOverflowError):
        tw.mc_tilted_expectation(
            tw.GaussianSampler(gauss_iid), -800.0, 5, n_samples=100, seed=0
        )


def test_mc_requires_two_samples(gauss_iid):
    with pytest.raises(ValueError):
        tw.mc_tilted_expectation(tw.GaussianSampler(gauss_iid), 1.0, 5, n_samples=1)


def test_block_layout_partitions_in_order():
    blocks = _block_layout(10000, 4096)
    assert blocks == [(0, 4096), (1, 4096), (2, 1808)]
    assert _block_layout(10, 4096, stream_offset=7) == [(7, 10)]


def test_mc_propagates_sampler_failure():
    class Broken(tw.IncrementSampler):
        def sample_block(self, seed, stream_id, n_paths, n):
            raise RuntimeError("sampler exploded")

    with pytest.raises(RuntimeError, match="sampler exploded"):
        tw.mc_tilted_expectation(Broken(), 0.5, 4, n_samples=10, seed=0)
