import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

import tiltedwalk as tw
from tiltedwalk.errors import ModelError, NoRootError

dyadic_pos = st.integers(1, 2**14).map(lambda k: k / 64.0)

MM1 = tw.QueueModel(tw.PoissonArrivals(1.0), tw.ExponentialService(2.0))
APPT = tw.QueueModel(
    tw.AppointmentArrivals(1.0, tw.UniformError(0.2)), tw.ExponentialService(2.0)
)

# frozen from a high-precision root solve of 2 exp(-t) = 2 - t on (0, 2)
APPT_ROOT = 1.5936242600400401


# ---------------------------------------------------------------------------
# lindley
# ---------------------------------------------------------------------------

def test_lindley_examples():
    assert tw.lindley([2.0, 2.0], [2.0, 2.0]).tolist() == [0.0, 0.0, 0.0]
    assert tw.lindley([1.0, 1.0], [3.0, 3.0]).tolist() == [0.0, 2.0, 4.0]
    # increments U - T = [2, -5, 2]
    assert tw.lindley([0.0, 5.0, 0.0], [2.0, 0.0, 2.0]).tolist() == [0.0, 2.0, 0.0, 2.0]


def test_lindley_length_mismatch():
    with pytest.raises(ValueError):
        tw.lindley([1.0], [1.0, 2.0])


@given(st.lists(st.tuples(dyadic_pos, dyadic_pos), min_size=1, max_size=120))
def test_lindley_nonnegative_and_matches_minimum_oracle(pairs):
    T = np.array([p[0] for p in pairs])
    U = np.array([p[1] for p in pairs])
    W = tw.lindley(T, U)
    assert (W >= 0).all()
    # running-minimum representation of the same recursion
    C = np.concatenate([[0.0], np.cumsum(U - T)])
    expected = C - np.minimum.accumulate(C)
    assert np.abs(W - expected).max() < 1e-9


@given(
    st.lists(st.tuples(dyadic_pos, dyadic_pos), min_size=1, max_size=60),
    st.integers(1, 1024),
)
def test_lindley_shift_invariance_exact(pairs, shift):
    # the recursion sees only U - T; dyadic inputs make the check bit-exact
    T = np.array([p[0] for p in pairs])
    U = np.array([p[1] for p in pairs])
    assert tw.lindley(T + shift, U + shift).tolist() == tw.lindley(T, U).tolist()


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def test_simulate_queue_busy_probability_mm1():
    sample = tw.simulate_queue(MM1, 10**6, burn_in=10**4, seed=21)
    assert abs((sample.waits > 0).mean() - 0.5) < 0.01  # P(W > 0) = lam/mu


def test_simulate_queue_punctual_light_traffic_never_waits():
    model = tw.QueueModel(
        tw.AppointmentArrivals(1.0, tw.NoError()), tw.DeterministicService(0.5)
    )
    sample = tw.simulate_queue(model, 5000, seed=3)
    assert (sample.waits == 0).all()


def test_simulate_queue_seed_reproducible():
    a = tw.simulate_queue(MM1, 20000, seed=77)
    b = tw.simulate_queue(MM1, 20000, seed=77)
    assert a.waits.tolist() == b.waits.tolist()
    assert a.n_customers == 20000


def test_simulate_queue_unstable_rejected():
    bad = tw.QueueModel(tw.PoissonArrivals(2.0), tw.ExponentialService(2.0))
    with pytest.raises(ModelError):
        tw.simulate_queue(bad, 100)


# ---------------------------------------------------------------------------
# tilt parameters
# ---------------------------------------------------------------------------

def test_mm1_theta_and_transform_identity():
    lam, mu = 1.0, 2.0
    theta = tw.mm1_theta(lam, mu)
    assert theta == 1.0
    # E exp(-theta X) for X = T - U is lam mu / ((lam+theta)(mu-theta)) = 1
    assert lam * mu / ((lam + theta) * (mu - theta)) == pytest.approx(1.0, abs=1e-15)


def test_mm1_theta_boundary():
    with pytest.raises(ModelError):
        tw.mm1_theta(2.0, 2.0)


def test_appointments_laplace_formula():
    svc = tw.ExponentialService(2.0)
    err = tw.UniformError(0.2)
    lam = 1.0
    assert tw.appointments_laplace_Sn(svc.phi, err.psi, lam, 0.0, 13) == 1.0
    # at the root the bracket is 1, so the value is psi(t) psi(-t) for any n
    t = tw.appointments_theta(svc.phi, lam, phi_sup=svc.phi_sup)
    v5 = tw.appointments_laplace_Sn(svc.phi, err.psi, lam, t, 5)
    v50 = tw.appointments_laplace_Sn(svc.phi, err.psi, lam, t, 50)
    assert v5 == pytest.approx(err.psi(t) * err.psi(-t), rel=1e-9)
    assert v5 == pytest.approx(v50, rel=1e-8)
    # punctual arrivals: pure geometric factor
    punctual = tw.NoError()
    got = tw.appointments_laplace_Sn(svc.phi, punctual.psi, lam, 0.7, 9)
    assert got == pytest.approx((svc.phi(-0.7) * math.exp(-0.7)) ** 9, rel=1e-12)


def test_appointments_theta_benchmark_root():
    svc = tw.ExponentialService(2.0)
    root = tw.appointments_theta(svc.phi, 1.0, tol=1e-12, phi_sup=svc.phi_sup)
    assert root == pytest.approx(APPT_ROOT, abs=1e-9)
    assert abs(svc.phi(-root) * math.exp(-root) - 1.0) < 1e-10
    assert root > tw.mm1_theta(1.0, 2.0)


def test_appointments_theta_matches_brentq_oracle():
    svc = tw.ExponentialService(2.0)
    g = lambda t: svc.phi(-t) * math.exp(-t) - 1.0
    oracle = brentq(g, 0.5, 1.99, xtol=1e-14)
    got = tw.appointments_theta(svc.phi, 1.0, tol=1e-12, phi_sup=svc.phi_sup)
    assert got == pytest.approx(oracle, abs=1e-9)


def test_appointments_theta_signature_excludes_errors():
    import inspect

    params = inspect.signature(tw.appointments_theta).parameters
    assert "psi" not in params and "error" not in params


def test_appointments_theta_no_root():
    # deterministic service shorter than the slot: the factor stays below 1
    svc = tw.DeterministicService(0.4)
    with pytest.raises(NoRootError):
        tw.appointments_theta(svc.phi, 1.0, phi_sup=svc.phi_sup)


def test_appointments_factor_at_zero_and_slope():
    svc = tw.ExponentialService(2.0)
    lam = 1.0
    g = lambda t: svc.phi(-t) * math.exp(-t / lam)
    assert g(0.0) == 1.0
    h = 1e-6
    slope = (g(h) - g(-h)) / (2 * h)
    assert slope == pytest.approx(svc.mean - 1.0 / lam, abs=1e-6)
    assert slope < 0


def test_poisson_theta_general_service_reduces_and_generalizes():
    assert tw.poisson_theta(tw.ExponentialService(2.0), 1.0) == 1.0
    svc = tw.GammaService(2.0, 4.0)  # mean 0.5
    theta = tw.poisson_theta(svc, 1.0)
    assert abs(1.0 * svc.phi(-theta) / (1.0 + theta) - 1.0) < 1e-9


def test_comparison_factor_benchmark():
    val = tw.comparison_factor(tw.ExponentialService(2.0), 1.0)
    assert val == pytest.approx(2.0 / math.e, abs=1e-12)
    assert val < 1.0


# ---------------------------------------------------------------------------
# tail decay estimation
# ---------------------------------------------------------------------------

def test_tail_estimate_on_exact_exponential_data():
    rng = tw.stream_rng(4, 0)
    data = rng.exponential(1.0 / 3.0, size=2 * 10**5)
    theta_hat, se = tw.tail_decay_estimate(data)
    assert 2.9 < theta_hat < 3.1
    assert se > 0


def test_tail_estimate_requires_tail_mass():
    with pytest.raises(ValueError):
        tw.tail_decay_estimate(np.zeros(10**5))
    with pytest.raises(ValueError):
        tw.tail_decay_estimate(np.ones(100))


def test_tail_estimate_quantile_validation():
    data = tw.stream_rng(1, 0).exponential(1.0, size=2 * 10**4)
    with pytest.raises(ValueError):
        tw.tail_decay_estimate(data, lower_q=0.99, upper_q=0.9)


def test_mm1_tail_estimate_brackets_true_rate():
    sample = tw.simulate_queue(MM1, 10**6, seed=13)
    theta_hat, se = tw.tail_decay_estimate(sample)
    assert 0.9 < theta_hat < 1.1


def test_appointments_thinner_tail_than_mm1():
    # decay-rate ordering with one-sided 95% confidence
    mm1_hat, mm1_se = tw.tail_decay_estimate(tw.simulate_queue(MM1, 10**6, seed=29))
    ap_hat, ap_se = tw.tail_decay_estimate(tw.simulate_queue(APPT, 10**6, seed=29))
    assert ap_hat - mm1_hat > 1.645 * math.hypot(mm1_se, ap_se)


def test_root_ignores_error_distribution_and_tails_agree():
    # same service and rate, different appointment errors: identical root,
    # and the two tail estimates agree within a joint 95% interval
    other = tw.QueueModel(
        tw.AppointmentArrivals(1.0, tw.UniformError(0.45)), tw.ExponentialService(2.0)
    )
    a_hat, a_se = tw.tail_decay_estimate(tw.simulate_queue(APPT, 10**6, seed=37))
    b_hat, b_se = tw.tail_decay_estimate(tw.simulate_queue(other, 10**6, seed=59))
    assert abs(a_hat - b_hat) <= 1.96 * math.hypot(a_se, b_se)


def test_tail_regression_points_shape():
    data = tw.stream_rng(2, 0).exponential(1.0, size=5 * 10**4)
    grid, logs = tw.queueing.tail_regression_points(data, n_points=50)
    assert grid.shape == logs.shape == (50,)
    assert (np.diff(grid) > 0).all()
    assert (logs < 0).all()


# ---------------------------------------------------------------------------
# service distributions
# ---------------------------------------------------------------------------

def test_spot_check_service_families():
    assert tw.queueing.spot_check_service(tw.GammaService(2.0, 4.0), seed=6) == []
    assert tw.queueing.spot_check_service(tw.DeterministicService(0.4), seed=6) == []
    assert tw.queueing.spot_check_service(tw.ExponentialService(3.0), seed=6) == []


def test_service_transform_domains():
    svc = tw.ExponentialService(2.0)
    with pytest.raises(ValueError):
        svc.phi(-2.5)
    assert tw.GammaService(1.0, 2.0).phi(-1.0) == pytest.approx(2.0, abs=1e-15)


def test_uniform_error_psi():
    err = tw.UniformError(0.2)
    assert err.psi(0.0) == 1.0
    t = 1.3
    assert err.psi(t) == pytest.approx(math.sinh(0.2 * t) / (0.2 * t), rel=1e-14)
    assert err.psi(t) == err.psi(-t)  # even


def test_appointment_error_width_bound():
    with pytest.raises(ModelError):
        tw.AppointmentArrivals(1.0, tw.UniformError(0.5))
    default = tw.AppointmentArrivals(2.0)
    assert isinstance(default.error, tw.UniformError)
    assert default.error.a == 0.125  # 0.25 / lam


def test_queue_model_dict_roundtrip():
    for model in (MM1, APPT):
        again = tw.QueueModel.from_dict(model.to_dict())
        assert again == model
    with pytest.raises(ModelError):
        tw.QueueModel.from_dict({"arrivals": {"type": "bus"}, "service": {}})
