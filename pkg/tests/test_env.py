import pickle

import pytest

from erwlab.env import (
    CookieEnvironment,
    classify,
    comparison_horizon,
    cookie_prob,
    delta,
    pbar,
    same_law,
    theta,
)
from erwlab.exceptions import InvalidEnvironmentError
from erwlab.models import Classification, EnvironmentForm, EnvironmentSpec


class TestCookieEnvironment:
    def test_finite_tail_is_fair(self, three_cookies):
        assert cookie_prob(three_cookies, 1) == 0.9
        assert cookie_prob(three_cookies, 3) == 0.9
        assert cookie_prob(three_cookies, 4) == 0.5
        assert cookie_prob(three_cookies, 1000) == 0.5

    def test_periodic_wraps(self):
        env = CookieEnvironment.periodic([0.6, 0.4])
        assert [env.cookie(k) for k in range(1, 6)] == [0.6, 0.4, 0.6, 0.4, 0.6]

    def test_vector_lookup_matches_scalar(self, three_cookies):
        periodic = CookieEnvironment.periodic([0.8, 0.4, 0.3])
        for env in (three_cookies, periodic):
            values = env.cookies(2, 7)
            assert list(values) == [env.cookie(k) for k in range(2, 9)]

    def test_index_starts_at_one(self, three_cookies):
        with pytest.raises(ValueError):
            three_cookies.cookie(0)

    @pytest.mark.parametrize("probs", [[], [1.0], [0.0, 0.5], [0.5, 1.2]])
    def test_rejects_non_elliptic(self, probs):
        with pytest.raises(InvalidEnvironmentError):
            CookieEnvironment.finite(probs)

    def test_spec_round_trip_and_pickle(self):
        env = CookieEnvironment.periodic([0.8, 0.4])
        assert CookieEnvironment.from_spec(env.to_spec()) == env
        assert pickle.loads(pickle.dumps(env)) == env
        assert hash(pickle.loads(pickle.dumps(env))) == hash(env)

    def test_immutable(self, three_cookies):
        with pytest.raises(AttributeError):
            three_cookies._probs = (0.1,)

    def test_swapped_finite_pads_with_fair_cookies(self):
        env = CookieEnvironment.finite([0.7, 0.9, 0.9])
        assert env.swapped(1, 2).probs == (0.9, 0.7, 0.9)
        assert CookieEnvironment.finite([0.4]).swapped(1, 3).probs == (0.5, 0.5, 0.4)

    def test_periodic_swap_stays_in_period(self):
        env = CookieEnvironment.periodic([0.4, 0.8])
        assert env.swapped(1, 2) == CookieEnvironment.periodic([0.8, 0.4])
        with pytest.raises(InvalidEnvironmentError):
            env.swapped(1, 3)

    def test_comparison_horizon_and_same_law(self):
        finite = CookieEnvironment.finite([0.6, 0.4, 0.9])
        periodic = CookieEnvironment.periodic([0.5, 0.5])
        assert comparison_horizon(finite, periodic) == 5
        assert same_law(CookieEnvironment.finite([0.5, 0.5]), CookieEnvironment.periodic([0.5]))
        assert not same_law(finite, periodic)


class TestDiagnostics:
    def test_delta_of_three_strong_cookies(self, three_cookies):
        assert delta(three_cookies) == pytest.approx(2.4)
        diagnostics = classify(three_cookies)
        assert diagnostics.classification == Classification.TRANSIENT_POSITIVE_SPEED
        assert not diagnostics.boundary
        assert diagnostics.label == "TransientPositiveSpeed"

    def test_transient_zero_speed(self):
        diagnostics = classify(CookieEnvironment.finite([0.9, 0.9]))
        assert diagnostics.delta == pytest.approx(1.6)
        assert diagnostics.classification == Classification.TRANSIENT_ZERO_SPEED

    def test_delta_two_is_a_boundary(self, boundary_cookies):
        diagnostics = classify(boundary_cookies)
        assert diagnostics.delta == pytest.approx(2.0)
        assert diagnostics.classification == Classification.TRANSIENT_ZERO_SPEED
        assert diagnostics.boundary
        assert diagnostics.label == "TransientZeroSpeed-boundary"

    def test_fair_cookies_are_recurrent_boundary(self):
        diagnostics = classify(CookieEnvironment.finite([0.5, 0.5, 0.5]))
        assert diagnostics.delta == 0.0
        assert diagnostics.label == "RecurrentOrLeft-boundary"

    def test_left_drift(self):
        diagnostics = classify(CookieEnvironment.finite([0.1, 0.2]))
        assert diagnostics.classification == Classification.RECURRENT_OR_LEFT
        assert not diagnostics.boundary

    def test_theta_values(self):
        assert theta(CookieEnvironment.periodic([0.6, 0.4])) == pytest.approx(1 / 24, abs=1e-12)
        assert theta(CookieEnvironment.periodic([0.4, 0.6])) == pytest.approx(-0.0625, abs=1e-12)

    def test_theta_needs_periodic(self, three_cookies):
        with pytest.raises(InvalidEnvironmentError):
            theta(three_cookies)

    def test_periodic_balanced_cookies(self):
        diagnostics = classify(CookieEnvironment.periodic([0.6, 0.4]))
        assert diagnostics.pbar == pytest.approx(0.5)
        assert diagnostics.theta == pytest.approx(1 / 24)
        assert diagnostics.delta is None
        assert diagnostics.delta_divergence == "oscillating"
        assert diagnostics.classification == Classification.RECURRENT_OR_LEFT
        assert diagnostics.caveat is not None

    def test_periodic_positive_drift(self):
        env = CookieEnvironment.periodic([0.8, 0.4])
        assert pbar(env) == pytest.approx(0.6)
        diagnostics = classify(env)
        assert diagnostics.classification == Classification.TRANSIENT_POSITIVE_SPEED
        assert diagnostics.delta_divergence == "+inf"
        with pytest.raises(InvalidEnvironmentError):
            delta(env)

    def test_periodic_theta_above_one(self):
        diagnostics = classify(CookieEnvironment.periodic([0.99, 0.99, 0.01, 0.01]))
        assert diagnostics.pbar == pytest.approx(0.5)
        assert diagnostics.theta > 1
        assert diagnostics.classification == Classification.TRANSIENT_RIGHT_UNKNOWN_SPEED

    def test_spec_validation(self):
        spec = EnvironmentSpec(probs=[0.9, 0.9])
        assert spec.form == EnvironmentForm.FINITE
        with pytest.raises(InvalidEnvironmentError):
            EnvironmentSpec(probs=[0.9, 1.0])
