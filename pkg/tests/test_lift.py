"""Feature lifts and selector algebra."""

import numpy as np
import pytest

from conftest import random_tt_model
from tnshap import FeatureMap, LiftSpec, off_state, selector_apply, signed_toggle
from tnshap.attribute import ProbePlan, chebyshev_nodes


class TestLifts:
    def test_binary(self):
        np.testing.assert_allclose(FeatureMap("binary").apply(3.5), [3.5, 1.0])

    def test_polynomial_degree_two(self):
        np.testing.assert_allclose(FeatureMap("poly", k=2).apply(2.0), [2.0, 4.0, 1.0])

    def test_fourier_first_harmonic(self):
        got = FeatureMap("fourier", k=1, omega=np.pi).apply(0.5)
        np.testing.assert_allclose(got, [1.0, 0.0, 1.0], atol=1e-15)

    def test_dims(self):
        assert FeatureMap("binary").dim == 2
        assert FeatureMap("poly", k=3).dim == 4
        assert FeatureMap("fourier", k=2).dim == 5

    def test_off_state_consistency_binary_poly(self):
        """lift(0) equals the zeroed-channel state for binary and poly maps."""
        for fmap in (FeatureMap("binary"), FeatureMap("poly", k=3)):
            for x in (0.0, 0.7, -2.0):
                np.testing.assert_allclose(
                    fmap.apply(0.0), selector_apply(0.0, fmap.apply(x))
                )

    def test_fourier_off_state_is_synthetic(self):
        """phi(0) != 0 for cosine channels: the off state is not lift(0)."""
        fmap = FeatureMap("fourier", k=1, omega=np.pi)
        assert not np.allclose(fmap.apply(0.0), off_state(fmap.dim))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            FeatureMap("spline")

    def test_spec_roundtrip(self):
        spec = LiftSpec(
            [FeatureMap("binary"), FeatureMap("poly", k=2), FeatureMap("fourier", k=1, omega=2.0)]
        )
        again = LiftSpec.from_json_list(spec.to_json_list())
        assert again.dims == spec.dims == (2, 3, 3)
        np.testing.assert_allclose(again.lift(2, 0.3), spec.lift(2, 0.3))


class TestSelectors:
    def test_scaling(self):
        np.testing.assert_allclose(selector_apply(0.5, np.array([2.0, 1.0])), [1.0, 1.0])

    def test_identity(self, rng):
        v = rng.standard_normal(4)
        v[-1] = 1.0
        np.testing.assert_allclose(selector_apply(1.0, v), v)

    def test_off(self):
        np.testing.assert_allclose(selector_apply(0.0, np.array([7.0, -2.0, 1.0])), [0.0, 0.0, 1.0])

    def test_semigroup_on_data_channels(self, rng):
        v = rng.standard_normal(5)
        np.testing.assert_allclose(
            selector_apply(0.3, selector_apply(0.7, v)),
            selector_apply(0.21, v),
            rtol=1e-12,
        )

    def test_signed_toggle(self):
        np.testing.assert_allclose(signed_toggle(np.array([3.5, 1.0])), [3.5, 0.0])
        np.testing.assert_allclose(signed_toggle(np.array([1.0, 2.0, 1.0])), [1.0, 2.0, 0.0])

    def test_signed_toggle_identity_on_models(self, rng):
        """g(toggled) == g(on) - g(off) leg by leg, by multilinearity."""
        model, lifts = random_tt_model(rng, 5, bond=3)
        x = rng.uniform(-1, 1, 5)
        lifted = lifts.lift_instance(x)
        for i in range(5):
            on = list(lifted)
            off = list(lifted)
            tog = list(lifted)
            off[i] = off_state(2)
            tog[i] = signed_toggle(lifted[i])
            lhs = model.forward(tog)
            rhs = model.forward(on) - model.forward(off)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


class TestSelectorPolynomial:
    def test_subset_scaling_is_low_degree_polynomial(self, rng):
        """t -> forward with selectors on a subset S is a polynomial of
        degree at most |S|: interpolating at |S|+1 nodes reproduces values
        at fresh points to 1e-9."""
        model, lifts = random_tt_model(rng, 6, bond=3)
        x = rng.uniform(-1, 1, 6)
        lifted = lifts.lift_instance(x)
        subset = (1, 3, 4)
        deg = len(subset)

        def value(t):
            legs = [
                selector_apply(t, v) if (i + 1) in subset else v
                for i, v in enumerate(lifted)
            ]
            return model.forward(legs)

        plan = ProbePlan(deg + 1)
        coeffs, _ = plan.solve(np.array([value(t) for t in plan.nodes]))
        for t in np.linspace(0.05, 0.95, 7):
            predicted = float(np.polyval(coeffs[::-1], t))
            assert abs(predicted - value(t)) < 1e-9

    def test_all_nodes_in_unit_interval(self):
        for m in (1, 2, 5, 12):
            nodes = chebyshev_nodes(m)
            assert np.all(nodes > 0) and np.all(nodes < 1)
