"""Metric evaluation, weight validation, rolling windows and reliability scores."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iraas.errors import (
    EmptyAttributeSet,
    MissingAttribute,
    MissingLinkSample,
    NonFiniteInput,
    PresetMismatch,
    UnknownAttribute,
    WeightSumViolation,
    WindowTooShort,
)
from iraas.metric import (
    CostHistory,
    MetricSpec,
    RollingWindow,
    Transform,
    cost_reward,
    evaluate_metric,
    predict_reliability,
    reliability_of_costs,
    sharpe_reliability,
    validate_metric_spec,
    weight_graph,
    with_params,
)

from oracles import make_graph, two_pass_sharpe

SAMPLE = {"throughput": 100.0, "latency": 5.0, "load": 0.2, "reliability": 1.0, "jitter": 0.5}
EIGRP = MetricSpec(
    ("throughput", "load", "latency", "reliability"), (0.25, 0.25, 0.25, 0.25), kind="eigrp-classic"
)


class TestValidation:
    def test_valid_spec_passes(self):
        spec = MetricSpec(("latency", "load"), (0.7, 0.3))
        assert validate_metric_spec(spec) is spec

    @pytest.mark.parametrize("weights", [(0.6, 0.3), (0.7, 0.3 + 2e-6), (1.2, -0.2)])
    def test_weights_off_simplex_rejected(self, weights):
        with pytest.raises(WeightSumViolation):
            validate_metric_spec(MetricSpec(("latency", "load"), weights))

    def test_weights_within_tolerance_accepted(self):
        validate_metric_spec(MetricSpec(("latency", "load"), (0.7, 0.3 + 5e-7)))

    def test_structural_errors(self):
        with pytest.raises(EmptyAttributeSet):
            validate_metric_spec(MetricSpec((), ()))
        with pytest.raises(UnknownAttribute):
            validate_metric_spec(MetricSpec(("colour",), (1.0,)))
        with pytest.raises(EmptyAttributeSet):
            validate_metric_spec(MetricSpec(("latency", "load"), (1.0,)))

    def test_eigrp_needs_its_four_attributes(self):
        with pytest.raises(PresetMismatch):
            validate_metric_spec(MetricSpec(("latency",), (1.0,), kind="eigrp-classic"))

    def test_unknown_param_rejected(self):
        with pytest.raises(PresetMismatch):
            validate_metric_spec(MetricSpec(("latency",), (1.0,), params={"K9": 1}))

    def test_document_round_trip(self):
        spec = MetricSpec(("latency", "load"), (0.7, 0.3), ("identity", "scale(10)"), params={"window": 8})
        again = MetricSpec.from_document(spec.to_document())
        assert again == spec
        assert again.param("window") == 8


class TestTransforms:
    def test_parse_and_apply(self):
        assert Transform.parse("scale(10)")(0.3) == pytest.approx(3.0)
        assert Transform.parse("inverse")(4.0) == 0.25
        assert Transform.parse("identity")(7.0) == 7.0
        assert str(Transform.parse("scale(2.5)")) == "scale(2.5)"

    def test_unknown_transform_rejected(self):
        with pytest.raises(UnknownAttribute):
            Transform.parse("cube")


class TestEvaluate:
    def test_weighted_sum_matches_hand_calculation(self):
        spec = MetricSpec(("latency", "load"), (0.7, 0.3), ("identity", "scale(10)"))
        assert evaluate_metric(spec, SAMPLE) == pytest.approx(0.7 * 5.0 + 0.3 * 2.0)

    def test_eigrp_default_k_values(self):
        # S = 256e7 / (100 * 1000) = 25600, D = 256 * 5 * 100 = 128000
        assert evaluate_metric(EIGRP, SAMPLE) == pytest.approx(153600.0)

    def test_eigrp_with_reliability_term(self):
        spec = with_params(EIGRP, K5=1.0, K4=0.0)
        # rel' = 255, factor = 1 / 255
        assert evaluate_metric(spec, SAMPLE) == pytest.approx(153600.0 / 255.0)

    def test_eigrp_with_load_term(self):
        spec = with_params(EIGRP, K2=1.0)
        load_scaled = 255.0 * 0.2
        assert evaluate_metric(spec, SAMPLE) == pytest.approx(153600.0 + 25600.0 / (256.0 - load_scaled))

    def test_missing_and_non_finite_inputs(self):
        spec = MetricSpec(("latency",), (1.0,))
        with pytest.raises(MissingAttribute):
            evaluate_metric(spec, {"load": 0.1})
        with pytest.raises(NonFiniteInput):
            evaluate_metric(spec, {"latency": math.nan})

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
    def test_weighted_sum_is_convex_combination(self, lat, load, w):
        spec = MetricSpec(("latency", "load"), (w, 1.0 - w))
        cost = evaluate_metric(spec, {"latency": lat, "load": load})
        assert min(lat, load) - 1e-9 <= cost <= max(lat, load) + 1e-9


class TestRollingWindow:
    def test_capacity_evicts_oldest(self):
        w = RollingWindow(3)
        for i in range(5):
            w.push(i, float(i))
        assert w.values == [2.0, 3.0, 4.0]
        assert w.last_timestamp == 4

    def test_timestamps_must_increase(self):
        w = RollingWindow(3)
        w.push(1, 1.0)
        with pytest.raises(ValueError):
            w.push(1, 2.0)


class TestSharpe:
    def test_known_value(self):
        # mean 2, population std 1
        assert sharpe_reliability([1.0, 3.0]).score == pytest.approx(2.0)

    def test_zero_variance_sentinels(self):
        assert sharpe_reliability([2.0, 2.0, 2.0]).score == math.inf
        assert sharpe_reliability([-1.0, -1.0]).score == -math.inf
        assert sharpe_reliability([1.0, 1.0], risk_free=1.0).score == -math.inf

    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            sharpe_reliability([1.0])

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=64),
        st.floats(-10, 10),
    )
    def test_matches_two_pass_oracle(self, values, rf):
        got = sharpe_reliability(values, rf).score
        want = two_pass_sharpe(values, rf)
        if math.isinf(want) or math.isinf(got):
            # near-degenerate windows: both sides must agree on the sentinel or be huge
            assert got == want or min(abs(got), abs(want)) > 1e6
        else:
            assert got == pytest.approx(want, rel=1e-6, abs=1e-6)

    def test_rolling_window_input(self):
        w = RollingWindow.of([1.0, 3.0])
        assert sharpe_reliability(w).window_len == 2


class TestCostReliability:
    def test_reward_is_monotone(self):
        assert cost_reward(0.0) == 1.0
        assert cost_reward(math.inf) == 0.0
        assert cost_reward(1.0) > cost_reward(2.0)

    def test_stable_costs_are_infinitely_reliable(self):
        assert reliability_of_costs([5.0, 5.0, 5.0]).score == math.inf
        assert reliability_of_costs([4.0, 6.0, 5.0]).score < math.inf

    def test_predictor_smooths_towards_recent(self):
        r = predict_reliability([1.0, 1.0, 5.0], alpha=0.5)
        assert r.score == pytest.approx(0.5 * 5.0 + 0.5 * 1.0)

    def test_predictor_caps_sentinels(self):
        assert predict_reliability([math.inf, math.inf]).score == math.inf


class TestCostHistory:
    def test_path_series_uses_fixed_costs(self):
        h = CostHistory(4)
        h.record(1, {"a": 1.0, "b": 2.0})
        h.record(2, {"a": 2.0, "b": 2.0})
        assert h.path_series(["a", "b", "split:x"], {"split:x": 10.0}) == [13.0, 14.0]
        assert h.path_series(["missing"], {}) == [math.inf, math.inf]

    def test_timestamps_must_increase(self):
        h = CostHistory(2)
        h.record(1, {})
        with pytest.raises(ValueError):
            h.record(1, {})


class TestWeightGraph:
    def test_weights_links_and_marks_missing(self):
        g = make_graph(3, [(0, 1, 1), (1, 2, 1)])
        spec = MetricSpec(("latency",), (1.0,))
        weighted, report = weight_graph(g, spec, {"c/0-1": {"latency": 4.0}}, strict=False)
        assert weighted.cost("c/0-1") == 4.0
        assert weighted.cost("c/1-2") == math.inf
        assert report.missing == ("c/1-2",)
        with pytest.raises(MissingLinkSample):
            weight_graph(g, spec, {"c/0-1": {"latency": 4.0}}, strict=True)
