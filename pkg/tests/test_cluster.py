import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesched.cluster import (
    DeviceState,
    FleetError,
    LinkTable,
    SizeRegression,
    UnprofiledDevice,
    device_failure_prob,
    estimate_exec_time,
    fleet_from_dict,
    partition_networks,
    predict_output_size,
    probe_speed,
    update_size_regression,
)

from helpers import profile, state, task


# --- interference predictor ------------------------------------------------


def test_idle_device_runs_at_base():
    p = profile("d", 2.0, 0.5, types=("job", "x", "y"))
    assert estimate_exec_time(state(p), task("t")) == 2.0


def test_two_distinct_types_add_two_slopes():
    p = profile("d", 2.0, 0.5, types=("job", "x", "y"))
    assert estimate_exec_time(state(p, {"x": 1, "y": 1}), task("t")) == 3.0


def test_multiplicity_does_not_matter():
    p = profile("d", 2.0, 0.5, types=("job", "x", "y"))
    assert estimate_exec_time(state(p, {"x": 2, "y": 1}), task("t")) == 3.0
    assert estimate_exec_time(state(p, {"x": 2, "y": 1, "z": 0}), task("t")) == 3.0


def test_unprofiled_type_raises():
    p = profile("d", types=("other",))
    with pytest.raises(UnprofiledDevice) as info:
        estimate_exec_time(state(p), task("t"))
    assert info.value.device_id == "d" and info.value.task_type == "job"


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(1, 5)), st.integers(2, 4))
def test_exec_time_depends_only_on_distinct_count(running, factor):
    p = profile("d", 1.5, 0.25)
    a = estimate_exec_time(state(p, running), task("t"))
    b = estimate_exec_time(state(p, {k: v * factor for k, v in running.items()}), task("t"))
    assert a == b == 1.5 + 0.25 * len(running)


def test_fresh_state_charges_cached_models():
    p = profile("d", mem=1000, cached=("m1", "m2"))
    s = DeviceState.fresh(p, {"m1": 300, "m3": 50})
    assert s.mem_free == 700


# --- probing and failures --------------------------------------------------


def test_probe_speed_examples():
    assert probe_speed(0.1, 1_000_000, 1.0) == 20_000_000
    assert probe_speed(0.1, 1_000_000, 2.0) == 10_000_000


def test_probe_speed_rejects_eta_below_one():
    with pytest.raises(ValueError, match="eta"):
        probe_speed(0.1, 100, 0.9)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(1e-4, 1.0), st.floats(1.0, 1e7), st.floats(1.0, 3.0),
    st.floats(1.01, 2.0),
)
def test_probe_speed_monotone(rtt, size, eta, k):
    s = probe_speed(rtt, size, eta)
    assert probe_speed(rtt * k, size, eta) < s
    assert probe_speed(rtt, size, eta * k) < s
    assert probe_speed(rtt, size * k, eta) > s


def test_failure_prob_examples():
    assert device_failure_prob(0.0, 123.0) == 0.0
    assert device_failure_prob(math.log(2), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert device_failure_prob(0.01, 10.0) == pytest.approx(0.09516258196404048, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 50), st.floats(1.01, 3))
def test_failure_prob_monotone_and_bounded(lam, window, k):
    p = device_failure_prob(lam, window)
    assert 0.0 <= p < 1.0 or (p == 1.0 and lam * window > 36)
    assert device_failure_prob(lam * k, window) >= p
    assert device_failure_prob(lam, window * k) >= p


# --- links -----------------------------------------------------------------


def test_link_table_basics():
    lt = LinkTable.from_rtts({("a", "b"): 0.1}, eta=1.0, packet_bytes=1_000_000)
    assert lt.speed_between("a", "b") == 20_000_000
    assert lt.speed_between("a", "a") == math.inf
    assert lt.transfer_time(10_000_000, "a", "b") == 0.5
    assert lt.transfer_time(10_000_000, "b", "b") == 0.0
    with pytest.raises(KeyError):
        lt.speed_between("b", "a")


def test_scaled_leaves_original_untouched():
    lt = LinkTable.from_rtts({("a", "b"): 0.1, ("b", "a"): 0.1}, eta=1.0, packet_bytes=1000)
    slow = lt.scaled({("a", "b"): 0.25})
    assert slow.speed_between("a", "b") == lt.speed_between("a", "b") * 0.25
    assert slow.speed_between("b", "a") == lt.speed_between("b", "a")
    assert lt.speed_between("a", "b") == 20_000


# --- size regression -------------------------------------------------------


def test_fallbacks_without_observations():
    reg = SizeRegression()
    assert predict_output_size(reg, "t", 1234, 500) == 500
    assert predict_output_size(reg, "t", 1234) == 1234


def test_two_point_fit_is_exact():
    reg = update_size_regression(SizeRegression(), "t", 100, 50)
    reg = update_size_regression(reg, "t", 200, 100)
    assert predict_output_size(reg, "t", 300) == pytest.approx(150.0, rel=1e-12)


def test_single_observation_and_repeats():
    reg = update_size_regression(SizeRegression(), "t", 100, 50)
    assert predict_output_size(reg, "t", 100) == 50
    again = update_size_regression(reg, "t", 100, 50)
    assert predict_output_size(again, "t", 100) == 50
    assert reg.count("t") == 1 and again.count("t") == 2


def test_negative_prediction_is_clamped():
    reg = update_size_regression(SizeRegression(), "t", 100, 10)
    reg = update_size_regression(reg, "t", 200, 5)
    assert predict_output_size(reg, "t", 10_000) == 0.0


def test_matches_closed_form_least_squares():
    rng = np.random.default_rng(3)
    xs = rng.uniform(0, 1e6, 10)
    ys = 0.3 * xs + 1000 + rng.normal(0, 5e3, 10)
    reg = SizeRegression()
    for x, y in zip(xs, ys):
        reg = update_size_regression(reg, "t", float(x), float(y))
    slope, intercept = np.polyfit(xs, ys, 1)
    got_slope, got_intercept = reg.coefficients("t")
    assert got_slope == pytest.approx(slope, rel=1e-9)
    assert got_intercept == pytest.approx(intercept, rel=1e-9)


def test_regression_is_per_type_and_functional():
    base = SizeRegression()
    reg = update_size_regression(base, "a", 10, 20)
    assert base.count("a") == 0
    assert reg.coefficients("b") is None


# --- partitioning ----------------------------------------------------------


def test_single_initiator_takes_everything():
    assert partition_networks(["i"], ["a", "b"], {}) == {"i": {"a", "b"}}


def test_closest_initiator_wins_and_ties_go_to_smaller_id():
    rtt = {("i1", "p"): 0.020, ("i2", "p"): 0.005, ("i1", "q"): 0.01, ("i2", "q"): 0.01}
    assert partition_networks(["i2", "i1"], ["p", "q"], rtt) == {"i1": {"q"}, "i2": {"p"}}


def test_overlapping_sets_rejected():
    with pytest.raises(ValueError, match="overlap"):
        partition_networks(["a"], ["a", "b"], {})


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from(["i0", "i1", "i2"]), min_size=1, unique=True),
    st.lists(st.sampled_from([f"p{k}" for k in range(8)]), unique=True),
    st.data(),
)
def test_partition_is_disjoint_and_covering(inits, parts, data):
    rtt = {(i, p): data.draw(st.sampled_from([0.001, 0.002, 0.005])) for i in inits for p in parts}
    out = partition_networks(inits, parts, rtt)
    seen = [p for group in out.values() for p in group]
    assert sorted(seen) == sorted(parts)
    for p in parts:
        owner = next(i for i, g in out.items() if p in g)
        assert (rtt[(owner, p)], owner) == min((rtt[(i, p)], i) for i in inits)


# --- fleet file ------------------------------------------------------------


def _fleet_doc(**extra):
    doc = {
        "devices": [
            {"device_id": "a", "tier": "edge_cloud", "mem_total": 10, "cost_rate": 0, "failure_rate": 0,
             "interference": {"t": [1, 0]}},
            {"device_id": "b", "tier": "cloud", "mem_total": 10, "cost_rate": 0, "failure_rate": 0},
        ],
        "links": [{"src": "a", "dst": "b", "rtt_seconds": 0.01}],
    }
    doc.update(extra)
    return doc


def test_links_are_symmetric_unless_reverse_given():
    f = fleet_from_dict(_fleet_doc())
    assert f.rtts[("b", "a")] == 0.01
    doc = _fleet_doc(links=[{"src": "a", "dst": "b", "rtt_seconds": 0.01},
                            {"src": "b", "dst": "a", "rtt_seconds": 0.03}])
    f = fleet_from_dict(doc)
    assert f.rtts[("a", "b")] == 0.01 and f.rtts[("b", "a")] == 0.03


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["devices"][0].pop("mem_total"), "mem_total"),
        (lambda d: d["devices"][1].update(device_id="a"), "duplicate"),
        (lambda d: d["links"].append({"src": "a", "dst": "zz", "rtt_seconds": 1}), "unknown device"),
        (lambda d: d.update(eta=0.5), "eta"),
        (lambda d: d["devices"][0].update(cost_rate=-1), "cost_rate"),
    ],
)
def test_fleet_schema_errors(mutate, message):
    doc = _fleet_doc()
    mutate(doc)
    with pytest.raises(FleetError, match=message):
        fleet_from_dict(doc)
