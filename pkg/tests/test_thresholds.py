"""Threshold fitting against loop oracles plus the persistence format."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxae.errors import MissingThreshold
from ctxae.thresholds import (
    DEFAULT_LAMBDA,
    GLOBAL_ID,
    ThresholdTable,
    fit,
    load_table,
    save_table,
)


def test_two_point_example():
    # {0, 2}: mu=1, population sigma=1, tau = 1 + 5*1 = 6
    table = fit({7: np.array([0.0, 2.0])})
    e = table.entries[7]
    assert e.mu == 1.0
    assert e.sigma == 1.0
    assert e.tau == 6.0
    # the pooled global entry sees the same two points here
    assert table.global_tau == 6.0


def test_fit_matches_loop_oracle(rng):
    losses = {c: rng.exponential(1.0, size=rng.integers(5, 40))
              for c in (0, 3, 9)}
    table = fit(losses, lam=5.0)
    pooled = []
    for cid, xs in losses.items():
        pooled.extend(xs)
        mean = sum(xs) / len(xs)
        var = sum((x - mean) ** 2 for x in xs) / len(xs)
        e = table.entries[cid]
        assert abs(e.mu - mean) < 1e-9
        assert abs(e.sigma - math.sqrt(var)) < 1e-9
        assert abs(e.tau - (mean + 5.0 * math.sqrt(var))) < 1e-9
    gmean = sum(pooled) / len(pooled)
    gvar = sum((x - gmean) ** 2 for x in pooled) / len(pooled)
    g = table.entries[GLOBAL_ID]
    assert abs(g.tau - (gmean + 5.0 * math.sqrt(gvar))) < 1e-9
    assert g.n == len(pooled)


def test_boundary_score_is_normal():
    table = fit({1: np.array([0.0, 2.0])})
    assert not table.classify(6.0, 1)        # exactly tau -> normal
    assert table.classify(6.0 + 1e-12, 1)
    assert not table.classify(5.999, 1)


def test_severity_is_normalized_margin():
    table = fit({1: np.array([0.0, 2.0])})   # tau = 6
    assert table.severity(9.0, 1) == pytest.approx(0.5)
    assert table.severity(6.0, 1) == 0.0
    assert table.severity(3.0, 1) == pytest.approx(-0.5)


def test_single_sample_context_is_flagged_not_fitted():
    table = fit({4: np.array([1.5]), 6: np.array([1.0, 3.0])})
    assert table.flagged == (4,)
    assert table.entries[4].tau is None
    with pytest.raises(MissingThreshold):
        table.tau(4)
    # the flagged context still contributes to the pooled global entry
    assert table.entries[GLOBAL_ID].n == 3


def test_unknown_context_raises():
    table = fit({1: np.array([1.0, 2.0])})
    with pytest.raises(MissingThreshold):
        table.tau(99)


def test_lambda_zero_threshold_is_the_mean():
    table = fit({2: np.array([1.0, 2.0, 3.0])}, lam=0.0)
    assert table.entries[2].tau == pytest.approx(2.0)


def test_save_load_round_trip(tmp_path, rng):
    losses = {0: rng.exponential(1.0, 20), 5: rng.exponential(2.0, 11),
              12: np.array([0.7])}
    table = fit(losses, lam=5.0, fit_split="train")
    path = tmp_path / "thresholds.csv"
    save_table(path, table)
    loaded = load_table(path)
    assert loaded.lam == table.lam
    assert loaded.fit_split == table.fit_split
    assert set(loaded.entries) == set(table.entries)
    for cid, e in table.entries.items():
        le = loaded.entries[cid]
        assert le.n == e.n
        if e.tau is None:
            assert le.tau is None
        else:
            assert le.tau == e.tau        # repr round-trips float64 exactly
            assert le.mu == e.mu
            assert le.sigma == e.sigma


def test_save_is_byte_stable(tmp_path, rng):
    table = fit({0: rng.exponential(1.0, 9), 3: rng.exponential(1.0, 7)})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_table(a, table)
    save_table(b, table)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.splitlines()[0] == "context_id,n,mu,sigma,tau"
    assert "global" in text
    assert "# lambda" in text


def test_default_lambda_is_five():
    assert DEFAULT_LAMBDA == 5.0


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0.0, 1e6), min_size=2, max_size=50),
       st.floats(0.0, 10.0))
def test_tau_at_least_mean_and_monotone_in_lambda(losses, lam):
    xs = np.array(losses)
    low = fit({0: xs}, lam=lam).entries[0]
    high = fit({0: xs}, lam=lam + 1.0).entries[0]
    assert low.tau >= low.mu - 1e-9           # sigma is non-negative
    assert high.tau >= low.tau                 # monotone in lambda
    # every training score is within lam sigma for lam large enough
    cover = fit({0: xs}, lam=(xs.shape[0]) ** 0.5 + 1e-6).entries[0]
    assert cover.tau >= xs.max() - 1e-6 * max(1.0, abs(xs.max()))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1e6), min_size=2, max_size=30))
def test_table_round_trip_property(tmp_path_factory, losses):
    table = fit({0: np.array(losses)})
    path = tmp_path_factory.mktemp("tt") / "t.csv"
    save_table(path, table)
    loaded = load_table(path)
    assert loaded.entries[0].tau == table.entries[0].tau
    assert loaded.entries[GLOBAL_ID].sigma == table.entries[GLOBAL_ID].sigma
