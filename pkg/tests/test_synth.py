"""Fleet generator: determinism, injection semantics, truth bookkeeping."""

import numpy as np
import pytest

from ctxae.ais import ContextRegistry, NavStatus
from ctxae.errors import (ConfigError, UnmappedContext,
                          UnregisteredFalsification)
from ctxae.geo import haversine
from ctxae.synth import (BehaviorModel, ContextPlan, PRESETS, SynthConfig,
                         generate, inject_collective, inject_contextual,
                         load_ports, load_truth, write_fleet)

REGISTRY = ContextRegistry()


def small_config(**kw):
    defaults = dict(
        seed=5,
        plans=(
            ContextPlan(context_id=0, behavior=PRESETS["transit"], vessels=4,
                        falsify_to=NavStatus.MOORED),
            ContextPlan(context_id=12, behavior=PRESETS["moored"], vessels=3),
        ),
        messages_per_vessel=250,
        contextual_rate=0.25,
        collective_rate=0.2,
    )
    defaults.update(kw)
    return SynthConfig(**defaults)


# --- configuration validation ----------------------------------------------------

def test_rejects_empty_plans():
    with pytest.raises(ConfigError):
        small_config(plans=())


def test_rejects_duplicate_context_ids():
    plan = ContextPlan(context_id=0, behavior=PRESETS["transit"], vessels=1)
    with pytest.raises(ConfigError):
        small_config(plans=(plan, plan))


@pytest.mark.parametrize("field,value", [
    ("contextual_rate", -0.1), ("contextual_rate", 1.5),
    ("collective_rate", 2.0), ("collective_span", 1),
    ("messages_per_vessel", 49),
])
def test_rejects_bad_scalars(field, value):
    with pytest.raises(ConfigError):
        small_config(**{field: value})


def test_rejects_nonpositive_vessel_count():
    with pytest.raises(ConfigError):
        ContextPlan(context_id=0, behavior=PRESETS["transit"], vessels=0)


def test_behavior_validation():
    with pytest.raises(ConfigError):
        BehaviorModel(kind="warp_drive", speed_lo=1, speed_hi=2)
    with pytest.raises(ConfigError):
        BehaviorModel(kind="transit", speed_lo=5.0, speed_hi=2.0)
    with pytest.raises(ConfigError):
        BehaviorModel(kind="transit", speed_lo=1.0, speed_hi=2.0,
                      event_len_lo=0)
    with pytest.raises(ConfigError):
        BehaviorModel(kind="transit", speed_lo=1.0, speed_hi=2.0,
                      event_len_lo=9, event_len_hi=4)


def test_unregistered_context_id():
    cfg = small_config(plans=(
        ContextPlan(context_id=999, behavior=PRESETS["transit"], vessels=1),))
    with pytest.raises(UnmappedContext):
        generate(cfg, REGISTRY)


# --- determinism ------------------------------------------------------------------

def test_same_seed_same_fleet():
    a = generate(small_config(), REGISTRY)
    b = generate(small_config(), REGISTRY)
    assert len(a.trajectories) == len(b.trajectories)
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert ta.mmsi == tb.mmsi
        for ma, mb in zip(ta.messages, tb.messages):
            assert (ma.lat, ma.lon, ma.sog, ma.cog) == (mb.lat, mb.lon,
                                                        mb.sog, mb.cog)
    assert a.truth == b.truth


def test_different_seeds_differ():
    a = generate(small_config(seed=5), REGISTRY)
    b = generate(small_config(seed=6), REGISTRY)
    pa = [(m.lat, m.lon) for m in a.trajectories[0].messages[:20]]
    pb = [(m.lat, m.lon) for m in b.trajectories[0].messages[:20]]
    assert pa != pb


def test_vessel_stream_isolated_from_plan_edits():
    # a vessel's motion depends on (seed, mmsi) only, so adding another
    # context after it leaves earlier trajectories untouched
    base = generate(small_config(collective_rate=0.0, contextual_rate=0.0),
                    REGISTRY)
    plans = (
        ContextPlan(context_id=0, behavior=PRESETS["transit"], vessels=4,
                    falsify_to=NavStatus.MOORED),
        ContextPlan(context_id=12, behavior=PRESETS["moored"], vessels=3),
        ContextPlan(context_id=21, behavior=PRESETS["sailing"], vessels=2),
    )
    grown = generate(small_config(plans=plans, collective_rate=0.0,
                                  contextual_rate=0.0), REGISTRY)
    for ta, tb in zip(base.trajectories[:4], grown.trajectories[:4]):
        assert ta.mmsi == tb.mmsi
        assert [(m.lat, m.lon) for m in ta.messages] == \
            [(m.lat, m.lon) for m in tb.messages]


# --- voyage geometry ---------------------------------------------------------------

def test_vessels_start_inside_port_radius():
    res = generate(small_config(), REGISTRY)
    for traj in res.trajectories:
        first = traj.messages[0]
        dists = [haversine(first.lat, first.lon, plat, plon)
                 for plat, plon in res.ports]
        assert min(dists) < 5_000.0


def test_stationary_vessels_settle_outside_port_radius():
    # repositioning occupies the first two windows; from there on a moored
    # vessel must not wander back inside the exclusion radius
    res = generate(small_config(), REGISTRY)
    falsified = {m for (m, _), t in res.truth.items() if t.kind == "contextual"}
    moored = [t for t in res.trajectories
              if t.messages[0].nav_status == NavStatus.MOORED
              and t.mmsi not in falsified]
    assert moored
    for traj in moored:
        mid = traj.messages[50]
        dists = [haversine(mid.lat, mid.lon, plat, plon)
                 for plat, plon in res.ports]
        assert min(dists) < 5_000.0
        for m in traj.messages[100:]:
            dists = [haversine(m.lat, m.lon, plat, plon)
                     for plat, plon in res.ports]
            assert min(dists) > 5_000.0


def test_heading_sometimes_unavailable():
    res = generate(small_config(), REGISTRY)
    headings = [m.heading for t in res.trajectories for m in t.messages]
    missing = sum(1 for h in headings if h is None)
    assert 0 < missing < len(headings) * 0.2


# --- contextual injection ----------------------------------------------------------

def test_contextual_swaps_status_everywhere():
    traj = generate(small_config(contextual_rate=0.0, collective_rate=0.0),
                    REGISTRY).trajectories[0]
    swapped = inject_contextual(traj, NavStatus.MOORED, REGISTRY)
    assert all(m.nav_status == NavStatus.MOORED for m in swapped.messages)
    # motion itself is untouched
    assert [(m.lat, m.lon, m.sog) for m in swapped.messages] == \
        [(m.lat, m.lon, m.sog) for m in traj.messages]


def test_contextual_rejects_identity_claim():
    traj = generate(small_config(contextual_rate=0.0, collective_rate=0.0),
                    REGISTRY).trajectories[0]
    with pytest.raises(UnregisteredFalsification):
        inject_contextual(traj, NavStatus.UNDER_WAY_USING_ENGINE, REGISTRY)


def test_contextual_rejects_unregistered_claim():
    # no vessel type has an "other" context in the registry
    traj = generate(small_config(contextual_rate=0.0, collective_rate=0.0),
                    REGISTRY).trajectories[0]
    with pytest.raises(UnregisteredFalsification):
        inject_contextual(traj, NavStatus.OTHER, REGISTRY)


def test_contextual_truth_tags_whole_vessel():
    cfg = small_config()
    res = generate(cfg, REGISTRY)
    ctx_tags = {(m, w): t for (m, w), t in res.truth.items()
                if t.kind == "contextual"}
    assert ctx_tags, "rate 0.25 over 4 falsifiable vessels injects at least one"
    n_windows = cfg.messages_per_vessel // cfg.window_len
    carriers = {m for m, _ in ctx_tags}
    for mmsi in carriers:
        windows = sorted(w for m, w in ctx_tags if m == mmsi)
        assert windows == list(range(n_windows))
        assert all(ctx_tags[(mmsi, w)].true_context == 0 for w in windows)


# --- collective injection ----------------------------------------------------------

def test_collective_displaces_span_only():
    traj = generate(small_config(contextual_rate=0.0, collective_rate=0.0),
                    REGISTRY).trajectories[0]
    start, span, mag = 40, 6, 3000.0
    shifted = inject_collective(traj, start, span, mag, heading_deg=90.0)
    orig, new = traj.messages, shifted.messages
    assert [(m.lat, m.lon) for m in new[:start + 1]] == \
        [(m.lat, m.lon) for m in orig[:start + 1]]
    for i in range(start + 1, start + span + 1):
        step = haversine(new[i - 1].lat, new[i - 1].lon, new[i].lat, new[i].lon)
        assert step == pytest.approx(mag, rel=1e-6)
    # afterwards the original displacement vectors replay from the new spot
    for i in range(start + span + 1, len(orig)):
        d_orig = haversine(orig[i - 1].lat, orig[i - 1].lon,
                           orig[i].lat, orig[i].lon)
        d_new = haversine(new[i - 1].lat, new[i - 1].lon,
                          new[i].lat, new[i].lon)
        assert d_new == pytest.approx(d_orig, rel=1e-4, abs=0.5)
    assert [m.sog for m in new] == [m.sog for m in orig]


def test_collective_rejects_bad_span():
    traj = generate(small_config(contextual_rate=0.0, collective_rate=0.0),
                    REGISTRY).trajectories[0]
    with pytest.raises(ValueError):
        inject_collective(traj, 248, 5, 1000.0, 0.0)


def test_collective_truth_tags_touched_windows():
    cfg = small_config(contextual_rate=0.0)
    res = generate(cfg, REGISTRY)
    coll = {(m, w) for (m, w), t in res.truth.items() if t.kind == "collective"}
    assert coll
    span_windows = cfg.collective_span // cfg.window_len + 2
    by_vessel: dict[int, list[int]] = {}
    for m, w in coll:
        by_vessel.setdefault(m, []).append(w)
    for windows in by_vessel.values():
        assert len(windows) <= span_windows
        ws = sorted(windows)
        assert ws == list(range(ws[0], ws[0] + len(ws)))


def test_anomaly_rate_rounds_up_to_one():
    cfg = small_config(contextual_rate=0.01, collective_rate=0.01)
    res = generate(cfg, REGISTRY)
    kinds = {t.kind for t in res.truth.values()}
    assert kinds == {"contextual", "collective"}


# --- file round trip ---------------------------------------------------------------

def test_fleet_files_round_trip(tmp_path):
    cfg = small_config()
    res = generate(cfg, REGISTRY)
    write_fleet(tmp_path, res)
    assert (tmp_path / "records.csv").exists()
    truth = load_truth(tmp_path / "truth.csv")
    assert truth == res.truth
    ports = load_ports(tmp_path / "ports.csv")
    assert [tuple(p) for p in ports] == [tuple(p) for p in res.ports]


def test_fleet_files_byte_identical(tmp_path):
    res = generate(small_config(), REGISTRY)
    write_fleet(tmp_path / "a", res)
    write_fleet(tmp_path / "b", generate(small_config(), REGISTRY))
    for name in ("records.csv", "truth.csv", "ports.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()
