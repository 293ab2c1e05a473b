"""Synthetic AIS fleet generator with ground-truth anomaly injection.

Behaviors are small per-step motion models (transit, zigzag fishing, anchor
drift, moored, loitering, sailing). Every vessel draws from its own RNG
stream seeded by (run seed, mmsi), so fleets are reproducible regardless of
generation order. Two anomaly types can be injected with exact truth tags:

* contextual: a vessel broadcasts a false navigational status, so its windows
  land in the wrong context while the motion stays true to the real one.
* collective: a short run of consecutive positions is displaced by a fixed
  large step, inconsistent with the reported speeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ais import (AisMessage, ContextRegistry, NavStatus, Trajectory,
                  serialize_messages)
from .dataset import Truth
from .errors import ConfigError, UnmappedContext, UnregisteredFalsification
from .geo import bearing, destination, haversine

KNOT_MPS = 0.514444
START_TS = 1_600_000_000


@dataclass(frozen=True)
class BehaviorModel:
    """Per-step motion model parameters for one vessel archetype."""

    kind: str
    speed_lo: float
    speed_hi: float
    turn_sigma_deg: float = 2.0
    interval_s: float = 30.0
    interval_jitter_s: float = 5.0
    pos_noise_m: float = 15.0
    heading_unavailable_rate: float = 0.05
    event_rate: float = 0.004
    event_turn_factor: float = 4.0
    event_speed_factor: float = 1.0
    event_len_lo: int = 8
    event_len_hi: int = 16
    zigzag_period: int = 10
    zigzag_amplitude_deg: float = 40.0
    anchor_radius_m: float = 300.0

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise ConfigError(f"unknown behavior kind {self.kind!r}")
        if not 0.0 <= self.speed_lo <= self.speed_hi <= 30.0:
            raise ConfigError(
                f"speed range must satisfy 0 <= lo <= hi <= 30 kn, "
                f"got [{self.speed_lo}, {self.speed_hi}]")
        if self.interval_s <= self.interval_jitter_s:
            raise ConfigError("interval jitter must be smaller than interval")
        if not 0 < self.event_len_lo <= self.event_len_hi:
            raise ConfigError("event length range must satisfy 0 < lo <= hi")


PRESET_KINDS = ("transit", "fishing_zigzag", "loiter", "anchor_drift",
                "moored", "sailing")

PRESETS: dict[str, BehaviorModel] = {
    "transit": BehaviorModel(
        kind="transit", speed_lo=8.0, speed_hi=12.0, turn_sigma_deg=2.0,
        event_rate=0.0),
    "fishing_zigzag": BehaviorModel(
        kind="fishing_zigzag", speed_lo=1.0, speed_hi=4.0, turn_sigma_deg=3.0,
        zigzag_period=10, zigzag_amplitude_deg=40.0, event_rate=0.003,
        event_turn_factor=2.5),
    "loiter": BehaviorModel(
        kind="loiter", speed_lo=0.5, speed_hi=2.0, turn_sigma_deg=30.0),
    "anchor_drift": BehaviorModel(
        kind="anchor_drift", speed_lo=0.0, speed_hi=0.5, turn_sigma_deg=15.0,
        pos_noise_m=10.0, event_rate=0.0006, event_speed_factor=20.0,
        event_turn_factor=1.0, event_len_lo=180, event_len_hi=360),
    "moored": BehaviorModel(
        kind="moored", speed_lo=0.0, speed_hi=0.1, turn_sigma_deg=3.0,
        pos_noise_m=3.0, event_rate=0.0008, event_turn_factor=3.0,
        event_speed_factor=3.0, event_len_lo=180, event_len_hi=360),
    "sailing": BehaviorModel(
        kind="sailing", speed_lo=2.0, speed_hi=5.0, turn_sigma_deg=3.0,
        pos_noise_m=6.0, event_rate=0.0006, event_speed_factor=2.0,
        event_turn_factor=1.0, event_len_lo=180, event_len_hi=360),
}


@dataclass(frozen=True)
class ContextPlan:
    """How many vessels to generate for one context and how they move."""

    context_id: int
    behavior: BehaviorModel
    vessels: int
    falsify_to: NavStatus | None = None   # claimed status for contextual anomalies

    def __post_init__(self):
        if self.vessels <= 0:
            raise ConfigError("each context plan needs at least one vessel")


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    plans: tuple[ContextPlan, ...]
    messages_per_vessel: int = 4000
    window_len: int = 50
    contextual_rate: float = 0.0
    collective_rate: float = 0.0
    collective_span: int = 12
    collective_magnitude_m: float = 3000.0
    ports: tuple[tuple[float, float], ...] = ((55.0, 10.0),)
    base_mmsi: int = 200_000_000

    def __post_init__(self):
        if not self.plans:
            raise ConfigError("synthetic run needs at least one context plan")
        if not 0.0 <= self.contextual_rate <= 1.0:
            raise ConfigError("contextual_rate must be in [0, 1]")
        if not 0.0 <= self.collective_rate <= 1.0:
            raise ConfigError("collective_rate must be in [0, 1]")
        if self.collective_span < 2:
            raise ConfigError("collective_span must be >= 2")
        if self.messages_per_vessel < self.window_len:
            raise ConfigError("vessels must emit at least one window of messages")
        ids = [p.context_id for p in self.plans]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate context ids in synthetic plan")


@dataclass
class SynthResult:
    trajectories: list[Trajectory]
    truth: dict[tuple[int, int], Truth]   # (mmsi, window index) -> tag
    ports: tuple[tuple[float, float], ...]

    @property
    def truth_rows(self) -> list[tuple[int, int, str, str]]:
        rows = []
        for (mmsi, widx), tag in sorted(self.truth.items()):
            rows.append((mmsi, widx, tag.kind,
                         "" if tag.true_context is None else str(tag.true_context)))
        return rows


def _wrap_deg(angle: float) -> float:
    return angle % 360.0


def _simulate_vessel(mmsi: int, context_id: int, behavior: BehaviorModel,
                     n_msgs: int, seed: int, registry: ContextRegistry,
                     ports: tuple[tuple[float, float], ...]) -> Trajectory:
    label = registry.by_id(context_id)
    rng = np.random.default_rng([seed, mmsi])

    ts = START_TS + int(rng.integers(0, 86_400))
    base_speed = float(rng.uniform(behavior.speed_lo, behavior.speed_hi))
    # reported angles live on a 0/360 seam; any behavior whose course dwells
    # near it produces wrap jumps in the cog/heading/bearing channels that no
    # decoder can reconstruct, so every course band below keeps a margin.
    base_course = float(rng.uniform(75.0, 285.0))
    course = base_course

    # every voyage opens near a port and heads out along its base course.
    # The first half-window of a record stream has no predecessor for the
    # delta features and the motion model is still settling, so those steps
    # must stay inside the port exclusion radius where no kept window can
    # see them. Slow vessels get a repositioning leg out to their berth or
    # anchorage; it ends, brake included, inside the excluded span.
    port = ports[int(rng.integers(0, len(ports)))]
    stationary = behavior.kind in ("anchor_drift", "moored")
    start_dist = float(rng.uniform(300.0, 900.0)) if stationary \
        else float(rng.uniform(3500.0, 4700.0))
    lat, lon = destination(port[0], port[1], base_course, start_dist)
    prologue_steps = 100 if stationary else 0

    anchor = (lat, lon)
    current_bearing = float(rng.uniform(0.0, 360.0))

    # voyage legs for under-way vessels: course, speed and sea-state wiggle
    # are redrawn per leg so a single trajectory samples the whole operating
    # envelope instead of one point of it. Within a window the course is then
    # near-constant, which is the regularity a decoder can hold on to.
    leg_course = base_course
    leg_speed = base_speed
    leg_left = int(rng.integers(300, 600))
    turn_target: float | None = None
    turn_rate = 0.0
    wiggle = 0.0
    wig_mult = float(rng.uniform(0.5, 1.75))

    # zigzag geometry is redrawn per trawl pass (a few windows long) so the
    # spread lives between windows rather than averaging out inside one, and
    # no vessel owns a private operating point
    half_period = max(3, int(round(rng.normal(behavior.zigzag_period, 1.0))))
    zz_phase = int(rng.integers(0, 2 * half_period))
    pass_left = 0
    amp = behavior.zigzag_amplitude_deg

    # receiver quality drifts in spells of a few windows. Reconstruction can
    # never predict measurement noise, so the per-window loss floor tracks
    # the spell level; that spread is what keeps loss thresholds honest.
    quality_left = 0
    quality = 1.0

    event_left = 0
    msgs: list[AisMessage] = []

    for i in range(n_msgs):
        if quality_left == 0:
            quality_left = int(rng.integers(150, 400))
            quality = float(rng.uniform(0.8, 1.8))
        quality_left -= 1

        if event_left == 0 and rng.random() < behavior.event_rate:
            event_left = int(rng.integers(behavior.event_len_lo,
                              behavior.event_len_hi + 1))
        in_event = event_left > 0
        if event_left:
            event_left -= 1
        turn_factor = behavior.event_turn_factor if in_event else 1.0
        speed_factor = behavior.event_speed_factor if in_event else 1.0

        kind = behavior.kind
        if prologue_steps and i == prologue_steps:
            anchor = (lat, lon)
        if i < prologue_steps:
            course = base_course + float(rng.normal(0.0, 1.5))
            if i < prologue_steps - 5:
                speed = 4.5 + float(rng.normal(0.0, 0.1))
            else:
                speed = 0.9 * float(prologue_steps - 1 - i)
        elif kind in ("transit", "sailing"):
            if turn_target is None:
                leg_left -= 1
                if leg_left <= 0:
                    turn_target = float(rng.uniform(50.0, 310.0))
                    turn_rate = float(rng.uniform(1.0, 1.8))
                    leg_speed = float(rng.uniform(behavior.speed_lo,
                                                  behavior.speed_hi))
                    leg_left = int(rng.integers(300, 600))
                    wig_mult = float(rng.uniform(0.5, 1.75))
            else:
                step = min(turn_rate, abs(turn_target - leg_course))
                leg_course += step if turn_target > leg_course else -step
                if leg_course == turn_target:
                    turn_target = None
            wiggle = 0.9 * wiggle + float(
                rng.normal(0.0, behavior.turn_sigma_deg * wig_mult
                           * turn_factor))
            course = leg_course + wiggle
            speed = leg_speed + float(rng.normal(0.0, 0.2))
        elif kind == "fishing_zigzag":
            pass_left -= 1
            if pass_left <= 0:
                pass_left = int(rng.integers(100, 221))
                amp = float(np.clip(
                    rng.normal(behavior.zigzag_amplitude_deg, 7.0),
                    22.0, 58.0))
                base_speed = float(rng.uniform(behavior.speed_lo,
                                               behavior.speed_hi))
                half_period = int(np.clip(
                    round(rng.normal(behavior.zigzag_period, 1.5)), 7, 14))
            cyc = (i + zz_phase) // half_period
            sign = 1.0 if cyc % 2 == 0 else -1.0
            base_course = float(np.clip(
                base_course + rng.normal(0.0, 0.5), 75.0, 285.0))
            course = base_course + sign * amp + float(
                rng.normal(0.0, behavior.turn_sigma_deg))
            speed = base_speed + float(rng.normal(0.0, 0.3))
        elif kind == "loiter":
            course += float(rng.normal(0.0, behavior.turn_sigma_deg * turn_factor))
            base_speed = min(max(base_speed + float(rng.normal(0.0, 0.05)),
                                 behavior.speed_lo), behavior.speed_hi)
            speed = base_speed + float(rng.normal(0.0, 0.1))
        elif kind == "anchor_drift":
            current_bearing += float(rng.normal(0.0, 4.0))
            course = current_bearing + float(
                rng.normal(0.0, behavior.turn_sigma_deg))
            if haversine(lat, lon, *anchor) > behavior.anchor_radius_m:
                course = bearing(lat, lon, *anchor) + float(rng.normal(0.0, 10.0))
            speed = abs(float(rng.normal(0.0, 0.15)))
        else:  # moored
            course = base_course + float(
                rng.normal(0.0, behavior.turn_sigma_deg * turn_factor))
            speed = min(abs(float(rng.normal(0.0, 0.03))), 0.1) * speed_factor

        course = _wrap_deg(course)
        speed = min(max(speed, 0.0), 30.0)

        if i > 0:
            dt = max(1, int(round(behavior.interval_s + float(
                rng.uniform(-behavior.interval_jitter_s,
                            behavior.interval_jitter_s)))))
            ts += dt
            lat, lon = destination(lat, lon, course, speed * KNOT_MPS * dt)

        # measurement noise: mostly tight, occasionally 3x (heavy tail). For
        # anchored vessels an event is a burst of degraded position fixes,
        # which moves the reported track without moving the vessel.
        noise_mult = 3.0 if rng.random() < 0.1 else 1.0
        noise_sigma = behavior.pos_noise_m * noise_mult * quality
        if kind == "anchor_drift" and in_event:
            # degraded-fix bursts have a characteristic level of their own;
            # they do not ride the receiver-quality spell
            noise_sigma = behavior.pos_noise_m * behavior.event_speed_factor
        noise_r = abs(float(rng.normal(0.0, noise_sigma)))
        rep_lat, rep_lon = destination(lat, lon, float(rng.uniform(0.0, 360.0)),
                                       noise_r)

        sog = round(min(max(speed + float(rng.normal(0.0, 0.1 * quality)),
                            0.0), 40.0), 1)
        cog = _wrap_deg(round(_wrap_deg(
            course + float(rng.normal(0.0, 1.0 * quality))), 1))
        if rng.random() < behavior.heading_unavailable_rate:
            heading = None
        else:
            heading = float(int(_wrap_deg(
                course + float(rng.normal(0.0, 2.0 * quality)))))

        msgs.append(AisMessage(
            mmsi=mmsi, timestamp=ts, lat=rep_lat, lon=rep_lon, sog=sog,
            cog=cog, heading=heading, nav_status=label.nav_status,
            vessel_type=label.vessel_type))

    return Trajectory(mmsi=mmsi, messages=tuple(msgs))


def inject_contextual(trajectory: Trajectory, claimed: NavStatus,
                      registry: ContextRegistry) -> Trajectory:
    """Broadcast a false navigational status on every message."""
    first = trajectory.messages[0]
    true_label = registry.lookup(first.vessel_type, first.nav_status)
    claimed_label = registry.lookup(first.vessel_type, claimed)
    if claimed_label is None:
        raise UnregisteredFalsification(
            f"({first.vessel_type.value}, {claimed.value}) is not a registered context")
    if true_label is not None and claimed_label.id == true_label.id:
        raise UnregisteredFalsification(
            "falsified status maps to the vessel's true context")
    msgs = tuple(replace(m, nav_status=claimed) for m in trajectory.messages)
    return Trajectory(mmsi=trajectory.mmsi, messages=msgs)


def inject_collective(trajectory: Trajectory, start: int, span: int,
                      magnitude_m: float, heading_deg: float) -> Trajectory:
    """Displace `span` consecutive steps by magnitude_m along one heading.

    Steps after the span replay their original displacement vectors from the
    new location, so only the span itself is anomalous. Reported speeds stay
    untouched and become inconsistent with the motion.
    """
    msgs = list(trajectory.messages)
    n = len(msgs)
    if not 0 <= start < start + span < n:
        raise ValueError(f"span [{start}, {start + span}] outside trajectory of {n}")

    steps = []
    for i in range(1, n):
        a, b = msgs[i - 1], msgs[i]
        steps.append((bearing(a.lat, a.lon, b.lat, b.lon),
                      haversine(a.lat, a.lon, b.lat, b.lon)))

    lat, lon = msgs[start].lat, msgs[start].lon
    for i in range(start + 1, n):
        if i <= start + span:
            lat, lon = destination(lat, lon, heading_deg, magnitude_m)
        else:
            brg, dist = steps[i - 1]
            lat, lon = destination(lat, lon, brg, dist)
        msgs[i] = replace(msgs[i], lat=lat, lon=lon)
    return Trajectory(mmsi=trajectory.mmsi, messages=tuple(msgs))


def generate(config: SynthConfig, registry: ContextRegistry) -> SynthResult:
    """Build the full fleet, inject anomalies, and emit exact truth tags."""
    plan_vessels: dict[int, list[tuple[int, ContextPlan]]] = {}
    mmsi_counter = config.base_mmsi
    for plan in config.plans:
        if not registry.has_id(plan.context_id):
            raise UnmappedContext(
                f"context {plan.context_id} is not in the registry")
        vessels = []
        for _ in range(plan.vessels):
            mmsi_counter += 1
            vessels.append((mmsi_counter, plan))
        plan_vessels[plan.context_id] = vessels

    # pick anomaly carriers up front; counts round up so a nonzero rate
    # always injects at least one vessel
    falsified: dict[int, ContextPlan] = {}
    for plan in config.plans:
        if plan.falsify_to is None or config.contextual_rate == 0.0:
            continue
        members = plan_vessels[plan.context_id]
        k = min(len(members),
                max(1, round(config.contextual_rate * len(members))))
        pick_rng = np.random.default_rng([config.seed, 7, plan.context_id])
        for j in pick_rng.choice(len(members), size=k, replace=False):
            mmsi, _ = members[int(j)]
            falsified[mmsi] = plan

    collective: set[int] = set()
    if config.collective_rate > 0.0:
        pool = sorted(m for vs in plan_vessels.values() for m, _ in vs
                      if m not in falsified)
        k = min(len(pool), max(1, round(config.collective_rate * len(pool))))
        pick_rng = np.random.default_rng([config.seed, 8])
        collective = {pool[int(j)]
                      for j in pick_rng.choice(len(pool), size=k, replace=False)}

    trajectories: list[Trajectory] = []
    truth: dict[tuple[int, int], Truth] = {}
    n_windows = config.messages_per_vessel // config.window_len

    for plan in config.plans:
        for mmsi, _ in plan_vessels[plan.context_id]:
            traj = _simulate_vessel(mmsi, plan.context_id, plan.behavior,
                                    config.messages_per_vessel, config.seed,
                                    registry, config.ports)

            if mmsi in falsified:
                traj = inject_contextual(traj, plan.falsify_to, registry)
                tag = Truth(kind="contextual", true_context=plan.context_id)
                for widx in range(n_windows):
                    truth[(mmsi, widx)] = tag

            if mmsi in collective:
                inj_rng = np.random.default_rng([config.seed, mmsi, 3])
                span = config.collective_span
                lo, hi = 5, config.messages_per_vessel - span - 5
                start = int(inj_rng.integers(lo, hi))
                heading_deg = float(inj_rng.uniform(0.0, 360.0))
                traj = inject_collective(traj, start, span,
                                         config.collective_magnitude_m,
                                         heading_deg)
                for m in range(start + 1, start + span + 1):
                    widx = m // config.window_len
                    if widx < n_windows:
                        truth[(mmsi, widx)] = Truth(kind="collective")

            trajectories.append(traj)

    return SynthResult(trajectories=trajectories, truth=truth,
                       ports=config.ports)


# --- file round-trip -------------------------------------------------------------

def write_fleet(out_dir: Path, result: SynthResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    messages = [m for t in result.trajectories for m in t.messages]
    messages.sort(key=lambda m: (m.mmsi, m.timestamp))
    with open(out_dir / "records.csv", "w", newline="") as fh:
        serialize_messages(messages, fh)
    with open(out_dir / "truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mmsi", "window_index", "kind", "true_context"])
        writer.writerows(result.truth_rows)
    with open(out_dir / "ports.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lat", "lon"])
        for lat, lon in result.ports:
            writer.writerow([repr(float(lat)), repr(float(lon))])


def load_truth(path: Path) -> dict[tuple[int, int], Truth]:
    lookup: dict[tuple[int, int], Truth] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            tag = Truth(kind=row["kind"],
                        true_context=int(row["true_context"])
                        if row["true_context"] else None)
            lookup[(int(row["mmsi"]), int(row["window_index"]))] = tag
    return lookup


def load_ports(path: Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        return [(float(r["lat"]), float(r["lon"])) for r in csv.DictReader(fh)]
