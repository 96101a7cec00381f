"""Laser/field timing protocols: building, validation, and execution.

A Sequence is a list of switching events applied on top of an initial
channel state. The canonical protocols (transfer, recapture, hyperfine
preparation, state-selective detection) are produced by build_protocol
and can be composed with chain(); simulate_sequence interprets a valid
timeline by dispatching each phase to the kinetics and signal modules.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .kinetics import (
    HyperfineRates,
    MotRates,
    dipole_survival,
    gillespie_mot,
    hyperfine_telegraph,
    magnetic_trap_survival,
)
from .signals import (
    BurstModel,
    DetectorModel,
    PhotonTrace,
    PiecewiseRate,
    mot_rate_profile,
    synthesize_counts,
    synthesize_detection_burst,
)
from .analysis import BurstClassification, classify_burst

__all__ = [
    "Channel",
    "SequenceEvent",
    "Sequence",
    "Violation",
    "PhysicsBundle",
    "RunRecord",
    "MOT_OPERATION",
    "DIPOLE_HOLD",
    "build_protocol",
    "chain",
    "validate_sequence",
    "simulate_sequence",
    "sequence_to_csv",
    "sequence_from_csv",
]


class Channel(enum.Enum):
    COOLING = "COOLING"
    REPUMPER = "REPUMPER"
    DIPOLE = "DIPOLE"
    DETECTION = "DETECTION"
    B_FIELD = "B_FIELD"


@dataclass(frozen=True)
class SequenceEvent:
    time: float
    channel: Channel
    state: bool  # True = on


MOT_OPERATION = {
    Channel.COOLING: True,
    Channel.REPUMPER: True,
    Channel.DIPOLE: False,
    Channel.DETECTION: False,
    Channel.B_FIELD: False,
}

DIPOLE_HOLD = {
    Channel.COOLING: False,
    Channel.REPUMPER: False,
    Channel.DIPOLE: True,
    Channel.DETECTION: False,
    Channel.B_FIELD: False,
}


@dataclass
class Sequence:
    """Ordered switching timeline; times are relative to the sequence start."""

    events: list[SequenceEvent]
    label: str = ""
    parameters: dict = field(default_factory=dict)
    duration: float | None = None
    initial_state: dict = field(default_factory=lambda: dict(MOT_OPERATION))

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.time)
        if self.events and self.events[0].time < 0:
            raise ValueError("event times must be non-negative")
        last = self.events[-1].time if self.events else 0.0
        if self.duration is None:
            self.duration = last
        if self.duration < last:
            raise ValueError("duration precedes the last event")

    def state_at(self, t: float) -> dict:
        state = dict(self.initial_state)
        for ev in self.events:
            if ev.time > t:
                break
            state[ev.channel] = ev.state
        return state

    def final_state(self) -> dict:
        state = dict(self.initial_state)
        for ev in self.events:
            state[ev.channel] = ev.state
        return state


@dataclass(frozen=True)
class Violation:
    code: str  # 'uncovered', 'detection_overlap', 'pockels_gap', 'alternation'
    time: float
    message: str


def build_protocol(kind: str, **params) -> Sequence:
    """Canonical switching sequences of the few-atom experiment.

    kinds: transfer, recapture, prepare_f3, prepare_f4, detect, mot_monitor.
    Durations (seconds): overlap_s (default 5 ms), delay_s (8 ms between the
    two MOT lasers for state preparation), gap_s (50 us Pockels gap),
    window_s (2 ms detection window), duration_s (MOT monitoring span).
    """

    def pop(name, default):
        v = float(params.pop(name, default))
        if v <= 0:
            raise ValueError(f"{name} must be positive")
        return v

    def done(events, label, initial, duration, used):
        if params:
            raise ValueError(f"unknown parameters for {label}: {sorted(params)}")
        return Sequence(events, label=label, parameters=used,
                        duration=duration, initial_state=dict(initial))

    if kind == "transfer":
        ov = pop("overlap_s", 5e-3)
        ev = [
            SequenceEvent(0.0, Channel.DIPOLE, True),
            SequenceEvent(ov, Channel.COOLING, False),
            SequenceEvent(ov, Channel.REPUMPER, False),
        ]
        return done(ev, "transfer", MOT_OPERATION, ov, {"overlap_s": ov})
    if kind == "recapture":
        ov = pop("overlap_s", 5e-3)
        ev = [
            SequenceEvent(0.0, Channel.COOLING, True),
            SequenceEvent(0.0, Channel.REPUMPER, True),
            SequenceEvent(ov, Channel.DIPOLE, False),
        ]
        return done(ev, "recapture", DIPOLE_HOLD, ov, {"overlap_s": ov})
    if kind in ("prepare_f3", "prepare_f4"):
        ov = pop("overlap_s", 5e-3)
        delay = pop("delay_s", 8e-3)
        first, second = (
            (Channel.REPUMPER, Channel.COOLING)
            if kind == "prepare_f3"
            else (Channel.COOLING, Channel.REPUMPER)
        )
        ev = [
            SequenceEvent(0.0, Channel.DIPOLE, True),
            SequenceEvent(ov, first, False),
            SequenceEvent(ov + delay, second, False),
        ]
        return done(ev, kind, MOT_OPERATION, ov + delay, {"overlap_s": ov, "delay_s": delay})
    if kind == "detect":
        gap = pop("gap_s", 50e-6)
        window = pop("window_s", 2e-3)
        ev = [
            SequenceEvent(0.0, Channel.DIPOLE, False),
            SequenceEvent(gap, Channel.DETECTION, True),
            SequenceEvent(gap + window, Channel.DETECTION, False),
        ]
        return done(ev, "detect", DIPOLE_HOLD, gap + window, {"gap_s": gap, "window_s": window})
    if kind == "mot_monitor":
        duration = pop("duration_s", 1.0)
        return done([], "mot_monitor", MOT_OPERATION, duration, {"duration_s": duration})
    raise ValueError(f"unknown protocol kind: {kind!r}")


def chain(*parts) -> Sequence:
    """Concatenate sequences; bare floats insert passive delays (seconds)."""
    events: list[SequenceEvent] = []
    labels: list[str] = []
    parameters: dict = {}
    offset = 0.0
    initial = None
    for part in parts:
        if isinstance(part, (int, float)):
            if part < 0:
                raise ValueError("delays must be non-negative")
            offset += float(part)
            continue
        if initial is None:
            initial = dict(part.initial_state)
        events.extend(
            SequenceEvent(ev.time + offset, ev.channel, ev.state) for ev in part.events
        )
        labels.append(part.label)
        for k, v in part.parameters.items():
            parameters[f"{part.label}.{k}"] = v
        offset += part.duration
    if initial is None:
        initial = dict(MOT_OPERATION)
    return Sequence(events, label="+".join(labels), parameters=parameters,
                    duration=offset, initial_state=initial)


_ANY_LIGHT_OR_FIELD = (
    Channel.COOLING,
    Channel.REPUMPER,
    Channel.DIPOLE,
    Channel.DETECTION,
    Channel.B_FIELD,
)

POCKELS_GAP_S = 50e-6


def validate_sequence(seq: Sequence, hold_grace_s: float = 200e-6) -> list[Violation]:
    """Check a timeline against the hold/detection ordering constraints.

    Returns machine-readable violations (empty list = valid): (a) atoms
    left unconfined longer than the grace interval, (b) detection light
    overlapping the dipole trap, (c) detection starting less than 50 us
    after the dipole laser switched off, (d) per-channel on/off
    alternation breaks.
    """
    violations: list[Violation] = []
    state = dict(seq.initial_state)
    last_dipole_off: float | None = None

    for ev in seq.events:
        if state[ev.channel] == ev.state:
            violations.append(
                Violation(
                    "alternation",
                    ev.time,
                    f"{ev.channel.value} switched {'on' if ev.state else 'off'} twice in a row",
                )
            )
        state[ev.channel] = ev.state
        if ev.channel is Channel.DIPOLE and not ev.state:
            last_dipole_off = ev.time
        if ev.channel is Channel.DETECTION and ev.state:
            if state[Channel.DIPOLE]:
                violations.append(
                    Violation(
                        "detection_overlap",
                        ev.time,
                        "detection light turned on while the dipole trap is on",
                    )
                )
            elif last_dipole_off is not None and ev.time - last_dipole_off < POCKELS_GAP_S - 1e-12:
                violations.append(
                    Violation(
                        "pockels_gap",
                        ev.time,
                        f"detection starts {(ev.time - last_dipole_off) * 1e6:.1f} us after the "
                        f"dipole trap switched off (need >= {POCKELS_GAP_S * 1e6:.0f} us)",
                    )
                )

    # uncovered intervals: no light and no magnetic field confining the atoms
    times = sorted({0.0, seq.duration, *(ev.time for ev in seq.events)})
    state = dict(seq.initial_state)
    idx = 0
    uncovered_start: float | None = None
    for t0, t1 in zip(times[:-1], times[1:]):
        while idx < len(seq.events) and seq.events[idx].time <= t0:
            state[seq.events[idx].channel] = seq.events[idx].state
            idx += 1
        covered = any(state[ch] for ch in _ANY_LIGHT_OR_FIELD)
        if not covered and uncovered_start is None:
            uncovered_start = t0
        if covered and uncovered_start is not None:
            if t0 - uncovered_start > hold_grace_s:
                violations.append(
                    Violation(
                        "uncovered",
                        uncovered_start,
                        f"atoms unconfined for {(t0 - uncovered_start) * 1e3:.3f} ms "
                        f"from t={uncovered_start:.6f} s",
                    )
                )
            uncovered_start = None
    if uncovered_start is not None and seq.duration - uncovered_start > hold_grace_s:
        violations.append(
            Violation(
                "uncovered",
                uncovered_start,
                f"atoms unconfined for {(seq.duration - uncovered_start) * 1e3:.3f} ms "
                f"at the end of the sequence",
            )
        )
    violations.sort(key=lambda v: v.time)
    return violations


@dataclass
class PhysicsBundle:
    """Everything simulate_sequence needs to know about the apparatus."""

    mot_rates: MotRates = field(default_factory=MotRates)
    hyperfine: HyperfineRates = field(default_factory=lambda: HyperfineRates(
        r_4to3=7.0 / 16.0 * 0.2639, r_3to4=9.0 / 16.0 * 0.2639))
    detector: DetectorModel = field(default_factory=DetectorModel)
    burst: BurstModel = field(default_factory=BurstModel)
    dipole_lifetime: float = 51.0
    magnetic_lifetime: float | None = None  # None: same as the dipole trap
    loading_efficiency: float = 1.0  # per-atom transfer success probability
    mixed_state_p4: float = 0.5

    def __post_init__(self):
        if not (0 <= self.loading_efficiency <= 1):
            raise ValueError("loading_efficiency must be in [0, 1]")
        if self.dipole_lifetime <= 0:
            raise ValueError("dipole_lifetime must be positive")


@dataclass
class RunRecord:
    """Outcome of one simulated sequence execution."""

    sequence: Sequence
    prepared_n: int | None
    prepared_state: str | None  # '3', '4', or 'mixed'
    traces: list[tuple[str, PhotonTrace]]
    survivors: int | None
    recaptured_n: int | None
    classification: BurstClassification | None
    final_n: int
    seed: object = None


def _classify_interval(state: dict) -> str:
    if state[Channel.DETECTION]:
        return "detect"
    mot_light = state[Channel.COOLING] or state[Channel.REPUMPER]
    if mot_light and state[Channel.DIPOLE]:
        return "overlap"
    if mot_light:
        return "mot"
    if state[Channel.DIPOLE]:
        return "hold"
    if state[Channel.B_FIELD]:
        return "magnetic_hold"
    return "gap"


def simulate_sequence(
    seq: Sequence, initial_n: int, physics: PhysicsBundle, rng: np.random.Generator
) -> RunRecord:
    """Execute a validated timeline against the stochastic physics models.

    MOT and overlap phases run the birth-death process and synthesize the
    fluorescence trace; dipole holds apply exponential survival and the
    hyperfine telegraph process; detection phases synthesize and classify
    the fluorescence burst; a magnetic hold applies the 50% spin
    projection plus the same exponential decay.
    """
    violations = validate_sequence(seq)
    if violations:
        raise ValueError(
            "sequence is invalid: " + "; ".join(v.message for v in violations)
        )
    if initial_n < 0:
        raise ValueError("initial_n must be non-negative")

    times = sorted({0.0, seq.duration, *(ev.time for ev in seq.events)})
    det = physics.detector
    tau_dip = physics.dipole_lifetime
    tau_mag = physics.magnetic_lifetime or tau_dip

    n = int(initial_n)
    f_states: np.ndarray | None = None  # per-atom hyperfine F, None while MOT-cooled
    traces: list[tuple[str, PhotonTrace]] = []
    prepared_n = None
    prepared_state = None
    survivors = None
    recaptured_n = None
    classification = None
    last_cooling_off = None
    last_repumper_off = None
    prev_cat = None
    held_since_transfer = False

    state = dict(seq.initial_state)
    idx = 0
    for t0, t1 in zip(times[:-1], times[1:]):
        while idx < len(seq.events) and seq.events[idx].time <= t0:
            ev = seq.events[idx]
            state[ev.channel] = ev.state
            if ev.channel is Channel.COOLING and not ev.state:
                last_cooling_off = ev.time
            if ev.channel is Channel.REPUMPER and not ev.state:
                last_repumper_off = ev.time
            idx += 1
        if t1 <= t0:
            continue
        cat = _classify_interval(state)
        dt = t1 - t0

        if cat in ("hold", "gap", "detect") and prev_cat in ("overlap", "mot") and state[Channel.DIPOLE]:
            # transfer moment: the last MOT laser just went off with the dipole trap on
            prepared_n = n
            if physics.loading_efficiency < 1.0:
                n = int(rng.binomial(n, physics.loading_efficiency)) if n else 0
            if last_repumper_off is not None and (
                last_cooling_off is None or last_repumper_off < last_cooling_off
            ):
                prepared_state = "3"
                f_states = np.full(n, 3)
            elif last_cooling_off is not None and (
                last_repumper_off is None or last_cooling_off < last_repumper_off
            ):
                prepared_state = "4"
                f_states = np.full(n, 4)
            else:
                prepared_state = "mixed"
                f_states = np.where(rng.random(n) < physics.mixed_state_p4, 4, 3)
            held_since_transfer = True

        if cat in ("mot", "overlap"):
            if prev_cat in ("hold", "magnetic_hold", "detect", "gap") and recaptured_n is None and held_since_transfer:
                recaptured_n = n
            traj = gillespie_mot(physics.mot_rates, n, dt, rng)
            n = traj.final_value()
            f_states = None  # the MOT light scrambles the hyperfine state
            if dt >= det.bin_width:
                windows = [(0.0, dt)] if cat == "overlap" else []
                profile = mot_rate_profile(traj, det, overlap_windows=windows)
                traces.append((cat, synthesize_counts(profile, 0.0, dt, det.bin_width, rng)))
        elif cat == "hold":
            kept = dipole_survival(n, tau_dip, dt, rng)
            if f_states is not None and n:
                keep_idx = rng.choice(n, size=kept, replace=False)
                kept_states = f_states[np.sort(keep_idx)]
                f_states = np.array(
                    [
                        hyperfine_telegraph(int(f), physics.hyperfine, dt, rng).final_value()
                        for f in kept_states
                    ],
                    dtype=int,
                )
            n = kept
            survivors = n
            if dt >= det.bin_width:
                profile = PiecewiseRate.constant(det.stray_when_mot_off)
                traces.append((cat, synthesize_counts(profile, 0.0, dt, det.bin_width, rng)))
        elif cat == "magnetic_hold":
            if prepared_n is None:
                prepared_n = n
                prepared_state = "mixed"
                held_since_transfer = True
            n = magnetic_trap_survival(n, tau_mag, dt, rng)
            f_states = None
            survivors = n
        elif cat == "detect":
            if f_states is None:
                f_states = np.where(rng.random(n) < physics.mixed_state_p4, 4, 3)
            n4 = int(np.sum(f_states == 4))
            burst = synthesize_detection_burst(n4, n - n4, physics.burst, rng, window=dt)
            traces.append((cat, burst))
            classification = classify_burst(int(burst.counts.sum()), n, physics.burst)
            f_states = np.full(n, 3)  # detection light pumps the atoms dark
        # 'gap': nothing happens on the Pockels-gap time scale
        prev_cat = cat

    return RunRecord(
        sequence=seq,
        prepared_n=prepared_n,
        prepared_state=prepared_state,
        traces=traces,
        survivors=survivors,
        recaptured_n=recaptured_n,
        classification=classification,
        final_n=n,
    )


def sequence_to_csv(seq: Sequence) -> str:
    buf = io.StringIO()
    buf.write("time_s,channel,state\n")
    for ev in seq.events:
        buf.write(f"{ev.time!r},{ev.channel.value},{'on' if ev.state else 'off'}\n")
    return buf.getvalue()


def sequence_from_csv(text_or_path, label: str = "", initial_state=None) -> Sequence:
    if hasattr(text_or_path, "read"):
        rows = list(csv.reader(text_or_path))
    elif "\n" in str(text_or_path):
        rows = list(csv.reader(io.StringIO(str(text_or_path))))
    else:
        with open(text_or_path, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows or rows[0] != ["time_s", "channel", "state"]:
        raise ValueError("expected header 'time_s,channel,state'")
    events = []
    for row in rows[1:]:
        if not row:
            continue
        t, ch, st = row
        if st not in ("on", "off"):
            raise ValueError(f"state must be 'on' or 'off', got {st!r}")
        events.append(SequenceEvent(float(t), Channel(ch), st == "on"))
    kwargs = {} if initial_state is None else {"initial_state": dict(initial_state)}
    return Sequence(events, label=label, **kwargs)
