"""Simulated network time synchronization.

A fixed master clock (the network switch) runs two-step timestamp
exchanges with each slave device over an asymmetric, jittery link. A PI
servo on each slave steps its offset and slews its rate until residuals
settle. Everything is integer nanoseconds with half-to-even rounding so
runs are bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

DEFAULT_TURNAROUND_NS = 1_000_000  # slave think time between t2 and t3
MAX_RATE_CORRECTION_PPM = 500.0


def _mix(*parts: int) -> int:
    """Stable integer hash (splitmix64 over the parts)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & 0xFFFFFFFFFFFFFFFF)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
        h = (h ^ (h >> 31)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 29
    return h


def _div2_half_even(n: int) -> int:
    return round(Fraction(n, 2))


@dataclass
class SimClock:
    """Affine drifting clock with optional read noise and servo corrections."""

    offset0: int = 0              # ns
    drift_ppm: float = 0.0
    noise_sigma: float = 0.0      # ns, per-read Gaussian
    seed: int = 0
    servo_offset_correction: int = 0   # ns, subtracted-from-raw accumulated
    servo_rate_correction_ppm: float = 0.0

    def __post_init__(self):
        if abs(self.drift_ppm) > 500:
            raise ValueError("|drift| must be <= 500 ppm")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def local_time_ideal(self, true_time: int) -> int:
        """Deterministic part of the clock model (no read noise)."""
        rate = (self.drift_ppm + self.servo_rate_correction_ppm) * 1e-6
        return true_time + round(rate * true_time) + self.offset0 + self.servo_offset_correction

    def local_time(self, true_time: int) -> int:
        if true_time < 0:
            raise ValueError("true_time must be >= 0")
        t = self.local_time_ideal(true_time)
        if self.noise_sigma > 0:
            t += round(random.Random(_mix(self.seed, true_time)).gauss(0.0, self.noise_sigma))
        return t


def local_time(clock: SimClock, true_time: int) -> int:
    return clock.local_time(true_time)


@dataclass(frozen=True)
class LinkModel:
    delay_m2s: int            # ns
    delay_s2m: int            # ns
    jitter_sigma: float = 0.0  # ns
    drop_prob: float = 0.0

    def __post_init__(self):
        if self.delay_m2s <= 0 or self.delay_s2m <= 0:
            raise ValueError("link delays must be positive")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")

    def draw_delay(self, nominal: int, rng: random.Random) -> int:
        if self.jitter_sigma == 0:
            return nominal
        # truncate so the total delay stays positive
        return max(1, nominal + round(rng.gauss(0.0, self.jitter_sigma)))


@dataclass(frozen=True)
class SyncSample:
    t1: int  # master send (master clock)
    t2: int  # slave receive (slave clock)
    t3: int  # slave send (slave clock)
    t4: int  # master receive (master clock)

    def __post_init__(self):
        if self.t3 < self.t2:
            raise ValueError("t3 must be >= t2")


class ImplausibleSampleError(ValueError):
    pass


class UnsynchronizedError(RuntimeError):
    pass


def two_step_exchange(
    master: SimClock,
    slave: SimClock,
    link: LinkModel,
    true_time: int,
    rng: random.Random,
    turnaround_ns: int = DEFAULT_TURNAROUND_NS,
):
    """One sync + delay-request round trip; None when the link drops it."""
    if link.drop_prob > 0 and rng.random() < link.drop_prob:
        return None
    d1 = link.draw_delay(link.delay_m2s, rng)
    d2 = link.draw_delay(link.delay_s2m, rng)
    t1 = master.local_time(true_time)
    t2 = slave.local_time(true_time + d1)
    t3 = slave.local_time(true_time + d1 + turnaround_ns)
    t4 = master.local_time(true_time + d1 + turnaround_ns + d2)
    return SyncSample(t1, t2, t3, t4)


def estimate(sample: SyncSample) -> tuple:
    """Standard two-step estimator: (offset ns, mean one-way delay ns)."""
    fwd = sample.t2 - sample.t1
    back = sample.t4 - sample.t3
    mean_delay = _div2_half_even(fwd + back)
    if mean_delay <= 0:
        raise ImplausibleSampleError(f"non-positive mean delay {mean_delay}")
    return _div2_half_even(fwd - back), mean_delay


@dataclass(frozen=True)
class ServoState:
    kp: float = 0.7
    ki: float = 0.3
    integral_ppm: float = 0.0       # accumulated rate correction, clamped
    last_offset_estimate: int = 0

    def __post_init__(self):
        if self.kp <= 0 or self.ki <= 0:
            raise ValueError("servo gains must be positive")


def servo_update(servo: ServoState, offset_estimate: int, dt: float) -> tuple:
    """PI step: returns (servo', offset_correction_delta_ns, rate_correction_delta_ppm).

    The proportional term is a one-shot phase step of kp*offset. The
    integral term slews the rate by ki times the frequency error implied
    by the offset accumulating over dt, clamped at +-500 ppm total.
    Deltas are to be subtracted from the slave clock's correction terms.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    offset_delta = round(servo.kp * offset_estimate)
    raw = servo.ki * offset_estimate / (dt * 1e3)  # ns over dt seconds -> ppm
    new_integral = max(
        -MAX_RATE_CORRECTION_PPM, min(MAX_RATE_CORRECTION_PPM, servo.integral_ppm + raw)
    )
    rate_delta = new_integral - servo.integral_ppm
    return (
        replace(servo, integral_ppm=new_integral, last_offset_estimate=offset_estimate),
        offset_delta,
        rate_delta,
    )


@dataclass
class SyncedSlave:
    """Runtime sync state of one device: clock + servo + master-time mapping."""

    slave_id: str
    clock: SimClock
    link: LinkModel
    servo: ServoState = field(default_factory=ServoState)
    samples_ok: int = 0
    map_offset_ns: int = 0
    map_rate_ppm: float = 0.0

    @property
    def synchronized(self) -> bool:
        return self.samples_ok >= 2

    def handle_exchange(self, master: SimClock, true_time: int, rng: random.Random, dt: float):
        sample = two_step_exchange(master, self.clock, self.link, true_time, rng)
        if sample is None:
            return None
        try:
            offset, _delay = estimate(sample)
        except ImplausibleSampleError:
            return None
        self.servo, off_delta, rate_delta = servo_update(self.servo, offset, dt)
        self.clock.servo_offset_correction -= off_delta
        self.clock.servo_rate_correction_ppm -= rate_delta
        # a rate change must not step the phase: the model's rate term is
        # rate*t, so cancel the retroactive jump at the current instant
        self.clock.servo_offset_correction += round(rate_delta * 1e-6 * true_time)
        self.samples_ok += 1
        # residual mapping for timestamp translation into the master domain
        self.map_offset_ns = offset - off_delta
        return offset


def to_master_time(slave: SyncedSlave, local_ts: int) -> int:
    """Invert the corrected clock model at the latest servo epoch."""
    if not slave.synchronized:
        raise UnsynchronizedError(f"slave {slave.slave_id} has no usable sync")
    shifted = local_ts - slave.map_offset_ns
    if slave.map_rate_ppm == 0.0:
        return shifted
    return round(shifted / (1.0 + slave.map_rate_ppm * 1e-6))


@dataclass(frozen=True)
class ResidualPoint:
    true_time: int
    slave_id: str
    residual_ns: int


@dataclass(frozen=True)
class SyncReport:
    trace: list            # of ResidualPoint
    statuses: dict         # slave_id -> "synchronized" | "unsynchronized"
    final_p99: dict        # slave_id -> p99 |residual| over the final 10%

    def trace_for(self, slave_id: str) -> list:
        return [p for p in self.trace if p.slave_id == slave_id]


def residual_vs_master(master: SimClock, slave: SimClock, true_time: int) -> int:
    """True post-correction clock error against the master (noise-free)."""
    return slave.local_time_ideal(true_time) - master.local_time_ideal(true_time)


def run_sync(
    master: SimClock,
    slaves: list,
    duration_s: float,
    sync_interval_s: float = 0.1,
    seed: int = 0,
) -> SyncReport:
    """Drive periodic exchanges for every slave; returns the residual traces.

    slaves: list of SyncedSlave (mutated in place). Deterministic for a
    fixed seed and fixed inputs.
    """
    if duration_s <= 10 * sync_interval_s:
        raise ValueError("duration must exceed 10 sync intervals")
    interval_ns = round(sync_interval_s * 1e9)
    n_rounds = int(round(duration_s * 1e9)) // interval_ns
    rngs = [random.Random(_mix(seed, i)) for i in range(len(slaves))]
    trace = []
    for k in range(n_rounds):
        t = k * interval_ns
        for slave, rng in zip(slaves, rngs):
            slave.handle_exchange(master, t, rng, sync_interval_s)
            sample_t = t + interval_ns
            trace.append(
                ResidualPoint(sample_t, slave.slave_id,
                              residual_vs_master(master, slave.clock, sample_t))
            )
    statuses = {
        s.slave_id: "synchronized" if s.synchronized else "unsynchronized" for s in slaves
    }
    final_p99 = {}
    for s in slaves:
        res = [abs(p.residual_ns) for p in trace if p.slave_id == s.slave_id]
        tail = res[-max(1, len(res) // 10):]
        tail_sorted = sorted(tail)
        idx = min(len(tail_sorted) - 1, math.ceil(0.99 * len(tail_sorted)) - 1)
        final_p99[s.slave_id] = tail_sorted[idx]
    return SyncReport(trace=trace, statuses=statuses, final_p99=final_p99)
