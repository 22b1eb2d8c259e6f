"""Logical-time simulator for round-based distributed training.

Timing is modelled per worker-step: a base compute time with truncated
Gaussian jitter and an occasional straggler slowdown, plus a fixed
latency-and-bandwidth cost per collective.  Blocking kinds fence every round
on the slowest worker plus the communication; overlapped kinds start the
next round immediately and only stall at the round's end if the previous
collective has not landed yet.  Schedules are pure functions of the timing
model and the stream seed, and are never fed back into the optimisation
trajectory.

Jitter draws for the whole schedule are taken before straggler draws, so two
schedules with the same seed and total step count consume identical
randomness even when their round lengths differ; that is what makes
wall-clock comparisons across algorithm kinds paired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream

__all__ = [
    "TimingModel",
    "Schedule",
    "sample_round_compute",
    "simulate",
    "comm_compute_ratio",
]


@dataclass(frozen=True)
class TimingModel:
    """Per-step compute and per-collective communication costs.

    compute_jitter is the relative standard deviation of a step's compute
    time; draws are truncated so a step never takes less than a tenth of the
    mean.  A straggler event multiplies a step by straggler_factor.
    """

    compute_mean: float = 1.0
    compute_jitter: float = 0.0
    straggler_prob: float = 0.0
    straggler_factor: float = 1.0
    latency: float = 0.0
    bandwidth: float = 1.0
    payload: float = 0.0

    def __post_init__(self):
        if not self.compute_mean > 0.0:
            raise ValueError(f"compute_mean must be > 0, got {self.compute_mean}")
        if self.compute_jitter < 0.0:
            raise ValueError(f"compute_jitter must be >= 0, got {self.compute_jitter}")
        if not 0.0 <= self.straggler_prob <= 1.0:
            raise ValueError(f"straggler_prob must lie in [0, 1], got {self.straggler_prob}")
        if self.straggler_factor < 1.0:
            raise ValueError(f"straggler_factor must be >= 1, got {self.straggler_factor}")
        if self.latency < 0.0 or self.payload < 0.0:
            raise ValueError("latency and payload must be >= 0")
        if self.payload > 0.0 and not self.bandwidth > 0.0:
            raise ValueError("bandwidth must be > 0 when payload > 0")

    @property
    def comm_time(self) -> float:
        """Seconds one collective occupies: latency plus transfer time."""
        if self.payload == 0.0:
            return self.latency
        return self.latency + self.payload / self.bandwidth

    def to_config(self) -> dict:
        return {
            "compute_mean": self.compute_mean,
            "compute_jitter": self.compute_jitter,
            "straggler_prob": self.straggler_prob,
            "straggler_factor": self.straggler_factor,
            "latency": self.latency,
            "bandwidth": self.bandwidth,
            "payload": self.payload,
        }


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _step_times(timing: TimingModel, jitter: np.ndarray,
                straggle_u: np.ndarray) -> np.ndarray:
    rel = 1.0 + np.maximum(jitter * timing.compute_jitter, -0.9)
    slow = np.where(straggle_u < timing.straggler_prob, timing.straggler_factor, 1.0)
    return timing.compute_mean * rel * slow


def sample_round_compute(timing: TimingModel, tau: int, m: int, rng) -> np.ndarray:
    """Per-worker compute seconds for one round of tau local steps.

    With jitter and stragglers off this is exactly tau * compute_mean for
    every worker; a straggler event stretches the step it hits by
    straggler_factor.
    """
    if tau < 1 or m < 1:
        raise ValueError("tau and m must be >= 1")
    gen = _as_generator(rng)
    jitter = gen.standard_normal((tau, m))
    straggle_u = gen.random((tau, m))
    return _step_times(timing, jitter, straggle_u).sum(axis=0)


@dataclass
class Schedule:
    """Simulated timeline of a run, with per-step and per-round accounting."""

    kind: str
    blocking: bool
    rounds: int
    tau: int
    m: int
    comm_time: float
    step_wall: np.ndarray            # (rounds*tau,) cluster finish of each step
    compute_finish: np.ndarray       # (rounds, m) per-worker compute finishes
    sync_start: np.ndarray           # (rounds,)
    sync_finish: np.ndarray          # (rounds,)
    round_compute_max: np.ndarray    # (rounds,)
    round_sync_idle: np.ndarray      # (rounds,) worker-seconds waiting on collectives
    round_straggler_idle: np.ndarray  # (rounds,) worker-seconds waiting on peers
    round_bytes: np.ndarray          # (rounds,)
    makespan: float
    comm_seconds_critical: float
    compute_seconds_critical: float

    @property
    def round_idle(self) -> np.ndarray:
        return self.round_sync_idle + self.round_straggler_idle

    def total_idle(self) -> float:
        return float(np.sum(self.round_idle))

    def total_bytes(self) -> float:
        return float(np.sum(self.round_bytes))


def simulate(kind, timing: TimingModel, rounds: int, tau: int, m: int,
             rng) -> Schedule:
    """Build the timeline of `rounds` rounds of tau local steps on m workers.

    kind may be an AlgorithmKind or its string value; what matters here is
    only whether the kind blocks on its collective or overlaps it.
    """
    from .algorithms import AlgorithmKind, BLOCKING_KINDS

    kind = AlgorithmKind(kind)
    if rounds < 1 or tau < 1 or m < 1:
        raise ValueError("rounds, tau and m must all be >= 1")
    blocking = kind in BLOCKING_KINDS
    gen = _as_generator(rng)
    steps = rounds * tau
    # Whole-schedule draws, jitter block first: equal step counts pair
    # draw-for-draw across kinds and round lengths.
    jitter = gen.standard_normal((steps, m))
    straggle_u = gen.random((steps, m))
    T = _step_times(timing, jitter, straggle_u).reshape(rounds, tau, m)
    C = T.sum(axis=1)                      # (rounds, m) per-worker round compute
    max_c = C.max(axis=1)
    comm = timing.comm_time
    bytes_per_round = float(m) * timing.payload

    step_wall = np.empty(steps)
    compute_finish = np.empty((rounds, m))
    sync_start = np.empty(rounds)
    sync_finish = np.empty(rounds)
    sync_idle = np.zeros(rounds)
    straggler_idle = np.zeros(rounds)

    if blocking:
        round_start = np.concatenate([[0.0], np.cumsum(max_c + comm)[:-1]])
        compute_finish[:] = round_start[:, None] + C
        sync_start[:] = round_start + max_c
        sync_finish[:] = sync_start + comm
        straggler_idle[:] = (max_c[:, None] - C).sum(axis=1)
        sync_idle[:] = m * comm
        within = np.cumsum(T, axis=1)      # (rounds, tau, m)
        step_wall[:] = (round_start[:, None] + within.max(axis=2)).ravel()
        makespan = float(sync_finish[-1])
        comm_critical = rounds * comm
    else:
        start = np.zeros(m)
        comm_critical = 0.0
        for r in range(rounds):
            own_finish = start + C[r]
            compute_finish[r] = own_finish
            dep = sync_finish[r - 1] if r > 0 else -np.inf
            end = np.maximum(own_finish, dep)
            blocked = end - own_finish
            sync_idle[r] = float(blocked.sum())
            comm_critical += max(0.0, dep - float(own_finish.max()))
            sync_start[r] = float(end.max())
            sync_finish[r] = sync_start[r] + comm
            within = start[None, :] + np.cumsum(T[r], axis=0)
            step_wall[r * tau:(r + 1) * tau] = within.max(axis=1)
            start = end
        # The trajectory never consumes the last round's collective, so the
        # run ends when the slowest worker finishes its final round.
        makespan = float(start.max())

    return Schedule(
        kind=kind.value,
        blocking=blocking,
        rounds=rounds,
        tau=tau,
        m=m,
        comm_time=comm,
        step_wall=step_wall,
        compute_finish=compute_finish,
        sync_start=sync_start,
        sync_finish=sync_finish,
        round_compute_max=max_c,
        round_sync_idle=sync_idle,
        round_straggler_idle=straggler_idle,
        round_bytes=np.full(rounds, bytes_per_round),
        makespan=makespan,
        comm_seconds_critical=comm_critical,
        compute_seconds_critical=makespan - comm_critical,
    )


def comm_compute_ratio(schedule: Schedule) -> float:
    """Critical-path communication seconds over critical-path compute seconds.

    For blocking kinds the numerator is the per-round collective cost; for
    overlapped kinds it is only the time the critical path actually stalled
    waiting for a collective, so fully hidden communication gives 0.
    """
    if schedule.compute_seconds_critical <= 0.0:
        raise ValueError("schedule has no compute time on the critical path")
    return schedule.comm_seconds_critical / schedule.compute_seconds_critical
