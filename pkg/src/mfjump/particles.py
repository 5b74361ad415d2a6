"""Interacting particle systems driven by a single global proposal clock.

A system of ``N`` coordinates evolves by: independent per-coordinate base
motion between jumps, a global Poisson proposal clock at rate
``N * rate_ceiling``, a uniformly chosen coordinate per proposal, and
thinning acceptance with probability ``rate_i / rate_ceiling``.  Jump rates
may depend on the whole configuration, which is how mean-field interaction
enters.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

from .engine import (
    JUMP_ACCEPTED,
    JUMP_REJECTED,
    SAMPLE,
    EmpiricalMeasure,
    Event,
    ModelSpec,
    RateCeilingError,
    Trajectory,
)

__all__ = [
    "CoordinateRateError",
    "SystemSpec",
    "empirical",
    "meanfield_system",
    "simulate_system",
]

State = tuple


class CoordinateRateError(RateCeilingError):
    """A coordinate's jump rate exceeded the system ceiling."""


@dataclasses.dataclass(frozen=True)
class SystemSpec:
    """Dynamics of an interacting system of exchangeable coordinates.

    Attributes:
        n_particles: Number of coordinates.
        base_flow: ``(i, coord_state, dt, stream) -> coord_state`` independent
            base motion of coordinate ``i``.
        rate: ``(i, config) -> float`` jump rate of coordinate ``i`` given the
            full configuration.
        kernel: ``(i, config, u) -> coord_state`` post-jump state of
            coordinate ``i`` from one uniform variate.
        rate_ceiling: Uniform bound on every coordinate rate.
        coordinate_layout: Per-component kind of one coordinate.
        coordinate_box: Per-component range of one coordinate.
        name: Human-readable system name.
        kernel_atoms: Optional ``(i, config) -> [(coord_state, w), ...]``
            atoms of the jump kernel of coordinate ``i``.
        kernel_stream: Optional ``(i, config, stream) -> coord_state`` kernel
            for jumps needing more than one variate; preferred over ``kernel``
            by the simulator when present.
        base_coupler: Optional ``(i, cx, cy, stream) -> machine`` factory for
            coupled base motion of one coordinate pair (see
            :mod:`mfjump.coupling`).
    """

    n_particles: int
    base_flow: Callable
    rate: Callable
    kernel: Callable
    rate_ceiling: float
    coordinate_layout: tuple
    coordinate_box: tuple
    name: str
    kernel_atoms: Optional[Callable] = None
    kernel_stream: Optional[Callable] = None
    base_coupler: Optional[Callable] = None


def empirical(config: Sequence[State]) -> EmpiricalMeasure:
    """Empirical measure of a configuration (uniform over coordinates)."""
    return EmpiricalMeasure.from_states(config)


def _check_coordinate_rate(rate: float, ceiling: float, i: int, name: str) -> None:
    if rate > ceiling * (1.0 + 1e-9) + 1e-12:
        raise CoordinateRateError(
            f"{name}: coordinate {i} rate {rate} exceeds ceiling {ceiling}"
        )


def simulate_system(
    system: SystemSpec,
    initial: Sequence[State],
    horizon: float,
    stream,
    sample_times: Sequence[float] = (),
    record_events: bool = True,
) -> Trajectory:
    """Simulate an interacting system by global-clock thinning.

    Events carry full configurations (tuples of coordinate states).  With
    ``record_events=False`` only sample events are kept, while accepted and
    rejected proposals are still counted.
    """
    n = system.n_particles
    ceiling = system.rate_ceiling
    if math.isinf(ceiling) or ceiling < 0.0:
        raise ValueError("system rate ceiling must be finite and nonnegative")
    if len(initial) != n:
        raise ValueError(f"expected {n} coordinates, got {len(initial)}")
    total_rate = n * ceiling
    pending = sorted(set(float(ts) for ts in sample_times))
    events: list[Event] = []
    sample_states: dict[float, tuple] = {}
    t = 0.0
    config = [tuple(c) for c in initial]
    initial_config = tuple(config)
    n_accepted = n_rejected = 0

    def flow_all(dt: float) -> None:
        if dt <= 0.0:
            return
        for i in range(n):
            config[i] = tuple(system.base_flow(i, config[i], dt, stream))

    next_prop = (
        t + stream.exponential(1.0 / total_rate) if total_rate > 0.0 else math.inf
    )
    si = 0
    while True:
        t_sample = pending[si] if si < len(pending) else math.inf
        t_next = min(t_sample, next_prop)
        if t_next > horizon:
            break
        if t_sample <= next_prop:
            flow_all(t_sample - t)
            t = t_sample
            snapshot = tuple(config)
            events.append(Event(time=t, kind=SAMPLE, state=snapshot))
            sample_states[t_sample] = snapshot
            si += 1
            continue
        i = int(stream.integers(n))
        flow_all(next_prop - t)
        t = next_prop
        full = tuple(config)
        rate_i = system.rate(i, full)
        _check_coordinate_rate(rate_i, ceiling, i, system.name)
        if stream.random() * ceiling < rate_i:
            if system.kernel_stream is not None:
                config[i] = tuple(system.kernel_stream(i, full, stream))
            else:
                config[i] = tuple(system.kernel(i, full, stream.random()))
            n_accepted += 1
            if record_events:
                events.append(Event(time=t, kind=JUMP_ACCEPTED, state=tuple(config)))
        else:
            n_rejected += 1
            if record_events:
                events.append(Event(time=t, kind=JUMP_REJECTED, state=full))
        next_prop = t + stream.exponential(1.0 / total_rate)
    flow_all(horizon - t)
    return Trajectory(
        initial=initial_config,
        final_state=tuple(config),
        horizon=horizon,
        events=tuple(events),
        n_accepted=n_accepted,
        n_rejected=n_rejected,
        sample_states=sample_states,
    )


def meanfield_system(model_or_bundle, n_particles: int) -> SystemSpec:
    """Lift a measure-driven model to an ``N``-coordinate interacting system.

    Each coordinate follows the model's base flow; jump rates and kernels see
    the empirical measure of the current configuration in place of the
    ambient measure.  Accepts either a :class:`~mfjump.engine.ModelSpec` or a
    model bundle exposing ``.model``.
    """
    model: ModelSpec = getattr(model_or_bundle, "model", model_or_bundle)

    def base_flow(i, coord, dt, stream):
        return model.base_flow(coord, dt, stream)

    def rate(i, config):
        return model.rate(config[i], empirical(config))

    def kernel(i, config, u):
        return model.kernel(config[i], empirical(config), u)

    kernel_atoms = None
    if model.kernel_atoms is not None:

        def kernel_atoms(i, config):
            return model.kernel_atoms(config[i], empirical(config))

    base_coupler = None
    if model.base_coupler is not None:

        def base_coupler(i, cx, cy, stream):
            return model.base_coupler(cx, cy, stream)

    return SystemSpec(
        n_particles=n_particles,
        base_flow=base_flow,
        rate=rate,
        kernel=kernel,
        rate_ceiling=model.rate_ceiling,
        coordinate_layout=model.state_layout,
        coordinate_box=model.state_box,
        name=f"{model.name}-system",
        kernel_atoms=kernel_atoms,
        base_coupler=base_coupler,
    )
