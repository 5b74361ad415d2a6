"""Saturated-rate copying dynamics on label-valued coordinates.

Every coordinate jumps at the constant rate ``lam_star``; a jump at
coordinate ``i`` picks a donor ``j`` uniformly (self included) and copies the
donor's state with probability ``accept_prob(x_i, x_j)``, otherwise the
coordinate keeps its state.  Because the rate is saturated, proposal and jump
clocks coincide and the overlap of any two copies of the jump kernel is
explicit, which makes the system a convenient stress case for coupled runs.
The base dynamics refreshes each coordinate to ``Uniform[0, 1)`` at rate
``base_refresh_rate`` (rate zero leaves coordinates frozen without consuming
randomness).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

from ..coupling import make_refresh_coupler
from ..particles import SystemSpec

__all__ = ["SelectionBundle", "SelectionParams", "selection_mutation"]


@dataclasses.dataclass(frozen=True)
class SelectionParams:
    """Parameters of the copying dynamics.

    Attributes:
        n_particles: Number of coordinates.
        lam_star: Saturated jump rate per coordinate.
        accept_prob: Copy probability ``accept_prob(x_i, x_j)`` evaluated on
            coordinate state tuples; ``None`` means the constant ``0.5``.
        base_refresh_rate: Rate of the uniform refresh between jumps.
    """

    n_particles: int
    lam_star: float = 1.0
    accept_prob: Optional[Callable] = None
    base_refresh_rate: float = 1.0


@dataclasses.dataclass(frozen=True)
class SelectionBundle:
    """The copying dynamics packaged as a particle system."""

    system: SystemSpec


def selection_mutation(params: SelectionParams) -> SelectionBundle:
    """Build the copying dynamics for the given parameters."""
    n = int(params.n_particles)
    lam_star = float(params.lam_star)
    refresh_rate = float(params.base_refresh_rate)
    if n < 1:
        raise ValueError(f"n_particles must be at least 1, got {n}")
    if lam_star <= 0.0:
        raise ValueError(f"lam_star must be positive, got {lam_star}")
    if refresh_rate < 0.0:
        raise ValueError(
            f"base_refresh_rate must be nonnegative, got {refresh_rate}"
        )
    p_fn = params.accept_prob
    if p_fn is None:
        p_fn = lambda xi, xj: 0.5  # noqa: E731

    def base_flow(i, coord, dt, stream):
        if refresh_rate <= 0.0:
            return coord
        if stream.random() < -math.expm1(-refresh_rate * dt):
            return (stream.random(),)
        return coord

    def rate(i, config) -> float:
        return lam_star

    def kernel_stream(i, config, stream):
        j = int(stream.integers(n))
        if stream.random() < p_fn(config[i], config[j]):
            return config[j]
        return config[i]

    def kernel(i, config, u):
        scaled = u * n
        j = min(int(scaled), n - 1)
        frac = scaled - j
        if frac < p_fn(config[i], config[j]):
            return config[j]
        return config[i]

    def kernel_atoms(i, config):
        weights: dict = {}
        reps: dict = {}
        for j in range(n):
            p = p_fn(config[i], config[j])
            for state, w in ((config[j], p / n), (config[i], (1.0 - p) / n)):
                if w <= 0.0:
                    continue
                reps.setdefault(state, state)
                weights[state] = weights.get(state, 0.0) + w
        return tuple((reps[s], w) for s, w in weights.items())

    pair_coupler = make_refresh_coupler(refresh_rate)

    def base_coupler(i, coord_x, coord_y, stream):
        return pair_coupler(coord_x, coord_y, stream)

    system = SystemSpec(
        n_particles=n,
        base_flow=base_flow,
        rate=rate,
        kernel=kernel,
        rate_ceiling=lam_star,
        coordinate_layout=("real",),
        coordinate_box=((0.0, 1.0),),
        name="selection",
        kernel_atoms=kernel_atoms,
        kernel_stream=kernel_stream,
        base_coupler=base_coupler,
    )
    return SelectionBundle(system=system)
