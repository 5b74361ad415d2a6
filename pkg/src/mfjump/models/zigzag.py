"""Piecewise-linear sampler whose directions flip against the potential.

Each coordinate is ``(position, direction)`` with direction labels
``+1``/``-1``.  The base dynamics flips at the single-site rate
``(direction * ui'(z) - theta_bound)_+`` (simulated by local thinning along
the linear flight); the interacting residual covers the remainder
``(direction * dU_i)_+`` of the full flip intensity, where ``dU_i`` adds the
mean interaction gradient.  The residual stays within ``2 * theta_bound``
whenever the interaction gradient is bounded by ``theta_bound``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

from ..metrics import LyapunovFn
from ..particles import SystemSpec
from ._profiles import smooth_abs, smooth_indicator

__all__ = ["ZigZagBundle", "ZigZagParams", "zigzag"]

_CHUNK = 0.5


@dataclasses.dataclass(frozen=True)
class ZigZagParams:
    """Parameters of the directional-flip sampler.

    Attributes:
        n_particles: Number of coordinates.
        ui: Single-site potential.
        ui_prime: Its derivative.
        w1: Optional interaction gradient ``w1(z_i, z_j)``, bounded in
            absolute value by ``theta_bound``; ``None`` disables interaction.
        theta_bound: Uniform bound on the interaction gradient.
        ui_prime_lipschitz: Lipschitz constant of ``ui_prime``, used for the
            local thinning ceiling of the base flips.
        rho: Confinement rate entering the coordinate Lyapunov weight.
    """

    n_particles: int
    ui: Callable
    ui_prime: Callable
    w1: Optional[Callable]
    theta_bound: float
    ui_prime_lipschitz: float = 1.0
    rho: float = 1.0


@dataclasses.dataclass(frozen=True)
class ZigZagBundle:
    """A directional-flip system with its coordinate Lyapunov weight."""

    system: SystemSpec
    coordinate_lyapunov: LyapunovFn


def zigzag(params: ZigZagParams) -> ZigZagBundle:
    """Build the directional-flip sampler for the given parameters."""
    n = int(params.n_particles)
    theta = float(params.theta_bound)
    lip = float(params.ui_prime_lipschitz)
    rho = float(params.rho)
    if n < 1:
        raise ValueError(f"n_particles must be at least 1, got {n}")
    if theta <= 0.0:
        raise ValueError(f"theta_bound must be positive, got {theta}")
    if lip < 0.0:
        raise ValueError(f"ui_prime_lipschitz must be nonnegative, got {lip}")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    ui_prime = params.ui_prime
    w1 = params.w1

    def base_rate(z: float, v) -> float:
        return max(0.0, v * ui_prime(z) - theta)

    def base_flow(i, coord, dt, stream):
        z, v = coord
        remaining = dt
        while remaining > 1e-15:
            chunk = min(remaining, _CHUNK)
            ceiling = base_rate(z, v) + lip * chunk
            if ceiling <= 0.0:
                z += v * chunk
                remaining -= chunk
                continue
            gap = stream.exponential(1.0 / ceiling)
            if gap >= chunk:
                z += v * chunk
                remaining -= chunk
                continue
            z += v * gap
            remaining -= gap
            if stream.random() * ceiling < base_rate(z, v):
                v = -v
        return (z, v)

    def full_gradient(i: int, config) -> float:
        z = config[i][0]
        grad = ui_prime(z)
        if w1 is not None:
            grad += sum(w1(z, other[0]) for other in config) / n
        return grad

    def residual_rate(i, config) -> float:
        z, v = config[i]
        lam = max(0.0, v * full_gradient(i, config)) - base_rate(z, v)
        return max(0.0, lam)

    def kernel(i, config, u):
        z, v = config[i]
        return (z, -v)

    def kernel_atoms(i, config):
        z, v = config[i]
        return (((z, -v), 1.0),)

    system = SystemSpec(
        n_particles=n,
        base_flow=base_flow,
        rate=residual_rate,
        kernel=kernel,
        rate_ceiling=2.0 * theta if w1 is not None else theta,
        coordinate_layout=("real", "label"),
        coordinate_box=((-6.0, 6.0), (-1, 1)),
        name="zigzag",
        kernel_atoms=kernel_atoms,
    )

    def lyapunov_value(coord) -> float:
        z, v = coord
        return math.exp(rho * smooth_abs(z) / 2.0) * (
            1.0 + smooth_indicator(z * v)
        )

    return ZigZagBundle(
        system=system,
        coordinate_lyapunov=LyapunovFn(fn=lyapunov_value, name="zigzag-weight"),
    )
