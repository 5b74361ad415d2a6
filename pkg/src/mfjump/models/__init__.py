"""Ready-made jump models and particle systems.

Each model module exposes a frozen parameter dataclass and a builder that
returns a bundle (model or system plus any companion objects such as
Lyapunov weights or closed-form constants).  ``MODEL_REGISTRY`` maps short
names to builders that accept a plain parameter dictionary, which is the
entry point used by the command-line interface.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Mapping

from .mh import MhBundle, MhConstants, MhParams, mh_granular
from .run_tumble import (
    RunTumbleBundle,
    RunTumbleConstants,
    RunTumbleParams,
    run_tumble,
)
from .selection import SelectionBundle, SelectionParams, selection_mutation
from .tcp import TcpBundle, TcpConstants, TcpParams, tcp
from .zigzag import ZigZagBundle, ZigZagParams, zigzag

__all__ = [
    "MODEL_REGISTRY",
    "MhBundle",
    "MhConstants",
    "MhParams",
    "RunTumbleBundle",
    "RunTumbleConstants",
    "RunTumbleParams",
    "SelectionBundle",
    "SelectionParams",
    "TcpBundle",
    "TcpConstants",
    "TcpParams",
    "ZigZagBundle",
    "ZigZagParams",
    "build_model",
    "mh_granular",
    "run_tumble",
    "selection_mutation",
    "tcp",
    "zigzag",
]


def _run_tumble_from_params(params: Mapping) -> RunTumbleBundle:
    return run_tumble(RunTumbleParams(**params))


def _tcp_from_params(params: Mapping) -> TcpBundle:
    return tcp(TcpParams(**params))


def _selection_from_params(params: Mapping) -> SelectionBundle:
    return selection_mutation(SelectionParams(**params))


def _mh_from_params(params: Mapping) -> MhBundle:
    """Build the energy-based sampler with a cosine potential on [0, 1)."""
    opts = dict(params)
    beta = float(opts.pop("beta", 1.0))
    w_amp = float(opts.pop("w_amp", 0.25))
    lam_bar = float(opts.pop("lam_bar", 1.0))
    n_sites = int(opts.pop("n_sites", 8))
    if opts:
        raise ValueError(f"unknown mh parameters: {sorted(opts)}")

    def u(x: float) -> float:
        return math.cos(2.0 * math.pi * x)

    w = None
    if w_amp != 0.0:

        def w(x: float, y: float) -> float:
            return w_amp * math.cos(2.0 * math.pi * (x - y))

    return mh_granular(
        MhParams(
            u=u,
            w=w,
            beta=beta,
            lam_bar=lam_bar,
            n_sites=n_sites,
            osc_u=2.0,
            osc_w=2.0 * abs(w_amp),
        )
    )


def _zigzag_from_params(params: Mapping) -> ZigZagBundle:
    """Build the directional-flip sampler with a quadratic well."""
    opts = dict(params)
    n_particles = int(opts.pop("n_particles"))
    theta_bound = float(opts.pop("theta_bound", 0.5))
    w_amp = float(opts.pop("w_amp", 0.25))
    if opts:
        raise ValueError(f"unknown zigzag parameters: {sorted(opts)}")
    if abs(w_amp) > theta_bound:
        raise ValueError(
            f"interaction amplitude {w_amp} exceeds theta_bound {theta_bound}"
        )

    def ui(z: float) -> float:
        return 0.5 * z * z

    def ui_prime(z: float) -> float:
        return z

    w1 = None
    if w_amp != 0.0:

        def w1(z: float, other: float) -> float:
            return w_amp * math.sin(z - other)

    return zigzag(
        ZigZagParams(
            n_particles=n_particles,
            ui=ui,
            ui_prime=ui_prime,
            w1=w1,
            theta_bound=theta_bound,
        )
    )


MODEL_REGISTRY: Dict[str, Callable] = {
    "run-tumble": _run_tumble_from_params,
    "tcp": _tcp_from_params,
    "mh": _mh_from_params,
    "zigzag": _zigzag_from_params,
    "selection": _selection_from_params,
}


def build_model(name: str, params: Mapping):
    """Build a registered model bundle from a parameter dictionary.

    Raises:
        KeyError: If ``name`` is not registered.
    """
    return MODEL_REGISTRY[name](dict(params))
