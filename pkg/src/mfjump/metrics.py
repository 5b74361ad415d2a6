"""State distances, histogram comparisons, and coupled-ensemble estimators.

States are flat tuples mixing real coordinates and discrete labels.  Equality
of states is defined up to a tiny quantisation tolerance so that states
reached through different arithmetic paths still compare equal, while any
genuine difference (above ``1e-9`` or so) is preserved.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "BoundEstimate",
    "Binning",
    "LyapunovFn",
    "d_beta",
    "d_v",
    "dbar1",
    "dbar_v",
    "estimate_tv_bound",
    "estimate_vnorm_bound",
    "histogram_tv",
    "make_binning",
    "measure_tv",
    "quantize_state",
    "states_equal",
]

State = tuple

#: Number of decimal digits kept when quantising real coordinates.
_QUANT_DECIMALS = 9


def quantize_state(state: State) -> State:
    """Round real coordinates to a fixed precision; keep labels exact.

    Quantisation is idempotent and collapses float noise far below the
    physical scales of the models, so quantised states can be used as
    dictionary keys.
    """
    out = []
    for c in state:
        if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
            out.append(int(c))
        else:
            q = round(float(c), _QUANT_DECIMALS)
            out.append(0.0 if q == 0.0 else q)  # normalise -0.0
    return tuple(out)


def states_equal(x: State, y: State) -> bool:
    """Whether two states agree up to quantisation."""
    return len(x) == len(y) and quantize_state(x) == quantize_state(y)


# ---------------------------------------------------------------------------
# Lyapunov functions


@dataclasses.dataclass(frozen=True)
class LyapunovFn:
    """A function ``V >= 1`` used to weight state distances.

    Calling the wrapper evaluates the underlying function and checks the
    lower bound, which every weighting function must satisfy for the
    weighted distances below to dominate plain total variation.
    """

    fn: Callable[[State], float]
    name: str

    def __call__(self, state: State) -> float:
        value = float(self.fn(state))
        if value < 1.0:
            raise ValueError(
                f"Lyapunov function {self.name!r} returned {value} < 1 at {state!r}"
            )
        return value


def d_v(x: State, y: State, v: LyapunovFn) -> float:
    """Distance ``(V(x) + V(y)) 1{x != y}``."""
    if states_equal(x, y):
        return 0.0
    return v(x) + v(y)


def d_beta(x: State, y: State, v: LyapunovFn, beta: float) -> float:
    """Distance ``((1 + beta V(x)) + (1 + beta V(y))) 1{x != y}``.

    At ``beta = 0`` this is twice the discrete distance; the ``beta`` weight
    interpolates towards the ``V``-weighted distance.
    """
    if states_equal(x, y):
        return 0.0
    return (1.0 + beta * v(x)) + (1.0 + beta * v(y))


def dbar1(x: Sequence[State], y: Sequence[State]) -> float:
    """Configuration distance: twice the number of mismatched coordinates."""
    return 2.0 * sum(1 for a, b in zip(x, y) if not states_equal(a, b))


def dbar_v(x: Sequence[State], y: Sequence[State], vis: Sequence[LyapunovFn]) -> float:
    """Sum of per-coordinate weighted distances ``d_beta(.,.,V_i, 1)``."""
    return sum(d_beta(a, b, v, 1.0) for a, b, v in zip(x, y, vis))


# ---------------------------------------------------------------------------
# Monte-Carlo bound estimates


@dataclasses.dataclass(frozen=True)
class BoundEstimate:
    """A point estimate with its standard error and sample count."""

    point: float
    se: float
    count: int

    def __post_init__(self) -> None:
        if self.count < 2:
            raise ValueError("a bound estimate needs at least two observations")


def estimate_tv_bound(runs: Iterable, t: float) -> BoundEstimate:
    """Total-variation bound ``2 P(X_t != Y_t)`` from coupled runs.

    Each run must expose ``pair_at(t) -> (x, y)``.
    """
    flags = np.array(
        [0.0 if states_equal(*run.pair_at(t)) else 1.0 for run in runs]
    )
    n = len(flags)
    p = float(flags.mean())
    return BoundEstimate(
        point=2.0 * p,
        se=2.0 * math.sqrt(p * (1.0 - p) / n),
        count=n,
    )


def estimate_vnorm_bound(runs: Iterable, t: float, v: LyapunovFn) -> BoundEstimate:
    """Weighted-norm bound ``E[(V(X_t)+V(Y_t)) 1{X_t != Y_t}]`` from coupled runs."""
    values = np.array([d_v(*run.pair_at(t), v) for run in runs])
    n = len(values)
    return BoundEstimate(
        point=float(values.mean()),
        se=float(values.std(ddof=1) / math.sqrt(n)),
        count=n,
    )


# ---------------------------------------------------------------------------
# Histogram total variation


@dataclasses.dataclass(frozen=True)
class Binning:
    """Cell structure for empirical histograms over mixed real/label states.

    Real coordinates are cut into ``bins`` equal intervals over their box
    (out-of-box values are clipped into the boundary cells); label
    coordinates are kept as exact categories.
    """

    layout: tuple
    box: tuple
    bins: int

    def cell(self, state: State) -> tuple:
        key = []
        for value, kind, (lo, hi) in zip(state, self.layout, self.box):
            if kind == "real":
                width = (hi - lo) / self.bins
                idx = int((float(value) - lo) / width)
                key.append(min(max(idx, 0), self.bins - 1))
            else:
                key.append(quantize_state((value,))[0])
        return tuple(key)


def make_binning(layout: tuple, box: tuple, bins: int) -> Binning:
    """Binning with ``bins`` cells per real coordinate over the given box."""
    if bins < 1:
        raise ValueError("bins must be a positive integer")
    if len(layout) != len(box):
        raise ValueError("layout and box must have the same length")
    return Binning(layout=tuple(layout), box=tuple(tuple(b) for b in box), bins=bins)


def _frequencies(samples: Sequence[State], binning: Binning) -> dict:
    counts: dict = {}
    for s in samples:
        key = binning.cell(s)
        counts[key] = counts.get(key, 0) + 1
    total = len(samples)
    return {k: c / total for k, c in counts.items()}


def histogram_tv(
    samples_a: Sequence[State], samples_b: Sequence[State], binning: Binning
) -> float:
    """Total-variation distance between binned empirical distributions.

    Returns a value in ``[0, 2]`` (total mass of the positive and negative
    parts of the signed difference).
    """
    fa = _frequencies(samples_a, binning)
    fb = _frequencies(samples_b, binning)
    keys = set(fa) | set(fb)
    return float(sum(abs(fa.get(k, 0.0) - fb.get(k, 0.0)) for k in keys))


def measure_tv(m1, m2) -> float:
    """Total variation between two discrete measures exposing ``.atoms``."""
    w1: dict = {}
    for s, w in m1.atoms:
        k = quantize_state(s)
        w1[k] = w1.get(k, 0.0) + w
    w2: dict = {}
    for s, w in m2.atoms:
        k = quantize_state(s)
        w2[k] = w2.get(k, 0.0) + w
    keys = set(w1) | set(w2)
    return float(sum(abs(w1.get(k, 0.0) - w2.get(k, 0.0)) for k in keys))
