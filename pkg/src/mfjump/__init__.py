"""Simulation and coupling toolkit for measure-driven jump processes.

The package covers four layers:

* ``mfjump.engine`` — exact thinning simulation of a single jump process
  whose rate and kernel may depend on an external measure flow, plus a
  fixed-point solver that makes the flow self-consistent.
* ``mfjump.particles`` — interacting N-coordinate systems whose coordinates
  jump against the empirical measure of the full configuration.
* ``mfjump.coupling`` — couplings of two runs (merge/split for
  measure-driven pairs, a split-counting coupling for particle systems, and
  couplers for the in-between base motion) together with overlap
  decompositions of discrete measures.
* ``mfjump.certificates`` — closed-form contraction certificates that turn
  model constants into explicit distance-decay rates.

``mfjump.metrics`` supplies the shared distances, Lyapunov weights, and
Monte-Carlo bound estimators; ``mfjump.models`` ships ready-made example
models; ``mfjump.cli`` exposes everything as the ``mfjump`` command.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
