"""Simulation, calibration and measurement of Rydberg-mediated nuclear-spin entangling protocols.

Modules
-------
core
    Labeled bases, Hamiltonian blocks and rotating-frame phase operators.
evolve
    Propagation through pulse sequences and time-resolved trajectories.
protocols
    The two controlled-phase gates and the two- and three-atom state preparations.
metrics
    Decay and rotation errors and their average over interaction spread.
measure
    Product-space states, light/no-light projections and entanglement classes.
calibrate
    Derivative-free recovery of the pulse parameters.
cli
    The ``rydpulse`` command.

All internal frequencies are angular (rad/us); user-facing values are MHz.
"""

from __future__ import annotations

from .core import (
    AtomLabel,
    HamiltonianMatrix,
    LabeledBasis,
    StateVector,
    SystemConfig,
    build_basis,
    frame_phase_sbs,
    frame_phase_stark,
    h_clock_rydberg_2atom,
    h_clock_rydberg_3atom,
    h_ground_rydberg_2atom,
    h_ground_rydberg_3atom,
)
from .evolve import PulseSegment, Trajectory, propagate, rydberg_time, run_sequence
from .metrics import ErrorBudget, ProtocolSetup, error_budget, sweep
from .protocols import (
    PROTOCOLS,
    GateParams,
    PreparationParams,
    ProtocolReport,
    correction_angles,
    default_sbs,
    default_triangle,
    run_gate2,
    run_gate3,
    run_preparation,
    run_sbs,
    run_triangle,
)

__version__ = "0.1.0"

__all__ = [
    "PROTOCOLS",
    "AtomLabel",
    "ErrorBudget",
    "GateParams",
    "HamiltonianMatrix",
    "LabeledBasis",
    "PreparationParams",
    "ProtocolReport",
    "ProtocolSetup",
    "PulseSegment",
    "StateVector",
    "SystemConfig",
    "Trajectory",
    "build_basis",
    "correction_angles",
    "default_sbs",
    "default_triangle",
    "error_budget",
    "frame_phase_sbs",
    "frame_phase_stark",
    "h_clock_rydberg_2atom",
    "h_clock_rydberg_3atom",
    "h_ground_rydberg_2atom",
    "h_ground_rydberg_3atom",
    "propagate",
    "run_gate2",
    "run_gate3",
    "run_preparation",
    "run_sbs",
    "run_triangle",
    "rydberg_time",
    "run_sequence",
    "sweep",
]
