"""Propagation of block states through piecewise pulse sequences.

Static segments are propagated exactly through a Hermitian eigendecomposition.
Segments with an explicitly time-dependent drive (the two-tone ground-Rydberg
pulse) use a fourth-order Magnus integrator on a fine uniform grid; the drive
phase is referenced to the absolute time since the start of the sequence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .core import HamiltonianMatrix, LabeledBasis, StateVector, label_to_str

DEFAULT_TRAJECTORY_STEPS = 2000
DEFAULT_MAGNUS_STEPS = 1000


class BasisMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TwoToneEnvelope:
    """Complex drive ``amplitude * (1 + exp(i * sign * 2 * delta * t))``."""

    amplitude: complex
    delta: float
    sign: int = 1

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * (1.0 + np.exp(1j * self.sign * 2.0 * self.delta * t))


@dataclass(frozen=True)
class ConstantEnvelope:
    amplitude: complex

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), self.amplitude, dtype=complex)


@dataclass(frozen=True)
class Drive:
    """Time-dependent term ``f(t) K + conj(f(t)) K^dagger``.

    ``coupling`` holds ``K``: the pattern of matrix elements multiplied by the
    envelope value (typically ``1/2`` at each Rydberg-row, partner-column slot).
    """

    coupling: np.ndarray = field(repr=False)
    envelope: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PulseSegment:
    """One laser pulse of fixed duration.

    Parameters
    ----------
    hamiltonian : HamiltonianMatrix
        Static part of the Hamiltonian.
    duration : float
        Pulse length in us, strictly positive.
    label : str
    drives : tuple of Drive
        Optional explicitly time-dependent terms.
    magnus_steps : int
        Integration steps used for driven segments.
    """

    hamiltonian: HamiltonianMatrix
    duration: float
    label: str = ""
    drives: tuple[Drive, ...] = ()
    magnus_steps: int = DEFAULT_MAGNUS_STEPS

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")

    @property
    def basis(self) -> LabeledBasis:
        return self.hamiltonian.basis

    @property
    def is_driven(self) -> bool:
        return bool(self.drives)

    def matrices_at(self, times: np.ndarray) -> np.ndarray:
        """Full Hamiltonian evaluated at absolute times, shape ``(n, d, d)``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        h = np.broadcast_to(self.hamiltonian.entries, (times.size,) + self.hamiltonian.entries.shape)
        h = np.array(h)
        for drive in self.drives:
            f = drive.envelope(times)[:, None, None]
            k = drive.coupling[None]
            h += f * k + np.conj(f) * np.conj(np.swapaxes(k, -1, -2))
        return h


@dataclass(frozen=True)
class FrameShift:
    """Instantaneous diagonal phase ``exp(i * angle * weights)`` between pulses."""

    weights: np.ndarray = field(repr=False)
    angle: float
    label: str = "frame"

    def apply(self, state: StateVector) -> StateVector:
        if len(self.weights) != state.basis.dim:
            raise BasisMismatchError("frame weights do not match the basis")
        return StateVector(state.basis, state.amplitudes * np.exp(1j * self.angle * self.weights))


Step = Union[PulseSegment, FrameShift]


@dataclass(frozen=True)
class Trajectory:
    """Sampled evolution.

    ``times`` is non-decreasing; a frame shift repeats the boundary time with
    the phase-shifted state. ``segment_boundaries[k]`` and
    ``segment_boundaries[k+1]`` delimit the samples of pulse ``k``.
    """

    basis: LabeledBasis
    times: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    segment_boundaries: tuple[int, ...]
    segment_labels: tuple[str, ...] = ()

    @property
    def states(self) -> list[StateVector]:
        return [StateVector(self.basis, a) for a in self.amplitudes]

    @property
    def final(self) -> StateVector:
        return StateVector(self.basis, self.amplitudes[-1])

    @property
    def initial(self) -> StateVector:
        return StateVector(self.basis, self.amplitudes[0])

    def segment(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.segment_boundaries[k], self.segment_boundaries[k + 1]
        return self.times[lo:hi], self.amplitudes[lo:hi]

    def to_csv(self, path: str | Path, target_label: str | None = None) -> None:
        """Write ``time_us``, populations per label and the phase of one label."""
        labels = self.basis.label_strings()
        target = target_label or label_to_str(self.basis.computational_label)
        col = labels.index(target)
        pops = np.abs(self.amplitudes) ** 2
        phase = np.angle(self.amplitudes[:, col])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_us"] + [f"pop[{lab}]" for lab in labels] + [f"phase[{target}]"])
            for t, p, ph in zip(self.times, pops, phase):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in p] + [repr(float(ph))])


def _check_basis(state: StateVector, basis: LabeledBasis) -> None:
    if state.basis != basis:
        raise BasisMismatchError(
            f"state basis {state.basis.block}/{state.basis.channel} does not match "
            f"segment basis {basis.block}/{basis.channel}"
        )


def _eig_evolve(h: np.ndarray, psi: np.ndarray, times: np.ndarray) -> np.ndarray:
    """States ``exp(-i h t) psi`` for every ``t`` in ``times``, shape ``(n, d)``."""
    w, v = np.linalg.eigh(h)
    c = v.conj().T @ psi
    phases = np.exp(-1j * np.outer(times, w))
    return (phases * c[None, :]) @ v.T


def _magnus_propagators(segment: PulseSegment, t0: float, t_start: float, h: float, n: int) -> np.ndarray:
    """One-step propagators of the fourth-order Magnus scheme, shape ``(n, d, d)``."""
    c = math.sqrt(3.0) / 6.0
    starts = t0 + t_start + h * np.arange(n)
    h1 = segment.matrices_at(starts + (0.5 - c) * h)
    h2 = segment.matrices_at(starts + (0.5 + c) * h)
    comm = h2 @ h1 - h1 @ h2
    h_eff = 0.5 * (h1 + h2) - 1j * (math.sqrt(3.0) * h / 12.0) * comm
    # h_eff is Hermitian up to rounding; symmetrize before the batched eigh
    h_eff = 0.5 * (h_eff + np.conj(np.swapaxes(h_eff, -1, -2)))
    w, v = np.linalg.eigh(h_eff)
    return (v * np.exp(-1j * w * h)[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def _driven_evolve(
    segment: PulseSegment, psi: np.ndarray, t0: float, duration: float, n_steps: int
) -> np.ndarray:
    """Apply ``n_steps`` Magnus steps; return the states at every step boundary."""
    h = duration / n_steps
    props = _magnus_propagators(segment, t0, 0.0, h, n_steps)
    out = np.empty((n_steps + 1, psi.size), dtype=complex)
    out[0] = psi
    for k in range(n_steps):
        out[k + 1] = props[k] @ out[k]
    return out


def propagate(
    state: StateVector,
    segment: PulseSegment,
    t0: float = 0.0,
    duration: float | None = None,
) -> StateVector:
    """Evolve ``state`` through one segment.

    Parameters
    ----------
    state : StateVector
    segment : PulseSegment
    t0 : float
        Absolute start time, used only by time-dependent drives.
    duration : float, optional
        Override of the segment length; negative values run the evolution
        backwards (static segments only).
    """
    _check_basis(state, segment.basis)
    t = segment.duration if duration is None else duration
    if not segment.is_driven:
        return StateVector(state.basis, _eig_evolve(segment.hamiltonian.entries, state.amplitudes, np.array([t]))[0])
    if t < 0:
        raise ValueError("backward evolution is only supported for static segments")
    final = _driven_evolve(segment, state.amplitudes, t0, t, segment.magnus_steps)[-1]
    return StateVector(state.basis, final)


def evolve_steps(initial: StateVector, steps: Sequence[Step], t0: float = 0.0) -> StateVector:
    """Final state after a sequence of pulses and frame shifts."""
    state = initial
    t = t0
    for step in steps:
        if isinstance(step, FrameShift):
            state = step.apply(state)
            continue
        state = propagate(state, step, t0=t)
        t += step.duration
    return state


def run_sequence(
    initial: StateVector,
    segments: Sequence[Step],
    n_steps_per_segment: int = DEFAULT_TRAJECTORY_STEPS,
    t0: float = 0.0,
) -> Trajectory:
    """Sample the evolution on a uniform grid of ``n_steps_per_segment`` points per pulse.

    Frame shifts are applied between pulses; the first sample of each pulse
    is the (shifted) state at its start time.
    """
    if n_steps_per_segment < 2:
        raise ValueError("n_steps_per_segment must be at least 2")
    psi = initial.amplitudes
    t = t0
    times: list[np.ndarray] = []
    amps: list[np.ndarray] = []
    bounds = [0]
    labels = []
    count = 0
    n = n_steps_per_segment
    for step in segments:
        if isinstance(step, FrameShift):
            psi = step.apply(StateVector(initial.basis, psi)).amplitudes
            continue
        _check_basis(initial, step.basis)
        local = np.linspace(0.0, step.duration, n)
        if step.is_driven:
            sub = max(1, math.ceil(step.magnus_steps / (n - 1)))
            block = _driven_evolve(step, psi, t, step.duration, (n - 1) * sub)[::sub]
        else:
            block = _eig_evolve(step.hamiltonian.entries, psi, local)
        times.append(t + local)
        amps.append(block)
        count += n
        bounds.append(count)
        labels.append(step.label)
        psi = block[-1]
        t += step.duration
    if not times:
        return Trajectory(initial.basis, np.array([t0]), initial.amplitudes[None, :].copy(), (0, 1), ())
    return Trajectory(
        initial.basis,
        np.concatenate(times),
        np.concatenate(amps),
        tuple(bounds),
        tuple(labels),
    )


def rydberg_population(state: StateVector) -> float:
    """Expected number of Rydberg-excited atoms."""
    return float(np.abs(state.amplitudes) ** 2 @ state.basis.rydberg_counts())


def rydberg_population_curve(traj: Trajectory) -> np.ndarray:
    return (np.abs(traj.amplitudes) ** 2) @ traj.basis.rydberg_counts()


def rydberg_time(traj: Trajectory) -> float:
    """Trapezoidal time integral of the expected Rydberg excitation number (us)."""
    return float(np.trapezoid(rydberg_population_curve(traj), traj.times))


def segment_rydberg_times(traj: Trajectory) -> tuple[float, ...]:
    """Rydberg time accumulated within each pulse."""
    curve = rydberg_population_curve(traj)
    out = []
    for k in range(len(traj.segment_boundaries) - 1):
        lo, hi = traj.segment_boundaries[k], traj.segment_boundaries[k + 1]
        out.append(float(np.trapezoid(curve[lo:hi], traj.times[lo:hi])))
    return tuple(out)


def expectation_energy(hamiltonian: HamiltonianMatrix, amplitudes: np.ndarray) -> np.ndarray:
    """``<psi|H|psi>`` for each row of ``amplitudes``."""
    a = np.atleast_2d(amplitudes)
    return np.real(np.einsum("ni,ij,nj->n", a.conj(), hamiltonian.entries, a))
