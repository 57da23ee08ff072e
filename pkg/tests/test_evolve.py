from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydpulse.core import StateVector, build_basis, h_clock_rydberg_2atom
from rydpulse.evolve import (
    BasisMismatchError,
    FrameShift,
    PulseSegment,
    evolve_steps,
    expectation_energy,
    propagate,
    run_sequence,
    rydberg_time,
    segment_rydberg_times,
)
from rydpulse.protocols import default_sbs, default_triangle, preparation_sequence

rabi = st.floats(0.2, 5.0)
detuning = st.floats(0.2, 5.0)


def _random_state(basis, rng):
    a = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return StateVector(basis, a / np.linalg.norm(a))


@given(om=rabi, d=detuning, v=st.floats(0.0, 100.0), t=st.floats(0.01, 20.0))
def test_static_propagation_preserves_norm(om, d, v, t):
    h = h_clock_rydberg_2atom("ud", om, -om, d, v)
    out = propagate(StateVector.computational(h.basis), PulseSegment(h, t))
    assert abs(out.norm() - 1.0) < 1e-10


@pytest.mark.parametrize("protocol,block", [("sbs", "uu"), ("sbs", "ud"), ("triangle", "uuu"), ("triangle", "uud")])
def test_driven_sequences_preserve_norm(protocol, block):
    p = default_sbs(1.0, 40.0) if protocol == "sbs" else default_triangle(1.0, 40.0)
    basis = preparation_sequence(p, block, protocol)[0].basis
    traj = run_sequence(StateVector.computational(basis), preparation_sequence(p, block, protocol), 200)
    norms = np.linalg.norm(traj.amplitudes, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-10


@given(om=rabi, d=detuning, t=st.floats(0.01, 10.0), seed=st.integers(0, 2**16))
def test_backward_evolution_inverts_forward(om, d, t, seed):
    h = h_clock_rydberg_2atom("uu", om * np.exp(0.3j), -om, d, 7.0)
    seg = PulseSegment(h, t)
    psi = _random_state(h.basis, np.random.default_rng(seed))
    back = propagate(propagate(psi, seg), seg, duration=-t)
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-10)


def test_backward_driven_segment_is_rejected():
    p = default_sbs(1.0, 40.0)
    seg = preparation_sequence(p, "uu")[-1]
    with pytest.raises(ValueError):
        propagate(StateVector.computational(seg.basis), seg, duration=-1.0)


def test_energy_is_conserved_within_static_pulse(rng):
    h = h_clock_rydberg_2atom("dd", 1.3, -1.3, 0.8, 5.0)
    traj = run_sequence(_random_state(h.basis, rng), [PulseSegment(h, 12.0)], 500)
    e = expectation_energy(h, traj.amplitudes)
    assert np.ptp(e) < 1e-10


@pytest.mark.parametrize("protocol", ["sbs", "triangle"])
def test_magnus_grid_refinement_converges(protocol):
    make = default_sbs if protocol == "sbs" else default_triangle
    block = "uu" if protocol == "sbs" else "uuu"
    finals = []
    for steps in (1000, 2000):
        p = make(1.0, 2 * math.pi * 260 / 2.0, magnus_steps=steps)
        seq = preparation_sequence(p, block, protocol)
        finals.append(evolve_steps(StateVector.computational(seq[0].basis), seq).amplitudes)
    assert np.max(np.abs(finals[0] - finals[1])) < 1e-6


@given(om=rabi, d=detuning)
def test_first_pulse_matches_two_level_solution(om, d):
    # at infinite interaction the uu block is a two-level system of the
    # clock state and the symmetric single-Rydberg state
    r = math.sqrt(d**2 + 2 * om**2)
    h = h_clock_rydberg_2atom("uu", om, -om, d, math.inf)
    out = propagate(StateVector.computational(h.basis), PulseSegment(h, 2 * math.pi / r))
    expected = np.exp(-1j * math.pi * (1 + d / r))
    assert abs(out.amplitude("c_up c_up") - expected) < 1e-10


def test_frame_shift_applies_diagonal_phase():
    basis = build_basis(2, "uu")
    psi = StateVector(basis, np.ones(4) / 2)
    out = FrameShift(np.array([2.0, 1.0, 1.0, 0.0]), 0.5).apply(psi)
    np.testing.assert_allclose(np.angle(out.amplitudes), [1.0, 0.5, 0.5, 0.0])


def test_basis_mismatch_is_rejected():
    h = h_clock_rydberg_2atom("uu", 1.0, -1.0, 1.0, 1.0)
    other = StateVector.computational(build_basis(2, "ud"))
    with pytest.raises(BasisMismatchError):
        propagate(other, PulseSegment(h, 1.0))
    with pytest.raises(BasisMismatchError):
        FrameShift(np.zeros(3), 1.0).apply(other)


def test_segment_needs_positive_duration():
    h = h_clock_rydberg_2atom("uu", 1.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        PulseSegment(h, 0.0)


def test_trajectory_endpoints_match_direct_propagation():
    h1 = h_clock_rydberg_2atom("ud", 1.0, -1.0, 0.7, 20.0)
    h2 = h_clock_rydberg_2atom("ud", 0.4j, -0.4j, 0.7, 20.0)
    steps = [PulseSegment(h1, 3.0, "a"), FrameShift(np.arange(4.0), 0.3), PulseSegment(h2, 2.0, "b")]
    psi = StateVector.computational(h1.basis)
    traj = run_sequence(psi, steps, 50)
    np.testing.assert_allclose(traj.final.amplitudes, evolve_steps(psi, steps).amplitudes, atol=1e-12)
    assert traj.segment_boundaries == (0, 50, 100)
    assert traj.segment_labels == ("a", "b")
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(5.0)
    assert np.all(np.diff(traj.times) >= 0)


def test_rydberg_time_is_additive_and_bounded():
    h = h_clock_rydberg_2atom("uu", 1.5, -1.5, 1.0, math.inf)
    psi = StateVector.computational(h.basis)
    traj = run_sequence(psi, [PulseSegment(h, 2.0), PulseSegment(h, 1.0)], 400)
    assert sum(segment_rydberg_times(traj)) == pytest.approx(rydberg_time(traj), rel=1e-12)
    assert 0 < rydberg_time(traj) < 3.0


def test_rydberg_time_of_resonant_drive():
    # one atom-like two-level cycle: mean excitation 1/2 over a full period
    h = h_clock_rydberg_2atom("ud", 1.0, 0.0, 1e-12, 0.0)
    psi = StateVector.computational(h.basis)
    traj = run_sequence(psi, [PulseSegment(h, 2 * math.pi)], 4001)
    assert rydberg_time(traj) == pytest.approx(math.pi, rel=1e-6)


def test_trajectory_csv_columns(tmp_path):
    h = h_clock_rydberg_2atom("uu", 1.0, -1.0, 1.0, 5.0)
    traj = run_sequence(StateVector.computational(h.basis), [PulseSegment(h, 1.0)], 11)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "time_us",
        "pop[r+ r+]",
        "pop[r+ c_up]",
        "pop[c_up r+]",
        "pop[c_up c_up]",
        "phase[c_up c_up]",
    ]
    assert len(rows) == 12
    body = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(body[:, 1:5].sum(axis=1), 1.0, atol=1e-12)
