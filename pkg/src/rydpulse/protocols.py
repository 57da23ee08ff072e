"""Pulse sequences for the controlled-phase gates and the entangled-state protocols.

Four protocols are provided:

``gate3``
    Three global clock-Rydberg pulses realizing a controlled phase on the
    nuclear spins of two atoms.
``gate2``
    Two pulses with a Rydberg Stark shift between them.
``sbs``
    Two clock-Rydberg pulses followed by one ground-Rydberg pulse, producing
    the two-atom electron/nuclear Bell-pair state.
``triangle``
    The three-atom analogue producing an electronic W state paired with a
    nuclear GHZ state, with a standard and a fast parameter set.

Each protocol is simulated per conserved input block. The ground-Rydberg
pulse is driven by the two-tone Rabi frequency
``omega_eff * (1 + exp(+-2i delta t))`` with ``t`` measured from the start of
the sequence; ``third_pulse="static"`` keeps only the resonant tone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    THREE_ATOM_CLASSES,
    TWO_ATOM_CLASSES,
    HamiltonianMatrix,
    LabeledBasis,
    StateVector,
    build_basis,
    rydberg_count,
    rydberg_hamiltonian,
    rydberg_imbalance,
    wrap_angle,
)
from .evolve import (
    DEFAULT_MAGNUS_STEPS,
    DEFAULT_TRAJECTORY_STEPS,
    ConstantEnvelope,
    Drive,
    FrameShift,
    PulseSegment,
    Step,
    Trajectory,
    TwoToneEnvelope,
    evolve_steps,
    rydberg_time,
    run_sequence,
    segment_rydberg_times,
)

PROTOCOLS = ("gate3", "gate2", "sbs", "triangle", "triangle_fast")

# Rabi frequencies in units of delta, durations in units of pi/delta unless noted
GATE3_OMEGA1 = 1.6088
GATE3_OMEGA2 = 0.5932 * np.exp(3j * np.pi / 4)
SBS_OMEGA = 1.608
SBS_ETA = -0.4606
SBS_OMEGA_EFF = 0.7064
SBS_T3 = 1.688
TRIANGLE_OMEGA = 1.976
TRIANGLE_ETA = -0.3735
TRIANGLE_T1_OMEGA = 5.933  # in units of pi/|omega|
TRIANGLE_T2_OMEGA = 1.902  # in units of pi/|omega|
TRIANGLE_OMEGA_EFF = 0.6072
TRIANGLE_T3 = 1.789
FAST_OMEGA = 2.2
FAST_OMEGA2 = 1.92
FAST_OMEGA_EFF = 1.737
FAST_DURATIONS = (0.206, 2.36, 1.421)


def detuned_period(omega: complex, delta: float, weight: float) -> float:
    """Return time ``2 pi / sqrt(delta^2 + weight |omega|^2)`` of a detuned Rabi cycle."""
    return 2.0 * np.pi / math.sqrt(delta**2 + weight * abs(omega) ** 2)


# --------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class GateParams:
    """Parameters of the two controlled-phase gates.

    Parameters
    ----------
    omega1 : complex
        Rabi frequency of the first pulse (rad/us).
    ratio_omega2 : complex
        Second-pulse Rabi frequency divided by ``delta`` (three-pulse gate
        only; the two-pulse gate derives its second pulse from ``beta``).
    beta : float
        Commanded controlled phase.
    delta, v : float
        Rydberg half splitting and pair interaction (rad/us).
    stark_minus, stark_plus : float
        Stark shifts of ``r-`` and ``r+`` during the second pulse of the
        two-pulse gate; they must differ by ``4 delta``.
    """

    omega1: complex
    ratio_omega2: complex = GATE3_OMEGA2
    beta: float = -np.pi
    delta: float = 1.0
    v: float = math.inf
    stark_minus: float | None = None
    stark_plus: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.omega1) <= 0:
            raise ValueError("omega1 must be non-zero")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.stark_minus is not None and abs(
            self.stark_minus - self.stark_plus - 4.0 * self.delta
        ) > 1e-9 * max(1.0, abs(self.delta)):
            raise ValueError("Stark shifts must satisfy stark_minus - stark_plus = 4 delta")

    @classmethod
    def gate3(cls, delta: float, v: float, beta: float = -np.pi, **kw) -> "GateParams":
        kw.setdefault("omega1", GATE3_OMEGA1 * delta)
        return cls(beta=beta, delta=delta, v=v, **kw)

    @classmethod
    def gate2(cls, delta: float, v: float, beta: float = np.pi, **kw) -> "GateParams":
        kw.setdefault("omega1", GATE3_OMEGA1 * delta)
        kw.setdefault("stark_plus", 0.0)
        kw.setdefault("stark_minus", kw["stark_plus"] + 4.0 * delta)
        return cls(beta=beta, delta=delta, v=v, **kw)


@dataclass(frozen=True)
class ClassResult:
    """Outcome for one conserved input block."""

    block: str
    amplitude: complex
    final_state: StateVector = field(repr=False)
    t_ryd: float = float("nan")
    segment_t_ryd: tuple[float, ...] = ()

    @property
    def population(self) -> float:
        return float(abs(self.amplitude) ** 2)

    @property
    def phase(self) -> float:
        return wrap_angle(np.angle(self.amplitude))

    @property
    def leakage(self) -> float:
        return 1.0 - self.population


@dataclass(frozen=True)
class ProtocolReport:
    """Per-block results plus protocol-level timing and derived angles."""

    protocol: str
    classes: dict[str, ClassResult]
    durations: tuple[float, ...]
    derived_angles: dict[str, float]
    parameters: dict[str, float]
    t_ryd: float = float("nan")
    segment_t_ryd: tuple[float, ...] = ()
    trajectories: dict[str, Trajectory] = field(default_factory=dict, repr=False)

    @property
    def total_duration(self) -> float:
        return float(sum(self.durations))

    def phases(self) -> dict[str, float]:
        return {k: c.phase for k, c in self.classes.items()}

    def populations(self) -> dict[str, float]:
        return {k: c.population for k, c in self.classes.items()}

    def segment_rydberg_fractions(self) -> tuple[float, ...]:
        """Mean Rydberg excitation per pulse: accumulated time over pulse length."""
        return tuple(t / d for t, d in zip(self.segment_t_ryd, self.durations))

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "units": {
                "frequency": "MHz (angular value / 2pi)",
                "time": "us",
                "angle": "rad, wrapped to (-pi, pi]",
            },
            "parameters": dict(self.parameters),
            "durations_us": list(self.durations),
            "total_duration_us": self.total_duration,
            "t_ryd_us": self.t_ryd,
            "segment_t_ryd_us": list(self.segment_t_ryd),
            "classes": {
                k: {
                    "population": c.population,
                    "phase": c.phase,
                    "leakage": c.leakage,
                    "amplitude": [float(c.amplitude.real), float(c.amplitude.imag)],
                    "t_ryd_us": c.t_ryd,
                }
                for k, c in self.classes.items()
            },
            "derived_angles": dict(self.derived_angles),
        }


# --------------------------------------------------------------------------
# building blocks


def _clock_segment(basis: LabeledBasis, omega: complex, delta: float, v: float, duration: float, label: str) -> PulseSegment:
    h = rydberg_hamiltonian(basis, clock_rabi={"up": omega, "dn": omega}, delta=delta, v=v)
    return PulseSegment(h, duration, label)


def _ground_coupling(basis: LabeledBasis, spin: str) -> np.ndarray:
    """Matrix with ``1/2`` at each (Rydberg label, ground partner) slot."""
    h = rydberg_hamiltonian(basis, ground_rabi={"up": 1.0, "dn": 1.0}).entries
    counts = np.array([rydberg_count(lab) for lab in basis.labels])
    mask = counts[:, None] > counts[None, :]
    k = np.where(mask, h, 0.0)
    spins = np.array([any(a.spin == spin and a.is_rydberg for a in lab) for lab in basis.labels])
    return k * spins[:, None]


def _ground_segment(
    basis: LabeledBasis,
    omega_eff: complex,
    delta: float,
    v: float,
    duration: float,
    mode: str,
    magnus_steps: int,
) -> PulseSegment:
    """Third pulse in the frame of the bare Rydberg energies (no detuning)."""
    static = rydberg_hamiltonian(basis, v=v)
    if basis.channel != "union" or len(set(basis.block)) != 1:
        return PulseSegment(static, duration, "pulse-3")
    up = basis.block[0] == "u"
    spin = "up" if up else "dn"
    amp = omega_eff if up else -omega_eff
    if mode == "static":
        env = ConstantEnvelope(amp)
    elif mode == "two_tone":
        env = TwoToneEnvelope(amp, delta, 1 if up else -1)
    else:
        raise ValueError(f"unknown third-pulse mode {mode!r}")
    drive = Drive(_ground_coupling(basis, spin), env)
    if mode == "static":
        h = static.entries + drive.coupling * amp + np.conj(drive.coupling.T * amp)
        return PulseSegment(HamiltonianMatrix(basis, h), duration, "pulse-3")
    return PulseSegment(static, duration, "pulse-3", drives=(drive,), magnus_steps=magnus_steps)


def _frame(basis: LabeledBasis, kind: str, angle: float) -> FrameShift:
    if kind == "imbalance":
        w = np.array([rydberg_imbalance(lab) for lab in basis.labels], dtype=float)
    else:
        w = basis.rydberg_counts()
    return FrameShift(w, angle)


def _symmetric_ground(basis: LabeledBasis) -> np.ndarray:
    vec = np.zeros(basis.dim, dtype=complex)
    for i, lab in enumerate(basis.labels):
        if sum(a.electronic == "g" for a in lab) == 1 and rydberg_count(lab) == 0:
            vec[i] = 1.0
    return vec / np.linalg.norm(vec)


def _symmetric_single_rydberg(basis: LabeledBasis) -> np.ndarray:
    vec = np.zeros(basis.dim, dtype=complex)
    for i, lab in enumerate(basis.labels):
        if rydberg_count(lab) == 1 and all(a.electronic != "g" for a in lab):
            vec[i] = 1.0
    return vec / np.linalg.norm(vec)


def _computational(basis: LabeledBasis) -> np.ndarray:
    vec = np.zeros(basis.dim, dtype=complex)
    vec[basis.index(basis.computational_label)] = 1.0
    return vec


def target_vector(protocol: str, basis: LabeledBasis) -> np.ndarray:
    """Designated final target of a block: ground W-type combination or the input label."""
    if protocol in ("sbs", "triangle", "triangle_fast") and len(set(basis.block)) == 1:
        return _symmetric_ground(basis)
    return _computational(basis)


def blocks_for(protocol: str) -> tuple[str, ...]:
    return THREE_ATOM_CLASSES if protocol.startswith("triangle") else TWO_ATOM_CLASSES


def _basis_for(protocol: str, block: str) -> LabeledBasis:
    n = len(block)
    if protocol in ("sbs", "triangle", "triangle_fast") and len(set(block)) == 1:
        return build_basis(n, block, "union")
    return build_basis(n, block, "clock_rydberg")


# --------------------------------------------------------------------------
# sequences


def gate3_durations(p: GateParams) -> tuple[float, float, float]:
    omegas = _gate3_omegas(p)
    return tuple(detuned_period(o, p.delta, 2.0) for o in omegas)  # type: ignore[return-value]


def _gate3_omegas(p: GateParams) -> tuple[complex, complex, complex]:
    return (p.omega1, p.ratio_omega2 * p.delta, p.omega1 * np.exp(1j * p.beta / 2.0))


def gate3_sequence(p: GateParams, block: str = "ud") -> list[PulseSegment]:
    """Three clock-Rydberg pulses on one block."""
    basis = _basis_for("gate3", block)
    return [
        _clock_segment(basis, o, p.delta, p.v, t, f"pulse-{k + 1}")
        for k, (o, t) in enumerate(zip(_gate3_omegas(p), gate3_durations(p)))
    ]


def gate2_kappa(p: GateParams) -> float:
    t1 = detuned_period(p.omega1, p.delta, 2.0)
    return t1 * (p.stark_plus + 2.0 * p.delta)


def gate2_sequence(p: GateParams, block: str = "ud") -> list[Step]:
    """Two equal-length pulses with the Stark frame shift between them."""
    if p.stark_minus is None:
        raise ValueError("two-pulse gate needs stark_minus and stark_plus")
    basis = _basis_for("gate2", block)
    t1 = detuned_period(p.omega1, p.delta, 2.0)
    kappa = gate2_kappa(p)
    omega2 = -np.exp(1j * (p.beta / 2.0 + kappa)) * p.omega1
    return [
        _clock_segment(basis, p.omega1, p.delta, p.v, t1, "pulse-1"),
        _frame(basis, "count", kappa),
        # the new frame flips the sign of the r+/r- detunings
        _clock_segment(basis, omega2, -p.delta, p.v, t1, "pulse-2"),
    ]


@dataclass(frozen=True)
class PreparationParams:
    """Parameters of the state-preparation protocols (rad/us, us)."""

    omega: complex
    eta: float
    omega_eff: complex
    delta: float
    v: float
    t_p1: float
    t_p2: float
    t_p3: float
    omega2: complex | None = None
    third_pulse: str = "two_tone"
    magnus_steps: int = DEFAULT_MAGNUS_STEPS

    @property
    def second_rabi(self) -> complex:
        return self.eta * self.omega if self.omega2 is None else self.omega2

    @property
    def frame_angle(self) -> float:
        return self.delta * (self.t_p1 + self.t_p2)

    @property
    def durations(self) -> tuple[float, float, float]:
        return (self.t_p1, self.t_p2, self.t_p3)


def sbs_params(
    omega_s: complex,
    eta: float,
    omega_eff: complex,
    delta: float,
    v: float,
    t_p3: float | None = None,
    **kw,
) -> PreparationParams:
    t1 = detuned_period(omega_s, delta, 0.5)
    t2 = detuned_period(eta * omega_s, delta, 0.5)
    t3 = SBS_T3 * np.pi / delta if t_p3 is None else t_p3
    return PreparationParams(omega_s, eta, omega_eff, delta, v, t1, t2, t3, **kw)


def triangle_params(
    omega_t: complex,
    eta_t: float,
    omega_eff_t: complex,
    delta: float,
    v: float,
    fast: bool = False,
    t_p1: float | None = None,
    t_p2: float | None = None,
    t_p3: float | None = None,
    **kw,
) -> PreparationParams:
    if fast:
        d1, d2, d3 = (x * np.pi / delta for x in FAST_DURATIONS)
    else:
        d1 = TRIANGLE_T1_OMEGA * np.pi / abs(omega_t)
        d2 = TRIANGLE_T2_OMEGA * np.pi / abs(omega_t)
        d3 = TRIANGLE_T3 * np.pi / delta
    return PreparationParams(
        omega_t,
        eta_t,
        omega_eff_t,
        delta,
        v,
        d1 if t_p1 is None else t_p1,
        d2 if t_p2 is None else t_p2,
        d3 if t_p3 is None else t_p3,
        **kw,
    )


def default_triangle(delta: float, v: float, fast: bool = False, **kw) -> PreparationParams:
    if fast:
        return triangle_params(
            FAST_OMEGA * delta, FAST_OMEGA2 / FAST_OMEGA, FAST_OMEGA_EFF * delta, delta, v, fast=True, **kw
        )
    return triangle_params(TRIANGLE_OMEGA * delta, TRIANGLE_ETA, TRIANGLE_OMEGA_EFF * delta, delta, v, **kw)


def default_sbs(delta: float, v: float, **kw) -> PreparationParams:
    return sbs_params(SBS_OMEGA * delta, SBS_ETA, SBS_OMEGA_EFF * delta, delta, v, **kw)


def preparation_sequence(p: PreparationParams, block: str, protocol: str = "sbs") -> list[Step]:
    """Two clock-Rydberg pulses, the frame shift, then the ground-Rydberg pulse."""
    basis = _basis_for(protocol, block)
    return [
        _clock_segment(basis, p.omega, p.delta, p.v, p.t_p1, "pulse-1"),
        _clock_segment(basis, p.second_rabi, p.delta, p.v, p.t_p2, "pulse-2"),
        _frame(basis, "imbalance", p.frame_angle),
        _ground_segment(basis, p.omega_eff, p.delta, p.v, p.t_p3, p.third_pulse, p.magnus_steps),
    ]


# --------------------------------------------------------------------------
# running


def _run_blocks(
    protocol: str,
    steps_for: Callable[[str], list[Step]],
    trajectories: bool,
    n_steps: int,
    keep_trajectories: bool = False,
) -> tuple[dict[str, ClassResult], float, tuple[float, ...], dict[str, Trajectory]]:
    results: dict[str, ClassResult] = {}
    trajs: dict[str, Trajectory] = {}
    t_ryd = []
    seg = []
    for block in blocks_for(protocol):
        basis = _basis_for(protocol, block)
        steps = steps_for(block)
        initial = StateVector.computational(basis)
        if trajectories:
            traj = run_sequence(initial, steps, n_steps)
            final = traj.final
            tr = rydberg_time(traj)
            st = segment_rydberg_times(traj)
            t_ryd.append(tr)
            seg.append(st)
            if keep_trajectories:
                trajs[block] = traj
        else:
            final = evolve_steps(initial, steps)
            tr, st = float("nan"), ()
        amp = complex(np.vdot(target_vector(protocol, basis), final.amplitudes))
        results[block] = ClassResult(block, amp, final, tr, st)
    if trajectories:
        mean_t = float(np.mean(t_ryd))
        mean_seg = tuple(float(x) for x in np.mean(np.array(seg), axis=0))
    else:
        mean_t, mean_seg = float("nan"), ()
    return results, mean_t, mean_seg, trajs


def _overlap_phase(vec: np.ndarray, state: StateVector) -> float:
    return wrap_angle(np.angle(np.vdot(vec, state.amplitudes)))


def run_gate3(
    p: GateParams,
    trajectories: bool = True,
    n_steps: int = DEFAULT_TRAJECTORY_STEPS,
    keep_trajectories: bool = False,
) -> ProtocolReport:
    """Run the three-pulse gate on all four input blocks."""
    durations = gate3_durations(p)
    classes, t_ryd, seg, trajs = _run_blocks(
        "gate3", lambda b: gate3_sequence(p, b), trajectories, n_steps, keep_trajectories
    )
    ph = {k: c.phase for k, c in classes.items()}
    alpha_p = -ph["uu"]
    alpha_pp = ph["dd"]
    beta_p = -2.0 * ph["ud"]
    combo = alpha_pp - alpha_p + beta_p
    angles = {
        "alpha_prime": alpha_p,
        "alpha_double_prime": alpha_pp,
        "beta_prime": beta_p,
        "phase_combination": combo,
        "deviation_from_minus_pi": wrap_angle(combo + np.pi),
    }
    params = {
        "omega1_mhz": abs(p.omega1) / (2 * np.pi),
        "omega1_over_delta": abs(p.omega1) / p.delta,
        "omega2_over_delta": abs(p.ratio_omega2),
        "omega2_phase": float(np.angle(p.ratio_omega2)),
        "beta": p.beta,
        "delta_mhz": p.delta / (2 * np.pi),
        "v_mhz": p.v / (2 * np.pi),
    }
    return ProtocolReport("gate3", classes, tuple(durations), angles, params, t_ryd, seg, trajs)


def run_gate2(
    p: GateParams,
    trajectories: bool = True,
    n_steps: int = DEFAULT_TRAJECTORY_STEPS,
    keep_trajectories: bool = False,
) -> ProtocolReport:
    """Run the Stark-assisted two-pulse gate on all four input blocks."""
    t1 = detuned_period(p.omega1, p.delta, 2.0)
    classes, t_ryd, seg, trajs = _run_blocks(
        "gate2", lambda b: gate2_sequence(p, b), trajectories, n_steps, keep_trajectories
    )
    ph = {k: c.phase for k, c in classes.items()}
    nu, mu = ph["uu"], ph["ud"]
    angles = {
        "nu": nu,
        "mu": mu,
        "alpha": -nu,
        "kappa": wrap_angle(gate2_kappa(p)),
        "vartheta": np.pi / 4.0 - wrap_angle(nu - mu) / 2.0,
    }
    params = {
        "omega1_mhz": abs(p.omega1) / (2 * np.pi),
        "omega1_over_delta": abs(p.omega1) / p.delta,
        "beta": p.beta,
        "delta_mhz": p.delta / (2 * np.pi),
        "v_mhz": p.v / (2 * np.pi),
        "stark_minus_mhz": p.stark_minus / (2 * np.pi),
        "stark_plus_mhz": p.stark_plus / (2 * np.pi),
    }
    return ProtocolReport("gate2", classes, (t1, t1), angles, params, t_ryd, seg, trajs)


def _preparation_report(
    protocol: str,
    p: PreparationParams,
    trajectories: bool,
    n_steps: int,
    keep_trajectories: bool,
) -> ProtocolReport:
    classes, t_ryd, seg, trajs = _run_blocks(
        protocol,
        lambda b: preparation_sequence(p, b, protocol),
        trajectories,
        n_steps,
        keep_trajectories,
    )
    n = 3 if protocol.startswith("triangle") else 2
    up, dn = "u" * n, "d" * n
    mixed_up = "uud" if n == 3 else "ud"
    mixed_dn = "ddu" if n == 3 else "ud"
    phi = p.frame_angle

    # phase of the symmetric Rydberg superposition after the first two pulses
    basis = _basis_for(protocol, up)
    mid = evolve_steps(StateVector.computational(basis), preparation_sequence(p, up, protocol)[:2])
    alpha = _overlap_phase(_symmetric_single_rydberg(basis), mid)
    basis_m = _basis_for(protocol, mixed_up)
    mid_m = evolve_steps(StateVector.computational(basis_m), preparation_sequence(p, mixed_up, protocol)[:2])
    zeta = _overlap_phase(_computational(basis_m), mid_m)

    ph = {k: c.phase for k, c in classes.items()}
    angles: dict[str, float] = {"frame_angle": phi, "alpha": alpha, "zeta": zeta}
    angles["beta"] = wrap_angle(ph[up] - alpha - phi)
    if n == 2:
        angles.update(
            theta1=ph[up],
            theta2=ph[dn],
            theta3=ph[mixed_up],
            theta1_minus_frame=wrap_angle(ph[up] - phi),
            theta2_plus_frame=wrap_angle(ph[dn] + phi),
        )
    else:
        angles.update(
            vartheta1=ph[up],
            vartheta2=ph[mixed_up],
            vartheta3=ph[mixed_dn],
            vartheta4=ph[dn],
            vartheta1_minus_frame=wrap_angle(ph[up] - phi),
            vartheta4_plus_frame=wrap_angle(ph[dn] + phi),
        )
    params = {
        "omega_mhz": abs(p.omega) / (2 * np.pi),
        "omega_over_delta": float(np.real(p.omega)) / p.delta,
        "second_rabi_over_delta": float(np.real(p.second_rabi)) / p.delta,
        "omega_eff_over_delta": float(np.real(p.omega_eff)) / p.delta,
        "omega_eff_mhz": abs(p.omega_eff) / (2 * np.pi),
        "delta_mhz": p.delta / (2 * np.pi),
        "v_mhz": p.v / (2 * np.pi),
    }
    return ProtocolReport(protocol, classes, p.durations, angles, params, t_ryd, seg, trajs)


def run_sbs(
    omega_s: complex,
    eta: float,
    omega_eff: complex,
    delta: float,
    v: float,
    *,
    t_p3: float | None = None,
    third_pulse: str = "two_tone",
    trajectories: bool = True,
    n_steps: int = DEFAULT_TRAJECTORY_STEPS,
    magnus_steps: int = DEFAULT_MAGNUS_STEPS,
    keep_trajectories: bool = False,
) -> ProtocolReport:
    """Run the two-atom Bell-pair preparation on all four input blocks."""
    p = sbs_params(
        omega_s, eta, omega_eff, delta, v, t_p3=t_p3, third_pulse=third_pulse, magnus_steps=magnus_steps
    )
    return run_preparation("sbs", p, trajectories=trajectories, n_steps=n_steps, keep_trajectories=keep_trajectories)


def run_triangle(
    omega_t: complex,
    eta_t: float,
    omega_eff_t: complex,
    delta: float,
    v: float,
    fast: bool = False,
    *,
    t_p1: float | None = None,
    t_p2: float | None = None,
    t_p3: float | None = None,
    third_pulse: str = "two_tone",
    trajectories: bool = True,
    n_steps: int = DEFAULT_TRAJECTORY_STEPS,
    magnus_steps: int = DEFAULT_MAGNUS_STEPS,
    keep_trajectories: bool = False,
) -> ProtocolReport:
    """Run the three-atom W/GHZ preparation on all eight input blocks."""
    p = triangle_params(
        omega_t,
        eta_t,
        omega_eff_t,
        delta,
        v,
        fast=fast,
        t_p1=t_p1,
        t_p2=t_p2,
        t_p3=t_p3,
        third_pulse=third_pulse,
        magnus_steps=magnus_steps,
    )
    name = "triangle_fast" if fast else "triangle"
    return run_preparation(name, p, trajectories=trajectories, n_steps=n_steps, keep_trajectories=keep_trajectories)


def run_preparation(
    protocol: str,
    p: PreparationParams,
    trajectories: bool = True,
    n_steps: int = DEFAULT_TRAJECTORY_STEPS,
    keep_trajectories: bool = False,
) -> ProtocolReport:
    if protocol not in ("sbs", "triangle", "triangle_fast"):
        raise ValueError(f"{protocol!r} is not a state-preparation protocol")
    return _preparation_report(protocol, p, trajectories, n_steps, keep_trajectories)


# --------------------------------------------------------------------------
# single-atom corrections


def correction_angles(report: ProtocolReport, protocol: str | None = None) -> dict[str, float]:
    """Single-atom phase-gate angles bringing the realized map or state to canonical form.

    Every angle ``a`` for a level ``x`` means the gate ``|x> -> exp(i a) |x>``
    applied to each atom.

    * gates: angles for ``c_up`` and ``c_dn`` turning the diagonal into a CZ
      (``diag{1, 1, 1, -1}``); ``theta`` / ``vartheta`` give the nearby target.
    * ``sbs``: angles on nuclear ``up``/``dn`` and electronic ``c`` removing all
      relative phases of the Bell-pair state.
    * triangle: angles on electronic ``g``/``c`` and nuclear ``dn`` zeroing three
      of the four phases; ``residual`` is the one left on the
      ``ccc x (udd-type)`` branch.
    """
    protocol = protocol or report.protocol
    a = report.derived_angles
    if protocol != report.protocol:
        raise ValueError(f"report is for {report.protocol!r}, not {protocol!r}")
    if protocol == "gate3":
        theta = -wrap_angle(np.pi + a["phase_combination"]) / 4.0
        ap, bp = a["alpha_prime"], a["beta_prime"]
        return {
            "theta": theta,
            "deviation_from_minus_pi": a["deviation_from_minus_pi"],
            "c_up": (ap - theta) / 2.0,
            "c_dn": -(ap - theta) / 2.0 + (bp / 2.0 + theta),
        }
    if protocol == "gate2":
        nu, mu, vt = a["nu"], a["mu"], a["vartheta"]
        return {
            "vartheta": vt,
            "c_up": -(nu + vt) / 2.0,
            "c_dn": (nu - 2.0 * mu + 3.0 * vt) / 2.0,
        }
    if protocol == "sbs":
        t1, t2, t3 = a["theta1"], a["theta2"], a["theta3"]
        return {
            "n_up": (2 * t3 - 3 * t1 - t2) / 4.0,
            "n_dn": (2 * t3 - t1 - 3 * t2) / 4.0,
            "c": (t1 + t2 - 2 * t3) / 2.0,
        }
    if protocol in ("triangle", "triangle_fast"):
        w_up, ccc_up, ccc_dn, w_dn = a["vartheta1"], a["vartheta2"], a["vartheta3"], a["vartheta4"]
        return {
            "g": -(2 * w_dn + 7 * w_up - 6 * ccc_up) / 9.0,
            "c": -(3 * ccc_up + w_up - w_dn) / 9.0,
            "n_dn": -(w_dn - w_up) / 3.0,
            "residual": wrap_angle(ccc_dn - ccc_up + (w_up - w_dn) / 3.0),
        }
    raise ValueError(f"unknown protocol {protocol!r}")


def block_labels(n_atoms: int) -> tuple[str, ...]:
    return TWO_ATOM_CLASSES if n_atoms == 2 else THREE_ATOM_CLASSES
