"""Derivative-free recovery of pulse parameters from their defining conditions.

Every objective works in units of ``delta`` (``delta = 1``) with a very large
pair interaction standing in for perfect blockade. Minimization uses
Nelder-Mead from a given start; if that does not reach the penalty tolerance,
it restarts from the points of an unscrambled Halton sequence inside the seed
box, so repeated runs are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .core import StateVector
from .evolve import evolve_steps
from .protocols import (
    GATE3_OMEGA1,
    GATE3_OMEGA2,
    SBS_ETA,
    SBS_OMEGA,
    SBS_OMEGA_EFF,
    SBS_T3,
    TRIANGLE_ETA,
    TRIANGLE_OMEGA,
    TRIANGLE_OMEGA_EFF,
    TRIANGLE_T1_OMEGA,
    TRIANGLE_T2_OMEGA,
    TRIANGLE_T3,
    GateParams,
    _basis_for,
    _clock_segment,
    _computational,
    _symmetric_ground,
    _symmetric_single_rydberg,
    detuned_period,
    preparation_sequence,
    run_gate3,
    run_preparation,
    sbs_params,
    triangle_params,
)

IDEAL_BLOCKADE = 1e6  # pair interaction in units of delta
DEFAULT_PENALTY_TOL = 1e-8
DEFAULT_RESTARTS = 16
DEFAULT_EVALS_PER_PARAM = 500
CALIBRATION_MAGNUS_STEPS = 400
_DELTA = 1.0

Box = Mapping[str, tuple[float, float]]


class CalibrationError(RuntimeError):
    """Raised when no start reaches the penalty tolerance; carries the best result."""

    def __init__(self, message: str, best: "CalibrationResult") -> None:
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Objective:
    """A non-negative penalty over named free parameters.

    Parameters
    ----------
    name : str
    protocol : str
    free_params : tuple of str
        Parameter names, in the order the penalty expects them.
    penalty : callable
        Maps a parameter vector to a penalty that is zero when the defining
        conditions hold exactly.
    reference : dict
        Reference values, used only to report distances.
    param_tol : float
        Accepted distance from ``reference`` for each parameter.
    penalty_tol : float
        Default tolerance on the penalty.
    """

    name: str
    protocol: str
    free_params: tuple[str, ...]
    penalty: Callable[[np.ndarray], float] = field(repr=False)
    reference: dict[str, float] = field(default_factory=dict)
    param_tol: float = 1e-3
    penalty_tol: float = DEFAULT_PENALTY_TOL

    def __call__(self, x: Sequence[float]) -> float:
        # 1 - |overlap|^2 can round slightly below zero
        return max(0.0, float(self.penalty(np.asarray(x, dtype=float))))

    def values(self, x: Sequence[float]) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.free_params, x)}

    def box_around(self, start: Mapping[str, float], rel: float = 0.3) -> dict[str, tuple[float, float]]:
        """Box of relative half-width ``rel`` around ``start``."""
        out = {}
        for k in self.free_params:
            a, b = start[k] * (1 - rel), start[k] * (1 + rel)
            out[k] = (min(a, b), max(a, b))
        return out


@dataclass(frozen=True)
class CalibrationResult:
    objective: str
    values: dict[str, float]
    penalty: float
    evaluations: int
    starts_tried: int
    converged: bool
    reference: dict[str, float] = field(default_factory=dict)

    def distances(self) -> dict[str, float]:
        return {k: abs(self.values[k] - v) for k, v in self.reference.items() if k in self.values}

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "values": dict(self.values),
            "penalty": self.penalty,
            "evaluations": self.evaluations,
            "starts_tried": self.starts_tried,
            "converged": self.converged,
            "reference": dict(self.reference),
            "distance_from_reference": self.distances(),
        }


# --------------------------------------------------------------------------
# search


def _box_arrays(objective: Objective, box: Box) -> tuple[np.ndarray, np.ndarray]:
    missing = [k for k in objective.free_params if k not in box]
    if missing:
        raise ValueError(f"seed box lacks {missing}")
    lo = np.array([box[k][0] for k in objective.free_params], dtype=float)
    hi = np.array([box[k][1] for k in objective.free_params], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("seed box bounds must satisfy lower < upper")
    return lo, hi


def restart_points(lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """``n`` deterministic points in the box: the centre, then Halton points."""
    pts = [0.5 * (lo + hi)]
    if n > 1:
        unit = qmc.Halton(d=lo.size, scramble=False).random(n)[1:]
        pts.extend(lo + unit * (hi - lo))
    return np.array(pts[:n])


def calibrate(
    objective: Objective,
    seed_box: Box,
    tol: float | None = None,
    start: Mapping[str, float] | None = None,
    restarts: int = DEFAULT_RESTARTS,
    evals_per_param: int = DEFAULT_EVALS_PER_PARAM,
    xatol: float = 1e-9,
    polish: int = 3,
) -> CalibrationResult:
    """Minimize ``objective`` inside ``seed_box`` until its penalty is below ``tol``.

    Parameters
    ----------
    objective : Objective
    seed_box : mapping
        ``name -> (lower, upper)`` bracketing the minimum; the search stays
        inside it and restarts are drawn from it.
    tol : float, optional
        Penalty tolerance; defaults to ``objective.penalty_tol``.
    start : mapping, optional
        First start; the box centre if omitted.
    restarts : int
        Number of box points tried after ``start``.
    evals_per_param : int
        Evaluation budget of one start per free parameter.
    polish : int
        Maximum number of simplex restarts from the best point.

    Raises
    ------
    CalibrationError
        If no start reaches ``tol``; ``.best`` holds the lowest penalty found.
    """
    tol = objective.penalty_tol if tol is None else tol
    lo, hi = _box_arrays(objective, seed_box)
    starts = []
    if start is not None:
        starts.append(np.array([start[k] for k in objective.free_params], dtype=float))
    starts.extend(restart_points(lo, hi, restarts))
    best_x, best_f = None, math.inf
    n_eval = 0
    tried = 0
    budget = evals_per_param * len(objective.free_params)
    bounds = list(zip(lo, hi))
    options = {"xatol": xatol, "fatol": 1e-14, "maxiter": budget, "maxfev": budget}
    for x0 in starts:
        tried += 1
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds, options=options)
        n_eval += int(res.nfev)
        if res.fun < best_f:
            best_x, best_f = np.array(res.x), float(res.fun)
        if best_f < tol:
            break
    # restarting the simplex at the best point frees it from a collapsed shape
    for _ in range(polish):
        res = minimize(objective, best_x, method="Nelder-Mead", bounds=bounds, options=options)
        n_eval += int(res.nfev)
        if not res.fun < best_f - 1e-15:
            break
        best_x, best_f = np.array(res.x), float(res.fun)
    result = CalibrationResult(
        objective.name,
        objective.values(best_x),
        best_f,
        n_eval,
        tried,
        best_f < tol,
        dict(objective.reference),
    )
    if not result.converged:
        raise CalibrationError(
            f"{objective.name}: best penalty {best_f:.3e} after {tried} starts exceeds {tol:.1e}", result
        )
    return result


# --------------------------------------------------------------------------
# penalties


def _start(protocol: str, block: str):
    basis = _basis_for(protocol, block)
    return basis, StateVector.computational(basis)


def _gate3_pulse1_penalty(x: np.ndarray, v: float) -> float:
    """Ground population left in the mixed block after the first gate pulse."""
    omega = x[0] * _DELTA
    basis, s0 = _start("gate3", "ud")
    seg = _clock_segment(basis, omega, _DELTA, v, detuned_period(omega, _DELTA, 2.0), "pulse-1")
    s1 = evolve_steps(s0, [seg])
    return float(abs(np.vdot(_computational(basis), s1.amplitudes)) ** 2)


def _gate3_pulse2_penalty(x: np.ndarray, omega1: float, phase: float, v: float) -> float:
    """Distance of the second-pulse output from the phase-conjugated Rydberg pair."""
    basis, s0 = _start("gate3", "ud")
    o1 = omega1 * _DELTA
    s1 = evolve_steps(s0, [_clock_segment(basis, o1, _DELTA, v, detuned_period(o1, _DELTA, 2.0), "pulse-1")])
    o2 = x[0] * np.exp(1j * phase) * _DELTA
    s2 = evolve_steps(s1, [_clock_segment(basis, o2, _DELTA, v, detuned_period(o2, _DELTA, 2.0), "pulse-2")])
    return float(abs(np.vdot(np.conj(s1.amplitudes), s2.amplitudes) - 1.0) ** 2)


def _two_pulse_states(protocol: str, block: str, o1: complex, o2: complex, t1: float, t2: float, v: float):
    basis, s0 = _start(protocol, block)
    segs = [
        _clock_segment(basis, o1, _DELTA, v, t1, "pulse-1"),
        _clock_segment(basis, o2, _DELTA, v, t2, "pulse-2"),
    ]
    return basis, evolve_steps(s0, segs)


def _excitation_fidelities(protocol: str, o1: float, eta: float, t1: float, t2: float, v: float) -> dict[str, float]:
    """After two pulses: weight in the symmetric Rydberg state (equal spins) or in the input (mixed)."""
    n = 3 if protocol.startswith("triangle") else 2
    out = {}
    blocks = ("u" * n, "d" * n, "ud" if n == 2 else "uud", "du" if n == 2 else "ddu")
    for block in blocks:
        basis, s = _two_pulse_states(protocol, block, o1, eta * o1, t1, t2, v)
        vec = _symmetric_single_rydberg(basis) if len(set(block)) == 1 else _computational(basis)
        out[block] = float(abs(np.vdot(vec, s.amplitudes)) ** 2)
    return out


def _sbs_pair_penalty(x: np.ndarray, v: float) -> float:
    omega, eta = x[0] * _DELTA, x[1]
    t1 = detuned_period(omega, _DELTA, 0.5)
    t2 = detuned_period(eta * omega, _DELTA, 0.5)
    f = _excitation_fidelities("sbs", omega, eta, t1, t2, v)
    return float(sum(1.0 - f[b] for b in ("uu", "dd", "ud")))


def _triangle_pair_fidelities(x: np.ndarray, v: float) -> dict[str, float]:
    omega, eta = x[0] * _DELTA, x[1]
    t1 = x[2] * np.pi / abs(omega)
    t2 = x[3] * np.pi / abs(omega)
    return _excitation_fidelities("triangle", omega, eta, t1, t2, v)


TRIANGLE_MIXED_FLOOR = 0.999
_TRIANGLE_WEIGHT = 1e7


def _triangle_pair_penalty(x: np.ndarray, v: float) -> float:
    """Missing symmetric-Rydberg weight, with the mixed blocks held near the input state."""
    if x[2] <= 0 or x[3] <= 0:
        return 10.0
    f = _triangle_pair_fidelities(x, v)
    miss = 0.5 * ((1.0 - f["uuu"]) + (1.0 - f["ddd"]))
    hinge = sum(max(0.0, TRIANGLE_MIXED_FLOOR - f[b]) ** 2 for b in ("uud", "ddu"))
    return float(miss + _TRIANGLE_WEIGHT * hinge)


def _third_pulse_penalty(
    x: np.ndarray, protocol: str, p1p2: tuple[float, float, float, float], v: float, magnus_steps: int
) -> float:
    """Weight left outside the symmetric ground state when the third pulse acts on an ideal input."""
    omega_eff, t3 = x[0] * _DELTA, x[1] * np.pi / _DELTA
    if t3 <= 0:
        return 10.0
    omega, eta, t1, t2 = p1p2
    if protocol == "sbs":
        p = sbs_params(omega, eta, omega_eff, _DELTA, v, t_p3=t3, magnus_steps=magnus_steps)
    else:
        p = triangle_params(
            omega, eta, omega_eff, _DELTA, v, t_p1=t1, t_p2=t2, t_p3=t3, magnus_steps=magnus_steps
        )
    n = 3 if protocol.startswith("triangle") else 2
    total = 0.0
    for block in ("u" * n, "d" * n):
        basis = _basis_for(protocol, block)
        # ideal output of the first two pulses, so the penalty isolates the third pulse
        psi = StateVector(basis, _symmetric_single_rydberg(basis))
        steps = preparation_sequence(p, block, protocol)[2:]
        final = evolve_steps(psi, steps, t0=p.t_p1 + p.t_p2)
        total += 1.0 - abs(np.vdot(_symmetric_ground(basis), final.amplitudes)) ** 2
    return float(total)


# --------------------------------------------------------------------------
# objective factories


def gate3_pulse1_objective(v: float = IDEAL_BLOCKADE) -> Objective:
    return Objective(
        "gate3_pulse1",
        "gate3",
        ("omega1_over_delta",),
        partial(_gate3_pulse1_penalty, v=v),
        {"omega1_over_delta": GATE3_OMEGA1},
        param_tol=1e-3,
    )


def gate3_pulse2_objective(
    omega1: float = GATE3_OMEGA1, phase: float = float(np.angle(GATE3_OMEGA2)), v: float = IDEAL_BLOCKADE
) -> Objective:
    """Magnitude of the second gate pulse; its phase is a gauge freedom under perfect blockade."""
    return Objective(
        "gate3_pulse2",
        "gate3",
        ("omega2_over_delta",),
        partial(_gate3_pulse2_penalty, omega1=omega1, phase=phase, v=v),
        {"omega2_over_delta": abs(GATE3_OMEGA2)},
        param_tol=1e-3,
    )


def sbs_pair_objective(v: float = IDEAL_BLOCKADE) -> Objective:
    return Objective(
        "sbs_pair",
        "sbs",
        ("omega_over_delta", "eta"),
        partial(_sbs_pair_penalty, v=v),
        {"omega_over_delta": SBS_OMEGA, "eta": SBS_ETA},
        param_tol=2e-3,
    )


def sbs_third_objective(
    omega: float = SBS_OMEGA,
    eta: float = SBS_ETA,
    v: float = IDEAL_BLOCKADE,
    magnus_steps: int = CALIBRATION_MAGNUS_STEPS,
) -> Objective:
    return Objective(
        "sbs_third",
        "sbs",
        ("omega_eff_over_delta", "t_p3"),
        partial(_third_pulse_penalty, protocol="sbs", p1p2=(omega, eta, 0.0, 0.0), v=v, magnus_steps=magnus_steps),
        {"omega_eff_over_delta": SBS_OMEGA_EFF, "t_p3": SBS_T3},
        param_tol=2e-3,
    )


def triangle_pair_objective(v: float = IDEAL_BLOCKADE) -> Objective:
    """First two triangle pulses; durations in units of ``pi / |omega|``.

    The penalty has a positive floor (the transfer is approximate), so the
    default tolerance accepts any point with more than 99.5 % transfer.
    """
    return Objective(
        "triangle_pair",
        "triangle",
        ("omega_over_delta", "eta", "t_p1", "t_p2"),
        partial(_triangle_pair_penalty, v=v),
        {
            "omega_over_delta": TRIANGLE_OMEGA,
            "eta": TRIANGLE_ETA,
            "t_p1": TRIANGLE_T1_OMEGA,
            "t_p2": TRIANGLE_T2_OMEGA,
        },
        param_tol=5e-3,
        penalty_tol=5e-3,
    )


def triangle_third_objective(
    omega: float = TRIANGLE_OMEGA,
    eta: float = TRIANGLE_ETA,
    t_p1: float = TRIANGLE_T1_OMEGA,
    t_p2: float = TRIANGLE_T2_OMEGA,
    v: float = IDEAL_BLOCKADE,
    magnus_steps: int = CALIBRATION_MAGNUS_STEPS,
) -> Objective:
    t1 = t_p1 * np.pi / omega
    t2 = t_p2 * np.pi / omega
    return Objective(
        "triangle_third",
        "triangle",
        ("omega_eff_over_delta", "t_p3"),
        partial(
            _third_pulse_penalty, protocol="triangle", p1p2=(omega, eta, t1, t2), v=v, magnus_steps=magnus_steps
        ),
        {"omega_eff_over_delta": TRIANGLE_OMEGA_EFF, "t_p3": TRIANGLE_T3},
        param_tol=5e-3,
    )


def triangle_pair_fidelities(values: Mapping[str, float], v: float = IDEAL_BLOCKADE) -> dict[str, float]:
    x = np.array([values[k] for k in ("omega_over_delta", "eta", "t_p1", "t_p2")])
    return _triangle_pair_fidelities(x, v)


DEFAULT_BOXES: dict[str, dict[str, tuple[float, float]]] = {
    "gate3_pulse1": {"omega1_over_delta": (1.3, 1.9)},
    "gate3_pulse2": {"omega2_over_delta": (0.45, 0.75)},
    "sbs_pair": {"omega_over_delta": (1.3, 1.9), "eta": (-0.6, -0.35)},
    "sbs_third": {"omega_eff_over_delta": (0.55, 0.85), "t_p3": (1.4, 2.0)},
    "triangle_pair": {"omega_over_delta": (1.7, 2.3), "eta": (-0.45, -0.3), "t_p1": (5.5, 6.4), "t_p2": (1.6, 2.2)},
    "triangle_third": {"omega_eff_over_delta": (0.5, 0.7), "t_p3": (1.5, 2.1)},
}


OBJECTIVE_ORDER = tuple(DEFAULT_BOXES)


def default_objectives(v: float = IDEAL_BLOCKADE) -> dict[str, Objective]:
    """Every objective built around the default values of the pulses it depends on."""
    objs = (
        gate3_pulse1_objective(v),
        gate3_pulse2_objective(v=v),
        sbs_pair_objective(v),
        sbs_third_objective(v=v),
        triangle_pair_objective(v),
        triangle_third_objective(v=v),
    )
    return {o.name: o for o in objs}


def calibrate_all(
    boxes: Mapping[str, Box] | None = None,
    starts: Mapping[str, Mapping[str, float]] | None = None,
    v: float = IDEAL_BLOCKADE,
    restarts: int = DEFAULT_RESTARTS,
    names: Sequence[str] | None = None,
) -> dict[str, CalibrationResult]:
    """Run objectives in dependency order, feeding calibrated earlier pulses into later ones.

    Objectives left out of ``names`` are skipped; later objectives then use the
    default values of the pulses they depend on.
    """
    names = OBJECTIVE_ORDER if names is None else tuple(names)
    unknown = sorted(set(names) - set(OBJECTIVE_ORDER))
    if unknown:
        raise ValueError(f"unknown objectives {unknown}; choose from {list(OBJECTIVE_ORDER)}")
    boxes = dict(DEFAULT_BOXES, **(boxes or {}))
    starts = starts or {}
    out: dict[str, CalibrationResult] = {}

    def run(obj: Objective) -> dict[str, float]:
        if obj.name not in names:
            return dict(obj.reference)
        r = calibrate(obj, boxes[obj.name], start=starts.get(obj.name), restarts=restarts)
        out[obj.name] = r
        return r.values

    g1 = run(gate3_pulse1_objective(v))
    run(gate3_pulse2_objective(g1["omega1_over_delta"], v=v))
    sp = run(sbs_pair_objective(v))
    run(sbs_third_objective(sp["omega_over_delta"], sp["eta"], v))
    tp = run(triangle_pair_objective(v))
    run(triangle_third_objective(tp["omega_over_delta"], tp["eta"], tp["t_p1"], tp["t_p2"], v))
    return out


# --------------------------------------------------------------------------
# verification


def verify_gate3(omega1: float, omega2: float, v: float = IDEAL_BLOCKADE) -> dict[str, float]:
    """Per-block leakage of the full gate with calibrated pulse strengths."""
    phase = float(np.angle(GATE3_OMEGA2))
    p = GateParams.gate3(_DELTA, v * _DELTA, omega1=omega1 * _DELTA, ratio_omega2=omega2 * np.exp(1j * phase))
    rep = run_gate3(p, trajectories=False)
    return {k: c.leakage for k, c in rep.classes.items()}


def verify_preparation(protocol: str, values: Mapping[str, float], v: float = IDEAL_BLOCKADE) -> dict[str, float]:
    """Per-block fidelity of the full preparation with calibrated parameters."""
    omega = values["omega_over_delta"] * _DELTA
    if protocol == "sbs":
        p = sbs_params(omega, values["eta"], values["omega_eff_over_delta"] * _DELTA, _DELTA, v * _DELTA,
                       t_p3=values["t_p3"] * np.pi / _DELTA)
    else:
        p = triangle_params(
            omega,
            values["eta"],
            values["omega_eff_over_delta"] * _DELTA,
            _DELTA,
            v * _DELTA,
            t_p1=values["t_p1"] * np.pi / abs(omega),
            t_p2=values["t_p2"] * np.pi / abs(omega),
            t_p3=values["t_p3"] * np.pi / _DELTA,
        )
    rep = run_preparation(protocol, p, trajectories=False)
    return {k: c.population for k, c in rep.classes.items()}


__all__ = [
    "DEFAULT_BOXES",
    "IDEAL_BLOCKADE",
    "OBJECTIVE_ORDER",
    "CalibrationError",
    "CalibrationResult",
    "Objective",
    "calibrate",
    "calibrate_all",
    "default_objectives",
    "gate3_pulse1_objective",
    "gate3_pulse2_objective",
    "restart_points",
    "sbs_pair_objective",
    "sbs_third_objective",
    "triangle_pair_fidelities",
    "triangle_pair_objective",
    "triangle_third_objective",
    "verify_gate3",
    "verify_preparation",
]
