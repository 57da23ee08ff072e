"""Final states in the ground/clock x nuclear-spin product space and their measurement.

Each atom has four long-lived levels ordered ``g_up, g_dn, c_up, c_dn``; an
``n``-atom state is a vector of length ``4**n`` with atom 0 as the most
significant digit. Detecting scattered light reveals whether an atom is in
``g`` without touching its nuclear spin, so every measurement is a projector
on the electronic part only.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AtomLabel, ProductLabel
from .metrics import target_phases
from .protocols import ProtocolReport, _basis_for, blocks_for, target_vector

LOCAL_LEVELS: tuple[AtomLabel, ...] = (AtomLabel.G_UP, AtomLabel.G_DN, AtomLabel.C_UP, AtomLabel.C_DN)
OUTCOMES = ("light", "no_light")
CLASSES = (
    "bell_nuclear",
    "bell_electronic",
    "ghz_nuclear",
    "w_electronic",
    "hyperentangled",
    "product",
    "other",
)
CLASS_THRESHOLD = 0.999
_NORM_TOL = 1e-12


def _local_index(label: AtomLabel) -> int:
    return LOCAL_LEVELS.index(label)


def product_index(label: ProductLabel) -> int:
    """Position of a non-Rydberg product label in the ``4**n`` vector."""
    idx = 0
    for a in label:
        idx = 4 * idx + _local_index(a)
    return idx


def product_labels(n_atoms: int) -> list[ProductLabel]:
    return [tuple(p) for p in itertools.product(LOCAL_LEVELS, repeat=n_atoms)]


@dataclass(frozen=True)
class PureState:
    """Amplitudes over the ``4**n_atoms`` product basis.

    The norm may fall below one when population has leaked out of the
    long-lived levels (to Rydberg states); it never exceeds one.
    """

    n_atoms: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be positive")
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape != (4**self.n_atoms,):
            raise ValueError(f"expected {4 ** self.n_atoms} amplitudes, got {a.size}")
        if np.linalg.norm(a) > 1.0 + _NORM_TOL:
            raise ValueError("state norm exceeds one")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_terms(cls, n_atoms: int, terms: dict[str, complex], normalize: bool = True) -> "PureState":
        """Build from ``{"c_up g_dn": amplitude, ...}``."""
        a = np.zeros(4**n_atoms, dtype=complex)
        for text, amp in terms.items():
            lab = tuple(AtomLabel(tok) for tok in text.split())
            if len(lab) != n_atoms:
                raise ValueError(f"label {text!r} does not have {n_atoms} atoms")
            a[product_index(lab)] += amp
        if normalize:
            a = a / np.linalg.norm(a)
        return cls(n_atoms, a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def leakage(self) -> float:
        return 1.0 - self.norm**2

    def normalized(self) -> "PureState":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.n_atoms, self.amplitudes / n)

    def overlap(self, other: "PureState") -> complex:
        """``<self|other>``."""
        if other.n_atoms != self.n_atoms:
            raise ValueError("states have different atom numbers")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def amplitude(self, label: str) -> complex:
        return complex(self.amplitudes[product_index(tuple(AtomLabel(t) for t in label.split()))])

    def nonzero_terms(self, tol: float = 1e-12) -> dict[str, complex]:
        labels = product_labels(self.n_atoms)
        return {
            " ".join(a.value for a in labels[i]): complex(self.amplitudes[i])
            for i in np.flatnonzero(np.abs(self.amplitudes) > tol)
        }

    def split_matrix(self) -> np.ndarray:
        """Reshape to an (electronic, nuclear) matrix of shape ``(2**n, 2**n)``.

        Electronic bit 0 is ``g`` and 1 is ``c``; nuclear bit 0 is up and 1 is down.
        """
        n = self.n_atoms
        t = self.amplitudes.reshape((2, 2) * n)
        t = np.transpose(t, list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
        return t.reshape(2**n, 2**n)


# --------------------------------------------------------------------------
# canonical states


def sbs_state(theta1: float, theta2: float, theta3: float) -> PureState:
    """Two-atom Bell-pair state.

    ``(1/2)[(cg+gc)/sqrt2 (e^{i theta1} up up + e^{i theta2} dn dn)
    + e^{i theta3} cc (up dn + dn up)]``.
    """
    s = 0.5 / np.sqrt(2.0)
    terms = {
        "c_up g_up": s * np.exp(1j * theta1),
        "g_up c_up": s * np.exp(1j * theta1),
        "c_dn g_dn": s * np.exp(1j * theta2),
        "g_dn c_dn": s * np.exp(1j * theta2),
        "c_up c_dn": 0.5 * np.exp(1j * theta3),
        "c_dn c_up": 0.5 * np.exp(1j * theta3),
    }
    return PureState.from_terms(2, terms, normalize=False)


def _triangle_terms(w_up: float, w_dn: float, ccc_up: float, ccc_dn: float) -> dict[str, complex]:
    s = 1.0 / np.sqrt(8.0)
    s_w = 1.0 / np.sqrt(24.0)
    terms: dict[str, complex] = {}
    for k in range(3):
        for spin, ph in (("up", w_up), ("dn", w_dn)):
            atoms = [f"c_{spin}"] * 3
            atoms[k] = f"g_{spin}"
            terms[" ".join(atoms)] = s_w * np.exp(1j * ph)
        for major, minor, ph in (("up", "dn", ccc_up), ("dn", "up", ccc_dn)):
            atoms = [f"c_{major}"] * 3
            atoms[k] = f"c_{minor}"
            terms[" ".join(atoms)] = s * np.exp(1j * ph)
    return terms


def triangle_state(w_up: float, w_dn: float, ccc_up: float, ccc_dn: float) -> PureState:
    """Three-atom state pairing an electronic W with a nuclear GHZ.

    ``(1/2){ sqrt(3/2) ccc [e^{i ccc_up} W(up,up,dn) + e^{i ccc_dn} W(dn,dn,up)]
    + W_e (e^{i w_up} up up up + e^{i w_dn} dn dn dn)/sqrt2 }`` where ``W_e`` has
    one atom in ``g`` and ``W(up,up,dn)`` is the normalized nuclear W state with
    one spin down.
    """
    return PureState.from_terms(3, _triangle_terms(w_up, w_dn, ccc_up, ccc_dn), normalize=False)


def triangle_state_lambda(theta: float) -> PureState:
    """Phase-reduced form ``(1/2)[sqrt3 ccc Lambda_n + W_e GHZ_n]``.

    ``Lambda_n`` is the sum of the two nuclear W states with relative phase ``theta``.
    """
    return triangle_state(0.0, 0.0, 0.0, theta)


# --------------------------------------------------------------------------
# embedding of simulated protocols


def embed_report(report: ProtocolReport, protocol: str | None = None) -> PureState:
    """Lift per-block final states into the product space.

    The input is the uniform superposition of all nuclear configurations in the
    all-clock state, so every block enters with weight ``2**(-n/2)``. Rydberg
    components are dropped, leaving a sub-normalized state when population has
    leaked.
    """
    protocol = protocol or report.protocol
    if protocol != report.protocol:
        raise ValueError(f"report is for {report.protocol!r}, not {protocol!r}")
    n = 3 if protocol.startswith("triangle") else 2
    blocks = blocks_for(protocol)
    missing = [b for b in blocks if b not in report.classes]
    if missing:
        raise ValueError(f"report is missing blocks {missing}")
    w = 1.0 / np.sqrt(len(blocks))
    a = np.zeros(4**n, dtype=complex)
    for b in blocks:
        final = report.classes[b].final_state
        for lab, amp in zip(final.basis.labels, final.amplitudes):
            if any(x.is_rydberg for x in lab):
                continue
            a[product_index(lab)] += w * amp
    return PureState(n, a)


def target_state(report: ProtocolReport) -> PureState:
    """Analytic target built from the per-block phases of ``report``.

    For gates this is the diagonal map applied to the uniform all-clock input.
    """
    protocol = report.protocol
    n = 3 if protocol.startswith("triangle") else 2
    blocks = blocks_for(protocol)
    phases = target_phases(report)
    w = 1.0 / np.sqrt(len(blocks))
    a = np.zeros(4**n, dtype=complex)
    for b in blocks:
        basis = _basis_for(protocol, b)
        vec = target_vector(protocol, basis)
        for lab, amp in zip(basis.labels, vec):
            if amp != 0:
                a[product_index(lab)] += w * np.exp(1j * phases[b]) * amp
    return PureState(n, a)


# --------------------------------------------------------------------------
# measurement


@dataclass(frozen=True)
class MeasurementOutcome:
    """One branch of a projective measurement.

    ``collapsed`` is ``None`` and ``is_null`` is set when the branch has zero
    probability.
    """

    outcome: str
    probability: float
    collapsed: PureState | None
    classification: str
    class_fidelity: float

    @property
    def is_null(self) -> bool:
        return self.collapsed is None

    def to_dict(self) -> dict:
        amps = {} if self.collapsed is None else {
            k: [v.real, v.imag] for k, v in self.collapsed.nonzero_terms().items()
        }
        return {
            "outcome": self.outcome,
            "probability": self.probability,
            "classification": self.classification,
            "class_fidelity": self.class_fidelity,
            "amplitudes": amps,
        }


def _electronic_mask(n_atoms: int, atom: int | None, electronic: str) -> np.ndarray:
    """Boolean mask of product indices where ``atom`` (or every atom) is in ``electronic``."""
    labels = product_labels(n_atoms)
    if atom is None:
        return np.array([all(a.electronic == electronic for a in lab) for lab in labels])
    return np.array([lab[atom].electronic == electronic for lab in labels])


def _project(state: PureState, mask: np.ndarray, outcome: str) -> MeasurementOutcome:
    total = state.norm**2
    if total == 0:
        raise ValueError("cannot measure the zero vector")
    kept = np.where(mask, state.amplitudes, 0.0)
    weight = float(np.linalg.norm(kept) ** 2)
    p = weight / total
    if weight <= _NORM_TOL**2 * total:
        return MeasurementOutcome(outcome, 0.0, None, "other", 0.0)
    collapsed = PureState(state.n_atoms, kept / np.sqrt(weight))
    cls, fid = classify_with_fidelity(collapsed)
    return MeasurementOutcome(outcome, p, collapsed, cls, fid)


def _check_outcome(outcome: str) -> None:
    if outcome not in OUTCOMES:
        raise ValueError(f"outcome must be one of {OUTCOMES}, got {outcome!r}")


def measure_atom(state: PureState, atom: int, outcome: str) -> MeasurementOutcome:
    """Detect scattered light from one atom.

    ``light`` projects the atom onto ``g``, ``no_light`` onto ``c``. Probabilities
    are conditioned on the atoms still being in the long-lived levels.
    """
    _check_outcome(outcome)
    if not 0 <= atom < state.n_atoms:
        raise ValueError(f"atom index {atom} out of range for {state.n_atoms} atoms")
    return _project(state, _electronic_mask(state.n_atoms, atom, "g" if outcome == "light" else "c"), outcome)


def measure_collective(state: PureState, outcome: str) -> MeasurementOutcome:
    """Detect light from all atoms without resolving which atom scattered.

    ``no_light`` projects onto the all-clock subspace and ``light`` onto its
    orthogonal complement, keeping coherence between which-atom alternatives.
    """
    _check_outcome(outcome)
    all_clock = _electronic_mask(state.n_atoms, None, "c")
    return _project(state, all_clock if outcome == "no_light" else ~all_clock, outcome)


def ground_clock_pi_pulse(state: PureState, atom: int) -> PureState:
    """Resonant ground-clock pi pulse on one atom: ``g -> -i c`` and ``c -> -i g``.

    Nuclear spins are untouched.
    """
    if not 0 <= atom < state.n_atoms:
        raise ValueError(f"atom index {atom} out of range for {state.n_atoms} atoms")
    n = state.n_atoms
    t = state.amplitudes.reshape((2, 2) * n)
    t = -1j * np.flip(t, axis=2 * atom)
    return PureState(n, t.reshape(-1))


# --------------------------------------------------------------------------
# classification


def _product_fidelity(t: np.ndarray, iters: int = 200) -> float:
    """Largest ``|<a1 x a2 x ...|psi>|^2`` over product states (alternating maximization)."""
    n = t.ndim
    if n == 1:
        return float(np.linalg.norm(t) ** 2)
    vecs = []
    for k in range(n):
        m = np.moveaxis(t, k, 0).reshape(t.shape[k], -1)
        w, v = np.linalg.eigh(m @ m.conj().T)
        vecs.append(v[:, -1])
    best = 0.0
    for _ in range(iters):
        for k in range(n):
            r = t
            for j in reversed(range(n)):
                if j != k:
                    r = np.tensordot(r, vecs[j].conj(), axes=([j], [0]))
            vecs[k] = r / np.linalg.norm(r) if np.linalg.norm(r) > 0 else vecs[k]
        val = float(np.linalg.norm(r) ** 2)
        if val - best < 1e-14:
            best = max(best, val)
            break
        best = val
    return best


def _support_fidelity(v: np.ndarray, supports: Sequence[Sequence[int]]) -> float:
    """Best overlap with an equal-weight superposition over any support, phases free."""
    best = 0.0
    for s in supports:
        best = max(best, float(np.sum(np.abs(v[list(s)])) ** 2 / len(s)))
    return best


def _bits(n: int, weight: int) -> list[int]:
    return [i for i in range(2**n) if bin(i).count("1") == weight]


def _bell_fidelity(v: np.ndarray) -> float:
    if v.size != 4:
        return 0.0
    return _support_fidelity(v, [(0, 3), (1, 2)])


def _ghz_fidelity(v: np.ndarray) -> float:
    if v.size != 8:
        return 0.0
    return _support_fidelity(v, [(0, 7)])


def _w_fidelity(v: np.ndarray) -> float:
    if v.size != 8:
        return 0.0
    return _support_fidelity(v, [_bits(3, 1), _bits(3, 2)])


def class_fidelities(state: PureState) -> dict[str, float]:
    """Fidelity to every named class, judged up to single-atom electronic and nuclear phase gates.

    Composite classes use the dominant electronic/nuclear Schmidt pair, which
    gives a lower bound on the true class fidelity that is tight near one.
    """
    psi = state.normalized()
    n = psi.n_atoms
    m = psi.split_matrix()
    u, s, vh = np.linalg.svd(m)
    lead = float(s[0] ** 2)
    e, nuc = u[:, 0], vh[0].conj()
    e_prod = _product_fidelity(e.reshape((2,) * n))
    n_prod = _product_fidelity(nuc.reshape((2,) * n))
    ent = (lambda x: _bell_fidelity(x)) if n == 2 else (lambda x: max(_ghz_fidelity(x), _w_fidelity(x)))
    return {
        "product": _product_fidelity(psi.amplitudes.reshape((4,) * n)),
        "bell_nuclear": lead * e_prod * _bell_fidelity(nuc),
        "bell_electronic": lead * _bell_fidelity(e) * n_prod,
        "ghz_nuclear": lead * e_prod * _ghz_fidelity(nuc),
        "w_electronic": lead * _w_fidelity(e) * n_prod,
        "hyperentangled": lead * ent(e) * ent(nuc),
    }


def classify_with_fidelity(state: PureState, threshold: float = CLASS_THRESHOLD) -> tuple[str, float]:
    fids = class_fidelities(state)
    if fids["product"] >= threshold:
        return "product", fids["product"]
    name = max((k for k in fids if k != "product"), key=lambda k: fids[k])
    if fids[name] >= threshold:
        return name, fids[name]
    return "other", fids[name]


def classify(state: PureState, threshold: float = CLASS_THRESHOLD) -> str:
    """Entanglement class of a state, or ``"other"`` if no class reaches ``threshold``."""
    return classify_with_fidelity(state, threshold)[0]


# --------------------------------------------------------------------------
# outcome trees


def parse_plan(plan: Sequence[str] | str) -> list[str]:
    """Normalize a measurement plan such as ``"atom:0,atom:1"`` or ``["collective"]``."""
    items = plan.split(",") if isinstance(plan, str) else list(plan)
    out = []
    for item in (x.strip() for x in items):
        if item == "collective":
            out.append(item)
        elif item.startswith("atom:") and item[5:].isdigit():
            out.append(item)
        else:
            raise ValueError(f"unknown measurement step {item!r}")
    return out


def _apply(state: PureState, step: str, outcome: str) -> MeasurementOutcome:
    if step == "collective":
        return measure_collective(state, outcome)
    return measure_atom(state, int(step[5:]), outcome)


def outcome_tree(state: PureState, plan: Sequence[str] | str) -> dict:
    """Both branches of every step of ``plan``, nested as a JSON-ready dict."""
    steps = parse_plan(plan)
    cls, fid = classify_with_fidelity(state.normalized())
    root = {
        "outcome": "initial",
        "probability": 1.0,
        "classification": cls,
        "class_fidelity": fid,
        "amplitudes": {k: [v.real, v.imag] for k, v in state.nonzero_terms().items()},
    }

    def grow(node: dict, s: PureState, rest: list[str]) -> None:
        if not rest:
            return
        node["measurement"] = rest[0]
        node["children"] = []
        for outcome in OUTCOMES:
            res = _apply(s, rest[0], outcome)
            child = res.to_dict()
            node["children"].append(child)
            if res.collapsed is not None:
                grow(child, res.collapsed, rest[1:])

    grow(root, state, steps)
    return root


def outcome_tree_json(state: PureState, plan: Sequence[str] | str) -> str:
    return json.dumps(outcome_tree(state, plan), indent=2, sort_keys=True)


__all__ = [
    "CLASSES",
    "LOCAL_LEVELS",
    "MeasurementOutcome",
    "OUTCOMES",
    "PureState",
    "class_fidelities",
    "classify",
    "classify_with_fidelity",
    "embed_report",
    "ground_clock_pi_pulse",
    "measure_atom",
    "measure_collective",
    "outcome_tree",
    "outcome_tree_json",
    "parse_plan",
    "product_index",
    "product_labels",
    "sbs_state",
    "target_state",
    "triangle_state",
    "triangle_state_lambda",
]
