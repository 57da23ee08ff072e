"""Labeled bases and Hamiltonian matrices for clock/ground/Rydberg atom blocks.

Every atom carries one of six levels: the ground and clock states with a
nuclear spin (up or down) and the two Rydberg sublevels ``r+`` and ``r-``.
Laser pulses couple ``c_up <-> r+`` and ``c_dn <-> r-`` (clock channel) or
``g_up <-> r+`` and ``g_dn <-> r-`` (ground channel). Because the projection of
the total angular momentum is conserved, the dynamics splits into small blocks
labelled by the nuclear spins of the input state (``"uu"``, ``"ud"``, ...).

Conventions
-----------
* Angular frequencies are in rad/us, times in us.
* A coupling between a Rydberg label (row) and its clock/ground partner
  (column) holds ``omega / 2``; the transposed entry holds ``conj(omega) / 2``.
* ``r+`` is detuned by ``+delta`` and ``r-`` by ``-delta``; every pair of
  Rydberg-excited atoms adds ``v``. ``v = inf`` removes all multiply-excited
  labels from the dynamics (perfect blockade).
* Nuclear Zeeman splittings in the g/c manifolds are neglected.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

# 2*Delta/2pi in MHz per gauss for the r+/r- splitting
ZEEMAN_MHZ_PER_GAUSS = 1.9


class AtomLabel(str, enum.Enum):
    """Single-atom level. Rydberg labels carry their spin implicitly."""

    G_UP = "g_up"
    G_DN = "g_dn"
    C_UP = "c_up"
    C_DN = "c_dn"
    R_PLUS = "r+"
    R_MINUS = "r-"

    @property
    def electronic(self) -> str:
        return self.value[0]

    @property
    def spin(self) -> str:
        """Nuclear spin tag, ``"up"`` or ``"dn"``; Rydberg levels inherit it."""
        if self is AtomLabel.R_PLUS:
            return "up"
        if self is AtomLabel.R_MINUS:
            return "dn"
        return self.value[2:]

    @property
    def is_rydberg(self) -> bool:
        return self.electronic == "r"

    @property
    def rydberg_sign(self) -> int:
        """+1 for ``r+``, -1 for ``r-``, 0 otherwise."""
        return {AtomLabel.R_PLUS: 1, AtomLabel.R_MINUS: -1}.get(self, 0)

    @classmethod
    def make(cls, electronic: str, spin: str) -> "AtomLabel":
        if electronic == "r":
            return cls.R_PLUS if spin == "up" else cls.R_MINUS
        return cls(f"{electronic}_{spin}")

    def __str__(self) -> str:
        return self.value


ProductLabel = tuple[AtomLabel, ...]

TWO_ATOM_CLASSES = ("uu", "ud", "du", "dd")
THREE_ATOM_CLASSES = ("uuu", "uud", "udu", "duu", "ddu", "dud", "udd", "ddd")
CHANNELS = ("clock_rydberg", "ground_rydberg", "union")

_SPIN_OF_CHAR = {"u": "up", "d": "dn"}


def label_to_str(label: ProductLabel) -> str:
    """Serialize a product label as e.g. ``"r+ c_up c_dn"``."""
    return " ".join(a.value for a in label)


def label_from_str(text: str) -> ProductLabel:
    return tuple(AtomLabel(tok) for tok in text.split())


def rydberg_count(label: ProductLabel) -> int:
    return sum(a.is_rydberg for a in label)


def rydberg_imbalance(label: ProductLabel) -> int:
    """Number of ``r+`` minus number of ``r-`` atoms."""
    return sum(a.rydberg_sign for a in label)


@dataclass(frozen=True)
class LabeledBasis:
    """Ordered list of product labels spanning one conserved block.

    Parameters
    ----------
    block : str
        Spin pattern of the computational input, one character per atom.
    channel : str
        ``"clock_rydberg"``, ``"ground_rydberg"`` or ``"union"`` (clock labels
        followed by the singly ground-excited labels, used when both channels
        act within one simulation).
    labels : tuple of ProductLabel
    """

    block: str
    channel: str
    labels: tuple[ProductLabel, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("basis labels must be unique")
        n = len(self.block)
        if any(len(lab) != n for lab in self.labels):
            raise ValueError("every label must describe all atoms")

    @property
    def n_atoms(self) -> int:
        return len(self.block)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: ProductLabel | str) -> int:
        if isinstance(label, str):
            label = label_from_str(label)
        return self.labels.index(label)

    def label_strings(self) -> list[str]:
        return [label_to_str(lab) for lab in self.labels]

    @property
    def computational_label(self) -> ProductLabel:
        """The all-clock input label of this block."""
        return tuple(AtomLabel.make("c", _SPIN_OF_CHAR[ch]) for ch in self.block)

    def rydberg_counts(self) -> np.ndarray:
        return np.array([rydberg_count(lab) for lab in self.labels], dtype=float)


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Dense Hermitian matrix acting on a labeled basis (rad/us)."""

    basis: LabeledBasis
    entries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match basis dimension {self.basis.dim}"
            )
        scale = max(float(np.max(np.abs(m))), 1.0) if m.size else 1.0
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * scale:
            raise ValueError("Hamiltonian is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over a labeled basis."""

    basis: LabeledBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match basis dimension")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def basis_state(cls, basis: LabeledBasis, label: ProductLabel | str) -> "StateVector":
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.index(label)] = 1.0
        return cls(basis, amps)

    @classmethod
    def computational(cls, basis: LabeledBasis) -> "StateVector":
        return cls.basis_state(basis, basis.computational_label)

    def amplitude(self, label: ProductLabel | str) -> complex:
        return complex(self.amplitudes[self.basis.index(label)])

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of one run.

    Parameters
    ----------
    delta : float
        Half splitting of the Rydberg sublevels (rad/us).
    v0 : float
        Nominal pair interaction (rad/us).
    tau : float
        Rydberg lifetime (us).
    epsilon : float
        Relative spread of the interaction, in ``[0, 1)``.
    n_atoms : int
    b_field_gauss : float, optional
        If given, ``delta`` must agree with :func:`b_field_to_delta`.
    """

    delta: float
    v0: float
    tau: float = 330.0
    epsilon: float = 0.0
    n_atoms: int = 2
    b_field_gauss: float | None = None

    def __post_init__(self) -> None:
        if not (self.delta > 0 and self.v0 > 0 and self.tau > 0):
            raise ValueError("delta, v0 and tau must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.n_atoms not in (2, 3):
            raise ValueError("n_atoms must be 2 or 3")
        if self.b_field_gauss is not None:
            expected = b_field_to_delta(self.b_field_gauss)
            if abs(expected - self.delta) > 1e-9 * max(1.0, expected):
                raise ValueError(
                    f"delta={self.delta} inconsistent with B={self.b_field_gauss} G "
                    f"(expected {expected})"
                )


def b_field_to_delta(b_gauss: float) -> float:
    """Rydberg half splitting (rad/us) produced by a magnetic field in gauss."""
    if b_gauss < 0:
        raise ValueError("magnetic field must be non-negative")
    return TWO_PI * ZEEMAN_MHZ_PER_GAUSS * b_gauss / 2.0


# --------------------------------------------------------------------------
# bases


def _check_block(n_atoms: int, block: str) -> None:
    valid = TWO_ATOM_CLASSES if n_atoms == 2 else THREE_ATOM_CLASSES if n_atoms == 3 else ()
    if block not in valid:
        raise ValueError(f"unsupported block {block!r} for {n_atoms} atoms")


def _clock_labels(spins: Sequence[str]) -> list[ProductLabel]:
    # most Rydberg excitations first, excited atoms in lexicographic order
    n = len(spins)
    labels = []
    for n_r in range(n, -1, -1):
        for excited in itertools.combinations(range(n), n_r):
            labels.append(
                tuple(
                    AtomLabel.make("r" if i in excited else "c", s)
                    for i, s in enumerate(spins)
                )
            )
    return labels


def _ground_partners(spins: Sequence[str]) -> list[ProductLabel]:
    n = len(spins)
    return [
        tuple(AtomLabel.make("g" if j == i else "c", s) for j, s in enumerate(spins))
        for i in range(n)
    ]


def _canonical_block(block: str) -> tuple[str, tuple[int, ...], bool]:
    """Printed reference block, atom permutation and spin flip producing ``block``."""
    ups = block.count("u")
    n = len(block)
    if ups == n:
        return block, tuple(range(n)), False
    if ups == 0:
        return "u" * n, tuple(range(n)), True
    flip = ups < n - ups
    ref = "uud" if n == 3 else "ud"
    target = block.translate(str.maketrans("ud", "du")) if flip else block
    # perm[i] = atom of the reference block that lands at position i
    ref_odd = ref.index("d")
    odd = target.index("d")
    perm = list(range(n))
    perm[odd], perm[ref_odd] = perm[ref_odd], perm[odd]
    return ref, tuple(perm), flip


def _flip(label: ProductLabel) -> ProductLabel:
    swap = {"up": "dn", "dn": "up"}
    return tuple(AtomLabel.make(a.electronic, swap[a.spin]) for a in label)


def _relabel(labels: Iterable[ProductLabel], perm: Sequence[int], flip: bool) -> list[ProductLabel]:
    out = []
    for lab in labels:
        new = tuple(lab[p] for p in perm)
        out.append(_flip(new) if flip else new)
    return out


def build_basis(n_atoms: int, block: str, channel: str = "clock_rydberg") -> LabeledBasis:
    """Ordered label list of one conserved block.

    The all-up blocks and ``ud``/``uud`` are listed with the Rydberg-richest
    labels first; every other block is generated from those by permuting atoms
    and/or flipping all spins, which keeps the matrices of related blocks
    identical entry for entry.

    Examples
    --------
    >>> build_basis(2, "uu").label_strings()
    ['r+ r+', 'r+ c_up', 'c_up r+', 'c_up c_up']
    """
    _check_block(n_atoms, block)
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    ref, perm, flip = _canonical_block(block)
    spins = [_SPIN_OF_CHAR[ch] for ch in ref]
    clock = _clock_labels(spins)
    ground = _ground_partners(spins)
    if channel == "clock_rydberg":
        labels = clock
    elif channel == "ground_rydberg":
        if len(set(block)) != 1:
            raise ValueError("ground-Rydberg blocks exist only for equal-spin inputs")
        labels = [lab for lab in clock if rydberg_count(lab) == 1] + ground
    else:
        labels = clock + ground
    return LabeledBasis(block, channel, tuple(_relabel(labels, perm, flip)))


# --------------------------------------------------------------------------
# Hamiltonians


def _couplings(
    basis: LabeledBasis,
    clock_rabi: dict[str, complex] | None,
    ground_rabi: dict[str, complex] | None,
    blockaded: bool,
) -> np.ndarray:
    index = {lab: i for i, lab in enumerate(basis.labels)}
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    for i, lab in enumerate(basis.labels):
        if blockaded and rydberg_count(lab) > 1:
            continue
        for k, atom in enumerate(lab):
            if not atom.is_rydberg:
                continue
            for source, rabi in (("c", clock_rabi), ("g", ground_rabi)):
                if not rabi:
                    continue
                partner = lab[:k] + (AtomLabel.make(source, atom.spin),) + lab[k + 1 :]
                j = index.get(partner)
                if j is None:
                    continue
                omega = rabi[atom.spin]
                m[i, j] += omega / 2.0
                m[j, i] += np.conj(omega) / 2.0
    return m


def _diagonal(basis: LabeledBasis, delta: float, v: float) -> np.ndarray:
    diag = np.zeros(basis.dim)
    for i, lab in enumerate(basis.labels):
        n_r = rydberg_count(lab)
        if n_r > 1 and math.isinf(v):
            continue
        diag[i] = delta * rydberg_imbalance(lab)
        if n_r > 1:
            diag[i] += v * n_r * (n_r - 1) / 2.0
    return diag


def rydberg_hamiltonian(
    basis: LabeledBasis,
    *,
    clock_rabi: dict[str, complex] | None = None,
    ground_rabi: dict[str, complex] | None = None,
    delta: float = 0.0,
    v: float = 0.0,
) -> HamiltonianMatrix:
    """Rule-based Hamiltonian on any basis of clock/ground/Rydberg labels.

    Parameters
    ----------
    basis : LabeledBasis
    clock_rabi, ground_rabi : dict, optional
        Complex Rabi frequencies keyed by spin (``"up"``/``"dn"``).
    delta : float
        Detuning of ``r+``; ``r-`` gets ``-delta``.
    v : float
        Pair interaction; ``math.inf`` decouples multiply-excited labels.
    """
    blockaded = math.isinf(v)
    m = _couplings(basis, clock_rabi, ground_rabi, blockaded)
    m[np.diag_indices(basis.dim)] += _diagonal(basis, delta, v)
    return HamiltonianMatrix(basis, m)


def h_clock_rydberg_2atom(
    block: str, omega_up: complex, omega_down: complex, delta: float, v: float
) -> HamiltonianMatrix:
    """Clock-Rydberg Hamiltonian of a two-atom block (4x4)."""
    basis = build_basis(2, block, "clock_rydberg")
    return rydberg_hamiltonian(
        basis, clock_rabi={"up": omega_up, "dn": omega_down}, delta=delta, v=v
    )


def h_clock_rydberg_3atom(
    block: str, omega_up: complex, omega_down: complex, delta: float, v: float
) -> HamiltonianMatrix:
    """Clock-Rydberg Hamiltonian of a three-atom block (8x8), equal pair interactions."""
    basis = build_basis(3, block, "clock_rydberg")
    return rydberg_hamiltonian(
        basis, clock_rabi={"up": omega_up, "dn": omega_down}, delta=delta, v=v
    )


def _ground_block(n_atoms: int, block: str, omega_g: complex) -> HamiltonianMatrix:
    if len(set(block)) != 1:
        raise ValueError("ground-Rydberg blocks exist only for equal-spin inputs")
    basis = build_basis(n_atoms, block, "ground_rydberg")
    return rydberg_hamiltonian(basis, ground_rabi={"up": omega_g, "dn": omega_g})


def h_ground_rydberg_2atom(block: str, omega_g: complex) -> HamiltonianMatrix:
    """Ground-Rydberg Hamiltonian of ``uu`` or ``dd`` (4x4, zero diagonal).

    For ``dd`` the caller passes the spin-down Rabi frequency, which carries
    the opposite sign of the spin-up one.
    """
    if block not in ("uu", "dd"):
        raise ValueError("ground-Rydberg two-atom blocks are 'uu' and 'dd'")
    return _ground_block(2, block, omega_g)


def h_ground_rydberg_3atom(block: str, omega_g: complex) -> HamiltonianMatrix:
    """Ground-Rydberg Hamiltonian of ``uuu`` or ``ddd`` (6x6, three Rabi pairs)."""
    if block not in ("uuu", "ddd"):
        raise ValueError("ground-Rydberg three-atom blocks are 'uuu' and 'ddd'")
    return _ground_block(3, block, omega_g)


# --------------------------------------------------------------------------
# rotating-frame phases


def _diagonal_phase(state: StateVector, exponents: np.ndarray, angle: float) -> StateVector:
    return StateVector(state.basis, state.amplitudes * np.exp(1j * angle * exponents))


def frame_phase_sbs(state: StateVector, phi: float) -> StateVector:
    """Multiply each label by ``exp(i phi (n_plus - n_minus))``."""
    exps = np.array([rydberg_imbalance(lab) for lab in state.basis.labels], dtype=float)
    return _diagonal_phase(state, exps, phi)


def frame_phase_stark(state: StateVector, kappa: float) -> StateVector:
    """Multiply each label by ``exp(i kappa n_r)`` with ``n_r`` its Rydberg count."""
    return _diagonal_phase(state, state.basis.rydberg_counts(), kappa)


def mhz_to_angular(f_mhz: float) -> float:
    return TWO_PI * f_mhz


def angular_to_mhz(w: float) -> float:
    return w / TWO_PI


def wrap_angle(x):
    """Wrap angles into ``(-pi, pi]``."""
    y = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(y) if np.ndim(y) == 0 else y
