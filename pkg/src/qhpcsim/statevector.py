"""Dense state-vector simulation of an n-qubit register.

Qubit k maps to bit k of the basis index (qubit 0 is the least-significant
bit). Noise is trajectory based: each call samples one Pauli insertion.

The private ``_k_*`` kernels act in place on amplitude arrays of shape
``(batch, 2**n)`` so the QPU engine can advance many shots in lock-step.
The public functions wrap them for a single :class:`StateVector` and never
mutate their input.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin, sqrt

import numpy as np

from .errors import SimulationError

MAX_QUBITS = 24
ATOL = 1e-10
_DEGENERATE_NORM = 1e-12


class GateMatrix:
    """A unitary on one (2x2) or two (4x4) qubits, checked at construction."""

    __slots__ = ("matrix", "name")

    def __init__(self, entries, name: str = "U"):
        m = np.array(entries, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise ValueError(f"gate must be 2x2 or 4x4, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("gate entries must be finite")
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if err >= ATOL:
            raise ValueError(f"gate {name} is not unitary (max |U^dag U - I| = {err:.3e})")
        m.setflags(write=False)
        self.matrix = m
        self.name = name

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "GateMatrix":
        return GateMatrix(self.matrix.conj().T, self.name + "^dag")

    def __repr__(self) -> str:
        return f"GateMatrix({self.name})"


_S2 = 1 / sqrt(2)
I = GateMatrix([[1, 0], [0, 1]], "I")
H = GateMatrix([[_S2, _S2], [_S2, -_S2]], "H")
X = GateMatrix([[0, 1], [1, 0]], "X")
Y = GateMatrix([[0, -1j], [1j, 0]], "Y")
Z = GateMatrix([[1, 0], [0, -1]], "Z")
S = GateMatrix([[1, 0], [0, 1j]], "S")
S_DAGGER = GateMatrix([[1, 0], [0, -1j]], "Sdg")


def rz(theta: float) -> GateMatrix:
    return GateMatrix([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], "Rz")


def ry(theta: float) -> GateMatrix:
    c, s = cos(theta / 2), sin(theta / 2)
    return GateMatrix([[c, -s], [s, c]], "Ry")


def phase_ancilla_prep(theta: float) -> GateMatrix:
    """Unitary mapping |0> to (|0> + e^{i theta}|1>)/sqrt(2)."""
    e = np.exp(1j * theta)
    return GateMatrix([[_S2, _S2], [_S2 * e, -_S2 * e]], "PrepPhase")


@dataclass(eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise ValueError(f"amplitude count {amps.size} is not 2**n with n >= 1")
        if n > MAX_QUBITS:
            raise ValueError(f"{n} qubits exceeds the cap of {MAX_QUBITS}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        self.amplitudes = amps

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy())

    def _batch(self) -> np.ndarray:
        return self.amplitudes.reshape(1, -1)


def _check_qubit(num_qubits: int, *qubits: int) -> None:
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise IndexError(f"qubit {q} out of range for {num_qubits}-qubit register")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"qubit indices must be distinct, got {qubits}")


# ---------------------------------------------------------------------------
# batch kernels: amps has shape (batch, 2**n) and is modified in place

def _split(amps: np.ndarray, qubit: int) -> np.ndarray:
    b, dim = amps.shape
    return amps.reshape(b, dim >> (qubit + 1), 2, 1 << qubit)


def _k_apply_1q(amps: np.ndarray, m: np.ndarray, qubit: int) -> None:
    v = _split(amps, qubit)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = m[0, 0] * a0 + m[0, 1] * a1
    v[:, :, 1, :] = m[1, 0] * a0 + m[1, 1] * a1


def _both_set(dim: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(dim)
    mask = (1 << a) | (1 << b)
    return idx[(idx & mask) == mask]


def _k_phase_both(amps: np.ndarray, phase: complex, control: int, target: int) -> None:
    amps[:, _both_set(amps.shape[1], control, target)] *= phase


def _k_cnot(amps: np.ndarray, control: int, target: int) -> None:
    idx = np.arange(amps.shape[1])
    src = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    dst = src | (1 << target)
    amps[:, src], amps[:, dst] = amps[:, dst], amps[:, src].copy()


def _k_prob_one(amps: np.ndarray, qubit: int) -> np.ndarray:
    v = _split(amps, qubit)
    return np.sum(np.abs(v[:, :, 1, :]) ** 2, axis=(1, 2))


def _k_measure(amps: np.ndarray, qubit: int, u: np.ndarray) -> np.ndarray:
    """Born-rule measurement with collapse; ``u`` holds one uniform draw per row."""
    p1 = _k_prob_one(amps, qubit)
    total = np.sum(np.abs(amps) ** 2, axis=1)
    outcome = (u * total < p1).astype(np.uint8)
    kept = np.where(outcome == 1, p1, total - p1)
    if np.any(kept < _DEGENERATE_NORM**2):
        raise SimulationError(f"degenerate post-measurement norm on qubit {qubit}")
    v = _split(amps, qubit)
    v[outcome == 1, :, 0, :] = 0
    v[outcome == 0, :, 1, :] = 0
    amps /= np.sqrt(kept)[:, None]
    return outcome


def _k_flip_where(amps: np.ndarray, qubit: int, rows: np.ndarray) -> None:
    if np.any(rows):
        v = _split(amps, qubit)
        v[rows] = v[rows][:, :, ::-1, :]


def _k_pauli_rows(amps: np.ndarray, qubit: int, which: np.ndarray) -> None:
    """Apply X (which==1), Y (2) or Z (3) row-wise; 0 means identity."""
    for code, gate in ((1, X), (2, Y), (3, Z)):
        rows = which == code
        if np.any(rows):
            sub = amps[rows]
            _k_apply_1q(sub, gate.matrix, qubit)
            amps[rows] = sub


def _k_expectation(amps: np.ndarray, qubit: int, axis: str) -> np.ndarray:
    v = _split(amps, qubit)
    a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
    if axis == "Z":
        return np.sum(np.abs(a0) ** 2 - np.abs(a1) ** 2, axis=(1, 2))
    cross = np.sum(np.conj(a0) * a1, axis=(1, 2))
    if axis == "X":
        return 2 * cross.real
    if axis == "Y":
        return 2 * cross.imag
    raise ValueError(f"unknown Pauli axis {axis!r}")


# ---------------------------------------------------------------------------
# public single-state API

def new_state(num_qubits: int) -> StateVector:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[0] = 1
    return StateVector(amps)


def apply_1q(state: StateVector, gate: GateMatrix, qubit: int) -> StateVector:
    if gate.dimension != 2:
        raise ValueError("apply_1q needs a 2x2 gate")
    _check_qubit(state.num_qubits, qubit)
    out = state.copy()
    _k_apply_1q(out._batch(), gate.matrix, qubit)
    return out


def apply_controlled_phase_power(
    state: StateVector, lam: float, power: int, control: int, target: int
) -> StateVector:
    """Multiply every amplitude with control=1 and target=1 by exp(i*lam*power)."""
    if power < 1:
        raise ValueError(f"power must be >= 1, got {power}")
    _check_qubit(state.num_qubits, control, target)
    out = state.copy()
    _k_phase_both(out._batch(), controlled_phase(lam, power), control, target)
    return out


def controlled_phase(lam: float, power: int) -> complex:
    # reduce before exponentiating so large powers stay accurate
    angle = (lam * power) % (2 * np.pi)
    return complex(np.exp(1j * angle))


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state.num_qubits, control, target)
    out = state.copy()
    _k_cnot(out._batch(), control, target)
    return out


def measure_qubit(state: StateVector, qubit: int, rng: np.random.Generator) -> tuple[int, StateVector]:
    _check_qubit(state.num_qubits, qubit)
    out = state.copy()
    outcome = _k_measure(out._batch(), qubit, rng.random(1))
    return int(outcome[0]), out


def reset_qubit(state: StateVector, qubit: int, rng: np.random.Generator) -> StateVector:
    outcome, out = measure_qubit(state, qubit, rng)
    if outcome:
        _k_apply_1q(out._batch(), X.matrix, qubit)
    return out


def expectation_pauli(state: StateVector, qubit: int, axis: str) -> float:
    _check_qubit(state.num_qubits, qubit)
    value = float(_k_expectation(state._batch(), qubit, axis.upper())[0])
    return min(1.0, max(-1.0, value))


def apply_noise_event(
    state: StateVector, qubit: int, kind: str, p: float, rng: np.random.Generator
) -> StateVector:
    """One trajectory of a bit-flip or depolarizing channel of strength ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise probability must be in [0, 1], got {p}")
    _check_qubit(state.num_qubits, qubit)
    out = state.copy()
    which = sample_pauli_errors(kind, p, 1, rng)
    _k_pauli_rows(out._batch(), qubit, which)
    return out


def sample_pauli_errors(kind: str, p: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-trajectory Pauli codes (0=I, 1=X, 2=Y, 3=Z) for ``n`` trajectories."""
    hit = rng.random(n) < p
    if kind == "bitflip":
        return hit.astype(np.int8)
    if kind == "depolarizing":
        pauli = rng.integers(1, 4, size=n, dtype=np.int8)
        return np.where(hit, pauli, 0).astype(np.int8)
    raise ValueError(f"unknown noise kind {kind!r}")
