"""QPU device model: parse and validate (control unit), execute shots (execution unit), price time.

Shots are independent trajectories starting from |0...0>. The execution unit
advances a whole batch of shots in lock-step over a ``(shots, 2**n)``
amplitude array. Every random draw is per shot, so the statistics are the
same as a shot-by-shot loop. Each device owns a counter-based Philox stream
seeded at construction. Results are therefore reproducible given
(seed, sequence of calls).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import circuit as qc
from . import statevector as sv
from .errors import DeviceError

FIFO = "fifo"


@dataclass(frozen=True)
class NoiseParams:
    p_depol_per_gate: float = 0.0
    p_readout_flip: float = 0.0

    def __post_init__(self):
        for name in ("p_depol_per_gate", "p_readout_flip"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def noiseless(self) -> bool:
        return self.p_depol_per_gate == 0.0 and self.p_readout_flip == 0.0


@dataclass(frozen=True)
class LatencyModel:
    """Offload cost model; all times in microseconds of model time."""

    t_init: float = 10.0  # per shot
    t_gate: float = 1.0  # per moment
    t_meas: float = 50.0  # per measurement instruction
    t_submit: float = 1.0
    t_return: float = 1.0
    t_queue_policy: str = FIFO
    jitter_frac: float = 0.0

    def __post_init__(self):
        for name in ("t_init", "t_gate", "t_meas", "t_submit", "t_return", "jitter_frac"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a finite value >= 0, got {v}")
        if self.t_queue_policy != FIFO:
            raise ValueError(f"only the {FIFO!r} queue policy is supported")

    @property
    def communication(self) -> float:
        return self.t_submit + self.t_return


LATENCY_PRESETS = {
    "tight": LatencyModel(t_init=10.0, t_gate=1.0, t_meas=50.0, t_submit=1.0, t_return=1.0),
    "cloud": LatencyModel(t_init=10.0, t_gate=1.0, t_meas=50.0, t_submit=1e4, t_return=1e4),
}


def latency_preset(name: str) -> LatencyModel:
    try:
        return LATENCY_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown latency preset {name!r}; choose from {sorted(LATENCY_PRESETS)}") from None


@dataclass
class ExecutionResult:
    counts: dict[str, int]
    shots: int
    model_exec_time: float
    per_shot_records: Optional[list[str]] = None
    submitted_at: float = 0.0

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError(f"counts sum to {sum(self.counts.values())}, expected {self.shots} shots")

    def bit_counts(self, clbit: int) -> tuple[int, int]:
        """(zeros, ones) observed on one classical bit."""
        ones = sum(n for key, n in self.counts.items() if key[clbit] == "1")
        return self.shots - ones, ones

    def most_frequent(self) -> str:
        return min(self.counts, key=lambda k: (-self.counts[k], k))


def shot_time(circuit: qc.Circuit, latency: LatencyModel, include_init: bool = True) -> float:
    init = latency.t_init if include_init else 0.0
    return init + qc.depth(circuit) * latency.t_gate + circuit.num_measurements * latency.t_meas


def estimate_exec_time(circuit: qc.Circuit, shots: int, latency: LatencyModel) -> float:
    """Jitter-free model execution time of one submission."""
    return shots * shot_time(circuit, latency) + latency.communication


def bitstrings(creg: np.ndarray) -> list[str]:
    """Row-wise keys; character j is classical bit j."""
    if creg.shape[1] == 0:
        return [""] * creg.shape[0]
    chars = np.where(creg.astype(bool), "1", "0")
    return ["".join(row) for row in chars]


def _counts(creg: np.ndarray) -> dict[str, int]:
    if creg.shape[0] == 0:
        return {}
    rows, n = np.unique(creg, axis=0, return_counts=True)
    return {k: int(c) for k, c in sorted(zip(bitstrings(rows), n))}


# ---------------------------------------------------------------------------
# execution unit

def _gate_matrix(ins: qc.Instruction) -> np.ndarray:
    k = ins.kind
    if k == "rz":
        return sv.rz(ins.params[0]).matrix
    if k == "ry":
        return sv.ry(ins.params[0]).matrix
    if k == "prep_phase":
        return sv.phase_ancilla_prep(ins.params[0]).matrix
    return {"h": sv.H, "x": sv.X, "s": sv.S, "sdg": sv.S_DAGGER}[k].matrix


def _apply(amps: np.ndarray, ins: qc.Instruction, rng: np.random.Generator, noise: NoiseParams):
    """Run one unconditioned instruction on every row; return measured bits or None."""
    k, rows = ins.kind, amps.shape[0]
    if k == "cnot":
        sv._k_cnot(amps, *ins.qubits)
    elif k == "cphasepow":
        lam, power = ins.params
        sv._k_phase_both(amps, sv.controlled_phase(lam, power), *ins.qubits)
    elif k == "measure":
        outcome = sv._k_measure(amps, ins.qubits[0], rng.random(rows))
        if noise.p_readout_flip > 0:
            outcome = outcome ^ (rng.random(rows) < noise.p_readout_flip).astype(np.uint8)
        return outcome
    elif k == "reset":
        q = ins.qubits[0]
        outcome = sv._k_measure(amps, q, rng.random(rows))
        sv._k_flip_where(amps, q, outcome == 1)
    elif k == "noise":
        kind, p = ins.params
        sv._k_pauli_rows(amps, ins.qubits[0], sv.sample_pauli_errors(kind, p, rows, rng))
    else:
        sv._k_apply_1q(amps, _gate_matrix(ins), ins.qubits[0])
    if ins.is_unitary and noise.p_depol_per_gate > 0:
        for q in ins.qubits:
            sv._k_pauli_rows(amps, q, sv.sample_pauli_errors("depolarizing", noise.p_depol_per_gate, rows, rng))
    return None


def execute_batch(amps: np.ndarray, creg: np.ndarray, circuit: qc.Circuit,
                  rng: np.random.Generator, noise: NoiseParams) -> None:
    """Run ``circuit`` on every row of ``amps``/``creg`` in place, honouring per-row conditions."""
    for ins in circuit.instructions:
        if ins.condition is None:
            out = _apply(amps, ins, rng, noise)
            if out is not None:
                creg[:, ins.clbit] = out
            continue
        bit, value = ins.condition
        rows = creg[:, bit] == value
        if not rows.any():
            continue
        sub = amps[rows]
        out = _apply(sub, ins, rng, noise)
        amps[rows] = sub
        if out is not None:
            creg[rows, ins.clbit] = out


# ---------------------------------------------------------------------------
# device

@dataclass(eq=False)
class QpuDevice:
    device_id: str = "qpu0"
    max_qubits: int = sv.MAX_QUBITS
    noise: NoiseParams = field(default_factory=NoiseParams)
    latency: LatencyModel = field(default_factory=lambda: LATENCY_PRESETS["tight"])
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.max_qubits <= sv.MAX_QUBITS:
            raise ValueError(f"max_qubits must be in [1, {sv.MAX_QUBITS}]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.rng = np.random.Generator(np.random.Philox(key=self.seed))
        self.session: Optional["Session"] = None
        self._session_ids = itertools.count()

    def _jitter(self) -> float:
        if self.latency.jitter_frac == 0:
            return 0.0
        return float(self.rng.uniform(0.0, self.latency.jitter_frac))

    def _parse(self, circuit: qc.Circuit, prewritten=()) -> None:
        qc.check(circuit, prewritten)
        if circuit.num_qubits > self.max_qubits:
            raise DeviceError(
                f"circuit needs {circuit.num_qubits} qubits; {self.device_id} has {self.max_qubits}")

    def submit(self, circuit: qc.Circuit, shots: int, clock: float = 0.0,
               record: bool = False) -> ExecutionResult:
        if self.session is not None:
            raise DeviceError(f"{self.device_id} is held by an open session")
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        self._parse(circuit)
        n, nc = circuit.num_qubits, circuit.num_clbits
        chunk = max(1, (1 << 20) >> n)
        cregs = []
        for start in range(0, shots, chunk):
            rows = min(chunk, shots - start)
            amps = np.zeros((rows, 1 << n), dtype=complex)
            amps[:, 0] = 1
            creg = np.zeros((rows, nc), dtype=np.uint8)
            execute_batch(amps, creg, circuit, self.rng, self.noise)
            cregs.append(creg)
        creg = np.concatenate(cregs)
        elapsed = shots * shot_time(circuit, self.latency) * (1 + self._jitter()) + self.latency.communication
        return ExecutionResult(
            counts=_counts(creg),
            shots=shots,
            model_exec_time=elapsed,
            per_shot_records=bitstrings(creg) if record else None,
            submitted_at=clock,
        )


def submit(device: QpuDevice, circuit: qc.Circuit, shots: int, clock: float = 0.0) -> ExecutionResult:
    return device.submit(circuit, shots, clock)


# ---------------------------------------------------------------------------
# sessions: quantum state persisting across fragments within each shot

@dataclass
class FragmentResult:
    bits: np.ndarray  # (shots, num_clbits) snapshot of the session register
    written: tuple[int, ...]
    model_exec_time: float


class Session:
    """Holds one state vector per shot across successive circuit fragments."""

    def __init__(self, device: QpuDevice, num_qubits: int, num_clbits: int, shots: int = 1):
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        if not 1 <= num_qubits <= device.max_qubits:
            raise DeviceError(f"session needs {num_qubits} qubits; {device.device_id} has {device.max_qubits}")
        self.device = device
        self.num_qubits = num_qubits
        self.num_clbits = num_clbits
        self.shots = shots
        self.register = f"{device.device_id}/s{next(device._session_ids)}"
        self.amps = np.zeros((shots, 1 << num_qubits), dtype=complex)
        self.amps[:, 0] = 1
        self.creg = np.zeros((shots, num_clbits), dtype=np.uint8)
        self.written: set[int] = set()
        self.fragments_run = 0
        self.closed = False

    def run_fragment(self, fragment: qc.Circuit) -> FragmentResult:
        if self.closed:
            raise DeviceError(f"session {self.register} is closed")
        if fragment.num_qubits > self.num_qubits or fragment.num_clbits > self.num_clbits:
            raise DeviceError(f"fragment exceeds session register {self.num_qubits}q/{self.num_clbits}c")
        # validate against the session-wide register size
        widened = qc.Circuit(self.num_qubits, self.num_clbits, fragment.instructions)
        self.device._parse(widened, self.written)
        execute_batch(self.amps, self.creg, widened, self.device.rng, self.device.noise)
        wrote = qc.footprint(widened).clbits_written
        self.written |= wrote
        lat = self.device.latency
        per_shot = shot_time(widened, lat, include_init=self.fragments_run == 0) if widened.instructions else 0.0
        elapsed = self.shots * per_shot * (1 + self.device._jitter()) + lat.communication
        self.fragments_run += 1
        return FragmentResult(self.creg.copy(), tuple(sorted(wrote)), elapsed)

    def expectation(self, qubit: int, axis: str) -> np.ndarray:
        """Exact per-shot Pauli expectation on the current trajectories."""
        sv._check_qubit(self.num_qubits, qubit)
        return np.clip(sv._k_expectation(self.amps, qubit, axis.upper()), -1.0, 1.0)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.amps = None
            if self.device.session is self:
                self.device.session = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(device: QpuDevice, num_qubits: int, num_clbits: int, shots: int = 1) -> Session:
    if device.session is not None:
        raise DeviceError(f"{device.device_id} already has an open session")
    session = Session(device, num_qubits, num_clbits, shots)
    device.session = session
    return session


def run_fragment(session: Session, fragment: qc.Circuit) -> FragmentResult:
    return session.run_fragment(fragment)


def close_session(session: Session) -> None:
    session.close()


def make_devices(count: int, seed: int, noise: NoiseParams | None = None,
                 latency: LatencyModel | None = None, max_qubits: int = sv.MAX_QUBITS) -> list[QpuDevice]:
    """``count`` devices with independent streams derived from one seed."""
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [
        QpuDevice(f"qpu{i}", max_qubits, noise or NoiseParams(), latency or LATENCY_PRESETS["tight"], int(s))
        for i, s in enumerate(seeds)
    ]
