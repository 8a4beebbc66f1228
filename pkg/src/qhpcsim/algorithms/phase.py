"""Phase estimation as task graphs.

The unitary is the diagonal phase gate U = diag(1, e^{2 pi i phi}) with
eigenstate |1>, so controlled-U^(2^j) is a single ``cphasepow`` instruction.

* :func:`ipe_sync` recovers bits least-significant first. Each iteration is a
  circuit job followed by a classical vote task, and the vote appends the
  next iteration with its phase correction.
* :func:`qpe_parallel` puts every precision bit in its own session fragment.
  These fragments commute and carry no mutual dependency. An inverse-QFT
  fragment then measures the counting register.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Mapping, Optional, Sequence, Union

from .. import circuit as qc
from ..qpu import _counts, open_session
from ..runtime import FAILED, Runtime, TaskContext, TaskGraph


@dataclass(frozen=True)
class PhaseEstimationProblem:
    phi_bits: tuple[int, ...]
    shots_per_bit: int = 1

    def __post_init__(self):
        bits = tuple(int(b) for b in self.phi_bits)
        object.__setattr__(self, "phi_bits", bits)
        if not 1 <= len(bits) <= 10:
            raise ValueError(f"need 1..10 phase bits, got {len(bits)}")
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"phase bits must be 0/1, got {bits}")
        if self.shots_per_bit < 1 or self.shots_per_bit % 2 == 0:
            raise ValueError(f"shots_per_bit must be odd and >= 1, got {self.shots_per_bit}")

    @classmethod
    def from_string(cls, phi: str, shots_per_bit: int = 1) -> "PhaseEstimationProblem":
        if not phi or set(phi) - {"0", "1"}:
            raise ValueError(f"phi must be a non-empty bit string, got {phi!r}")
        return cls(tuple(int(c) for c in phi), shots_per_bit)

    @property
    def m(self) -> int:
        return len(self.phi_bits)

    @property
    def phi(self) -> float:
        return decode_bits(self.phi_bits)


@dataclass
class IpeResult:
    bits: list[int]
    estimate: float
    per_bit_counts: list[dict[str, int]]
    num_qubits: int
    num_clbits: int
    depths: list[int] = field(default_factory=list)

    @property
    def max_depth(self) -> int:
        return max(self.depths, default=0)


@dataclass(frozen=True)
class PhaseEncoding:
    lam: float

    def prepare(self, target: int) -> qc.Instruction:
        return qc.x(target)

    def controlled_power(self, power: int, control: int, target: int) -> qc.Instruction:
        return qc.cphasepow(self.lam, power, control, target)


def encode_phase(phi_bits: Sequence[int]) -> PhaseEncoding:
    """Diagonal unitary with U|1> = e^{2 pi i phi}|1> for phi = 0.b1 b2 ... bm."""
    if len(phi_bits) == 0:
        raise ValueError("empty phase bit list")
    return PhaseEncoding(2 * math.pi * decode_bits(phi_bits))


def decode_bits(bits: Union[Sequence[int], Mapping[str, int]], m: Optional[int] = None,
                permutation: Optional[Sequence[int]] = None) -> float:
    """Binary fraction 0.b1 b2 ... bm.

    ``bits`` may be a counts mapping, in which case the most frequent key is
    decoded. With ``permutation``, ``bits`` is a raw register readout where
    entry j holds integer bit ``permutation[j]`` of round(phi * 2**m).
    """
    if isinstance(bits, Mapping):
        if not bits:
            raise ValueError("empty counts")
        key = min(bits, key=lambda k: (-bits[k], k))
        bits = [int(c) for c in key]
    bits = [int(b) for b in bits]
    m = len(bits) if m is None else m
    if len(bits) < m or m < 1:
        raise ValueError(f"need {m} bits, got {len(bits)}")
    bits = bits[:m]
    if permutation is not None:
        bits = register_to_phase_bits(bits, permutation)
    return sum(b * 2.0 ** -(k + 1) for k, b in enumerate(bits))


def register_to_phase_bits(raw: Sequence[int], permutation: Sequence[int]) -> list[int]:
    m = len(permutation)
    x = sum(int(raw[j]) << permutation[j] for j in range(m))
    return [(x >> (m - k)) & 1 for k in range(1, m + 1)]


def correction_angle(known_bits: Mapping[int, int], k: int) -> float:
    """Rz angle removing already-known lower bits from iteration ``k``.

    ``known_bits`` maps bit position j (1-based, j > k) to its value.
    """
    return -2 * math.pi * sum(b * 2.0 ** -(j - k + 1) for j, b in known_bits.items() if j > k)


def ipe_iteration_circuit(encoding: PhaseEncoding, k: int, m: int, omega: float) -> qc.Circuit:
    aux, eig = 0, 1
    return qc.Circuit(2, m, [
        encoding.prepare(eig),
        qc.h(aux),
        encoding.controlled_power(2 ** (k - 1), aux, eig),
        qc.rz(omega, aux),
        qc.h(aux),
        qc.measure(aux, k - 1),
    ])


class IpeRun:
    """Builds one iterative phase estimation into a task graph and collects its bits."""

    def __init__(self, problem: PhaseEstimationProblem, device: Optional[str] = None,
                 creg: str = "c", classical_cost: float = 0.0):
        self.problem = problem
        self.device = device
        self.creg = creg
        self.classical_cost = classical_cost
        self.encoding = encode_phase(problem.phi_bits)
        self.bits: dict[int, int] = {}
        self.counts: dict[int, dict[str, int]] = {}
        self.depths: dict[int, int] = {}

    def attach(self, graph: TaskGraph) -> None:
        self._iteration(graph, self.problem.m)

    def _iteration(self, graph: TaskGraph, k: int) -> None:
        m = self.problem.m
        circ = ipe_iteration_circuit(self.encoding, k, m, correction_angle(self.bits, k))
        self.depths[k] = qc.depth(circ)
        job = graph.add_circuit_job(circ, self.problem.shots_per_bit, self.device, creg=self.creg)
        graph.add_classical(f"vote-{self.creg}-{k}", partial(self._vote, k=k, job=job),
                            reads=[(self.creg, k - 1)], deps=[job], cost=self.classical_cost)

    def _vote(self, ctx: TaskContext, k: int, job: int) -> int:
        zeros, ones = ctx.result(job).bit_counts(k - 1)
        self.counts[k] = {"0": zeros, "1": ones}
        self.bits[k] = int(ones > zeros)
        if k > 1:
            self._iteration(ctx.graph, k - 1)
        return self.bits[k]

    def result(self) -> IpeResult:
        m = self.problem.m
        if len(self.bits) != m:
            raise RuntimeError(f"phase estimation incomplete: {len(self.bits)} of {m} bits")
        bits = [self.bits[k] for k in range(1, m + 1)]
        return IpeResult(
            bits=bits,
            estimate=decode_bits(bits),
            per_bit_counts=[self.counts[k] for k in range(1, m + 1)],
            num_qubits=2,
            num_clbits=m,
            depths=[self.depths[k] for k in range(m, 0, -1)],
        )


def _raise_failures(handles) -> None:
    for h in sorted(handles.values(), key=lambda h: h.task_id):
        if h.status == FAILED:
            raise RuntimeError(f"task {h.task_id} failed: {h.error}") from h.error


def ipe_sync(problem: PhaseEstimationProblem, runtime: Runtime, device: Optional[str] = None,
             mode: str = "sync", classical_cost: float = 0.0) -> IpeResult:
    run = IpeRun(problem, device, classical_cost=classical_cost)
    graph = runtime.new_graph()
    run.attach(graph)
    _raise_failures(runtime.run(graph, mode))
    return run.result()


def qpe_fragments(problem: PhaseEstimationProblem) -> list[qc.Circuit]:
    """Eigenstate prep, one fragment per counting qubit, then the IQFT barrier with readout."""
    m = problem.m
    eig, enc = m, encode_phase(problem.phi_bits)
    frags = [qc.Circuit(m + 1, m, [enc.prepare(eig)])]
    for j in range(m):
        frags.append(qc.Circuit(m + 1, m, [qc.h(j), enc.controlled_power(2 ** j, j, eig)]))
    iqft = qc.build_iqft(m)
    readout = [qc.measure(j, j) for j in range(m)]
    frags.append(qc.Circuit(m + 1, m, iqft.instructions + tuple(readout),
                            readout_permutation=iqft.readout_permutation))
    return frags


def qpe_circuit(problem: PhaseEstimationProblem) -> qc.Circuit:
    frags = qpe_fragments(problem)
    out = frags[0]
    for f in frags[1:]:
        out = out + f
    return qc.Circuit(out.num_qubits, out.num_clbits, out.instructions,
                      readout_permutation=frags[-1].readout_permutation)


def qpe_parallel(problem: PhaseEstimationProblem, runtime: Runtime, device: Optional[str] = None,
                 mode: str = "async") -> IpeResult:
    m = problem.m
    dev = runtime.device(device)
    frags = qpe_fragments(problem)
    perm = frags[-1].readout_permutation
    with open_session(dev, m + 1, m, problem.shots_per_bit) as session:
        graph = runtime.new_graph()
        for f in frags:
            graph.add_fragment(session, f)
        _raise_failures(runtime.run(graph, mode))
        creg = session.creg.copy()
    counts = _counts(creg)
    key = min(counts, key=lambda k: (-counts[k], k))
    bits = register_to_phase_bits([int(c) for c in key], perm)
    per_bit = []
    for k in range(1, m + 1):
        j = list(perm).index(m - k)
        ones = int(creg[:, j].sum())
        per_bit.append({"0": problem.shots_per_bit - ones, "1": ones})
    return IpeResult(
        bits=bits,
        estimate=decode_bits(bits),
        per_bit_counts=per_bit,
        num_qubits=m + 1,
        num_clbits=m,
        depths=[qc.depth(qpe_circuit(problem))],
    )
