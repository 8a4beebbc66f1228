"""Gate-level circuit IR with classical conditions.

A :class:`Circuit` is an immutable instruction list over ``num_qubits`` qubits
and ``num_clbits`` classical bits. Helper constructors (:func:`h`,
:func:`measure`, ...) build :class:`Instruction` values; ``condition`` is a
``(clbit, value)`` pair that gates execution per shot.

Text format, one instruction per line::

    circuit qubits=2 clbits=1
    h q0
    cphasepow lambda=3.141592653589793 k=4 q0 q1
    measure q0 -> c0
    x q1 if c0=1
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional

from .errors import CircuitValidationError

# kind -> (qubit arity, parameter names)
KINDS: dict[str, tuple[int, tuple[str, ...]]] = {
    "h": (1, ()),
    "x": (1, ()),
    "s": (1, ()),
    "sdg": (1, ()),
    "rz": (1, ("theta",)),
    "ry": (1, ("theta",)),
    "cnot": (2, ()),
    "cphasepow": (2, ("lambda", "k")),
    "measure": (1, ()),
    "reset": (1, ()),
    "noise": (1, ("kind", "p")),
    "prep_phase": (1, ("theta",)),
}
UNITARY_KINDS = frozenset({"h", "x", "s", "sdg", "rz", "ry", "cnot", "cphasepow", "prep_phase"})
# gates diagonal in the computational basis on every qubit they touch
DIAGONAL_KINDS = frozenset({"s", "sdg", "rz", "cphasepow"})
NOISE_KINDS = ("bitflip", "depolarizing")


@dataclass(frozen=True)
class Instruction:
    kind: str
    qubits: tuple[int, ...]
    params: tuple = ()
    clbit: Optional[int] = None
    condition: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        arity, names = KINDS[self.kind]
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} takes {arity} qubit(s), got {len(self.qubits)}")
        if len(self.params) != len(names):
            raise ValueError(f"{self.kind} takes parameters {names}, got {self.params}")
        if (self.kind == "measure") != (self.clbit is not None):
            raise ValueError("measure needs exactly one classical destination; other kinds none")

    @property
    def is_unitary(self) -> bool:
        return self.kind in UNITARY_KINDS

    def with_condition(self, clbit: int, value: int) -> "Instruction":
        return replace(self, condition=(clbit, value))

    def clbits_read(self) -> set[int]:
        return {self.condition[0]} if self.condition is not None else set()

    def clbits_written(self) -> set[int]:
        return {self.clbit} if self.clbit is not None else set()

    def inverse(self) -> "Instruction":
        k = self.kind
        if k in ("h", "x", "cnot"):
            return self
        if k in ("s", "sdg"):
            return replace(self, kind="sdg" if k == "s" else "s")
        if k in ("rz", "ry"):
            return replace(self, params=(-self.params[0],))
        if k == "cphasepow":
            lam, power = self.params
            return replace(self, params=(-lam, power))
        raise ValueError(f"{k} has no inverse in the instruction set")


def _cond(condition) -> Optional[tuple[int, int]]:
    return None if condition is None else (int(condition[0]), int(condition[1]))


def h(q: int, condition=None) -> Instruction:
    return Instruction("h", (q,), condition=_cond(condition))


def x(q: int, condition=None) -> Instruction:
    return Instruction("x", (q,), condition=_cond(condition))


def s(q: int, condition=None) -> Instruction:
    return Instruction("s", (q,), condition=_cond(condition))


def sdg(q: int, condition=None) -> Instruction:
    return Instruction("sdg", (q,), condition=_cond(condition))


def rz(theta: float, q: int, condition=None) -> Instruction:
    return Instruction("rz", (q,), (float(theta),), condition=_cond(condition))


def ry(theta: float, q: int, condition=None) -> Instruction:
    return Instruction("ry", (q,), (float(theta),), condition=_cond(condition))


def cnot(control: int, target: int, condition=None) -> Instruction:
    return Instruction("cnot", (control, target), condition=_cond(condition))


def cphasepow(lam: float, power: int, control: int, target: int, condition=None) -> Instruction:
    return Instruction("cphasepow", (control, target), (float(lam), int(power)), condition=_cond(condition))


def measure(q: int, c: int, condition=None) -> Instruction:
    return Instruction("measure", (q,), clbit=c, condition=_cond(condition))


def reset(q: int, condition=None) -> Instruction:
    return Instruction("reset", (q,), condition=_cond(condition))


def noise(kind: str, p: float, q: int, condition=None) -> Instruction:
    return Instruction("noise", (q,), (kind, float(p)), condition=_cond(condition))


def prep_phase(theta: float, q: int, condition=None) -> Instruction:
    return Instruction("prep_phase", (q,), (float(theta),), condition=_cond(condition))


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    num_clbits: int = 0
    instructions: tuple[Instruction, ...] = ()
    # readout_permutation[j] = logical output bit held by qubit j (None = identity)
    readout_permutation: Optional[tuple[int, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(
            max(self.num_qubits, other.num_qubits),
            max(self.num_clbits, other.num_clbits),
            self.instructions + other.instructions,
        )

    def append(self, *instructions: Instruction) -> "Circuit":
        return replace(self, instructions=self.instructions + tuple(instructions))

    def inverse(self) -> "Circuit":
        return replace(self, instructions=tuple(i.inverse() for i in reversed(self.instructions)),
                       readout_permutation=None)

    @property
    def num_measurements(self) -> int:
        return sum(1 for i in self.instructions if i.kind == "measure")

    def gate_count(self) -> int:
        return sum(1 for i in self.instructions if i.is_unitary)

    def to_text(self) -> str:
        return dumps(self)


def validate(circuit: Circuit, prewritten: Iterable[int] = ()) -> list[str]:
    """Return every invariant violation; an empty list means executable.

    ``prewritten`` names classical bits already written before this circuit
    runs (earlier fragments of a session).
    """
    diags: list[str] = []
    if circuit.num_qubits < 1:
        diags.append(f"num_qubits must be >= 1, got {circuit.num_qubits}")
    if circuit.num_clbits < 0:
        diags.append(f"num_clbits must be >= 0, got {circuit.num_clbits}")
    written = set(prewritten)
    for pos, ins in enumerate(circuit.instructions):
        where = f"instruction {pos} ({ins.kind})"
        for q in ins.qubits:
            if not 0 <= q < circuit.num_qubits:
                diags.append(f"{where}: qubit {q} out of range")
        if len(set(ins.qubits)) != len(ins.qubits):
            diags.append(f"{where}: repeated qubit index {ins.qubits}")
        if ins.condition is not None:
            bit, value = ins.condition
            if not 0 <= bit < circuit.num_clbits:
                diags.append(f"{where}: condition creg out of range (c{bit})")
            elif bit not in written:
                diags.append(f"{where}: condition reads unwritten bit c{bit}")
            if value not in (0, 1):
                diags.append(f"{where}: condition value must be 0 or 1, got {value}")
        if ins.kind == "measure":
            if not 0 <= ins.clbit < circuit.num_clbits:
                diags.append(f"{where}: creg out of range (c{ins.clbit})")
            else:
                written.add(ins.clbit)
        elif ins.kind == "cphasepow":
            lam, power = ins.params
            if power < 1:
                diags.append(f"{where}: power must be >= 1, got {power}")
            if not math.isfinite(lam):
                diags.append(f"{where}: non-finite angle")
        elif ins.kind == "noise":
            kind, p = ins.params
            if kind not in NOISE_KINDS:
                diags.append(f"{where}: unknown noise kind {kind!r}")
            if not 0.0 <= p <= 1.0:
                diags.append(f"{where}: noise probability {p} outside [0, 1]")
        elif ins.params and not all(math.isfinite(v) for v in ins.params):
            diags.append(f"{where}: non-finite angle")
    return diags


def check(circuit: Circuit, prewritten: Iterable[int] = ()) -> None:
    diags = validate(circuit, prewritten)
    if diags:
        raise CircuitValidationError(diags)


def _resources(ins: Instruction) -> list:
    res: list = [("q", q) for q in ins.qubits]
    res += [("c", c) for c in ins.clbits_read() | ins.clbits_written()]
    return res


def moments(circuit: Circuit) -> list[list[Instruction]]:
    """Greedy ASAP packing; classical bits are resources like qubits."""
    check(circuit, prewritten=range(circuit.num_clbits))
    last: dict = {}
    layers: list[list[Instruction]] = []
    for ins in circuit.instructions:
        res = _resources(ins)
        slot = max((last.get(r, -1) for r in res), default=-1) + 1
        for r in res:
            last[r] = slot
        if slot == len(layers):
            layers.append([])
        layers[slot].append(ins)
    return layers


def depth(circuit: Circuit) -> int:
    return len(moments(circuit))


class Footprint(NamedTuple):
    qubits: frozenset
    clbits_read: frozenset
    clbits_written: frozenset


def footprint(circuit: Circuit) -> Footprint:
    qubits: set[int] = set()
    reads: set[int] = set()
    writes: set[int] = set()
    for ins in circuit.instructions:
        qubits.update(ins.qubits)
        reads |= ins.clbits_read()
        writes |= ins.clbits_written()
    return Footprint(frozenset(qubits), frozenset(reads), frozenset(writes))


def diagonal_qubits(circuit: Circuit) -> frozenset:
    """Qubits touched only by unconditioned computational-basis-diagonal gates.

    Two circuits whose shared qubits are all diagonal-only in both commute.
    """
    touched: set[int] = set()
    other: set[int] = set()
    for ins in circuit.instructions:
        touched.update(ins.qubits)
        if ins.kind not in DIAGONAL_KINDS or ins.condition is not None:
            other.update(ins.qubits)
    return frozenset(touched - other)


def build_iqft(m: int) -> Circuit:
    """Inverse QFT on qubits 0..m-1 without SWAP gates.

    Applied to the Fourier state of integer ``x`` (qubit j carrying phase
    2*pi*x*2**j / 2**m), qubit j ends in bit m-1-j of ``x``. The circuit's
    ``readout_permutation`` records that reversal for classical decoding.
    """
    if not 1 <= m <= 10:
        raise ValueError(f"m must be in [1, 10], got {m}")
    ins: list[Instruction] = []
    for j in range(m - 1, -1, -1):
        for i in range(j + 1, m):
            ins.append(cphasepow(-math.pi / 2 ** (i - j), 1, i, j))
        ins.append(h(j))
    return Circuit(m, 0, ins, readout_permutation=tuple(m - 1 - j for j in range(m)))


# ---------------------------------------------------------------------------
# text round trip

def _fmt(v: float) -> str:
    return repr(float(v))


def _dump_instruction(ins: Instruction) -> str:
    words = [ins.kind]
    names = KINDS[ins.kind][1]
    for name, value in zip(names, ins.params):
        if isinstance(value, str):
            words.append(f"{name}={value}")
        elif name == "k":
            words.append(f"k={int(value)}")
        else:
            words.append(f"{name}={_fmt(value)}")
    words += [f"q{q}" for q in ins.qubits]
    if ins.kind == "measure":
        words += ["->", f"c{ins.clbit}"]
    if ins.condition is not None:
        words += ["if", f"c{ins.condition[0]}={ins.condition[1]}"]
    return " ".join(words)


def dumps(circuit: Circuit) -> str:
    lines = [f"circuit qubits={circuit.num_qubits} clbits={circuit.num_clbits}"]
    lines += [_dump_instruction(i) for i in circuit.instructions]
    return "\n".join(lines) + "\n"


_COND_RE = re.compile(r"^c(\d+)=([01])$")


def _parse_instruction(line: str, lineno: int) -> Instruction:
    words = line.split()
    kind, rest = words[0], words[1:]
    if kind not in KINDS:
        raise ValueError(f"line {lineno}: unknown instruction {kind!r}")
    condition = None
    if "if" in rest:
        at = rest.index("if")
        if at != len(rest) - 2 or not _COND_RE.match(rest[-1]):
            raise ValueError(f"line {lineno}: malformed condition")
        mc = _COND_RE.match(rest[-1])
        condition = (int(mc.group(1)), int(mc.group(2)))
        rest = rest[:at]
    clbit = None
    if "->" in rest:
        at = rest.index("->")
        if at != len(rest) - 2 or not re.fullmatch(r"c\d+", rest[-1]):
            raise ValueError(f"line {lineno}: malformed measurement target")
        clbit = int(rest[-1][1:])
        rest = rest[:at]
    kv = dict(w.split("=", 1) for w in rest if "=" in w)
    qubits = []
    for w in rest:
        if "=" in w:
            continue
        if not re.fullmatch(r"q\d+", w):
            raise ValueError(f"line {lineno}: bad operand {w!r}")
        qubits.append(int(w[1:]))
    params = []
    for name in KINDS[kind][1]:
        if name not in kv:
            raise ValueError(f"line {lineno}: {kind} missing parameter {name}")
        raw = kv.pop(name)
        params.append(raw if name == "kind" else int(raw) if name == "k" else float(raw))
    if kv:
        raise ValueError(f"line {lineno}: unexpected parameters {sorted(kv)}")
    return Instruction(kind, tuple(qubits), tuple(params), clbit=clbit, condition=condition)


def loads(text: str) -> Circuit:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [(n, ln) for n, ln in enumerate(lines, 1) if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty circuit text")
    head = re.fullmatch(r"circuit qubits=(\d+) clbits=(\d+)", lines[0][1])
    if head is None:
        raise ValueError("first line must be 'circuit qubits=N clbits=M'")
    body = [_parse_instruction(ln, n) for n, ln in lines[1:]]
    return Circuit(int(head.group(1)), int(head.group(2)), body)
