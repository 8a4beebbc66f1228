"""Variational angle search with an error-detecting preparation ancilla.

Qubit layout: data ``d`` = 0, flag ancilla ``a1`` = 1, rotation ancilla
``a2`` = 2 (``two_ancilla``) or the reset ``a1`` (``single_ancilla``).
Classical bits: c0 = preparation flag, c1 = gadget outcome s, c2 = data readout.

Per shot, inside one session:

(a) prepare d in |0> with an injected bit-flip, copy it onto a1 and measure.
    A 1 flags an error. Flagged shots reset d and a1 and retry, up to
    ``max_retries`` times. Shots still flagged afterwards are discarded.
(b) prepare a2 as (|0> + e^{i theta}|1>)/sqrt(2), entangle it with H|0> on d
    by a CNOT, and measure a2. Outcome s leaves d in Rz((1-2s) theta) H|0>,
    so the realized angle is +theta or -theta.
(c) measure d in the X or Y basis, or read the exact expectation in
    ``exact`` mode.

The classical side bins results by realized angle and returns the grid
argmin of c_x <X> + c_y <Y>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .. import circuit as qc
from ..qpu import Session, open_session
from ..runtime import Runtime, TaskContext, TaskGraph
from .phase import _raise_failures

VARIANTS = ("two_ancilla", "single_ancilla")
D, A1 = 0, 1
FLAG, GADGET, READOUT = 0, 1, 2


@dataclass(frozen=True)
class VqeProblem:
    c_x: float = 1.0
    c_y: float = 0.0
    p_inject: float = 0.0
    grid_points: int = 64
    shots_per_setting: int = 4096
    max_retries: int = 0
    variant: str = "two_ancilla"
    exact: bool = False
    classical_cost: float = 0.0

    def __post_init__(self):
        if self.grid_points < 4:
            raise ValueError(f"grid_points must be >= 4, got {self.grid_points}")
        if not 0.0 <= self.p_inject <= 1.0:
            raise ValueError(f"p_inject must be in [0, 1], got {self.p_inject}")
        if self.shots_per_setting < 1:
            raise ValueError("shots_per_setting must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def num_qubits(self) -> int:
        return 3 if self.variant == "two_ancilla" else 2

    @property
    def rotation_qubit(self) -> int:
        return 2 if self.variant == "two_ancilla" else A1

    def grid(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.grid_points) / self.grid_points

    def settings(self) -> list[tuple[str, float]]:
        used = [(axis, c) for axis, c in (("X", self.c_x), ("Y", self.c_y)) if c != 0]
        return used or [("X", self.c_x)]


@dataclass
class VqeResult:
    costs: dict[float, tuple[float, int]]
    best_angle: float
    best_cost: float
    acceptance_rate: float
    retries_used: dict[int, int]
    num_qubits: int
    missing_angles: list[float] = field(default_factory=list)
    shots_total: int = 0


def analytic_cost(c_x: float, c_y: float, alpha):
    """Exact cost of the state Rz(alpha) H|0>."""
    return c_x * np.cos(alpha) + c_y * np.sin(alpha)


def analytic_minimum(c_x: float, c_y: float) -> tuple[float, float]:
    """(argmin in [0, 2 pi), min) of c_x cos a + c_y sin a."""
    return (math.atan2(c_y, c_x) + math.pi) % (2 * math.pi), -math.hypot(c_x, c_y)


# ---------------------------------------------------------------------------
# fragments

def prep_fragment(problem: VqeProblem) -> qc.Circuit:
    return qc.Circuit(problem.num_qubits, 3, [
        qc.noise("bitflip", problem.p_inject, D),
        qc.cnot(D, A1),
        qc.measure(A1, FLAG),
    ])


def retry_fragment(problem: VqeProblem) -> qc.Circuit:
    on_flag = (FLAG, 1)
    return qc.Circuit(problem.num_qubits, 3, [
        qc.reset(D, on_flag),
        qc.reset(A1, on_flag),
        qc.noise("bitflip", problem.p_inject, D, on_flag),
        qc.cnot(D, A1, on_flag),
        qc.measure(A1, FLAG, on_flag),
    ])


def ancilla_prep_fragment(problem: VqeProblem, theta: float) -> qc.Circuit:
    return qc.Circuit(problem.num_qubits, 3, [qc.prep_phase(theta, problem.rotation_qubit)])


def rotation_fragment(problem: VqeProblem, theta: float) -> qc.Circuit:
    ok = (FLAG, 0)
    a = problem.rotation_qubit
    ins = []
    if problem.variant == "single_ancilla":
        ins += [qc.reset(a), qc.prep_phase(theta, a, ok)]
    ins += [qc.h(D, ok), qc.cnot(D, a, ok), qc.measure(a, GADGET, ok)]
    return qc.Circuit(problem.num_qubits, 3, ins)


def readout_fragment(problem: VqeProblem, axis: str) -> qc.Circuit:
    ok = (FLAG, 0)
    basis = [qc.h(D, ok)] if axis == "X" else [qc.sdg(D, ok), qc.h(D, ok)]
    return qc.Circuit(problem.num_qubits, 3, basis + [qc.measure(D, READOUT, ok)])


# ---------------------------------------------------------------------------

class _Accumulator:
    def __init__(self, problem: VqeProblem):
        g = problem.grid_points
        self.sums = {axis: np.zeros(g) for axis in ("X", "Y")}
        self.counts = {axis: np.zeros(g, dtype=np.int64) for axis in ("X", "Y")}
        self.total = 0
        self.accepted = 0
        self.retries: dict[int, int] = {}

    def add(self, axis: str, k: int, grid_points: int, creg: np.ndarray, values: np.ndarray,
            retries: np.ndarray) -> None:
        ok = creg[:, FLAG] == 0
        realized = np.where(creg[:, GADGET] == 0, k, (-k) % grid_points)
        np.add.at(self.sums[axis], realized[ok], values[ok])
        np.add.at(self.counts[axis], realized[ok], 1)
        self.total += len(ok)
        self.accepted += int(ok.sum())
        for r, n in zip(*np.unique(retries, return_counts=True)):
            self.retries[int(r)] = self.retries.get(int(r), 0) + int(n)


def _build_setting(graph: TaskGraph, session: Session, problem: VqeProblem, k: int, axis: str,
                   acc: _Accumulator) -> None:
    theta = float(problem.grid()[k])
    reg = session.register
    retries = np.zeros(session.shots, dtype=np.int64)
    cost = problem.classical_cost
    if problem.variant == "two_ancilla":
        # a2 does not interact with stage (a): no dependency on it
        graph.add_fragment(session, ancilla_prep_fragment(problem, theta))
    graph.add_fragment(session, prep_fragment(problem))

    def finish(ctx: TaskContext) -> None:
        creg = session.creg.copy()
        if problem.exact:
            values = session.expectation(D, axis)
        else:
            values = 1.0 - 2.0 * creg[:, READOUT]
        acc.add(axis, k, problem.grid_points, creg, values, retries)

    def check_flag(ctx: TaskContext, attempt: int) -> int:
        flagged = session.creg[:, FLAG] == 1
        if flagged.any() and attempt < problem.max_retries:
            retries[flagged] += 1
            ctx.graph.add_fragment(session, retry_fragment(problem))
            ctx.graph.add_classical("check-flag", partial(check_flag, attempt=attempt + 1),
                                    reads=[(reg, FLAG)], cost=cost)
        else:
            ctx.graph.add_fragment(session, rotation_fragment(problem, theta))
            if not problem.exact:
                ctx.graph.add_fragment(session, readout_fragment(problem, axis))
            reads = [(reg, b) for b in (FLAG, GADGET) + (() if problem.exact else (READOUT,))]
            ctx.graph.add_classical("estimate", finish, reads=reads, cost=cost)
        return int(flagged.sum())

    graph.add_classical("check-flag", partial(check_flag, attempt=0), reads=[(reg, FLAG)], cost=cost)


def vqe_error_detected(problem: VqeProblem, runtime: Runtime, device: Optional[str] = None,
                       mode: str = "sync") -> VqeResult:
    dev = runtime.device(device)
    acc = _Accumulator(problem)
    for k in range(problem.grid_points):
        for axis, _ in problem.settings():
            with open_session(dev, problem.num_qubits, 3, problem.shots_per_setting) as session:
                graph = runtime.new_graph()
                _build_setting(graph, session, problem, k, axis, acc)
                _raise_failures(runtime.run(graph, mode))
    return _summarize(problem, acc)


def _summarize(problem: VqeProblem, acc: _Accumulator) -> VqeResult:
    grid = problem.grid()
    costs: dict[float, tuple[float, int]] = {}
    missing = []
    for idx, alpha in enumerate(grid):
        n = {axis: int(acc.counts[axis][idx]) for axis, _ in problem.settings()}
        if any(v == 0 for v in n.values()):
            missing.append(float(alpha))
            continue
        c = sum(coef * acc.sums[axis][idx] / n[axis] for axis, coef in problem.settings())
        costs[float(alpha)] = (float(c), sum(n.values()))
    if costs:
        best_angle = min(costs, key=lambda a: (costs[a][0], a))
        best_cost = costs[best_angle][0]
    else:
        best_angle, best_cost = math.nan, math.nan
    return VqeResult(
        costs=costs,
        best_angle=best_angle,
        best_cost=best_cost,
        acceptance_rate=acc.accepted / acc.total if acc.total else 0.0,
        retries_used=dict(sorted(acc.retries.items())),
        num_qubits=problem.num_qubits,
        missing_angles=missing,
        shots_total=acc.total,
    )
