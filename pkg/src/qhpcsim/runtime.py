"""Discrete-event hybrid task runtime.

Tasks are circuit jobs (whole submissions), quantum fragments (stages of a
session), and classical callbacks. Dependencies are the explicit ones plus
resource hazards inferred in creation order:

* fragments of the same session touching a common qubit, unless every
  shared qubit is acted on only diagonally by both (such fragments commute);
* any pair where one writes a classical bit ``(register, bit)`` the other
  reads or writes.

Both schedulers run on a virtual clock. ``run_sync`` executes one task at a
time. ``run_async`` is an event-driven list scheduler with a FIFO ready queue
per resource class. Classical callbacks may append tasks while they run
(dynamic graphs). Appended tasks always depend on their creator.
"""
from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence, Union

from . import circuit as qc
from .qpu import QpuDevice, Session

CPU = "cpu"
PENDING, RUNNING, DONE, FAILED = "pending", "running", "done", "failed"
_STATUS_ORDER = {PENDING: 0, RUNNING: 1, DONE: 2, FAILED: 2}

CregRef = tuple[str, int]


@dataclass(frozen=True)
class CircuitJob:
    circuit: qc.Circuit
    shots: int
    device: Optional[str] = None
    creg: str = "c"
    kind = "circuit"


@dataclass(frozen=True)
class QuantumFragment:
    fragment: qc.Circuit
    session: Session
    kind = "fragment"


@dataclass(frozen=True)
class Classical:
    name: str
    fn: Callable[["TaskContext"], Any]
    reads: tuple[CregRef, ...] = ()
    writes: tuple[CregRef, ...] = ()
    kind = "classical"


Payload = Union[CircuitJob, QuantumFragment, Classical]


@dataclass(frozen=True)
class TaskFootprint:
    scope: Optional[str] = None
    qubits: frozenset = frozenset()
    diagonal: frozenset = frozenset()
    reads: frozenset = frozenset()
    writes: frozenset = frozenset()


def task_footprint(payload: Payload) -> TaskFootprint:
    if isinstance(payload, CircuitJob):
        # a job gets a fresh register per shot: only its classical writes escape
        fp = qc.footprint(payload.circuit)
        return TaskFootprint(writes=frozenset((payload.creg, b) for b in fp.clbits_written))
    if isinstance(payload, QuantumFragment):
        fp = qc.footprint(payload.fragment)
        reg = payload.session.register
        return TaskFootprint(
            scope=reg,
            qubits=fp.qubits,
            diagonal=qc.diagonal_qubits(payload.fragment),
            reads=frozenset((reg, b) for b in fp.clbits_read),
            writes=frozenset((reg, b) for b in fp.clbits_written),
        )
    return TaskFootprint(reads=frozenset(payload.reads), writes=frozenset(payload.writes))


def conflicts(a: TaskFootprint, b: TaskFootprint) -> bool:
    if a.writes & (b.reads | b.writes) or a.reads & b.writes:
        return True
    if a.scope is not None and a.scope == b.scope:
        shared = a.qubits & b.qubits
        return bool(shared - (a.diagonal & b.diagonal))
    return False


@dataclass
class Task:
    task_id: int
    payload: Payload
    explicit_deps: frozenset
    classical_cost: float = 0.0
    order: tuple = ()
    creator: Optional[int] = None
    footprint: TaskFootprint = field(default_factory=TaskFootprint)

    @property
    def kind(self) -> str:
        return self.payload.kind

    @property
    def label(self) -> str:
        return self.payload.name if isinstance(self.payload, Classical) else self.kind


class TaskGraph:
    """Append-only task DAG; ids are assigned in creation order."""

    def __init__(self, dynamic: bool = True, first_id: int = 0, ids: Optional[Iterable[int]] = None):
        self.dynamic = dynamic
        self.tasks: list[Task] = []
        self._index: dict[int, Task] = {}
        self._deps: dict[int, frozenset] = {}
        self._ids = iter(ids) if ids is not None else itertools.count(first_id)
        self._children: dict[int, itertools.count] = {}
        self._root_seq = itertools.count()
        self._creator: Optional[int] = None
        self._sealed = False

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, task_id: int) -> Task:
        return self._index[task_id]

    def dependencies(self, task_id: int) -> frozenset:
        return self._deps[task_id]

    def add_circuit_job(self, circuit: qc.Circuit, shots: int, device: Optional[str] = None,
                        deps: Iterable[int] = (), creg: str = "c") -> int:
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        return self._add(CircuitJob(circuit, shots, device, creg), deps, 0.0)

    def add_fragment(self, session: Session, fragment: qc.Circuit, deps: Iterable[int] = ()) -> int:
        return self._add(QuantumFragment(fragment, session), deps, 0.0)

    def add_classical(self, name: str, fn: Callable[["TaskContext"], Any], reads: Iterable[CregRef] = (),
                      deps: Iterable[int] = (), cost: float = 0.0, writes: Iterable[CregRef] = ()) -> int:
        if cost < 0:
            raise ValueError("classical cost must be >= 0")
        return self._add(Classical(name, fn, tuple(reads), tuple(writes)), deps, float(cost))

    def _add(self, payload: Payload, deps: Iterable[int], cost: float) -> int:
        if self._sealed:
            if not self.dynamic:
                raise RuntimeError("graph is static; tasks cannot be appended while it runs")
            if self._creator is None:
                raise RuntimeError("tasks may only be appended from a running classical task")
        deps = set(deps)
        unknown = [d for d in deps if d not in self._index]
        if unknown:
            # deps must already exist, which keeps the graph acyclic
            raise ValueError(f"unknown dependency ids {sorted(unknown)}")
        tid = next(self._ids)
        if self._creator is not None:
            deps.add(self._creator)
            parent = self._index[self._creator]
            seq = self._children.setdefault(self._creator, itertools.count())
            order = parent.order + (next(seq),)
        else:
            order = (next(self._root_seq),)
        fp = task_footprint(payload)
        task = Task(tid, payload, frozenset(deps), cost, order, self._creator, fp)
        hazards = {t.task_id for t in self.tasks if conflicts(t.footprint, fp)}
        self.tasks.append(task)
        self._index[tid] = task
        self._deps[tid] = frozenset(deps | hazards)
        return tid


def infer_dependencies(graph: TaskGraph) -> set[tuple[int, int]]:
    """All edges (earlier, later): explicit deps plus pairwise resource hazards."""
    edges = {(d, t.task_id) for t in graph.tasks for d in t.explicit_deps}
    for i, a in enumerate(graph.tasks):
        for b in graph.tasks[i + 1:]:
            if conflicts(a.footprint, b.footprint):
                edges.add((a.task_id, b.task_id))
    return edges


@dataclass
class TaskHandle:
    task_id: int
    status: str = PENDING
    result: Any = None
    error: Optional[BaseException] = None

    def advance(self, status: str) -> None:
        if _STATUS_ORDER[status] <= _STATUS_ORDER[self.status] and status != self.status:
            raise RuntimeError(f"task {self.task_id}: illegal transition {self.status} -> {status}")
        self.status = status


@dataclass(frozen=True)
class TraceEvent:
    task_id: int
    resource: str
    t_submit: float
    t_start: float
    t_end: float
    kind: str = ""


@dataclass
class TaskContext:
    """What a classical callback sees: finished results and the graph to extend."""

    task_id: int
    graph: TaskGraph
    handles: dict[int, TaskHandle]
    now: float

    def result(self, task_id: int) -> Any:
        h = self.handles[task_id]
        if h.status != DONE:
            raise RuntimeError(f"task {task_id} has no result (status {h.status})")
        return h.result


class _Runner:
    def __init__(self, graph: TaskGraph, devices: Sequence[QpuDevice], start: float):
        self.graph = graph
        self.devices = list(devices)
        self.by_id = {d.device_id: d for d in self.devices}
        self.handles: dict[int, TaskHandle] = {}
        self.trace: list[TraceEvent] = []
        self.start = start

    def handle(self, tid: int) -> TaskHandle:
        if tid not in self.handles:
            self.handles[tid] = TaskHandle(tid)
        return self.handles[tid]

    def open_tasks(self) -> list[Task]:
        return [t for t in self.graph.tasks if self.handle(t.task_id).status == PENDING]

    def dep_state(self, task: Task) -> str:
        states = [self.handle(d).status for d in self.graph.dependencies(task.task_id)]
        if FAILED in states:
            return FAILED
        return DONE if all(s == DONE for s in states) else PENDING

    def candidates(self, task: Task) -> list[str]:
        p = task.payload
        if isinstance(p, Classical):
            return [CPU]
        if isinstance(p, QuantumFragment):
            return [p.session.device.device_id]
        if p.device is not None:
            return [p.device] if p.device in self.by_id else []
        return [d.device_id for d in self.devices if d.session is None]

    def execute(self, task: Task, resource: str, now: float) -> tuple[float, Any, Optional[BaseException]]:
        p = task.payload
        try:
            if isinstance(p, CircuitJob):
                res = self.by_id[resource].submit(p.circuit, p.shots, clock=now)
                return res.model_exec_time, res, None
            if isinstance(p, QuantumFragment):
                res = p.session.run_fragment(p.fragment)
                return res.model_exec_time, res, None
            self.graph._creator = task.task_id
            try:
                out = p.fn(TaskContext(task.task_id, self.graph, self.handles, now))
            finally:
                self.graph._creator = None
            return task.classical_cost, out, None
        except Exception as exc:  # noqa: BLE001 - task failure is data, not control flow
            return 0.0, None, exc

    def finish(self, tid: int, result: Any, error: Optional[BaseException]) -> None:
        h = self.handle(tid)
        h.result, h.error = result, error
        h.advance(FAILED if error is not None else DONE)

    def fail(self, tid: int, error: BaseException) -> None:
        h = self.handle(tid)
        h.error = error
        h.advance(FAILED)


class DependencyFailed(RuntimeError):
    pass


def run_sync(graph: TaskGraph, devices: Sequence[QpuDevice], start: float = 0.0):
    """One task at a time in creation order; appended tasks run right after their creator.

    Returns ``(handles, trace)``.
    """
    r = _Runner(graph, devices, start)
    clock = start
    graph._sealed = True
    try:
        while True:
            ready = [t for t in r.open_tasks() if r.dep_state(t) != PENDING]
            if not ready:
                break
            task = min(ready, key=lambda t: t.order)
            if r.dep_state(task) == FAILED:
                r.fail(task.task_id, DependencyFailed(f"task {task.task_id}: a dependency failed"))
                continue
            cands = r.candidates(task)
            if not cands:
                r.fail(task.task_id, RuntimeError(f"task {task.task_id}: no eligible resource"))
                continue
            r.handle(task.task_id).advance(RUNNING)
            dur, out, err = r.execute(task, cands[0], clock)
            r.trace.append(TraceEvent(task.task_id, cands[0], clock, clock, clock + dur, task.kind))
            clock += dur
            r.finish(task.task_id, out, err)
    finally:
        graph._sealed = False
    for t in r.open_tasks():
        r.fail(t.task_id, RuntimeError("unschedulable"))
    return r.handles, r.trace


def run_async(graph: TaskGraph, devices: Sequence[QpuDevice], start: float = 0.0):
    """Event-driven list scheduling on a virtual clock.

    A task is submitted when its last dependency completes. Quantum tasks go to
    the first idle eligible device in device-list order, otherwise they wait
    FIFO. Classical tasks share one CPU lane. Returns ``(handles, trace)``.
    """
    r = _Runner(graph, devices, start)
    now = start
    busy: dict[str, bool] = {}
    submitted: dict[int, float] = {}
    queue: list[tuple[float, tuple, int]] = []
    events: list[tuple[float, int, int, str]] = []
    seq = itertools.count()
    pending: dict[int, tuple] = {}

    def release() -> None:
        changed = True
        while changed:
            changed = False
            for t in r.open_tasks():
                if t.task_id in submitted:
                    continue
                state = r.dep_state(t)
                if state == FAILED:
                    r.fail(t.task_id, DependencyFailed(f"task {t.task_id}: a dependency failed"))
                    changed = True
                elif state == DONE:
                    submitted[t.task_id] = now
                    queue.append((now, t.order, t.task_id))
        queue.sort()

    def dispatch() -> None:
        for entry in list(queue):
            task = graph[entry[2]]
            cands = r.candidates(task)
            if not cands:
                queue.remove(entry)
                r.fail(task.task_id, RuntimeError(f"task {task.task_id}: no eligible resource"))
                continue
            res = next((c for c in cands if not busy.get(c, False)), None)
            if res is None:
                continue
            queue.remove(entry)
            busy[res] = True
            r.handle(task.task_id).advance(RUNNING)
            dur, out, err = r.execute(task, res, now)
            pending[task.task_id] = (out, err)
            r.trace.append(TraceEvent(task.task_id, res, submitted[task.task_id], now, now + dur, task.kind))
            heapq.heappush(events, (now + dur, next(seq), task.task_id, res))

    graph._sealed = True
    try:
        while True:
            release()
            dispatch()
            if not events:
                break
            now = events[0][0]
            while events and events[0][0] == now:
                _, _, tid, res = heapq.heappop(events)
                busy[res] = False
                r.finish(tid, *pending.pop(tid))
    finally:
        graph._sealed = False
    for t in r.open_tasks():
        r.fail(t.task_id, RuntimeError("unschedulable"))
    return r.handles, r.trace


# ---------------------------------------------------------------------------
# metrics and serialization

@dataclass
class Metrics:
    makespan: float = 0.0
    busy: dict[str, float] = field(default_factory=dict)
    utilization: dict[str, float] = field(default_factory=dict)
    cpu_busy: float = 0.0
    wait: dict[int, float] = field(default_factory=dict)

    def device_utilization(self) -> dict[str, float]:
        return {k: v for k, v in self.utilization.items() if k != CPU}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wait"] = {str(k): v for k, v in self.wait.items()}
        return d


def compute_metrics(trace: Sequence[TraceEvent], resources: Iterable[str] = ()) -> Metrics:
    """Metrics from a trace; ``resources`` lists lanes to report even when idle."""
    if not trace:
        return Metrics()
    makespan = max(e.t_end for e in trace) - min(e.t_submit for e in trace)
    busy: dict[str, float] = {r: 0.0 for r in resources}
    for e in trace:
        busy[e.resource] = busy.get(e.resource, 0.0) + (e.t_end - e.t_start)
    util = {k: (v / makespan if makespan > 0 else 0.0) for k, v in busy.items()}
    return Metrics(
        makespan=makespan,
        busy=dict(sorted(busy.items())),
        utilization=dict(sorted(util.items())),
        cpu_busy=busy.get(CPU, 0.0),
        wait={e.task_id: e.t_start - e.t_submit for e in trace},
    )


class Runtime:
    """Stateful front end: owns the devices, the model clock and the accumulated trace.

    Successive :meth:`run` calls continue the clock, so an algorithm that
    issues several graphs produces one contiguous timeline.
    """

    def __init__(self, devices: Sequence[QpuDevice], mode: str = "sync"):
        if not devices:
            raise ValueError("runtime needs at least one device")
        if mode not in ("sync", "async"):
            raise ValueError(f"mode must be 'sync' or 'async', got {mode!r}")
        self.devices = list(devices)
        self.mode = mode
        self.clock = 0.0
        self.trace: list[TraceEvent] = []
        self.handles: dict[int, TaskHandle] = {}
        self._ids = itertools.count()

    def device(self, device_id: Optional[str] = None) -> QpuDevice:
        if device_id is None:
            return self.devices[0]
        for d in self.devices:
            if d.device_id == device_id:
                return d
        raise KeyError(device_id)

    def new_graph(self, dynamic: bool = True) -> TaskGraph:
        return TaskGraph(dynamic=dynamic, ids=self._ids)

    def run(self, graph: TaskGraph, mode: Optional[str] = None) -> dict[int, TaskHandle]:
        runner = run_async if (mode or self.mode) == "async" else run_sync
        handles, trace = runner(graph, self.devices, start=self.clock)
        self.trace.extend(trace)
        self.handles.update(handles)
        if trace:
            self.clock = max(self.clock, max(e.t_end for e in trace))
        return handles

    def metrics(self) -> Metrics:
        return compute_metrics(self.trace, [d.device_id for d in self.devices] + [CPU])

    @property
    def failed(self) -> list[int]:
        return sorted(t for t, h in self.handles.items() if h.status == FAILED)


def trace_document(scenario: str, trace: Sequence[TraceEvent], resources: Iterable[str] = ()) -> dict:
    return {
        "scenario": scenario,
        "events": [
            {"task_id": e.task_id, "resource": e.resource, "t_submit": e.t_submit,
             "t_start": e.t_start, "t_end": e.t_end}
            for e in trace
        ],
        "metrics": compute_metrics(trace, resources).to_dict(),
    }


def dumps_trace(scenario: str, trace: Sequence[TraceEvent], resources: Iterable[str] = ()) -> str:
    return json.dumps(trace_document(scenario, trace, resources), indent=2) + "\n"


CSV_HEADER = ("task_id", "kind", "resource", "t_submit", "t_start", "t_end", "wait")


def dumps_metrics_csv(trace: Sequence[TraceEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in trace:
        w.writerow([e.task_id, e.kind, e.resource, repr(e.t_submit), repr(e.t_start),
                    repr(e.t_end), repr(e.t_start - e.t_submit)])
    return buf.getvalue()


def check_trace_document(doc: dict) -> list[str]:
    """Schema check for a trace document; returns problems found."""
    problems = []
    for key in ("scenario", "events", "metrics"):
        if key not in doc:
            problems.append(f"missing key {key!r}")
    for i, ev in enumerate(doc.get("events", [])):
        for key in ("task_id", "resource", "t_submit", "t_start", "t_end"):
            if key not in ev:
                problems.append(f"event {i}: missing {key!r}")
        if all(k in ev for k in ("t_submit", "t_start", "t_end")):
            if not ev["t_submit"] <= ev["t_start"] <= ev["t_end"]:
                problems.append(f"event {i}: times out of order")
    return problems


def check_schedule(graph: TaskGraph, trace: Sequence[TraceEvent]) -> list[str]:
    """Dependency-respect and resource-exclusivity violations in a trace."""
    problems = []
    by_task = {e.task_id: e for e in trace}
    for e in trace:
        for d in graph.dependencies(e.task_id):
            if d in by_task and by_task[d].t_end > e.t_start:
                problems.append(f"task {e.task_id} starts before dependency {d} ends")
            if d not in by_task:
                problems.append(f"task {e.task_id} ran although dependency {d} did not")
    lanes: dict[str, list[TraceEvent]] = {}
    for e in trace:
        lanes.setdefault(e.resource, []).append(e)
    for res, evs in lanes.items():
        evs.sort(key=lambda e: (e.t_start, e.t_end))
        for a, b in zip(evs, evs[1:]):
            if b.t_start < a.t_end:
                problems.append(f"{res}: tasks {a.task_id} and {b.task_id} overlap")
    return problems
