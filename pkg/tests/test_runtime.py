import json

import numpy as np
import pytest

from qhpcsim import circuit as qc
from qhpcsim import qpu
from qhpcsim.runtime import (
    CPU,
    CSV_HEADER,
    DONE,
    FAILED,
    DependencyFailed,
    Runtime,
    TaskGraph,
    TaskHandle,
    TraceEvent,
    check_schedule,
    check_trace_document,
    compute_metrics,
    dumps_metrics_csv,
    dumps_trace,
    infer_dependencies,
    run_async,
    run_sync,
)

import oracles

JOB = qc.Circuit(1, 1, [qc.x(0), qc.measure(0, 0)])
# tight preset, one shot: 10 + 2*1 + 50 + 1 + 1
T_JOB = 64.0


def devices(n, seed=1):
    return qpu.make_devices(n, seed)


def makespan(trace):
    return compute_metrics(trace).makespan


class TestInference:
    def test_separate_jobs_no_edge(self):
        g = TaskGraph()
        g.add_circuit_job(JOB, 1, device="qpu0", creg="a")
        g.add_circuit_job(JOB, 1, device="qpu1", creg="b")
        assert infer_dependencies(g) == set()

    def test_read_after_write_fragments(self):
        dev = qpu.QpuDevice(seed=1)
        s = qpu.open_session(dev, 2, 1)
        g = TaskGraph()
        a = g.add_fragment(s, qc.Circuit(2, 1, [qc.measure(0, 0)]))
        b = g.add_fragment(s, qc.Circuit(2, 1, [qc.x(1, (0, 1))]))
        assert (a, b) in infer_dependencies(g)
        s.close()

    def test_qubit_overlap_in_session(self):
        dev = qpu.QpuDevice(seed=1)
        s = qpu.open_session(dev, 2, 0)
        g = TaskGraph()
        a = g.add_fragment(s, qc.Circuit(2, 0, [qc.h(0)]))
        b = g.add_fragment(s, qc.Circuit(2, 0, [qc.cnot(0, 1)]))
        assert infer_dependencies(g) == {(a, b)}
        s.close()

    def test_disjoint_qubits_in_session(self):
        s = qpu.open_session(qpu.QpuDevice(seed=1), 2, 0)
        g = TaskGraph()
        g.add_fragment(s, qc.Circuit(2, 0, [qc.h(0)]))
        g.add_fragment(s, qc.Circuit(2, 0, [qc.h(1)]))
        assert infer_dependencies(g) == set()
        s.close()

    def test_commuting_diagonal_fragments(self):
        s = qpu.open_session(qpu.QpuDevice(seed=1), 3, 0)
        g = TaskGraph()
        g.add_fragment(s, qc.Circuit(3, 0, [qc.cphasepow(0.3, 1, 0, 2)]))
        g.add_fragment(s, qc.Circuit(3, 0, [qc.cphasepow(0.3, 2, 1, 2)]))
        assert infer_dependencies(g) == set()
        s.close()

    def test_classical_reads_job_bits(self):
        g = TaskGraph()
        a = g.add_circuit_job(JOB, 1)
        b = g.add_classical("read", lambda ctx: None, reads=[("c", 0)])
        c = g.add_classical("other", lambda ctx: None, reads=[("c", 1)])
        assert infer_dependencies(g) == {(a, b)}
        assert g.dependencies(c) == frozenset()

    def test_write_write(self):
        g = TaskGraph()
        a = g.add_circuit_job(JOB, 1)
        b = g.add_circuit_job(JOB, 1)
        assert infer_dependencies(g) == {(a, b)}

    def test_unknown_dep_rejected(self):
        g = TaskGraph()
        with pytest.raises(ValueError):
            g.add_classical("x", lambda ctx: None, deps=[5])

    def test_edges_point_forward(self, rng):
        g = TaskGraph()
        oracles.random_graph(rng, g, 2, 30)
        for a, b in infer_dependencies(g):
            assert a < b


class TestSync:
    def test_independent_jobs_serialize(self):
        g = TaskGraph()
        g.add_circuit_job(JOB, 1, creg="a")
        g.add_circuit_job(JOB, 1, creg="b")
        _, trace = run_sync(g, devices(2))
        assert makespan(trace) == 2 * T_JOB

    def test_chain(self):
        g = TaskGraph()
        a = g.add_circuit_job(JOB, 1)
        b = g.add_classical("mid", lambda ctx: None, deps=[a], cost=5)
        g.add_circuit_job(JOB, 3, deps=[b])
        _, trace = run_sync(g, devices(1))
        assert makespan(trace) == T_JOB + 5 + (3 * 62 + 2)

    def test_creation_order(self, rng):
        g = TaskGraph()
        oracles.random_graph(rng, g, 2, 20)
        _, trace = run_sync(g, devices(2))
        assert [e.task_id for e in trace] == [t.task_id for t in g.tasks]

    def test_dynamic_append_runs_next(self):
        g = TaskGraph()

        def spawn(ctx):
            ctx.graph.add_classical("child", lambda c: "child", cost=1)

        g.add_classical("parent", spawn, cost=1)
        g.add_classical("sibling", lambda ctx: None, cost=1)
        handles, trace = run_sync(g, devices(1))
        labels = [g[e.task_id].label for e in trace]
        assert labels == ["parent", "child", "sibling"]
        child = trace[1].task_id
        assert g[child].creator == trace[0].task_id
        assert trace[0].task_id in g.dependencies(child)

    def test_results_visible(self):
        g = TaskGraph()
        a = g.add_circuit_job(JOB, 5)
        b = g.add_classical("read", lambda ctx: ctx.result(a).counts, deps=[a])
        handles, _ = run_sync(g, devices(1))
        assert handles[b].result == {"1": 5}

    def test_failure_propagates(self):
        g = TaskGraph()

        def boom(ctx):
            raise ValueError("boom")

        a = g.add_classical("boom", boom)
        b = g.add_classical("dependent", lambda ctx: None, deps=[a])
        c = g.add_classical("independent", lambda ctx: 7)
        handles, trace = run_sync(g, devices(1))
        assert handles[a].status == FAILED and isinstance(handles[a].error, ValueError)
        assert handles[b].status == FAILED and isinstance(handles[b].error, DependencyFailed)
        assert handles[c].status == DONE and handles[c].result == 7
        assert b not in {e.task_id for e in trace}

    def test_static_graph_rejects_append(self):
        g = TaskGraph(dynamic=False)
        a = g.add_classical("spawn", lambda ctx: ctx.graph.add_classical("x", lambda c: None))
        handles, _ = run_sync(g, devices(1))
        assert handles[a].status == FAILED

    def test_append_outside_task_rejected_while_running(self):
        g = TaskGraph()
        holder = {}
        g.add_classical("noop", lambda ctx: None)
        g._sealed = True
        with pytest.raises(RuntimeError):
            g.add_classical("late", lambda ctx: None)
        g._sealed = False
        holder["ok"] = g.add_classical("fine", lambda ctx: None)
        assert holder["ok"] == 1

    def test_bad_device_hint_fails(self):
        g = TaskGraph()
        a = g.add_circuit_job(JOB, 1, device="nope")
        handles, _ = run_sync(g, devices(1))
        assert handles[a].status == FAILED


class TestAsync:
    def test_two_jobs_two_devices(self):
        g = TaskGraph()
        g.add_circuit_job(JOB, 1, creg="a")
        g.add_circuit_job(JOB, 1, creg="b")
        _, trace = run_async(g, devices(2))
        assert makespan(trace) == T_JOB
        assert {e.resource for e in trace} == {"qpu0", "qpu1"}

    def test_four_jobs_two_devices(self):
        # hand-simulated FIFO list schedule: jobs 0,1 at t=0 on qpu0,qpu1; jobs 2,3 at t=T
        g = TaskGraph()
        for i in range(4):
            g.add_circuit_job(JOB, 1, creg=f"r{i}")
        _, trace = run_async(g, devices(2))
        placed = [(e.task_id, e.resource, e.t_start) for e in trace]
        assert placed == [(0, "qpu0", 0.0), (1, "qpu1", 0.0), (2, "qpu0", T_JOB), (3, "qpu1", T_JOB)]
        assert makespan(trace) == 2 * T_JOB
        waits = compute_metrics(trace).wait
        assert waits == {0: 0.0, 1: 0.0, 2: T_JOB, 3: T_JOB}

    def test_chain_equals_sync(self):
        def build():
            g = TaskGraph()
            prev = []
            for i in range(5):
                prev = [g.add_circuit_job(JOB, i + 1, deps=prev, creg=f"r{i}")]
            return g

        _, ts = run_sync(build(), devices(2))
        _, ta = run_async(build(), devices(2))
        assert makespan(ta) == makespan(ts)

    def test_classical_single_lane(self):
        g = TaskGraph()
        for _ in range(3):
            g.add_classical("w", lambda ctx: None, cost=10)
        _, trace = run_async(g, devices(2))
        assert {e.resource for e in trace} == {CPU}
        assert makespan(trace) == 30

    def test_overlap_quantum_and_classical(self):
        g = TaskGraph()
        g.add_circuit_job(JOB, 1)
        g.add_classical("w", lambda ctx: None, cost=40)
        _, trace = run_async(g, devices(1))
        assert makespan(trace) == T_JOB

    def test_dynamic_append(self):
        g = TaskGraph()
        seen = []

        def spawn(ctx):
            seen.append(ctx.now)
            ctx.graph.add_circuit_job(JOB, 1, creg="z")

        g.add_circuit_job(JOB, 1)
        g.add_classical("spawn", spawn, reads=[("c", 0)], cost=3)
        handles, trace = run_async(g, devices(1))
        assert len(trace) == 3
        assert seen == [T_JOB]
        assert trace[-1].t_start == T_JOB + 3
        assert all(h.status == DONE for h in handles.values())

    def test_session_blocks_unhinted_jobs(self):
        devs = devices(2)
        s = qpu.open_session(devs[0], 1, 1)
        g = TaskGraph()
        g.add_fragment(s, qc.Circuit(1, 1, [qc.h(0), qc.measure(0, 0)]))
        j = g.add_circuit_job(JOB, 1, creg="other")
        handles, trace = run_async(g, devs)
        s.close()
        assert {e.task_id: e.resource for e in trace}[j] == "qpu1"

    def test_failure_propagates(self):
        g = TaskGraph()
        a = g.add_classical("boom", lambda ctx: 1 / 0)
        b = g.add_circuit_job(JOB, 1, deps=[a])
        c = g.add_circuit_job(JOB, 1, creg="free")
        handles, _ = run_async(g, devices(1))
        assert handles[b].status == FAILED
        assert handles[c].status == DONE


class TestProperties:
    def test_random_graphs(self, rng):
        for trial in range(60):
            nd = int(rng.integers(1, 4))
            seed = int(rng.integers(1 << 30))
            n = int(rng.integers(1, 25))
            # identical graphs for both schedulers
            gs, ga = TaskGraph(), TaskGraph()
            oracles.random_graph(np.random.default_rng(seed), gs, nd, n)
            oracles.random_graph(np.random.default_rng(seed), ga, nd, n)
            hs, ts = run_sync(gs, devices(nd, seed))
            ha, ta = run_async(ga, devices(nd, seed))
            assert check_schedule(gs, ts) == []
            assert check_schedule(ga, ta) == []
            assert all(h.status == DONE for h in ha.values())
            assert makespan(ta) <= makespan(ts) + 1e-9
            m = compute_metrics(ta, [f"qpu{i}" for i in range(nd)])
            dev_busy = sum(v for k, v in m.busy.items() if k != CPU)
            assert dev_busy <= nd * m.makespan + 1e-9
            for u in m.utilization.values():
                assert 0.0 <= u <= 1.0 + 1e-12
            for e in ta:
                assert e.t_submit <= e.t_start <= e.t_end

    def test_determinism(self, rng):
        for mode in (run_sync, run_async):
            traces = []
            for _ in range(2):
                g = TaskGraph()
                oracles.random_graph(np.random.default_rng(4), g, 2, 20)
                traces.append(mode(g, devices(2, 9))[1])
            assert traces[0] == traces[1]


class TestHandles:
    def test_forward_only(self):
        h = TaskHandle(0)
        h.advance("running")
        h.advance("done")
        with pytest.raises(RuntimeError):
            h.advance("pending")
        with pytest.raises(RuntimeError):
            h.advance("failed")


class TestMetrics:
    def test_single(self):
        m = compute_metrics([TraceEvent(0, "qpu0", 0, 0, 10)])
        assert m.makespan == 10 and m.utilization["qpu0"] == 1.0

    def test_back_to_back(self):
        m = compute_metrics([TraceEvent(0, "qpu0", 0, 0, 10), TraceEvent(1, "qpu0", 0, 10, 20)])
        assert m.utilization["qpu0"] == 1.0
        assert m.wait == {0: 0, 1: 10}

    def test_parallel(self):
        m = compute_metrics([TraceEvent(0, "qpu0", 0, 0, 10), TraceEvent(1, "qpu1", 0, 0, 10)])
        assert m.makespan == 10

    def test_empty(self):
        m = compute_metrics([])
        assert m.makespan == 0 and m.busy == {}

    def test_idle_lane_reported(self):
        m = compute_metrics([TraceEvent(0, "qpu0", 0, 0, 10)], ["qpu0", "qpu1", CPU])
        assert m.utilization == {"cpu": 0.0, "qpu0": 1.0, "qpu1": 0.0}


class TestRuntime:
    def test_clock_continues(self):
        rt = Runtime(devices(1))
        for _ in range(2):
            g = rt.new_graph()
            g.add_circuit_job(JOB, 1)
            rt.run(g)
        assert [e.t_start for e in rt.trace] == [0.0, T_JOB]
        assert rt.metrics().makespan == 2 * T_JOB

    def test_ids_unique_across_graphs(self):
        rt = Runtime(devices(1))
        ids = []
        for _ in range(3):
            g = rt.new_graph()
            ids.append(g.add_classical("x", lambda ctx: None))
        assert ids == [0, 1, 2]

    def test_failed_listing(self):
        rt = Runtime(devices(1), "async")
        g = rt.new_graph()
        a = g.add_classical("boom", lambda ctx: 1 / 0)
        rt.run(g)
        assert rt.failed == [a]

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            Runtime(devices(1), "eager")


class TestSerialization:
    def _trace(self):
        g = TaskGraph()
        g.add_circuit_job(JOB, 1, creg="a")
        g.add_classical("w", lambda ctx: None, cost=2.5)
        return run_async(g, devices(1))[1]

    def test_trace_document(self):
        doc = json.loads(dumps_trace("ipe", self._trace(), ["qpu0", CPU]))
        assert check_trace_document(doc) == []
        assert doc["scenario"] == "ipe"
        assert set(doc["events"][0]) == {"task_id", "resource", "t_submit", "t_start", "t_end"}
        assert doc["metrics"]["makespan"] == T_JOB

    def test_schema_checker_finds_problems(self):
        bad = {"scenario": "x", "events": [{"task_id": 0, "resource": "cpu", "t_submit": 5, "t_start": 1,
                                            "t_end": 2}]}
        assert len(check_trace_document(bad)) == 2

    def test_csv(self):
        text = dumps_metrics_csv(self._trace())
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 3
        assert lines[2].split(",")[:3] == ["1", "classical", "cpu"]
