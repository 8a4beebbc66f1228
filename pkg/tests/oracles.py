"""Independent reference computations for the test suite.

Nothing here calls the simulator kernels: operators are assembled as full
2**n x 2**n matrices from Kronecker products or explicit basis loops.
"""
import itertools
import math

import numpy as np

from qhpcsim import circuit as qc

H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
S = np.diag([1, 1j])
SDG = np.diag([1, -1j])


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def prep_phase(t):
    # columns: image of |0>, image of |1>
    e = np.exp(1j * t)
    return np.array([[1, 1], [e, -e]], dtype=complex) / math.sqrt(2)


def embed_1q(u, qubit, n):
    """Qubit k is bit k of the index, so it sits at Kronecker position n-1-k."""
    ops = [np.eye(2)] * n
    ops[n - 1 - qubit] = u
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def cnot_matrix(control, target, n):
    dim = 1 << n
    m = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        j = i ^ (1 << target) if (i >> control) & 1 else i
        m[j, i] = 1
    return m


def cphase_matrix(angle, a, b, n):
    dim = 1 << n
    diag = [np.exp(1j * angle) if ((i >> a) & 1 and (i >> b) & 1) else 1 for i in range(dim)]
    return np.diag(diag).astype(complex)


_ONE_Q = {"h": lambda p: H, "x": lambda p: X, "s": lambda p: S, "sdg": lambda p: SDG,
          "rz": lambda p: rz(p[0]), "ry": lambda p: ry(p[0]), "prep_phase": lambda p: prep_phase(p[0])}


def unitary_of(circuit):
    """Full matrix of a circuit built only from unconditioned unitary instructions."""
    n = circuit.num_qubits
    u = np.eye(1 << n, dtype=complex)
    for ins in circuit.instructions:
        assert ins.condition is None and ins.is_unitary, ins
        if ins.kind == "cnot":
            g = cnot_matrix(*ins.qubits, n)
        elif ins.kind == "cphasepow":
            lam, k = ins.params
            g = cphase_matrix(lam * k, *ins.qubits, n)
        else:
            g = embed_1q(_ONE_Q[ins.kind](ins.params), ins.qubits[0], n)
        u = g @ u
    return u


def exact_distribution(circuit):
    """Exact outcome distribution over clbit strings for unitary-then-measure circuits.

    Every measurement must come after every gate. Keys follow the simulator
    convention: character j is classical bit j.
    """
    gates = [i for i in circuit.instructions if i.kind != "measure"]
    meas = [i for i in circuit.instructions if i.kind == "measure"]
    assert circuit.instructions[: len(gates)] == tuple(gates), "measurements must be terminal"
    psi = unitary_of(qc.Circuit(circuit.num_qubits, 0, gates))[:, 0]
    probs = np.abs(psi) ** 2
    dist = {}
    for idx, p in enumerate(probs):
        bits = [0] * circuit.num_clbits
        for ins in meas:
            bits[ins.clbit] = (idx >> ins.qubits[0]) & 1
        key = "".join(map(str, bits))
        dist[key] = dist.get(key, 0.0) + p
    return dist


def total_variation(counts, dist):
    shots = sum(counts.values())
    keys = set(counts) | set(dist)
    return 0.5 * sum(abs(counts.get(k, 0) / shots - dist.get(k, 0.0)) for k in keys)


def random_state(n, rng):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def fourier_state(phi, m):
    """Counting-register state sum_y e^{2 pi i phi y} |y> / sqrt(2**m)."""
    y = np.arange(1 << m)
    return np.exp(2j * np.pi * phi * y) / math.sqrt(1 << m)


def longest_path_depth(instructions):
    """Depth as the longest chain in the conflict DAG (O(n^2) DP)."""
    def res(ins):
        r = {("q", q) for q in ins.qubits}
        r |= {("c", c) for c in ins.clbits_read() | ins.clbits_written()}
        return r

    rs = [res(i) for i in instructions]
    longest = []
    for j in range(len(instructions)):
        best = 0
        for i in range(j):
            if rs[i] & rs[j]:
                best = max(best, longest[i])
        longest.append(best + 1)
    return max(longest, default=0)


def binomial_two_sided(n, p, k_lo, k_hi):
    """P(k_lo <= Binomial(n, p) <= k_hi) by direct summation in log space."""
    total = 0.0
    for k in range(k_lo, k_hi + 1):
        log_pmf = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                   + k * math.log(p) + (n - k) * math.log1p(-p))
        total += math.exp(log_pmf)
    return total


def all_bit_patterns(m):
    return [tuple(b) for b in itertools.product((0, 1), repeat=m)]


def random_unitary_circuit(rng, n, n_gates, measure=True):
    """Random circuit over the unitary instruction set, optionally with terminal readout."""
    ins = []
    kinds = ["h", "x", "s", "sdg", "rz", "ry", "prep_phase"] + (["cnot", "cphasepow"] if n > 1 else [])
    for _ in range(n_gates):
        k = kinds[rng.integers(len(kinds))]
        if k in ("cnot", "cphasepow"):
            a, b = rng.choice(n, size=2, replace=False)
            ins.append(qc.cnot(int(a), int(b)) if k == "cnot"
                       else qc.cphasepow(float(rng.uniform(-np.pi, np.pi)), int(rng.integers(1, 9)), int(a), int(b)))
        elif k in ("rz", "ry", "prep_phase"):
            ins.append(qc.Instruction(k, (int(rng.integers(n)),), (float(rng.uniform(-np.pi, np.pi)),)))
        else:
            ins.append(qc.Instruction(k, (int(rng.integers(n)),)))
    if measure:
        ins += [qc.measure(q, q) for q in range(n)]
    return qc.Circuit(n, n if measure else 0, ins)


def random_graph(rng, graph, num_devices, n_tasks):
    """Populate ``graph`` with random circuit jobs and classical tasks.

    Jobs share the "c" register so some of them collide on written bits;
    classical tasks read random bits of it. Explicit deps are random earlier ids.
    """
    ids = []
    for _ in range(n_tasks):
        deps = [d for d in ids if rng.random() < 0.15]
        if rng.random() < 0.7:
            n = int(rng.integers(1, 4))
            body = random_unitary_circuit(rng, n, int(rng.integers(0, 8)), measure=False)
            bit = int(rng.integers(0, 4))
            c = qc.Circuit(n, 4, body.instructions + (qc.measure(0, bit),))
            hint = f"qpu{int(rng.integers(num_devices))}" if rng.random() < 0.3 else None
            ids.append(graph.add_circuit_job(c, int(rng.integers(1, 20)), device=hint, deps=deps))
        else:
            reads = [("c", int(b)) for b in rng.choice(4, size=int(rng.integers(0, 3)), replace=False)]
            ids.append(graph.add_classical("work", lambda ctx: None, reads=reads, deps=deps,
                                           cost=float(rng.integers(0, 50))))
    return ids
