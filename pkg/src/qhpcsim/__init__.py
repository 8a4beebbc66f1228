"""Hybrid quantum-classical task runtime simulator.

A state-vector QPU model behind a control/execution interface, a
discrete-event runtime with synchronous and asynchronous offload, and two
worked hybrid algorithms: phase estimation (iterative and parallel) and an
error-detected variational angle search.
"""
from .circuit import Circuit, Instruction, build_iqft, depth, footprint, validate
from .qpu import LATENCY_PRESETS, LatencyModel, NoiseParams, QpuDevice, estimate_exec_time, make_devices
from .runtime import Runtime, TaskGraph, compute_metrics, infer_dependencies, run_async, run_sync
from .statevector import StateVector, new_state

__version__ = "0.1.0"

__all__ = [
    "Circuit", "Instruction", "build_iqft", "depth", "footprint", "validate",
    "LATENCY_PRESETS", "LatencyModel", "NoiseParams", "QpuDevice", "estimate_exec_time", "make_devices",
    "Runtime", "TaskGraph", "compute_metrics", "infer_dependencies", "run_async", "run_sync",
    "StateVector", "new_state",
]
