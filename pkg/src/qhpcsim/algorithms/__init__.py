from .phase import (
    IpeResult,
    IpeRun,
    PhaseEncoding,
    PhaseEstimationProblem,
    correction_angle,
    decode_bits,
    encode_phase,
    ipe_iteration_circuit,
    ipe_sync,
    qpe_circuit,
    qpe_fragments,
    qpe_parallel,
    register_to_phase_bits,
)
from .vqe import VqeProblem, VqeResult, analytic_cost, analytic_minimum, vqe_error_detected

__all__ = [
    "IpeResult",
    "IpeRun",
    "PhaseEncoding",
    "PhaseEstimationProblem",
    "VqeProblem",
    "VqeResult",
    "analytic_cost",
    "analytic_minimum",
    "correction_angle",
    "decode_bits",
    "encode_phase",
    "ipe_iteration_circuit",
    "ipe_sync",
    "qpe_circuit",
    "qpe_fragments",
    "qpe_parallel",
    "register_to_phase_bits",
    "vqe_error_detected",
]
