"""Distributed consensus + innovations Q-learning (QD-learning) simulator."""

from qdlearn.config import build_config, load_preset
from qdlearn.graph import (
    LaplacianSample,
    LinkFailureModel,
    Topology,
    algebraic_connectivity,
    build_ring,
    check_mean_connectivity,
    mean_laplacian,
    sample_laplacian,
)
from qdlearn.harness import RunConfig, RunRecord, consensus_distance, oracle_error, run_experiment
from qdlearn.learning import AgentQState, WeightSchedule, centralized_step, qd_step
from qdlearn.mdp import MdpModel, random_model, validate_model
from qdlearn.oracle import OracleSolution, apply_g_bar, apply_t, extract_v, solve_q_star

__all__ = [
    "AgentQState", "LaplacianSample", "LinkFailureModel", "MdpModel", "OracleSolution",
    "RunConfig", "RunRecord", "Topology", "WeightSchedule", "algebraic_connectivity",
    "apply_g_bar", "apply_t", "build_config", "build_ring", "centralized_step", "check_mean_connectivity",
    "consensus_distance", "extract_v", "load_preset", "mean_laplacian", "oracle_error", "qd_step",
    "random_model", "run_experiment", "sample_laplacian", "solve_q_star", "validate_model",
]
