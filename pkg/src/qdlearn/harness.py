"""Seeded experiment runs: QD-learning and centralized Q-learning on one trajectory."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdlearn.graph import FailureModel, LinkFailureModel, Topology, check_mean_connectivity
from qdlearn.learning import (
    AgentQState,
    QLearnerState,
    Transition,
    WeightSchedule,
    centralized_step,
    qd_step,
    residuals_all,
    update_matrix,
)
from qdlearn.mdp import MdpModel, TrajectoryState, behavior_step, sample_costs, validate_model
from qdlearn.oracle import DEFAULT_TOL, OracleSolution, solve_q_star
from qdlearn.rng import AgentNormalStreams, BufferedStream, StreamFactory

CSV_HEADER = [
    "step", "agent", "pair_state", "pair_action", "q_value",
    "consensus_distance", "oracle_error", "centralized_error",
]
# agent column value used for the centralized learner's rows
CENTRALIZED_AGENT = -1


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: MdpModel
    topology: Topology
    schedule: WeightSchedule
    failure: FailureModel = field(default_factory=LinkFailureModel)
    total_steps: int = 1000
    snapshot_interval: int = 100
    seed: int = 0
    stream_seeds: dict = field(default_factory=dict)
    initial_state: int = 0
    initial_tables: np.ndarray | None = None
    allow_m5_violation: bool = False
    allow_disconnected: bool = False
    consensus: bool = True
    track_residuals: bool = False
    check_update_matrix: bool = False
    oracle_tol: float = DEFAULT_TOL


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""
    waived: bool = False

    @property
    def ok(self) -> bool:
        return self.passed or self.waived


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "waived": c.waived, "detail": c.detail}
                for c in self.checks
            ],
        }


class ConfigValidationError(Exception):
    def __init__(self, report: ValidationReport):
        self.report = report
        msgs = "; ".join(f"{c.name}: {c.detail}" for c in report.failures())
        super().__init__(f"run configuration rejected: {msgs}")


def validate_run_config(config: RunConfig) -> ValidationReport:
    model, topo, schedule = config.model, config.topology, config.schedule
    checks = []
    problems = validate_model(model)
    checks.append(Check("kernel_stochastic", not problems, "; ".join(problems) or "ok"))

    match = model.num_agents == topo.num_agents
    checks.append(Check(
        "agent_count", match,
        f"model has {model.num_agents} agents, topology has {topo.num_agents}",
    ))

    conn = check_mean_connectivity(topo, config.failure)
    checks.append(Check(
        "mean_connectivity", conn.passed, f"lambda2(mean L) = {conn.lambda2:.6g}",
        waived=config.allow_disconnected and not conn.passed,
    ))

    issues = schedule.exponent_issues()
    checks.append(Check(
        "weight_exponents", not issues, "; ".join(issues) or "ok",
        waived=config.allow_m5_violation and bool(issues),
    ))

    total = schedule.a + topo.num_agents * schedule.b
    checks.append(Check(
        "a_plus_Nb", schedule.nonnegativity_ok(topo.num_agents),
        f"a + N b = {total:.6g} (must be <= 1)",
    ))

    run_ok = config.total_steps >= 0 and config.snapshot_interval >= 1
    run_ok = run_ok and 0 <= config.initial_state < model.num_states
    checks.append(Check(
        "run_parameters", run_ok,
        f"total_steps={config.total_steps}, snapshot_interval={config.snapshot_interval}, "
        f"initial_state={config.initial_state}",
    ))
    return ValidationReport(tuple(checks))


@dataclass(eq=False)
class Snapshot:
    step: int
    tables: np.ndarray
    centralized: np.ndarray
    consensus_distance: float
    oracle_errors: np.ndarray
    centralized_error: float
    visit_counts: np.ndarray


@dataclass(eq=False)
class RunRecord:
    config: RunConfig
    oracle: OracleSolution
    snapshots: list[Snapshot]
    # scalar series, index t = step
    consensus_series: np.ndarray
    oracle_error_series: np.ndarray
    centralized_error_series: np.ndarray
    max_abs_q: float
    bound: float
    residual_count: np.ndarray | None = None
    residual_mean: np.ndarray | None = None
    residual_m2: np.ndarray | None = None
    update_matrix_min: float = math.nan
    update_matrix_max_norm: float = math.nan

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def bounded(self) -> bool:
        return self.max_abs_q <= self.bound

    def residual_standard_errors(self) -> np.ndarray:
        n = self.residual_count
        var = np.where(n > 1, self.residual_m2 / np.maximum(n - 1, 1), np.nan)
        return np.sqrt(var / np.maximum(n, 1))

    def summary(self) -> dict:
        cfg = self.config
        final = self.final
        dist_err = float(np.max(final.oracle_errors))
        cent_err = final.centralized_error
        return {
            "seed": cfg.seed,
            "total_steps": cfg.total_steps,
            "num_agents": cfg.model.num_agents,
            "num_states": cfg.model.num_states,
            "num_actions": cfg.model.num_actions,
            "discount": cfg.model.discount,
            "schedule": {
                "a": cfg.schedule.a, "b": cfg.schedule.b,
                "tau1": cfg.schedule.tau1, "tau2": cfg.schedule.tau2, "eps1": cfg.schedule.eps1,
            },
            "waivers": {
                "allow_m5_violation": cfg.allow_m5_violation,
                "allow_disconnected": cfg.allow_disconnected,
            },
            "q_star_sup_norm": float(np.max(np.abs(self.oracle.q_star))),
            "q_star_residual": self.oracle.sup_norm_residual,
            "final_consensus_distance": final.consensus_distance,
            "final_oracle_error_max": dist_err,
            "final_centralized_error": cent_err,
            "distributed_to_centralized_error_ratio": dist_err / cent_err if cent_err > 0 else None,
            "max_abs_q": self.max_abs_q,
            "boundedness_limit": self.bound,
            "bounded": self.bounded,
        }


def consensus_distance(tables: np.ndarray) -> float:
    """``max_n ||Q^n - mean_m Q^m||_inf`` for tables of shape (N, ...)."""
    tables = np.asarray(tables)
    if tables.shape[0] < 1:
        raise ValueError("need at least one table")
    return float(np.max(np.abs(tables - tables.mean(axis=0))))


def oracle_error(table: np.ndarray, q_star: np.ndarray) -> float:
    table, q_star = np.asarray(table), np.asarray(q_star)
    if table.shape != q_star.shape:
        raise ValueError(f"shape mismatch: {table.shape} vs {q_star.shape}")
    return float(np.max(np.abs(table - q_star)))


def boundedness_limit(model: MdpModel) -> float:
    """``2 (max mean cost + 4 sigma) / (1 - gamma)``; any run exceeding it is flagged."""
    worst = np.max(np.abs(model.cost_means)) + 4.0 * np.max(model.cost_noise_std)
    return float(2.0 * worst / (1.0 - model.discount))


def _snapshot(step, agents, central, q_star) -> Snapshot:
    tables = agents.tables.copy()
    return Snapshot(
        step=step,
        tables=tables,
        centralized=central.table.copy(),
        consensus_distance=consensus_distance(tables),
        oracle_errors=np.max(np.abs(tables - q_star), axis=(1, 2)),
        centralized_error=oracle_error(central.table, q_star),
        visit_counts=agents.visit_counts.copy(),
    )


def run_experiment(config: RunConfig) -> RunRecord:
    """Drive both learners on a single seeded trajectory.

    Raises :class:`ConfigValidationError` before step 0 if the configuration
    fails a non-waived check.
    """
    report = validate_run_config(config)
    if not report.ok:
        raise ConfigValidationError(report)
    config.schedule.warn_exponents()

    model, topo, schedule = config.model, config.topology, config.schedule
    N, M, U = model.num_agents, model.num_states, model.num_actions
    oracle = solve_q_star(model, tol=config.oracle_tol)
    q_star = oracle.q_star

    streams = StreamFactory(config.seed, config.stream_seeds)
    traj_rng = BufferedStream(streams.generator("trajectory"))
    graph_rng = BufferedStream(streams.generator("graph"))
    cost_rng = AgentNormalStreams([streams.generator("costs", n) for n in range(N)])

    agents = AgentQState.zeros(N, M, U)
    if config.initial_tables is not None:
        agents.tables[...] = config.initial_tables
    central = QLearnerState.zeros(M, U)
    traj = TrajectoryState(state=config.initial_state)

    T = config.total_steps
    cons = np.empty(T + 1)
    errs = np.empty(T + 1)
    cerrs = np.empty(T + 1)
    cons[0] = consensus_distance(agents.tables)
    errs[0] = np.max(np.abs(agents.tables - q_star))
    cerrs[0] = oracle_error(central.table, q_star)
    max_abs = max(float(np.max(np.abs(agents.tables))), 0.0)
    snapshots = [_snapshot(0, agents, central, q_star)]

    track = config.track_residuals
    if track:
        r_count = np.zeros((N, M, U), dtype=np.int64)
        r_mean = np.zeros((N, M, U))
        r_m2 = np.zeros((N, M, U))
    w_min, w_norm = math.inf, -math.inf
    beta_override = None if config.consensus else 0.0
    failure = config.failure

    for t in range(T):
        x = traj.state
        u, y = behavior_step(model, traj, traj_rng)
        costs = sample_costs(model, x, u, cost_rng)
        lap = failure.sample(topo, graph_rng)
        tr = Transition(x, u, costs, y)

        if track:
            nu = residuals_all(model, tr, agents.tables)
            r_count[:, x, u] += 1
            delta = nu - r_mean[:, x, u]
            r_mean[:, x, u] += delta / r_count[:, x, u]
            r_m2[:, x, u] += delta * (nu - r_mean[:, x, u])
        if config.check_update_matrix:
            W = update_matrix(schedule, lap, int(agents.visit_counts[x, u]), beta=beta_override)
            w_min = min(w_min, float(W.min()))
            w_norm = max(w_norm, float(np.abs(W).sum(axis=1).max()))

        qd_step(agents, model, lap, tr, schedule, beta=beta_override)
        centralized_step(central, model, tr, schedule)

        col = agents.tables[:, x, u]
        max_abs = max(max_abs, float(np.max(np.abs(col))), abs(float(central.table[x, u])))
        step = t + 1
        cons[step] = consensus_distance(agents.tables)
        errs[step] = np.max(np.abs(agents.tables - q_star))
        cerrs[step] = abs(central.table - q_star).max()
        if step % config.snapshot_interval == 0 or step == T:
            snapshots.append(_snapshot(step, agents, central, q_star))

    record = RunRecord(
        config=config,
        oracle=oracle,
        snapshots=snapshots,
        consensus_series=cons,
        oracle_error_series=errs,
        centralized_error_series=cerrs,
        max_abs_q=max_abs,
        bound=boundedness_limit(model),
    )
    if track:
        record.residual_count, record.residual_mean, record.residual_m2 = r_count, r_mean, r_m2
    if config.check_update_matrix:
        record.update_matrix_min, record.update_matrix_max_norm = w_min, w_norm
    return record


def run_many(configs: list[RunConfig], workers: int = 1) -> list[RunRecord]:
    """Run independent configurations, optionally in worker processes."""
    if workers <= 1 or len(configs) <= 1:
        return [run_experiment(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))


def _fmt(value: float) -> str:
    # repr of a Python float round-trips to the same binary64 value
    return repr(float(value))


def export_csv(record: RunRecord, path) -> Path:
    """One row per (snapshot, agent, pair); centralized rows use agent ``-1``."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for snap in record.snapshots:
                cd = _fmt(snap.consensus_distance)
                ce = _fmt(snap.centralized_error)
                N, M, U = snap.tables.shape
                for n in range(N):
                    oe = _fmt(snap.oracle_errors[n])
                    for i in range(M):
                        for u in range(U):
                            writer.writerow([snap.step, n, i, u, _fmt(snap.tables[n, i, u]), cd, oe, ce])
                for i in range(M):
                    for u in range(U):
                        writer.writerow([snap.step, CENTRALIZED_AGENT, i, u,
                                         _fmt(snap.centralized[i, u]), cd, ce, ce])
    except OSError as exc:
        raise OSError(f"could not write CSV to {path}: {exc}") from exc
    return path


@dataclass(eq=False)
class CsvSnapshot:
    step: int
    tables: np.ndarray
    centralized: np.ndarray
    consensus_distance: float
    oracle_errors: np.ndarray
    centralized_error: float


def read_csv(path) -> list[CsvSnapshot]:
    """Inverse of :func:`export_csv`."""
    rows_by_step: dict[int, list[dict]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            rows_by_step.setdefault(int(row["step"]), []).append(row)
    out = []
    for step, rows in rows_by_step.items():
        agents = [r for r in rows if int(r["agent"]) != CENTRALIZED_AGENT]
        cent = [r for r in rows if int(r["agent"]) == CENTRALIZED_AGENT]
        N = 1 + max(int(r["agent"]) for r in agents)
        M = 1 + max(int(r["pair_state"]) for r in rows)
        U = 1 + max(int(r["pair_action"]) for r in rows)
        tables = np.zeros((N, M, U))
        errors = np.zeros(N)
        for r in agents:
            n, i, u = int(r["agent"]), int(r["pair_state"]), int(r["pair_action"])
            tables[n, i, u] = float(r["q_value"])
            errors[n] = float(r["oracle_error"])
        central = np.zeros((M, U))
        for r in cent:
            central[int(r["pair_state"]), int(r["pair_action"])] = float(r["q_value"])
        out.append(CsvSnapshot(
            step=step,
            tables=tables,
            centralized=central,
            consensus_distance=float(rows[0]["consensus_distance"]),
            oracle_errors=errors,
            centralized_error=float(rows[0]["centralized_error"]),
        ))
    return out


def write_summary(record: RunRecord, path, extra: dict | None = None) -> Path:
    path = Path(path)
    payload = record.summary()
    if extra:
        payload.update(extra)
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"could not write summary to {path}: {exc}") from exc
    return path
