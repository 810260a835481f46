"""QD-learning: consensus + innovations Q-learning, and the centralized baseline.

Each agent ``n`` keeps a table ``Q^n`` of shape (M, U). When the trajectory
visits ``(i, u)`` for the ``(k+1)``-th time, every agent updates that one
entry synchronously::

    Q^n <- Q^n - beta_k * sum_{l in nbrs_n(t)} (Q^n - Q^l)
               + alpha_k * (c_n + gamma * min_v Q^n[x', v] - Q^n)

with ``alpha_k = a / (k+1)**tau1`` and ``beta_k = b / (k+1)**tau2``. All
other entries are left untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from qdlearn.graph import ConfigurationError, LaplacianSample
from qdlearn.mdp import MdpModel

NONNEG_TOL = 1e-12


def alpha_weight(schedule: "WeightSchedule", k):
    return schedule.a / (np.asarray(k, dtype=float) + 1.0) ** schedule.tau1


def beta_weight(schedule: "WeightSchedule", k):
    return schedule.b / (np.asarray(k, dtype=float) + 1.0) ** schedule.tau2


@dataclass(frozen=True)
class WeightSchedule:
    """Innovation (``a``, ``tau1``) and consensus (``b``, ``tau2``) weight constants.

    ``eps1`` is the declared cost-moment exponent used only by
    :meth:`exponent_issues`.
    """

    a: float
    b: float
    tau1: float = 1.0
    tau2: float = 0.2
    eps1: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigurationError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if self.eps1 <= 0:
            raise ConfigurationError(f"eps1 must be positive, got {self.eps1}")

    def alpha(self, k: int) -> float:
        return self.a / (k + 1.0) ** self.tau1

    def beta(self, k: int) -> float:
        return self.b / (k + 1.0) ** self.tau2

    def exponent_issues(self) -> list[str]:
        """Violations of the ``tau1 in (1/2, 1]``, ``0 < tau2 < tau1 - 1/(2+eps1)`` window."""
        issues = []
        if not 0.5 < self.tau1 <= 1.0:
            issues.append(f"tau1={self.tau1:g} not in (1/2,1]")
        upper = self.tau1 - 1.0 / (2.0 + self.eps1)
        if not 0.0 < self.tau2 < upper:
            issues.append(f"tau2={self.tau2:g} not in (0,{upper:g}) for eps1={self.eps1:g}")
        return issues

    def warn_exponents(self) -> bool:
        issues = self.exponent_issues()
        for msg in issues:
            warnings.warn(f"weight exponents outside the convergence window: {msg}", stacklevel=2)
        return not issues

    def nonnegativity_ok(self, num_agents: int) -> bool:
        """``a + N b <= 1`` keeps every per-step update matrix entrywise nonnegative."""
        return self.a + num_agents * self.b <= 1.0


@dataclass
class AgentQState:
    tables: np.ndarray
    visit_counts: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, num_agents: int, num_states: int, num_actions: int) -> "AgentQState":
        return cls(
            np.zeros((num_agents, num_states, num_actions)),
            np.zeros((num_states, num_actions), dtype=np.int64),
        )

    @property
    def num_agents(self) -> int:
        return self.tables.shape[0]


@dataclass
class QLearnerState:
    """Single-table state used by the centralized recursion."""

    table: np.ndarray
    visit_counts: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> "QLearnerState":
        return cls(np.zeros((num_states, num_actions)), np.zeros((num_states, num_actions), dtype=np.int64))


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    costs: np.ndarray
    next_state: int


@dataclass(frozen=True, eq=False)
class StepOutcome:
    pair: tuple[int, int]
    visit_index: int
    alpha: float
    beta: float
    innovation: np.ndarray
    consensus: np.ndarray
    residual: np.ndarray | None = field(default=None)


def qd_step(
    state: AgentQState,
    model: MdpModel,
    laplacian: LaplacianSample | np.ndarray,
    transition: Transition,
    schedule: WeightSchedule,
    *,
    alpha: float | None = None,
    beta: float | None = None,
) -> StepOutcome:
    """Apply one synchronous QD-learning update to ``state`` in place.

    ``alpha``/``beta`` override the scheduled weights for this step only.
    The returned outcome's ``innovation`` and ``consensus`` are the unweighted
    per-agent terms.
    """
    i, u, y = transition.state, transition.action, transition.next_state
    L = laplacian.matrix if isinstance(laplacian, LaplacianSample) else laplacian
    k = int(state.visit_counts[i, u])
    a_k = schedule.alpha(k) if alpha is None else alpha
    b_k = schedule.beta(k) if beta is None else beta

    tables = state.tables
    # time-t reads: the visited column and next-state minima, both taken before any write
    col = tables[:, i, u].copy()
    next_min = tables[:, y, :].min(axis=1)
    consensus = L @ col
    innovation = transition.costs + model.discount * next_min - col
    tables[:, i, u] = col - b_k * consensus + a_k * innovation

    state.visit_counts[i, u] += 1
    state.step += 1
    return StepOutcome((i, u), k, a_k, b_k, innovation, consensus)


def centralized_step(
    state: QLearnerState,
    model: MdpModel,
    transition: Transition,
    schedule: WeightSchedule,
    *,
    alpha: float | None = None,
) -> float:
    """Classical Q-learning on the network-averaged instantaneous cost; returns alpha used."""
    i, u, y = transition.state, transition.action, transition.next_state
    k = int(state.visit_counts[i, u])
    a_k = schedule.alpha(k) if alpha is None else alpha
    q = state.table
    old = q[i, u]
    costs = transition.costs
    target = costs.sum() / costs.size + model.discount * q[y].min()
    q[i, u] = old + a_k * (target - old)
    state.visit_counts[i, u] += 1
    state.step += 1
    return a_k


def local_g(model: MdpModel, n: int, q: np.ndarray) -> np.ndarray:
    """Agent ``n``'s expected one-step operator: ``E[c_n] + gamma * P min_v Q``."""
    return model.cost_means[n] + model.discount * (model.kernel @ np.min(q, axis=1))


def residual_nu(model: MdpModel, n: int, transition: Transition, q_before: np.ndarray) -> float:
    """Sampled target minus its conditional expectation for agent ``n``."""
    i, u, y = transition.state, transition.action, transition.next_state
    expected = model.cost_means[n, i, u] + model.discount * float(model.kernel[i, u] @ q_before.min(axis=1))
    return float(transition.costs[n] + model.discount * q_before[y].min() - expected)


def residuals_all(model: MdpModel, transition: Transition, tables: np.ndarray) -> np.ndarray:
    """Vectorized :func:`residual_nu` over all agents for tables of shape (N, M, U)."""
    i, u, y = transition.state, transition.action, transition.next_state
    mins = tables.min(axis=2)
    expected = model.cost_means[:, i, u] + model.discount * (mins @ model.kernel[i, u])
    return transition.costs + model.discount * mins[:, y] - expected


def update_matrix(schedule: WeightSchedule, laplacian: LaplacianSample | np.ndarray, k: int,
                  *, alpha: float | None = None, beta: float | None = None) -> np.ndarray:
    """``I - beta_k L - alpha_k I`` for the ``(k+1)``-th visit."""
    L = laplacian.matrix if isinstance(laplacian, LaplacianSample) else np.asarray(laplacian)
    a_k = schedule.alpha(k) if alpha is None else alpha
    b_k = schedule.beta(k) if beta is None else beta
    n = L.shape[0]
    return (1.0 - a_k) * np.eye(n) - b_k * L


def update_matrix_nonneg(schedule: WeightSchedule, laplacian: LaplacianSample | np.ndarray, k: int,
                         *, alpha: float | None = None, beta: float | None = None) -> bool:
    W = update_matrix(schedule, laplacian, k, alpha=alpha, beta=beta)
    return bool(np.min(W) >= -NONNEG_TOL)
