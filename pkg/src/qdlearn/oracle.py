"""Exact ground truth: the averaged Q-operator, its fixed point, and the DP operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qdlearn.mdp import MdpModel

DEFAULT_TOL = 1e-10


def extract_v(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise min and argmin of a (M, U) table; ties go to the lowest action."""
    q = np.asarray(q)
    # np.argmin returns the first occurrence, which is the declared tie rule
    policy = np.argmin(q, axis=-1)
    return np.take_along_axis(q, policy[..., None], axis=-1)[..., 0], policy


def apply_g_bar(model: MdpModel, q: np.ndarray) -> np.ndarray:
    """``avg_n E[c_n(i,u)] + gamma * sum_j p(j|i,u) min_v Q[j,v]``."""
    return model.average_cost + model.discount * (model.kernel @ np.min(q, axis=1))


def apply_t(model: MdpModel, v: np.ndarray) -> np.ndarray:
    """Bellman operator on state values."""
    return np.min(model.average_cost + model.discount * (model.kernel @ np.asarray(v)), axis=1)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    q_star: np.ndarray
    v_star: np.ndarray
    greedy_policy: np.ndarray
    sup_norm_residual: float
    iterations: int
    tol: float

    def to_json(self) -> dict:
        return {
            "q_star": self.q_star.tolist(),
            "v_star": self.v_star.tolist(),
            "policy": self.greedy_policy.tolist(),
            "residual": self.sup_norm_residual,
            "iterations": self.iterations,
            "tol": self.tol,
        }


def solve_q_star(model: MdpModel, tol: float = DEFAULT_TOL, max_iter: int = 10_000_000) -> OracleSolution:
    """Value iteration on Q from zero until the contraction bound certifies ``tol``.

    Stops once ``||Q_{k+1} - Q_k|| <= tol (1-gamma)/gamma``, which bounds the
    distance to the fixed point by ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = model.discount
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0,1), got {gamma}")
    threshold = np.inf if gamma == 0.0 else tol * (1.0 - gamma) / gamma
    q = np.zeros((model.num_states, model.num_actions))
    for it in range(1, max_iter + 1):
        q_next = apply_g_bar(model, q)
        step = np.max(np.abs(q_next - q))
        q = q_next
        if step <= threshold:
            break
    else:
        raise RuntimeError(f"value iteration did not reach tol={tol} in {max_iter} iterations")
    v, policy = extract_v(q)
    residual = float(np.max(np.abs(apply_g_bar(model, q) - q)))
    return OracleSolution(q, v, policy, residual, it, tol)


def sup_bound(model: MdpModel) -> float:
    """``max |avg mean cost| / (1 - gamma)``; bounds ``||Q*||``."""
    return float(np.max(np.abs(model.average_cost)) / (1.0 - model.discount))
