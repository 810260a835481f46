"""Controlled Markov chain, private per-agent costs, and the uniform behavior policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite controlled Markov chain shared by ``N`` agents.

    Attributes
    ----------
    kernel : ndarray, shape (M, U, M)
        ``kernel[i, u, j]`` is the probability of moving from ``i`` to ``j``
        under action ``u``.
    cost_means : ndarray, shape (N, M, U)
        Expected one-stage cost of agent ``n`` at ``(i, u)``.
    cost_noise_std : float or ndarray broadcastable to (N, M, U)
        Standard deviation of the Gaussian cost noise.
    discount : float
        Discount factor.
    """

    kernel: np.ndarray
    cost_means: np.ndarray
    cost_noise_std: float | np.ndarray
    discount: float

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=float)
        means = np.asarray(self.cost_means, dtype=float)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise ValueError(f"kernel must have shape (M, U, M), got {kernel.shape}")
        if means.ndim != 3 or means.shape[1:] != kernel.shape[:2]:
            raise ValueError(
                f"cost_means must have shape (N, {kernel.shape[0]}, {kernel.shape[1]}), got {means.shape}"
            )
        std = np.broadcast_to(np.asarray(self.cost_noise_std, dtype=float), means.shape)
        kernel.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "cost_means", means)
        object.__setattr__(self, "cost_noise_std", std)
        object.__setattr__(self, "discount", float(self.discount))
        # inverse-CDF lookup tables for successor sampling
        object.__setattr__(self, "_cdf", np.cumsum(kernel, axis=2))

    @property
    def num_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def num_agents(self) -> int:
        return self.cost_means.shape[0]

    @property
    def average_cost(self) -> np.ndarray:
        """Network-averaged expected cost, shape (M, U)."""
        return self.cost_means.mean(axis=0)


def validate_model(model: MdpModel) -> list[str]:
    """Return the violated model invariants; an empty list means the model is valid."""
    problems = []
    kernel = model.kernel
    for i, u, j in zip(*np.nonzero((kernel < 0) | (kernel > 1))):
        problems.append(f"kernel[{i},{u},{j}] entry {kernel[i, u, j]:g} out of range [0,1]")
    sums = kernel.sum(axis=2)
    for i, u in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
        problems.append(f"kernel[{i},{u}] row sum {sums[i, u]:.12g}")
    if not 0.0 <= model.discount < 1.0:
        problems.append(f"discount {model.discount:g} not in [0,1)")
    if not np.all(np.isfinite(model.cost_means)):
        problems.append("cost_means contain non-finite values")
    std = model.cost_noise_std
    if np.any(std < 0) or not np.all(np.isfinite(std)):
        problems.append("cost_noise_std must be finite and >= 0")
    return problems


def random_model(
    rng: np.random.Generator,
    num_states: int,
    num_actions: int,
    num_agents: int,
    discount: float,
    cost_noise_std: float = 0.0,
    mean_low=0.0,
    mean_high=400.0,
) -> MdpModel:
    """Flat-Dirichlet kernel rows and uniform cost means.

    ``mean_low``/``mean_high`` may be scalars or length-``num_agents``
    sequences giving each agent its own interval. Draw order is fixed
    (kernel first, then means) so a given generator state always yields the
    same model.
    """
    low = np.broadcast_to(np.asarray(mean_low, dtype=float).reshape(-1, 1, 1), (num_agents, 1, 1))
    high = np.broadcast_to(np.asarray(mean_high, dtype=float).reshape(-1, 1, 1), (num_agents, 1, 1))
    kernel = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    means = rng.uniform(low, high, size=(num_agents, num_states, num_actions))
    return MdpModel(kernel=kernel, cost_means=means, cost_noise_std=cost_noise_std, discount=discount)


@dataclass
class TrajectoryState:
    state: int = 0
    action: int = -1
    step: int = 0
    stream: str = "trajectory"


def sample_next_state(model: MdpModel, i: int, u: int, rng) -> int:
    """Draw a successor of ``(i, u)`` by inverting the row CDF with one uniform."""
    if not (0 <= i < model.num_states and 0 <= u < model.num_actions):
        raise IndexError(f"state-action ({i}, {u}) out of range")
    cdf = model._cdf[i, u]
    j = int(np.searchsorted(cdf, rng.random(), side="right"))
    # guards against a cumulative sum that ends a hair below 1
    return min(j, model.num_states - 1)


def sample_cost(model: MdpModel, n: int, i: int, u: int, rng) -> float:
    """One Gaussian cost draw for agent ``n`` at ``(i, u)``."""
    return float(model.cost_means[n, i, u] + model.cost_noise_std[n, i, u] * rng.standard_normal())


def sample_costs(model: MdpModel, i: int, u: int, streams) -> np.ndarray:
    """Cost draws for all agents at once; ``streams.next()`` yields one normal per agent."""
    return model.cost_means[:, i, u] + model.cost_noise_std[:, i, u] * streams.next()


def behavior_step(model: MdpModel, traj: TrajectoryState, rng) -> tuple[int, int]:
    """Uniform exploratory action, then a successor draw; advances ``traj`` in place."""
    u = min(int(rng.random() * model.num_actions), model.num_actions - 1)
    j = sample_next_state(model, traj.state, u, rng)
    traj.action = u
    traj.state = j
    traj.step += 1
    return u, j
