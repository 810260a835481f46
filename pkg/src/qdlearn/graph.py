"""Communication topologies, link-failure Laplacians, and mean connectivity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

CONNECTIVITY_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Simple undirected graph on agents ``0..num_agents-1``."""

    num_agents: int
    edges: tuple[tuple[int, int], ...]
    _edge_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_agents < 1:
            raise ConfigurationError("num_agents must be positive")
        normalized = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ConfigurationError(f"self-loop at agent {a}")
            if not (0 <= a < self.num_agents and 0 <= b < self.num_agents):
                raise ConfigurationError(f"edge ({a}, {b}) references an unknown agent")
            edge = (min(a, b), max(a, b))
            if edge in normalized:
                raise ConfigurationError(f"duplicate edge {edge}")
            normalized.add(edge)
        edges = tuple(sorted(normalized))
        object.__setattr__(self, "edges", edges)
        arr = np.array(edges, dtype=np.intp).reshape(-1, 2)
        arr.setflags(write=False)
        object.__setattr__(self, "_edge_array", arr)

    @property
    def edge_array(self) -> np.ndarray:
        return self._edge_array

    def degrees(self) -> np.ndarray:
        return np.bincount(self._edge_array.ravel(), minlength=self.num_agents)

    def neighbors(self, n: int) -> list[int]:
        return sorted({b if a == n else a for a, b in self.edges if n in (a, b)})

    def laplacian(self) -> np.ndarray:
        return laplacian_from_edges(self.num_agents, self._edge_array)


def laplacian_from_edges(num_agents: int, edges: np.ndarray) -> np.ndarray:
    L = np.zeros((num_agents, num_agents))
    if len(edges):
        L[edges[:, 0], edges[:, 1]] = -1.0
        L[edges[:, 1], edges[:, 0]] = -1.0
        L[np.diag_indices(num_agents)] = np.bincount(edges.ravel(), minlength=num_agents)
    return L


def build_ring(num_agents: int, radius: int) -> Topology:
    """Agents on a circle, each linked to the ``radius`` nearest on either side."""
    if num_agents < 2 or radius < 1 or 2 * radius >= num_agents:
        raise ConfigurationError(
            f"ring needs N >= 2 and 1 <= radius < N/2, got N={num_agents}, radius={radius}"
        )
    edges = {
        tuple(sorted((n, (n + s) % num_agents)))
        for n in range(num_agents)
        for s in range(1, radius + 1)
    }
    return Topology(num_agents, tuple(edges))


def from_edges(num_agents: int, edges: Iterable[Iterable[int]]) -> Topology:
    return Topology(num_agents, tuple(tuple(e) for e in edges))


def disjoint_union(*parts: Topology) -> Topology:
    """Relabel and place topologies side by side with no edges between them."""
    offset = 0
    edges = []
    for part in parts:
        edges.extend((a + offset, b + offset) for a, b in part.edges)
        offset += part.num_agents
    return Topology(offset, tuple(edges))


@dataclass(frozen=True, eq=False)
class LaplacianSample:
    matrix: np.ndarray
    active_edges: np.ndarray


class FailureModel(Protocol):
    """Anything that can draw i.i.d. Laplacians and report their mean."""

    def sample(self, topology: Topology, rng) -> LaplacianSample: ...

    def mean_laplacian(self, topology: Topology) -> np.ndarray: ...


@dataclass(frozen=True)
class LinkFailureModel:
    """Each edge is erased independently with probability ``erasure_probability`` every step."""

    erasure_probability: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.erasure_probability <= 1.0:
            raise ConfigurationError(
                f"erasure_probability must lie in [0,1], got {self.erasure_probability}"
            )

    def sample(self, topology: Topology, rng) -> LaplacianSample:
        edges = topology.edge_array
        # one uniform per edge, always, so the graph stream advances by a fixed amount
        keep = rng.random(len(edges)) >= self.erasure_probability
        active = edges[keep]
        return LaplacianSample(laplacian_from_edges(topology.num_agents, active), active)

    def mean_laplacian(self, topology: Topology) -> np.ndarray:
        return (1.0 - self.erasure_probability) * topology.laplacian()


def sample_laplacian(topology: Topology, failure: FailureModel, rng) -> LaplacianSample:
    return failure.sample(topology, rng)


def mean_laplacian(topology: Topology, failure: FailureModel) -> np.ndarray:
    return failure.mean_laplacian(topology)


def algebraic_connectivity(matrix: np.ndarray) -> float:
    """Second-smallest eigenvalue of a symmetric Laplacian-like matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    if matrix.shape[0] < 2:
        raise ValueError("algebraic connectivity needs at least two nodes")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(matrix)[1])


@dataclass(frozen=True)
class ConnectivityCheck:
    passed: bool
    lambda2: float

    def __bool__(self) -> bool:
        return self.passed


def check_mean_connectivity(topology: Topology, failure: FailureModel) -> ConnectivityCheck:
    """Pass iff the expected Laplacian has a positive Fiedler value.

    A single agent has nothing to agree with and passes trivially (reported
    with ``lambda2 = nan``).
    """
    if topology.num_agents == 1:
        return ConnectivityCheck(True, math.nan)
    lam = algebraic_connectivity(mean_laplacian(topology, failure))
    return ConnectivityCheck(lam > CONNECTIVITY_TOL, lam)
