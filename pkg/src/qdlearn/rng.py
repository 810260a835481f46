"""Named, independent random streams derived from one master seed.

Every stochastic source in a run (model generation, trajectory, per-agent
costs, link failures) gets its own Philox stream keyed by
``(master_seed, stream_code, index)``, so changing how many draws one source
makes never shifts another source's draws.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

STREAM_CODES = {
    "model": 0,
    "trajectory": 1,
    "costs": 2,
    "graph": 3,
}

DEFAULT_BLOCK = 4096


class StreamFactory:
    """Derive :class:`numpy.random.Generator` objects by stream name.

    ``overrides`` replaces the master seed for selected stream names, which
    lets a caller re-seed e.g. the graph stream alone.
    """

    def __init__(self, master_seed: int, overrides: Mapping[str, int] | None = None):
        if master_seed < 0:
            raise ValueError(f"seed must be non-negative, got {master_seed}")
        self.master_seed = int(master_seed)
        self.overrides = dict(overrides or {})
        unknown = set(self.overrides) - set(STREAM_CODES)
        if unknown:
            raise ValueError(f"unknown stream name(s): {sorted(unknown)}")

    def seed_sequence(self, name: str, index: int = 0) -> np.random.SeedSequence:
        code = STREAM_CODES[name]
        entropy = self.overrides.get(name, self.master_seed)
        return np.random.SeedSequence(entropy, spawn_key=(code, index))

    def generator(self, name: str, index: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(name, index)))


class BufferedStream:
    """Block-buffered view of a generator.

    Draws are pulled from the underlying generator in fixed-size blocks; the
    sequence of values handed out depends only on the generator state, not
    on how calls are interleaved. Uniform and normal draws use separate
    buffers, so a stream should be used for one kind of draw only.
    """

    def __init__(self, generator: np.random.Generator, block: int = DEFAULT_BLOCK):
        self.generator = generator
        self.block = block
        self._uniform = np.empty(0)
        self._u_pos = 0
        self._normal = np.empty(0)
        self._n_pos = 0

    def random(self, size: int | None = None):
        if size is None:
            if self._u_pos >= self._uniform.size:
                self._uniform = self.generator.random(self.block)
                self._u_pos = 0
            value = float(self._uniform[self._u_pos])
            self._u_pos += 1
            return value
        out = np.empty(size)
        filled = 0
        while filled < size:
            if self._u_pos >= self._uniform.size:
                self._uniform = self.generator.random(max(self.block, size))
                self._u_pos = 0
            take = min(size - filled, self._uniform.size - self._u_pos)
            out[filled:filled + take] = self._uniform[self._u_pos:self._u_pos + take]
            self._u_pos += take
            filled += take
        return out

    def standard_normal(self) -> float:
        if self._n_pos >= self._normal.size:
            self._normal = self.generator.standard_normal(self.block)
            self._n_pos = 0
        value = float(self._normal[self._n_pos])
        self._n_pos += 1
        return value


class AgentNormalStreams:
    """One standard-normal stream per agent, read column-wise each step."""

    def __init__(self, generators: list[np.random.Generator], block: int = DEFAULT_BLOCK):
        self.generators = generators
        self.block = block
        self._buf = np.empty((len(generators), 0))
        self._pos = 0

    def __len__(self) -> int:
        return len(self.generators)

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([g.standard_normal(self.block) for g in self.generators])
            self._pos = 0
        col = self._buf[:, self._pos]
        self._pos += 1
        return col
