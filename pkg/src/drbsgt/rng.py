"""Seed derivation: one independent numpy stream per (path, agent, purpose).

Streams are built from ``SeedSequence(master_seed, spawn_key=...)`` so that no
two tuples share entropy and every run is reproducible from the master seed.
"""

import numpy as np

PURPOSES = {"x0": 0, "sample": 1, "block": 2}

# draws are pulled from the generator in fixed-size chunks; changing this
# changes every trajectory, so it is part of the reproducibility contract
CHUNK = 1024


def seed_sequence(master_seed, path, agent, purpose):
    if purpose not in PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    return np.random.SeedSequence(
        int(master_seed), spawn_key=(PURPOSES[purpose], int(path), int(agent))
    )


def stream(master_seed, path, agent, purpose):
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, path, agent, purpose)))


class BlockSelector:
    """Uniform block indices in [0, b), one generator per agent."""

    def __init__(self, b, generators):
        self.b = int(b)
        self.generators = list(generators)
        self._buf = [np.empty(0, dtype=np.int64) for _ in self.generators]
        self._pos = [0] * len(self.generators)

    @classmethod
    def for_path(cls, b, master_seed, path, m):
        return cls(b, [stream(master_seed, path, i, "block") for i in range(m)])

    def draw(self, agent):
        pos = self._pos[agent]
        buf = self._buf[agent]
        if pos >= buf.shape[0]:
            buf = self.generators[agent].integers(0, self.b, size=CHUNK)
            self._buf[agent] = buf
            pos = 0
        self._pos[agent] = pos + 1
        return int(buf[pos])

    def draw_all(self):
        return np.array([self.draw(i) for i in range(len(self.generators))], dtype=np.int64)
