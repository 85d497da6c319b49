"""Contiguous coordinate blocks and the randomized block-error diagnostics."""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError


@dataclass(frozen=True)
class BlockPartition:
    n: int
    sizes: tuple
    offsets: tuple

    def __post_init__(self):
        if len(self.sizes) < 1:
            raise ArgumentError("partition needs at least one block")
        if any(s <= 0 for s in self.sizes) or sum(self.sizes) != self.n:
            raise ArgumentError(f"block sizes {self.sizes} do not cover n={self.n}")
        expected = tuple(int(o) for o in np.concatenate(([0], np.cumsum(self.sizes)[:-1])))
        if tuple(self.offsets) != expected:
            raise ArgumentError("blocks must be contiguous and ordered")
        object.__setattr__(
            self,
            "_slices",
            tuple(slice(o, o + s) for o, s in zip(self.offsets, self.sizes)),
        )

    @property
    def b(self):
        return len(self.sizes)

    @property
    def slices(self):
        return self._slices

    def block(self, ell):
        if not 0 <= ell < self.b:
            raise ArgumentError(f"block index {ell} outside [0, {self.b})")
        return self._slices[ell]

    def split(self, x):
        x = np.asarray(x)
        return [x[sl] for sl in self._slices]


def make_partition(n, b):
    if b < 1 or b > n:
        raise ArgumentError(f"need 1 <= b <= n, got n={n}, b={b}")
    q, r = divmod(n, b)
    sizes = tuple(q + 1 if ell < r else q for ell in range(b))
    offsets = tuple(int(o) for o in np.concatenate(([0], np.cumsum(sizes)[:-1])))
    return BlockPartition(n, sizes, offsets)


def embed_block(partition, ell, block_values):
    sl = partition.block(ell)
    v = np.asarray(block_values, dtype=float)
    if v.shape != (sl.stop - sl.start,):
        raise ArgumentError(f"block {ell} has length {sl.stop - sl.start}, got shape {v.shape}")
    out = np.zeros(partition.n)
    out[sl] = v
    return out


def block_error(full_grad, partition, ell):
    """e = g - b * U_ell g^(ell): the error of the rescaled single-block estimate."""
    g = np.asarray(full_grad, dtype=float)
    if g.shape != (partition.n,):
        raise ArgumentError(f"gradient must have length {partition.n}")
    sl = partition.block(ell)
    return g - partition.b * embed_block(partition, ell, g[sl])


def enumerate_block_error_moments(full_grad, partition):
    """Exact mean and mean squared norm of the block error over all b blocks."""
    errs = np.array([block_error(full_grad, partition, ell) for ell in range(partition.b)])
    mean_e = errs.mean(axis=0)
    mean_sq = float(np.mean(np.sum(errs**2, axis=1)))
    return mean_e, mean_sq
