"""Agent topologies, doubly stochastic mixing matrices and the spectral gap."""

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ArgumentError,
    InvariantError,
    NumericalError,
    ParseError,
    RuleInapplicableError,
    TopologyError,
)

STOCHASTIC_TOL = 1e-12


def _canon(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class NetworkGraph:
    num_agents: int
    edges: frozenset

    def __post_init__(self):
        if self.num_agents < 2:
            raise ArgumentError(f"need at least 2 agents, got {self.num_agents}")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise TopologyError(f"self-loop at agent {i}")
            if not (0 <= i < self.num_agents and 0 <= j < self.num_agents):
                raise TopologyError(f"edge ({i}, {j}) outside 0..{self.num_agents - 1}")
            canon.add(_canon(i, j))
        object.__setattr__(self, "edges", frozenset(canon))
        unreached = set(range(self.num_agents)) - self._reachable_from(0)
        if unreached:
            raise TopologyError(f"graph is disconnected; unreachable agents {sorted(unreached)}")

    def has_edge(self, i, j):
        return _canon(i, j) in self.edges

    def neighbors(self, i):
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))

    def degrees(self):
        deg = np.zeros(self.num_agents, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def _reachable_from(self, start):
        adj = {i: [] for i in range(self.num_agents)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen


def build_graph(kind, m, edges=None):
    if m < 2:
        raise ArgumentError(f"need m >= 2, got {m}")
    if kind == "ring":
        pairs = [(i, (i + 1) % m) for i in range(m)]
    elif kind == "complete":
        pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    elif kind in ("edge-list", "edge_list"):
        if edges is None:
            raise ArgumentError("edge-list graph needs an edge list")
        pairs = [tuple(e) for e in edges]
    else:
        raise ArgumentError(f"unknown graph kind {kind!r}")
    return NetworkGraph(m, frozenset(pairs))


def read_edge_list(path):
    """Parse ``i j`` pairs, one per line; blank lines and ``#`` comments are skipped."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'i j', got {raw!r}", line=lineno)
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer agent id in {raw!r}", line=lineno) from None
    return pairs


def spectral_gap(weights, tol=1e-10, max_iter=10_000, seed=0):
    """Largest singular value of W - (1/m) 11^T by power iteration.

    Iterates on M^T M restricted to the complement of the all-ones vector and
    stops once the Rayleigh quotient changes by less than ``tol`` (relative).
    """
    W = np.asarray(weights, dtype=float)
    m = W.shape[0]
    M = W - np.full((m, m), 1.0 / m)
    if not np.any(np.abs(M) > 1e-15):
        return 0.0
    MtM = M.T @ M
    v = np.random.default_rng(seed).standard_normal(m)
    v -= v.mean()
    v /= np.linalg.norm(v)
    est = float(v @ MtM @ v)
    for _ in range(max_iter):
        w = MtM @ v
        w -= w.mean()
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new = float(v @ MtM @ v)
        if abs(new - est) <= tol * max(abs(new), 1e-300):
            return float(np.sqrt(max(new, 0.0)))
        est = new
    raise NumericalError(
        f"power iteration did not converge in {max_iter} steps", estimate=float(np.sqrt(max(est, 0.0)))
    )


@dataclass(frozen=True)
class MixingMatrix:
    weights: np.ndarray
    rho: float = field(default=None)

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)
        m = W.shape[0]
        if W.shape != (m, m):
            raise InvariantError(f"mixing matrix must be square, got {W.shape}")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise InvariantError("rows of W do not sum to 1")
        if np.max(np.abs(W.sum(axis=0) - 1.0)) > STOCHASTIC_TOL:
            raise InvariantError("columns of W do not sum to 1")
        if np.any(np.diag(W) <= 0):
            raise InvariantError("W must have a strictly positive diagonal")
        rho = spectral_gap(W) if self.rho is None else float(self.rho)
        if not 0.0 <= rho < 1.0 - 1e-12:
            raise InvariantError(f"rho_W = {rho:.6g} is not < 1; W does not contract disagreement")
        object.__setattr__(self, "rho", rho)

    @property
    def m(self):
        return self.weights.shape[0]

    @classmethod
    def from_weights(cls, weights, graph=None):
        W = np.asarray(weights, dtype=float)
        if graph is not None:
            for i in range(graph.num_agents):
                for j in range(graph.num_agents):
                    if i != j and W[i, j] != 0.0 and not graph.has_edge(i, j):
                        raise InvariantError(f"W[{i},{j}] != 0 but ({i},{j}) is not an edge")
        return cls(W)


def build_mixing_matrix(graph, rule="metropolis"):
    m = graph.num_agents
    deg = graph.degrees()
    W = np.zeros((m, m))
    if rule == "metropolis":
        for i, j in graph.edges:
            W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[np.diag_indices(m)] = 1.0 - W.sum(axis=1)
    elif rule in ("lazy-uniform", "lazy_uniform"):
        if np.any(deg != deg[0]):
            raise RuleInapplicableError("lazy-uniform weights need a regular graph")
        share = 1.0 / (deg[0] + 1.0)
        for i, j in graph.edges:
            W[i, j] = W[j, i] = 0.5 * share
        W[np.diag_indices(m)] = 0.5 + 0.5 * share
    else:
        raise ArgumentError(f"unknown weight rule {rule!r}")
    return MixingMatrix(W)
