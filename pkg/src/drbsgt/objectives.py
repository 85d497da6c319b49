"""Per-agent objective oracles, datasets and the centralized reference solver."""

import csv
import dataclasses
import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import rng as rngmod
from .errors import (
    ArgumentError,
    ConstructionError,
    ConvergenceError,
    DataError,
    ParseError,
    PartitionError,
)

MAX_BATCH = 100_000


class _ChunkedSampler:
    """Pulls per-agent samples from a generator in fixed-size chunks."""

    def __init__(self, gen, draw_chunk):
        self.gen = gen
        self._draw_chunk = draw_chunk
        self._buf = None
        self._pos = 0

    def next(self):
        if self._buf is None or self._pos >= len(self._buf):
            self._buf = self._draw_chunk(self.gen, rngmod.CHUNK)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


class ObjectiveOracle:
    """Common surface of the oracle families.

    ``block_grad(i, x, sl, xi)`` is the slice ``sl`` of the stochastic gradient
    of f_i at x under sample xi; the full stochastic gradient is the same call
    with ``slice(None)``.
    """

    m: int
    n: int
    mu: float
    lip: float
    noise_bound: float
    optimum: np.ndarray

    def value_sum(self, x):
        return sum(self.value(i, x) for i in range(self.m))

    def grad_sum(self, x):
        g = np.zeros(self.n)
        for i in range(self.m):
            g += self.grad(i, x)
        return g

    def grad_block(self, i, x, sl):
        return self.grad(i, x)[sl]

    def stochastic_grad(self, i, x, xi):
        return self.block_grad(i, x, slice(None), xi)

    def samplers(self, master_seed, path):
        return [self.sampler(rngmod.stream(master_seed, path, i, "sample"), i) for i in range(self.m)]

    def stochastic_gradients(self, i, x, gen, count):
        s = self.sampler(gen, i)
        return np.array([self.stochastic_grad(i, x, s.next()) for _ in range(count)])


@dataclass(frozen=True, eq=False)
class QuadraticOracle(ObjectiveOracle):
    """f_i(x) = 1/2 (x - c_i)^T A_i (x - c_i) with additive Gaussian gradient noise."""

    A: np.ndarray
    c: np.ndarray
    noise: float
    mu: float
    lip: float
    optimum: np.ndarray

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def noise_bound(self):
        return self.noise**2

    @classmethod
    def from_matrices(cls, A, c, noise=0.0):
        A = np.array(A, dtype=float)
        c = np.array(c, dtype=float)
        if A.ndim == 2:
            A, c = A[None], c[None]
        eigs = np.concatenate([np.linalg.eigvalsh(a) for a in A])
        mu, lip = float(eigs.min()), float(eigs.max())
        if mu <= 0:
            raise ConstructionError("every A_i must be positive definite")
        H = A.sum(axis=0)
        try:
            x_star = np.linalg.solve(H, np.einsum("ijk,ik->j", A, c))
        except np.linalg.LinAlgError as exc:
            raise ConstructionError("sum of A_i is singular") from exc
        return cls(A=A, c=c, noise=float(noise), mu=mu, lip=lip, optimum=x_star)

    def value(self, i, x):
        d = x - self.c[i]
        return 0.5 * float(d @ self.A[i] @ d)

    def grad(self, i, x):
        return self.A[i] @ (x - self.c[i])

    def grad_block(self, i, x, sl):
        return self.A[i][sl] @ (x - self.c[i])

    def block_grad(self, i, x, sl, xi):
        return self.A[i][sl] @ (x - self.c[i]) + xi[sl]

    def sampler(self, gen, i):
        scale = self.noise / np.sqrt(self.n)
        n = self.n
        return _ChunkedSampler(gen, lambda g, k: scale * g.standard_normal((k, n)))

    def stochastic_gradients(self, i, x, gen, count):
        scale = self.noise / np.sqrt(self.n)
        return self.grad(i, x) + scale * gen.standard_normal((count, self.n))


def make_quadratic_oracle(m, n, spectrum=(1.0, 2.0), noise=0.0, rng_seed=0, center_scale=1.0):
    """Random heterogeneous quadratics with every A_i spectrum inside [mu, L].

    ``spectrum`` is either the pair (mu, L), spread linearly over n
    eigenvalues, or an explicit list of n eigenvalues; both endpoints are
    attained for every agent.
    """
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape == (2,) and n != 2:
        eig = np.linspace(spectrum[0], spectrum[1], n)
    elif spectrum.shape == (n,):
        eig = np.sort(spectrum)
    else:
        raise ArgumentError(f"spectrum must be (mu, L) or length {n}")
    if eig[0] <= 0 or eig[0] > eig[-1]:
        raise ArgumentError("spectrum must satisfy 0 < mu <= L")
    gen = np.random.default_rng(rng_seed)
    A = np.empty((m, n, n))
    for i in range(m):
        Q, R = np.linalg.qr(gen.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        A[i] = (Q * eig) @ Q.T
        A[i] = 0.5 * (A[i] + A[i].T)
    c = center_scale * gen.standard_normal((m, n))
    oracle = QuadraticOracle.from_matrices(A, c, noise)
    # rotation round-off moves the measured extremes by ~1e-15; keep the nominal ones
    return dataclasses.replace(oracle, mu=float(eig[0]), lip=float(eig[-1]))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    agent_assignment: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"features {X.shape} and labels {y.shape} disagree")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.agent_assignment is not None:
            a = np.asarray(self.agent_assignment, dtype=np.int64)
            if a.shape != y.shape or np.any(a < 0):
                raise PartitionError("agent assignment must map every sample to an agent")
            object.__setattr__(self, "agent_assignment", a)

    @property
    def s(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    def shards(self, m=None):
        if self.agent_assignment is None:
            raise PartitionError("dataset has not been partitioned")
        m = int(self.agent_assignment.max()) + 1 if m is None else m
        return [np.flatnonzero(self.agent_assignment == i) for i in range(m)]


def generate_synthetic_dataset(s, n, mean=5.0, std=0.5, rng_seed=0, flip_rate=0.05):
    """Gaussian features; labels from a planted hyperplane through the feature mean."""
    gen = np.random.default_rng(rng_seed)
    X = gen.normal(mean, std, size=(s, n))
    w = gen.standard_normal(n)
    score = (X - mean) @ w
    y = np.where(score >= 0, 1.0, -1.0)
    flips = gen.random(s) < flip_rate
    y[flips] *= -1
    return Dataset(X, y)


def _label_mapper(rule):
    if rule == "pm1":
        table = {-1: -1.0, 1: 1.0}
        return lambda v: table[v] if v in table else None
    if rule == "parity":
        return lambda v: 1.0 if v % 2 == 0 else -1.0
    if rule.startswith("ovr:"):
        pos = int(rule[4:])
        return lambda v: 1.0 if v == pos else -1.0
    raise ArgumentError(f"unknown label rule {rule!r}")


def load_dataset(path, format="csv-labeled", label_rule="parity", scale=False):
    """Read header-free ``label,feat_1,...,feat_n`` rows (gzip by ``.gz`` extension)."""
    if format != "csv-labeled":
        raise ArgumentError(f"unsupported dataset format {format!r}")
    path = Path(path)
    mapper = _label_mapper(label_rule)
    opener = gzip.open if path.suffix == ".gz" else open
    labels, rows = [], []
    with opener(path, "rt", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not tok.strip() for tok in row):
                continue
            try:
                vals = [float(tok) for tok in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric token", line=lineno) from None
            if len(vals) < 2:
                raise ParseError(f"{path}:{lineno}: need a label and at least one feature", line=lineno)
            if rows and len(vals) - 1 != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: expected {len(rows[0])} features", line=lineno)
            raw = vals[0]
            if raw != int(raw):
                raise DataError(f"{path}:{lineno}: label {raw} is not an integer")
            mapped = mapper(int(raw))
            if mapped is None:
                raise DataError(f"{path}:{lineno}: label {int(raw)} outside rule {label_rule!r}")
            labels.append(mapped)
            rows.append(vals[1:])
    if not rows:
        raise DataError(f"{path}: no samples")
    X = np.array(rows)
    if scale:
        lo, hi = X.min(), X.max()
        X = (X - lo) / (hi - lo) if hi > lo else np.zeros_like(X)
    return Dataset(X, np.array(labels))


def partition_dataset(data, m, rule="contiguous"):
    s = data.s
    if not 1 <= m <= s:
        raise ArgumentError(f"need 1 <= m <= s, got m={m}, s={s}")
    if rule == "contiguous":
        q, r = divmod(s, m)
        sizes = [q + 1 if i < r else q for i in range(m)]
        assign = np.repeat(np.arange(m), sizes)
    elif rule in ("round-robin", "round_robin"):
        assign = np.arange(s) % m
    else:
        raise ArgumentError(f"unknown partition rule {rule!r}")
    return Dataset(data.features, data.labels, assign)


def _power_lambda_max(matvec, dim, tol=1e-10, max_iter=10_000, seed=0):
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return lam


@dataclass(frozen=True, eq=False)
class LogisticOracle(ObjectiveOracle):
    """Regularized logistic loss split over agents by a dataset partition."""

    data: Dataset
    reg: float
    batch: int
    mu: float
    lip: float
    optimum: np.ndarray = None
    noise_bound: float = None
    optimum_residual: float = None

    def __post_init__(self):
        shards = self.data.shards()
        object.__setattr__(self, "_X", [self.data.features[s] for s in shards])
        object.__setattr__(self, "_v", [self.data.labels[s] for s in shards])

    @property
    def m(self):
        return len(self._X)

    @property
    def n(self):
        return self.data.n

    def value(self, i, x):
        z = self._v[i] * (self._X[i] @ x)
        return float(np.logaddexp(0.0, -z).sum() / self.data.s + 0.5 * self.reg / self.m * (x @ x))

    def grad(self, i, x):
        X, v = self._X[i], self._v[i]
        coef = -v * expit(-v * (X @ x))
        return X.T @ coef / self.data.s + (self.reg / self.m) * x

    def grad_block(self, i, x, sl):
        X, v = self._X[i], self._v[i]
        coef = -v * expit(-v * (X @ x))
        return X[:, sl].T @ coef / self.data.s + (self.reg / self.m) * x[sl]

    def block_grad(self, i, x, sl, xi):
        X, v = self._X[i][xi], self._v[i][xi]
        coef = -v * expit(-v * (X @ x))
        w = self._X[i].shape[0] / (self.data.s * len(xi))
        return w * (X[:, sl].T @ coef) + (self.reg / self.m) * x[sl]

    def sampler(self, gen, i):
        size, eps = self._X[i].shape[0], self.batch
        return _ChunkedSampler(gen, lambda g, k: g.integers(0, size, size=(k, eps)))

    def stochastic_gradients(self, i, x, gen, count):
        s = self.sampler(gen, i)
        return np.array([self.stochastic_grad(i, x, s.next()) for _ in range(count)])


def make_logistic_oracle(data, mu, batch, max_batch=MAX_BATCH, solve=True):
    if mu <= 0:
        raise ArgumentError("regularization mu must be positive")
    if batch < 1:
        raise ArgumentError("batch size must be >= 1")
    if batch > max_batch:
        raise ArgumentError(f"batch {batch} exceeds cap {max_batch}")
    if data.agent_assignment is None:
        raise PartitionError("partition the dataset before building the oracle")
    shards = data.shards()
    empty = [i for i, sh in enumerate(shards) if len(sh) == 0]
    if empty:
        raise PartitionError(f"agents {empty} hold no samples")
    m = len(shards)
    X = data.features
    gram_max = _power_lambda_max(lambda v: X.T @ (X @ v), data.n)
    lip = gram_max / (4.0 * data.s) + mu / m
    oracle = LogisticOracle(data=data, reg=float(mu), batch=int(batch), mu=mu / m, lip=float(lip))
    if solve:
        x_star, res = solve_optimum(oracle)
        oracle = dataclasses.replace(oracle, optimum=x_star, optimum_residual=res)
    return oracle


def solve_optimum(oracle, x0=None, tol=1e-8, max_iter=200_000):
    """Minimizer of sum_i f_i and the achieved gradient-norm residual."""
    if isinstance(oracle, QuadraticOracle):
        H = oracle.A.sum(axis=0)
        x = np.linalg.solve(H, np.einsum("ijk,ik->j", oracle.A, oracle.c))
        return x, float(np.linalg.norm(oracle.grad_sum(x)))
    # Nesterov's method with gradient-based restart on f = sum_i f_i
    L = oracle.lip * oracle.m
    x = np.zeros(oracle.n) if x0 is None else np.array(x0, dtype=float)
    z, t = x.copy(), 1.0
    g = oracle.grad_sum(z)
    for _ in range(max_iter):
        x_new = z - g / L
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z_new = x_new + ((t - 1.0) / t_new) * (x_new - x)
        if g @ (x_new - x) > 0:
            z_new, t_new = x_new.copy(), 1.0
        x, z, t = x_new, z_new, t_new
        g = oracle.grad_sum(z)
        gx = oracle.grad_sum(x)
        res = float(np.linalg.norm(gx))
        if res <= tol * max(1.0, float(np.linalg.norm(x))):
            return x, res
    raise ConvergenceError(f"solver hit {max_iter} iterations, residual {res:.3e}", residual=res)


def estimate_noise_bound(oracle, probe_points, samples, seed=0):
    """Largest empirical E||g(x, xi) - grad f_i(x)||^2 over agents and probes."""
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.shape[0] < 1:
        raise ArgumentError("need at least one probe point")
    gen = np.random.default_rng(seed)
    worst = 0.0
    for x in probes:
        for i in range(oracle.m):
            dev = oracle.stochastic_gradients(i, x, gen, samples) - oracle.grad(i, x)
            worst = max(worst, float(np.mean(np.sum(dev**2, axis=1))))
    return worst
