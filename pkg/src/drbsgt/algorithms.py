"""DRBSGT, DSGT and cyclic-block ATC engines plus stepsize-schedule checks.

All engines act on a :class:`SwarmState` whose row i is agent i. Steps
return a new state; the input state is left untouched.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DivergenceError
from .rng import BlockSelector, stream

DIVERGENCE_NORM = 1e12


@dataclass
class SwarmState:
    x: np.ndarray
    y: np.ndarray
    last_block: np.ndarray
    last_block_grad: list
    iter: int = 0
    block_evals: int = 0
    b: int = 1
    slices: tuple = field(default=(slice(None),), repr=False)

    def copy(self):
        return SwarmState(
            self.x.copy(),
            self.y.copy(),
            self.last_block.copy(),
            [g.copy() for g in self.last_block_grad],
            self.iter,
            self.block_evals,
            self.b,
            self.slices,
        )

    @property
    def m(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    def cached_direction(self):
        """(1/m) sum_i U_{l_i} g_i: the average of the embedded cached block gradients."""
        acc = np.zeros(self.n)
        for i in range(self.m):
            acc[self.slices[self.last_block[i]]] += self.last_block_grad[i]
        return acc / self.m


@dataclass(frozen=True)
class StepSchedule:
    gamma: float
    Gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.Gamma > 0):
            raise ArgumentError("gamma and Gamma must be positive")

    def step(self, k):
        return self.gamma / (k + self.Gamma)


class RandomStreams:
    """Per-agent sample and block streams for one sample path."""

    def __init__(self, oracle, b, master_seed, path):
        self.samplers = oracle.samplers(master_seed, path)
        self.blocks = BlockSelector.for_path(b, master_seed, path, oracle.m)


def initial_points(m, n, rule="gaussian", master_seed=0):
    if rule == "zeros":
        return np.zeros((m, n))
    if rule == "gaussian":
        # x0 streams carry path 0 for every path: all paths start from the same point
        return np.array([stream(master_seed, 0, i, "x0").standard_normal(n) for i in range(m)])
    raise ArgumentError(f"unknown initial-point rule {rule!r}")


def _guard(x, k):
    if np.abs(x).max() <= DIVERGENCE_NORM:  # False for NaN as well
        return
    bad = ~(np.abs(x).max(axis=1) <= DIVERGENCE_NORM)
    agent = int(np.flatnonzero(bad)[0])
    raise DivergenceError(f"iterate diverged at k={k}, agent {agent}", k=k, agent=agent)


def init_swarm(oracle, partition, x0, streams):
    """Initial swarm: each y_i holds one sampled block gradient."""
    x = np.array(x0, dtype=float)
    m, n = x.shape
    if (m, n) != (oracle.m, oracle.n) or partition.n != n:
        raise ArgumentError("initial point, oracle and partition dimensions disagree")
    slices = partition.slices
    y = np.zeros((m, n))
    blocks = np.empty(m, dtype=np.int64)
    cache = []
    for i in range(m):
        ell = streams.blocks.draw(i)
        xi = streams.samplers[i].next()
        g = oracle.block_grad(i, x[i], slices[ell], xi)
        y[i, slices[ell]] = g
        blocks[i] = ell
        cache.append(g)
    return SwarmState(x, y, blocks, cache, 0, m, partition.b, slices)


def drbsgt_step(state, W, schedule, oracle, streams):
    k = state.iter
    Wm = getattr(W, "weights", W)
    slices = state.slices
    x_new = Wm @ (state.x - schedule.step(k) * state.y)
    _guard(x_new, k + 1)
    y_new = Wm @ state.y
    blocks = np.empty_like(state.last_block)
    cache = []
    for i in range(state.m):
        ell = streams.blocks.draw(i)
        xi = streams.samplers[i].next()
        g = oracle.block_grad(i, x_new[i], slices[ell], xi)
        y_new[i, slices[ell]] += g
        y_new[i, slices[state.last_block[i]]] -= state.last_block_grad[i]
        blocks[i] = ell
        cache.append(g)
    _guard(y_new, k + 1)
    return SwarmState(x_new, y_new, blocks, cache, k + 1, state.block_evals + state.m, state.b, slices)


def init_dsgt(oracle, x0, streams):
    x = np.array(x0, dtype=float)
    m, n = x.shape
    full = slice(None)
    y = np.zeros((m, n))
    cache = []
    for i in range(m):
        xi = streams.samplers[i].next()
        g = oracle.block_grad(i, x[i], full, xi)
        y[i] = g
        cache.append(g)
    b = streams.blocks.b
    return SwarmState(x, y, np.zeros(m, dtype=np.int64), cache, 0, m * b, b, (full,))


def dsgt_step(state, W, schedule, oracle, streams):
    """Full stochastic gradient tracking; counts b block-equivalents per gradient."""
    k = state.iter
    Wm = getattr(W, "weights", W)
    full = slice(None)
    x_new = Wm @ (state.x - schedule.step(k) * state.y)
    _guard(x_new, k + 1)
    y_new = Wm @ state.y
    cache = []
    for i in range(state.m):
        xi = streams.samplers[i].next()
        g = oracle.block_grad(i, x_new[i], full, xi)
        y_new[i, full] += g
        y_new[i, full] -= state.last_block_grad[i]
        cache.append(g)
    _guard(y_new, k + 1)
    return SwarmState(
        x_new, y_new, state.last_block.copy(), cache, k + 1,
        state.block_evals + state.m * state.b, state.b, state.slices,
    )


def init_atc(oracle, partition, x0):
    x = np.array(x0, dtype=float)
    m, n = x.shape
    return SwarmState(
        x, np.zeros((m, n)), np.zeros(m, dtype=np.int64),
        [np.zeros(partition.sizes[0]) for _ in range(m)], 0, 0, partition.b, partition.slices,
    )


def atc_cyclic_step(state, W, schedule, oracle, partition):
    """Deterministic ATC step on block k mod b; y stores the direction just used."""
    k = state.iter
    Wm = getattr(W, "weights", W)
    ell = k % partition.b
    sl = partition.slices[ell]
    direction = np.zeros_like(state.x)
    cache = []
    for i in range(state.m):
        g = oracle.grad_block(i, state.x[i], sl)
        direction[i, sl] = g
        cache.append(g)
    x_new = Wm @ (state.x - schedule.step(k) * direction)
    _guard(x_new, k + 1)
    return SwarmState(
        x_new, direction, np.full(state.m, ell, dtype=np.int64), cache, k + 1,
        state.block_evals + state.m, state.b, state.slices,
    )


def gradient_eval_counter(state):
    return state.block_evals, state.block_evals / state.b


@dataclass(frozen=True)
class ScheduleReport:
    gamma: float
    Gamma: float
    b: int
    mu: float
    lip: float
    rho: float
    gamma_gt_ok: bool
    gamma0_bound: float
    gamma0_ok: bool
    eta: float
    spectral_Gamma_min: float
    gamma_spectral_ok: bool
    spectral_vacuous: bool
    k_threshold: float

    @property
    def all_ok(self):
        return self.gamma_gt_ok and self.gamma0_ok and self.gamma_spectral_ok

    def lines(self):
        def mark(ok):
            return "PASS" if ok else "FAIL"

        eta = "undefined (rho_W = 0)" if math.isnan(self.eta) else f"{self.eta:.6g}"
        spectral = "vacuous (rho_W = 0)" if self.spectral_vacuous else mark(self.gamma_spectral_ok)
        return [
            f"gamma = {self.gamma:.6g}, Gamma = {self.Gamma:.6g}, b = {self.b}, "
            f"mu = {self.mu:.6g}, L = {self.lip:.6g}, rho_W = {self.rho:.10g}",
            f"[{mark(self.gamma_gt_ok)}] Gamma > gamma",
            f"[{mark(self.gamma0_ok)}] gamma/Gamma = {self.gamma / self.Gamma:.6g} "
            f"<= min(2b/(mu+L), b mu/(4(b-1)L^2)) = {self.gamma0_bound:.6g}",
            f"[{spectral}] Gamma >= {self.spectral_Gamma_min:.6g} (spectral lower bound)",
            f"eta = {eta}",
            f"rate bounds apply for k > {self.k_threshold:.6g}",
        ]


def _spectral_factor(b, lip, rho):
    r2 = rho * rho
    return 2 * lip**2 * r2 + 2 * (b - 1) * lip**2 * (1 + r2) * r2 / (1 - r2)


def validate_schedule(schedule, b, mu, lip, rho):
    """Evaluate the explicit stepsize conditions; nothing is enforced."""
    gamma, Gamma = schedule.gamma, schedule.Gamma
    if min(b, mu, lip) <= 0 or not 0 <= rho < 1:
        raise ArgumentError("need positive b, mu, L and rho_W in [0, 1)")
    second = math.inf if b == 1 else b * mu / (4 * (b - 1) * lip**2)
    bound = min(2 * b / (mu + lip), second)
    r2 = rho * rho
    spec = _spectral_factor(b, lip, rho)
    if rho == 0.0:
        eta = math.nan
        spectral_min = 0.0
        vacuous = True
    else:
        eta = 0.5 * b * (1 - r2) / r2
        spectral_min = gamma * math.sqrt(3 / (1 - r2) * (1 / b**2 + 1 / (b * eta)) * spec)
        vacuous = False
    k_thr = gamma * math.sqrt((1 / b**2 + 2 * r2 / (b**2 * (1 - r2))) * spec / ((1 + r2) / 2)) - Gamma
    return ScheduleReport(
        gamma=gamma, Gamma=Gamma, b=b, mu=mu, lip=lip, rho=rho,
        gamma_gt_ok=Gamma > gamma,
        gamma0_bound=bound,
        gamma0_ok=gamma / Gamma <= bound,
        eta=eta,
        spectral_Gamma_min=spectral_min,
        gamma_spectral_ok=vacuous or Gamma >= spectral_min,
        spectral_vacuous=vacuous,
        k_threshold=k_thr,
    )


ENGINES = ("drbsgt", "dsgt", "atc")


class Engine:
    """Uniform driver around the three update rules for one sample path."""

    def __init__(self, algorithm, oracle, partition, W, schedule, master_seed, path, x0):
        if algorithm not in ENGINES:
            raise ArgumentError(f"unknown algorithm {algorithm!r}")
        self.algorithm = algorithm
        self.oracle = oracle
        self.partition = partition
        self.W = W
        self.schedule = schedule
        if algorithm == "atc":
            self.streams = None
            self.state = init_atc(oracle, partition, x0)
        elif algorithm == "dsgt":
            self.streams = RandomStreams(oracle, partition.b, master_seed, path)
            self.state = init_dsgt(oracle, x0, self.streams)
        else:
            self.streams = RandomStreams(oracle, partition.b, master_seed, path)
            self.state = init_swarm(oracle, partition, x0, self.streams)

    @property
    def evals_per_step(self):
        m = self.oracle.m
        return m * self.partition.b if self.algorithm == "dsgt" else m

    def step(self):
        s = self.state
        if self.algorithm == "drbsgt":
            self.state = drbsgt_step(s, self.W, self.schedule, self.oracle, self.streams)
        elif self.algorithm == "dsgt":
            self.state = dsgt_step(s, self.W, self.schedule, self.oracle, self.streams)
        else:
            self.state = atc_cyclic_step(s, self.W, self.schedule, self.oracle, self.partition)
        return self.state

    def direction(self, before, after):
        """Row-mean direction d with xbar_{k+1} = xbar_k - gamma_k d."""
        src = after if self.algorithm == "atc" else before
        return src.y.sum(axis=0) / src.m
