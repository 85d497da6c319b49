"""Error sequences, identity monitors, log-log rate fits and confidence intervals."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ArgumentError, DegenerateFitError, InapplicableError

FIELDS = ("err1", "err2", "err3", "objective", "tracking_residual", "block_evals")


def record(state, oracle, x_star):
    """Metric row for the current state; does not modify ``state``."""
    x, y = state.x, state.y
    xbar = x.mean(axis=0)
    ybar = y.mean(axis=0)
    b = state.b
    residual = b * np.linalg.norm(ybar - state.cached_direction()) / (1.0 + np.linalg.norm(ybar))
    return {
        "k": state.iter,
        "err1": float(np.sum((xbar - x_star) ** 2)),
        "err2": float(np.sum((x - xbar) ** 2)),
        "err3": float(np.sum((y - ybar) ** 2)),
        "objective": float(oracle.value_sum(xbar)),
        "tracking_residual": float(residual),
        "block_evals": int(state.block_evals),
    }


def storage_schedule(horizon, dense_until=1000, per_decade=50):
    """Iterations to store: every k below ``dense_until``, log-spaced beyond, always the last."""
    ks = set(range(min(dense_until, horizon + 1)))
    if horizon >= dense_until:
        decades = math.log10(max(horizon, 1) / max(dense_until, 1))
        count = int(math.ceil(decades * per_decade)) + 1
        grid = np.round(dense_until * np.logspace(0, decades, count)).astype(int)
        ks.update(int(k) for k in grid if k <= horizon)
    ks.add(horizon)
    return np.array(sorted(ks))


@dataclass
class MetricsSeries:
    k: list = field(default_factory=list)
    gamma_k: list = field(default_factory=list)
    err1: list = field(default_factory=list)
    err2: list = field(default_factory=list)
    err3: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    tracking_residual: list = field(default_factory=list)
    block_evals: list = field(default_factory=list)

    def append(self, row, gamma_k):
        if self.k and row["k"] <= self.k[-1]:
            raise ArgumentError("iterations must be strictly increasing")
        self.k.append(row["k"])
        self.gamma_k.append(float(gamma_k))
        for name in FIELDS:
            getattr(self, name).append(row[name])

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def __len__(self):
        return len(self.k)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    points: int


def fit_rate(ks, values, window, offset=0.0, min_points=10):
    """Least-squares slope of log(values) against log(k + offset) inside ``window``.

    ``values`` is the path-averaged series; average across paths before
    calling.
    """
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (ks >= lo) & (ks <= hi)
    if sel.sum() < min_points:
        raise DegenerateFitError(f"window {window} holds {int(sel.sum())} points, need {min_points}")
    v = values[sel]
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DegenerateFitError(
            "non-positive value in fit window; use a larger noise level or a shorter horizon"
        )
    lx = np.log(ks[sel] + offset)
    ly = np.log(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), (lo, hi), r2, int(sel.sum()))


def confidence_interval(samples, level=0.90):
    """Student-t interval for the mean; a single sample gives a point interval."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ArgumentError("confidence interval of an empty sample")
    mean = float(x.mean())
    if x.size == 1:
        return mean, mean
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return mean, mean
    half = stats.t.ppf(0.5 + level / 2.0, x.size - 1) * sd / math.sqrt(x.size)
    return mean - half, mean + half


@dataclass(frozen=True)
class Violation:
    path: int
    k: int
    lhs: float
    rhs: float


def check_prop1b(paths, rho, slack=1e-10):
    """Per-path consensus recursion between consecutive iterations.

    ``paths`` holds, per sample path, a tuple (k, err2, err3, gamma_k) of
    equal-length arrays. Only consecutive pairs (k, k+1) are checked; a
    violation is reported at the k+1 whose err2 exceeds the bound.
    """
    if not 0.0 < rho < 1.0:
        raise InapplicableError(f"rho_W = {rho} outside (0, 1); check err2 == 0 instead")
    r2 = rho * rho
    a = (1 + r2) / 2
    c = (1 + r2) * r2 / (1 - r2)
    out = []
    for p, (k, e2, e3, gk) in enumerate(paths):
        k, e2, e3, gk = (np.asarray(v, dtype=float) for v in (k, e2, e3, gk))
        nxt = np.flatnonzero(np.diff(k) == 1)
        lhs = e2[nxt + 1]
        rhs = a * e2[nxt] + gk[nxt] ** 2 * c * e3[nxt] + slack
        for j in np.flatnonzero(lhs > rhs):
            out.append(Violation(p, int(k[nxt[j]]) + 1, float(lhs[j]), float(rhs[j])))
    return out
