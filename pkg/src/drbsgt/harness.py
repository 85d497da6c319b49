"""Experiment configuration, seeded multi-path execution and result files."""

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import algorithms as alg
from .blocks import make_partition
from .errors import ArgumentError, ConfigError, DRBSGTError
from .metrics import MetricsSeries, check_prop1b, confidence_interval, record, storage_schedule
from .network import build_graph, build_mixing_matrix, read_edge_list
from .objectives import (
    generate_synthetic_dataset,
    load_dataset,
    make_logistic_oracle,
    make_quadratic_oracle,
    partition_dataset,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "DRBSGT_MAX_WORKERS"
SERIES_COLUMNS = (
    "path", "k", "gamma_k", "err1", "err2", "err3", "objective", "tracking_residual", "block_evals",
)
AGG_FIELDS = ("err1", "err2", "err3", "objective")


@dataclass
class ExperimentConfig:
    algorithm: str = "drbsgt"
    graph: str = "ring"
    m: int = 5
    edges: list = None
    edges_file: str = None
    weight_rule: str = "metropolis"
    objective: str = "quadratic"
    n: int = 20
    b: int = 4
    # quadratic objective
    spectrum: list = field(default_factory=lambda: [1.0, 2.0])
    noise: float = 0.1
    center_scale: float = 1.0
    # logistic objective
    dataset: str = "synthetic"
    s: int = 1000
    feature_mean: float = 5.0
    feature_std: float = 0.5
    flip_rate: float = 0.05
    label_rule: str = "parity"
    scale_features: bool = False
    partition_rule: str = "contiguous"
    mu: float = 0.1
    batch: int = 100
    problem_seed: int = 0
    # schedule and run
    gamma: float = 16.0
    Gamma: float = 500.0
    horizon: int = 1000
    budget: int = None
    paths: int = 1
    master_seed: int = 0
    workers: int = 1
    x0: str = "gaussian"
    dense_until: int = 1000
    per_decade: int = 50
    monitors: bool = True
    out_dir: str = None

    def validate(self):
        if self.algorithm not in alg.ENGINES:
            raise ConfigError(f"algorithm must be one of {alg.ENGINES}", key="algorithm")
        if self.objective not in ("quadratic", "logistic"):
            raise ConfigError("objective must be 'quadratic' or 'logistic'", key="objective")
        for key in ("m", "n", "b", "paths", "workers", "dense_until", "per_decade"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be a positive integer", key=key)
        if self.b > self.n:
            raise ConfigError(f"b = {self.b} exceeds n = {self.n}", key="b")
        for key in ("gamma", "Gamma", "mu", "batch"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key=key)
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0", key="horizon")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be positive", key="budget")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0", key="noise")
        if self.objective == "logistic" and self.dataset == "synthetic" and self.s < self.m:
            raise ConfigError("need at least one sample per agent", key="s")
        return self

    def problem_key(self):
        """Fields that define the shared problem instance (graph, weights, oracle)."""
        skip = {"algorithm", "batch", "b", "gamma", "Gamma", "horizon", "budget", "paths",
                "master_seed", "workers", "dense_until", "per_decade", "monitors", "out_dir"}
        return tuple((f.name, repr(getattr(self, f.name))) for f in dataclasses.fields(self)
                     if f.name not in skip)


def _coerce(name, value, default):
    if value is None or default is None:
        return value
    kind = type(default)
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is list:
            return list(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for key {name!r}", key=name) from None


_INT_OR_NONE = {"budget"}
_LIST_OR_NONE = {"edges"}
_STR_OR_NONE = {"edges_file", "out_dir"}


def config_from_mapping(mapping, **overrides):
    if not isinstance(mapping, dict):
        raise ConfigError("config must be a key-value mapping")
    defaults = ExperimentConfig()
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for key, value in {**mapping, **{k: v for k, v in overrides.items() if v is not None}}.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        if key in _INT_OR_NONE and value is not None:
            value = _coerce(key, value, 0)
        elif key in _LIST_OR_NONE and value is not None:
            value = [tuple(e) for e in value]
        elif key in _STR_OR_NONE and value is not None:
            value = str(value)
        else:
            value = _coerce(key, value, getattr(defaults, key))
        values[key] = value
    return ExperimentConfig(**values).validate()


def load_config(path, **overrides):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", key=str(path))
    try:
        mapping = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_mapping(mapping, **overrides)


@dataclass
class Problem:
    graph: object
    W: object
    partition: object
    oracle: object
    x_star: np.ndarray
    x_star_residual: float
    x0: np.ndarray


def build_problem(cfg):
    edges = cfg.edges
    if cfg.edges_file:
        edges = read_edge_list(cfg.edges_file)
    kind = "edge-list" if edges is not None and cfg.graph not in ("ring", "complete") else cfg.graph
    graph = build_graph(kind, cfg.m, edges)
    W = build_mixing_matrix(graph, cfg.weight_rule)
    partition = make_partition(cfg.n, cfg.b)
    if cfg.objective == "quadratic":
        oracle = make_quadratic_oracle(
            cfg.m, cfg.n, tuple(cfg.spectrum), cfg.noise, cfg.problem_seed, cfg.center_scale
        )
        residual = float(np.linalg.norm(oracle.grad_sum(oracle.optimum)))
    else:
        if cfg.dataset == "synthetic":
            data = generate_synthetic_dataset(
                cfg.s, cfg.n, cfg.feature_mean, cfg.feature_std, cfg.problem_seed, cfg.flip_rate
            )
        else:
            data = load_dataset(cfg.dataset, label_rule=cfg.label_rule, scale=cfg.scale_features)
            if data.n != cfg.n:
                raise ConfigError(f"dataset has {data.n} features, config says n = {cfg.n}", key="n")
        data = partition_dataset(data, cfg.m, cfg.partition_rule)
        oracle = make_logistic_oracle(data, cfg.mu, cfg.batch)
        residual = oracle.optimum_residual
    x0 = alg.initial_points(cfg.m, cfg.n, cfg.x0, cfg.master_seed)
    return Problem(graph, W, partition, oracle, oracle.optimum, residual, x0)


def horizon_for(cfg, evals_per_step, init_evals):
    if cfg.budget is None:
        return cfg.horizon
    return max(0, (cfg.budget - init_evals) // evals_per_step)


@dataclass
class PathResult:
    path: int
    series: MetricsSeries
    failure: str = None
    tracking_max: float = 0.0
    mean_dyn_max: float = 0.0
    violations: list = field(default_factory=list)
    consensus_max: float = 0.0


def run_path(cfg, problem, path):
    """Execute one sample path; divergence is captured, never raised."""
    schedule = alg.StepSchedule(cfg.gamma, cfg.Gamma)
    engine = alg.Engine(cfg.algorithm, problem.oracle, problem.partition, problem.W, schedule,
                        cfg.master_seed, path, problem.x0)
    init_evals = engine.state.block_evals
    horizon = horizon_for(cfg, engine.evals_per_step, init_evals)
    store = set(storage_schedule(horizon, cfg.dense_until, cfg.per_decade).tolist())
    series = MetricsSeries()
    result = PathResult(path, series)
    rho = problem.W.rho
    monitor = cfg.monitors
    if monitor:
        e2 = np.empty(horizon + 1)
        e3 = np.empty(horizon + 1)
        gks = np.empty(horizon + 1)
    state = engine.state
    m = state.m
    xbar = state.x.sum(axis=0) / m
    k = 0
    try:
        while True:
            gk = schedule.step(k)
            if k in store:
                series.append(record(state, problem.oracle, problem.x_star), gk)
            if monitor:
                ybar = state.y.sum(axis=0) / m
                dx = state.x - xbar
                dy = state.y - ybar
                e2[k] = np.vdot(dx, dx)
                e3[k] = np.vdot(dy, dy)
                gks[k] = gk
                if cfg.algorithm != "atc":
                    resid = state.b * np.linalg.norm(ybar - state.cached_direction())
                    result.tracking_max = max(result.tracking_max, resid / (1.0 + np.linalg.norm(ybar)))
            if k >= horizon:
                break
            new = engine.step()
            if monitor:
                d = engine.direction(state, new)
                new_xbar = new.x.sum(axis=0) / m
                gap = np.abs(new_xbar - (xbar - gk * d)).max()
                result.mean_dyn_max = max(result.mean_dyn_max, float(gap))
                xbar = new_xbar
            state = new
            k += 1
    except DRBSGTError as exc:
        result.failure = f"path {path}, iteration {k}: {exc}"
        return result
    if monitor:
        n = k + 1
        if 0.0 < rho < 1.0 and cfg.algorithm != "atc":
            ks = np.arange(n)
            result.violations = check_prop1b([(ks, e2[:n], e3[:n], gks[:n])], rho)
            result.violations = [dataclasses.replace(v, path=path) for v in result.violations]
        if n > 1:
            result.consensus_max = float(np.max(e2[1:n]))
    return result


_WORKER_STATE = {}


def _worker_init(cfg, problem):
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["problem"] = problem


def _worker_run(path):
    return run_path(_WORKER_STATE["cfg"], _WORKER_STATE["problem"], path)


def effective_workers(requested):
    cap = os.environ.get(WORKERS_ENV)
    workers = max(1, int(requested))
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def aggregate(path_results):
    """Per-k mean and 90% CI over the non-failed paths."""
    ok = [r.series for r in path_results if r.failure is None]
    if not ok:
        return {"k": np.array([], dtype=int), "count": 0}
    ks = np.asarray(ok[0].k)
    length = min(len(s) for s in ok)
    out = {"k": ks[:length], "block_evals": np.asarray(ok[0].block_evals[:length]), "count": len(ok)}
    for name in AGG_FIELDS:
        stack = np.array([s.array(name)[:length] for s in ok])
        out[name] = stack.mean(axis=0)
        ci = [confidence_interval(stack[:, j]) for j in range(length)]
        out[name + "_lo"] = np.array([c[0] for c in ci])
        out[name + "_hi"] = np.array([c[1] for c in ci])
    return out


@dataclass
class RunResult:
    config: ExperimentConfig
    paths: list
    aggregate: dict
    schedule_report: object
    rho: float
    x_star_residual: float
    wall_clock: float
    failures: list
    violations: list
    tracking_max: float
    mean_dyn_max: float
    consensus_max: float

    @property
    def series(self):
        return [r.series for r in self.paths]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_experiment(cfg, problem=None, out_dir=None):
    cfg.validate()
    start = time.perf_counter()
    if problem is None:
        problem = build_problem(cfg)
    report = alg.validate_schedule(
        alg.StepSchedule(cfg.gamma, cfg.Gamma), cfg.b, problem.oracle.mu, problem.oracle.lip,
        problem.W.rho,
    )
    paths = 1 if cfg.algorithm == "atc" else cfg.paths
    workers = min(effective_workers(cfg.workers), paths)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(cfg, problem)) as pool:
            results = list(pool.map(_worker_run, range(paths)))
    else:
        results = [run_path(cfg, problem, p) for p in range(paths)]
    failures = [r.failure for r in results if r.failure]
    for msg in failures:
        log.warning("sample path failed: %s", msg)
    res = RunResult(
        config=cfg,
        paths=results,
        aggregate=aggregate(results),
        schedule_report=report,
        rho=problem.W.rho,
        x_star_residual=problem.x_star_residual,
        wall_clock=time.perf_counter() - start,
        failures=failures,
        violations=[v for r in results for v in r.violations],
        tracking_max=max((r.tracking_max for r in results), default=0.0),
        mean_dyn_max=max((r.mean_dyn_max for r in results), default=0.0),
        consensus_max=max((r.consensus_max for r in results), default=0.0),
    )
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        write_outputs(res, out_dir)
    return res


def write_outputs(res, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SERIES_COLUMNS)]
    for r in res.paths:
        if r.failure:
            continue
        s = r.series
        for j in range(len(s)):
            lines.append(",".join([
                str(r.path), str(s.k[j]), _fmt(s.gamma_k[j]), _fmt(s.err1[j]), _fmt(s.err2[j]),
                _fmt(s.err3[j]), _fmt(s.objective[j]), _fmt(s.tracking_residual[j]),
                str(s.block_evals[j]),
            ]))
    (out / "series.csv").write_text("\n".join(lines) + "\n")

    agg = res.aggregate
    head = ["k", "block_evals", "count"]
    for name in AGG_FIELDS:
        head += [name + "_mean", name + "_lo", name + "_hi"]
    lines = [",".join(head)]
    for j in range(len(agg["k"])):
        row = [str(int(agg["k"][j])), str(int(agg["block_evals"][j])), str(agg["count"])]
        for name in AGG_FIELDS:
            row += [_fmt(agg[name][j]), _fmt(agg[name + "_lo"][j]), _fmt(agg[name + "_hi"][j])]
        lines.append(",".join(row))
    (out / "aggregate.csv").write_text("\n".join(lines) + "\n")
    (out / "schedule_report.txt").write_text("\n".join(res.schedule_report.lines()) + "\n")
    (out / "summary.txt").write_text(summary_text(res))


def summary_text(res):
    cfg = res.config
    agg = res.aggregate
    lines = ["# configuration"]
    lines += [f"{f.name}: {getattr(cfg, f.name)!r}" for f in dataclasses.fields(cfg)]
    lines += [
        "",
        "# problem",
        f"rho_W: {res.rho!r}",
        f"optimum residual ||sum grad f_i(x*)||: {res.x_star_residual!r}",
        "",
        "# monitors",
        f"paths run: {len(res.paths)}, failed: {len(res.failures)}",
    ]
    lines += [f"failure: {msg}" for msg in res.failures]
    if cfg.monitors:
        lines += [
            f"max tracking residual: {res.tracking_max!r}",
            f"max mean-dynamics gap: {res.mean_dyn_max!r}",
            f"consensus recursion violations: {len(res.violations)}",
        ]
    if len(agg["k"]):
        lines += [
            "",
            "# final aggregate",
            f"k: {int(agg['k'][-1])}, block_evals: {int(agg['block_evals'][-1])}",
        ]
        for name in AGG_FIELDS:
            lines.append(
                f"{name}: {agg[name][-1]!r} [{agg[name + '_lo'][-1]!r}, {agg[name + '_hi'][-1]!r}]"
            )
    lines += ["", "# schedule"] + res.schedule_report.lines()
    return "\n".join(lines) + "\n"


@dataclass
class Comparison:
    budget_points: np.ndarray
    rows: list

    def value(self, algorithm, field_name="objective", point=-1):
        rows = [r for r in self.rows if r["algorithm"] == algorithm]
        return rows[point][field_name]

    def to_csv(self):
        head = ["budget", "algorithm", "k", "objective_mean", "objective_lo", "objective_hi",
                "consensus_mean", "consensus_lo", "consensus_hi"]
        lines = [",".join(head)]
        for r in self.rows:
            lines.append(",".join([
                str(r["budget"]), r["algorithm"], str(r["k"]),
                _fmt(r["objective_mean"]), _fmt(r["objective_lo"]), _fmt(r["objective_hi"]),
                _fmt(r["consensus_mean"]), _fmt(r["consensus_lo"]), _fmt(r["consensus_hi"]),
            ]))
        return "\n".join(lines) + "\n"


def compare_algorithms(configs, budget, points=20, problem=None):
    """Run each config to the same block-evaluation budget and align the curves."""
    if not configs:
        raise ArgumentError("need at least one config")
    key = configs[0].problem_key()
    for c in configs[1:]:
        if c.problem_key() != key:
            raise ArgumentError("configs must share the objective, graph and weights")
    if problem is None:
        problem = build_problem(configs[0])
    runs = [run_experiment(dataclasses.replace(c, budget=budget, out_dir=None), problem=problem)
            for c in configs]
    ends = []
    for r in runs:
        evals = r.aggregate.get("block_evals")
        ends.append(int(evals[-1]) if evals is not None and len(evals) else 0)
    common = min(ends)
    starts = max(int(r.aggregate["block_evals"][0]) for r in runs if r.aggregate["count"])
    grid = np.unique(np.linspace(starts, common, points).astype(int)) if common > starts else np.array([common])
    rows = []
    for c, r in zip(configs, runs):
        agg = r.aggregate
        for point in grid:
            j = int(np.searchsorted(agg["block_evals"], point, side="right") - 1)
            j = max(j, 0)
            rows.append({
                "budget": int(point),
                "algorithm": c.algorithm,
                "k": int(agg["k"][j]),
                "objective_mean": agg["objective"][j],
                "objective_lo": agg["objective_lo"][j],
                "objective_hi": agg["objective_hi"][j],
                "consensus_mean": agg["err2"][j],
                "consensus_lo": agg["err2_lo"][j],
                "consensus_hi": agg["err2_hi"][j],
            })
    return Comparison(grid, rows)
