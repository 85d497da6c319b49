import numpy as np
import pytest

from drbsgt import algorithms as alg
from drbsgt.errors import ArgumentError, DegenerateFitError, InapplicableError
from drbsgt.metrics import (
    MetricsSeries, check_prop1b, confidence_interval, fit_rate, record, storage_schedule,
)
from drbsgt.objectives import QuadraticOracle


def _state(x, y):
    m, n = x.shape
    return alg.SwarmState(x, y, np.zeros(m, dtype=np.int64), [y[i].copy() for i in range(m)], 3, 7, 1, (slice(None),))


def test_record_small_example():
    o = QuadraticOracle.from_matrices(np.stack([np.eye(2), np.eye(2)]), np.array([[1.0, 1.0], [1.0, 1.0]]))
    x = np.array([[0.0, 0.0], [2.0, 2.0]])
    y = np.array([[1.0, 0.0], [1.0, 0.0]])
    s = _state(x, y)
    before = s.copy()
    row = record(s, o, np.array([1.0, 1.0]))
    assert row["err1"] == 0.0
    assert row["err2"] == 4.0
    assert row["err3"] == 0.0
    assert row["k"] == 3 and row["block_evals"] == 7
    assert row["objective"] == pytest.approx(o.value_sum(np.array([1.0, 1.0])))
    assert np.array_equal(s.x, before.x) and np.array_equal(s.y, before.y)


def test_series_rejects_non_increasing():
    s = MetricsSeries()
    row = dict(k=1, err1=1, err2=1, err3=1, objective=1, tracking_residual=0, block_evals=1)
    s.append(row, 0.1)
    with pytest.raises(ArgumentError):
        s.append(row, 0.1)


def test_storage_schedule():
    ks = storage_schedule(10**5, dense_until=1000, per_decade=50)
    assert ks[0] == 0 and ks[-1] == 10**5
    assert np.all(np.diff(ks) > 0)
    assert set(range(1000)) <= set(ks.tolist())
    assert 90 <= np.sum(ks > 1000) <= 110
    assert storage_schedule(5).tolist() == [0, 1, 2, 3, 4, 5]


@pytest.mark.parametrize("p", [-1.0, -2.0])
def test_fit_rate_recovers_power(p):
    ks = np.arange(1000, 100001, 997)
    Gamma = 500.0
    fit = fit_rate(ks, 3.0 * (ks + Gamma) ** p, (1000, 100000), offset=Gamma)
    assert fit.slope == pytest.approx(p, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_rate_degenerate():
    ks = np.arange(1, 50)
    vals = np.ones(49)
    vals[10] = 0.0
    with pytest.raises(DegenerateFitError):
        fit_rate(ks, vals, (1, 49))
    with pytest.raises(DegenerateFitError):
        fit_rate(ks, np.ones(49), (1, 5))


def test_confidence_interval_examples():
    lo, hi = confidence_interval([1.0, 2.0, 3.0])
    # t_{0.95, 2} = 2.919986; sd = 1
    assert lo == pytest.approx(2 - 2.919986 / np.sqrt(3), abs=1e-4)
    assert hi == pytest.approx(2 + 2.919986 / np.sqrt(3), abs=1e-4)
    assert lo == pytest.approx(0.3141, abs=1e-4) and hi == pytest.approx(3.6859, abs=1e-4)
    assert confidence_interval([4.2] * 5) == (4.2, 4.2)
    assert confidence_interval([1.5]) == (1.5, 1.5)
    with pytest.raises(ArgumentError):
        confidence_interval([])


def test_confidence_interval_shrinks():
    gen = np.random.default_rng(0)
    widths = {}
    for n in (100, 400):
        w = []
        for _ in range(200):
            lo, hi = confidence_interval(gen.standard_normal(n))
            w.append(hi - lo)
        widths[n] = np.mean(w)
    assert widths[100] / widths[400] == pytest.approx(2.0, rel=0.15)


def _run_series(quad, part4, W, steps=200):
    sched = alg.StepSchedule(16.0, 500.0)
    x0 = alg.initial_points(5, 20, "gaussian", 0)
    eng = alg.Engine("drbsgt", quad, part4, W, sched, 0, 0, x0)
    ks, e2, e3, gk = [], [], [], []
    s = eng.state
    for _ in range(steps):
        row = record(s, quad, quad.optimum)
        ks.append(s.iter)
        e2.append(row["err2"])
        e3.append(row["err3"])
        gk.append(sched.step(s.iter))
        s = eng.step()
    return [np.array(v) for v in (ks, e2, e3, gk)]


def test_consensus_recursion_clean_and_corrupted(quad, part4, ring5):
    k, e2, e3, gk = _run_series(quad, part4, ring5)
    assert check_prop1b([(k, e2, e3, gk)], ring5.rho) == []
    bad = e2.copy()
    bad[5] = 10 * bad[4] + 1.0
    v = check_prop1b([(k, e2, e3, gk), (k, bad, e3, gk)], ring5.rho)
    assert [(x.path, x.k) for x in v] == [(1, 5)]


def test_consensus_recursion_inapplicable_at_zero_rho():
    with pytest.raises(InapplicableError):
        check_prop1b([], 0.0)
