import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drbsgt.blocks import (
    block_error,
    embed_block,
    enumerate_block_error_moments,
    make_partition,
)
from drbsgt.errors import ArgumentError
from drbsgt.rng import BlockSelector


def brute_block_error(g, sizes, ell):
    # independent of the module: rebuild the mask from the size list
    b = len(sizes)
    start = sum(sizes[:ell])
    mask = np.zeros(len(g))
    mask[start:start + sizes[ell]] = 1.0
    return g - b * mask * g


def test_near_equal_sizes():
    assert make_partition(10, 4).sizes == (3, 3, 2, 2)
    assert make_partition(784, 14).sizes == (56,) * 14
    p = make_partition(5, 5)
    assert p.sizes == (1,) * 5 and p.offsets == (0, 1, 2, 3, 4)


@pytest.mark.parametrize("n,b", [(3, 4), (3, 0)])
def test_bad_block_count(n, b):
    with pytest.raises(ArgumentError):
        make_partition(n, b)


def test_embed_block():
    p = make_partition(4, 2)
    assert np.array_equal(embed_block(p, 1, [3, 4]), [0, 0, 3, 4])
    with pytest.raises(ArgumentError):
        embed_block(p, 0, [1, 2, 3])


def test_block_error_examples():
    g = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(block_error(g, make_partition(4, 1), 0), np.zeros(4))
    assert np.array_equal(block_error(g, make_partition(4, 2), 0), [-1, -2, 3, 4])


def test_moment_examples():
    g = np.array([1.0, 2.0, 3.0, 4.0])
    mean_e, mean_sq = enumerate_block_error_moments(g, make_partition(4, 1))
    assert np.array_equal(mean_e, np.zeros(4)) and mean_sq == 0.0
    # l=0: ||[-1,-2,3,4]||^2 = 30 and l=1: ||[1,2,-3,-4]||^2 = 30
    enumerated = np.mean([np.sum(brute_block_error(g, [2, 2], ell) ** 2) for ell in range(2)])
    assert enumerated == 30.0
    assert enumerate_block_error_moments(g, make_partition(4, 2))[1] == pytest.approx(30.0, abs=1e-12)


@pytest.mark.parametrize("b", [1, 2, 3, 4, 6, 12])
def test_constant_gradient_closed_form(b):
    c = 1.7
    g = np.full(12, c)
    sizes = list(make_partition(12, b).sizes)
    enumerated = np.mean([np.sum(brute_block_error(g, sizes, ell) ** 2) for ell in range(b)])
    _, mean_sq = enumerate_block_error_moments(g, make_partition(12, b))
    assert mean_sq == pytest.approx((b - 1) * 12 * c * c, rel=1e-12)
    assert mean_sq == pytest.approx(enumerated, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), data=st.data())
def test_block_error_moments_and_embedding_norm(seed, n, data):
    b = data.draw(st.integers(1, n))
    p = make_partition(n, b)
    g = np.random.default_rng(seed).standard_normal(n)
    mean_e, mean_sq = enumerate_block_error_moments(g, p)
    assert np.abs(mean_e).max() <= 1e-12 * max(1.0, np.abs(g).max())
    assert abs(mean_sq - (b - 1) * g @ g) <= 1e-12 * max(1.0, (b - 1) * g @ g)
    pieces = [embed_block(p, ell, g[p.slices[ell]]) for ell in range(b)]
    assert sum(v @ v for v in pieces) == pytest.approx(g @ g, rel=1e-12, abs=1e-12)
    assert np.allclose(sum(pieces), g, atol=0)
    for ell in range(b):
        assert np.linalg.norm(pieces[ell]) == pytest.approx(np.linalg.norm(g[p.slices[ell]]))
        assert np.allclose(block_error(g, p, ell), brute_block_error(g, list(p.sizes), ell), atol=1e-15)


def test_block_selector_uniform():
    b, draws = 7, 1_000_000
    sel = BlockSelector(b, [np.random.Generator(np.random.PCG64(6))])
    buf = np.array([sel.draw(0) for _ in range(draws)])
    assert buf.min() >= 0 and buf.max() < b
    freq = np.bincount(buf, minlength=b) / draws
    sd = np.sqrt((1 / b) * (1 - 1 / b) / draws)
    assert np.all(np.abs(freq - 1 / b) <= 4 * sd)


def test_block_streams_independent_across_agents():
    from drbsgt.rng import stream

    sel = BlockSelector.for_path(5, master_seed=1, path=0, m=3)
    a = [sel.draw(0) for _ in range(200)]
    c = [sel.draw(1) for _ in range(200)]
    assert a != c
    again = BlockSelector(5, [stream(1, 0, 0, "block")])
    assert [again.draw(0) for _ in range(200)] == a
