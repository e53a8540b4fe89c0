import numpy as np
import pytest

from wcalc import (TimeGrid, make_grid, sample_paths, brownian_at,
                   dyadic_coarsen, bridge_resample, save_csv, load_csv)
from oracles import bridge_point_conditional


def test_make_grid_basics():
    g = make_grid(8, horizon=2.0)
    assert g.n_steps == 8
    assert g.horizon == 2.0
    assert np.allclose(g.steps, 0.25)
    assert g.is_uniform
    assert g.knot_index(0.5) == 2


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        make_grid(0)
    with pytest.raises(ValueError):
        make_grid(4, horizon=-1.0)
    with pytest.raises(ValueError):
        TimeGrid(knots=np.array([0.0, 0.5, 0.25, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(knots=np.array([0.1, 0.5, 1.0]))


def test_knot_index_requires_grid_point():
    g = make_grid(4)
    with pytest.raises(ValueError):
        g.knot_index(0.3)


def test_sample_paths_moments():
    """Increment columns should look like N(0, dt_i) at MC accuracy."""
    g = make_grid(6)
    pool = sample_paths(g, 50000, seed=101)
    assert pool.increments.shape == (50000, 6)
    assert np.allclose(pool.weights, pool.weights[0])
    se = np.sqrt(g.steps / 50000)
    assert np.all(np.abs(pool.increments.mean(axis=0)) < 4 * se)
    assert np.allclose(pool.increments.var(axis=0), g.steps, rtol=0.05)


def test_sample_paths_seed_reproducible():
    g = make_grid(4)
    a = sample_paths(g, 64, seed=7)
    b = sample_paths(g, 64, seed=7)
    c = sample_paths(g, 64, seed=8)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_brownian_at_is_cumsum():
    g = make_grid(5)
    pool = sample_paths(g, 32, seed=3)
    want = pool.increments[:, :3].sum(axis=1)
    assert np.allclose(brownian_at(pool, g.knots[3]), want)
    assert np.allclose(brownian_at(pool, 0.0), 0.0)


def test_subset_keeps_rows():
    g = make_grid(3)
    pool = sample_paths(g, 10, seed=1)
    sub = pool.subset([2, 5, 7])
    assert sub.n_samples == 3
    assert np.array_equal(sub.increments, pool.increments[[2, 5, 7]])


def test_dyadic_coarsen_sums_blocks():
    g = make_grid(8)
    pool = sample_paths(g, 16, seed=5)
    coarse = dyadic_coarsen(pool, level=2)
    assert coarse.grid.n_steps == 4
    want = pool.increments.reshape(16, 4, 2).sum(axis=2)
    assert np.allclose(coarse.increments, want)
    # endpoint is preserved exactly
    assert np.allclose(coarse.increments.sum(axis=1),
                       pool.increments.sum(axis=1))


def test_dyadic_coarsen_needs_divisible_grid():
    g = make_grid(6)
    pool = sample_paths(g, 4, seed=5)
    with pytest.raises(ValueError):
        dyadic_coarsen(pool, level=2)


def test_bridge_resample_matches_block_sums_exactly():
    g = make_grid(12)
    pool = sample_paths(g, 40, seed=9)
    inner = bridge_resample(pool, level=2, m_inner=8, seed=11)
    assert inner.shape == (40, 8, 12)
    block = inner.reshape(40, 8, 4, 3).sum(axis=3)
    want = pool.increments.reshape(40, 4, 3).sum(axis=2)
    assert np.allclose(block, want[:, None, :], atol=1e-12)


def test_bridge_resample_conditional_mean_and_var():
    """Within a block the fine path follows the Brownian bridge law.

    Checked against the closed-form conditional mean and variance of B_t
    given the block endpoints, on a mid-block knot.
    """
    g = make_grid(12)
    pool = sample_paths(g, 200, seed=13)
    m_inner = 4000
    inner = bridge_resample(pool, level=2, m_inner=m_inner, seed=17)
    # knot 4 = first fine knot inside the second block (indices 3, 4, 5)
    b_t = inner[:, :, :4].sum(axis=2)
    t0, t1 = g.knots[3], g.knots[6]
    b_t0 = pool.cumulative[:, 3]
    block_sum = pool.cumulative[:, 6] - pool.cumulative[:, 3]
    mean, var = bridge_point_conditional(g.knots[4], t0, t1, b_t0, block_sum)
    se = np.sqrt(var / m_inner)
    assert np.all(np.abs(b_t.mean(axis=1) - mean) < 5 * se)
    assert np.allclose(b_t.var(axis=1).mean(), var, rtol=0.05)


def test_pool_csv_roundtrip(tmp_path):
    g = make_grid(5, horizon=1.5)
    pool = sample_paths(g, 17, seed=23)
    path = str(tmp_path / "pool.csv")
    save_csv(pool, path)
    back = load_csv(path)
    assert back.grid.n_steps == 5
    assert back.grid.horizon == 1.5
    assert np.array_equal(back.increments, pool.increments)
    assert np.array_equal(back.weights, pool.weights)
