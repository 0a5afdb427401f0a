"""Noise generation contracts and the moving-average synthesis identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmdelay.kernels import hurst_constant
from fbmdelay.noise import (
    SimulationGrid,
    discrete_dr_second_moment,
    discrete_fbm_cov,
    dr_energy_closed_form,
    dr_pointwise_closed_form,
    dr_values,
    driving_path,
    fbm_values,
    generate_noise,
    generate_noise_batch,
    make_grid,
    path_csv_string,
    process_path,
    r_values,
    synthesize_dr,
    synthesize_fbm,
    synthesize_w,
    w_values,
)

H75 = hurst_constant(0.75)
H5 = hurst_constant(0.5)


@pytest.fixture(scope="module")
def grid():
    return make_grid(1.0, 512, warmup=4.0)


@pytest.fixture(scope="module")
def noise(grid):
    return generate_noise(20240517, grid)


# ---------------------------------------------------------------------------
# grids and generation
# ---------------------------------------------------------------------------

def test_grid_construction_and_indexing(grid):
    assert grid.origin == 0.0
    assert grid.warmup_start == -4.0
    assert grid.cell_count == 512 * 5
    assert grid.origin_index == 2048
    assert grid.index_of(0.0) == grid.origin_index
    assert grid.index_of(1.0) == grid.cell_count
    with pytest.raises(ValueError):
        grid.index_of(0.12345)  # off-lattice


def test_grid_validation():
    with pytest.raises(ValueError):
        SimulationGrid(warmup_start=1.0, origin=0.0, horizon=2.0, step=0.1, cell_count=10)
    with pytest.raises(ValueError):
        SimulationGrid(warmup_start=0.0, origin=0.0, horizon=1.0, step=0.1, cell_count=7)


def test_generation_is_deterministic(grid):
    a = generate_noise(99, grid)
    b = generate_noise(99, grid)
    assert np.array_equal(a.increments, b.increments)
    c = generate_noise(100, grid)
    assert not np.array_equal(a.increments, c.increments)


def test_batch_rows_match_streams(grid):
    nb = generate_noise_batch(7, grid, 6)
    for r in (0, 3, 5):
        assert np.array_equal(nb.increments[r], generate_noise(7, grid, stream=r).increments)
    # chunk-size independence: a later window reproduces the same rows
    tail = generate_noise_batch(7, grid, 2, first_stream=4)
    assert np.array_equal(tail.increments[1], nb.increments[5])


def test_increment_variance_matches_step():
    big = make_grid(1.0, 2 ** 20)
    incs = generate_noise(3, big).increments
    n = incs.size
    est = float(np.mean(incs ** 2))
    se = math.sqrt(2.0 / n) * big.step  # var of chi2 mean
    assert abs(est - big.step) <= 3 * se


def test_distinct_seeds_uncorrelated():
    big = make_grid(1.0, 2 ** 20)
    a = generate_noise(1, big).increments
    b = generate_noise(2, big).increments
    corr = float(np.corrcoef(a, b)[0, 1])
    assert abs(corr) <= 3.0 / math.sqrt(a.size)


def test_increments_immutable(noise):
    with pytest.raises(ValueError):
        noise.increments[0] = 1.0


# ---------------------------------------------------------------------------
# synthesis identities (pathwise, machine precision)
# ---------------------------------------------------------------------------

def test_brownian_case_reduces_to_driving_path(noise):
    b = driving_path(noise)
    bh = synthesize_fbm(noise, H5)
    np.testing.assert_allclose(bh.values, b.values, atol=1e-12)


def test_fbm_starts_at_zero_and_rejects_empty_warmup(noise):
    bh = synthesize_fbm(noise, H75)
    assert bh.values[0] == 0.0
    no_warm = make_grid(1.0, 64)
    bare = generate_noise(1, no_warm)
    with pytest.raises(ValueError):
        synthesize_fbm(bare, H75)
    synthesize_fbm(bare, H5)  # brownian case needs no history


def test_increment_decomposition_pathwise(noise, grid):
    """B_H(t) - B_H(seg) = W_H(t) + R_H(t) on the whole lattice."""
    for seg_start in (0.0, 0.25):
        idx = grid.index_of(seg_start)
        x = fbm_values(noise.increments, grid, H75)
        w = w_values(noise.increments, grid, H75, idx)
        r = r_values(noise.increments, grid, H75, idx)
        rel = idx - grid.origin_index
        lhs = x[rel:] - x[rel]
        np.testing.assert_allclose(lhs, w + r, atol=1e-12)


def test_r_matches_direct_f_kernel_synthesis(noise, grid):
    """Primitive-of-DR route equals an independent slow f-kernel cell-average loop."""
    hp = H75
    idx = grid.origin_index
    t = 0.5
    edges = grid.edges()
    p1 = hp.h + 0.5
    w = np.zeros(grid.cell_count)
    for i in range(idx):
        a, b = edges[i], edges[i + 1]
        w[i] = ((t - a) ** p1 - (t - b) ** p1) / (p1 * grid.step)
        w[i] -= ((0.0 - a) ** p1 - (0.0 - b) ** p1) / (p1 * grid.step)
    direct = hp.c_h * float(np.dot(w, noise.increments))
    via_primitive = r_values(noise.increments, grid, hp, idx)[grid.index_of(t) - idx]
    assert direct == pytest.approx(via_primitive, abs=1e-12)


def test_scalar_ops_match_lattice_paths(noise, grid):
    t = 0.625
    idx = grid.origin_index
    j = grid.index_of(t)
    assert synthesize_w(noise, H75, 0.0, t) == pytest.approx(
        w_values(noise.increments, grid, H75, idx)[j - idx], abs=1e-12)
    assert synthesize_dr(noise, H75, 0.0, t) == pytest.approx(
        dr_values(noise.increments, grid, H75, idx)[j - idx - 1], abs=1e-12)


def test_w_and_dr_edge_cases(noise):
    assert synthesize_w(noise, H75, 0.25, 0.25) == 0.0
    assert synthesize_dr(noise, H5, 0.0, 0.5) == 0.0
    # h = 1/2: W is the plain increment
    b = driving_path(noise)
    got = synthesize_w(noise, H5, 0.25, 0.75)
    want = b.values[b.times.searchsorted(0.75)] - b.values[b.times.searchsorted(0.25)]
    assert got == pytest.approx(want, abs=1e-12)
    with pytest.raises(ValueError):
        synthesize_w(noise, H75, 0.5, 0.25)
    with pytest.raises(ValueError):
        synthesize_dr(noise, H75, 0.5, 0.5)


def test_measurability_future_increments_do_not_matter(noise, grid):
    """DR_H and the history component read nothing after the conditioning time."""
    seg = grid.index_of(0.5)
    tweaked = noise.increments.copy()
    tweaked[seg:] = 0.0
    a = dr_values(noise.increments, grid, H75, seg)
    b = dr_values(tweaked, grid, H75, seg)
    np.testing.assert_array_equal(a, b)


def test_dr_second_moment_scaling_in_span():
    hp = H75
    base = dr_pointwise_closed_form(hp, 1.0)
    assert dr_pointwise_closed_form(hp, 2.0) == pytest.approx(base * 2 ** (2 * hp.h - 2), rel=1e-12)
    e = dr_energy_closed_form(hp, 1.0)
    assert dr_energy_closed_form(hp, 2.0) == pytest.approx(e * 2 ** (2 * hp.h - 1), rel=1e-12)
    assert dr_pointwise_closed_form(H5, 1.0) == 0.0
    assert dr_energy_closed_form(H5, 1.0) == 0.0


def test_dr_closed_forms_frozen_oracle_values():
    # gamma-oracle derived: c_h^2 (h-1/2)^2/(2-2h) and c_h^2 (h-1/2)/(2(2-2h))
    assert dr_pointwise_closed_form(H75, 1.0) == pytest.approx(0.143017455657, rel=1e-9)
    assert dr_energy_closed_form(H75, 1.0) == pytest.approx(0.286034911313, rel=1e-9)
    assert dr_energy_closed_form(hurst_constant(0.9), 1.0) == pytest.approx(0.658078939974, rel=1e-9)
    assert dr_energy_closed_form(hurst_constant(0.55), 1.0) == pytest.approx(0.030295286772, rel=1e-9)


# ---------------------------------------------------------------------------
# Monte Carlo laws at unit-test scale
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mc_batch(grid):
    return generate_noise_batch(314, grid, 4000)


def test_w_second_moment_mc(mc_batch, grid):
    """E W_H(1)^2 = c^2/(2H) (frozen oracle 0.762759763502 at h = 0.75)."""
    w = w_values(mc_batch.increments, grid, H75, grid.origin_index)[:, -1]
    sq = w ** 2
    est = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.size))
    closed = 0.762759763502
    disc = grid.step * np.sum(
        (H75.c_h * np.diff((np.arange(513) * grid.step) ** 1.25) / (1.25 * grid.step)) ** 2)
    budget = abs(closed - disc)
    assert abs(est - closed) <= 3 * se + budget


def test_dr_pointwise_mc_matches_discrete_expectation(mc_batch, grid):
    m0 = grid.origin_index
    drv = dr_values(mc_batch.increments, grid, H75, m0)[:, grid.cell_count - m0 - 1]
    sq = drv ** 2
    est = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.size))
    target = discrete_dr_second_moment(grid, H75, m0, 1.0)
    assert abs(est - target) <= 3 * se
    # the distance to the continuum closed form is the declared budget; at this
    # unit-test warmup (L = 4) the truncated tail carries (1+L)^(2h-2) = 44.7%
    closed = dr_pointwise_closed_form(H75, 1.0)
    assert abs(target - closed) == pytest.approx(closed * 5.0 ** (2 * H75.h - 2), rel=0.02)


def test_fbm_moments_mc(mc_batch, grid):
    bh = fbm_values(mc_batch.increments, grid, H75)
    v1 = bh[:, -1] ** 2
    est = float(np.mean(v1))
    se = float(np.std(v1, ddof=1) / math.sqrt(v1.size))
    budget = abs(1.0 - discrete_fbm_cov(grid, H75, 1.0, 1.0))
    assert abs(est - 1.0) <= 3 * se + budget

    cov = bh[:, -1] * bh[:, grid.main_steps // 2]
    est_c = float(np.mean(cov))
    se_c = float(np.std(cov, ddof=1) / math.sqrt(cov.size))
    budget_c = abs(0.5 - discrete_fbm_cov(grid, H75, 1.0, 0.5))
    assert abs(est_c - 0.5) <= 3 * se_c + budget_c


def test_fbm_terminal_value_gaussian(mc_batch, grid):
    bh1 = fbm_values(mc_batch.increments, grid, H75)[:, -1]
    n = bh1.size
    z = (bh1 - bh1.mean()) / bh1.std()
    skew = float(np.mean(z ** 3))
    kurt = float(np.mean(z ** 4) - 3.0)
    assert abs(skew) <= 3 * math.sqrt(6.0 / n)
    assert abs(kurt) <= 3 * math.sqrt(24.0 / n)


def test_dr_mc_energy_three_hurst_values(grid):
    """MC energy of DR over [0,1] against the closed form, budget-declared."""
    nb = generate_noise_batch(2718, grid, 3000)
    m0 = grid.origin_index
    n = grid.main_steps
    for h in (0.55, 0.75, 0.9):
        hp = hurst_constant(h)
        t = grid.step * np.arange(n + 1)
        e = 2 * hp.h - 2.0
        wq = (t[1:] ** (e + 1) - t[:-1] ** (e + 1)) / ((e + 1) * t[1:] ** e)
        drv = dr_values(nb.increments, grid, hp, m0)[:, :n]
        vals = drv ** 2 @ wq
        est = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
        closed = dr_energy_closed_form(hp, 1.0)
        from fbmdelay.noise import discrete_dr_energy
        target = discrete_dr_energy(grid, hp, m0, m0 + 1 + np.arange(n), wq)
        assert abs(est - target) <= 3 * se
        assert abs(est - closed) <= 3 * se + abs(closed - target)


# ---------------------------------------------------------------------------
# path export
# ---------------------------------------------------------------------------

def test_process_path_kinds_and_csv(noise):
    for kind in ("B", "B_H", "W_H", "R_H", "DR_H"):
        p = process_path(noise, H75, kind)
        assert p.kind == kind
        assert p.values.shape == p.times.shape
    p5 = process_path(noise, H5, "R_H")
    assert np.all(p5.values == 0.0)

    text = path_csv_string(process_path(noise, H75, "B_H"))
    lines = text.splitlines()
    assert lines[0] == f"# kind=B_H h=0.75 seed={noise.seed}"
    assert lines[1] == "time,value"
    assert lines[2] == "0.0,0.0"
    # shortest-roundtrip floats: parsing back reproduces the values exactly
    t, v = lines[-1].split(",")
    assert float(v) == process_path(noise, H75, "B_H").values[-1]


@given(seed=st.integers(0, 2 ** 31), kind=st.sampled_from(["B", "B_H", "W_H", "R_H", "DR_H"]))
@settings(max_examples=10, deadline=None)
def test_csv_roundtrip_is_stable(seed, kind):
    g = make_grid(0.5, 64, warmup=1.0)
    p = process_path(generate_noise(seed, g), H75, kind)
    assert path_csv_string(p) == path_csv_string(p)
