import itertools
import math

import numpy as np
import pytest

import oracles
from oranslice.config import NetworkConfig
from oranslice.esa import (BudgetExceeded, PowerGrid, enumerate_allocations, lattice_count,
                           nominal_cost, solve_esa, structural_count)
from oranslice.system import check_feasible, objective

TINY = NetworkConfig(num_rus=1, num_ues_embb=1, num_ues_urllc=1, num_prbs=2)


def test_single_slot_lattice_has_two_points():
    assert lattice_count([1], 1, 1, [1]) == 2


def test_no_prbs_counts_association_only():
    assert lattice_count([2, 1], 2, 0, [3, 3]) == 2 ** 3


def test_nominal_cost_example():
    cfg = NetworkConfig(num_ues_embb=1, num_ues_urllc=1, num_rus=2, num_prbs=2)
    assert nominal_cost(cfg, PowerGrid.uniform(1.0, 3)) == 72


@pytest.mark.parametrize("seed", range(6))
def test_exact_count_equals_stream_length(seed):
    cfg, grid, _ = oracles.random_instance(seed, max_lattice=2000)
    n = sum(1 for _ in enumerate_allocations(cfg, grid))
    assert n == structural_count(cfg, grid)["exact"]
    assert n == sum(1 for _ in oracles.lattice(cfg, grid.levels))


def test_enumeration_is_deterministic_and_structurally_valid():
    grid = PowerGrid.uniform(1.0, 3)
    a = list(enumerate_allocations(TINY, grid))
    b = list(enumerate_allocations(TINY, grid))
    assert a == b
    loose = TINY.replace(r_min=(0.0, 0.0), d_max=(1e9, 1e9), p_ru_max=1e3, c_fh_max=60)
    structural = {"alpha_binary", "beta_binary", "alpha_non_member", "association",
                  "beta_le_alpha", "prb_exclusive", "power_nonneg", "power_max",
                  "power_without_grant"}
    for alloc in a:
        got = {v.constraint for v in check_feasible(np.ones(TINY.shape), alloc, loose)}
        assert not got & structural


def test_budget_error_carries_count():
    cfg = NetworkConfig()
    grid = PowerGrid.uniform(1.0, 3)
    exact = structural_count(cfg, grid)["exact"]
    with pytest.raises(BudgetExceeded) as err:
        solve_esa(np.ones(cfg.shape), cfg, grid, budget=1000)
    assert err.value.count == exact and err.value.budget == 1000
    with pytest.raises(BudgetExceeded):
        next(enumerate_allocations(cfg, grid, budget=1000))


def test_budget_error_pickles():
    import pickle
    e = pickle.loads(pickle.dumps(BudgetExceeded(10 ** 6, 10 ** 3)))
    assert e.count == 10 ** 6 and "1000000" in str(e)


def test_unattainable_rate_gives_no_feasible_solution():
    cfg = TINY.replace(r_min=(100.0, 100.0))
    res = solve_esa(np.ones(cfg.shape), cfg, PowerGrid.uniform(1.0, 3))
    assert res.feasible_count == 0 and res.best_alloc is None and res.best_value == -math.inf
    assert not res.feasible


@pytest.mark.parametrize("seed", range(15))
def test_matches_independent_brute_force(seed):
    cfg, grid, h = oracles.random_instance(seed)
    res = solve_esa(h, cfg, grid)
    best, any_feasible, count = oracles.brute_force(h, cfg, grid.levels)
    assert res.feasible == any_feasible
    assert res.evaluated_count == count
    if any_feasible:
        assert abs(res.best_value - best) <= 1e-9
        assert check_feasible(h, res.best_alloc, cfg) == []
        assert res.best_value == objective(h, res.best_alloc, cfg)


def test_b1_u2_m2_three_levels_against_brute_force():
    cfg = TINY.replace(r_min=(0.5, 0.2))
    grid = PowerGrid.uniform(1.0, 3)
    h = np.random.default_rng(0).exponential(size=cfg.shape)
    best, _, _ = oracles.brute_force(h, cfg, grid.levels)
    assert abs(solve_esa(h, cfg, grid).best_value - best) <= 1e-9


def test_full_rescan_finds_nothing_better():
    cfg, grid, h = oracles.random_instance(3)
    res = solve_esa(h, cfg, grid)
    for a in enumerate_allocations(cfg, grid):
        if not check_feasible(h, a, cfg):
            assert objective(h, a, cfg) <= res.best_value + 1e-12


def test_ties_keep_first_maximiser():
    cfg = TINY.replace(r_min=(0.0, 0.0), d_max=(1e9, 1e9), p_ru_max=5.0, c_fh_max=10.0)
    grid = PowerGrid.uniform(1.0, 3)
    h = np.ones(cfg.shape)
    res = solve_esa(h, cfg, grid)
    first = next(a for a in enumerate_allocations(cfg, grid)
                 if not check_feasible(h, a, cfg) and objective(h, a, cfg) == res.best_value)
    assert res.best_alloc == first


def test_relabelling_symmetric_ues_keeps_objective():
    cfg = NetworkConfig(num_rus=1, num_ues_embb=2, num_ues_urllc=1, num_prbs=3, r_min=(0.3, 0.3),
                        d_max=(1.0, 1.0), p_ru_max=3.0)
    grid = PowerGrid.uniform(1.0, 3)
    h = np.random.default_rng(2).exponential(size=cfg.shape)
    base = solve_esa(h, cfg, grid)
    assert base.feasible
    swapped = solve_esa(h[[1, 0, 2]], cfg, grid)
    assert abs(swapped.best_value - base.best_value) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_refining_grid_never_lowers_optimum(seed):
    cfg, _, h = oracles.random_instance(seed, max_lattice=2000)
    coarse = solve_esa(h, cfg, PowerGrid((0.0, 1.0))).best_value
    fine = solve_esa(h, cfg, PowerGrid((0.0, 0.5, 1.0))).best_value
    assert fine >= coarse


@pytest.mark.parametrize("seed", range(5))
def test_raising_caps_never_lowers_optimum(seed):
    cfg, grid, h = oracles.random_instance(seed, max_lattice=2000)
    prev = None
    for scale in (0.6, 0.8, 1.0, 1.5):
        c = cfg.replace(p_ru_max=cfg.p_ru_max * scale,
                        p_slice_max=tuple(min(1.0, p * scale) for p in cfg.p_slice_max))
        v = solve_esa(h, c, grid).best_value
        if prev is not None:
            assert v >= prev
        prev = v


def test_pruned_count_bounded_and_wall_time_recorded():
    cfg, grid, h = oracles.random_instance(1)
    res = solve_esa(h, cfg, grid)
    assert 0 <= res.pruned_count <= res.evaluated_count and res.wall_time >= 0
    assert res.feasible_count <= res.evaluated_count - res.pruned_count


def test_power_grid_validation():
    with pytest.raises(ValueError):
        PowerGrid((0.1, 0.5))
    with pytest.raises(ValueError):
        PowerGrid((0.0, 0.5, 0.5))
    assert PowerGrid.uniform(1.0, 4).levels == pytest.approx((0, 1 / 3, 2 / 3, 1))
    np.testing.assert_allclose(PowerGrid.uniform(1.0, 3).active_levels(0.6), [0.5])


def test_wrong_channel_shape_raises():
    with pytest.raises(ValueError):
        solve_esa(np.ones((1, 1, 1, 1)), TINY, PowerGrid.uniform(1.0, 2))
