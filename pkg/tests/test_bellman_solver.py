import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from solvcone.bellman_solver import (
    ActionGrid,
    BuyAndHold,
    LiquidateNow,
    PolicyError,
    TreePolicy,
    ZeroPolicy,
    append_results,
    convergence_study,
    dp_value,
    enumerate_value,
    enumeration_work,
    mc_value,
    randomization_test,
    result_row,
    surplus_shift,
)
from solvcone.cone_geometry import CostMatrix, cone_from_costs, contains, liquidation_value, transfer_rays
from solvcone.market_models import BudgetError, ModelSpec, build_tree, lattice_tree
from solvcone.portfolio_dynamics import in_minus_cone
from solvcone.utility import UtilitySpec

U = UtilitySpec(0.5)
K0 = cone_from_costs(CostMatrix.uniform(2, 0.0))
K1 = cone_from_costs(CostMatrix.uniform(2, 0.1))


def up_down_tree(n=1, up=2.0, down=0.5):
    return lattice_tree([1.0], [[math.log(up)], [math.log(down)]], [0.5, 0.5], n)


def walk_tree(n, sigma=0.3, drift=0.1, d=2):
    return build_tree(ModelSpec("scaled_walk", d, sigma=sigma, drift=drift), n)


def test_grid_construction():
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=5)
    assert g.delta == pytest.approx(liquidation_value(K1, x) / 20)
    assert in_minus_cone(K1, g.actions).all() and in_minus_cone(K1, g.root_actions).all()
    assert (np.abs(g.actions).sum(axis=1) == 0).any()
    # sorted lexicographically, no duplicates
    assert np.array_equal(g.actions, np.unique(g.actions, axis=0))
    with pytest.raises(ValueError):
        ActionGrid(K1, np.array([[0.1, 0.0]]), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        ActionGrid(K1, np.array([[-0.1, 0.0]]), np.zeros((1, 2)))


def test_zero_step_tree():
    tree = lattice_tree([1.0], [[0.0]], [1.0], 0)
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=4)
    want = max(float(U.of_cash(liquidation_value(K1, x))), float(U.of_cash(liquidation_value(K1, liquidation_value(K1, x) * np.eye(2)[0]))))
    assert enumerate_value(tree, x, g, U).value == pytest.approx(want)
    assert dp_value(tree, x, g, U).value == pytest.approx(want)


def test_frictionless_one_step_matches_fraction_search():
    tree = up_down_tree()
    x = np.eye(2)[0]
    g = ActionGrid.build(K0, x)
    v = enumerate_value(tree, x, g, U).value

    def f(theta):
        return 0.5 * U.of_cash(1 + theta) + 0.5 * U.of_cash(1 - 0.5 * theta)

    thetas = g.delta * np.arange(0, 41)
    oracle = max(f(t) for t in thetas if 1 - 0.5 * t >= 0)
    assert v == pytest.approx(oracle, abs=1e-12)
    cont = minimize_scalar(lambda t: -f(t), bounds=(0, 2), method="bounded")
    assert v <= -cont.fun + 1e-9
    assert v == pytest.approx(math.sqrt(2) + math.sqrt(0.5), abs=1e-12)


def test_costs_can_only_hurt():
    tree = up_down_tree()
    x = np.eye(2)[0]
    free = enumerate_value(tree, x, ActionGrid.build(K0, x), U).value
    costly = enumerate_value(tree, x, ActionGrid.build(K1, x), U).value
    assert costly <= free + 1e-12


def test_dp_exact_at_depth_one(rng):
    for _ in range(5):
        K = cone_from_costs(CostMatrix.uniform(2, rng.uniform(0, 0.2)))
        x = np.array([1.0, rng.uniform(0, 1)])
        tree = walk_tree(1, sigma=rng.uniform(0.1, 0.5), drift=rng.uniform(-0.2, 0.3))
        g = ActionGrid.build(K, x, kappa=10)
        assert dp_value(tree, x, g, U).value == pytest.approx(enumerate_value(tree, x, g, U).value, abs=1e-10)


def test_dp_within_bound_at_depth_two(rng):
    for _ in range(3):
        K = cone_from_costs(CostMatrix.uniform(2, rng.uniform(0.01, 0.2)))
        x = np.array([1.0, rng.uniform(0, 1)])
        tree = walk_tree(2, sigma=rng.uniform(0.1, 0.5))
        g = ActionGrid.build(K, x, kappa=6)
        e = enumerate_value(tree, x, g, U).value
        r = dp_value(tree, x, g, U)
        assert r.bound_valid
        assert abs(r.value - e) <= r.bound + 1e-12
        assert r.bracket[0] - 1e-12 <= e <= r.bracket[1] + 1e-12


def test_dp_refinement_is_monotone(rng):
    for _ in range(5):
        K = cone_from_costs(CostMatrix.uniform(2, rng.uniform(0.01, 0.2)))
        x = np.array([1.0, rng.uniform(0, 1)])
        tree = walk_tree(2, sigma=rng.uniform(0.1, 0.5), drift=rng.uniform(-0.2, 0.3))
        ell = liquidation_value(K, x)
        vals = [dp_value(tree, x, ActionGrid.build(K, x, delta=ell / 10 / 2**k, kappa=10 * 2**k), U,
                         points=10 * 2**k + 1).value for k in range(3)]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_enumeration_budget():
    tree = walk_tree(4)
    g = ActionGrid.build(K1, np.array([1.0, 0.5]))
    assert enumeration_work(tree, g) > 1e7
    with pytest.raises(BudgetError):
        enumerate_value(tree, np.array([1.0, 0.5]), g, U)
    with pytest.raises(ValueError):
        enumerate_value(walk_tree(1), np.array([-1.0, 0.5]), g, U)


def test_strategy_extraction_reproduces_value():
    tree = walk_tree(2)
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=6)
    r = enumerate_value(tree, x, g, U, want_strategy=True)
    s = r.strategy
    assert s.admissible(x)
    leaves = tree.leaves()
    pos = s.positions(x)[leaves]
    v = tree.reach()[leaves] @ U.of_cash(np.array([liquidation_value(K1, p) for p in pos]))
    assert v == pytest.approx(r.value, abs=1e-12)


def test_mc_zero_policy_on_cash_is_exact():
    spec = ModelSpec("gbm", 2, sigma=0.2)
    r = mc_value(spec, np.array([3.0, 0.0]), ZeroPolicy(), K1, U, 500, seed=1, m=8)
    assert r.value == pytest.approx(float(U.of_cash(3.0)), abs=1e-12)
    assert r.stderr <= 1e-15


def test_mc_buy_and_hold_does_not_beat_cash_without_drift():
    spec = ModelSpec("gbm", 2, sigma=0.2)
    x = np.array([1.0, 0.0])
    buy = -0.5 * transfer_rays(K1.costs)[1]
    zero = mc_value(spec, x, ZeroPolicy(), K1, U, 100_000, seed=3, m=8)
    bh = mc_value(spec, x, BuyAndHold(buy), K1, U, 100_000, seed=3, m=8)
    assert bh.value <= zero.value + 2 * bh.stderr


def test_mc_liquidate_now_is_deterministic():
    spec = ModelSpec("gbm", 2, sigma=0.2)
    x = np.array([1.0, 0.5])
    r = mc_value(spec, x, LiquidateNow(K1), K1, U, 1000, seed=4, m=4)
    assert r.value == pytest.approx(float(U.of_cash(liquidation_value(K1, x))), abs=1e-12)


def test_mc_rejects_trades_outside_minus_cone():
    spec = ModelSpec("gbm", 2, sigma=0.2)
    with pytest.raises(PolicyError):
        mc_value(spec, np.array([1.0, 0.5]), BuyAndHold(np.array([0.1, 0.1])), K1, U, 10, seed=0, m=2)


def test_mc_of_tree_optimal_policy_matches_enumeration():
    n = 3
    spec = ModelSpec("scaled_walk", 2, sigma=0.3, drift=0.15, n=n)
    tree = build_tree(spec, n)
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=6)
    e = enumerate_value(tree, x, g, U, want_strategy=True)
    r = mc_value(spec, x, TreePolicy(e.strategy, x), K1, U, 20_000, seed=5, m=n, margin=0.0)
    assert abs(r.value - e.value) <= 3 * r.stderr + 1e-12
    assert r.info["repaired"] == 0


def test_mc_repairs_breaching_policies():
    spec = ModelSpec("gbm", 2, sigma=0.6)
    x = np.array([1.0, 0.0])
    short = -transfer_rays(K1.costs)[1]
    r = mc_value(spec, x, BuyAndHold(short), K1, U, 2000, seed=6, m=128)
    assert r.info["repaired"] > 0 and np.isfinite(r.value)


def test_convergence_study_degenerate_and_frictionless():
    target = ModelSpec("gbm", 2, sigma=0.0)
    x = np.array([1.0, 0.0])
    K = cone_from_costs(CostMatrix.uniform(2, 0.01))
    rep = convergence_study(target, [2, 4, 8], x, K, U, ActionGrid.build(K, x, kappa=10), points=21)
    assert rep.values[0] == rep.values[1] == rep.values[2] == pytest.approx(float(U.of_cash(1.0)))
    assert rep.note == "Cauchy evidence" and "limit" not in rep.summary()
    free = convergence_study(ModelSpec("gbm", 2, sigma=0.2), [2], x, K0, U, ActionGrid.build(K0, x, kappa=4),
                             points=11)
    assert not free.cps_certified and "no price-system certificate" in free.summary()
    assert free.increments == []


def test_convergence_with_drift_has_small_last_increment():
    target = ModelSpec("gbm", 2, sigma=0.2, drift=0.1)
    x = np.array([1.0, 0.5])
    K = cone_from_costs(CostMatrix.uniform(2, 0.01))
    rep = convergence_study(target, [2, 4, 8, 16], x, K, U, ActionGrid.build(K, x, kappa=20), points=21)
    assert all(np.isfinite(rep.values))
    assert rep.increments[-1] < 0.02 * rep.values[-1]
    assert len(set(rep.values)) == len(rep.values)


def test_randomization_examples():
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=6)
    tree = walk_tree(1)
    r = randomization_test(tree, x, U, g, 2)
    assert r.difference <= 1e-10
    assert r.averaged == pytest.approx(r.value, abs=1e-10)
    r1 = randomization_test(tree, x, U, g, 1, control=False)
    assert r1.difference == 0 and r1.control_difference is None
    assert r.control_difference is not None and r.control_difference >= -1e-12


def test_shape_properties_small(rng):
    tree = walk_tree(2)
    x, y = np.array([1.0, 0.2]), np.array([0.4, 1.0])
    gx, gy = ActionGrid.build(K1, x, kappa=3, max_rays=1), ActionGrid.build(K1, y, kappa=3, max_rays=1)
    a = 0.3
    mixed = enumerate_value(tree, a * x + (1 - a) * y, gx.mix(gy, a), U).value
    assert mixed >= a * enumerate_value(tree, x, gx, U).value + (1 - a) * enumerate_value(tree, y, gy, U).value - 1e-9
    z = x + np.array([0.1, 0.3])
    assert contains(K1, z - x)
    up = enumerate_value(tree, z, gx.with_root_shift(surplus_shift(K1, x, z)), U).value
    assert up >= enumerate_value(tree, x, gx, U).value - 1e-9
    c = 2.5
    assert enumerate_value(tree, c * x, gx.scaled(c), U).value == pytest.approx(
        c ** (1 - U.gamma) * enumerate_value(tree, x, gx, U).value, abs=1e-9)


def test_results_csv(tmp_path):
    tree = walk_tree(1)
    x = np.array([1.0, 0.5])
    g = ActionGrid.build(K1, x, kappa=4)
    e = enumerate_value(tree, x, g, U)
    rows = [result_row(e, 1, x, 0.5, 0.1, 7)]
    append_results(tmp_path / "r.csv", rows)
    append_results(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "method,n,x,gamma,lambda,value,stderr,gap,seed" and len(lines) == 3
