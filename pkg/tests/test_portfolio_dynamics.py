import numpy as np
import pytest

from solvcone.cone_geometry import CostMatrix, cone_from_costs, contains, liquidation_value
from solvcone.market_models import ModelSpec, build_tree, sample_batch
from solvcone.path_calculus import CADLAG, LINEAR, GridPath, lift, stieltjes_integral, total_variation
from solvcone.portfolio_dynamics import (
    AdmissibilityError,
    RepairError,
    Strategy,
    TreeStrategy,
    check_certificate,
    churn_tree_strategy,
    discretize_strategy,
    first_breach,
    is_admissible,
    liquidation_strategy,
    random_k_decreasing,
    random_tree_strategy,
    repair_strategy,
    wealth,
)

K0 = cone_from_costs(CostMatrix.uniform(2, 0.0))
K1 = cone_from_costs(CostMatrix.uniform(2, 0.1))


def gbm_paths(m, count, seed, sigma=0.2):
    S, _ = sample_batch(ModelSpec("gbm", 2, sigma=sigma), m, count, seed)
    return [GridPath(1.0, s, LINEAR) for s in S]


def scaled_to_variation(B, v):
    if total_variation(B.B).total == 0:
        return B
    return Strategy.from_jumps(B.cone, B.jumps * v / total_variation(B.B).total, B.B.horizon)


def test_wealth_examples():
    S = gbm_paths(8, 1, 0)[0]
    x = np.array([1.0, 0.5])
    W = wealth(x, Strategy.zero(K1, 8), S)
    assert np.allclose(W.V_hat.values, x / S.values[0])
    assert np.allclose(W.V.values, S.values * (x / S.values[0]))
    one = GridPath(1.0, np.ones((9, 2)), LINEAR)
    B = random_k_decreasing(K1, 8, np.random.default_rng(0))
    W = wealth(x, B, one)
    assert np.allclose(W.V_hat.values, x + B.B.values)
    assert np.allclose(W.V.values, W.V_hat.values)


def test_liquidation_strategy_examples():
    S = gbm_paths(4, 1, 1)[0]
    assert np.allclose(liquidation_strategy(np.eye(2)[0], K1).jumps[0], 0)
    assert np.allclose(liquidation_strategy(np.array([1.0, 1.0]), K0).jumps[0], [1, -1])
    L = liquidation_strategy(np.array([0.0, 1.0]), K1, m=4)
    assert np.allclose(L.jumps[0], [1 / 1.1, -1])
    x = np.array([0.7, 0.4])
    L = liquidation_strategy(x, K1, m=4)
    assert np.allclose(wealth(x, L, S).V.terminal, [liquidation_value(K1, x), 0])
    with pytest.raises(AdmissibilityError):
        liquidation_strategy(np.array([-1.0, 0.5]), K1)


def test_wealth_matches_stieltjes_integral(rng):
    for S in gbm_paths(16, 5, 2):
        B = random_k_decreasing(K1, 16, rng)
        x = np.array([1.0, 0.5])
        W = wealth(x, B, S)
        inv = GridPath(1.0, 1.0 / S.values, CADLAG)
        assert np.allclose(W.V_hat.values, x / S.values[0] + stieltjes_integral(inv, B.B).values, atol=1e-12)
        # numeraire consistency: physical map of monetary wealth
        assert np.allclose(W.V.values / S.values, W.V_hat.values, rtol=1e-12)


def test_admissibility_examples(rng):
    one = GridPath(1.0, np.ones((3, 2)))
    x = np.eye(2)[0]
    assert is_admissible(x, Strategy.zero(K0, 2), one)
    B = Strategy.from_jumps(K0, np.array([[0.0, 0], [-2.0, 0], [0, 0]]))
    res = is_admissible(x, B, one)
    assert not res and res.violation == 1 and res.time == 0.5
    x = np.array([1.0, 0.5])
    for S in gbm_paths(16, 20, 3):
        B = scaled_to_variation(random_k_decreasing(K1, 16, rng), 0.05)
        W = wealth(x, B, S)
        assert is_admissible(x, B, S)
        assert all(liquidation_value(K1, v) > 0 for v in W.V.values)


def test_strategy_rejects_increments_outside_minus_cone():
    with pytest.raises(ValueError):
        Strategy.from_jumps(K1, np.array([[0.0, 0], [0.1, 0]]))
    with pytest.raises(ValueError):
        Strategy(GridPath(1.0, np.zeros((2, 2)), pre0=np.ones(2)), K1)


def test_admissible_sets_are_convex_scalable_and_monotone(rng):
    for S in gbm_paths(8, 10, 4):
        x, y = np.array([1.0, 0.3]), np.array([0.5, 1.0])
        B = scaled_to_variation(random_k_decreasing(K1, 8, rng), 0.2)
        C = scaled_to_variation(random_k_decreasing(K1, 8, rng), 0.2)
        assert is_admissible(x, B, S) and is_admissible(y, C, S)
        a = rng.uniform(0.05, 0.95)
        mix = Strategy.from_jumps(K1, a * B.jumps + (1 - a) * C.jumps)
        assert is_admissible(a * x + (1 - a) * y, mix, S)
        c = rng.uniform(0.1, 5)
        assert is_admissible(c * x, Strategy.from_jumps(K1, c * B.jumps), S)
        z = x + np.array([0.2, 0.1])
        assert contains(K1, z - x) and is_admissible(z, B, S)


def test_discretize_examples(rng):
    S = gbm_paths(64, 1, 5)[0]
    x = np.array([1.0, 0.5])
    coarse = scaled_to_variation(random_k_decreasing(K1, 8, rng, trade_prob=0.8), 0.3)
    B = Strategy(lift(coarse.B, 64), K1)
    Bm, cert = discretize_strategy(x, B, S, 8)
    assert np.array_equal(Bm.B.values, coarse.B.values)
    assert check_certificate(x, Bm, cert, S)
    same, cert = discretize_strategy(x, B, S, 64)
    assert np.array_equal(same.B.values, B.B.values)
    # no coarsening: only the price-interpolation term survives, which is zero on the own grid
    assert cert.sup_norm == 0
    with pytest.raises(AdmissibilityError):
        discretize_strategy(x, Strategy.from_jumps(K1, np.vstack([np.zeros(2), [[-5, 5 / 1.2]] * 64])), S, 8)


@pytest.mark.parametrize("mode", ["bound", "exact"])
def test_certificate_invariant_and_k_decrease(rng, mode):
    x = np.array([1.0, 0.5])
    for S in gbm_paths(256, 10, 6, sigma=0.4):
        B = scaled_to_variation(random_k_decreasing(K1, 256, rng, trade_prob=0.1), 0.5)
        for m in (8, 32, 128):
            Bm, cert = discretize_strategy(x, B, S, m, mode=mode)
            assert check_certificate(x, Bm, cert, S)
            assert all(contains(K1, -j) for j in Bm.jumps)
            assert cert.sup_norm <= np.max(cert.analytic_bound) + 1e-12


def test_repair_examples():
    one = GridPath(1.0, np.ones((3, 2)))
    x = np.eye(2)[0]
    C = Strategy.zero(K0, 2)
    assert repair_strategy(x, C, one, margin=0.1) is C
    # overdraw at t_1: give away two units of cash
    C = Strategy.from_jumps(K0, np.array([[0.0, 0], [-2.0, 0.0], [0.0, 0.0]]))
    assert first_breach(x, C, one, 0.0) == 1
    D = repair_strategy(x, C, one, margin=0.0)
    assert np.allclose(wealth(x, D, one).V.terminal, [liquidation_value(K0, x), 0.0])
    assert is_admissible(x, D, one)


def test_repair_error_carries_tau():
    x = np.eye(2)[0]
    # leveraged purchase at t_1, then a crash: the position before t_2 is already insolvent
    S = GridPath(1.0, np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1e-3]]))
    C = Strategy.from_jumps(K0, np.array([[0.0, 0], [-2.0, 2.0], [0, 0]]))
    with pytest.raises(RepairError) as err:
        repair_strategy(x, C, S, margin=0.0)
    assert err.value.tau == 2 and err.value.value < 0


def test_repair_property_harness(rng):
    x = np.array([1.0, 0.5])
    paths = gbm_paths(16, 1000, 7)
    outcomes = {"admissible": 0, "error": 0}
    for S in paths:
        C = random_k_decreasing(K1, 16, rng, scale=rng.uniform(0.1, 1.0))
        margin = rng.uniform(0, 0.3)
        try:
            D = repair_strategy(x, C, S, margin=margin)
        except RepairError as e:
            assert 0 <= e.tau <= 16
            outcomes["error"] += 1
            continue
        assert is_admissible(x, D, S)
        outcomes["admissible"] += 1
    assert outcomes["admissible"] > 0


def test_strategy_csv(tmp_path, rng):
    B = random_k_decreasing(K1, 4, rng)
    B.write_csv(tmp_path / "b.csv", cone_file="k.txt")
    text = (tmp_path / "b.csv").read_text()
    assert text.startswith("# cone: k.txt")
    assert np.array_equal(GridPath.read_csv(tmp_path / "b.csv").values, B.B.values)


def test_tree_strategies_are_admissible(rng):
    tree = build_tree(ModelSpec("scaled_walk", 2, sigma=0.3), 3)
    x = np.array([1.0, 0.5])
    for _ in range(100):
        s = random_tree_strategy(tree, x, K1, rng)
        assert s.admissible(x)
    churn = churn_tree_strategy(tree, x, K1, [-0.3 * g for g in np.array([[1.1, -1.0], [-1.0, 1.1]])] + [np.zeros(2)])
    assert churn.admissible(x)
    assert churn.variation()[tree.leaves()].min() > 0
    with pytest.raises(ValueError):
        TreeStrategy(tree, np.ones((tree.size, 2)), K1)
