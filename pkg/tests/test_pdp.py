import math

import numpy as np
import pytest

from nvo.errors import ConfigError, DatasetError, DimensionError
from nvo.mechanism import MassMatrix, action_set, build_mass_matrix, mass_row
from nvo.pdp import (
    epsilon_conservative,
    epsilon_exact,
    epsilons,
    privacy_payoff,
    theorem_bmin,
    v_min_density,
)
from nvo.preprocess import from_bins


def test_identical_rows_cost_nothing_exactly():
    row = mass_row(0.3, 0.2, 11)
    mm = MassMatrix(rows=np.tile(row, (5, 1)))
    assert epsilons(mm, "exact") == pytest.approx(np.zeros(5), abs=1e-12)


def test_two_instance_pair():
    mm = MassMatrix(rows=[[0.9, 0.1], [0.1, 0.9]])
    assert epsilon_exact(mm, 0) == pytest.approx(math.log(5), abs=1e-12)
    assert epsilon_exact(mm, 1) == pytest.approx(math.log(5), abs=1e-12)
    assert epsilon_conservative(mm, 0) == pytest.approx(math.log(10), abs=1e-12)


def test_shared_bin_with_negligible_noise():
    binned = from_bins([4, 4, 4], k=11)
    mm = build_mass_matrix(binned, action_set(1.0, 1.0, (0.01,)).with_assignment([0, 0, 0]))
    for i in range(3):
        assert epsilon_exact(mm, i) == pytest.approx(0.0, abs=1e-12)
        assert epsilon_conservative(mm, i) == pytest.approx(math.log(1.5), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 10, 100])
def test_conservative_floor_for_identical_rows(n):
    mm = MassMatrix(rows=np.tile(mass_row(0.5, 1.0, 7), (n, 1)))
    assert epsilons(mm, "conservative") == pytest.approx(np.full(n, math.log(n / (n - 1))), abs=1e-12)


def test_unique_support_is_infinitely_distinguishing():
    mm = MassMatrix(rows=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]])
    exact = epsilons(mm, "exact")
    assert math.isinf(exact[0])
    assert math.isinf(epsilons(mm, "conservative")[0])
    assert math.isinf(exact[2])
    assert privacy_payoff(mm, 1.0)[0] < 3


def test_zero_everywhere_bin_contributes_no_loss():
    mm = MassMatrix(rows=[[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])
    assert epsilons(mm, "exact") == pytest.approx([0.0, 0.0], abs=1e-12)


def test_bad_index_rejected():
    mm = MassMatrix(rows=[[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(DimensionError):
        epsilon_exact(mm, 2)
    with pytest.raises(DimensionError):
        epsilon_conservative(mm, -1)


def test_single_instance_rejected():
    with pytest.raises(DatasetError):
        epsilons(MassMatrix(rows=[[0.5, 0.5]]))


def test_conservative_dominates_exact_upward_loss():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n, k = int(rng.integers(2, 12)), int(rng.integers(2, 30))
        rows = rng.random((n, k)) + 1e-3
        mm = MassMatrix(rows=rows / rows.sum(axis=1, keepdims=True))
        others = mm.column_sums[None, :] - mm.rows
        upward = np.max(np.log((mm.column_sums[None, :] / n) / (others / (n - 1))), axis=1)
        assert np.all(epsilons(mm, "conservative") >= upward - 1e-12)


def test_instance_permutation_permutes_losses():
    binned = from_bins([2, 2, 5, 9, 0], k=11)
    plan = action_set(1.0, 1.0, (1.0, 0.2)).with_assignment([0, 1, 1, 0, 1])
    mm = build_mass_matrix(binned, plan)
    perm = [3, 0, 4, 1, 2]
    permuted = MassMatrix(rows=mm.rows[perm])
    for mode in ("exact", "conservative"):
        assert epsilons(permuted, mode) == pytest.approx(epsilons(mm, mode)[perm], rel=1e-12)


def test_privacy_payoff_counts_and_flags():
    mm = MassMatrix(rows=[[0.9, 0.1], [0.1, 0.9]])
    assert privacy_payoff(mm, 2.0) == (2, [True, True])
    assert privacy_payoff(mm, 1.0) == (0, [False, False])
    with pytest.raises(ConfigError):
        privacy_payoff(mm, 0.0)


def test_near_uniform_rows_satisfy_everyone():
    binned = from_bins([1, 3, 5, 7, 9], k=10)
    mm = build_mass_matrix(binned, action_set(1.0, 1.0, (1e4,)).with_assignment([0] * 5))
    assert privacy_payoff(mm, 1.0)[0] == 5


def test_isolated_singleton_costs_more_than_the_crowd():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        b = float(rng.uniform(0.005, 0.05))
        crowd_bin = int(rng.integers(0, 30))
        lone_bin = int(rng.integers(70, 101))
        binned = from_bins([crowd_bin] * 9 + [lone_bin], k=101)
        mm = build_mass_matrix(binned, action_set(1.0, 1.0, (b,)).with_assignment([0] * 10))
        loss = epsilons(mm, "exact")
        assert loss[9] > loss[:9].max()


@pytest.mark.parametrize(
    "epsilon,n,variant,k,expected",
    [
        (1.0, 2, "main", None, 1.0),
        (1.0, 101, "main", None, 0.19409),
        (1.0, 4, "appendix", 101, 20.09),
        (1.0, 1307, "main", None, 0.1296),
        (1.0, 1307, "appendix", 101, 0.3180),
    ],
)
def test_theorem_bound_values(epsilon, n, variant, k, expected):
    assert theorem_bmin(epsilon, n, variant, k) == pytest.approx(expected, rel=1e-3)


def test_theorem_bound_decreases_with_n():
    bounds = [theorem_bmin(1.0, n) for n in (2, 5, 50, 500)]
    assert all(a > b for a, b in zip(bounds, bounds[1:]))


def test_theorem_bound_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        theorem_bmin(0.0, 10)
    with pytest.raises(DatasetError):
        theorem_bmin(1.0, 1)
    with pytest.raises(ConfigError):
        theorem_bmin(1.0, 10, "appendix")


def test_v_min_values():
    assert v_min_density(1.0) == pytest.approx(0.58198, abs=1e-5)
    assert v_min_density(0.5) == pytest.approx(0.1565, abs=1e-4)
    assert v_min_density(0.1) == pytest.approx(4.54e-5, rel=1e-2)
    assert v_min_density(1e-4) == 0.0
    with pytest.raises(ConfigError):
        v_min_density(0.0)


@pytest.mark.parametrize("b", [0.2, 1.0, 5.0])
def test_v_min_is_density_floor_times_scale(b):
    xs = np.linspace(0.0, 1.0, 2001)
    density = np.exp(-xs / b) / (2 * b) / (0.5 * -math.expm1(-1.0 / b))
    assert density.min() * b == pytest.approx(v_min_density(b), rel=1e-9)


def test_scales_above_appendix_bound_meet_target():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        k = int(rng.choice([11, 101]))
        epsilon = float(rng.choice([0.5, 1.0, 2.0]))
        bound = theorem_bmin(epsilon, n, "appendix", k)
        binned = from_bins(rng.integers(0, k, size=n).tolist(), k=k)
        scales = (bound * rng.uniform(1.0, 4.0, size=3)).tolist()
        plan = action_set(1.0, 1.0, scales).with_assignment(rng.integers(0, 3, size=n).tolist())
        loss = epsilons(build_mass_matrix(binned, plan), "exact")
        assert np.all(loss <= epsilon)


def test_no_output_event_beats_the_worst_single_bin():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n, k = int(rng.integers(2, 9)), int(rng.integers(2, 25))
        rows = rng.random((n, k)) ** 3 + 1e-9
        mm = MassMatrix(rows=rows / rows.sum(axis=1, keepdims=True))
        i = int(rng.integers(0, n))
        subset = rng.random(k) < 0.5
        subset[int(rng.integers(0, k))] = True
        with_i = mm.column_sums[subset].sum() / n
        without_i = (mm.column_sums - mm.rows[i])[subset].sum() / (n - 1)
        assert abs(math.log(with_i / without_i)) <= epsilon_exact(mm, i) + 1e-9
