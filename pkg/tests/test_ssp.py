import numpy as np
import pytest

import lrcssp as lr
from conftest import random_ssp, exact_policy_value, brute_force_optimum


def test_backup_goal_contributes_nothing():
    ssp = lr.SspInstance(loss=[[0.3]], trans=[[[0.0]]])
    assert lr.bellman_backup(np.array([123.0]), ssp) == pytest.approx([0.3])


def test_backup_two_state_chain():
    trans = np.zeros((2, 1, 2))
    trans[0, 0, 1] = 1.0
    ssp = lr.SspInstance(loss=[[0.2], [0.1]], trans=trans)
    v = lr.bellman_backup(np.array([9.0, 0.5]), ssp)
    assert v[0] == pytest.approx(0.7)


def test_backup_matches_direct_formula(rng):
    ssp = random_ssp(rng, 3, 2)
    v = rng.random(3) * 5
    expected = [min(ssp.loss[s, a] + sum(ssp.trans[s, a, t] * v[t] for t in range(3)) for a in range(2))
                for s in range(3)]
    assert np.allclose(lr.bellman_backup(v, ssp), expected)


def test_backup_dimension_mismatch():
    ssp = lr.SspInstance(loss=[[0.3]], trans=[[[0.0]]])
    with pytest.raises(lr.StructuralError):
        lr.bellman_backup(np.zeros(2), ssp)


def test_instance_rejects_excess_mass():
    with pytest.raises(lr.StructuralError):
        lr.SspInstance(loss=[[0.3]], trans=[[[1.2]]])
    with pytest.raises(lr.StructuralError):
        lr.SspInstance(loss=[[1.3]], trans=[[[0.0]]])


def test_value_iteration_closed_forms():
    v, pi = lr.value_iteration(lr.SspInstance(loss=[[0.3]], trans=[[[0.0]]]))
    assert v == pytest.approx([0.3]) and pi.tolist() == [0]

    v, _ = lr.value_iteration(lr.SspInstance(loss=[[1.0]], trans=[[[0.5]]]), tol=1e-10)
    assert v == pytest.approx([2.0], abs=1e-8)


def test_value_iteration_ties_lowest_index():
    ssp = lr.SspInstance(loss=[[0.5, 0.5, 0.5]], trans=np.zeros((1, 3, 1)))
    _, pi = lr.value_iteration(ssp)
    assert pi.tolist() == [0]


def test_value_iteration_matches_brute_force(rng):
    for _ in range(5):
        ssp = random_ssp(rng, 3, 2)
        v, pi = lr.value_iteration(ssp, tol=1e-10)
        assert np.allclose(v, brute_force_optimum(ssp), atol=1e-7)
        residual = np.max(np.abs(v - lr.bellman_backup(v, ssp)))
        assert residual <= 1e-10


def test_value_iteration_zero_loss_loop():
    ssp = lr.SspInstance(loss=[[0.0, 1.0]], trans=[[[1.0], [0.0]]])
    # zero-loss self loop: V* = 0 is reached immediately; the loop itself is improper
    v, pi = lr.value_iteration(ssp)
    assert v.tolist() == [0.0] and pi.tolist() == [0]
    assert not lr.is_proper(ssp, pi, max_iter=10**4)


def test_value_iteration_non_convergence():
    ssp = lr.SspInstance(loss=[[1.0]], trans=[[[0.999]]])
    with pytest.raises(lr.NonConvergenceError) as e:
        lr.value_iteration(ssp, tol=1e-12, max_iter=50)
    assert e.value.residual > 1e-12


def test_policy_evaluation_chain():
    n = 4
    trans = np.zeros((n, 1, n))
    for s in range(n - 1):
        trans[s, 0, s + 1] = 1.0
    ssp = lr.SspInstance(loss=np.ones((n, 1)), trans=trans)
    v = lr.policy_evaluation(ssp, np.zeros(n, dtype=int))
    assert v[0] == pytest.approx(4.0)


def test_policy_evaluation_fixpoint(rng):
    ssp = random_ssp(rng, 4, 2)
    pi = rng.integers(0, 2, size=4)
    v = lr.policy_evaluation(ssp, pi, tol=1e-11)
    l_pi, p_pi = lr.policy_matrices(ssp, pi)
    assert np.max(np.abs(v - (l_pi + p_pi @ v))) <= 1e-11
    assert np.allclose(v, exact_policy_value(ssp, pi), atol=1e-9)


def test_policy_evaluation_self_loop_is_improper():
    ssp = lr.SspInstance(loss=[[1.0]], trans=[[[1.0]]])
    with pytest.raises(lr.ImproperPolicyError) as e:
        lr.policy_evaluation(ssp, [0], max_iter=10**4, value_cap=1e3)
    assert e.value.max_value > 1e3


def test_policy_evaluation_matches_rollouts(rng):
    ssp = random_ssp(rng, 4, 2, goal_min=0.3)
    pi = np.array([0, 1, 0, 1])
    v = lr.policy_evaluation(ssp, pi)
    l_pi, p_pi = lr.policy_matrices(ssp, pi)
    goal = 1.0 - p_pi.sum(axis=1)
    probs = np.hstack([p_pi, goal[:, None]])
    totals = np.empty(20000)
    for i in range(totals.size):
        s, total = 0, 0.0
        while s != 4:
            total += l_pi[s]
            s = rng.choice(5, p=probs[s])
        totals[i] = total
    se = totals.std() / np.sqrt(totals.size)
    assert abs(totals.mean() - v[0]) < 4 * se


def test_hitting_time_closed_forms():
    ssp = lr.SspInstance(loss=[[0.1], [0.1]], trans=np.zeros((2, 1, 2)))
    assert lr.expected_hitting_time(ssp, [0, 0]) == pytest.approx([1.0, 1.0])

    p = 0.75
    ssp = lr.SspInstance(loss=[[0.1]], trans=[[[p]]])
    assert lr.expected_hitting_time(ssp, [0], tol=1e-12) == pytest.approx([1.0 / (1.0 - p)], rel=1e-9)


def test_is_proper():
    ssp = lr.SspInstance(loss=[[0.1, 0.1], [0.1, 0.1]],
                         trans=[[[0.0, 1.0], [0.9, 0.0]], [[1.0, 0.0], [0.0, 0.0]]])
    # 0 -> 1 -> 0 forever
    assert not lr.is_proper(ssp, [0, 0], max_iter=10**4)
    # 0 -> 1 -> goal
    assert lr.is_proper(ssp, [0, 1])
    assert lr.is_proper(ssp, [1, 1])


def test_is_proper_matches_reachability():
    # goal reachable only through the end of a chain; a self loop anywhere on it traps the policy
    n = 5
    for cut in range(n):
        trans = np.zeros((n, 1, n))
        for s in range(n - 1):
            trans[s, 0, s + 1] = 1.0
        trans[cut, 0, :] = 0.0
        trans[cut, 0, cut] = 1.0
        ssp = lr.SspInstance(loss=np.ones((n, 1)), trans=trans)
        assert not lr.is_proper(ssp, np.zeros(n, dtype=int), max_iter=10**4)
    trans = np.zeros((n, 1, n))
    for s in range(n - 1):
        trans[s, 0, s + 1] = 1.0
    assert lr.is_proper(lr.SspInstance(loss=np.ones((n, 1)), trans=trans), np.zeros(n, dtype=int))


def test_backup_monotone_and_contraction(rng):
    gamma = 0.1
    ssp = random_ssp(rng, 4, 3, goal_min=gamma)
    for _ in range(20):
        v = rng.random(4) * 3
        w = v + rng.random(4)
        assert np.all(lr.bellman_backup(v, ssp) <= lr.bellman_backup(w, ssp) + 1e-12)
        gap = np.max(np.abs(lr.bellman_backup(v, ssp) - lr.bellman_backup(w, ssp)))
        assert gap <= (1 - gamma) * np.max(np.abs(v - w)) + 1e-12
