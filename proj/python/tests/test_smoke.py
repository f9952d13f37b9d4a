import math

import numpy as np
import pytest

import shufflepl


def test_interpolating_problem_has_zero_optimum():
    p = shufflepl.interpolating(20, 50, seed=1)
    assert (p.n, p.d) == (20, 50)
    assert p.f_star == 0.0
    assert p.objective(p.w_star) < 1e-20


def test_least_squares_gradient_matches_formula():
    rows = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
    b = np.array([1.0, 0.0, 2.0])
    p = shufflepl.least_squares(rows, b)
    w = np.array([0.3, -0.7])
    for i in range(3):
        r = rows[i] @ w - b[i]
        assert p.value(w, i) == pytest.approx(0.5 * r * r, rel=1e-14)
        np.testing.assert_allclose(p.gradient(w, i), r * rows[i], rtol=1e-14)


def test_gradient_check_on_least_squares():
    p = shufflepl.interpolating(10, 20, seed=3)
    assert shufflepl.gradient_check(p, trials=20, h=1e-3, seed=0) <= 1e-9


def test_permutations():
    assert shufflepl.permutation("ig", 0, 5, 7) == [1, 2, 3, 4, 5]
    first = shufflepl.permutation("ss", 4, 6, 1)
    assert sorted(first) == list(range(1, 7))
    assert shufflepl.permutation("ss", 4, 6, 9) == first


def test_schedule_plan_example():
    plan = shufflepl.plan_schedule(0.04, 1.0, 1.0, 1.0)
    assert plan.K == pytest.approx(1.008, rel=1e-12)
    assert plan.T == 125
    assert plan.eta0 == pytest.approx(0.2 / (1.008 * math.e), rel=1e-12)


def test_run_single_component_is_gradient_descent():
    p = shufflepl.least_squares(np.array([[2.0, 1.0]]), np.array([1.0]))
    w0 = np.zeros(2)
    records, w = shufflepl.run(p, w0, 0.1, scheme="rr", seed=5, epochs=10)
    assert len(records) == 10
    ref = w0.copy()
    a = np.array([2.0, 1.0])
    for _ in range(10):
        ref = ref - 0.1 * (a @ ref - 1.0) * a
    np.testing.assert_allclose(w, ref, rtol=1e-12, atol=1e-15)


def test_divergence_is_reported():
    p = shufflepl.interpolating(5, 10, seed=0)
    with pytest.raises(ArithmeticError):
        shufflepl.run(p, np.ones(10), 100.0, epochs=200)


def test_fit_recovers_power_law():
    eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    slope, _ = shufflepl.fit_loglog(eps, [7.0 * e ** -1.5 for e in eps])
    assert slope == pytest.approx(1.5, abs=1e-9)


def test_load_problem_from_dict():
    p = shufflepl.load_problem({"kind": "bias_mlp", "input_dim": 2, "hidden": [4], "output_dim": 1,
                                "samples": 6, "data_seed": 1})
    assert p.kind == "bias_mlp"
    with pytest.raises(ValueError):
        shufflepl.load_problem({"kind": "nope"})
