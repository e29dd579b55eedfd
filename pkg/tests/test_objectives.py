import numpy as np
import pytest

from gossipopt import hardcase, objectives


def _central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture(scope="module")
def logistic():
    return objectives.gen_synthetic_logistic(5, 12, 6, seed=0, kappa=50.0)


@pytest.fixture(scope="module")
def quadratic():
    return objectives.gen_random_quadratic(4, 5, L=9.0, mu=1.5, seed=1)


def test_quadratic_gradient_is_linear_map():
    obj = objectives.QuadraticObjectives(
        np.array([[[2.0, 0.0], [0.0, 2.0]]]), np.zeros((1, 2))
    )
    assert np.allclose(obj.grad_block(0, np.array([1.0, 1.0])), [2.0, 2.0])


def test_logistic_gradient_at_zero(logistic):
    # sigmoid(0) = 1/2 and the regularizer vanishes at the origin
    for i in range(logistic.n):
        expected = (
            -(logistic.features[i].T @ logistic.labels[i]) * 0.5 / logistic.m
        )
        got = logistic.grad_block(i, np.zeros(logistic.d))
        assert np.allclose(got, expected, atol=1e-14)


@pytest.mark.parametrize("kind", ["logistic", "quadratic"])
def test_gradient_matches_finite_differences(kind, logistic, quadratic):
    obj = logistic if kind == "logistic" else quadratic
    rng = np.random.default_rng(2)
    for _ in range(20):
        i = int(rng.integers(obj.n))
        x = rng.standard_normal(obj.d)
        fd = _central_diff(lambda u: obj.value_block(i, u), x)
        g = obj.grad_block(i, x)
        assert np.linalg.norm(fd - g) <= 1e-5 * (1 + np.linalg.norm(g))


def test_stacked_gradient_matches_blocks(logistic, quadratic):
    rng = np.random.default_rng(3)
    for obj in (logistic, quadratic):
        x = rng.standard_normal((obj.n, obj.d))
        stacked = obj.grad(x)
        for i in range(obj.n):
            assert np.allclose(stacked[i], obj.grad_block(i, x[i]), atol=1e-12)
        assert abs(obj.value(x) - sum(obj.value_block(i, x[i]) for i in range(obj.n))) < 1e-10


def test_strong_monotonicity_and_lipschitz(logistic, quadratic):
    rng = np.random.default_rng(4)
    for obj in (logistic, quadratic):
        for _ in range(30):
            x = rng.standard_normal((obj.n, obj.d))
            y = rng.standard_normal((obj.n, obj.d))
            dg = obj.grad(x) - obj.grad(y)
            dx = x - y
            inner = float(np.vdot(dg, dx))
            assert inner >= obj.mu * np.vdot(dx, dx) - 1e-9
            assert np.linalg.norm(dg) <= obj.L * np.linalg.norm(dx) * (1 + 1e-9)


def test_two_sided_smoothness_bound(logistic, quadratic):
    rng = np.random.default_rng(5)
    for obj in (logistic, quadratic):
        for _ in range(50):
            i = int(rng.integers(obj.n))
            x = rng.standard_normal(obj.d)
            y = rng.standard_normal(obj.d)
            gap = (
                obj.value_block(i, x)
                - obj.value_block(i, y)
                - float(obj.grad_block(i, y) @ (x - y))
            )
            dist = float((x - y) @ (x - y))
            assert gap >= 0.5 * obj.mu * dist - 1e-9 * (1 + dist)
            assert gap <= 0.5 * obj.L * dist + 1e-9 * (1 + dist)


def test_dual_gradient_inverts_primal():
    obj = objectives.QuadraticObjectives(
        np.array([[[2.0, 0.0], [0.0, 2.0]]]), np.zeros((1, 2))
    )
    assert np.allclose(obj.dual_grad_block(0, np.array([2.0, 2.0])), [1.0, 1.0])

    rng = np.random.default_rng(6)
    quad = objectives.gen_random_quadratic(3, 4, L=5.0, mu=0.5, seed=7)
    for _ in range(10):
        i = int(rng.integers(quad.n))
        x = rng.standard_normal(quad.d)
        y = rng.standard_normal(quad.d)
        assert np.allclose(
            quad.grad_block(i, quad.dual_grad_block(i, y)), y, atol=1e-8
        )
        assert np.allclose(
            quad.dual_grad_block(i, quad.grad_block(i, x)), x, atol=1e-8
        )


def test_dual_gradient_matches_dense_solve_on_chain_quadratic():
    instance = hardcase.build_hard_instance(9.0, 20.0, 1.0, 40)
    obj = instance.objectives
    rng = np.random.default_rng(8)
    for i in (0, 4, 8):
        y = rng.standard_normal(obj.d)
        direct = np.linalg.solve(obj.quad[i], y - obj.lin[i])
        assert np.abs(obj.dual_grad_block(i, y) - direct).max() <= 1e-10


def test_dual_gradient_unsupported_for_logistic(logistic):
    with pytest.raises(NotImplementedError):
        logistic.dual_grad_block(0, np.zeros(logistic.d))


def test_synthetic_logistic_condition_number_exact():
    obj = objectives.gen_synthetic_logistic(4, 10, 6, seed=3, kappa=10.0)
    assert abs(obj.L / obj.mu - 10.0) <= 1e-9


def test_synthetic_logistic_deterministic():
    a = objectives.gen_synthetic_logistic(3, 8, 5, seed=11, kappa=25.0)
    b = objectives.gen_synthetic_logistic(3, 8, 5, seed=11, kappa=25.0)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert a.reg == b.reg


def test_stored_L_bounds_empirical_lipschitz(logistic):
    rng = np.random.default_rng(9)
    for _ in range(100):
        i = int(rng.integers(logistic.n))
        x = rng.standard_normal(logistic.d)
        y = rng.standard_normal(logistic.d)
        num = np.linalg.norm(logistic.grad_block(i, x) - logistic.grad_block(i, y))
        assert num <= logistic.L * np.linalg.norm(x - y) * (1 + 1e-9)


def test_logistic_json_roundtrip(logistic):
    back = objectives.LogisticObjectives.from_json(logistic.to_json())
    assert np.array_equal(back.features, logistic.features)
    assert np.array_equal(back.labels, logistic.labels)
    assert back.L == logistic.L and back.mu == logistic.mu


def test_constants_csv_roundtrip(logistic):
    lines = objectives.constants_csv(logistic).strip().splitlines()
    assert lines[0] == "L,mu,kappa"
    L, mu, kappa = (float(v) for v in lines[1].split(","))
    assert L == logistic.L and mu == logistic.mu
    assert kappa == logistic.L / logistic.mu


def test_reference_minimizer_mean_closed_form():
    # with Q_i = I and c_i = -v_i the average objective peaks at mean(v_i)
    rng = np.random.default_rng(10)
    v = rng.standard_normal((5, 3))
    obj = objectives.QuadraticObjectives(
        np.tile(np.eye(3), (5, 1, 1)), -v, L=1.5, mu=0.5
    )
    x_ref = objectives.reference_minimizer(obj, tol=1e-12)
    assert np.allclose(x_ref, v.mean(axis=0), atol=1e-10)
    assert np.linalg.norm(obj.mean_grad(x_ref)) <= 1e-12


def test_reference_minimizer_iteration_cap():
    obj = objectives.gen_random_quadratic(3, 4, L=50.0, mu=0.5, seed=12)
    with pytest.raises(RuntimeError, match="did not reach"):
        objectives.reference_minimizer(obj, tol=1e-14, max_iter=3)


def test_objective_validation_errors():
    with pytest.raises(ValueError):
        objectives.QuadraticObjectives(np.zeros((2, 3, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="L >= mu > 0"):
        objectives.QuadraticObjectives(
            np.tile(np.eye(2), (2, 1, 1)), np.zeros((2, 2)), L=1.0, mu=0.0
        )
    with pytest.raises(ValueError, match="labels"):
        objectives.LogisticObjectives(np.zeros((1, 2, 2)), np.zeros((1, 2)), 0.1)
    with pytest.raises(ValueError, match="kappa"):
        objectives.gen_synthetic_logistic(2, 3, 2, seed=0, kappa=1.0)
    with pytest.raises(ValueError, match="L > mu > 0"):
        objectives.gen_random_quadratic(2, 3, L=1.0, mu=1.0, seed=0)
