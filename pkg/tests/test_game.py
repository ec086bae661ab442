import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maarp.game import (
    AffineConstraintSpec,
    ExtendedPoint,
    QuadraticGameSpec,
    agent_loss,
    agent_losses,
    average_loss,
    check_slater,
    check_strict_monotonicity,
    compute_bound_constants,
    constraint_eval,
    constraint_gradient_pullback,
    extended_operator,
    generate_random_game,
    uniform_constraints,
    utility_gradient,
)
from maarp.geometry import Regularizer
from maarp.numerics import RngStream
from maarp.oracle import finite_diff_gradient


def game(N, D, Q=None, C=None, c=None):
    Q = np.eye(D) if Q is None else Q
    C = np.zeros((D, D)) if C is None else C
    return QuadraticGameSpec(N, D, Q, C, c)


def random_joint(rng, N, D):
    return rng.dirichlet(np.ones(D), size=N)


def test_gradient_examples():
    spec = game(1, 2, C=np.eye(2))
    np.testing.assert_allclose(utility_gradient(spec, [[0.5, 0.5]]), [[-1.5, -1.5]])
    spec = game(3, 4)
    x = np.random.default_rng(0).uniform(size=(3, 4))
    np.testing.assert_allclose(utility_gradient(spec, x), -x)


def test_gradient_dimension_mismatch():
    with pytest.raises(ValueError):
        utility_gradient(game(2, 3), np.ones(5))


def test_loss_examples():
    assert agent_loss(game(1, 2), [[1.0, 0.0]], 0) == pytest.approx(0.5)
    z = QuadraticGameSpec(2, 2, np.zeros((2, 2)), np.zeros((2, 2)))
    assert average_loss(z, np.full((2, 2), 0.5)) == 0.0


def test_loss_two_agents_direct_arithmetic():
    spec = game(2, 2, C=2 * np.eye(2))
    x = np.full((2, 2), 0.5)
    # 1/2 <x_i, x_i> = 0.25; sigma = (1/2, 1/2), C sigma = (1, 1), <(1, 1), x_i> = 1
    expected = 0.5 * (0.5 * 0.5 + 0.5 * 0.5) + (2 * 0.5 * 0.5 + 2 * 0.5 * 0.5)
    assert expected == 1.25
    for i in range(2):
        assert agent_loss(spec, x, i) == pytest.approx(expected)
    np.testing.assert_allclose(agent_losses(spec, x), [expected, expected])


def test_loss_index_error():
    with pytest.raises(IndexError):
        agent_loss(game(2, 2), np.full((2, 2), 0.5), 2)


def test_gradient_is_minus_own_loss_derivative(rng):
    for k in range(10):
        N, D = 2 + k % 3, 2 + k % 4
        spec = generate_random_game(RngStream(k, 1), N, D)
        spec = QuadraticGameSpec(N, D, spec.Q, rng.normal(size=(D, D)), rng.normal(size=(N, D)))
        x = random_joint(rng, N, D)
        v = utility_gradient(spec, x)
        for i in range(N):
            def J(xi, i=i):
                z = x.copy()
                z[i] = xi
                return agent_loss(spec, z, i)
            np.testing.assert_allclose(finite_diff_gradient(J, x[i]), -v[i], atol=1e-6)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_gradient_is_affine(seed, a):
    rng = np.random.default_rng(seed)
    spec = QuadraticGameSpec(3, 4, np.eye(4) * 2, rng.normal(size=(4, 4)), rng.normal(size=(3, 4)))
    x, y = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    lhs = utility_gradient(spec, a * x + (1 - a) * y)
    rhs = a * utility_gradient(spec, x) + (1 - a) * utility_gradient(spec, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_operator_matrix_agrees_with_gradient(rng):
    spec = QuadraticGameSpec(3, 2, np.diag([1.0, 2.0]), rng.normal(size=(2, 2)), rng.normal(size=(3, 2)))
    x = rng.normal(size=(3, 2))
    G = spec.operator_matrix()
    np.testing.assert_allclose(utility_gradient(spec, x).ravel(), -(G @ x.ravel() + spec.c.ravel()))


def test_constraint_examples():
    cs = uniform_constraints(2, 5.0)
    np.testing.assert_allclose(constraint_eval(cs, np.full((2, 2), 0.5)), [-1, -1])
    cz = AffineConstraintSpec(np.zeros((3, 2)), np.zeros(3))
    np.testing.assert_allclose(constraint_eval(cz, np.full((4, 2), 0.5)), 0.0)
    cf = uniform_constraints(20, 10.5)
    np.testing.assert_allclose(constraint_eval(cf, np.full((50, 20), 1 / 20)), -0.5)


def test_constraint_affine_and_per_agent(rng):
    A = rng.normal(size=(3, 2, 4))
    cs = AffineConstraintSpec(A, rng.normal(size=2))
    x, y = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    np.testing.assert_allclose(constraint_eval(cs, 0.3 * x + 0.7 * y),
                               0.3 * constraint_eval(cs, x) + 0.7 * constraint_eval(cs, y))
    direct = sum(A[i] @ x[i] for i in range(3)) - cs.b
    np.testing.assert_allclose(constraint_eval(cs, x), direct)


def test_pullback_examples():
    cs = uniform_constraints(3, 1.0)
    x = np.full((2, 3), 1 / 3)
    np.testing.assert_allclose(constraint_gradient_pullback(cs, x, np.zeros(3)), 0.0)
    np.testing.assert_allclose(constraint_gradient_pullback(cs, x, [0, 1, 0]), [[0, 4, 0], [0, 4, 0]])


def test_pullback_is_gradient_of_priced_load(rng):
    A = rng.normal(size=(2, 3, 4))
    cs = AffineConstraintSpec(A, rng.normal(size=3))
    lam = rng.uniform(size=3)
    x = rng.normal(size=(2, 4))
    fd = finite_diff_gradient(lambda z: float(lam @ constraint_eval(cs, z)), x)
    np.testing.assert_allclose(constraint_gradient_pullback(cs, x, lam), fd, atol=1e-7)


def test_extended_operator_examples(rng):
    spec = generate_random_game(RngStream(3), 2, 3)
    cs = uniform_constraints(3, 2.0)
    x = random_joint(rng, 2, 3)
    out = extended_operator(spec, cs, ExtendedPoint(x, np.zeros(3)))
    np.testing.assert_allclose(out, np.concatenate([utility_gradient(spec, x).ravel(), constraint_eval(cs, x)]))

    zero = QuadraticGameSpec(2, 3, np.zeros((3, 3)), np.zeros((3, 3)))
    ci = AffineConstraintSpec(np.eye(3), np.zeros(3))
    lam = np.array([1.0, 2.0, 0.5])
    out = extended_operator(zero, ci, ExtendedPoint(x, lam))
    np.testing.assert_allclose(out, np.concatenate([-np.tile(lam, 2), x.sum(axis=0)]))


def test_extended_point_rejects_negative_prices():
    with pytest.raises(ValueError):
        ExtendedPoint(np.zeros((1, 2)), [-1.0])


def test_monotonicity_examples():
    assert check_strict_monotonicity(game(3, 2)) == pytest.approx(1.0)
    z = QuadraticGameSpec(3, 2, np.zeros((2, 2)), np.zeros((2, 2)))
    assert check_strict_monotonicity(z) == pytest.approx(0.0, abs=1e-14)
    for seed in range(5):
        assert check_strict_monotonicity(generate_random_game(RngStream(seed), 5, 4)) >= 1 - 1e-12


def test_monotonicity_matches_dense_eigensolve(rng):
    for _ in range(10):
        N, D = rng.integers(1, 5), rng.integers(1, 5)
        B = rng.normal(size=(D, D))
        spec = QuadraticGameSpec(N, D, B @ B.T, rng.normal(size=(D, D)))
        G = spec.operator_matrix()
        expected = np.linalg.eigvalsh(0.5 * (G + G.T)).min()
        assert check_strict_monotonicity(spec) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_strict_monotonicity_on_pairs(seed):
    spec = generate_random_game(RngStream(seed), 4, 3)
    assert check_strict_monotonicity(spec) > 0
    rng = np.random.default_rng(seed)
    for _ in range(50):
        x1, x2 = random_joint(rng, 4, 3), random_joint(rng, 4, 3)
        assert np.sum((x1 - x2) * (utility_gradient(spec, x1) - utility_gradient(spec, x2))) < 0


def test_slater_examples():
    spec = game(50, 20)
    rep = check_slater(spec, uniform_constraints(20, 10.5))
    assert rep.margin == pytest.approx(-0.5) and rep.satisfied
    rep = check_slater(game(4, 2), AffineConstraintSpec(np.eye(2), np.zeros(2)))
    assert rep.margin == pytest.approx(2.0) and not rep.satisfied
    rep = check_slater(game(4, 2), AffineConstraintSpec(np.eye(2), [1e6, 2e6]))
    assert rep.satisfied and rep.margin == pytest.approx(-1e6, rel=1e-5)


def test_bound_constants_examples():
    N = 6
    spec = generate_random_game(RngStream(0), N, 3)
    bc = compute_bound_constants(spec, uniform_constraints(3, 4.0), Regularizer("entropy", 3), samples=100)
    assert bc.C1 == pytest.approx(4 * np.sqrt(N))
    zero = QuadraticGameSpec(N, 3, np.zeros((3, 3)), np.zeros((3, 3)))
    assert compute_bound_constants(zero, uniform_constraints(3, 4.0), Regularizer("entropy", 3), samples=50).C2 == 0.0
    b = np.array([1.0, 2.0, 2.0])
    bc = compute_bound_constants(spec, AffineConstraintSpec(np.zeros((3, 3)), b), Regularizer("euclidean", 3), samples=50)
    assert bc.C1 == 0.0 and bc.C3 == pytest.approx(3.0)


def test_bound_constants_dominate_samples(rng):
    spec = generate_random_game(RngStream(4), 3, 3)
    cs = uniform_constraints(3, 3.5)
    reg = Regularizer("euclidean", 3)
    bc = compute_bound_constants(spec, cs, reg, samples=200)
    for _ in range(200):
        x = random_joint(rng, 3, 3)
        assert np.linalg.norm(utility_gradient(spec, x)) <= bc.C2 + 1e-12
        assert np.linalg.norm(constraint_eval(cs, x)) <= bc.C3 + 1e-12


def test_generate_random_game():
    a = generate_random_game(RngStream(11), 3, 5)
    b = generate_random_game(RngStream(11), 3, 5)
    assert np.array_equal(a.Q, b.Q)
    np.testing.assert_allclose(a.Q, a.Q.T)
    assert np.linalg.eigvalsh(a.Q).min() >= 1 - 1e-10
    np.testing.assert_array_equal(a.C, 4 * np.eye(5))
    np.testing.assert_array_equal(a.c, 0.0)
    one = generate_random_game(RngStream(2), 1, 1)
    q = RngStream(2).normal((1, 1))[0, 0]
    assert one.Q[0, 0] == pytest.approx(2 * abs(q) + 1)
    with pytest.raises(ValueError):
        generate_random_game(RngStream(0), 0, 2)


def test_specs_are_immutable():
    spec = game(2, 2)
    with pytest.raises(ValueError):
        spec.Q[0, 0] = 5.0
    with pytest.raises(ValueError):
        QuadraticGameSpec(2, 2, np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        AffineConstraintSpec(np.eye(2), np.zeros(3))
