import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bridgemde import (
    FisherInfo, InvalidArgument, LimitLawSpec, ModelSpec, NotPositiveDefinite, build_time_grid,
    builtin, fisher_info, lebesgue_measure, limit_objective, minimize_limit_objective,
    sample_limit_distribution, sample_zeta, sample_zeta_batch,
)
from bridgemde.limit_law import bridge_prox, soft_threshold


def quad_gram(dx, T=1.0):
    """Fisher information from a closed-form gradient by adaptive quadrature."""
    p = dx(np.array([0.5])).shape[0]
    out = np.empty((p, p))
    for j in range(p):
        for k in range(p):
            out[j, k] = integrate.quad(lambda t: dx(np.array([t]))[j, 0] * dx(np.array([t]))[k, 0],
                                       0, T)[0]
    return out


def zeta_variance_cm1():
    """Var(int_0^1 W_t t dt) = int int s t min(s, t) ds dt."""
    return integrate.dblquad(lambda s, t: s * t * min(s, t), 0, 1, 0, 1)[0]


def random_spd(rng, p):
    A = rng.normal(size=(p, p))
    return A @ A.T + 0.1 * np.eye(p)


@pytest.mark.parametrize("name, theta", [("CM1", [0.7]), ("SM1", [1.0, 0.0]), ("LM1", [0.0])])
def test_fisher_oracles(grid2000, name, theta):
    m = builtin(name)
    oracle = quad_gram(lambda t: m.closed_dx(np.array(theta), t))
    info = fisher_info(m.spec, theta, lebesgue_measure(grid2000), grid2000).matrix
    np.testing.assert_allclose(info, oracle, atol=1e-4)


def test_fisher_sm1_values(grid2000):
    info = fisher_info(builtin("SM1").spec, [1, 0], lebesgue_measure(grid2000), grid2000).matrix
    np.testing.assert_allclose(info, [[1 / 3, 1 / 8], [1 / 8, 1 / 20]], atol=1e-4)
    assert np.array_equal(info, info.T)


def test_fisher_not_positive_definite(grid500, mu500):
    spec = ModelSpec(2, lambda th, t, x: th[0], None, 0.0, 1.0, ((-1, 1), (-1, 1)))
    with pytest.raises(NotPositiveDefinite) as exc:
        fisher_info(spec, [0.2, 0.3], mu500, grid500)
    assert abs(exc.value.min_eigenvalue) < 1e-8


def test_fisher_info_validation():
    with pytest.raises(InvalidArgument):
        FisherInfo(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_zeta_variance_cm1(grid500, mu500):
    oracle = zeta_variance_cm1()
    assert oracle == pytest.approx(2 / 15)
    Z = sample_zeta_batch(builtin("CM1").spec, [0.7], mu500, grid500, np.random.default_rng(1), 20000)
    assert abs(Z[:, 0].var() / oracle - 1) < 0.05


def test_zeta_batch_matches_single_draws(grid500, mu500):
    spec = builtin("KM1").spec
    Z = sample_zeta_batch(spec, [1, 1], mu500, grid500, np.random.default_rng(2), 4)
    rng = np.random.default_rng(2)
    for row in Z:
        np.testing.assert_allclose(sample_zeta(spec, [1, 1], mu500, grid500, rng).value, row,
                                   rtol=0, atol=1e-12)


def test_zeta_deterministic(grid500, mu500):
    a = sample_zeta(builtin("SM1").spec, [1, 0], mu500, grid500, np.random.default_rng(3)).value
    b = sample_zeta(builtin("SM1").spec, [1, 0], mu500, grid500, np.random.default_rng(3)).value
    np.testing.assert_array_equal(a, b)


def test_zeta_mean_zero(any_builtin):
    spec = any_builtin.spec
    g = build_time_grid(spec.T, 200)
    theta = 0.3 * spec.upper
    Z = sample_zeta_batch(spec, theta, lebesgue_measure(g), g, np.random.default_rng(4), 20000)
    se = Z.std(axis=0, ddof=1) / np.sqrt(len(Z))
    assert np.all(np.abs(Z.mean(axis=0)) <= 3 * se)


def spec2(theta, gamma, lam0, I=None, **kw):
    return LimitLawSpec(np.array(theta, float), FisherInfo(2 * np.eye(2) if I is None else I),
                        gamma, lam0, **kw)


@pytest.mark.parametrize("gamma, theta", [(2, [1, -1]), (1, [0, 1]), (0.5, [0, 0])])
def test_objective_at_zero(gamma, theta):
    assert limit_objective([0, 0], [1, -1], spec2(theta, gamma, 3.0)) == 0.0


def test_objective_quadratic_example():
    assert limit_objective([0.5, -0.5], [1, -1], spec2([1, -1], 2, 0)) == pytest.approx(-1.0)


def test_nonconvex_without_null_coordinates_is_quadratic():
    s = spec2([1, -2], 0.5, 5.0)
    q = spec2([1, -2], 0.5, 0.0)
    u = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(limit_objective(u, [0.3, 0.1], s), limit_objective(u, [0.3, 0.1], q))


def test_gamma1_literal_switch():
    u, z = [0.4, -0.2], [0.1, 0.2]
    unified = limit_objective(u, z, spec2([2, 0], 1, 1.0))
    literal = limit_objective(u, z, spec2([2, 0], 1, 1.0, paper_literal_gamma1=True))
    base = limit_objective(u, z, spec2([2, 0], 1, 0.0))
    assert unified == pytest.approx(base + 0.4 + 0.2)
    assert literal == pytest.approx(base + 0.8 + 0.2)


def test_regime_labels():
    assert spec2([1, 1], 2, 1).regime == "gamma>1"
    assert spec2([1, 1], 1, 1).regime == "gamma=1"
    assert spec2([1, 1], 0.3, 1).regime == "gamma<1"


def test_minimizer_examples():
    np.testing.assert_allclose(minimize_limit_objective([1, -1], spec2([1, -1], 2, 0)), [0.5, -0.5])
    np.testing.assert_allclose(minimize_limit_objective([1, -1], spec2([1, -1], 2, 1)), [0.25, -0.25])
    one = LimitLawSpec([0.0], FisherInfo(np.eye(1)), 1, 1.0)
    assert minimize_limit_objective([1.0], one)[0] == pytest.approx(0.5, abs=1e-12)
    assert minimize_limit_objective([0.4], one)[0] == 0.0


def test_gamma_gt1_stationarity():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = rng.integers(1, 5)
        I = random_spd(rng, p)
        th = rng.normal(size=p) * (rng.random(p) < 0.7)
        s = LimitLawSpec(th, FisherInfo(I), rng.uniform(1.01, 3), rng.uniform(0, 3))
        z = rng.normal(size=p)
        u = minimize_limit_objective(z, s)
        resid = -2 * z + 2 * I @ u + s.lambda0 * s.linear_term()
        assert np.linalg.norm(resid) <= 1e-8


def test_gamma1_diagonal_soft_threshold():
    rng = np.random.default_rng(6)
    for _ in range(200):
        p = rng.integers(1, 5)
        d = rng.uniform(0.1, 3, p)
        th = rng.normal(size=p) * (rng.random(p) < 0.5)
        lam0 = rng.uniform(0, 3)
        z = rng.normal(size=p)
        u = minimize_limit_objective(z, LimitLawSpec(th, FisherInfo(np.diag(d)), 1, lam0))
        expect = np.where(th == 0, soft_threshold(z, d, lam0), (z - lam0 * np.sign(th) / 2) / d)
        np.testing.assert_allclose(u, expect, rtol=0, atol=1e-8)


def test_gamma1_full_matrix_kkt():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = 3
        I = random_spd(rng, p)
        th = np.array([0.0, 1.0, 0.0])
        s = LimitLawSpec(th, FisherInfo(I), 1, rng.uniform(0.1, 3))
        z = rng.normal(size=p)
        u = minimize_limit_objective(z, s)
        g = -2 * z + 2 * I @ u + s.lambda0 * s.linear_term()
        for j in range(p):
            if th[j] != 0:
                assert abs(g[j]) < 1e-8
            elif u[j] == 0:
                assert abs(g[j]) <= s.lambda0 + 1e-8
            else:
                assert abs(g[j] + s.lambda0 * np.sign(u[j])) < 1e-8


@pytest.mark.parametrize("gamma", [1.0, 1.5, 2.0, 3.0])
def test_convexity(gamma):
    rng = np.random.default_rng(8)
    s = LimitLawSpec([0.0, 0.7, -1.2], FisherInfo(random_spd(rng, 3)), gamma, 1.3)
    z = rng.normal(size=3)
    a, b = rng.normal(size=(2, 1000, 3)) * 3
    V = lambda u: limit_objective(u, z, s)
    assert np.all(V(0.5 * (a + b)) <= 0.5 * V(a) + 0.5 * V(b) + 1e-12)


@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.75])
def test_nonconvex_minimizer_beats_probes(gamma):
    rng = np.random.default_rng(9)
    for _ in range(10):
        s = LimitLawSpec([0.0, 1.0, 0.0], FisherInfo(random_spd(rng, 3)), gamma, rng.uniform(0.2, 2))
        z = rng.normal(size=3)
        u = minimize_limit_objective(z, s)
        probes = u + rng.normal(size=(10000, 3)) * rng.choice([0.01, 0.1, 1.0, 5.0], size=(10000, 1))
        probes[::7, [0, 2]] = 0.0
        assert limit_objective(u, z, s) <= limit_objective(probes, z, s).min() + 1e-12


@settings(max_examples=300, deadline=None)
@given(b=st.floats(-5, 5), a=st.floats(0.05, 5), lam=st.floats(0.01, 5), gamma=st.floats(0.1, 0.95))
def test_bridge_prox_against_dense_grid(b, a, lam, gamma):
    v = bridge_prox(np.array([b]), a, lam, gamma)[0]
    f = lambda x: a * x * x - 2 * b * x + lam * np.abs(x) ** gamma
    grid = np.linspace(-abs(b) / a - 1, abs(b) / a + 1, 20001)
    assert f(v) <= f(grid).min() + 1e-9
    if v == 0:
        assert f(0.0) <= f(grid).min() + 1e-9


def test_limit_law_cm1_unpenalized(grid500, mu500):
    spec = builtin("CM1").spec
    s = LimitLawSpec([0.7], fisher_info(spec, [0.7], mu500, grid500), 2.0, 0.0)
    u = sample_limit_distribution(spec, [0.7], mu500, grid500, s, 20000, np.random.default_rng(10))
    exact = zeta_variance_cm1() * 9
    assert abs(u[:, 0].var() / exact - 1) < 0.05


def test_limit_law_lasso_kills_null_coordinate(grid500, mu500):
    spec = builtin("CM1").spec
    info = fisher_info(spec, [0.0], mu500, grid500)
    mean_abs_zeta = np.sqrt(2 / np.pi * 2 / 15)
    s = LimitLawSpec([0.0], info, 1.0, 10 * mean_abs_zeta)
    u = sample_limit_distribution(spec, [0.0], mu500, grid500, s, 20000, np.random.default_rng(11))
    assert (u[:, 0] == 0).mean() >= 0.99


def test_limit_law_single_draw_reproducible(grid500, mu500):
    spec = builtin("SM1").spec
    s = LimitLawSpec([1, 0], fisher_info(spec, [1, 0], mu500, grid500), 0.5, 0.5)
    a = sample_limit_distribution(spec, [1, 0], mu500, grid500, s, 1, np.random.default_rng(12))
    b = sample_limit_distribution(spec, [1, 0], mu500, grid500, s, 1, np.random.default_rng(12))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("name, theta", [("CM1", [0.7]), ("SM1", [1.0, 0.0])])
def test_limit_covariance_sandwich(grid500, mu500, name, theta):
    spec = builtin(name).spec
    info = fisher_info(spec, theta, mu500, grid500)
    s = LimitLawSpec(theta, info, 2.0, 0.0)
    u = sample_limit_distribution(spec, theta, mu500, grid500, s, 20000, np.random.default_rng(13))
    Z = sample_zeta_batch(spec, theta, mu500, grid500, np.random.default_rng(14), 20000)
    Iinv = np.linalg.inv(info.matrix)
    target = Iinv @ np.atleast_2d(np.cov(Z.T)) @ Iinv
    emp = np.atleast_2d(np.cov(u.T))
    np.testing.assert_allclose(np.diag(emp), np.diag(target), rtol=0.1)
    if len(theta) > 1:
        corr = lambda c: c[0, 1] / np.sqrt(c[0, 0] * c[1, 1])
        assert abs(corr(emp) - corr(target)) < 0.05


def test_stub_zeta_gives_zero_draws(grid500, mu500):
    spec = builtin("SM1").spec
    s = LimitLawSpec([1, 0], fisher_info(spec, [1, 0], mu500, grid500), 2.0, 0.0)
    u = sample_limit_distribution(spec, [1, 0], mu500, grid500, s, 5, np.random.default_rng(0),
                                  zeta_sampler=lambda rng, n: np.zeros((n, 2)))
    assert np.all(u == 0)
