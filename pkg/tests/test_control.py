import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, strategies as st

from entropic_mf.control import (
    TwistTable,
    eigenvector_derivative_check,
    lambda_finite_horizon,
    lmgf_derivative_check,
    pf_eigenpair,
    pf_eigenpairs,
    twisted_generator,
    twisted_rates,
    welfare_of_twisted,
)
from entropic_mf.instances import random_reversible
from entropic_mf.markov import (
    is_reversible,
    semigroup,
    stationary_distribution,
    support_graph,
    validate_generator,
)
from entropic_mf.population import simulate_population
from entropic_mf.signals import constant
from strategies import any_chains, reversible_chains

PHI = (1 + np.sqrt(5)) / 2
zetas = st.floats(-2.0, 2.0)


def power_iteration_lambda(D, util, zeta, iters=4000):
    # log spectral radius of the positive matrix exp(D + zeta diag(U))
    E = scipy.linalg.expm(np.asarray(D) + zeta * np.diag(util))
    x = np.ones(E.shape[0])
    for _ in range(iters):
        y = E @ x
        rho = y.max()
        x = y / rho
    return np.log(rho), x / x[0]


# Perron-Frobenius eigenpair


def test_pf_at_zero(two_state):
    lam, v = pf_eigenpair(*two_state, 0.0)
    assert lam == 0.0
    assert np.array_equal(v, np.ones(2))


def test_pf_two_state(two_state):
    lam, v = pf_eigenpair(*two_state, 1.0)
    assert lam == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-14)
    assert v == pytest.approx([1.0, PHI], abs=1e-13)


@given(any_chains(), zetas)
def test_pf_residual_and_power_oracle(chain, zeta):
    D, util = chain
    M = np.asarray(D) + zeta * np.diag(util)
    lam, v = pf_eigenpair(D, util, zeta)
    assert v[0] == 1.0 and v.min() > 0
    scale = np.abs(M).sum(axis=1).max() * np.abs(v).max()
    assert np.abs(M @ v - lam * v).max() <= 1e-10 * scale
    lam_o, v_o = power_iteration_lambda(D, util, zeta)
    assert lam == pytest.approx(lam_o, abs=1e-9)
    assert np.abs(v - v_o).max() <= 1e-6 * np.abs(v).max()


def test_pf_normalisation_is_exact():
    # eig returns a complex eigenvector here; v[0] used to come out as 1 - 1e-16
    D = validate_generator([[-2.42306026, 0.0, 2.42306026], [0.70481509, -0.70481509, 0.0],
                            [0.90744444, 1.18428892, -2.09173336]])
    _, v = pf_eigenpair(D, [0.63298311, -0.08266865, 0.55877161], 2.0)
    assert v[0] == 1.0


@given(any_chains())
def test_lambda_convex_and_bounded(chain):
    D, util = chain
    grid = np.linspace(-2, 2, 41)
    lam, _ = pf_eigenpairs(D, util, grid)
    assert np.all(lam[2:] - 2 * lam[1:-1] + lam[:-2] >= -1e-8)
    ybar = stationary_distribution(D).pi @ util
    assert np.all(lam >= grid * ybar - 1e-10)
    assert np.all(lam <= np.maximum(grid * util.min(), grid * util.max()) + 1e-10)


def test_constant_utility_lambda_linear():
    D = validate_generator([[-1, 0.5, 0.5], [2, -3, 1], [1, 1, -2]])
    lam, v = pf_eigenpairs(D, [1.5, 1.5, 1.5], [-1.0, 0.5, 2.0])
    assert lam == pytest.approx([-1.5, 0.75, 3.0], abs=1e-12)
    assert np.abs(v - 1).max() <= 1e-12


# twisted generator


def test_twist_at_zero_is_identity(two_state):
    D, util = two_state
    assert np.abs(twisted_rates(D, util, 0.0) - np.asarray(D)).max() <= 1e-12


def test_twist_two_state(two_state):
    fam = twisted_generator(*two_state, 1.0)
    expected = [[-PHI, PHI], [1 / PHI, -1 / PHI]]
    assert np.abs(np.asarray(fam.twisted) - expected).max() <= 1e-12


@pytest.mark.parametrize("zeta", [-1.0, -0.1, 0.1, 1.0])
def test_twist_preserves_reversibility(zeta):
    for seed in range(1, 6):
        R, _ = random_reversible(6, seed)
        util = np.random.default_rng(seed).normal(size=6)
        Dz = twisted_generator(R, util, zeta).twisted
        ok, violation = is_reversible(Dz, stationary_distribution(Dz).pi, tol=1e-9)
        assert ok, violation


@given(any_chains(), zetas)
def test_twist_is_generator_on_same_support(chain, zeta):
    D, util = chain
    Dz = np.asarray(twisted_generator(D, util, zeta).twisted)
    assert np.abs(Dz.sum(axis=1)).max() <= 1e-10 * max(1.0, np.abs(Dz).max())
    off = ~np.eye(D.dim, dtype=bool)
    assert Dz[off].min() >= 0
    assert np.array_equal(support_graph(Dz), support_graph(D))


@given(any_chains(), zetas)
def test_twisted_stationary_law_is_eigenvector_product(chain, zeta):
    # stationary law of D_zeta is proportional to (left PF vector) * (right PF vector)
    D, util = chain
    M = np.asarray(D) + zeta * np.diag(util)
    ev, W = scipy.linalg.eig(M.T)
    w = np.abs(W[:, np.argmax(ev.real)].real)
    _, v = pf_eigenpair(D, util, zeta)
    oracle = w * v / (w @ v)
    pi_z = stationary_distribution(twisted_rates(D, util, zeta)).pi
    assert np.abs(pi_z - oracle).max() <= 1e-8


@given(reversible_chains((2, 6)), st.floats(-1.5, 1.5))
def test_twist_table_interpolation(chain, zeta):
    D, util = chain
    table = TwistTable(D, util, -1.5, 1.5, spacing=1e-3)
    exact = twisted_rates(D, util, zeta)
    assert np.abs(table(zeta) - exact).max() <= 1e-5 * max(1.0, np.abs(exact).max())


def test_twist_table_range(two_state):
    table = TwistTable(*two_state, -1.0, 1.0)
    with pytest.raises(ValueError):
        table(1.5)


# finite-horizon log-MGF


def test_lmgf_trivial_cases(two_state):
    D, util = two_state
    for T in (0.5, 10.0, 1e4):
        assert lambda_finite_horizon(D, util, 0.0, T, 0) == pytest.approx(0.0, abs=1e-12)
        assert lambda_finite_horizon(D, [2.0, 2.0], 0.7, T, 1) == pytest.approx(1.4 * T, rel=1e-12)


@given(any_chains((2, 5)), st.floats(-1.5, 1.5), st.floats(0.5, 5.0))
def test_lmgf_matches_feynman_kac_ode(chain, zeta, T):
    D, util = chain
    M = np.asarray(D) + zeta * np.diag(util)
    sol = scipy.integrate.solve_ivp(lambda t, u: M @ u, (0, T), np.ones(D.dim), rtol=1e-12, atol=1e-14, method="DOP853")
    oracle = np.log(sol.y[:, -1])
    for x in range(D.dim):
        assert lambda_finite_horizon(D, util, zeta, T, x) == pytest.approx(oracle[x], abs=1e-8)


@given(any_chains((2, 6)), st.floats(-2.0, 2.0), st.sampled_from([1.0, 30.0, 500.0, 1e5]))
def test_lmgf_within_oscillation_of_log_v(chain, zeta, T):
    # v-weighted bounds give |Lambda*_T - T Lambda| <= max log v - min log v
    D, util = chain
    lam, v = pf_eigenpair(D, util, zeta)
    osc = np.log(v).max() - np.log(v).min()
    for x in range(D.dim):
        assert abs(lambda_finite_horizon(D, util, zeta, T, x) - T * lam) <= osc + 1e-9 * max(1.0, T)


def test_lmgf_scaling_branch_agrees_with_direct():
    D = validate_generator([[-2, 2], [1, -1]])
    util = [0.0, 1.0]
    # T * |zeta| * max|U| just below and just above the switch
    below = lambda_finite_horizon(D, util, 1.0, 199.0, 0)
    above = lambda_finite_horizon(D, util, 1.0, 201.0, 0)
    lam, _ = pf_eigenpair(D, util, 1.0)
    assert above - below == pytest.approx(2 * lam, abs=1e-10)


def test_lmgf_rate_converges_at_sufficient_horizon(two_state):
    D, util = two_state
    for zeta in (-1.0, -0.3, 0.3, 1.0):
        lam, v = pf_eigenpair(D, util, zeta)
        T = 2 * (np.log(v).max() - np.log(v).min()) / 1e-6
        assert abs(lambda_finite_horizon(D, util, zeta, T, 0) / T - lam) <= 1e-6


# welfare of the twisted law


def test_welfare_zero_twist(two_state):
    for T in (0.1, 5.0):
        assert welfare_of_twisted(*two_state, 0.0, T, 0) == pytest.approx(0.0, abs=1e-14)


def test_welfare_rate(two_state):
    D, util = two_state
    lam, _ = pf_eigenpair(D, util, 1.0)
    T = 1e7
    for x in (0, 1):
        for mode in ("twisted", "nominal"):
            assert abs(welfare_of_twisted(D, util, 1.0, T, x, expectation=mode) / T - lam) <= 1e-6


def test_welfare_monte_carlo(two_state):
    # E[log v(X_T)] under the twisted law from independent simulated paths
    D, util = two_state
    lam, v = pf_eigenpair(D, util, 1.0)
    n, T = 20000, 5.0
    trace = simulate_population(D, util, constant(1.0), n, [1.0, 0.0], T, T, seed=11)
    counts = trace.counts[-1]
    logv = np.log(v)
    mean = counts @ logv / n
    se = np.sqrt(counts @ (logv - mean) ** 2 / n / (n - 1))
    mc_welfare = T * lam - (mean - logv[0])
    assert abs(welfare_of_twisted(D, util, 1.0, T, 0) - mc_welfare) <= 3 * se


def test_welfare_bad_mode(two_state):
    with pytest.raises(ValueError):
        welfare_of_twisted(*two_state, 1.0, 1.0, 0, expectation="other")


# derivatives at zeta = 0


def test_lmgf_derivative_two_state(two_state):
    fd, ybar = lmgf_derivative_check(*two_state, 1e-5)
    assert ybar == pytest.approx(0.5, abs=1e-15)
    assert abs(fd - ybar) <= 1e-8


def test_lmgf_derivative_constant_utility():
    D = validate_generator([[-1, 1, 0], [0, -1, 1], [1, 0, -1]])
    fd, ybar = lmgf_derivative_check(D, [0.7, 0.7, 0.7])
    assert fd == pytest.approx(0.7, abs=1e-10)
    assert ybar == pytest.approx(0.7, abs=1e-15)


def test_lmgf_derivative_random_d6():
    R, _ = random_reversible(6, 1)
    util = np.random.default_rng([1, 6, 3]).normal(size=6)
    fd, ybar = lmgf_derivative_check(R, util, 1e-5)
    assert abs(fd - ybar) <= 1e-7


def test_eigenvector_derivative_examples(two_state):
    dv, h0 = eigenvector_derivative_check(*two_state, 1e-5)
    assert h0 == pytest.approx([0.0, 0.5], abs=1e-14)
    assert np.abs(dv - h0).max() <= 1e-7
    dv, h0 = eigenvector_derivative_check(validate_generator([[-1, 1], [2, -2]]), [3.0, 3.0])
    assert np.abs(dv).max() <= 1e-10 and np.abs(h0).max() <= 1e-15


def test_eigenvector_derivative_random_d8():
    R, _ = random_reversible(8, 1)
    util = np.random.default_rng([1, 8, 3]).normal(size=8)
    dv, h0 = eigenvector_derivative_check(R, util, 1e-5)
    assert np.abs(dv - h0).max() <= 1e-6


@given(any_chains((2, 10)))
def test_derivatives_property(chain):
    D, util = chain
    fd, ybar = lmgf_derivative_check(D, util)
    assert abs(fd - ybar) <= 1e-7
    dv, h0 = eigenvector_derivative_check(D, util)
    assert np.abs(dv - h0).max() <= 1e-6


def test_twisted_semigroup_from_nominal(two_state):
    # e^{t D_zeta} = diag(1/v) e^{t (M - Lambda)} diag(v)
    D, util = two_state
    lam, v = pf_eigenpair(D, util, 0.8)
    M = np.asarray(D) + 0.8 * np.diag(util)
    oracle = scipy.linalg.expm(2.0 * (M - lam * np.eye(2))) * v[None, :] / v[:, None]
    assert np.abs(semigroup(twisted_rates(D, util, 0.8), 2.0) - oracle).max() <= 1e-12
