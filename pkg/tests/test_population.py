import numpy as np
import pytest
import scipy.stats

from entropic_mf.control import TwistTable, twisted_rates
from entropic_mf.errors import GridMismatch, RateBoundExceeded
from entropic_mf.instances import random_reversible
from entropic_mf.markov import semigroup, spectral_gap, stationary_distribution, validate_generator
from entropic_mf.population import (
    _simulate_block,
    dominating_rate,
    meanfield_gap,
    meanfield_on_grid,
    output_grid,
    proportional_assignment,
    simulate_population,
)
from entropic_mf.signals import constant, sinusoid


def test_output_grid():
    assert output_grid(1.0, 0.25) == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        output_grid(1.0, 0.3)


def test_dominating_rate_two_state(two_state):
    D, util = two_state
    # exit rates of D_zeta are -(D_ii + zeta U_i - Lambda)
    theta = dominating_rate(D, util, sinusoid(1.0, 1.0), 10.0)
    worst = max(-np.diag(twisted_rates(D, util, z)).min() for z in np.linspace(-1, 1, 2001))
    assert theta == pytest.approx(1.05 * worst, rel=1e-9)
    # state "on" leaves at rate 1 / phi at zeta = 1, state "off" at phi
    assert theta == pytest.approx(1.05 * (1 + np.sqrt(5)) / 2)


def test_rate_bound_exceeded(two_state):
    D, util = two_state
    R = np.asarray(D)
    grid = output_grid(1.0, 0.5)
    with pytest.raises(RateBoundExceeded):
        _simulate_block(R, util, constant(0.0), R, None, 0.5, grid, 1.0, 0, 64, 1, np.array([0.5, 1.0]), None)


def test_proportional_assignment():
    states = proportional_assignment([0.25, 0.5, 0.25], 7)
    assert np.bincount(states, minlength=3).tolist() == [2, 3, 2]
    assert proportional_assignment([1 / 3] * 3, 10).size == 10


def test_constant_control_law_chi_square():
    # occupation at T of agents started at x1 follows row 1 of exp(T D_zeta)
    R, _ = random_reversible(4, 5)
    util = np.array([0.0, 1.0, -0.5, 2.0])
    mu0 = np.array([1.0, 0.0, 0.0, 0.0])
    n, T = 20000, 1.5
    tr = simulate_population(R, util, constant(0.7), n, mu0, T, T, seed=3)
    expected = n * semigroup(twisted_rates(R, util, 0.7), T)[0]
    assert tr.counts[-1].sum() == n
    assert scipy.stats.chisquare(tr.counts[-1], expected).pvalue > 1e-3


def test_time_varying_law_matches_meanfield():
    R, _ = random_reversible(3, 8)
    util = np.array([0.0, 1.0, 3.0])
    sig = sinusoid(0.8, 2.0)
    mu0 = stationary_distribution(R).pi
    n = 50000
    tr = simulate_population(R, util, sig, n, mu0, 4.0, 0.5, seed=21)
    mf = meanfield_on_grid(R, util, sig, mu0, 4.0, 0.5)
    sd = np.sqrt(mf.mus * (1 - mf.mus) / n)
    assert np.all(np.abs(tr.empirical - mf.mus) <= 5 * sd + 1e-12)


def test_single_agent_ergodic_average(two_state):
    D, util = two_state
    t_end = 2000.0
    tr = simulate_population(D, util, constant(0.0), 1, [1.0, 0.0], t_end, 0.05, seed=4)
    occupation = tr.empirical.mean(axis=0)
    assert np.abs(occupation - 0.5).max() <= 3 / np.sqrt(t_end * spectral_gap(D))


def test_stationary_population_fluctuations():
    R, _ = random_reversible(4, 2)
    util = np.arange(4.0)
    pi = stationary_distribution(R).pi
    n = 50000
    tr = simulate_population(R, util, constant(0.0), n, pi, 5.0, 0.1, seed=9)
    sup = np.abs(tr.empirical - pi).sum(axis=1).max()
    assert sup <= 5 * np.sqrt(4 / n)


def test_thread_count_does_not_change_result(two_state):
    D, util = two_state
    kw = dict(signal=sinusoid(0.5, 1.3), n_agents=5000, mu0=[0.3, 0.7], t_end=4.0, output_dt=0.1, seed=17, chunk=512)
    a = simulate_population(D, util, threads=1, **kw)
    b = simulate_population(D, util, threads=8, **kw)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.agg_output, b.agg_output)


def test_agent_streams_exchangeable(two_state):
    # splitting agents into different blocks gives the same paths
    D, util = two_state
    kw = dict(signal=sinusoid(0.5, 1.3), n_agents=3000, mu0=[0.3, 0.7], t_end=3.0, output_dt=0.1, seed=5)
    a = simulate_population(D, util, chunk=4096, **kw)
    b = simulate_population(D, util, chunk=97, **kw)
    assert np.array_equal(a.counts, b.counts)


def test_seed_changes_result(two_state):
    D, util = two_state
    kw = dict(signal=constant(0.0), n_agents=500, mu0=[0.5, 0.5], t_end=2.0, output_dt=0.5)
    assert not np.array_equal(simulate_population(D, util, seed=1, **kw).counts,
                              simulate_population(D, util, seed=2, **kw).counts)


def test_proportional_start(two_state):
    D, util = two_state
    tr = simulate_population(D, util, constant(0.0), 1000, [0.25, 0.75], 1.0, 0.5, seed=0, proportional=True)
    assert tr.counts[0].tolist() == [250, 750]


def test_table_option(two_state):
    D, util = two_state
    table = TwistTable(D, util, -1.0, 1.0)
    tr = simulate_population(D, util, sinusoid(1.0, 1.0), 2000, [0.5, 0.5], 2.0, 0.5, seed=3, table=table)
    assert tr.counts.sum(axis=1).tolist() == [2000] * 5


def test_meanfield_gap_identity_and_mismatch(two_state):
    D, util = two_state
    mf = meanfield_on_grid(D, util, sinusoid(0.2, 1.0), [0.5, 0.5], 2.0, 0.1)
    assert meanfield_gap(mf, mf) == (0.0, 0.0)
    other = meanfield_on_grid(D, util, sinusoid(0.2, 1.0), [0.5, 0.5], 2.0, 0.2)
    with pytest.raises(GridMismatch):
        meanfield_gap(mf, other)


def _output_gaps(n, seeds, t_end=5.0):
    D = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
    util = np.array([0.0, 1.0])
    sig = sinusoid(0.2, 1.0)
    mf = meanfield_on_grid(D, util, sig, [0.5, 0.5], t_end, 0.05)
    return np.array([meanfield_gap(simulate_population(D, util, sig, n, [0.5, 0.5], t_end, 0.05, s), mf)[1] for s in seeds])


@pytest.mark.slow
def test_large_population_coverage():
    n = 100_000
    gaps = _output_gaps(n, range(20))
    sigma = 0.5  # stationary std of U(X) on the symmetric chain
    assert np.mean(gaps <= 5 * sigma / np.sqrt(n)) >= 0.95


def test_scaling_hundred_vs_ten_thousand():
    small = _output_gaps(100, range(10)).mean()
    large = _output_gaps(10_000, range(10)).mean()
    assert 5 <= small / large <= 15
