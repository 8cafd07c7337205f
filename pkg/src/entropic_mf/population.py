"""N-agent simulation of the broadcast-controlled population.

Every agent is an independent CTMC with the common time-varying generator
``D_{zeta_t}``. Paths are drawn by uniformisation: candidate events form a
Poisson stream of rate ``Theta`` dominating every exit rate, and at a
candidate at time ``t`` in state ``x`` the agent moves to ``x' != x`` with
probability ``D_{zeta_t}(x, x') / Theta``.

Each agent draws from its own Philox stream keyed by ``(agent index, seed)``,
so results do not depend on how agents are split across worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .control import TwistTable, twisted_rates, twisted_rates_batch
from .errors import GridMismatch, RateBoundExceeded
from .meanfield import MeanFieldTrajectory, default_dt, integrate_meanfield
from .signals import ControlSignal

THETA_MARGIN = 1.05
CHUNK = 4096


@dataclass(frozen=True)
class PopulationTrace:
    times: np.ndarray
    counts: np.ndarray
    empirical: np.ndarray
    agg_output: np.ndarray
    n_agents: int
    seed: int
    theta: float


def output_grid(t_end: float, output_dt: float) -> np.ndarray:
    n = int(round(t_end / output_dt))
    if n < 1 or abs(n * output_dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a whole multiple of output_dt")
    return output_dt * np.arange(n + 1)


def dominating_rate(D, util, signal: ControlSignal, t_end: float, n_grid: int = 201) -> float:
    """``1.05 * max |D_zeta(x, x)|`` over ``zeta`` in the signal's range on ``[0, t_end]``."""
    lo, hi = signal.value_range(t_end)
    zetas = np.unique(np.concatenate([np.linspace(lo, hi, n_grid), [lo, hi]]))
    rates = twisted_rates_batch(D, util, zetas)
    exits = -np.diagonal(rates, axis1=1, axis2=2)
    return THETA_MARGIN * float(exits.max())


def _agent_streams(first: int, count: int, seed: int, mu0_cdf: np.ndarray, theta: float, t_end: float, init_states):
    """Initial states, padded candidate times and acceptance uniforms for a block of agents."""
    states = np.empty(count, dtype=np.int64)
    times, accepts = [], []
    for k in range(count):
        gen = np.random.Generator(np.random.Philox(key=np.array([first + k, seed], dtype=np.uint64)))
        u0 = gen.random()
        states[k] = np.searchsorted(mu0_cdf, u0, side="right") if init_states is None else init_states[k]
        n_events = gen.poisson(theta * t_end)
        times.append(np.sort(gen.random(n_events)) * t_end)
        accepts.append(gen.random(n_events))
    kmax = max((t.size for t in times), default=0)
    T = np.full((count, kmax), np.inf)
    A = np.zeros((count, kmax))
    for k, (t, a) in enumerate(zip(times, accepts)):
        T[k, : t.size] = t
        A[k, : a.size] = a
    return np.minimum(states, mu0_cdf.size - 1), T, A


def _rows_at(R, util, signal: ControlSignal, fixed, table, t, states) -> np.ndarray:
    if fixed is not None:
        return fixed[states]
    zetas = np.asarray(signal(t), dtype=float)
    mats = table.batch(zetas) if table is not None else twisted_rates_batch(R, util, zetas)
    return mats[np.arange(states.size), states]


def _simulate_block(R, util, signal, fixed, table, theta, grid, t_end, first, count, seed, mu0_cdf, init_states):
    d = R.shape[0]
    n_out = grid.size
    states, T, A = _agent_streams(first, count, seed, mu0_cdf, theta, t_end, init_states)
    diff = np.zeros((n_out + 1, d), dtype=np.int64)
    seg_start = np.zeros(count)
    idx_all = np.arange(count)

    for k in range(T.shape[1]):
        active = np.flatnonzero(np.isfinite(T[:, k]))
        if active.size == 0:
            break
        t = T[active, k]
        x = states[active]
        rows = _rows_at(R, util, signal, fixed, table, t, x)
        exit_rate = -rows[np.arange(active.size), x]
        over = np.flatnonzero(exit_rate > theta)
        if over.size:
            j = over[0]
            raise RateBoundExceeded(float(t[j]), int(x[j]), float(exit_rate[j]), theta)
        off = rows.copy()
        off[np.arange(active.size), x] = 0.0
        cum = np.cumsum(off, axis=1)
        thresh = A[active, k] * theta
        jumps = cum[:, -1] > thresh
        if not jumps.any():
            continue
        who = active[jumps]
        target = np.argmax(cum[jumps] > thresh[jumps, None], axis=1)
        # close the occupancy segment [seg_start, t) of the old state
        lo = np.searchsorted(grid, seg_start[who], side="left")
        hi = np.searchsorted(grid, T[who, k], side="left")
        np.add.at(diff, (lo, states[who]), 1)
        np.add.at(diff, (hi, states[who]), -1)
        seg_start[who] = T[who, k]
        states[who] = target

    lo = np.searchsorted(grid, seg_start[idx_all], side="left")
    np.add.at(diff, (lo, states), 1)
    np.add.at(diff, (np.full(count, n_out), states), -1)
    return np.cumsum(diff, axis=0)[:n_out]


def proportional_assignment(mu0, n_agents: int) -> np.ndarray:
    """Largest-remainder rounding of ``n_agents * mu0`` into per-agent states."""
    mu0 = np.asarray(mu0, dtype=float)
    raw = n_agents * mu0
    counts = np.floor(raw).astype(np.int64)
    short = n_agents - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return np.repeat(np.arange(mu0.size), counts)


def simulate_population(
    D,
    util,
    signal: ControlSignal,
    n_agents: int,
    mu0,
    t_end: float,
    output_dt: float,
    seed: int,
    *,
    proportional: bool = False,
    threads: int = 1,
    table: TwistTable | None = None,
    chunk: int = CHUNK,
) -> PopulationTrace:
    if n_agents < 1:
        raise ValueError("need at least one agent")
    R = np.asarray(D, dtype=float)
    u = np.asarray(util, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.min() < 0 or abs(mu0.sum() - 1) > 1e-9:
        raise ValueError("mu0 must be a probability vector")
    grid = output_grid(t_end, output_dt)
    theta = dominating_rate(R, u, signal, t_end)
    fixed = twisted_rates(R, u, float(signal(0.0))) if signal.is_constant else None
    cdf = np.cumsum(mu0 / mu0.sum())
    init = proportional_assignment(mu0, n_agents) if proportional else None

    blocks = [(lo, min(chunk, n_agents - lo)) for lo in range(0, n_agents, chunk)]

    def run(block):
        lo, count = block
        init_block = None if init is None else init[lo : lo + count]
        return _simulate_block(R, u, signal, fixed, table, theta, grid, t_end, lo, count, seed, cdf, init_block)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    counts = np.zeros((grid.size, R.shape[0]), dtype=np.int64)
    for part in parts:
        counts += part
    empirical = counts / n_agents
    return PopulationTrace(grid, counts, empirical, empirical @ u, n_agents, seed, theta)


def meanfield_on_grid(D, util, signal, mu0, t_end: float, output_dt: float, dt: float | None = None, **kwargs) -> MeanFieldTrajectory:
    """Mean-field trajectory sampled on the same grid as :func:`simulate_population`."""
    grid = output_grid(t_end, output_dt)
    dt = dt if dt is not None else default_dt(D)
    every = max(1, int(np.ceil(output_dt / dt - 1e-9)))
    mf = integrate_meanfield(D, util, signal, mu0, t_end, output_dt / every, output_every=every, **kwargs)
    if mf.times.size != grid.size:
        raise GridMismatch("internal grid construction failed")
    return mf


def _dist_and_output(traj):
    if isinstance(traj, PopulationTrace):
        return traj.empirical, traj.agg_output
    return traj.mus, traj.outputs


def meanfield_gap(trace, mf) -> tuple[float, float]:
    """``(sup_t ||empirical - mu_t||_1, sup_t |agg_output - y_t|)``.

    Either argument may be a :class:`PopulationTrace` or a
    :class:`MeanFieldTrajectory`; the time grids must agree.
    """
    if trace.times.shape != mf.times.shape or not np.allclose(trace.times, mf.times, rtol=0, atol=1e-9):
        raise GridMismatch("population and mean-field time grids differ")
    p, y = _dist_and_output(trace)
    q, z = _dist_and_output(mf)
    return float(np.abs(p - q).sum(axis=1).max()), float(np.abs(y - z).max())
