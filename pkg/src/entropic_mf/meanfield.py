"""Mean-field ODE ``dmu/dt = mu D_{zeta_t}`` and its linearisation.

Both systems are integrated with fixed-step classical RK4. The nonlinear
integrator rebuilds the twisted generator at every stage time (or reads it
from an optional :class:`~entropic_mf.control.TwistTable`), in vectorised
batches over consecutive steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import TwistTable, twisted_rates, twisted_rates_batch
from .errors import StepRejected
from .linear import LinearModel, build_linear_model
from .markov import spectral_gap, stationary_distribution
from .signals import ControlSignal, sinusoid

NEGATIVE_FLOOR = -1e-10
MAX_DRIFT = 1e-6
STAGE_CHUNK = 2048


@dataclass(frozen=True)
class MeanFieldTrajectory:
    times: np.ndarray
    mus: np.ndarray
    outputs: np.ndarray
    zetas: np.ndarray


@dataclass(frozen=True)
class LinearTrajectory:
    times: np.ndarray
    phis: np.ndarray
    gammas: np.ndarray
    zetas: np.ndarray


def default_dt(D) -> float:
    return 0.01 / spectral_gap(D)


def _step_grid(t_end: float, dt: float) -> tuple[int, float]:
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    n = max(1, int(round(t_end / dt)))
    return n, t_end / n


def _stage_rates(D, util, signal: ControlSignal, table: TwistTable | None, h: float, n: int, chunk: int = STAGE_CHUNK):
    """Yield ``(k, D(t_k), D(t_k + h/2))`` for ``k = 0..n``; the twisted rates
    are built in vectorised batches of ``chunk`` steps."""
    R = np.asarray(D, dtype=float)
    for k0 in range(0, n + 1, chunk):
        k1 = min(n, k0 + chunk - 1)
        ts = h * np.arange(2 * k0, 2 * k1 + 2) / 2
        zs = np.asarray(signal(ts), dtype=float)
        mats = table.batch(zs) if table is not None else twisted_rates_batch(R, util, zs)
        for k in range(k0, k1 + 1):
            yield k, mats[2 * (k - k0)], mats[2 * (k - k0) + 1]


def _rk4_propagator(Q: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for ``dmu/dt = mu Q`` with ``Q`` frozen:
    ``I + hQ + (hQ)^2/2 + (hQ)^3/6 + (hQ)^4/24``."""
    hQ = h * Q
    out = np.eye(Q.shape[0])
    term = np.eye(Q.shape[0])
    for j in range(1, 5):
        term = term @ hQ / j
        out = out + term
    return out


def _rk4_step(h: float):
    def advance(mu, stage):
        D0, Dh, D1 = stage
        k1 = mu @ D0
        k2 = (mu + h / 2 * k1) @ Dh
        k3 = (mu + h / 2 * k2) @ Dh
        k4 = (mu + h * k3) @ D1
        return mu + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    return advance


def _stage_triples(stages):
    """``(k, (D(t_{k-1}), D(t_{k-1} + h/2), D(t_k)))`` for ``k = 1..n``."""
    _, D0, Dh = next(stages)
    for k, D1, Dh_next in stages:
        yield k, (D0, Dh, D1)
        D0, Dh = D1, Dh_next


def integrate_meanfield(
    D,
    util,
    signal: ControlSignal,
    mu0,
    t_end: float,
    dt: float | None = None,
    *,
    output_every: int = 1,
    table: TwistTable | None = None,
) -> MeanFieldTrajectory:
    """RK4 for the row-vector ODE ``dmu/dt = mu D_{zeta_t}``.

    ``dt`` is adjusted down so that a whole number of steps covers
    ``[0, t_end]``; states are recorded every ``output_every`` steps. After
    each step negatives down to -1e-10 are clamped and ``mu`` is renormalised.
    """
    R = np.asarray(D, dtype=float)
    u = np.asarray(util, dtype=float)
    mu = np.array(mu0, dtype=float)
    if mu.min() < 0 or abs(mu.sum() - 1) > 1e-9:
        raise ValueError("mu0 must be a probability vector")
    n, h = _step_grid(t_end, dt if dt is not None else default_dt(R))
    if signal.is_constant:
        step = _rk4_propagator(twisted_rates(R, u, float(signal(0.0))), h)
        advance = lambda mu, stage: mu @ step
        stages = ((k, None) for k in range(1, n + 1))
    else:
        advance = _rk4_step(h)
        stages = _stage_triples(_stage_rates(R, u, signal, table, h, n))
    times, mus = [0.0], [mu.copy()]
    for k, stage in stages:
        mu = advance(mu, stage)
        if mu.min() < NEGATIVE_FLOOR:
            raise StepRejected(k * h, f"negative mass {mu.min():.3e}; reduce dt")
        mu = np.clip(mu, 0.0, None)
        total = mu.sum()
        if abs(total - 1.0) > MAX_DRIFT:
            raise StepRejected(k * h, f"mass drift {abs(total - 1.0):.3e}; reduce dt")
        mu = mu / total
        if k % output_every == 0:
            times.append(k * h)
            mus.append(mu)
    times = np.array(times)
    mus = np.array(mus)
    return MeanFieldTrajectory(times, mus, mus @ u, np.asarray(signal(times), dtype=float))


def integrate_linearized(
    model: LinearModel,
    signal: ControlSignal,
    phi0=None,
    t_end: float = 1.0,
    dt: float | None = None,
    *,
    output_every: int = 1,
) -> LinearTrajectory:
    """RK4 for ``dPhi/dt = A Phi + B zeta_t``, ``gamma = C Phi``."""
    A, B = model.A, model.B
    phi = np.zeros(model.dim) if phi0 is None else np.array(phi0, dtype=float)
    n, h = _step_grid(t_end, dt if dt is not None else default_dt(model.generator))
    times, phis = [0.0], [phi.copy()]
    t = 0.0
    z0 = float(signal(0.0))
    for k in range(1, n + 1):
        zh = float(signal(t + h / 2))
        z1 = float(signal(t + h))
        k1 = A @ phi + B * z0
        k2 = A @ (phi + h / 2 * k1) + B * zh
        k3 = A @ (phi + h / 2 * k2) + B * zh
        k4 = A @ (phi + h * k3) + B * z1
        phi = phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = k * h
        z0 = z1
        if k % output_every == 0:
            times.append(t)
            phis.append(phi.copy())
    times = np.array(times)
    phis = np.array(phis)
    return LinearTrajectory(times, phis, phis @ model.C, np.asarray(signal(times), dtype=float))


def linearization_error(
    D,
    util,
    amplitude: float,
    omega: float,
    t_end: float,
    dt: float | None = None,
    *,
    model: LinearModel | None = None,
) -> float:
    """``sup_t |(y_t - ybar) - gamma_t|`` for ``zeta_t = amplitude sin(omega t)``.

    Nonlinear run starts at ``pi``, linear run at ``Phi = 0``.
    """
    R = np.asarray(D, dtype=float)
    pi = stationary_distribution(R).pi
    if model is None:
        model = build_linear_model(R, util, pi)
    sig = sinusoid(amplitude, omega)
    mf = integrate_meanfield(R, util, sig, pi, t_end, dt)
    lin = integrate_linearized(model, sig, None, t_end, dt)
    return float(np.abs((mf.outputs - model.baseline) - lin.gammas).max())


def sinusoidal_fit(times, values, omega: float, t_start: float = 0.0) -> complex:
    """Least-squares complex amplitude ``a + jb`` of ``a sin(wt) + b cos(wt) + c``.

    For a steady-state response to ``eps sin(wt)`` through ``G`` this returns
    ``eps G(jw)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = times >= t_start
    t = times[keep]
    basis = np.column_stack([np.sin(omega * t), np.cos(omega * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(basis, values[keep], rcond=None)
    return complex(coef[0], coef[1])
