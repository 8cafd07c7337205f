"""Relative-entropy control of a nominal CTMC.

For a scalar weight ``zeta`` the KL-optimal infinite-horizon dynamics are
obtained from the Perron-Frobenius eigenpair of the tilted matrix
``M = D + zeta * diag(U)``::

    M v = Lambda v,        D_zeta = diag(v)^{-1} (M - Lambda I) diag(v)

``Lambda`` is the log-MGF growth rate of ``zeta * int U(X_t) dt`` and
``D_zeta`` is again a generator with the same transition graph as ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EigenSolveFailure
from .markov import (
    GeneratorMatrix,
    UtilityFunction,
    poisson_solve,
    semigroup,
    stationary_distribution,
    validate_generator,
)

IMAG_TOL = 1e-8
POSITIVITY_FLOOR = -1e-12
FD_STEP = 1e-5
# above this exponent the log-MGF is evaluated by renormalised squaring
OVERFLOW_GUARD = 200.0


def _values(util) -> np.ndarray:
    return np.asarray(util.values if isinstance(util, UtilityFunction) else util, dtype=float)


@dataclass(frozen=True)
class TwistedFamily:
    base: GeneratorMatrix
    util: np.ndarray
    zeta: float
    eigenvalue: float
    eigenvector: np.ndarray
    twisted: GeneratorMatrix


def _select_pf(ev: np.ndarray, V: np.ndarray, norm: np.ndarray):
    """Pick the max-real-part eigenpair along the last axis of a batch."""
    k = np.argmax(ev.real, axis=-1)
    idx = np.arange(ev.shape[0])
    lam = ev[idx, k]
    if np.any(np.abs(lam.imag) > IMAG_TOL * np.maximum(1.0, norm)):
        raise EigenSolveFailure(f"Perron-Frobenius eigenvalue is complex: {lam}")
    if ev.shape[-1] > 1:
        rest = ev.real.copy()
        rest[idx, k] = -np.inf
        gap = lam.real - rest.max(axis=-1)
        if np.any(gap < 1e-10 * norm):
            raise EigenSolveFailure("Perron-Frobenius eigenvalue is not simple")
    v = V[idx, :, k]
    if np.any(np.abs(v[:, 0]) == 0):
        raise EigenSolveFailure("eigenvector vanishes at the first state")
    # rotate to real, then rescale in real arithmetic so v[0] is exactly 1
    v = (v / v[:, :1]).real
    v = v / v[:, :1]
    if np.any(v < POSITIVITY_FLOOR):
        raise EigenSolveFailure(f"eigenvector is not positive: min {v.min()!r}")
    v = np.where(v <= 0, np.abs(POSITIVITY_FLOOR), v)
    return lam.real, v


def pf_eigenpairs(D, util, zetas) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`pf_eigenpair` over an array of ``zetas``.

    Returns ``(lambdas, vs)`` with shapes ``(n,)`` and ``(n, d)``.
    """
    R = np.asarray(D, dtype=float)
    u = _values(util)
    zetas = np.atleast_1d(np.asarray(zetas, dtype=float))
    M = R[None, :, :] + zetas[:, None, None] * np.eye(R.shape[0])[None] * u[None, None, :]
    norm = np.abs(M).sum(axis=-1).max(axis=-1)
    ev, V = np.linalg.eig(M)
    lam, v = _select_pf(ev, V, norm)
    zero = zetas == 0
    if np.any(zero):
        lam[zero] = 0.0
        v[zero] = 1.0
    return lam, v


def pf_eigenpair(D, util, zeta: float) -> tuple[float, np.ndarray]:
    """Perron-Frobenius eigenvalue of ``D + zeta diag(U)`` and its eigenvector.

    The eigenvector is strictly positive and normalised to ``v[0] = 1``.
    """
    lam, v = pf_eigenpairs(D, util, [zeta])
    return float(lam[0]), v[0]


def twisted_rates(D, util, zeta: float, eig=None) -> np.ndarray:
    """Raw matrix of ``D_zeta`` (no validation); ``eig`` may pass a precomputed pair."""
    R = np.asarray(D, dtype=float)
    if zeta == 0:
        return R.copy()
    lam, v = eig if eig is not None else pf_eigenpair(R, util, zeta)
    u = _values(util)
    out = R * (v[None, :] / v[:, None])
    out[np.diag_indices_from(out)] = np.diag(R) + zeta * u - lam
    return out


def twisted_rates_batch(D, util, zetas) -> np.ndarray:
    """Stack of ``D_zeta`` matrices, shape ``(n, d, d)``."""
    R = np.asarray(D, dtype=float)
    u = _values(util)
    zetas = np.atleast_1d(np.asarray(zetas, dtype=float))
    lam, v = pf_eigenpairs(R, util, zetas)
    out = R[None] * (v[:, None, :] / v[:, :, None])
    d = R.shape[0]
    diag = np.diag(R)[None, :] + zetas[:, None] * u[None, :] - lam[:, None]
    out[:, np.arange(d), np.arange(d)] = diag
    return out


def twisted_generator(D, util, zeta: float) -> TwistedFamily:
    base = D if isinstance(D, GeneratorMatrix) else validate_generator(D)
    lam, v = pf_eigenpair(base, util, zeta)
    R = twisted_rates(base, util, zeta, eig=(lam, v))
    scale = max(1.0, float(np.abs(R).max()))
    twisted = validate_generator(R, base.state_labels, row_tol=1e-10 * scale)
    return TwistedFamily(base, _values(util), float(zeta), lam, v, twisted)


class TwistTable:
    """Memoised ``zeta -> D_zeta`` by linear interpolation on a uniform grid.

    Opt-in speed path for long integrations; exact rebuilds are the default
    everywhere else.
    """

    def __init__(self, D, util, zeta_min: float, zeta_max: float, spacing: float = 1e-3):
        lo = np.floor(zeta_min / spacing) * spacing
        hi = np.ceil(zeta_max / spacing) * spacing
        n = int(round((hi - lo) / spacing)) + 1
        self.grid = lo + spacing * np.arange(max(n, 2))
        self.spacing = spacing
        self.rates = twisted_rates_batch(D, util, self.grid)

    def __call__(self, zeta: float) -> np.ndarray:
        return self.batch(np.array([zeta]))[0]

    def batch(self, zetas) -> np.ndarray:
        zetas = np.asarray(zetas, dtype=float)
        if zetas.size and (zetas.min() < self.grid[0] - 1e-12 or zetas.max() > self.grid[-1] + 1e-12):
            raise ValueError("zeta outside the tabulated range")
        pos = (zetas - self.grid[0]) / self.spacing
        k = np.clip(np.floor(pos).astype(int), 0, self.grid.size - 2)
        w = (pos - k)[:, None, None]
        return (1 - w) * self.rates[k] + w * self.rates[k + 1]


def lambda_finite_horizon(D, util, zeta: float, T: float, x: int) -> float:
    """``log E_x[exp(zeta int_0^T U(X_t) dt)]`` under the nominal chain.

    Feynman-Kac: the log of component ``x`` of ``exp(T M) 1``. Large
    exponents are handled by squaring ``exp(T M / 2^n)`` with per-step
    renormalisation, accumulating the log normalisers.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    R = np.asarray(D, dtype=float)
    u = _values(util)
    M = R + zeta * np.diag(u)
    if T * abs(zeta) * np.abs(u).max(initial=0.0) <= OVERFLOW_GUARD:
        return float(np.log(scipy.linalg.expm(T * M).sum(axis=1)[x]))

    norm = np.abs(M).sum(axis=1).max()
    n = max(0, int(np.ceil(np.log2(T * norm / 0.5))))
    E = scipy.linalg.expm((T / 2.0**n) * M)
    log_scale = 0.0
    for _ in range(n):
        c = E.max()
        E = E / c
        log_scale = 2.0 * (log_scale + np.log(c))
        E = E @ E
    c = E.max()
    return float(log_scale + np.log(c) + np.log((E / c).sum(axis=1)[x]))


def welfare_of_twisted(D, util, zeta: float, T: float, x: int, *, expectation: str = "twisted") -> float:
    """T-stage welfare of the time-homogeneous twisted law started from ``x``.

    ``T * Lambda - (E[log v(X_T)] - log v(x))``. The expectation is taken
    under the twisted dynamics by default; ``expectation="nominal"`` uses the
    nominal semigroup instead.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    lam, v = pf_eigenpair(D, util, zeta)
    if expectation == "twisted":
        P = semigroup(twisted_rates(D, util, zeta, eig=(lam, v)), T)
    elif expectation == "nominal":
        P = semigroup(D, T)
    else:
        raise ValueError(f"unknown expectation {expectation!r}")
    logv = np.log(v)
    return float(T * lam - (P[x] @ logv - logv[x]))


def lmgf_derivative_check(D, util, h: float = FD_STEP) -> tuple[float, float]:
    """Central difference of ``zeta -> Lambda_zeta`` at 0, and ``pi @ U``."""
    if h <= 0:
        raise ValueError("h must be positive")
    lam, _ = pf_eigenpairs(D, util, [h, -h])
    pi = stationary_distribution(D).pi
    return float((lam[0] - lam[1]) / (2 * h)), float(pi @ _values(util))


def eigenvector_derivative_check(D, util, h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Central difference of ``zeta -> v_zeta`` at 0, and Poisson's ``h0``."""
    if h <= 0:
        raise ValueError("h must be positive")
    _, v = pf_eigenpairs(D, util, [h, -h])
    return (v[0] - v[1]) / (2 * h), poisson_solve(D, _values(util))
