"""Finite-state continuous-time Markov chains.

Validated generators, stationary laws, detailed balance, the transition
semigroup, resolvents and Poisson's equation, and the second-order statistics
of the stationary output process ``Y_t = U(X_t)``.

Functions take a :class:`GeneratorMatrix` (or anything ``np.asarray`` turns
into a rate matrix) and plain numpy vectors; nothing here holds state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import expm_multiply

from .errors import (
    DisconnectedDraw,
    GeneratorError,
    NegativeOffDiagonal,
    NotIrreducible,
    RowSumNonzero,
    SingularAtS,
    SingularSolve,
    UncenteredRhsAtZero,
)

ROW_SUM_TOL = 1e-12
STRUCTURAL_ZERO = 1e-14
CENTERING_TOL = 1e-10
# cond(sI - D) above this is treated as s being an eigenvalue of D
SINGULAR_COND = 1e13
DENSE_EXP_MAX_DIM = 64


@dataclass(frozen=True)
class GeneratorMatrix:
    """Rate matrix of an irreducible finite-state CTMC.

    Build through :func:`validate_generator`; the constructor does not check
    anything.
    """

    rates: np.ndarray
    state_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        if not self.state_labels:
            labels = tuple(f"x{i + 1}" for i in range(rates.shape[0]))
            object.__setattr__(self, "state_labels", labels)

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.rates if dtype is None else self.rates.astype(dtype)

    def __len__(self) -> int:
        return self.dim


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.pi if dtype is None else self.pi.astype(dtype)


@dataclass(frozen=True)
class UtilityFunction:
    """Utility values together with their pi-centred version.

    ``centered = values - baseline`` with ``baseline = pi @ values``; the
    centred vector is the output matrix ``C`` of the linearised model.
    """

    values: np.ndarray
    centered: np.ndarray
    baseline: float

    @classmethod
    def from_values(cls, values, pi) -> "UtilityFunction":
        values = np.asarray(values, dtype=float)
        pi = np.asarray(pi, dtype=float)
        baseline = float(pi @ values)
        centered = values - baseline
        # one refinement pass keeps pi @ centered at round-off
        correction = float(pi @ centered)
        return cls(values, centered - correction, baseline + correction)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _rates(D) -> np.ndarray:
    return np.asarray(D, dtype=float)


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(j)
    return seen


def support_graph(D) -> np.ndarray:
    """Boolean adjacency of transitions ``i -> j`` (i != j) with rate above 1e-14."""
    R = _rates(D)
    adj = R > STRUCTURAL_ZERO
    np.fill_diagonal(adj, False)
    return adj


def validate_generator(raw, labels: Sequence[str] | None = None, *, row_tol: float = ROW_SUM_TOL) -> GeneratorMatrix:
    R = np.array(raw, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise GeneratorError(f"rate matrix must be square, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise GeneratorError("rate matrix has non-finite entries")
    d = R.shape[0]
    if labels is not None and len(labels) != d:
        raise GeneratorError(f"{len(labels)} labels for {d} states")

    off = ~np.eye(d, dtype=bool)
    bad = np.argwhere((R < 0) & off)
    if bad.size:
        i, j = bad[0]
        raise NegativeOffDiagonal(int(i), int(j), float(R[i, j]))

    sums = R.sum(axis=1)
    worst = int(np.argmax(np.abs(sums)))
    if abs(sums[worst]) > row_tol:
        raise RowSumNonzero(worst, float(sums[worst]))

    adj = support_graph(R)
    forward = _reachable(adj, 0)
    backward = _reachable(adj.T, 0)
    if not (forward.all() and backward.all()):
        names = labels or [f"x{i + 1}" for i in range(d)]
        if not forward.all():
            missing = [names[i] for i in np.flatnonzero(~forward)]
            desc = f"states {missing} unreachable from {names[0]}"
        else:
            missing = [names[i] for i in np.flatnonzero(~backward)]
            desc = f"{names[0]} unreachable from states {missing}"
        raise NotIrreducible(desc)

    return GeneratorMatrix(R, tuple(labels) if labels is not None else ())


def stationary_distribution(D) -> StationaryDistribution:
    R = _rates(D)
    d = R.shape[0]
    lhs = np.vstack([R.T, np.ones((1, d))])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if not np.all(np.isfinite(pi)) or pi.min() <= 0:
        raise SingularSolve(f"stationary solve returned a non-positive vector {pi}")
    pi = pi / pi.sum()
    scale = max(1.0, float(np.abs(R).max()))
    residual = float(np.abs(pi @ R).max())
    if residual > 1e-10 * scale:
        raise SingularSolve(f"stationary residual {residual:.3e} too large")
    return StationaryDistribution(pi)


def flux_matrix(D, pi) -> np.ndarray:
    """Probability flux ``pi_i D(i, j)``; symmetric iff detailed balance holds."""
    return np.asarray(pi, dtype=float)[:, None] * _rates(D)


def is_reversible(D, pi, tol: float | None = None) -> tuple[bool, float]:
    """Check detailed balance; returns ``(holds, max violation)``.

    The default tolerance is 1e-9 times the largest flux ``pi_i |D(i, j)|``.
    """
    F = flux_matrix(D, pi)
    violation = float(np.abs(F - F.T).max())
    if tol is None:
        tol = 1e-9 * float(np.abs(F).max())
    return violation <= tol, violation


def random_reversible_generator(
    pi,
    seed: int,
    edge_density: float = 1.0,
    *,
    max_attempts: int = 100,
) -> GeneratorMatrix:
    """Random generator satisfying detailed balance with respect to ``pi``.

    Draws a symmetric weight matrix ``w`` with connected support, scales it
    so the stationary mean exit rate is 1, and sets ``D(i, j) = w(i, j) / pi(i)``.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.min() <= 0 or abs(pi.sum() - 1) > 1e-12:
        raise GeneratorError("pi must be a strictly positive probability vector")
    if not 0 < edge_density <= 1:
        raise GeneratorError("edge_density must lie in (0, 1]")
    d = pi.size
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(d, 1)
    for _ in range(max_attempts):
        w = np.zeros((d, d))
        present = rng.random(iu[0].size) < edge_density
        w[iu] = np.where(present, rng.uniform(0.2, 1.0, iu[0].size), 0.0)
        w = w + w.T
        if d == 1 or _reachable(w > 0, 0).all():
            break
    else:
        raise DisconnectedDraw(
            f"no connected support graph in {max_attempts} draws at density {edge_density}"
        )
    # unit mean exit rate in stationarity: sum_{i != j} pi_i D(i, j) = 1
    w = w / w.sum()
    R = w / pi[:, None]
    np.fill_diagonal(R, -R.sum(axis=1))
    return validate_generator(R)


def time_reversal(D, pi) -> GeneratorMatrix:
    R = _rates(D)
    pi = np.asarray(pi, dtype=float)
    Rstar = (pi[None, :] * R.T) / pi[:, None]
    # equals D(i, i) up to the stationary residual divided by pi_i
    np.fill_diagonal(Rstar, 0.0)
    np.fill_diagonal(Rstar, -Rstar.sum(axis=1))
    labels = getattr(D, "state_labels", None)
    return validate_generator(Rstar, labels, row_tol=1e-10)


def semigroup(D, t: float) -> np.ndarray:
    """Transition matrix ``P^t = exp(tD)``, tiny negative entries clamped to 0."""
    if t < 0:
        raise ValueError("semigroup needs t >= 0")
    P = scipy.linalg.expm(t * _rates(D))
    return np.clip(P, 0.0, None)


def apply_semigroup(D, t: float, f) -> np.ndarray:
    """``P^t f`` without forming ``P^t`` for large state spaces."""
    R = _rates(D)
    f = np.asarray(f, dtype=float)
    if R.shape[0] > DENSE_EXP_MAX_DIM:
        return expm_multiply(t * R, f)
    return semigroup(R, t) @ f


def _centered_mean(pi, rhs) -> complex:
    return complex(np.asarray(pi) @ rhs)


def resolvent_solve(D, s: complex, rhs, pi=None) -> np.ndarray:
    """Solve ``(sI - D) x = rhs``.

    At ``s = 0`` the right-hand side must be pi-centred and the solution
    returned is the one with ``pi @ x = 0``. Centred right-hand sides are
    solved through the deflated matrix ``sI - D + c 1 pi`` (same solution,
    well conditioned as ``s -> 0``); everything else by a direct solve.
    """
    R = _rates(D)
    d = R.shape[0]
    rhs = np.asarray(rhs)
    s = complex(s)
    dtype = complex if (s.imag != 0 or np.iscomplexobj(rhs)) else float
    if pi is None:
        pi = stationary_distribution(R).pi
    pi = np.asarray(pi, dtype=float)

    mean = _centered_mean(pi, rhs)
    scale = max(1.0, float(np.abs(rhs).max()) if rhs.size else 1.0)
    centered = abs(mean) <= CENTERING_TOL * scale
    if s == 0 and not centered:
        raise UncenteredRhsAtZero(abs(mean))

    M = (s if dtype is complex else s.real) * np.eye(d) - R
    if centered:
        # c keeps s + c away from zero so that pi @ x = 0 is forced
        c = float(np.abs(R).max()) + abs(s) + 1.0
        M = M + c * np.outer(np.ones(d), pi)
    if s != 0 and np.linalg.cond(M) > SINGULAR_COND:
        raise SingularAtS(s)
    return np.linalg.solve(M, rhs.astype(dtype))


def poisson_solve(D, util, pi=None) -> np.ndarray:
    """Solution ``h0`` of ``D h0 = -U_tilde`` with ``h0(x1) = 0``."""
    if pi is None:
        pi = stationary_distribution(D).pi
    u = _utility(util, pi)
    h = resolvent_solve(D, 0.0, u.centered, pi)
    return h - h[0]


def _utility(util, pi) -> UtilityFunction:
    if isinstance(util, UtilityFunction):
        return util
    return UtilityFunction.from_values(util, pi)


def autocovariance(D, pi, util, t: float) -> float:
    """Stationary autocovariance ``E_pi[U~(X_0) U~(X_t)]``."""
    pi = np.asarray(pi, dtype=float)
    u = _utility(util, pi)
    return float((pi * u.centered) @ apply_semigroup(D, t, u.centered))


def psd(D, pi, util, omega: float) -> float:
    """Power spectral density of ``Y_t = U(X_t)`` in stationarity at ``omega``.

    Two-sided Fourier transform of the autocovariance, evaluated as
    ``2 Re <pi U~, (j omega - D)^{-1} U~>``.
    """
    pi = np.asarray(pi, dtype=float)
    u = _utility(util, pi)
    x = resolvent_solve(D, 1j * omega, u.centered.astype(complex), pi)
    return float(2.0 * np.real((pi * u.centered) @ x))


def spectral_gap(D) -> float:
    """``|Re|`` of the non-zero eigenvalue of D closest to the imaginary axis."""
    ev = np.linalg.eigvals(_rates(D))
    re = np.sort(ev.real)[::-1]
    # the largest real part is the zero eigenvalue
    return float(abs(re[1])) if re.size > 1 else 0.0


def centered_resolvent_many(D, ss, rhs, pi) -> np.ndarray:
    """``(s_k I - D)^{-1} rhs`` for a batch of ``s_k`` and one pi-centred ``rhs``.

    Same deflated solve as :func:`resolvent_solve`, stacked; returns an
    ``(n, d)`` complex array. Each row depends only on its own ``s_k``.
    """
    R = _rates(D)
    d = R.shape[0]
    pi = np.asarray(pi, dtype=float)
    rhs = np.asarray(rhs, dtype=complex)
    ss = np.atleast_1d(np.asarray(ss, dtype=complex))
    scale = max(1.0, float(np.abs(rhs).max()))
    mean = pi @ rhs
    if abs(mean) > CENTERING_TOL * scale:
        raise UncenteredRhsAtZero(abs(mean))
    c = float(np.abs(R).max()) + np.abs(ss) + 1.0
    M = ss[:, None, None] * np.eye(d)[None] - R[None] + c[:, None, None] * np.outer(np.ones(d), pi)[None]
    return np.linalg.solve(M, np.broadcast_to(rhs, (ss.size, d))[..., None])[..., 0]


def psd_many(D, pi, util, omegas) -> np.ndarray:
    """:func:`psd` over an array of frequencies."""
    pi = np.asarray(pi, dtype=float)
    u = _utility(util, pi)
    X = centered_resolvent_many(D, 1j * np.asarray(omegas, dtype=float), u.centered, pi)
    return 2.0 * np.real(X @ (pi * u.centered))
