"""Linearisation of the mean-field model about ``zeta = 0``.

State ``Phi ~ mu - pi`` evolves as ``dPhi/dt = A Phi + B zeta``, output
``gamma = C Phi`` with ``A = D^T``, ``C = U - pi @ U`` and
``B_j = sum_i pi_i dD_zeta(i, j)/dzeta``. This module builds the triple two
ways, evaluates ``G(s) = C (sI - A)^{-1} B`` and its zeros, and checks the
frequency-domain identity ``Re G(j w) = PSD_Y(w)`` for reversible chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .control import FD_STEP, twisted_rates_batch
from .errors import CrossCheckFailure, DegenerateSystem, SearchExhausted
from .markov import (
    UtilityFunction,
    centered_resolvent_many,
    is_reversible,
    poisson_solve,
    psd_many,
    resolvent_solve,
    spectral_gap,
    stationary_distribution,
    time_reversal,
)

B_CROSS_TOL = 1e-5
INFINITE_ZERO = 1e12


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    baseline: float
    B_closed_form: np.ndarray
    B_finite_diff: np.ndarray
    generator: np.ndarray
    pi: np.ndarray
    util: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class FrequencyResponse:
    omegas: np.ndarray
    G: np.ndarray
    psd: np.ndarray
    re_gap: np.ndarray


@dataclass(frozen=True)
class PRReport:
    is_pr: bool
    min_re_g: float
    argmin_omega: float
    max_re_gap: float


def b_closed_form(D, pi, util) -> np.ndarray:
    """``B_i = -pi_i [(D* h0)_i + (D h0)_i]`` with ``h0`` from Poisson's equation."""
    R = np.asarray(D, dtype=float)
    pi = np.asarray(pi, dtype=float)
    h0 = poisson_solve(R, util, pi)
    Dstar = np.asarray(time_reversal(R, pi), dtype=float)
    return -pi * (Dstar @ h0 + R @ h0)


def b_finite_difference(D, pi, util, h: float = FD_STEP) -> np.ndarray:
    """``pi @ dD_zeta/dzeta`` at 0 by central differences of the twisted family."""
    Dp, Dm = twisted_rates_batch(D, util, [h, -h])
    return np.asarray(pi, dtype=float) @ ((Dp - Dm) / (2 * h))


def build_linear_model(D, util, pi=None, *, fd_step: float = FD_STEP, cross_tol: float = B_CROSS_TOL) -> LinearModel:
    R = np.asarray(D, dtype=float)
    if pi is None:
        pi = stationary_distribution(R).pi
    pi = np.asarray(pi, dtype=float)
    u = util if isinstance(util, UtilityFunction) else UtilityFunction.from_values(util, pi)
    Bcf = b_closed_form(R, pi, u)
    Bfd = b_finite_difference(R, pi, u.values, fd_step)
    diff = float(np.abs(Bcf - Bfd).max())
    if diff > cross_tol:
        raise CrossCheckFailure(f"closed-form and finite-difference B differ by {diff:.3e}")
    return LinearModel(
        A=R.T.copy(),
        B=Bcf,
        C=u.centered.copy(),
        baseline=u.baseline,
        B_closed_form=Bcf,
        B_finite_diff=Bfd,
        generator=R.copy(),
        pi=pi,
        util=u.values.copy(),
    )


def transfer_function(model: LinearModel, s: complex) -> complex:
    """``G(s) = B^T (sI - D)^{-1} C^T`` by one solve; finite at ``s = 0``."""
    x = resolvent_solve(model.generator, s, model.C.astype(complex), model.pi)
    return complex(model.B @ x)


def transfer_function_many(model: LinearModel, ss) -> np.ndarray:
    X = centered_resolvent_many(model.generator, ss, model.C, model.pi)
    return X @ model.B


def default_omega_grid(D, n: int = 400, *, mirrored: bool = True) -> np.ndarray:
    """``n`` log-spaced frequencies over ``[gap 1e-3, gap 1e3]``, optionally mirrored."""
    gap = spectral_gap(D)
    w = np.logspace(np.log10(gap * 1e-3), np.log10(gap * 1e3), n)
    return np.concatenate([-w[::-1], w]) if mirrored else w


def frequency_response(model: LinearModel, omegas=None) -> FrequencyResponse:
    if omegas is None:
        omegas = default_omega_grid(model.generator)
    omegas = np.asarray(omegas, dtype=float)
    G = transfer_function_many(model, 1j * omegas)
    S = psd_many(model.generator, model.pi, UtilityFunction(model.util, model.C, model.baseline), omegas)
    return FrequencyResponse(omegas, G, S, G.real - S)


def positive_real_check(fr: FrequencyResponse, tol: float = 1e-10) -> PRReport:
    k = int(np.argmin(fr.G.real))
    return PRReport(
        is_pr=bool(fr.G.real[k] >= -tol),
        min_re_g=float(fr.G.real[k]),
        argmin_omega=float(fr.omegas[k]),
        max_re_gap=float(np.abs(fr.re_gap).max()),
    )


def mass_conserving_realization(model: LinearModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Restrict ``(A, B, C)`` to the invariant subspace ``sum(Phi) = 0``.

    The stationary direction of ``A`` is both uncontrollable (``1^T B = 0``)
    and unobservable (``C pi^T = 0``); dropping it removes a spurious
    invariant zero at ``s = 0`` without changing ``G``.
    """
    d = model.dim
    Q = scipy.linalg.null_space(np.ones((1, d)))
    return Q.T @ model.A @ Q, Q.T @ model.B, model.C @ Q


def transmission_zeros(model: LinearModel) -> np.ndarray:
    """Finite zeros of ``G`` from the Rosenbrock pencil, sorted by real part."""
    if np.linalg.norm(model.B) < 1e-12 or np.linalg.norm(model.C) < 1e-12:
        raise DegenerateSystem("B or C is numerically zero")
    Ar, Br, Cr = mass_conserving_realization(model)
    n = Ar.shape[0]
    a = np.block([[Ar, Br[:, None]], [Cr[None, :], np.zeros((1, 1))]])
    b = np.zeros_like(a)
    b[:n, :n] = np.eye(n)
    alpha, beta = scipy.linalg.eig(a, b, homogeneous_eigvals=True)[0]
    finite = np.abs(beta) > np.abs(alpha) / INFINITE_ZERO
    zeros = alpha[finite] / beta[finite]
    zeros = zeros[np.abs(zeros) < INFINITE_ZERO]
    return zeros[np.lexsort((zeros.imag, zeros.real))]


@dataclass
class Candidate:
    params: dict
    generator: np.ndarray
    util: np.ndarray
    reversible: bool
    min_re_g: float
    argmin_omega: float
    zeros: np.ndarray

    @property
    def pr_violated(self) -> bool:
        return self.min_re_g < -1e-10

    @property
    def mp_violated(self) -> bool:
        return bool(np.any(self.zeros.real > 1e-8))


@dataclass
class SearchResult:
    best: Candidate | None
    pr_violations: list[Candidate] = field(default_factory=list)
    mp_violations: list[Candidate] = field(default_factory=list)
    evaluated: int = 0

    @property
    def exhausted(self) -> bool:
        """True when no candidate violated positive-realness or minimum phase."""
        return not self.pr_violations and not self.mp_violations


def evaluate_candidate(D, util, params=None, n_omega: int = 400) -> Candidate:
    R = np.asarray(D, dtype=float)
    model = build_linear_model(R, util)
    fr = frequency_response(model, default_omega_grid(R, n_omega, mirrored=False))
    rep = positive_real_check(fr)
    try:
        zeros = transmission_zeros(model)
    except DegenerateSystem:
        zeros = np.array([], dtype=complex)
    return Candidate(
        params=dict(params or {}),
        generator=R,
        util=np.asarray(util, dtype=float),
        reversible=is_reversible(R, model.pi)[0],
        min_re_g=rep.min_re_g,
        argmin_omega=rep.argmin_omega,
        zeros=zeros,
    )


def counterexample_search(d: int = 8, family: str = "cycle", budget: int = 500, seed: int = 7, *, n_omega: int = 400, keep: int = 10, strict: bool = False) -> SearchResult:
    """Random search for linearisations that are not positive real or not minimum phase.

    ``family`` is ``"cycle"`` (directed cycle plus chords, see
    :func:`entropic_mf.instances.cycle_chord_generator`), ``"random"``
    (generic non-reversible draws), ``"mixed"`` (alternating) or
    ``"reversible"`` (control family, where no violation can exist). The
    utility is ``U(x^i) = i``. At most ``keep`` violators of each kind are
    retained, most negative ``min Re G`` first.

    An empty search is a result, not an error, unless ``strict`` is set, in
    which case :class:`SearchExhausted` is raised with the result attached.
    """
    from . import instances

    rng = np.random.default_rng(seed)
    util = np.arange(1, d + 1, dtype=float)
    result = SearchResult(best=None)
    for k in range(budget):
        kind = family if family != "mixed" else ("cycle" if k % 2 == 0 else "random")
        sub_seed = int(rng.integers(2**32))
        if kind == "cycle":
            R, params = instances.random_cycle_chord(d, sub_seed)
        elif kind == "random":
            R, params = instances.random_nonreversible(d, sub_seed)
        elif kind == "reversible":
            R, params = instances.random_reversible(d, sub_seed)
        else:
            raise ValueError(f"unknown family {family!r}")
        cand = evaluate_candidate(R, util, {"family": kind, "seed": sub_seed, **params}, n_omega)
        result.evaluated += 1
        if result.best is None or cand.min_re_g < result.best.min_re_g:
            result.best = cand
        if cand.pr_violated:
            result.pr_violations.append(cand)
        if cand.mp_violated:
            result.mp_violations.append(cand)
    result.pr_violations = sorted(result.pr_violations, key=lambda c: c.min_re_g)[:keep]
    result.mp_violations = sorted(result.mp_violations, key=lambda c: -c.zeros.real.max())[:keep]
    if strict and result.exhausted:
        raise SearchExhausted(f"no violation in {result.evaluated} {family!r} candidates", result)
    return result
