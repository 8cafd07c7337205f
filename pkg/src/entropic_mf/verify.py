"""Consolidated residual table for one or more model instances.

Each check is tagged ``identity`` (a mathematical claim about the model,
failure means exit code 2) or ``internal`` (two numerical routes to the same
object, failure means exit code 3). Identities whose hypothesis fails, such
as the reversible-only ones on a non-reversible chain, are ``n/a``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .control import (
    lambda_finite_horizon,
    lmgf_derivative_check,
    eigenvector_derivative_check,
    pf_eigenpairs,
    twisted_rates_batch,
)
from .errors import CrossCheckFailure
from .linear import (
    build_linear_model,
    default_omega_grid,
    frequency_response,
    positive_real_check,
    transfer_function,
    transmission_zeros,
)
from .markov import (
    UtilityFunction,
    is_reversible,
    poisson_solve,
    spectral_gap,
    stationary_distribution,
    support_graph,
)

DEFAULT_TOLS = {
    "stationary": 1e-10,
    "poisson": 1e-10,
    "b_cross": 1e-6,
    "b_reversible": 1e-9,
    "identity": 1e-8,
    "positive_real": 1e-10,
    "zeros": 1e-8,
    "lmgf_derivative": 1e-7,
    "eigvec_derivative": 1e-6,
    "transfer_forms": 1e-10,
    "eigen_limit": 1e-6,
    "row_sums": 1e-10,
    "twisted_reversible": 1e-9,
    "convexity": 1e-8,
}
LIMIT_ZETAS = (-1.0, -0.3, 0.3, 1.0)


@dataclass
class Check:
    instance: str
    name: str
    kind: str
    residual: float
    tol: float
    status: str
    note: str = ""


def _check(rows, inst, name, kind, residual, tol, *, applicable=True, note="", lower_bound=False):
    if not applicable:
        rows.append(Check(inst, name, kind, float(residual), tol, "n/a", note))
        return
    ok = residual >= -tol if lower_bound else residual <= tol
    rows.append(Check(inst, name, kind, float(residual), tol, "pass" if ok else "fail", note))


def eigen_limit_horizon(D, util, zeta: float, tol: float) -> float:
    """Horizon long enough for ``|Lambda*_T / T - Lambda| <= tol``.

    ``|Lambda*_T - T Lambda|`` is bounded by the oscillation of ``log v``, so
    ``T = osc / tol`` suffices; never shorter than ``200 / gap``.
    """
    _, v = pf_eigenpairs(D, util, [zeta])
    osc = float(np.log(v[0]).max() - np.log(v[0]).min())
    return max(200.0 / spectral_gap(D), 2.0 * osc / tol)


def check_instance(name: str, D, util, *, zeta_grid=None, tols=None, n_omega: int = 400) -> list[Check]:
    tols = {**DEFAULT_TOLS, **(tols or {})}
    R = np.asarray(D, dtype=float)
    rows: list[Check] = []
    st = stationary_distribution(R)
    pi = st.pi
    u = UtilityFunction.from_values(util, pi)
    scale = max(1.0, float(np.abs(R).max()))
    _check(rows, name, "stationary_residual", "internal", np.abs(pi @ R).max() / scale, tols["stationary"])

    reversible, violation = is_reversible(R, pi)
    rows.append(Check(name, "reversible", "info", violation, 0.0, "yes" if reversible else "no"))

    h0 = poisson_solve(R, u, pi)
    _check(rows, name, "poisson_residual", "internal", np.abs(R @ h0 + u.centered).max(), tols["poisson"])

    try:
        model = build_linear_model(R, u, pi)
    except CrossCheckFailure as exc:
        rows.append(Check(name, "b_cross_check", "internal", np.inf, tols["b_cross"], "fail", str(exc)))
        return rows
    _check(rows, name, "b_cross_check", "internal", np.abs(model.B_closed_form - model.B_finite_diff).max(), tols["b_cross"])
    na = "not applicable (non-reversible)"
    _check(rows, name, "b_reversible_shortcut", "identity", np.abs(model.B - 2 * pi * u.centered).max(),
           tols["b_reversible"], applicable=reversible, note="" if reversible else na)

    fr = frequency_response(model, default_omega_grid(R, n_omega, mirrored=False))
    pr = positive_real_check(fr, tols["positive_real"])
    _check(rows, name, "re_g_equals_psd", "identity", pr.max_re_gap, tols["identity"],
           applicable=reversible, note="" if reversible else na)
    _check(rows, name, "positive_real_min_re_g", "identity", pr.min_re_g, tols["positive_real"],
           applicable=reversible, note=f"argmin omega = {pr.argmin_omega:.6g}" if reversible else na, lower_bound=True)
    if np.linalg.norm(model.C) > 1e-12 and R.shape[0] > 1:
        zeros = transmission_zeros(model)
        zmax = float(zeros.real.max()) if zeros.size else -np.inf
        _check(rows, name, "zeros_max_real_part", "identity", zmax, tols["zeros"],
               applicable=reversible, note=f"{zeros.size} finite zeros" if reversible else na)

    rng = np.random.default_rng(0)
    ss = rng.uniform(0.1, 3.0, 20) * spectral_gap(R) + 1j * rng.normal(0, 3.0, 20) * spectral_gap(R)
    gaps = []
    for s in ss:
        a_form = model.C @ np.linalg.solve(s * np.eye(R.shape[0]) - model.A, model.B)
        gaps.append(abs(a_form - transfer_function(model, s)) / max(1.0, abs(a_form)))
    _check(rows, name, "transfer_function_forms", "internal", max(gaps), tols["transfer_forms"])

    fd, ybar = lmgf_derivative_check(R, u.values)
    _check(rows, name, "lmgf_derivative", "identity", abs(fd - ybar), tols["lmgf_derivative"])
    dv, h0v = eigenvector_derivative_check(R, u.values)
    _check(rows, name, "eigenvector_derivative", "identity", np.abs(dv - h0v).max(), tols["eigvec_derivative"])

    lams = pf_eigenpairs(R, u.values, LIMIT_ZETAS)[0]
    worst = 0.0
    for z, lam in zip(LIMIT_ZETAS, lams):
        T = eigen_limit_horizon(R, u.values, z, tols["eigen_limit"])
        worst = max(worst, abs(lambda_finite_horizon(R, u.values, z, T, 0) / T - lam))
    _check(rows, name, "eigen_limit", "identity", worst, tols["eigen_limit"])

    if zeta_grid is None:
        zeta_grid = np.linspace(-2.0, 2.0, 41)
    zeta_grid = np.asarray(zeta_grid, dtype=float)
    Dz = twisted_rates_batch(R, u.values, zeta_grid)
    _check(rows, name, "twisted_row_sums", "identity", np.abs(Dz.sum(axis=2)).max() / scale, tols["row_sums"])
    off = ~np.eye(R.shape[0], dtype=bool)
    neg = float(max(0.0, -Dz[:, off].min())) if R.shape[0] > 1 else 0.0
    _check(rows, name, "twisted_offdiag_nonnegative", "identity", neg, 0.0)
    support_ok = all(np.array_equal(support_graph(M), support_graph(R)) for M in Dz)
    _check(rows, name, "twisted_support_preserved", "identity", 0.0 if support_ok else 1.0, 0.0)
    if reversible:
        worst = 0.0
        for M in Dz:
            piz = stationary_distribution(M).pi
            F = piz[:, None] * M
            worst = max(worst, float(np.abs(F - F.T).max()))
        _check(rows, name, "twisted_reversible", "identity", worst, tols["twisted_reversible"])
    else:
        _check(rows, name, "twisted_reversible", "identity", np.nan, tols["twisted_reversible"], applicable=False, note=na)

    lam_grid = pf_eigenpairs(R, u.values, zeta_grid)[0]
    second = lam_grid[2:] - 2 * lam_grid[1:-1] + lam_grid[:-2] if zeta_grid.size >= 3 else np.zeros(1)
    _check(rows, name, "lambda_convexity_min_second_diff", "identity", float(second.min()), tols["convexity"], lower_bound=True)
    jensen = float((lam_grid - zeta_grid * u.baseline).min())
    _check(rows, name, "lambda_jensen_lower_bound", "identity", jensen, tols["convexity"], lower_bound=True)
    return rows


def verify_suite(instances, *, zeta_grid=None, tols=None) -> list[Check]:
    """Run :func:`check_instance` over ``(name, D, util)`` triples."""
    rows = []
    for name, D, util in instances:
        rows.extend(check_instance(name, D, util, zeta_grid=zeta_grid, tols=tols))
    return rows


def exit_code(rows: list[Check]) -> int:
    if any(r.status == "fail" and r.kind == "internal" for r in rows):
        return 3
    if any(r.status == "fail" and r.kind == "identity" for r in rows):
        return 2
    return 0


def as_dicts(rows: list[Check]) -> list[dict]:
    return [asdict(r) for r in rows]
