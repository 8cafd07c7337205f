"""Command-line entry point.

Exit codes: 0 all checks pass, 2 a model identity failed (for example the
reversible positive-real property), 3 an internal cross-check failed,
4 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config
from .control import pf_eigenpairs
from .errors import DegenerateSystem, EntropicMFError, InputError, InternalCheckError
from .instances import reversible_suite
from .linear import (
    build_linear_model,
    counterexample_search,
    default_omega_grid,
    frequency_response,
    positive_real_check,
    transmission_zeros,
)
from .markov import is_reversible, stationary_distribution
from .meanfield import integrate_linearized, integrate_meanfield
from .population import simulate_population
from .signals import parse_signal
from .verify import DEFAULT_TOLS, as_dicts, exit_code, verify_suite

OUT_ENV = "ENTROPIC_MF_OUT"
EXIT_OK, EXIT_IDENTITY, EXIT_INTERNAL, EXIT_INPUT = 0, 2, 3, 4
SIGNAL_HELP = "const:c | sin:amp:omega[:phase[:offset]] | pwc:b1,..:v0,.. | sampled:t0,..:v0,.."


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:n`` -> ``n`` evenly spaced points."""
    try:
        start, stop, n = text.split(":")
        return np.linspace(float(start), float(stop), int(n))
    except ValueError:
        raise InputError(f"grid must look like start:stop:n, got {text!r}") from None


def parse_tols(items) -> dict:
    tols = {}
    for item in items:
        name, _, value = item.partition("=")
        if name not in DEFAULT_TOLS:
            raise InputError(f"unknown tolerance {name!r}")
        try:
            tols[name] = float(value)
        except ValueError:
            raise InputError(f"bad tolerance value in {item!r}") from None
        if not tols[name] > 0:
            raise InputError(f"tolerance {name} must be positive")
    return tols


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", type=Path, help="model file (.json or .toml)")
    g.add_argument("--example", choices=sorted(config.EXAMPLES), help="bundled model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entropic-mf",
        description="KL-controlled mean-field models of finite Markov chains.",
        epilog="Exit codes: 0 ok, 2 identity violated, 3 internal cross-check failed, 4 input error.",
    )
    parser.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUT_ENV} or the current directory)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="linear model, frequency response and zeros")
    _add_model_args(p)
    p.add_argument("--n-omega", type=int, default=400, help="positive frequencies in the log grid (mirrored)")
    p.add_argument("--pr-tol", type=float, default=1e-10, help="tolerance for min Re G >= -tol")
    p.add_argument("--identity-tol", type=float, default=1e-8, help="tolerance for |Re G - PSD|")

    p = sub.add_parser("sweep", help="Perron-Frobenius eigenpairs over a zeta grid")
    _add_model_args(p)
    p.add_argument("--zeta-grid", default="-2:2:41", help="start:stop:n; write --zeta-grid=-2:2:41 when start is negative")

    p = sub.add_parser("simulate-mf", help="integrate the mean-field ODE")
    _add_model_args(p)
    p.add_argument("--signal", default="const:0", help=SIGNAL_HELP)
    p.add_argument("--t-end", type=float, default=10.0, help="final time")
    p.add_argument("--dt", type=float, default=None, help="RK4 step (default 0.01/gap)")
    p.add_argument("--mu0", default=None, help="comma-separated initial law (default pi)")
    p.add_argument("--linearized", action="store_true", help="also write linearized.csv")

    p = sub.add_parser("simulate-agents", help="simulate N agents by uniformisation")
    _add_model_args(p)
    p.add_argument("--agents", type=int, default=1000, help="number of agents N")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--signal", default="const:0", help=SIGNAL_HELP)
    p.add_argument("--t-end", type=float, default=10.0, help="final time (a whole multiple of --output-dt)")
    p.add_argument("--output-dt", type=float, default=0.1, help="spacing of the output grid")
    p.add_argument("--mu0", default=None, help="comma-separated initial law (default pi)")
    p.add_argument("--proportional", action="store_true", help="deterministic largest-remainder initial states")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on this)")

    p = sub.add_parser("verify", help="run every cross-check and identity")
    _add_model_args(p)
    p.add_argument("--random-reversible", nargs=2, type=int, metavar=("D", "K"),
                   help="K random reversible chains with dimensions cycling 2..D")
    p.add_argument("--seed", type=int, default=1, help="first seed for --random-reversible")
    p.add_argument("--zeta-grid", default="-2:2:41", help="start:stop:n; write --zeta-grid=-2:2:41 when start is negative")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help=f"override a tolerance; names: {', '.join(DEFAULT_TOLS)}")

    p = sub.add_parser("counterexample", help="search non-reversible chains for PR / minimum-phase failures")
    p.add_argument("--d", type=int, default=8, help="number of states")
    p.add_argument("--family", choices=["cycle", "random", "mixed", "reversible"], default="cycle",
                   help="candidate family (reversible is a control with no possible violation)")
    p.add_argument("--budget", type=int, default=500, help="number of candidates")
    p.add_argument("--seed", type=int, default=7, help="random seed")
    return parser


def _model(args) -> config.Model:
    if args.config is not None:
        return config.load_model(args.config)
    if args.example is not None:
        return config.load_example(args.example)
    raise InputError("no model given: use --config or --example")


def _mu0(args, pi) -> np.ndarray:
    if args.mu0 is None:
        return pi
    try:
        mu0 = np.array([float(x) for x in args.mu0.split(",")])
    except ValueError:
        raise InputError(f"bad --mu0 {args.mu0!r}") from None
    if mu0.size != pi.size or mu0.min() < 0 or abs(mu0.sum() - 1) > 1e-9:
        raise InputError("--mu0 must be a probability vector over the model's states")
    return mu0


def _write_report(out: Path, payload: dict) -> None:
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


def _finite(x: float):
    return x if np.isfinite(x) else str(x)


def cmd_analyze(args, out: Path) -> int:
    m = _model(args)
    D = m.generator
    pi = stationary_distribution(D).pi
    model = build_linear_model(D, m.util, pi)
    d = D.dim
    rows = []
    for i in range(d):
        for j in range(d):
            rows.append(("A", i, j, model.A[i, j]))
    rows += [("B", i, 0, model.B[i]) for i in range(d)]
    rows += [("B_finite_diff", i, 0, model.B_finite_diff[i]) for i in range(d)]
    rows += [("C", 0, j, model.C[j]) for j in range(d)]
    rows.append(("baseline", 0, 0, model.baseline))
    config.write_csv(out / "linear_model.csv", ["block", "i", "j", "value"], rows)

    fr = frequency_response(model, default_omega_grid(D, args.n_omega))
    config.write_csv(out / "freq_response.csv", ["omega", "reG", "imG", "psd", "re_gap"],
                     zip(fr.omegas, fr.G.real, fr.G.imag, fr.psd, fr.re_gap))
    try:
        zeros = transmission_zeros(model)
    except DegenerateSystem:
        zeros = np.array([], dtype=complex)
    config.write_csv(out / "zeros.csv", ["re", "im"], zip(zeros.real, zeros.imag))

    reversible, violation = is_reversible(D, pi)
    pr = positive_real_check(fr, args.pr_tol)
    b_diff = float(np.abs(model.B_closed_form - model.B_finite_diff).max())
    checks = {
        "reversible": reversible,
        "reversibility_violation": violation,
        "b_cross_check": {"residual": b_diff, "tol": 1e-6, "pass": b_diff <= 1e-6},
        "positive_real": {"min_re_g": pr.min_re_g, "argmin_omega": pr.argmin_omega, "tol": args.pr_tol, "pass": pr.is_pr},
        "re_g_equals_psd": {
            "residual": pr.max_re_gap,
            "tol": args.identity_tol,
            "pass": (pr.max_re_gap <= args.identity_tol) if reversible else None,
            "note": "" if reversible else "not applicable (non-reversible)",
        },
        "minimum_phase": {"max_zero_real_part": _finite(float(zeros.real.max())) if zeros.size else None},
    }
    _write_report(out, {"command": "analyze", "model": m.source, "checks": checks})
    if b_diff > 1e-6:
        return EXIT_INTERNAL
    if not pr.is_pr or (reversible and pr.max_re_gap > args.identity_tol):
        return EXIT_IDENTITY
    return EXIT_OK


def cmd_sweep(args, out: Path) -> int:
    m = _model(args)
    zetas = parse_grid(args.zeta_grid)
    lams, vs = pf_eigenpairs(m.generator, m.util, zetas)
    d = m.generator.dim
    config.write_csv(out / "sweep.csv", ["zeta", "lambda"] + [f"v_{i + 1}" for i in range(d)],
                     (np.concatenate([[z, lam], v]) for z, lam, v in zip(zetas, lams, vs)))
    second = lams[2:] - 2 * lams[1:-1] + lams[:-2] if lams.size >= 3 else np.zeros(1)
    ok = bool(second.min() >= -1e-8)
    _write_report(out, {"command": "sweep", "model": m.source,
                        "checks": {"convexity": {"min_second_difference": float(second.min()), "tol": 1e-8, "pass": ok}}})
    return EXIT_OK if ok else EXIT_IDENTITY


def cmd_simulate_mf(args, out: Path) -> int:
    m = _model(args)
    pi = stationary_distribution(m.generator).pi
    sig = parse_signal(args.signal)
    mu0 = _mu0(args, pi)
    mf = integrate_meanfield(m.generator, m.util, sig, mu0, args.t_end, args.dt)
    d = m.generator.dim
    config.write_csv(out / "meanfield.csv", ["t", "y"] + [f"mu_{i + 1}" for i in range(d)] + ["zeta"],
                     (np.concatenate([[t, y], mu, [z]]) for t, y, mu, z in zip(mf.times, mf.outputs, mf.mus, mf.zetas)))
    if args.linearized:
        model = build_linear_model(m.generator, m.util, pi)
        lin = integrate_linearized(model, sig, mu0 - pi, args.t_end, args.dt)
        config.write_csv(out / "linearized.csv", ["t", "gamma"] + [f"phi_{i + 1}" for i in range(d)],
                         (np.concatenate([[t, g], p]) for t, g, p in zip(lin.times, lin.gammas, lin.phis)))
    mass = float(np.abs(mf.mus.sum(axis=1) - 1).max())
    _write_report(out, {"command": "simulate-mf", "model": m.source, "signal": args.signal,
                        "checks": {"mass_conservation": {"residual": mass, "tol": 1e-9, "pass": mass <= 1e-9}}})
    return EXIT_OK if mass <= 1e-9 else EXIT_INTERNAL


def cmd_simulate_agents(args, out: Path) -> int:
    m = _model(args)
    pi = stationary_distribution(m.generator).pi
    sig = parse_signal(args.signal)
    mu0 = _mu0(args, pi)
    start = time.perf_counter()
    tr = simulate_population(m.generator, m.util, sig, args.agents, mu0, args.t_end, args.output_dt,
                             args.seed, proportional=args.proportional, threads=args.threads)
    wall = time.perf_counter() - start
    d = m.generator.dim
    config.write_csv(out / "population.csv", ["t", "agg_output"] + [f"empirical_{i + 1}" for i in range(d)],
                     (np.concatenate([[t, y], e]) for t, y, e in zip(tr.times, tr.agg_output, tr.empirical)))
    meta = {"N": tr.n_agents, "seed": tr.seed, "theta": tr.theta, "wall_time_s": wall,
            "threads": args.threads, "signal": args.signal, "model": m.source}
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_verify(args, out: Path) -> int:
    if args.random_reversible is not None:
        dmax, k = args.random_reversible
        if dmax < 2 or k < 1:
            raise InputError("--random-reversible needs D >= 2 and K >= 1")
        suite = reversible_suite(k, args.seed, tuple(range(2, dmax + 1)))
        instances = [(s.name, s.generator, s.util) for s in suite]
    else:
        m = _model(args)
        instances = [(m.source or "model", m.generator, m.util)]
    rows = verify_suite(instances, zeta_grid=parse_grid(args.zeta_grid), tols=parse_tols(args.tol))
    config.write_csv(out / "residuals.csv", ["instance", "check", "kind", "residual", "tol", "status", "note"],
                     ((r.instance, r.name, r.kind, r.residual, r.tol, r.status, r.note) for r in rows))
    code = exit_code(rows)
    _write_report(out, {"command": "verify", "exit_code": code, "checks": as_dicts(rows)})
    return code


def cmd_counterexample(args, out: Path) -> int:
    res = counterexample_search(args.d, args.family, args.budget, args.seed)
    rows = []
    for label, group in (("pr_violation", res.pr_violations), ("mp_violation", res.mp_violations)):
        for k, c in enumerate(group):
            zmax = float(c.zeros.real.max()) if c.zeros.size else float("nan")
            rows.append((label, k, c.params["seed"], c.reversible, c.min_re_g, c.argmin_omega, zmax))
    config.write_csv(out / "counterexamples.csv",
                     ["kind", "rank", "seed", "reversible", "min_re_g", "argmin_omega", "max_zero_real"], rows)
    best = res.best
    if best is not None:
        d = best.generator.shape[0]
        config.write_csv(out / "best_generator.csv", [f"to_{j + 1}" for j in range(d)], best.generator)
        config.write_csv(out / "best_zeros.csv", ["re", "im"], zip(best.zeros.real, best.zeros.imag))
    payload = {
        "command": "counterexample",
        "family": args.family,
        "budget": args.budget,
        "seed": args.seed,
        "evaluated": res.evaluated,
        "exhausted": res.exhausted,
        "n_pr_violations_kept": len(res.pr_violations),
        "n_mp_violations_kept": len(res.mp_violations),
        "best": None if best is None else {"params": best.params, "min_re_g": best.min_re_g,
                                           "reversible": best.reversible, "zeros": best.zeros},
    }
    _write_report(out, payload)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "simulate-mf": cmd_simulate_mf,
    "simulate-agents": cmd_simulate_agents,
    "verify": cmd_verify,
    "counterexample": cmd_counterexample,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    out = args.out or Path(os.environ.get(OUT_ENV, "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InternalCheckError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (EntropicMFError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
