"""Seeded test instances: reversible and non-reversible chains, cycle families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov import (
    GeneratorMatrix,
    is_reversible,
    random_reversible_generator,
    stationary_distribution,
    validate_generator,
)


@dataclass(frozen=True)
class Instance:
    name: str
    generator: GeneratorMatrix
    util: np.ndarray
    seed: int


def two_state(up: float = 1.0, down: float = 1.0) -> Instance:
    D = validate_generator([[-up, up], [down, -down]])
    return Instance("two_state", D, np.array([0.0, 1.0]), 0)


def one_way_cycle(d: int = 3, rate: float = 1.0) -> GeneratorMatrix:
    R = np.zeros((d, d))
    for i in range(d):
        R[i, (i + 1) % d] = rate
        R[i, i] = -rate
    return validate_generator(R)


def random_pi(d: int, rng: np.random.Generator) -> np.ndarray:
    pi = rng.dirichlet(np.full(d, 2.0))
    pi = 0.8 * pi + 0.2 / d
    return pi / pi.sum()


def random_reversible(d: int, seed: int, density: float = 1.0) -> tuple[np.ndarray, dict]:
    rng = np.random.default_rng([seed, d, 0])
    pi = random_pi(d, rng)
    D = random_reversible_generator(pi, int(rng.integers(2**32)), density)
    return np.asarray(D), {"d": d}


def random_nonreversible(d: int, seed: int, density: float = 0.4) -> tuple[np.ndarray, dict]:
    """Directed Hamiltonian cycle (random order) plus random one-way extras."""
    if d < 3:
        raise ValueError("every irreducible 2-state chain is reversible")
    rng = np.random.default_rng([seed, d, 1])
    for _ in range(100):
        R = np.where(rng.random((d, d)) < density, rng.uniform(0.0, 1.0, (d, d)), 0.0)
        order = rng.permutation(d)
        R[order, np.roll(order, -1)] += rng.uniform(0.5, 2.0, d)
        np.fill_diagonal(R, 0.0)
        np.fill_diagonal(R, -R.sum(axis=1))
        G = validate_generator(R)
        if not is_reversible(G, stationary_distribution(G).pi)[0]:
            return np.asarray(G), {"d": d}
    raise RuntimeError("could not draw a non-reversible chain")


def cycle_chord_generator(d: int, forward, backward, chords=(), c: float = 0.0) -> GeneratorMatrix:
    """Directed ring with optional reverse steps and one-way chords.

    ``forward[i]`` is the rate of ``i -> i+1 (mod d)``, ``backward[i]`` the
    rate of ``i+1 -> i`` (0 removes the edge), and each chord ``(i, j)`` adds
    a one-way transition at rate ``c``. Scalars broadcast over the ring.
    Zero-based state indices.
    """
    fwd = np.broadcast_to(np.asarray(forward, dtype=float), (d,))
    bwd = np.broadcast_to(np.asarray(backward, dtype=float), (d,))
    R = np.zeros((d, d))
    for i in range(d):
        R[i, (i + 1) % d] += fwd[i]
        R[(i + 1) % d, i] += bwd[i]
    for i, j in chords:
        if i != j:
            R[i, j] += c
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=1))
    return validate_generator(R)


def random_cycle_chord(d: int, seed: int) -> tuple[np.ndarray, dict]:
    """Draw from the ring-plus-chords family.

    Base rates ``a, c`` are log-uniform on ``[1, 20]`` and ``b`` on
    ``[0.05, 5]``. Each forward edge gets rate ``a`` times a log-uniform
    jitter in ``[1/10, 10]``, each reverse edge is present with probability
    1/2 at rate ``b`` times the same kind of jitter, and up to two one-way
    chords are added at rate ``c``.
    """
    rng = np.random.default_rng([seed, d, 2])
    a, c = np.exp(rng.uniform(0.0, np.log(20.0), 2))
    b = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
    jitter = lambda: np.exp(rng.uniform(-np.log(10.0), np.log(10.0), d))
    forward = a * jitter()
    backward = np.where(rng.random(d) < 0.5, b * jitter(), 0.0)
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j and j != (i + 1) % d and i != (j + 1) % d]
    n_chords = int(rng.integers(0, 3))
    pick = rng.choice(len(pairs), size=min(n_chords, len(pairs)), replace=False) if pairs else []
    chords = tuple(pairs[k] for k in sorted(pick))
    D = cycle_chord_generator(d, forward, backward, chords, float(c))
    params = {
        "a": float(a),
        "b": b,
        "c": float(c),
        "forward": forward.tolist(),
        "backward": backward.tolist(),
        "chords": [list(p) for p in chords],
    }
    return np.asarray(D), params


def _suite(kind: str, n: int, first_seed: int, dims) -> list[Instance]:
    out = []
    for k in range(n):
        seed = first_seed + k
        d = dims[k % len(dims)]
        if kind == "reversible":
            R, _ = random_reversible(d, seed)
        else:
            R, _ = random_nonreversible(d, seed)
        rng = np.random.default_rng([seed, d, 3])
        util = rng.normal(size=d)
        out.append(Instance(f"{kind}-d{d}-s{seed}", validate_generator(R, row_tol=1e-10), util, seed))
    return out


def reversible_suite(n: int = 25, first_seed: int = 1, dims=tuple(range(2, 13))) -> list[Instance]:
    """``n`` random reversible chains; instance ``k`` uses seed ``first_seed + k``."""
    return _suite("reversible", n, first_seed, dims)


def nonreversible_suite(n: int = 25, first_seed: int = 1, dims=tuple(range(3, 13))) -> list[Instance]:
    return _suite("nonreversible", n, first_seed, dims)
