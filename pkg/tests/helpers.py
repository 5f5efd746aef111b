"""Shared generators for the test suite.

Everything here is seeded by the caller, so the sweeps below are fixed
case lists, not fresh randomness per run.
"""

from fractions import Fraction

import numpy as np

from qimem.markov import (EpsilonMachine, ReducibleChainError,
                          TransitionMatrix, induced_chain, stationary)


def random_chain(rng: np.random.Generator, n: int) -> TransitionMatrix:
    """Strictly positive rows, hence irreducible and aperiodic."""
    rows = rng.dirichlet(np.ones(n), size=n)
    rows = np.maximum(rows, 1e-9)
    rows /= rows.sum(axis=1, keepdims=True)
    return TransitionMatrix([[float(v) for v in row] for row in rows])


def random_rational_chain(rng: np.random.Generator, n: int) -> TransitionMatrix:
    """Positive rational rows that sum to one exactly."""
    rows = []
    for _ in range(n):
        ks = rng.integers(1, 10, size=n)
        s = int(ks.sum())
        rows.append([Fraction(int(k), s) for k in ks])
    return TransitionMatrix(rows)


def random_machine(rng: np.random.Generator, n_states: int,
                   n_symbols: int) -> EpsilonMachine:
    """Random unifilar machine whose state chain is irreducible."""
    while True:
        emit, succ = [], []
        for _ in range(n_states):
            k = int(rng.integers(1, n_symbols + 1))
            syms = rng.choice(n_symbols, size=k, replace=False)
            probs = np.maximum(rng.dirichlet(np.ones(k)), 1e-6)
            probs /= probs.sum()
            emit.append({int(x): float(w) for x, w in zip(syms, probs)})
            succ.append({int(x): int(rng.integers(0, n_states)) for x in syms})
        machine = EpsilonMachine(emit=tuple(emit), succ=tuple(succ),
                                 symbols=tuple(range(n_symbols)))
        try:
            stationary(induced_chain(machine))
        except ReducibleChainError:
            continue
        return machine


def exact_coin_trajectory(p: float, steps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Direct coin sampler: flip the previous symbol with probability p.

    Independent of the library's samplers, so statistics checked against
    it are a genuine calibration and not a self-comparison.
    """
    flips = rng.random(steps) < p
    first = rng.random() < 0.5
    return ((first + np.cumsum(flips)) % 2).astype(np.int64)
