"""Finite-state stochastic processes and their memory costs.

Transition matrices here are row-stochastic with entry [j][i] giving the
probability of moving from state j to state i.  Entries may be floats or
exact rationals (``fractions.Fraction``); rational matrices are carried
through the stationary solve without rounding so that downstream
decompositions can be checked by exact equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-13
MAX_POWER_ITER = 10**6


class ReducibleChainError(ValueError):
    """The chain is not irreducible, so the stationary state is not unique."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""


def _is_exact(value) -> bool:
    return isinstance(value, Rational) and not isinstance(value, float)


class TransitionMatrix:
    """Square row-stochastic matrix over a finite state space.

    Parameters
    ----------
    rows : sequence of sequences
        ``rows[j][i]`` is the probability of the transition j -> i.  Every
        entry must lie in [0, 1] and every row must sum to 1 within 1e-12.
        If all entries are rationals the matrix is flagged exact and exact
        arithmetic is used wherever supported.
    """

    def __init__(self, rows):
        rows = tuple(tuple(r) for r in rows)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("transition matrix must be square and non-empty")
        for j, row in enumerate(rows):
            for v in row:
                if v < 0 or v > 1:
                    raise ValueError(f"entry {v!r} in row {j} outside [0, 1]")
            if abs(sum(row) - 1) > ROW_SUM_TOL:
                raise ValueError(f"row {j} sums to {float(sum(row))!r}, not 1")
        self.rows = rows
        self.n = n
        self.exact = all(_is_exact(v) for row in rows for v in row)

    def __getitem__(self, j):
        return self.rows[j]

    def __eq__(self, other):
        return isinstance(other, TransitionMatrix) and self.rows == other.rows

    def __repr__(self):
        return f"TransitionMatrix({[list(r) for r in self.rows]!r})"

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.rows])


@dataclass(frozen=True)
class EpsilonMachine:
    """Unifilar hidden-state machine.

    ``emit[i][x]`` is the probability of emitting symbol x from state i and
    ``succ[i][x]`` the state reached after that emission.  Unifilarity means
    the successor is a function of (state, symbol), so the pair distribution
    P(x, j | i) factors as ``emit[i][x]`` times an indicator on j.
    """

    emit: tuple[dict, ...]
    succ: tuple[dict, ...]
    symbols: tuple[int, ...]

    def __post_init__(self):
        n = len(self.emit)
        if n == 0 or len(self.succ) != n:
            raise ValueError("emit and succ must cover the same non-empty state set")
        for i, dist in enumerate(self.emit):
            if not dist:
                raise ValueError(f"state {i} has no outputs")
            if abs(sum(dist.values()) - 1) > ROW_SUM_TOL:
                raise ValueError(f"output distribution of state {i} does not sum to 1")
            for x, pr in dist.items():
                if pr < 0 or pr > 1:
                    raise ValueError(f"P({x}|{i}) = {pr!r} outside [0, 1]")
                if x not in self.symbols:
                    raise ValueError(f"symbol {x} not in alphabet {self.symbols}")
                if x not in self.succ[i]:
                    raise ValueError(f"no successor for state {i}, symbol {x}")
                if not 0 <= self.succ[i][x] < n:
                    raise ValueError(f"successor {self.succ[i][x]} out of range")

    @property
    def n(self) -> int:
        return len(self.emit)

    @property
    def exact(self) -> bool:
        return all(_is_exact(pr) for dist in self.emit for pr in dist.values())


def perturbed_coin(p) -> EpsilonMachine:
    """Two-state coin whose bias toward repeating the last outcome is 1 - p.

    State i remembers the previous output.  From state 0 the machine emits 1
    with probability p; from state 1 it emits 0 with probability p.  The new
    state always equals the emitted symbol.
    """
    _check_unit_interval(p, "p")
    emit = tuple({x: pr for x, pr in d.items() if pr != 0}
                 for d in ({0: 1 - p, 1: p}, {0: p, 1: 1 - p}))
    succ = tuple({x: x for x in d} for d in emit)
    return EpsilonMachine(emit=emit, succ=succ, symbols=(0, 1))


def post_processed_coin(p, q) -> EpsilonMachine:
    """Three-state, three-symbol machine obtained by rewriting coin runs.

    Output 2 marks the start of a run, output 1 its continuation and output 0
    a quiet step.  State i again equals the previous output, which makes the
    machine unifilar with successor f(i, x) = x.
    """
    _check_unit_interval(p, "p")
    _check_unit_interval(q, "q")
    emit = (
        {0: 1 - p, 2: p},
        {0: q * (1 - p), 1: 1 - q, 2: q * p},
        {1: _one_like(q)},
    )
    emit = tuple({x: pr for x, pr in d.items() if pr != 0} for d in emit)
    succ = tuple({x: x for x in d} for d in emit)
    return EpsilonMachine(emit=emit, succ=succ, symbols=(0, 1, 2))


def _one_like(v):
    return Fraction(1) if _is_exact(v) else 1.0


def _check_unit_interval(v, name: str) -> None:
    if v < 0 or v > 1:
        raise ValueError(f"{name} = {v!r} outside [0, 1]")


def machine_from_chain(T: TransitionMatrix) -> EpsilonMachine:
    """View a chain as the unifilar machine that announces its next state."""
    emit = tuple({x: T[i][x] for x in range(T.n) if T[i][x] != 0}
                 for i in range(T.n))
    succ = tuple({x: x for x in dist} for dist in emit)
    return EpsilonMachine(emit=emit, succ=succ, symbols=tuple(range(T.n)))


def induced_chain(machine: EpsilonMachine) -> TransitionMatrix:
    """Marginalize the outputs away, leaving the chain on hidden states."""
    n = machine.n
    zero = Fraction(0) if machine.exact else 0.0
    rows = [[zero] * n for _ in range(n)]
    for i, dist in enumerate(machine.emit):
        for x, pr in dist.items():
            rows[i][machine.succ[i][x]] += pr
    if not machine.exact:
        # aggregation can overshoot 1 by a few ulp; dividing by the row sum
        # keeps every entry in [0, 1] without moving anything beyond the
        # tolerance the machine was validated under
        rows = [[v / sum(row) for v in row] for row in rows]
    return TransitionMatrix(rows)


def _strongly_connected(T: TransitionMatrix) -> bool:
    def reach(adj):
        seen = {0}
        stack = [0]
        while stack:
            j = stack.pop()
            for i in adj[j]:
                if i not in seen:
                    seen.add(i)
                    stack.append(i)
        return seen

    n = T.n
    fwd = [[i for i in range(n) if T[j][i] > 0] for j in range(n)]
    bwd = [[j for j in range(n) if T[j][i] > 0] for i in range(n)]
    return len(reach(fwd)) == n and len(reach(bwd)) == n


def _stationary_exact(T: TransitionMatrix) -> tuple:
    # Solve pi (T - I) = 0 with the normalization sum(pi) = 1 substituted for
    # the last (redundant) balance equation, by Gaussian elimination over
    # Fraction.  Irreducibility makes the reduced system non-singular.
    n = T.n
    aug = [
        [Fraction(T[j][i]) - (1 if i == j else 0) for j in range(n)] + [Fraction(0)]
        for i in range(n)
    ]
    aug[n - 1] = [Fraction(1)] * n + [Fraction(1)]
    for c in range(n):
        piv = next((r for r in range(c, n) if aug[r][c] != 0), None)
        if piv is None:
            raise ReducibleChainError("non-unique stationary state")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [v * inv for v in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                factor = aug[r][c]
                aug[r] = [vr - factor * vc for vr, vc in zip(aug[r], aug[c])]
    pi = tuple(aug[r][n] for r in range(n))
    check = tuple(sum(pi[j] * T[j][i] for j in range(n)) for i in range(n))
    assert check == pi, "exact stationary solve failed its fixed-point check"
    return pi


def stationary(T: TransitionMatrix, tol: float = STATIONARY_TOL,
               max_iter: int = MAX_POWER_ITER):
    """Unique stationary distribution of an irreducible chain.

    Float matrices are solved by power iteration on the half-lazy kernel
    (T + I)/2, which averages two successive iterates and therefore also
    converges for periodic chains; the residual ``max |pi T - pi|`` is always
    measured against T itself.  Exact matrices are solved by Gaussian
    elimination over rationals and satisfy pi T = pi exactly.

    Raises
    ------
    ReducibleChainError
        If the positive-entry digraph of T is not strongly connected.
    ConvergenceError
        If the iteration budget is exhausted before reaching ``tol``.
    """
    if not _strongly_connected(T):
        raise ReducibleChainError("non-unique stationary state")
    if T.exact:
        return _stationary_exact(T)
    A = T.to_numpy()
    pi = np.full(T.n, 1.0 / T.n)
    for _ in range(max_iter):
        step = pi @ A
        if np.max(np.abs(step - pi)) < tol:
            return pi
        pi = 0.5 * (step + pi)
        pi /= pi.sum()
    raise ConvergenceError(f"power iteration did not reach {tol} "
                           f"in {max_iter} steps")


def entropy_bits(weights) -> float:
    """Shannon entropy in bits, with the 0 log 0 := 0 convention."""
    total = 0.0
    for w in weights:
        w = float(w)
        if w < 0:
            raise ValueError(f"negative weight {w!r}")
        if w > 0:
            total -= w * math.log2(w)
    return total


def binary_entropy(p) -> float:
    return entropy_bits((float(p), 1.0 - float(p)))


def topological_memory(machine: EpsilonMachine) -> float:
    """Bits needed to address one hidden state: log2 of the state count."""
    return math.log2(machine.n)


def statistical_memory(machine: EpsilonMachine) -> float:
    """Entropy of the stationary hidden-state distribution, in bits."""
    return entropy_bits(stationary(induced_chain(machine)))


def coin_mutual_info_bound(p) -> float:
    """Past-future mutual information of the perturbed coin.

    Equals 1 - H2(p) bits and lower-bounds any faithful memory of the
    process, quantum or classical.
    """
    _check_unit_interval(p, "p")
    return 1.0 - binary_entropy(p)


def sample_trajectory(machine: EpsilonMachine, start: int, steps: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Emit ``steps`` symbols starting from hidden state ``start``."""
    if not 0 <= start < machine.n:
        raise ValueError(f"start state {start} out of range")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    syms = []
    cums = []
    nxts = []
    for i in range(machine.n):
        items = sorted(machine.emit[i].items())
        syms.append(np.array([x for x, _ in items]))
        cums.append(np.cumsum([float(pr) for _, pr in items]))
        cums[-1][-1] = 1.0
        nxts.append(np.array([machine.succ[i][x] for x, _ in items]))
    out = np.empty(steps, dtype=np.int64)
    u = rng.random(steps)
    state = start
    for t in range(steps):
        k = int(np.searchsorted(cums[state], u[t], side="right"))
        out[t] = syms[state][k]
        state = int(nxts[state][k])
    return out


MAX_KGRAM = 8


def exact_kgram_distribution(machine: EpsilonMachine, k: int,
                             start: int | None = None) -> dict:
    """Exact probability of every length-k output word.

    With ``start=None`` the hidden state is drawn from the stationary
    distribution; otherwise the word law is conditioned on starting in
    ``start``.  Keys are the emitted symbols concatenated as a string
    ("201" for the word 2,0,1).  Words of probability zero are omitted.
    Probabilities are exact rationals when the machine is exact and its
    stationary state is not needed in float form.
    """
    if not 1 <= k <= MAX_KGRAM:
        raise ValueError(f"k must be in 1..{MAX_KGRAM}, got {k}")
    if start is None:
        weights = stationary(induced_chain(machine))
        initial = list(enumerate(weights))
    else:
        if not 0 <= start < machine.n:
            raise ValueError(f"start state {start} out of range")
        initial = [(start, Fraction(1) if machine.exact else 1.0)]
    out: dict = {}
    frontier = {("", i): w for i, w in initial if w != 0}
    for _ in range(k):
        nxt: dict = {}
        for (word, i), w in frontier.items():
            for x, pr in machine.emit[i].items():
                key = (word + str(x), machine.succ[i][x])
                nxt[key] = nxt.get(key, 0) + w * pr
        frontier = nxt
    for (word, _), w in frontier.items():
        out[word] = out.get(word, 0) + w
    return {word: w for word, w in sorted(out.items()) if w != 0}
