"""Memory-frugal ensemble samplers.

The general construction splits a target chain T into a rank-one stationary
part plus a correction, T = 1 pi^T + Delta, and realizes the correction by
occasionally saving a sample's value and rerouting its next i.i.d. draw.
Two specializations are provided: the two-outcome coin ensemble, whose
correction reduces to a conditional bit flip, and a three-symbol machine
that runs on a single stochastic bit of memory.

Randomness is counter-based: every step of an ensemble consumes Philox
streams keyed by (seed, step, substream), and sample number ell always
reads element ell of those streams.  The update of one sample depends only
on its own previous state, its own stream elements and the shared constant
tables, so any partition of the ensemble across threads reproduces the
single-threaded result bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .markov import EpsilonMachine, TransitionMatrix, stationary

DELTA_ROW_TOL = 1e-12


class DegenerateSupportError(ValueError):
    """The stationary distribution has a zero entry, so the save/reroute
    ratios are undefined."""


def _uniforms(seed: int, step: int, substream: int, count: int) -> np.ndarray:
    """Element ell is a pure function of (seed, step, substream, ell)."""
    key = np.array([seed, (step << 3) | substream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(count)


def decompose(chain: TransitionMatrix, pi=None):
    """Split T into 1 pi^T + Delta and return (pi, Delta).

    Delta rows sum to 0 (within 1e-12 in float, exactly in rational mode).
    Raises DegenerateSupportError when pi has a zero entry, since the
    correction ratios divide by pi.
    """
    if pi is None:
        pi = stationary(chain)
    n = chain.n
    if len(pi) != n:
        raise ValueError("pi must have one entry per state")
    for w in pi:
        if w <= 0:
            raise DegenerateSupportError("degenerate stationary support")
    delta = tuple(tuple(chain[j][i] - pi[i] for i in range(n))
                  for j in range(n))
    for j, row in enumerate(delta):
        assert abs(sum(row)) <= DELTA_ROW_TOL, f"Delta row {j} does not sum to 0"
    return tuple(pi), delta


def save_fractions(pi, delta) -> tuple:
    """Per-state save probabilities f_j = max over the depleted set of
    -Delta[j][i] / pi[i]; 0 when row j needs no correction."""
    out = []
    for row in delta:
        negs = [(-d, w) for d, w in zip(row, pi) if d < 0]
        out.append(max(d / w for d, w in negs) if negs else 0 * pi[0])
    return tuple(out)


def reroute_ratios(pi, delta, f) -> tuple[tuple, tuple]:
    """Reroute ratios (r_minus, r_plus) as dense per-state tables.

    r_minus[j][i] is the probability of abandoning a fresh draw i given the
    saved value j (nonzero only on the depleted set); r_plus[j][i] is the
    distribution the abandoned draw is rerouted to (supported on the
    surplus set).  Rows with f_j = 0 are identically zero.
    """
    n = len(pi)
    zero = 0 * pi[0]
    rminus = [[zero] * n for _ in range(n)]
    rplus = [[zero] * n for _ in range(n)]
    for j, row in enumerate(delta):
        if f[j] == 0:
            continue
        surplus = sum(d for d in row if d > 0)
        assert surplus > 0, "zero-sum row with a depleted set must have surplus"
        for i, d in enumerate(row):
            if d < 0:
                rminus[j][i] = -d / (f[j] * pi[i])
            elif d > 0:
                rplus[j][i] = d / surplus
    return tuple(map(tuple, rminus)), tuple(map(tuple, rplus))


@dataclass(frozen=True)
class RerouteTables:
    """Constant tables driving the save/reroute sampler for one chain."""

    pi: tuple
    delta: tuple
    f: tuple
    rminus: tuple
    rplus: tuple

    @classmethod
    def from_chain(cls, chain: TransitionMatrix, pi=None) -> "RerouteTables":
        pi, delta = decompose(chain, pi)
        f = save_fractions(pi, delta)
        rminus, rplus = reroute_ratios(pi, delta, f)
        return cls(pi=tuple(pi), delta=tuple(map(tuple, delta)), f=f,
                   rminus=rminus, rplus=rplus)

    @property
    def n(self) -> int:
        return len(self.pi)


def effective_kernel(tables: RerouteTables):
    """Single-step distribution of the save/reroute protocol.

    Row j conditions on the saved value being j, marginalizing over the
    saved flag does not change the row because f_j multiplies the whole
    correction.  The result must reproduce the decomposed chain exactly:
    the depletion removes pi_i f_j r_minus and the zero-sum of Delta routes
    exactly that mass onto the surplus states.
    """
    n = tables.n
    pi, f, rm, rp = tables.pi, tables.f, tables.rminus, tables.rplus
    rows = []
    for j in range(n):
        moved = sum(pi[i2] * rm[j][i2] for i2 in range(n) if rm[j][i2] != 0)
        row = []
        for i in range(n):
            if rm[j][i] != 0:
                row.append(pi[i] * (1 - f[j] * rm[j][i]))
            elif rp[j][i] != 0:
                row.append(pi[i] + f[j] * moved * rp[j][i])
            else:
                row.append(pi[i])
        rows.append(row)
    return rows


def expected_memory(tables: RerouteTables, n_samples: int = 1):
    """Expected saved fraction sum_j f_j pi_j and expected saved bits per
    step for an ensemble of ``n_samples`` (ceil(log2 n) bits per save)."""
    fraction = sum(fj * pj for fj, pj in zip(tables.f, tables.pi))
    return fraction, fraction * math.ceil(math.log2(tables.n)) * n_samples


def _as_cdf(weights) -> np.ndarray:
    cdf = np.cumsum([float(w) for w in weights])
    cdf[-1] = 1.0
    return cdf


class GeneralQISampler:
    """Ensemble sampler reproducing a chain from i.i.d. stationary draws.

    Each of the M samples holds its previous value and a saved flag.  Per
    step and sample: draw i from pi; if the previous value j was saved and i
    is in the depleted set of row j, reroute to the surplus set with
    probability r_minus[j][i], choosing the destination from r_plus[j];
    finally save the new value v with probability f_v.  The effective
    kernel of this update is exactly the target chain.
    """

    def __init__(self, chain: TransitionMatrix, n_samples: int, seed: int,
                 tables: RerouteTables | None = None):
        self.tables = RerouteTables.from_chain(chain) if tables is None else tables
        n = self.tables.n
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self._pi_cdf = _as_cdf(self.tables.pi)
        self._f = np.array([float(v) for v in self.tables.f])
        self._rminus = np.array([[float(v) for v in row]
                                 for row in self.tables.rminus])
        self._rplus_cdf = np.ones((n, n))
        for j in range(n):
            if self.tables.f[j] != 0:
                self._rplus_cdf[j] = _as_cdf(self.tables.rplus[j])
        self.step_index = 0
        self.values = np.searchsorted(
            self._pi_cdf, _uniforms(self.seed, 0, 0, self.n_samples),
            side="right").astype(np.int64)
        self.flags = (_uniforms(self.seed, 0, 3, self.n_samples)
                      < self._f[self.values])
        self.saved_counts = [int(self.flags.sum())]

    def step(self, threads: int = 1) -> np.ndarray:
        """Advance every sample once; returns the new value array."""
        t = self.step_index + 1
        u_draw = _uniforms(self.seed, t, 0, self.n_samples)
        u_accept = _uniforms(self.seed, t, 1, self.n_samples)
        u_pick = _uniforms(self.seed, t, 2, self.n_samples)
        u_save = _uniforms(self.seed, t, 3, self.n_samples)
        new_vals = np.empty(self.n_samples, dtype=np.int64)
        new_flags = np.empty(self.n_samples, dtype=bool)

        def update(lo: int, hi: int) -> None:
            i = np.searchsorted(self._pi_cdf, u_draw[lo:hi],
                                side="right").astype(np.int64)
            j = self.values[lo:hi]
            reroute = self.flags[lo:hi] & (u_accept[lo:hi] < self._rminus[j, i])
            if reroute.any():
                rows = self._rplus_cdf[j[reroute]]
                i[reroute] = (u_pick[lo:hi][reroute, None] < rows).argmax(axis=1)
            new_vals[lo:hi] = i
            new_flags[lo:hi] = u_save[lo:hi] < self._f[i]

        _run_chunked(update, self.n_samples, threads)
        self.values = new_vals
        self.flags = new_flags
        self.step_index = t
        self.saved_counts.append(int(new_flags.sum()))
        return self.values


class CoinEnsemble:
    """Save/flip ensemble for the perturbed coin.

    Every sample redraws a fair bit each step; a saved sample flips the
    fresh bit when it matches the saved one (p > 1/2) or when it differs
    (p < 1/2), then the result is saved again with probability |2p - 1|.
    This is the two-state save/reroute sampler with all tables collapsed
    into one comparison.
    """

    def __init__(self, p: float, n_samples: int, seed: int):
        p = float(p)
        if p < 0 or p > 1:
            raise ValueError(f"p = {p!r} outside [0, 1]")
        self.p = p
        self.save_prob = abs(2 * p - 1)
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.step_index = 0
        self.values = (_uniforms(self.seed, 0, 0, self.n_samples)
                       < 0.5).astype(np.int64)
        self.flags = _uniforms(self.seed, 0, 1, self.n_samples) < self.save_prob
        self.saved_counts = [int(self.flags.sum())]

    def step(self, threads: int = 1) -> np.ndarray:
        t = self.step_index + 1
        u_draw = _uniforms(self.seed, t, 0, self.n_samples)
        u_save = _uniforms(self.seed, t, 1, self.n_samples)
        new_vals = np.empty(self.n_samples, dtype=np.int64)
        new_flags = np.empty(self.n_samples, dtype=bool)

        def update(lo: int, hi: int) -> None:
            fresh = (u_draw[lo:hi] < 0.5).astype(np.int64)
            saved = self.flags[lo:hi]
            prev = self.values[lo:hi]
            if self.p > 0.5:
                fresh ^= saved & (fresh == prev)
            elif self.p < 0.5:
                fresh ^= saved & (fresh != prev)
            new_vals[lo:hi] = fresh
            new_flags[lo:hi] = u_save[lo:hi] < self.save_prob

        _run_chunked(update, self.n_samples, threads)
        self.values = new_vals
        self.flags = new_flags
        self.step_index = t
        self.saved_counts.append(int(new_flags.sum()))
        return self.values


def _run_chunked(update, total: int, threads: int) -> None:
    if threads <= 1 or total < 2:
        update(0, total)
        return
    bounds = np.linspace(0, total, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        jobs = [pool.submit(update, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if lo < hi]
        for job in jobs:
            job.result()


def three_state_demo_chain(p, q) -> TransitionMatrix:
    """Three-state chain with a single correcting row.

    States 0 and 2 redraw uniformly; state 1 redistributes with weights
    (p, q, 1 - p - q).  With p = 1/9, q = 2/3 this is the worked example
    whose reroute tables are known in closed form, handy as an exactness
    fixture when built from Fractions.
    """
    if p < 0 or q < 0 or p + q > 1:
        raise ValueError("need p, q >= 0 with p + q <= 1")
    third = Fraction(1, 3) if isinstance(p, Fraction) else 1.0 / 3.0
    uniform = [third, third, third]
    return TransitionMatrix([uniform, [p, q, 1 - p - q], list(uniform)])


def coin_signed_decomposition(p):
    """Write the biased coin (1-p, p) as the fair coin plus a signed
    correction: (1/2)(1, 1) + ((1-2p)/2)(1, -1).  The second component has
    a negative weight for p > 1/2, which is why it cannot be sampled
    directly and is implemented by the flip rule instead."""
    if p < 0 or p > 1:
        raise ValueError(f"p = {p!r} outside [0, 1]")
    half = Fraction(1, 2) if isinstance(p, Fraction) else 0.5
    c = (1 - 2 * p) * half
    return (half, half), (c, -c)


class StochasticBitMachine:
    """Three-symbol sampler whose entire memory is one stochastic bit.

    The bit plays the role of a causal state drawn from the mixture that
    represents the middle state: bit 0 behaves like the quiet state, bit 1
    deterministically emits the run-continuation symbol.  Per step with
    bit 0: emit 2 and set the bit with probability p, else emit 0 and clear
    it.  With bit 1: emit 1, then clear the bit with probability q.
    """

    def __init__(self, p: float, q: float, start: int, rng: np.random.Generator):
        p, q = float(p), float(q)
        if not (0 <= p <= 1 and 0 <= q <= 1):
            raise ValueError("p and q must lie in [0, 1]")
        self.p = p
        self.q = q
        self.rng = rng
        self.bit = self._initial_bit(start)

    def _initial_bit(self, start: int) -> int:
        if start == 0:
            return 0
        if start == 2:
            return 1
        if start == 1:
            return 0 if self.rng.random() < self.q else 1
        raise ValueError(f"start state must be 0, 1 or 2, got {start}")

    def step(self) -> int:
        u = self.rng.random()
        if self.bit == 0:
            if u < self.p:
                self.bit = 1
                return 2
            return 0
        self.bit = 0 if u < self.q else 1
        return 1

    def run(self, steps: int) -> np.ndarray:
        """Emit ``steps`` symbols; one uniform is consumed per step."""
        out = np.empty(steps, dtype=np.int64)
        u = self.rng.random(steps)
        bit = self.bit
        p, q = self.p, self.q
        for t in range(steps):
            if bit == 0:
                if u[t] < p:
                    out[t] = 2
                    bit = 1
                else:
                    out[t] = 0
            else:
                out[t] = 1
                bit = 0 if u[t] < q else 1
        self.bit = bit
        return out


def stochastic_causal_dimension(machine: EpsilonMachine, tol: float = 1e-10) -> int:
    """Dimension of the span of the per-state pair distributions P(x, j | i).

    A value below the state count certifies that the machine's future
    statistics live in a lower-dimensional simplex, the structure exploited
    by samplers like StochasticBitMachine.
    """
    a = len(machine.symbols)
    pos = {x: c for c, x in enumerate(machine.symbols)}
    rows = np.zeros((machine.n, machine.n * a))
    for i in range(machine.n):
        for x, pr in machine.emit[i].items():
            rows[i, machine.succ[i][x] * a + pos[x]] = float(pr)
    return int(np.linalg.matrix_rank(rows, tol=tol))
