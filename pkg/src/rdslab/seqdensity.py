"""Density/gap transforms for increasing integer sequences, plus the
heavy-tail Birkhoff divergence check.

The asymptotic statements (limsup of n_k/k versus liminf of the counting
density) are tested through explicit finite-horizon surrogates that mirror
the index bookkeeping of the proofs: a verified growth bound n_k <= 2*alpha*k
past k0 forces counting density >= 1/(3*alpha) past 6*alpha*k0, and verified
density >= beta/2 past k0 forces n_k <= (3/beta)*k via the floor(2k/beta)+1
argument.  Sequences are 1-based to match the k >= 1 index conventions.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoWitness
from .noise import NoiseStream


@dataclass(frozen=True)
class IncreasingSeq:
    """Strictly increasing positive integers n_1 < n_2 < ... (1-based)."""

    values: tuple[int, ...]

    def __post_init__(self):
        v = self.values
        if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError("sequence must be strictly increasing positive integers")

    def __len__(self) -> int:
        return len(self.values)

    def term(self, k: int) -> int:
        """n_k with 1-based k."""
        if not (1 <= k <= len(self.values)):
            raise ConfigError(f"index {k} outside 1..{len(self.values)}")
        return self.values[k - 1]


def density_count(seq: IncreasingSeq, n: int) -> int:
    """|{k : n_k <= n}| by binary search."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return bisect_right(seq.values, n)


def check_gap_to_density(seq: IncreasingSeq, alpha: float, slack: float = 0.0,
                         k0: int = 1) -> bool:
    """Finite surrogate of: limsup n_k/k <= alpha implies density >= 1/(3*alpha).

    Verifies the premise n_k <= 2*alpha*k for all k >= k0 in range; when the
    premise holds, asserts density_count(n)/n >= 1/(3*alpha) - slack for all
    n >= 6*alpha*k0 within the horizon.  Vacuously true when the premise
    fails.
    """
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    K = len(seq)
    if not all(seq.term(k) <= 2 * alpha * k for k in range(k0, K + 1)):
        return True  # premise fails; the implication is vacuous
    horizon = seq.term(K)
    n_start = int(math.ceil(6 * alpha * k0))
    for n in range(max(n_start, 1), horizon + 1):
        if density_count(seq, n) / n < 1.0 / (3.0 * alpha) - slack - 1e-12:
            return False
    return True


def check_density_to_gap(seq: IncreasingSeq, beta: float, slack: float = 0.0,
                         k0: int = 1) -> bool:
    """Finite surrogate of: liminf density >= beta implies n_k <= (3/beta)*k.

    Mirrors the proof's index bookkeeping: from counts >= (beta/2)*m for all
    m >= k0, the index m = floor(2k/beta) + 1 pins n_k below it, and
    floor(2k/beta) + 1 <= (3/beta)*k once k >= beta.  Only k whose pinning
    index is inside the verified horizon are checked.
    """
    if not (0.0 < beta <= 1.0):
        raise ConfigError("beta must lie in (0, 1]")
    K = len(seq)
    horizon = seq.term(K)
    if not all(density_count(seq, m) >= (beta / 2.0) * m for m in range(k0, horizon + 1)):
        return True  # premise fails; vacuous
    for k in range(1, K + 1):
        m = math.floor(2 * k / beta) + 1
        if m <= k0 or m > horizon or k < beta:
            continue
        if seq.term(k) > (3.0 / beta) * k + slack + 1e-12:
            return False
    return True


def check_limsup_density_to_liminf_gap(seq: IncreasingSeq, beta: float) -> bool:
    """Witness form of: density > beta along a subsequence forces some
    n_k <= (2/beta)*k.

    The proof's witnesses s_r go to infinity, so the surrogate scans only the
    tail half of the horizon for s with density_count(s)/s > beta; for each,
    the index q = floor(beta*s/2) + 1 must satisfy n_q <= s and
    s <= (2/beta)*q, hence n_q/q <= 2/beta.  Raises NoWitness when no tail
    prefix achieves the density (the vacuous case is reported separately).
    """
    if not (0.0 < beta <= 1.0):
        raise ConfigError("beta must lie in (0, 1]")
    K = len(seq)
    horizon = seq.term(K)
    witnesses = [s for s in range(max(1, horizon // 2), horizon + 1)
                 if density_count(seq, s) / s > beta]
    if not witnesses:
        raise NoWitness(f"no tail prefix has density above {beta}")
    for s in witnesses:
        q = math.floor(beta * s / 2.0) + 1
        if q > K:
            continue
        if not (seq.term(q) <= s and s <= (2.0 / beta) * q):
            return False
        if seq.term(q) <= (2.0 / beta) * q:
            return True
    return False


@dataclass(frozen=True)
class HeavyTailRow:
    k: float
    truncated_mean: float
    expected: float          # 1 + log k for the shipped Pareto
    std_err: float
    within_3sigma: bool


@dataclass(frozen=True)
class HeavyTailTable:
    rows: tuple[HeavyTailRow, ...]
    untruncated_final_means: np.ndarray   # one running mean per replica at n
    n: int
    replicas: int


def heavy_tail_divergence(k_list: list[float], n: int, replicas: int,
                          seed: int = 0) -> HeavyTailTable:
    """Empirical check that truncated means converge while the full mean diverges.

    Shipped distribution: Pareto with tail index 1 (P{X > t} = 1/t for
    t >= 1), so E[min(X, k)] = 1 + log k in closed form while E[X] is
    infinite and the untruncated running mean drifts like log n.
    """
    if n < 1 or replicas < 1:
        raise ConfigError("need positive n and replicas")
    if any(k < 1 for k in k_list):
        raise ConfigError("truncation levels must be >= 1")
    sums = {k: 0.0 for k in k_list}
    sq_sums = {k: 0.0 for k in k_list}
    finals = np.empty(replicas)
    total = 0
    for rep in range(replicas):
        u = NoiseStream(1.0, (seed, 0x9A, rep)).uniform01_block(0, n)
        x = 1.0 / (1.0 - u)  # Pareto(1) on [1, inf)
        finals[rep] = float(x.mean())
        for k in k_list:
            y = np.minimum(x, k)
            sums[k] += float(y.sum())
            sq_sums[k] += float((y * y).sum())
        total += n
    rows = []
    for k in k_list:
        mean = sums[k] / total
        var = max(sq_sums[k] / total - mean * mean, 0.0)
        se = math.sqrt(var / total)
        expected = 1.0 + math.log(k)
        rows.append(HeavyTailRow(k=k, truncated_mean=mean, expected=expected,
                                 std_err=se,
                                 within_3sigma=abs(mean - expected) <= 3.0 * se + 1e-12))
    return HeavyTailTable(rows=tuple(rows), untruncated_final_means=finals,
                          n=n, replicas=replicas)
