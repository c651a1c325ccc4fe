"""Ergodic statistics: Birkhoff averages, Lyapunov exponents, tail curves.

The two Birkhoff sums of interest along an orbit are

    S_n = (1/n) sum_{i<n} log(1/|f'(x_i)|)          (Lyapunov summand)
    Z_n = (1/n) sum_{i<n} -log dist_delta(x_i, C)   (critical recurrences)

where dist_delta truncates to 1 outside the delta-neighbourhood of the
critical set, so orbit segments that stay clear contribute nothing to Z_n.
Large-deviation tails of both are estimated by replica Monte Carlo with
initial points rejected from the shrinking exclusion ball around C.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import RandomOrbit, orbit, orbit_states_only
from .errors import ConfigError
from .models import MapModel
from .noise import NoiseStream


def birkhoff_S(orb: RandomOrbit, n: int) -> float:
    """(1/n) sum_{i=0}^{n-1} log(1/|f'(x_i)|)."""
    if not (1 <= n <= orb.length):
        raise ConfigError(f"need 1 <= n <= orbit length, got n={n}")
    return float(orb.log_inv_cumsum[n] / n)


def birkhoff_Z(orb: RandomOrbit, delta: float, n: int) -> float:
    """(1/n) sum_{i=0}^{n-1} -log dist_delta(x_i, C)."""
    if not (0.0 < delta < 0.5):
        raise ConfigError("truncation radius delta must lie in (0, 1/2)")
    if not (1 <= n <= orb.length):
        raise ConfigError(f"need 1 <= n <= orbit length, got n={n}")
    d = orb.critical_distances[:n]
    close = d <= delta
    if not np.any(close):
        return 0.0
    return float(-np.log(d[close]).sum() / n)


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_hat: float
    std_err: float
    n_steps: int
    n_replicas: int
    burn_in: int
    model: str = ""
    sigma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.lambda_hat) or self.std_err < 0.0:
            raise ConfigError("degenerate Lyapunov estimate")


def estimate_lyapunov(model: MapModel, sigma: float, burn_in: int, n_steps: int,
                      n_replicas: int, seed: int) -> LyapunovEstimate:
    """Replica mean of birkhoff_S after burn-in.

    Models with a constant derivative have S_n identically equal to that
    constant, so the estimate short-circuits to the exact value with zero
    standard error; everything else runs per-replica orbits on independent
    counter-based streams.
    """
    if burn_in < 0 or n_steps < 1000 or n_replicas < 1:
        raise ConfigError("need burn_in >= 0, n_steps >= 1000, n_replicas >= 1")
    if model.constant_log_inv_deriv is not None:
        lam = model.constant_log_inv_deriv
        return LyapunovEstimate(lam, 0.0, n_steps, n_replicas, burn_in,
                                model=model.name, sigma=sigma)
    vals = np.empty(n_replicas)
    for r in range(n_replicas):
        stream = NoiseStream(sigma, (seed, 0xE5, r))
        x0 = float(NoiseStream(1.0, (seed, 0x51, r)).uniform01_block(0, 1)[0])
        if burn_in:
            x0 = orbit_states_only(model, stream, x0, burn_in)
        orb = orbit(model, stream.shifted(burn_in), x0, n_steps)
        vals[r] = birkhoff_S(orb, n_steps)
    lam = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / math.sqrt(n_replicas)) if n_replicas > 1 else 0.0
    if lam >= 0.0:
        warnings.warn(f"lambda_hat = {lam:.4f} >= 0: ergodic negativity hypothesis fails "
                      f"for model {model.name}", RuntimeWarning)
    return LyapunovEstimate(lam, err, n_steps, n_replicas, burn_in,
                            model=model.name, sigma=sigma)


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope, intercept, and R^2 of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ConfigError("linear fit needs at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class TailRow:
    n: int
    prob_S: float
    prob_Z: float
    hits_S: int
    hits_Z: int
    replicas: int
    insufficient_S: bool
    insufficient_Z: bool


@dataclass(frozen=True)
class TailCurve:
    epsilon: float
    delta: float
    rows: tuple[TailRow, ...]
    fitted_rate: float          # slope of -log prob_S against n (rows with >= 10 hits)
    fit_r2: float
    fitted_rate_Z: float
    fit_r2_Z: float
    lambda_hat: float
    rejected_starts: int

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if ns != sorted(ns):
            raise ConfigError("tail rows must be sorted by n")


def _tail_samples(model: MapModel, sigma: float, delta: float, n_list: list[int],
                  n_replicas: int, seed: int, reject_radius: float):
    """Ensemble partial sums of S and Z at each requested n.

    Returns (S_sums, Z_sums, rejected) where the sums are dicts n -> array of
    un-normalized sums over the first n steps, shared across all rows (one
    ensemble; the exclusion ball is the largest one, so every row's
    precondition holds).
    """
    n_max = max(n_list)
    targets = set(n_list)
    starts = NoiseStream(1.0, (seed, 0xB0))
    x = np.empty(0)
    rejected = 0
    gen_at = 0
    while x.size < n_replicas:
        batch = starts.uniform01_block(gen_at, max(n_replicas, 4096))
        gen_at += batch.size
        ok = model.critical_distance(batch) > reject_radius
        rejected += int(batch.size - ok.sum())
        x = np.concatenate([x, batch[ok]])
    x = x[:n_replicas].copy()

    wstream = NoiseStream(sigma, (seed, 0xC1))
    S_acc = np.zeros(n_replicas)
    Z_acc = np.zeros(n_replicas)
    S_out: dict[int, np.ndarray] = {}
    Z_out: dict[int, np.ndarray] = {}
    f = model.eval_raw
    for i in range(n_max):
        S_acc += np.log(model.inv_deriv_norm(x))
        d = model.critical_distance(x)
        close = d <= delta
        if np.any(close):
            Z_acc[close] -= np.log(d[close])
        w = wstream.block(i * n_replicas, n_replicas)
        x = np.mod(f(x) + w, 1.0)
        if (i + 1) in targets:
            S_out[i + 1] = S_acc.copy()
            Z_out[i + 1] = Z_acc.copy()
    return S_out, Z_out, rejected


def ldp_tail(model: MapModel, sigma: float, epsilon: float, delta: float,
             n_list: list[int], n_replicas: int, seed: int,
             lambda_hat: float | None = None) -> TailCurve:
    """Monte Carlo tails P{S_n >= lambda_hat + eps} and P{Z_n >= eps} per n.

    Rows that never saw the event carry the upper bound 3/replicas and an
    insufficient-hits flag; the log-linear rate fit uses only rows with at
    least 10 hits.
    """
    if epsilon <= 0.0:
        raise ConfigError("epsilon must be positive")
    if not (0.0 < delta < 0.5):
        raise ConfigError("delta must lie in (0, 1/2)")
    if not n_list or sorted(n_list) != list(n_list):
        raise ConfigError("n_list must be non-empty and sorted")
    if n_replicas < 1:
        raise ConfigError("need at least one replica")
    if lambda_hat is None:
        lam_est = estimate_lyapunov(model, sigma, burn_in=1000, n_steps=100_000,
                                    n_replicas=4, seed=seed ^ 0x7A)
        lambda_hat = lam_est.lambda_hat

    reject_radius = math.exp(-epsilon * min(n_list))
    S_out, Z_out, rejected = _tail_samples(model, sigma, delta, n_list, n_replicas,
                                           seed, reject_radius)

    rows = []
    for n in n_list:
        hits_S = int(np.count_nonzero(S_out[n] >= n * (lambda_hat + epsilon)))
        hits_Z = int(np.count_nonzero(Z_out[n] >= n * epsilon))
        ins_S, ins_Z = hits_S == 0, hits_Z == 0
        prob_S = 3.0 / n_replicas if ins_S else hits_S / n_replicas
        prob_Z = 3.0 / n_replicas if ins_Z else hits_Z / n_replicas
        rows.append(TailRow(n, prob_S, prob_Z, hits_S, hits_Z, n_replicas, ins_S, ins_Z))

    def fit(select_hits, select_prob):
        pts = [(r.n, select_prob(r)) for r in rows if select_hits(r) >= 10]
        if len(pts) < 2:
            return 0.0, 0.0
        ns = np.array([p[0] for p in pts], dtype=float)
        nl = np.array([-math.log(p[1]) for p in pts])
        slope, _, r2 = linear_fit(ns, nl)
        return slope, r2

    rate_S, r2_S = fit(lambda r: r.hits_S, lambda r: r.prob_S)
    rate_Z, r2_Z = fit(lambda r: r.hits_Z, lambda r: r.prob_Z)
    return TailCurve(epsilon=epsilon, delta=delta, rows=tuple(rows),
                     fitted_rate=rate_S, fit_r2=r2_S,
                     fitted_rate_Z=rate_Z, fit_r2_Z=r2_Z,
                     lambda_hat=lambda_hat, rejected_starts=rejected)


@dataclass(frozen=True)
class Histogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    freq: np.ndarray


def stationary_histogram(model: MapModel, sigma: float, bins: int, n_steps: int,
                         seed: int, burn_in: int = 10_000) -> Histogram:
    """Occupation frequencies of one long orbit after burn-in; sums to 1."""
    if bins < 16:
        raise ConfigError("need at least 16 bins")
    if n_steps < 1:
        raise ConfigError("need at least one post-burn-in step")
    stream = NoiseStream(sigma, (seed, 0xD2))
    x0 = float(NoiseStream(1.0, (seed, 0xD3)).uniform01_block(0, 1)[0])
    if burn_in:
        x0 = orbit_states_only(model, stream, x0, burn_in)
    counts = np.zeros(bins, dtype=np.int64)
    f = model.eval_raw
    x = x0
    done = 0
    chunk = 65536
    offset = burn_in
    while done < n_steps:
        m = min(chunk, n_steps - done)
        w = stream.block(offset + done, m).tolist()
        buf = np.empty(m)
        for i in range(m):
            buf[i] = x
            x = (f(x) + w[i]) % 1.0
        idx = np.minimum((buf * bins).astype(np.int64), bins - 1)
        counts += np.bincount(idx, minlength=bins)
        done += m
    edges = np.arange(bins + 1) / bins
    return Histogram(bin_lo=edges[:-1], bin_hi=edges[1:], freq=counts / n_steps)
