"""Hyperbolic times, sparse families, Young times, and ball stopping times.

A time n is hyperbolic for an orbit when every backward window [k, n)
contracts at rate sigma^2 per step in the inverse-derivative product while
the orbit keeps a polynomially decaying truncated distance from the critical
set.  Two indexings of the distance condition are shipped: ``paper_literal``
puts exponent b*(n-k) at the point f^{n-k}(x) (so the requirement is a fixed
per-time condition dist_r(x_j) >= sigma^(b*j)), while ``standard_alves``
anchors the exponent at the window offset (dist_r(x_{n-k}) >= sigma^(b*k),
strongest near the hyperbolic time itself).

Young times are sparse hyperbolic times at which, additionally, the
delta1-ball around the orbit point admits a certified covering event for the
calibrated reference set under the shifted noise.  Ball stopping times lift
this from points to intervals via a deterministic witness grid.

All threshold comparisons carry an absolute log-space slack LOG_TOL so that
exact boundary cases (the doubling map at sigma^2 = 1/2) resolve the way the
real-number definition does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covering import CoveringEvent, ReferenceCalibration, detect_covering
from .dynamics import RandomOrbit, orbit
from .enclosure import Ball
from .errors import ConfigError, CriticalHit, HorizonExceeded
from .models import MapModel, wrap01
from .noise import NoiseStream
from .stats import linear_fit

LOG_TOL = 1e-9

VARIANTS = ("paper_literal", "standard_alves")


@dataclass(frozen=True)
class HTParams:
    """Detection parameters; sigma is the contraction base (config key ht_sigma)."""

    sigma: float
    b: float
    r: float
    sparsity_N: int = 0
    variant: str = "paper_literal"

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ConfigError("contraction base must lie in (0, 1)")
        if not (0.0 < self.b < 0.5):
            raise ConfigError("b must lie in (0, 1/2)")
        if self.r <= 0.0:
            raise ConfigError("truncation radius must be positive")
        if self.sparsity_N < 0:
            raise ConfigError("sparsity must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")

    @property
    def log_sigma2(self) -> float:
        return 2.0 * math.log(self.sigma)


def _log_dist_r(orb: RandomOrbit, r: float) -> np.ndarray:
    """log of the r-truncated critical distance per state (0 where dist > r)."""
    d = orb.critical_distances
    out = np.zeros_like(d)
    close = d <= r
    if np.any(close):
        out[close] = np.log(d[close])
    return out


def is_hyperbolic_time(orb: RandomOrbit, n: int, params: HTParams) -> bool:
    """Direct check of the definition at a single time."""
    if not (1 <= n <= orb.length):
        raise ConfigError(f"need 1 <= n <= orbit length, got {n}")
    L = orb.log_inv_cumsum
    ks = np.arange(n)
    if not np.all(L[n] - L[ks] <= (n - ks) * params.log_sigma2 + LOG_TOL):
        return False
    ld = _log_dist_r(orb, params.r)[1:n + 1]  # points x_1 .. x_n
    j = np.arange(1, n + 1)
    logs = math.log(params.sigma)
    if params.variant == "paper_literal":
        thresh = params.b * j * logs
    else:
        thresh = params.b * (n - j) * logs
    return bool(np.all(ld >= thresh - LOG_TOL))


def hyperbolic_times(orb: RandomOrbit, params: HTParams,
                     horizon: int | None = None) -> np.ndarray:
    """All hyperbolic times up to the horizon, via prefix extrema (O(n))."""
    n_max = orb.length if horizon is None else min(horizon, orb.length)
    L = orb.log_inv_cumsum[:n_max + 1]
    j = np.arange(n_max + 1)
    G = L - j * params.log_sigma2
    prod_ok = G[1:] <= np.minimum.accumulate(G)[:-1] + LOG_TOL

    ld = _log_dist_r(orb, params.r)[:n_max + 1]
    logs = math.log(params.sigma)
    if params.variant == "paper_literal":
        ok_j = ld[1:] >= params.b * j[1:] * logs - LOG_TOL
        dist_ok = np.logical_and.accumulate(ok_j)
    else:
        c = -params.b * logs
        W = ld[1:] - c * j[1:]
        dist_ok = np.minimum.accumulate(W) >= -c * j[1:] - LOG_TOL
    return np.nonzero(prod_ok & dist_ok)[0] + 1


def sparse_hyperbolic_times(orb: RandomOrbit, params: HTParams,
                            horizon: int | None = None) -> np.ndarray:
    """Greedy N-sparse extraction: tau_1 = first hyperbolic time, then the
    first one exceeding tau_{i-1} + N."""
    times = hyperbolic_times(orb, params, horizon)
    if times.size == 0:
        return times
    out = [int(times[0])]
    gap = params.sparsity_N
    while True:
        nxt = np.searchsorted(times, out[-1] + gap, side="right")
        if nxt >= times.size:
            break
        out.append(int(times[nxt]))
    return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True)
class YoungWitness:
    time: int
    event: CoveringEvent


@dataclass(frozen=True)
class TimeRecord:
    """Per-orbit ledger of hyperbolic, sparse, and Young times."""

    orbit: RandomOrbit
    params: HTParams
    hyperbolic_times: np.ndarray
    sparse_times: np.ndarray
    young_times: np.ndarray
    witnesses: tuple[YoungWitness, ...]
    density_profile: np.ndarray  # rows (n, |Y_n| / n)

    def __post_init__(self):
        st = set(self.sparse_times.tolist())
        ht = set(self.hyperbolic_times.tolist())
        if not st <= ht or not set(self.young_times.tolist()) <= st:
            raise ConfigError("time families must nest: young <= sparse <= hyperbolic")


def young_times(orb: RandomOrbit, params: HTParams, calib: ReferenceCalibration,
                profile_points: int = 64) -> TimeRecord:
    """Sparse times whose shifted noise certifies a covering event for the
    delta1-ball around the orbit point."""
    if orb.noise is None:
        raise ConfigError("orbit must carry its noise stream for Young-time detection")
    hyp = hyperbolic_times(orb, params)
    sparse = sparse_hyperbolic_times(orb, params)
    young = []
    wits = []
    for i in sparse.tolist():
        ball = Ball(float(orb.states[i]), calib.delta1)
        ev = detect_covering(orb.model, orb.noise.shifted(i), ball, calib.J,
                             calib.N, calib.iota)
        if ev is not None:
            young.append(i)
            wits.append(YoungWitness(time=i, event=ev))
    young_arr = np.asarray(young, dtype=np.int64)
    ns = np.unique(np.linspace(1, orb.length, min(profile_points, orb.length)).astype(np.int64))
    dens = np.searchsorted(young_arr, ns, side="right") / ns
    return TimeRecord(orbit=orb, params=params, hyperbolic_times=hyp,
                      sparse_times=sparse, young_times=young_arr,
                      witnesses=tuple(wits),
                      density_profile=np.column_stack([ns, dens]))


@dataclass(frozen=True)
class BallStoppingTime:
    """First admissible Young time of a witness inside the interval.

    ``m_value`` is the Young time itself (as in the ball Young-time
    definition); ``cover_time`` = m_value + covering step is the first time
    the reference set is certifiably covered, which is what renewal chaining
    shifts by.
    """

    interval: Ball
    m_value: float  # integer when found, inf at the horizon
    n_min: int
    horizon: int
    found: bool
    witness_x: float | None = None
    witness_index: int | None = None
    event: CoveringEvent | None = None

    @property
    def cover_time(self) -> float:
        if not self.found:
            return math.inf
        return self.m_value + self.event.step


WITNESS_GRID = 17  # odd, so the grid contains the center


def admissible_threshold(interval: Ball, delta1: float, sigma: float) -> int:
    """Least admissible Young time: the contracted pullback of the delta1
    ball must fit inside the interval, which takes
    ceil(log(2*delta1/|I|) / log(1/sigma)) steps at contraction rate sigma."""
    ratio = 2.0 * delta1 / interval.diameter
    if ratio <= 1.0:
        return 0
    return int(math.ceil(math.log(ratio) / math.log(1.0 / sigma) - 1e-12))


def ball_young_time(model: MapModel, noise: NoiseStream, interval: Ball,
                    params: HTParams, calib: ReferenceCalibration,
                    horizon: int) -> BallStoppingTime:
    """Scan the witness grid in time order for the first admissible Young time.

    Raises HorizonExceeded (carrying the partial record) when no witness
    produces an admissible Young time within the horizon.
    """
    if interval.diameter > 2.0 * calib.delta1 + 1e-12:
        raise ConfigError("interval larger than the Young ball: |I| must be <= 2*delta1")
    n_min = admissible_threshold(interval, calib.delta1, params.sigma)
    if horizon < max(n_min, 1):
        raise ConfigError(f"horizon {horizon} below the admissibility threshold {n_min}")

    # interior grid: witnesses at |x - center| <= |I|/2, endpoints excluded so
    # pullback intervals around a boundary witness stay inside the interval
    grid = np.linspace(interval.center - interval.radius,
                       interval.center + interval.radius, WITNESS_GRID + 2)[1:-1]
    candidates: list[tuple[int, int]] = []  # (time, witness index)
    orbits = {}
    for wi, x0 in enumerate(grid):
        # admissibility is per witness: the contracted delta1-ball around the
        # witness must fit inside the interval, so off-center witnesses need
        # deeper times than the interval-level threshold
        room = interval.radius - abs(float(x0) - interval.center)
        w_min = max(n_min, admissible_threshold(Ball(float(x0), room), calib.delta1,
                                                params.sigma), 1)
        if w_min > horizon:
            continue
        try:
            orb = orbit(model, noise, wrap01(float(x0)), horizon)
        except CriticalHit:
            continue  # measure-zero grid point; the remaining witnesses stand
        orbits[wi] = orb
        for t in sparse_hyperbolic_times(orb, params).tolist():
            if t >= w_min:
                candidates.append((t, wi))
    candidates.sort()
    for t, wi in candidates:
        orb = orbits[wi]
        ball = Ball(float(orb.states[t]), calib.delta1)
        ev = detect_covering(model, noise.shifted(t), ball, calib.J, calib.N, calib.iota)
        if ev is not None:
            return BallStoppingTime(interval=interval, m_value=float(t), n_min=n_min,
                                    horizon=horizon, found=True,
                                    witness_x=float(orb.x0), witness_index=wi, event=ev)
    raise HorizonExceeded(BallStoppingTime(interval=interval, m_value=math.inf,
                                           n_min=n_min, horizon=horizon, found=False))


@dataclass(frozen=True)
class ExpansionCheck:
    """Contraction and distortion diagnostics at one detected Young time."""

    time: int
    preimage_lo: float
    preimage_hi: float
    pairs: int
    contraction_violations: int
    max_distortion_ratio: float  # max of |log df^n(z) - log df^n(y)| / |f^n z - f^n y|


def expansion_checks(orb: RandomOrbit, n: int, calib: ReferenceCalibration,
                     params: HTParams, n_pairs: int = 8, seed: int = 0,
                     tol: float = 1e-9) -> ExpansionCheck:
    """Backward-expansion checks on the witness preimage interval at time n.

    The preimage interval of the delta1-ball around x_n is computed by the
    certified pullback along the orbit's branch route; sampled pairs (z, y)
    inside it must contract backwards at rate sigma per step,

        dist(z_{n-k}, y_{n-k}) <= sigma^k * dist(z_n, y_n) + tol,

    and the log-derivative sums along the two orbits must stay within a
    distortion constant times the final separation.  Orbits of the sampled
    pair run in working precision scaled to n, since the pair separation at
    time 0 sits far below double resolution for long windows.
    """
    import mpmath
    from mpmath import mp, mpf

    from .precision import block_precision, branch_route, mp_orbit, pull_interval

    if orb.noise is None:
        raise ConfigError("orbit must carry its noise stream")
    w = orb.noise.block(0, n)
    with mp.workprec(block_precision(n) + 64):
        route = branch_route(orb.model, w, mpf(float(orb.x0)), n)
        xn = float(orb.states[n])
        lo_t = xn - calib.delta1
        res = pull_interval(orb.model, w, route, lo_t, xn + calib.delta1)
        lo, hi = res.lo, res.hi
        rng = np.random.default_rng(seed)
        viol = 0
        max_ratio = 0.0
        for _ in range(n_pairs):
            u, v = sorted(rng.random(2).tolist())
            z0 = lo + (hi - lo) * mpf(u)
            y0 = lo + (hi - lo) * mpf(v)
            if z0 == y0:
                continue
            zs = mp_orbit(orb.model, w, z0, n)
            ys = mp_orbit(orb.model, w, y0, n)

            def cdist(a, b):
                d = a - b
                d = d - mpmath.floor(d + mpf("0.5"))
                return abs(d)

            sep_n = cdist(zs[n], ys[n])
            if sep_n == 0:
                continue
            for k in range(1, n + 1):
                lhs = float(cdist(zs[n - k], ys[n - k]))
                rhs = params.sigma ** k * float(sep_n) + tol
                if lhs > rhs:
                    viol += 1
                    break
            log_z = sum(mpmath.log(abs(orb.model.deriv(zs[i]))) for i in range(n))
            log_y = sum(mpmath.log(abs(orb.model.deriv(ys[i]))) for i in range(n))
            ratio = float(abs(log_z - log_y) / sep_n)
            max_ratio = max(max_ratio, ratio)
        return ExpansionCheck(time=n, preimage_lo=float(lo), preimage_hi=float(hi),
                              pairs=n_pairs, contraction_violations=viol,
                              max_distortion_ratio=max_ratio)


# develop-time calibration: the largest distortion ratio observed on logistic16
# Young times stayed near 2 across broad sampling; frozen with ample margin
DISTORTION_CONSTANTS = {"doubling": 1e-6, "ternary": 1e-6, "logistic16": 10.0}


@dataclass(frozen=True)
class YoungTailRow:
    m: int
    prob: float
    hits: int
    replicas: int
    insufficient: bool


@dataclass(frozen=True)
class YoungTailTable:
    theta1: float
    rows: tuple[YoungTailRow, ...]
    fitted_rate: float
    fit_r2: float


def young_tail_stats(model: MapModel, sigma: float, params: HTParams,
                     calib: ReferenceCalibration, n_list: list[int],
                     replicas: int, theta1: float, seed: int = 0) -> YoungTailTable:
    """Monte Carlo tails P{|Y_m| <= theta1 * m} with a log-linear decay fit."""
    if theta1 <= 0.0:
        raise ConfigError("theta1 must be positive")
    if sorted(n_list) != list(n_list) or not n_list:
        raise ConfigError("n_list must be non-empty and sorted")
    m_max = max(n_list)
    counts = {m: 0 for m in n_list}
    for rep in range(replicas):
        stream = NoiseStream(sigma, (seed, 0x4E, rep))
        x0 = float(NoiseStream(1.0, (seed, 0x4F, rep)).uniform01_block(0, 1)[0])
        try:
            orb = orbit(model, stream, x0, m_max)
        except CriticalHit:
            continue
        rec = young_times(orb, params, calib, profile_points=1)
        for m in n_list:
            y_m = int(np.searchsorted(rec.young_times, m, side="right"))
            if y_m <= theta1 * m:
                counts[m] += 1
    rows = []
    for m in n_list:
        hits = counts[m]
        ins = hits == 0
        prob = 3.0 / replicas if ins else hits / replicas
        rows.append(YoungTailRow(m=m, prob=prob, hits=hits, replicas=replicas,
                                 insufficient=ins))
    pts = [(r.m, r.prob) for r in rows if r.hits >= 10]
    if len(pts) >= 2:
        slope, _, r2 = linear_fit(np.array([p[0] for p in pts], dtype=float),
                                  np.array([-math.log(p[1]) for p in pts]))
    else:
        slope, r2 = 0.0, 0.0
    return YoungTailTable(theta1=theta1, rows=tuple(rows), fitted_rate=slope, fit_r2=r2)
