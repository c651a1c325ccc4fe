"""Covering events: a sub-ball of I whose i-step image contains the reference
set J while its whole forward tube stays iota-clear of the critical set.

Detection is a deterministic search over the step index and a dyadic
bisection tree of sub-balls: the full ball is tried first; a candidate is
refined only when it covers J at some step but fails the clearance
certificate there, because halving can fix clearance but can never create
covering a parent lacked.  Certificates are two-sided: covering is checked
on inner hulls, clearance on outer hulls.

Calibration produces the reference tuple (J, N, iota) plus the empirical
covering rate rho_hat: a pilot orbit must visit every cell of a
delta-partition and land in the center of J (this fixes the recipe horizon
and the clearance margin), then the event horizon is trimmed to the
smallest N at which a pilot Monte Carlo certifies events for every probe
ball, and rho_hat is measured fresh on a grid of balls at the floor size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import orbit
from .enclosure import (ARC_CAP, Ball, FULL_ENCLOSURE, IntervalEnclosure,
                        OUTER, INNER, ball_enclosure, min_critical_distance,
                        propagate_step)
from .errors import CalibrationFailed, ConfigError
from .models import MapModel, wrap01
from .noise import NoiseStream


@dataclass(frozen=True)
class CoveringEvent:
    step: int
    sub_ball: Ball
    min_crit_dist: float
    target: Ball


@dataclass(frozen=True)
class CalibrationSearch:
    """Knobs for calibrate_reference; defaults suit the shipped models."""

    eta: float | None = None          # |J| diameter; default epsilon_scale
    orbit_cap: int = 200_000
    n_max: int = 24                   # hard ceiling on the event horizon
    pilot_replicas: int = 16
    rho_replicas: int = 200
    ball_grid: int = 16
    rho_target: float = 1.0           # pilot rate the trimmed N must reach
    target_region: Ball | None = None  # J is centered where the orbit hits this
    iota_frac: float = 0.5


@dataclass(frozen=True)
class ReferenceCalibration:
    J: Ball
    N: int
    iota: float
    rho_hat: float
    epsilon_scale: float              # ball-size floor |I| covered by rho_hat
    delta1: float                     # Young-ball radius (= epsilon_scale / 2)
    model: str
    sigma: float
    seed: int
    n_recipe: int = 0                 # recipe horizon: all cells visited, then J centered
    min_orbit_crit_dist: float = 1.0
    visited_cells: int = 0
    total_cells: int = 0

    def __post_init__(self):
        if self.rho_hat <= 0.0 or self.J.diameter <= 0.0:
            raise ConfigError("calibration must carry a positive rate and a non-trivial J")

    def to_dict(self) -> dict:
        return {
            "model": self.model, "sigma": self.sigma, "seed": self.seed,
            "J": {"center": self.J.center, "radius": self.J.radius},
            "N": self.N, "iota": self.iota, "rho_hat": self.rho_hat,
            "epsilon_scale": self.epsilon_scale, "delta1": self.delta1,
            "n_recipe": self.n_recipe,
            "min_orbit_crit_dist": self.min_orbit_crit_dist,
            "visited_cells": self.visited_cells, "total_cells": self.total_cells,
        }

    @staticmethod
    def from_dict(d: dict) -> "ReferenceCalibration":
        return ReferenceCalibration(
            J=Ball(d["J"]["center"], d["J"]["radius"]), N=d["N"], iota=d["iota"],
            rho_hat=d["rho_hat"], epsilon_scale=d["epsilon_scale"], delta1=d["delta1"],
            model=d["model"], sigma=d["sigma"], seed=d["seed"],
            n_recipe=d.get("n_recipe", 0),
            min_orbit_crit_dist=d.get("min_orbit_crit_dist", 1.0),
            visited_cells=d.get("visited_cells", 0), total_cells=d.get("total_cells", 0),
        )


def image_enclosure(model: MapModel, noise_prefix, I: Ball,
                    steps: int, cap: int = ARC_CAP) -> list[dict]:
    """Per-step inner and outer hulls of the forward images of I.

    ``noise_prefix`` is indexable noise (array or NoiseStream); entry j-1
    drives step j.  Returns one {"inner": ..., "outer": ...} per step.
    """
    if steps < 1:
        raise ConfigError("need at least one step")
    if isinstance(noise_prefix, NoiseStream):
        w = noise_prefix.block(0, steps)
    else:
        w = np.asarray(noise_prefix, dtype=float)
        if w.size < steps:
            raise ConfigError("noise prefix shorter than the requested horizon")
    inner = ball_enclosure(I)
    outer = inner
    out = []
    for j in range(steps):
        inner = propagate_step(model, inner, float(w[j]), INNER, cap=cap)
        outer = propagate_step(model, outer, float(w[j]), OUTER, cap=cap)
        out.append({"inner": inner, "outer": outer})
    return out


class _Candidate:
    """Incremental propagation state of one sub-ball in the bisection search."""

    __slots__ = ("ball", "depth", "inner", "outer", "min_dist", "clear", "expanded")

    def __init__(self, model: MapModel, ball: Ball, depth: int, iota: float):
        self.ball = ball
        self.depth = depth
        self.inner = ball_enclosure(ball)
        self.outer = self.inner
        self.min_dist = min_critical_distance(model, self.outer)
        self.clear = self.min_dist > iota
        self.expanded = False

    def advance(self, model: MapModel, w: float, iota: float, cap: int) -> None:
        self.inner = propagate_step(model, self.inner, w, INNER, cap=cap)
        self.outer = propagate_step(model, self.outer, w, OUTER, cap=cap)
        self.min_dist = min(self.min_dist, min_critical_distance(model, self.outer))
        self.clear = self.clear and self.min_dist > iota


def detect_covering(model: MapModel, noise, I: Ball, J: Ball, N: int, iota: float,
                    depth_cap: int = 20, cap: int = ARC_CAP,
                    work_cap: int = 4096) -> CoveringEvent | None:
    """First certified covering event, or None when the search exhausts.

    The step index runs outermost; within a step, candidates whose outer tube
    touches the iota-band around the critical set are split in place, so the
    live set is always an adaptive dyadic decomposition of the clear part of
    I.  Clearance is a prefix property, so unclear candidates can never
    certify later and are dropped once split (their children carry on).
    Splitting decisions depend only on steps already processed, which makes
    the returned event, including its step, invariant under enlarging N.
    ``work_cap`` bounds the total number of candidates ever spawned.
    """
    if I.diameter <= 0.0 or J.diameter <= 0.0:
        raise ConfigError("balls must have positive size")
    if N < 1 or iota < 0.0:
        raise ConfigError("need N >= 1 and iota >= 0")
    if isinstance(noise, NoiseStream):
        w = noise.block(0, N)
    else:
        w = np.asarray(noise, dtype=float)[:N]
        if w.size < N:
            raise ConfigError("noise shorter than the horizon")
    w = [float(v) for v in w]

    j_lo, j_len = J.arc()
    root = _Candidate(model, I, 0, iota)
    spawned = 1
    live: list[tuple[_Candidate, int]] = [(root, 0)]  # (candidate, steps already advanced)
    for step in range(1, N + 1):
        work = live
        live = []
        while work:
            c, done = work.pop(0)
            while done < step:
                c.advance(model, w[done], iota, cap)
                done += 1
            if c.inner.is_empty:
                continue  # can never cover again, and split needs an unclear tube
            if c.clear:
                if c.inner.contains_arc(j_lo, j_len):
                    return CoveringEvent(step=step, sub_ball=c.ball,
                                         min_crit_dist=float(c.min_dist), target=J)
                live.append((c, step))
                continue
            # unclear: refine once, in place; the halves re-run from scratch
            if c.depth < depth_cap and spawned + 2 <= work_cap:
                spawned += 2
                work = [(_Candidate(model, h, c.depth + 1, iota), 0) for h in c.ball.halves()] + work
        if not live:
            return None
    return None


def _probe_balls(support_centers: np.ndarray, radius: float, count: int) -> list[Ball]:
    """Deterministic grid of probe balls over the visited support."""
    if support_centers.size == 0:
        return []
    idx = np.linspace(0, support_centers.size - 1, min(count, support_centers.size))
    return [Ball(float(support_centers[int(i)]), radius) for i in idx]


def calibrate_reference(model: MapModel, sigma: float, epsilon_scale: float,
                        search_cfg: CalibrationSearch | None = None,
                        seed: int = 0) -> ReferenceCalibration:
    """Empirical reference-set construction; see the module docstring.

    Raises CalibrationFailed when the pilot orbit misses partition cells
    within the cap (the ergodic component is smaller than assumed) or when no
    horizon up to n_max certifies events on every probe ball.
    """
    cfg = search_cfg or CalibrationSearch()
    if not (0.0 < epsilon_scale < 0.25):
        raise ConfigError("epsilon_scale must lie in (0, 1/4)")
    eta = cfg.eta if cfg.eta is not None else epsilon_scale
    delta = epsilon_scale / 4.0
    n_cells = int(math.ceil(1.0 / delta))
    delta1 = epsilon_scale / 2.0

    stream = NoiseStream(sigma, (seed, 0xCA))
    x0 = float(NoiseStream(1.0, (seed, 0xCB)).uniform01_block(0, 1)[0])
    orb = orbit(model, stream, x0, cfg.orbit_cap)
    cells = np.minimum((orb.states * n_cells).astype(np.int64), n_cells - 1)

    seen = np.zeros(n_cells, dtype=bool)
    t_all = None
    for t, c in enumerate(cells):
        if not seen[c]:
            seen[c] = True
            if seen.all():
                t_all = t
                break
    if t_all is None:
        missing = np.nonzero(~seen)[0].tolist()
        raise CalibrationFailed(
            f"pilot orbit visited {int(seen.sum())}/{n_cells} cells within {cfg.orbit_cap} steps",
            missing_cells=missing)

    # center J where the orbit lands inside the target region (or anywhere)
    region = cfg.target_region
    center_hit = None
    core = Ball(region.center, max(region.radius - eta / 2.0, eta / 8.0)) if region else None
    for t in range(t_all, orb.length + 1):
        x = float(orb.states[t])
        if core is None or core.contains_point(x):
            center_hit = (t, x)
            break
    if center_hit is None:
        raise CalibrationFailed("orbit never entered the requested target region after covering all cells")
    n_recipe, j_center = center_hit
    J = Ball(j_center, eta / 2.0)

    l_min = float(np.min(orb.critical_distances[:n_recipe + 1]))
    iota = cfg.iota_frac * l_min

    support_cells = np.nonzero(seen)[0]
    support_centers = (support_cells + 0.5) / n_cells
    probes = _probe_balls(support_centers, epsilon_scale / 2.0, cfg.ball_grid)

    def rate(n_try: int, replicas: int, tag: int) -> float:
        worst = 1.0
        for b_idx, ball in enumerate(probes):
            hits = 0
            for r in range(replicas):
                w = NoiseStream(sigma, (seed, tag, b_idx, r))
                if detect_covering(model, w, ball, J, n_try, iota) is not None:
                    hits += 1
            worst = min(worst, hits / replicas)
            if worst == 0.0:
                return 0.0
        return worst

    chosen_n = None
    best_n, best_rate = None, 0.0
    for n_try in range(2, cfg.n_max + 1):
        r = rate(n_try, cfg.pilot_replicas, 0xF1)
        if r > best_rate:
            best_n, best_rate = n_try, r
        if r >= cfg.rho_target:
            chosen_n = n_try
            break
    if chosen_n is None:
        if best_n is None:
            raise CalibrationFailed(
                f"no event horizon up to {cfg.n_max} certifies covering on every probe ball")
        chosen_n = best_n  # best pilot rate among horizons that certify at all

    rho_hat = rate(chosen_n, cfg.rho_replicas, 0xF2)
    if rho_hat <= 0.0:
        raise CalibrationFailed("final Monte Carlo rate collapsed to zero")
    return ReferenceCalibration(
        J=J, N=chosen_n, iota=iota, rho_hat=rho_hat,
        epsilon_scale=epsilon_scale, delta1=delta1,
        model=model.name, sigma=sigma, seed=seed, n_recipe=n_recipe,
        min_orbit_crit_dist=l_min, visited_cells=int(seen.sum()), total_cells=n_cells)
