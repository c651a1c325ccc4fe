"""Random horseshoe construction, certification, and symbolic shadowing.

Pipeline: split the calibrated reference set J into M disjoint balls, collect
each ball's renewal sequence of covering times (each renewal is a ball Young
time of the freshly shifted noise, so increments are iid by construction),
pick the pair of balls sharing the most simultaneous covering times, then
certify horseshoe clauses block by block between consecutive simultaneous
times n_k:

  (2.1/e1)  the full ball I_a maps over I_0 and I_1 across the block
            (double-precision inner enclosures; images go full-circle fast),
  (idk)     a witness sub-ball J(k)_{a,b} of I_a maps onto I_b
            (arbitrary-precision backward pullback along a branch route
            assembled from the stored renewal legs),
  (e2)      the inverse derivative of the block map on the witness is below
            1/kappa (certified sup from forward interval hulls),
  (e0)      a law-of-large-numbers proxy: n_K/K stays within 5 standard
            errors of the mean block increment.

Certificates serialize to JSON with the branch routes as witness data;
re-verification replays every route from scratch, so a tampered certificate
fails honestly.  Shadowing pulls a prescribed 0/1 itinerary back through the
certified routes to a point whose re-simulated orbit realizes the word.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from mpmath import mp, mpf

from .covering import ReferenceCalibration
from .enclosure import Ball, INNER, OUTER, ball_enclosure, propagate_step
from .errors import (ConfigError, EmptyIntersection, HorizonExceeded,
                     NoFeasibleM, PullbackEmpty)
from .hyperbolic import HTParams, ball_young_time
from .models import MapModel, get_model, wrap01
from .noise import NoiseStream
from .precision import (block_precision, branch_route, mp_orbit, mp_wrap01,
                        piece_domain, piece_range, pull_interval,
                        _invert_on_piece, _interval_inv_deriv_sup)


def lift_around(ref: float, lo: float, diameter: float) -> tuple[float, float]:
    """Endpoints of the arc (lo, diameter) lifted to the real line near ref."""
    start = ref + (wrap01(lo - ref + 0.5) - 0.5)
    return start, start + diameter


# ---------------------------------------------------------------------------
# renewal families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalLeg:
    start: int          # absolute time the leg starts (previous cover time)
    young_time: int     # relative Young time of the witness
    cover_step: int     # event step after the Young time
    cover_time: int     # absolute time J is certifiably covered
    witness_x: float    # witness position at leg start
    event_center: float
    event_radius: float


@dataclass
class CoverFamily:
    """Renewal sequence of covering times for one ball, with leg records.

    ``times`` are the absolute cover times; differences are iid by the
    renewal construction (each is the first admissible cover of the shifted
    noise).  ``counts(n)`` is the family size H_i^n.
    """

    index: int
    ball: Ball
    times: np.ndarray
    legs: tuple[RenewalLeg, ...]
    horizon: int
    partial: bool

    def counts(self, n: int) -> int:
        return int(np.searchsorted(self.times, n, side="right"))

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate([[0], self.times]))

    def lag1_autocorr(self) -> float:
        inc = self.increments.astype(float)
        if inc.size < 3:
            return 0.0
        a, b = inc[:-1] - inc.mean(), inc[1:] - inc.mean()
        denom = float(np.sum((inc - inc.mean()) ** 2))
        return float(np.sum(a * b) / denom) if denom > 0 else 0.0


def collect_cover_family(model: MapModel, noise: NoiseStream, ball: Ball,
                         params: HTParams, calib: ReferenceCalibration,
                         horizon: int, index: int = 0,
                         leg_horizon: int = 400) -> CoverFamily:
    """Iterate ball Young times on successively shifted noise up to the horizon.

    The shift after each renewal is the cover time (Young time plus covering
    step): that is the time the reference set is actually covered, which is
    what makes consecutive legs compose into onto-maps over whole blocks.
    """
    from .hyperbolic import admissible_threshold

    n_min = admissible_threshold(ball, calib.delta1, params.sigma)
    t = 0
    times: list[int] = []
    legs: list[RenewalLeg] = []
    partial = False
    while True:
        room = horizon - t
        if room <= max(n_min, 1):
            break
        try:
            rec = ball_young_time(model, noise.shifted(t), ball, params, calib,
                                  horizon=min(leg_horizon, room))
        except HorizonExceeded:
            partial = room > leg_horizon  # a true dead stream, not just the edge
            break
        cover = t + int(rec.cover_time)
        if cover > horizon:
            break
        legs.append(RenewalLeg(start=t, young_time=int(rec.m_value),
                               cover_step=rec.event.step, cover_time=cover,
                               witness_x=float(rec.witness_x),
                               event_center=rec.event.sub_ball.center,
                               event_radius=rec.event.sub_ball.radius))
        times.append(cover)
        t = cover
    return CoverFamily(index=index, ball=ball, times=np.asarray(times, dtype=np.int64),
                       legs=tuple(legs), horizon=horizon, partial=partial)


# ---------------------------------------------------------------------------
# ball splitting and pair selection
# ---------------------------------------------------------------------------

def split_reference(J: Ball, M: int) -> list[Ball]:
    """M disjoint balls of radius |J|/(4M) on an even grid inside J."""
    if M < 2:
        raise ConfigError("need at least two balls")
    diam = J.diameter
    radius = diam / (4.0 * M)
    lo = J.center - J.radius
    return [Ball(wrap01(lo + (2 * k + 1) * diam / (2.0 * M)), radius) for k in range(M)]


def choose_M(calib: ReferenceCalibration, C_hat: float,
             M_cap: int = 1024) -> tuple[int, float, float]:
    """Least M with M * V_M > 1, where V_M = 1 / (2 (C_hat + log(M / |J|)))."""
    J_len = calib.J.diameter
    curve = []
    for M in range(2, M_cap + 1):
        denom = C_hat + math.log(M / J_len)
        V = 1.0 / (2.0 * denom) if denom > 0 else math.inf
        curve.append((M, V))
        if denom > 0 and M * V > 1.0:
            Z = V / M - 1.0 / M ** 2
            return M, V, Z
    raise NoFeasibleM(curve)


@dataclass(frozen=True)
class PairSelection:
    i: int
    j: int
    times: np.ndarray
    counts: np.ndarray          # pairwise intersection counts at the horizon
    bonferroni_bound: float     # sum_j |H_j^T| - T


def find_pair(families: list[CoverFamily], horizon: int | None = None) -> PairSelection:
    """Pair with the most simultaneous covering times, with the Bonferroni check."""
    if len(families) < 2:
        raise ConfigError("need at least two families")
    T = horizon if horizon is not None else min(f.horizon for f in families)
    M = len(families)
    clipped = [f.times[f.times <= T] for f in families]
    counts = np.zeros((M, M), dtype=np.int64)
    best = (-1, (0, 1), np.empty(0, dtype=np.int64))
    for i in range(M):
        for j in range(i + 1, M):
            inter = np.intersect1d(clipped[i], clipped[j])
            counts[i, j] = counts[j, i] = inter.size
            if inter.size > best[0]:
                best = (inter.size, (i, j), inter)
    bound = float(sum(c.size for c in clipped) - T)
    if bound > 0:
        pairs = M * (M - 1) / 2
        if best[0] < bound / pairs - 1e-9:
            raise ConfigError("pairwise maximum below the Bonferroni lower bound; "
                              "family collection is inconsistent")
    if best[0] <= 0:
        raise EmptyIntersection("no pair shares covering times at this horizon; extend it")
    (i, j), times = best[1], best[2]
    return PairSelection(i=i, j=j, times=times, counts=counts, bonferroni_bound=bound)


def simultaneous_cover_times(model: MapModel, noise: NoiseStream, ball_i: Ball,
                             ball_j: Ball, params: HTParams,
                             calib: ReferenceCalibration, horizon: int,
                             families: tuple[CoverFamily, CoverFamily] | None = None,
                             leg_horizon: int = 400) -> np.ndarray:
    """Sorted common cover times of the two renewal sequences up to the horizon."""
    if families is None:
        fi = collect_cover_family(model, noise, ball_i, params, calib, horizon,
                                  index=0, leg_horizon=leg_horizon)
        fj = collect_cover_family(model, noise, ball_j, params, calib, horizon,
                                  index=1, leg_horizon=leg_horizon)
    else:
        fi, fj = families
    inter = np.intersect1d(fi.times[fi.times <= horizon], fj.times[fj.times <= horizon])
    if inter.size == 0:
        raise EmptyIntersection("the two renewal sequences never coincide at this horizon")
    return inter


def simultaneous_cover_times_inductive(model: MapModel, noise: NoiseStream,
                                       ball_i: Ball, ball_j: Ball, params: HTParams,
                                       calib: ReferenceCalibration, horizon: int,
                                       leg_horizon: int = 400) -> np.ndarray:
    """The stopping-time recursion: from each common time, co-scan the two
    freshly shifted renewal sequences until they coincide again.

    Testing hook for the renewal identity; the production path intersects
    whole families, which must agree with this.
    """
    out = []
    t = 0
    while t < horizon:
        ta = tb = t
        try:
            while True:
                if ta <= tb:
                    rec = ball_young_time(model, noise.shifted(ta), ball_i, params,
                                          calib, horizon=min(leg_horizon, horizon - ta))
                    ta += int(rec.cover_time)
                elif tb < ta:
                    rec = ball_young_time(model, noise.shifted(tb), ball_j, params,
                                          calib, horizon=min(leg_horizon, horizon - tb))
                    tb += int(rec.cover_time)
                if ta == tb and ta > t:
                    break
                if max(ta, tb) > horizon:
                    raise HorizonExceeded(None)
        except (HorizonExceeded, ConfigError):
            break
        if ta > horizon:
            break
        out.append(ta)
        t = ta
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# block routes and certification
# ---------------------------------------------------------------------------

def _arc_overlap(lo1: float, len1: float, lo2: float, len2: float) -> bool:
    """Whether two circle arcs (lo, length) intersect."""
    off = wrap01(lo2 - lo1)
    return off <= len1 or off + len2 >= 1.0


def _window_routes(model: MapModel, w_vals, target: tuple[float, float],
                   guide_arcs, route_cap: int = 16):
    """Branch routes through a short covering window whose backward preimage
    of the target is non-empty and meets the forward guide arcs.

    Deterministic DFS over (piece, lift offset); returns up to ``route_cap``
    (route, preimage) candidates in search order.  A candidate is admitted
    only when the whole shifted target fits inside the piece's raw range: a
    clipped fit would cover just part of the target and break the onto-chain
    downstream.  Window lengths are the calibrated event horizon (a handful
    of steps), so the search is cheap.
    """
    n = len(w_vals)
    out = []
    pieces = model.pieces
    pad = mpf(2) ** (-mp.prec + 24)
    slack = mpf(2) ** (-mp.prec + 30)

    def rec(level: int, tl: mpf, tu: mpf, route_rev: list[tuple[int, int]]):
        if len(out) >= route_cap:
            return
        if level < 0:
            out.append(([(p, o) for p, o in reversed(route_rev)], (tl, tu)))
            return
        w = mpf(float(w_vals[level]))
        for piece in range(len(pieces)):
            plo, phi = piece_domain(model, piece)
            rlo, rhi = piece_range(model, piece)
            k_lo = int(math.floor(rlo - float(tu) + float(w))) - 1
            k_hi = int(math.ceil(rhi - float(tl) + float(w))) + 1
            for off in range(k_lo, k_hi + 1):
                ylo, yhi = tl - w + off, tu - w + off
                if ylo < rlo - slack or yhi > rhi + slack:
                    continue  # partial fit: this offset cannot map onto the target
                a = _invert_on_piece(model, piece, ylo)
                b = _invert_on_piece(model, piece, yhi)
                lo, hi = (a, b) if a <= b else (b, a)
                lo = max(lo - pad, mpf(plo))
                hi = min(hi + pad, mpf(phi))
                if hi <= lo:
                    continue
                g_lo, g_len = guide_arcs[level]
                if not _arc_overlap(wrap01(float(lo)), float(hi - lo), g_lo, g_len):
                    continue
                rec(level - 1, lo, hi, route_rev + [(piece, off)])

    rec(n - 1, mpf(target[0]), mpf(target[1]), [])
    return out


def _leg_guide_arcs(model: MapModel, w_vals, sub_ball: Ball) -> list[tuple[float, float]]:
    """Outer arcs of the event sub-ball through the covering window, used to
    prune the window route search (entry ``level`` is the pre-step arc)."""
    arcs = []
    enc = ball_enclosure(Ball(sub_ball.center, sub_ball.radius + 1e-9))
    for w in w_vals:
        if enc.full or not enc.arcs:
            arcs.append((0.0, 1.0))
        else:
            # single conservative hull arc spanning the enclosure
            lo = enc.arcs[0][0]
            hi = max(wrap01(alo - lo) + aln for alo, aln in enc.arcs)
            arcs.append((lo, min(hi, 1.0)))
        enc = propagate_step(model, enc, float(w), OUTER)
    return arcs


def _assemble_block_route(model: MapModel, noise: NoiseStream, legs: list[RenewalLeg],
                          target_lift: tuple[float, float]):
    """Backward route through a block: per leg, search the covering window,
    then follow the witness orbit branches through the hyperbolic stretch.

    Returns (route, target at block start) or raises PullbackEmpty.
    """
    route_rev: list[tuple[int, int]] = []
    tl, tu = mpf(target_lift[0]), mpf(target_lift[1])
    for leg in reversed(legs):
        m, ic = leg.young_time, leg.cover_step
        w_window = noise.shifted(leg.start + m).block(0, ic)
        guides = _leg_guide_arcs(model, w_window,
                                 Ball(leg.event_center, leg.event_radius))
        cands = _window_routes(model, w_window, (tl, tu), guides)
        w_stretch = noise.shifted(leg.start).block(0, m)
        witness_orbit = mp_orbit(model, w_stretch, mpf(leg.witness_x), m)
        anchors = [float(p) for p in witness_orbit]
        stretch = branch_route(model, w_stretch, mpf(leg.witness_x), m)
        res, used_window = None, None
        for win_route, (wtl, wtu) in cands:
            try:
                # anchoring to the witness orbit pins the hyperbolic-ball
                # lineage and rejects translated preimages a wrong window
                # candidate would otherwise smuggle through
                res = pull_interval(model, w_stretch, stretch, wtl, wtu,
                                    anchors=anchors)
            except PullbackEmpty:
                continue
            used_window = win_route
            break
        if res is None:
            raise PullbackEmpty(f"no window route onto the target in the leg at {leg.start}")
        tl, tu = res.lo, res.hi
        route_rev.extend(reversed(used_window))
        route_rev.extend(reversed(res.route))
    return [x for x in reversed(route_rev)], (tl, tu)


@dataclass
class BlockWitness:
    a: int
    b: int
    route: list[tuple[int, int]]
    lo: str                      # decimal strings: doubles cannot hold them
    hi: str
    inv_deriv_bound: float
    ok_onto: bool
    ok_deriv: bool


@dataclass
class CertBlock:
    n_k: int
    n_k1: int
    e1_ok: bool                   # both full balls map over I_0 union I_1
    witnesses: dict[tuple[int, int], BlockWitness]


@dataclass
class HorseshoeCertificate:
    model: str
    sigma: float
    noise_seed: list[int]
    calib: dict
    params: dict
    pair: tuple[int, int]
    I0: Ball
    I1: Ball
    kappa: float
    times: list[int]
    blocks: list[CertBlock]
    increments_mean: float
    flags: dict
    horizon: int

    @property
    def all_ok(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "model": self.model, "sigma": self.sigma, "noise_seed": self.noise_seed,
            "calib": self.calib, "params": self.params,
            "pair": list(self.pair),
            "I0": {"center": self.I0.center, "radius": self.I0.radius},
            "I1": {"center": self.I1.center, "radius": self.I1.radius},
            "kappa": self.kappa, "times": [int(t) for t in self.times],
            "increments_mean": self.increments_mean, "flags": self.flags,
            "horizon": self.horizon,
            "blocks": [
                {
                    "n_k": blk.n_k, "n_k1": blk.n_k1, "e1_ok": blk.e1_ok,
                    "witnesses": {
                        f"{a}{b}": {
                            "route": [[p, o] for p, o in wit.route],
                            "lo": wit.lo, "hi": wit.hi,
                            "inv_deriv_bound": wit.inv_deriv_bound,
                            "ok_onto": wit.ok_onto, "ok_deriv": wit.ok_deriv,
                        }
                        for (a, b), wit in blk.witnesses.items()
                    },
                }
                for blk in self.blocks
            ],
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_dict(d: dict) -> "HorseshoeCertificate":
        blocks = []
        for blk in d["blocks"]:
            wits = {}
            for key, w in blk["witnesses"].items():
                a, b = int(key[0]), int(key[1])
                wits[(a, b)] = BlockWitness(
                    a=a, b=b, route=[(int(p), int(o)) for p, o in w["route"]],
                    lo=w["lo"], hi=w["hi"], inv_deriv_bound=w["inv_deriv_bound"],
                    ok_onto=w["ok_onto"], ok_deriv=w["ok_deriv"])
            blocks.append(CertBlock(n_k=blk["n_k"], n_k1=blk["n_k1"],
                                    e1_ok=blk["e1_ok"], witnesses=wits))
        return HorseshoeCertificate(
            model=d["model"], sigma=d["sigma"], noise_seed=list(d["noise_seed"]),
            calib=d["calib"], params=d["params"], pair=tuple(d["pair"]),
            I0=Ball(d["I0"]["center"], d["I0"]["radius"]),
            I1=Ball(d["I1"]["center"], d["I1"]["radius"]),
            kappa=d["kappa"], times=list(d["times"]), blocks=blocks,
            increments_mean=d["increments_mean"], flags=dict(d["flags"]),
            horizon=d["horizon"])

    @staticmethod
    def load(path) -> "HorseshoeCertificate":
        with open(path) as fh:
            return HorseshoeCertificate.from_dict(json.load(fh))


def _check_e1(model: MapModel, noise: NoiseStream, ball: Ball, n_k: int, n_k1: int,
              I0: Ball, I1: Ball) -> bool:
    """Inner enclosure of the full ball must cover I_0 and I_1 at the block end."""
    enc = ball_enclosure(ball)
    w = noise.shifted(n_k).block(0, n_k1 - n_k)
    for step in range(n_k1 - n_k):
        enc = propagate_step(model, enc, float(w[step]), INNER)
        if enc.full:
            return True  # the circle maps onto itself from here on
        if enc.is_empty:
            return False
    return enc.contains_arc(*I0.arc()) and enc.contains_arc(*I1.arc())


def build_certificate(model: MapModel, noise: NoiseStream,
                      families: tuple[CoverFamily, CoverFamily],
                      times: np.ndarray, kappa_target: float,
                      params: HTParams, calib: ReferenceCalibration,
                      max_blocks: int | None = None,
                      noise_seed: list[int] | None = None) -> HorseshoeCertificate:
    """Certify horseshoe clauses over consecutive simultaneous cover times.

    Verification failures do not abort: the failing clause is recorded per
    block and the aggregate flags expose it (the CLI maps that to exit 2).
    """
    if kappa_target <= 1.0:
        raise ConfigError("kappa must exceed 1")
    if times.size < 2:
        raise EmptyIntersection("need at least two simultaneous cover times")
    fam_a, fam_b = families
    I0, I1 = fam_a.ball, fam_b.ball
    d01 = wrap01(I1.center - I0.center)
    gap = min(d01, 1.0 - d01)
    disjoint = gap > I0.radius + I1.radius
    n_times = times if max_blocks is None else times[:max_blocks + 1]
    blocks: list[CertBlock] = []
    flag_e1 = flag_idk = flag_e2 = True
    for k in range(n_times.size - 1):
        n_k, n_k1 = int(n_times[k]), int(n_times[k + 1])
        e1 = (_check_e1(model, noise, I0, n_k, n_k1, I0, I1)
              and _check_e1(model, noise, I1, n_k, n_k1, I0, I1))
        flag_e1 &= e1
        wits: dict[tuple[int, int], BlockWitness] = {}
        for a, fam_src in ((0, fam_a), (1, fam_b)):
            legs = [lg for lg in fam_src.legs if n_k <= lg.start and lg.cover_time <= n_k1]
            for b, tgt in ((0, I0), (1, I1)):
                wit = _certify_block_pair(model, noise, legs, n_k, n_k1,
                                          fam_src.ball, tgt, a, b, kappa_target)
                wits[(a, b)] = wit
                flag_idk &= wit.ok_onto
                flag_e2 &= wit.ok_deriv
        blocks.append(CertBlock(n_k=n_k, n_k1=n_k1, e1_ok=e1, witnesses=wits))
    incs = np.diff(np.concatenate([[0.0], n_times.astype(float)]))
    inc_mean = float(incs.mean())
    K = n_times.size
    std = float(incs.std(ddof=1)) if K > 1 else 0.0
    e0 = abs(float(n_times[-1]) / K - inc_mean) <= 5.0 * std / math.sqrt(K) + 1e-9
    flags = {"e1": flag_e1, "idk": flag_idk, "e2": flag_e2,
             "disjoint": bool(disjoint), "e0_proxy": bool(e0)}
    seed_list = noise_seed if noise_seed is not None else (
        list(noise.seed) if isinstance(noise.seed, tuple) else [noise.seed])
    return HorseshoeCertificate(
        model=model.name, sigma=noise.sigma, noise_seed=[int(s) for s in seed_list],
        calib=calib.to_dict(),
        params={"ht_sigma": params.sigma, "b": params.b, "r": params.r,
                "sparsity": params.sparsity_N, "variant": params.variant},
        pair=(fam_a.index, fam_b.index), I0=I0, I1=I1, kappa=kappa_target,
        times=[int(t) for t in n_times], blocks=blocks,
        increments_mean=inc_mean, flags=flags, horizon=int(fam_a.horizon))


def _certify_block_pair(model: MapModel, noise: NoiseStream, legs, n_k: int, n_k1: int,
                        I_a: Ball, I_b: Ball, a: int, b: int,
                        kappa_target: float) -> BlockWitness:
    """Route assembly plus one certified pullback for clause (idk) and (e2)."""
    block_len = n_k1 - n_k
    with mp.workprec(block_precision(block_len)):
        try:
            if not legs or legs[0].start != n_k or legs[-1].cover_time != n_k1:
                raise PullbackEmpty("leg chain does not span the block")
            t_lo, t_hi = lift_around(I_b.center, *I_b.arc())
            route, (alo, ahi) = _assemble_block_route(model, noise, legs, (t_lo, t_hi))
            if len(route) != block_len:
                raise PullbackEmpty("route length mismatch")
            w_block = noise.shifted(n_k).block(0, block_len)
            res = pull_interval(model, w_block, route, t_lo, t_hi)
            if abs(float(res.lo) - float(alo)) > 1e-6 or abs(float(res.hi) - float(ahi)) > 1e-6:
                raise PullbackEmpty("block re-pull diverged from the leg assembly")
            lo_f, hi_f = float(res.lo), float(res.hi)
            a_lo, a_len = I_a.arc()
            inside = (wrap01(lo_f - a_lo) <= a_len and wrap01(hi_f - a_lo) <= a_len
                      and hi_f - lo_f <= a_len)
            ok_onto = bool(inside)
            bound = res.inv_deriv_bound
            ok_deriv = bool(bound < 1.0 / kappa_target)
            return BlockWitness(a=a, b=b, route=res.route,
                                lo=mpmath.nstr(res.lo, mp.dps + 8),
                                hi=mpmath.nstr(res.hi, mp.dps + 8),
                                inv_deriv_bound=bound, ok_onto=ok_onto,
                                ok_deriv=ok_deriv)
        except PullbackEmpty:
            return BlockWitness(a=a, b=b, route=[], lo="0", hi="0",
                                inv_deriv_bound=math.inf, ok_onto=False, ok_deriv=False)


def verify_certificate(cert: HorseshoeCertificate) -> tuple[dict, list]:
    """Re-verify every clause from scratch; returns (fresh flags, failure list).

    The stored witness intervals and routes are treated as untrusted data:
    each witness is forward-propagated in high precision along its route,
    checking piece membership at every step (outer hull), covering of the
    target at the end (inner hull), and the derivative bound, independent of
    what the stored per-clause booleans claim.
    """
    model = get_model(cert.model)
    noise = NoiseStream(cert.sigma, tuple(cert.noise_seed))
    flags = {"e1": True, "idk": True, "e2": True, "disjoint": True, "e0_proxy": True}
    d01 = wrap01(cert.I1.center - cert.I0.center)
    gap = min(d01, 1.0 - d01)
    flags["disjoint"] = bool(gap > cert.I0.radius + cert.I1.radius)
    balls = {0: cert.I0, 1: cert.I1}
    failures = []
    for bi, blk in enumerate(cert.blocks):
        e1 = (_check_e1(model, noise, cert.I0, blk.n_k, blk.n_k1, cert.I0, cert.I1)
              and _check_e1(model, noise, cert.I1, blk.n_k, blk.n_k1, cert.I0, cert.I1))
        if not e1:
            flags["e1"] = False
            failures.append(("e1", bi, None))
        block_len = blk.n_k1 - blk.n_k
        w_block = noise.shifted(blk.n_k).block(0, block_len)
        for (a, b), wit in sorted(blk.witnesses.items()):
            ok_onto, ok_deriv = _replay_witness(model, w_block, wit, balls[a], balls[b],
                                                cert.kappa, block_len)
            if not ok_onto:
                flags["idk"] = False
                failures.append(("idk", bi, (a, b)))
            if not ok_deriv:
                flags["e2"] = False
                failures.append(("e2", bi, (a, b)))
    incs = np.diff(np.concatenate([[0.0], np.asarray(cert.times, dtype=float)]))
    K = len(cert.times)
    if K >= 1:
        std = float(incs.std(ddof=1)) if K > 1 else 0.0
        e0 = abs(cert.times[-1] / K - float(incs.mean())) <= 5.0 * std / math.sqrt(K) + 1e-9
        flags["e0_proxy"] = bool(e0)
    return flags, failures


def _replay_witness(model: MapModel, w_block, wit: BlockWitness, I_a: Ball, I_b: Ball,
                    kappa: float, block_len: int) -> tuple[bool, bool]:
    """Forward replay with two interval chains: outer for piece membership and
    the derivative sup, inner for the certified onto-image."""
    if len(wit.route) != block_len:
        return False, False
    with mp.workprec(block_precision(block_len)):
        try:
            olo, ohi = mpf(wit.lo), mpf(wit.hi)
        except ValueError:
            return False, False
        if ohi <= olo:
            return False, False
        a_lo, a_len = I_a.arc()
        if not (wrap01(float(olo) - a_lo) <= a_len and wrap01(float(ohi) - a_lo) <= a_len
                and float(ohi - olo) <= a_len):
            return False, False
        ilo, ihi = olo, ohi
        pad = mpf(2) ** (-mp.prec + 24)
        pieces = model.pieces
        log_bound = 0.0
        for step in range(block_len):
            piece, off = wit.route[step]
            if not (0 <= piece < len(pieces)):
                return False, False
            plo, phi = piece_domain(model, piece)
            if not (plo - 1e-15 <= float(olo) and float(ohi) <= phi + 1e-15):
                return False, False
            s = _interval_inv_deriv_sup(model, float(olo), float(ohi))
            if math.isfinite(s) and math.isfinite(log_bound):
                log_bound += math.log(s)
            else:
                log_bound = math.inf
            w = mpf(float(w_block[step]))
            ra, rb = model.eval_raw(olo) + w - off, model.eval_raw(ohi) + w - off
            olo, ohi = (ra, rb) if ra <= rb else (rb, ra)
            olo -= pad
            ohi += pad
            ra, rb = model.eval_raw(ilo) + w - off, model.eval_raw(ihi) + w - off
            ilo, ihi = (ra, rb) if ra <= rb else (rb, ra)
            ilo += pad
            ihi -= pad
            if ihi <= ilo:
                return False, False
        t_lo, t_hi = lift_around(float((ilo + ihi) / 2), *I_b.arc())
        ok_onto = bool(ilo <= t_lo and ihi >= t_hi)
        bound = math.exp(log_bound) if math.isfinite(log_bound) else math.inf
        ok_deriv = bound < 1.0 / kappa
        return ok_onto, ok_deriv


# ---------------------------------------------------------------------------
# symbolic shadowing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShadowingProof:
    word: str
    nested: list[tuple[float, float]]  # intervals at time n_0, one per word prefix
    witness_x: float
    witness_str: str
    verified: bool


def symbolic_shadow(cert: HorseshoeCertificate, word: str) -> ShadowingProof:
    """Pull the itinerary back through the certified routes and re-simulate.

    The witness is a state at time n_0 (the first simultaneous cover time)
    whose orbit under the certificate's noise visits I_{word_k} at every
    time n_k.
    """
    d = len(word)
    if d < 1 or any(ch not in "01" for ch in word):
        raise ConfigError("word must be a non-empty 0/1 string")
    if d > len(cert.blocks):
        raise ConfigError("word longer than the certified block count")
    model = get_model(cert.model)
    noise = NoiseStream(cert.sigma, tuple(cert.noise_seed))
    balls = {0: cert.I0, 1: cert.I1}
    total = cert.times[d - 1] - cert.times[0] if d > 1 else 1
    nested: list[tuple[float, float]] = []
    final = None
    with mp.workprec(block_precision(max(total, 1)) + 64):
        for j in range(d):
            tgt = balls[int(word[j])]
            lo, hi = (mpf(v) for v in lift_around(tgt.center, *tgt.arc()))
            for k in range(j - 1, -1, -1):
                wit = cert.blocks[k].witnesses[(int(word[k]), int(word[k + 1]))]
                if not wit.route:
                    raise PullbackEmpty(f"block {k} has no certified route for {word[k]}{word[k+1]}")
                block_len = cert.blocks[k].n_k1 - cert.blocks[k].n_k
                w_block = noise.shifted(cert.blocks[k].n_k).block(0, block_len)
                res = pull_interval(model, w_block, wit.route, lo, hi)
                lo, hi = res.lo, res.hi
            nested.append((float(lo), float(hi)))
            final = (lo, hi)
        x = (final[0] + final[1]) / 2
        # verification: re-simulate and check the itinerary
        verified = True
        if d >= 1:
            steps = cert.times[d - 1] - cert.times[0]
            w_vals = noise.shifted(cert.times[0]).block(0, max(steps, 1))
            pos = mp_orbit(model, w_vals, x, steps)
            for k in range(d):
                idx = cert.times[k] - cert.times[0]
                ball = balls[int(word[k])]
                delta = mp_wrap01(pos[idx] - mpf(ball.center) + mpf("0.5")) - mpf("0.5")
                if abs(delta) > ball.radius:
                    verified = False
        witness_f = float(mp_wrap01(x))
        witness_s = mpmath.nstr(mp_wrap01(x), mp.dps + 8)
    # pullbacks of different prefixes may come back in lift frames an integer
    # apart; align each interval to its predecessor before the nesting check
    aligned = [nested[0]]
    for b in nested[1:]:
        a = aligned[-1]
        shift = round(0.5 * (b[0] + b[1]) - 0.5 * (a[0] + a[1]))
        b = (b[0] - shift, b[1] - shift)
        if not (a[0] - 1e-15 <= b[0] and b[1] <= a[1] + 1e-15):
            raise PullbackEmpty("nested intervals failed to nest")
        aligned.append(b)
    return ShadowingProof(word=word, nested=aligned, witness_x=witness_f,
                          witness_str=witness_s, verified=verified)
