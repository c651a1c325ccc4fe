"""Rigorous forward images of circle arcs under one noisy map step.

Arcs are (lo, length) pairs mod 1.  One step splits an arc at the model's
branch cuts into monotone pieces, maps piece endpoints through the lift, and
pads the results outward (for outer hulls, used to certify distance from the
critical set) or inward (for inner hulls, used to certify covering).  The
per-step pad absorbs endpoint rounding; pads compound through expansion, so
inner hulls degrade honestly: when slack eats an arc the arc disappears and
nothing false gets certified.

Both hulls stay sound by construction:
    true image  is contained in  outer hull,
    inner hull  is contained in  true image (every inner point is attained).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchExplosion
from .models import MapModel, wrap01

STEP_PAD = 1e-13   # absolute per-step endpoint padding
ARC_CAP = 2 ** 14  # default cap on the number of disjoint arcs

OUTER = +1
INNER = -1


@dataclass(frozen=True)
class Ball:
    """Circle interval (center, radius); diameter is its |I|."""

    center: float
    radius: float

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def arc(self) -> tuple[float, float]:
        return wrap01(self.center - self.radius), self.diameter

    def halves(self) -> tuple["Ball", "Ball"]:
        r = self.radius / 2.0
        return (Ball(wrap01(self.center - r), r), Ball(wrap01(self.center + r), r))

    def contains_point(self, x: float) -> bool:
        return wrap01(x - (self.center - self.radius)) <= self.diameter


@dataclass(frozen=True)
class IntervalEnclosure:
    """Disjoint circular arcs sorted by lo; ``full`` short-circuits geometry."""

    arcs: tuple[tuple[float, float], ...]
    full: bool = False

    @property
    def is_empty(self) -> bool:
        return not self.full and not self.arcs

    def total_length(self) -> float:
        return 1.0 if self.full else sum(ln for _, ln in self.arcs)

    def contains_arc(self, lo: float, length: float) -> bool:
        """Whole arc inside a single enclosure arc (connected targets only)."""
        if self.full:
            return True
        for alo, aln in self.arcs:
            off = wrap01(lo - alo)
            if off + length <= aln:
                return True
        return False

    def contains_point(self, x: float) -> bool:
        if self.full:
            return True
        for alo, aln in self.arcs:
            if wrap01(x - alo) <= aln:
                return True
        return False

    def min_point_distance(self, x: float) -> float:
        """Circle distance from x to the enclosed set (inf when empty)."""
        if self.full:
            return 0.0
        best = math.inf
        for alo, aln in self.arcs:
            off = wrap01(x - alo)
            if off <= aln:
                return 0.0
            best = min(best, off - aln, 1.0 - off)
        return best


FULL_ENCLOSURE = IntervalEnclosure(arcs=(), full=True)
EMPTY_ENCLOSURE = IntervalEnclosure(arcs=())


def ball_enclosure(ball: Ball) -> IntervalEnclosure:
    lo, ln = ball.arc()
    if ln >= 1.0:
        return FULL_ENCLOSURE
    return IntervalEnclosure(arcs=((lo, ln),))


def _merge(raw_arcs: list[tuple[float, float]], cap: int) -> IntervalEnclosure:
    """Union of (lo, length) arcs; lo arbitrary real, length > 0."""
    segs: list[tuple[float, float]] = []
    for lo, ln in raw_arcs:
        if ln <= 0.0:
            continue
        if ln >= 1.0:
            return FULL_ENCLOSURE
        lo = wrap01(lo)
        hi = lo + ln
        if hi <= 1.0:
            segs.append((lo, hi))
        else:
            segs.append((lo, 1.0))
            segs.append((0.0, hi - 1.0))
    if not segs:
        return EMPTY_ENCLOSURE
    segs.sort()
    out = [list(segs[0])]
    for lo, hi in segs[1:]:
        if lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    wrap_arc = None
    if len(out) > 1 and out[0][0] == 0.0 and out[-1][1] >= 1.0:
        first = out.pop(0)
        last = out.pop()
        ln = (last[1] - last[0]) + first[1]
        if ln >= 1.0:
            return FULL_ENCLOSURE
        wrap_arc = (last[0], ln)
    arcs = [(lo, hi - lo) for lo, hi in out]
    if wrap_arc is not None:
        arcs.append(wrap_arc)
        arcs.sort()
    if len(arcs) > cap:
        raise BranchExplosion(f"{len(arcs)} arcs exceed the cap {cap}")
    return IntervalEnclosure(arcs=tuple(arcs))


def _split_at_cuts(model: MapModel, lo: float, length: float) -> list[tuple[float, float]]:
    """Cut one arc into sub-arcs, each inside a single monotone stretch.

    Returned pieces are (start, sub_length) with start in [0, 1); for
    wrap-smooth lifts a piece may run past 1 in lift coordinates (the raw
    formula is degree-consistent there), otherwise the integer boundary is
    itself a cut and every piece satisfies start + sub_length <= 1.
    """
    cuts = set()
    for c in model.mono_cuts:
        for k in (0.0, 1.0):
            t = c + k
            if lo < t < lo + length:
                cuts.add(t)
    if not model.wrap_smooth:
        t = math.ceil(lo)
        if lo < t < lo + length:
            cuts.add(float(t))
    pts = [lo] + sorted(cuts) + [lo + length]
    pieces = []
    for p, q in zip(pts[:-1], pts[1:]):
        if q <= p:
            continue
        pieces.append((wrap01(p), q - p))
    return pieces


def propagate_step(model: MapModel, enc: IntervalEnclosure, w: float,
                   mode: int, cap: int = ARC_CAP) -> IntervalEnclosure:
    """Image enclosure of one noisy step; mode is OUTER or INNER."""
    if enc.is_empty:
        return EMPTY_ENCLOSURE
    source = enc.arcs if not enc.full else tuple((p0, p1 - p0) for p0, p1 in model.pieces)
    pad = STEP_PAD
    images: list[tuple[float, float]] = []
    for lo, ln in source:
        for start, sub in _split_at_cuts(model, lo, ln):
            r0 = model.eval_raw(start)
            r1 = model.eval_raw(start + sub)
            img_len = abs(r1 - r0)
            if mode == OUTER:
                img_len += 2.0 * pad
                base = min(r0, r1) + w - pad
            else:
                img_len -= 2.0 * pad
                base = min(r0, r1) + w + pad
            if img_len <= 0.0:
                continue
            if img_len >= 1.0:
                return FULL_ENCLOSURE
            images.append((base, img_len))
    return _merge(images, cap)


def min_critical_distance(model: MapModel, enc: IntervalEnclosure) -> float:
    """Certified minimum circle distance of the enclosed set to the critical set.

    An empty critical set reports 1.0 (beyond any circle distance); an empty
    enclosure reports inf.
    """
    if not model.critical_points:
        return 1.0
    if enc.is_empty:
        return math.inf
    return min(enc.min_point_distance(c) for c in model.critical_points)


def propagate(model: MapModel, noise_values, start: IntervalEnclosure,
              mode: int, cap: int = ARC_CAP) -> list[IntervalEnclosure]:
    """Enclosures after 1..len(noise_values) steps."""
    out = []
    enc = start
    for w in noise_values:
        enc = propagate_step(model, enc, float(w), mode, cap=cap)
        out.append(enc)
    return out
