"""Arbitrary-precision orbits and certified interval pullbacks.

Expanding blocks longer than ~20 steps put witness sub-balls below double
precision (a block of length n shrinks targets by roughly e^{lambda n}), so
everything that walks backwards through a block runs in mpmath with the
working precision scaled to the block length.  A pullback follows a branch
route: per step, the (monotone piece, integer lift offset) pair the true
orbit used.  Routes are discovered from high-precision forward orbits and
are stored in certificates as witness data; re-verification replays the
route and re-certifies every interval inclusion from scratch.

Soundness convention: mpmath rounds to nearest, so every backward step pads
the computed preimage outward by a few ulps at working precision and then
FORWARD-CHECKS in mpmath that the padded interval still maps over the
target.  The forward check is the certificate; the inverse formula is only
a search device.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
from mpmath import mp, mpf

from .errors import PullbackEmpty, RdsLabError
from .models import MapModel

GUARD_BITS = 96
BITS_PER_STEP = 4.5  # ceil(log2 sup|f'|) plus margin; sup|f'| = 16 for the shipped maps


def block_precision(steps: int) -> int:
    return GUARD_BITS + int(math.ceil(BITS_PER_STEP * max(steps, 1)))


def mp_wrap01(x: mpf) -> mpf:
    return x - mpmath.floor(x)


def mp_orbit(model: MapModel, noise_values, x0, steps: int) -> list:
    """Forward orbit in the current mp precision; noise floats enter exactly."""
    xs = [mpf(x0)]
    x = xs[0]
    for i in range(steps):
        x = mp_wrap01(model.eval_raw(x) + mpf(noise_values[i]))
        xs.append(x)
    return xs


def branch_route(model: MapModel, noise_values, x0, steps: int) -> list[tuple[int, int]]:
    """(piece index, integer lift offset) per step along the true orbit.

    The offset k satisfies x_{i+1} = eval_raw(x_i) + w_i - k.  Raises if the
    orbit runs too close to a piece boundary to classify at the working
    precision.
    """
    pieces = model.pieces
    margin = mpf(2) ** (-mp.prec + 16)
    route = []
    x = mpf(x0)
    for i in range(steps):
        k = model.piece_index(x)
        lo, hi = pieces[k]
        if x - lo < margin and k > 0 or (hi - x) < margin:
            raise RdsLabError(f"orbit point {float(x)} at step {i} sits on a branch boundary")
        raw = model.eval_raw(x) + mpf(noise_values[i])
        off = int(mpmath.floor(raw))
        route.append((k, off))
        x = raw - off
    return route


def piece_domain(model: MapModel, piece: int) -> tuple[float, float]:
    """Monotone-piece domain, extended across the wrap for degree-consistent
    single-piece lifts (whose preimage arcs may straddle x = 0)."""
    plo, phi = model.pieces[piece]
    if model.wrap_smooth and len(model.pieces) == 1:
        return plo - 1.0, phi + 1.0
    return plo, phi


def piece_range(model: MapModel, piece: int) -> tuple[float, float]:
    """Raw range over the (possibly extended) piece domain."""
    plo, phi = piece_domain(model, piece)
    a, b = model.eval_raw(plo), model.eval_raw(phi)
    return (a, b) if a <= b else (b, a)


def _invert_on_piece(model: MapModel, piece: int, y: mpf) -> mpf:
    """Solve eval_raw(x) = y on the given monotone piece.

    y is clamped into the piece's raw range first; a clamped inverse fails
    the caller's forward check and surfaces as PullbackEmpty rather than a
    complex-root crash.  Wrap-smooth single-piece lifts invert on the
    extended domain: the closed-form inverse is degree-consistent there.
    """
    rlo, rhi = piece_range(model, piece)
    y = min(max(y, mpf(rlo)), mpf(rhi))
    if model.branch_inverse is not None:
        x = model.branch_inverse(piece, y)
        if x is not None:
            return mpf(x)
    lo, hi = (mpf(v) for v in piece_domain(model, piece))
    flo, fhi = model.eval_raw(lo), model.eval_raw(hi)
    increasing = fhi >= flo
    for _ in range(mp.prec + 8):
        mid = (lo + hi) / 2
        if (model.eval_raw(mid) < y) == increasing:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@dataclass
class PullbackResult:
    lo: mpf
    hi: mpf
    step_bounds: list[tuple[float, float]]  # outer float hull per intermediate step
    inv_deriv_bound: float                   # certified sup of prod 1/|f'| over the interval
    route: list[tuple[int, int]]             # route with per-step lift offsets resolved


def _interval_inv_deriv_sup(model: MapModel, lo: float, hi: float) -> float:
    """Certified sup of 1/|f'| over [lo, hi] (floats, conservative).

    |f'| vanishes only on the critical set, and between consecutive
    mono_cuts it is monotone for the shipped power-law models, so the
    infimum of |f'| sits at an endpoint unless a critical point is inside.
    Interval endpoints may live in lift coordinates slightly outside [0, 1),
    hence the mod-1 shifts of the critical points.
    """
    for c in model.critical_points:
        for k in (-1.0, 0.0, 1.0):
            if lo <= c + k <= hi:
                return math.inf
    a = abs(model.deriv(lo))
    b = abs(model.deriv(hi))
    m = min(a, b)
    if m <= 0.0:
        return math.inf
    return 1.0 / m


def pull_interval(model: MapModel, noise_values, route, target_lo, target_hi,
                  anchors=None, anchor_tol: float = 0.2) -> PullbackResult:
    """Backward preimage of [target_lo, target_hi] along the route.

    Two passes.  Backward: invert step by step on the route's pieces, pad
    outward, and forward-check each level so that f^n(I) covering the target
    is certified by construction.  Forward: re-propagate I as an outer
    interval enclosure along the resolved route, verifying it stays inside
    each route piece; these hulls majorize the true intermediate images and
    yield the certified sup of the inverse-derivative product.

    A route's integer lift offset is exact only for the reference point it
    was recorded from; when a branch image straddles an integer line, nearby
    preimages need the neighbouring offset.  Each backward step therefore
    tries the recorded offset first and its +-1 shifts after, keeping the
    first choice that passes the forward check, and the resolved route is
    returned for storage.  Circle maps have several preimages per point, so
    offset adaptation alone could drift onto a translated lineage; when
    ``anchors`` supplies reference positions (anchors[i] = float position
    after i steps, None to skip), a passing preimage is accepted only within
    ``anchor_tol`` of its anchor.
    """
    n = len(route)
    if len(noise_values) < n:
        raise RdsLabError("noise shorter than the route")
    pad = mpf(2) ** (-mp.prec + 24)
    tl, tu = mpf(target_lo), mpf(target_hi)
    if tu <= tl:
        raise PullbackEmpty("empty target interval")
    pieces = model.pieces
    resolved: list[tuple[int, int]] = [None] * n
    for i in range(n - 1, -1, -1):
        piece, off0 = route[i]
        w = mpf(noise_values[i])
        plo, phi = (mpf(v) for v in piece_domain(model, piece))
        anchor = anchors[i] if anchors is not None else None
        hit = None
        for off in (off0, off0 - 1, off0 + 1):
            a = _invert_on_piece(model, piece, tl - w + off)
            b = _invert_on_piece(model, piece, tu - w + off)
            lo, hi = (a, b) if a <= b else (b, a)
            lo = max(lo - pad, plo)
            hi = min(hi + pad, phi)
            if hi <= lo:
                continue
            # certify covering: f([lo, hi]) + w - off must contain the target
            flo = model.eval_raw(lo) + w - off
            fhi = model.eval_raw(hi) + w - off
            if flo > fhi:
                flo, fhi = fhi, flo
            if not (flo <= tl and fhi >= tu):
                continue
            if anchor is not None:
                mid = float((lo + hi) / 2)
                d = abs((mid - anchor + 0.5) % 1.0 - 0.5)
                if d > anchor_tol:
                    continue
            hit = (off, lo, hi)
            break
        if hit is None:
            raise PullbackEmpty(f"no offset admits a covering preimage at step {i}")
        off, tl, tu = hit[0], hit[1], hit[2]
        resolved[i] = (piece, off)

    # forward outer pass: hulls of f^j(I) for the derivative product bound
    lo, hi = tl, tu
    bounds = [(float(lo), float(hi))]
    log_bound = 0.0
    for j in range(n):
        piece, off = resolved[j]
        plo, phi = piece_domain(model, piece)
        if not (plo - 1e-15 <= float(lo) and float(hi) <= phi + 1e-15):
            raise PullbackEmpty(f"forward hull left its route piece at step {j}")
        s = _interval_inv_deriv_sup(model, float(lo), float(hi))
        if not math.isfinite(s):
            log_bound = math.inf
        elif math.isfinite(log_bound):
            log_bound += math.log(s)
        w = mpf(noise_values[j])
        ra = model.eval_raw(lo) + w - off
        rb = model.eval_raw(hi) + w - off
        lo, hi = (ra, rb) if ra <= rb else (rb, ra)
        lo -= pad
        hi += pad
        bounds.append((float(lo), float(hi)))
    inv_bound = math.exp(log_bound) if math.isfinite(log_bound) else math.inf
    return PullbackResult(lo=tl, hi=tu, step_bounds=bounds, inv_deriv_bound=inv_bound,
                          route=resolved)


def forward_positions(model: MapModel, noise_values, x0, steps: int) -> list[float]:
    """Float positions of a high-precision forward orbit (for membership checks)."""
    return [float(v) for v in mp_orbit(model, noise_values, x0, steps)]
