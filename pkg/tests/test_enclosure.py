import math

import numpy as np
import pytest

from rdslab.covering import image_enclosure
from rdslab.dynamics import iterate
from rdslab.enclosure import (Ball, INNER, OUTER, ball_enclosure,
                              min_critical_distance, propagate_step)
from rdslab.errors import BranchExplosion
from rdslab.noise import NoiseStream


def test_half_circle_through_doubling_is_full(doubling):
    encs = image_enclosure(doubling, np.zeros(1), Ball(0.25, 0.25), 1)
    assert encs[0]["outer"].full
    # the inner hull loses only the per-step pad
    assert encs[0]["inner"].total_length() > 1.0 - 1e-9


def test_doubling_length_doubles_each_step(doubling):
    ell = 2.0 ** -5
    encs = image_enclosure(doubling, np.full(6, 0.037), Ball(0.1, ell / 2), 6)
    for j, e in enumerate(encs, start=1):
        expect = min(1.0, 2.0 ** j * ell)
        assert e["outer"].total_length() == pytest.approx(expect, abs=1e-9)
        assert e["inner"].total_length() == pytest.approx(expect, abs=1e-9)


def test_logistic_straddling_ball_splits_and_matches_sampling(logistic):
    # [0.4, 0.6] straddles the critical point; both branch images coincide
    # and the image arc wraps through 0, which the circular hull must handle
    ball = Ball(0.5, 0.1)
    w = 0.07
    encs = image_enclosure(logistic, np.array([w]), ball, 1)
    outer, inner = encs[0]["outer"], encs[0]["inner"]
    xs = np.linspace(0.4, 0.6, 10_000)
    ys = iterate(logistic, xs, w)
    assert all(outer.contains_point(float(y)) for y in ys[::37])
    # raw image is [16*0.4*0.6, 4] = [3.84, 4], one wrapped arc of length 0.16
    assert outer.total_length() == pytest.approx(0.16, abs=1e-9)
    assert inner.total_length() == pytest.approx(0.16, abs=1e-9)
    assert len(outer.arcs) == 1
    (alo, aln), = outer.arcs
    assert alo == pytest.approx((3.84 + w) % 1.0, abs=1e-9)
    # inner hull points are attained by the sampled pushforward
    shifted = np.sort((ys - alo) % 1.0)
    assert shifted[0] < 1e-4 and shifted[-1] > aln - 1e-4


def test_enclosure_soundness_random_points(logistic):
    # true point images lie inside the step-j outer hull, and inner hull
    # points are attained (inner inside the sampled hull)
    rng = np.random.default_rng(0)
    for trial in range(50):
        c = rng.random()
        ball = Ball(c, 0.02)
        ns = NoiseStream(0.1, (31, trial))
        steps = 4
        encs = image_enclosure(logistic, ns, ball, steps)
        xs = ball.center - ball.radius + 2 * ball.radius * rng.random(200)
        w = ns.block(0, steps)
        pos = np.mod(xs, 1.0)
        for j in range(steps):
            pos = iterate(logistic, pos, float(w[j]))
            assert all(encs[j]["outer"].contains_point(float(p)) for p in pos)
            inner = encs[j]["inner"]
            if not inner.full and inner.arcs:
                lo_s = np.sort(pos)
                for alo, aln in inner.arcs:
                    # each inner arc must be squeezed by attained points
                    idx = np.searchsorted(lo_s, alo)
                    assert (idx < lo_s.size or alo <= lo_s[-1] + 1e-9)


def test_inner_hull_attained_by_bisection_pullback(logistic):
    # pick an inner point and certify a preimage inside the ball by bisection
    ball = Ball(0.3, 0.01)
    w = -0.042
    encs = image_enclosure(logistic, np.array([w]), ball, 1)
    inner = encs[0]["inner"]
    assert not inner.is_empty
    alo, aln = inner.arcs[0]
    target = (alo + aln / 2.0) % 1.0
    lo, hi = ball.center - ball.radius, ball.center + ball.radius
    f = lambda x: iterate(logistic, x, w)
    flo, fhi = f(lo), f(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if (f(mid) < target) == (flo < fhi):
            lo = mid
        else:
            hi = mid
    assert abs(f(0.5 * (lo + hi)) - target) < 1e-9


def test_min_critical_distance(logistic, doubling):
    enc = ball_enclosure(Ball(0.45, 0.01))
    assert min_critical_distance(logistic, enc) == pytest.approx(0.04, abs=1e-12)
    enc2 = ball_enclosure(Ball(0.5, 0.02))
    assert min_critical_distance(logistic, enc2) == 0.0
    assert min_critical_distance(doubling, enc) == 1.0


def test_full_circle_propagates_to_full(logistic, doubling):
    from rdslab.enclosure import FULL_ENCLOSURE

    for model in (logistic, doubling):
        out = propagate_step(model, FULL_ENCLOSURE, 0.03, OUTER)
        assert out.full
        inn = propagate_step(model, FULL_ENCLOSURE, 0.03, INNER)
        assert inn.full


def test_wrap_smooth_lift_has_no_seam(doubling):
    # an arc through the wrap point stays a single connected inner arc
    enc = ball_enclosure(Ball(0.0, 0.05))
    out = propagate_step(doubling, enc, 0.0, INNER)
    assert len(out.arcs) == 1
    assert out.total_length() == pytest.approx(0.2, abs=1e-9)
