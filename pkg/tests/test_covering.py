import math

import numpy as np
import pytest

from rdslab.covering import (CalibrationSearch, ReferenceCalibration,
                             calibrate_reference, detect_covering)
from rdslab.dynamics import iterate
from rdslab.enclosure import Ball
from rdslab.errors import CalibrationFailed, ConfigError
from rdslab.noise import NoiseStream


class TestDetect:
    def test_doubling_growth_oracle(self, doubling):
        # |I| = 2^-k doubles each step and goes full by k+2 steps, so the
        # event fires with the whole ball regardless of noise
        J = Ball(0.7, 0.2)
        for k in (3, 5):
            I = Ball(0.3, 2.0 ** -(k + 1))
            ev = detect_covering(doubling, NoiseStream(0.1, k), I, J, k + 2, 0.0)
            assert ev is not None
            assert ev.step <= k + 2
            assert ev.sub_ball == I

    def test_pigeonhole_none_when_horizon_short(self, doubling):
        # image length 2^j * |I| < |J| for all j <= N: containment impossible
        I = Ball(0.3, 2.0 ** -7)  # |I| = 2^-6
        J = Ball(0.7, 0.2)        # |J| = 0.4
        ev = detect_covering(doubling, NoiseStream(0.1, 1), I, J, 4, 0.0)
        assert ev is None

    def test_monotone_in_horizon(self, logistic, logistic_calib):
        cal = logistic_calib
        I = Ball(0.31, cal.epsilon_scale / 2)
        base = detect_covering(logistic, NoiseStream(0.1, (5, 1)), I, cal.J,
                               cal.N, cal.iota)
        assert base is not None
        bigger = detect_covering(logistic, NoiseStream(0.1, (5, 1)), I, cal.J,
                                 cal.N + 4, cal.iota)
        assert bigger is not None
        assert bigger.step == base.step
        assert bigger.sub_ball == base.sub_ball

    def test_monotone_in_iota(self, logistic, logistic_calib):
        cal = logistic_calib
        I = Ball(0.62, cal.epsilon_scale / 2)
        ev = detect_covering(logistic, NoiseStream(0.1, (6, 2)), I, cal.J,
                             cal.N, cal.iota)
        assert ev is not None
        weaker = detect_covering(logistic, NoiseStream(0.1, (6, 2)), I, cal.J,
                                 cal.N, cal.iota / 2)
        assert weaker is not None
        assert weaker.min_crit_dist > cal.iota / 2

    def test_shift_consistency(self, logistic, logistic_calib):
        cal = logistic_calib
        I = Ball(0.41, cal.epsilon_scale / 2)
        ns = NoiseStream(0.1, 88)
        ev_a = detect_covering(logistic, ns.shifted(10), I, cal.J, cal.N, cal.iota)
        ev_b = detect_covering(logistic, NoiseStream(0.1, 88, offset=10), I,
                               cal.J, cal.N, cal.iota)
        assert (ev_a is None) == (ev_b is None)
        if ev_a is not None:
            assert ev_a.step == ev_b.step and ev_a.sub_ball == ev_b.sub_ball

    def test_agrees_with_pushforward_sampling_oracle(self, logistic, logistic_calib):
        # dense-grid point pushforward cross-check on 50 seeds: every certified
        # event must be confirmed by sampling the certified sub-ball, and on
        # the calibrated geometry detection fires nearly always
        cal = logistic_calib
        hits = 0
        width = cal.J.diameter
        jlo = cal.J.center - cal.J.radius
        for s in range(50):
            I = Ball(0.2 + 0.012 * s, cal.epsilon_scale / 2)
            ns = NoiseStream(0.1, (77, s))
            ev = detect_covering(logistic, ns, I, cal.J, cal.N, cal.iota)
            if ev is None:
                continue
            hits += 1
            sb = ev.sub_ball
            xs = np.linspace(sb.center - sb.radius, sb.center + sb.radius, 4000) % 1.0
            w = ns.block(0, ev.step)
            pos = xs.copy()
            for j in range(ev.step):
                pos = iterate(logistic, pos, float(w[j]))
            inside = np.sort((pos - jlo) % 1.0)
            inside = inside[inside <= width]
            # sampled images fill J: small boundary gaps and no interior hole
            assert inside.size > 100
            assert inside[0] < width / 100
            assert inside[-1] > width * (1 - 1.0 / 100)
            assert np.max(np.diff(inside)) < width / 25
        assert hits >= 45

    def test_validation(self, doubling):
        with pytest.raises(ConfigError):
            detect_covering(doubling, NoiseStream(0.1, 1), Ball(0.2, 0.0),
                            Ball(0.5, 0.1), 5, 0.0)
        with pytest.raises(ConfigError):
            detect_covering(doubling, NoiseStream(0.1, 1), Ball(0.2, 0.1),
                            Ball(0.5, 0.1), 0, 0.0)


class TestCalibration:
    def test_doubling_is_deterministic(self, doubling):
        cal = calibrate_reference(doubling, 0.1, 0.05,
                                  CalibrationSearch(rho_replicas=40), seed=7)
        assert cal.rho_hat == 1.0
        assert cal.J.diameter <= 0.25
        assert cal.N >= 1

    def test_epsilon_scale_bounds(self, doubling):
        with pytest.raises(ConfigError):
            calibrate_reference(doubling, 0.1, 0.25)
        with pytest.raises(ConfigError):
            calibrate_reference(doubling, 0.1, 0.0)

    def test_logistic_replicates_on_fresh_seed(self, logistic, logistic_calib):
        cal = logistic_calib
        assert cal.rho_hat > 0.0
        # stored (J, N, iota) reproduce the rate within 0.05 on a fresh seed
        hits = 0
        trials = 60
        for r in range(trials):
            I = Ball(0.37, cal.epsilon_scale / 2)
            ns = NoiseStream(0.1, (991, r))
            if detect_covering(logistic, ns, I, cal.J, cal.N, cal.iota):
                hits += 1
        assert hits / trials >= cal.rho_hat - 0.05

    def test_unreachable_cells_fail_loudly(self, logistic):
        with pytest.raises(CalibrationFailed) as err:
            calibrate_reference(logistic, 0.1, 0.05,
                                CalibrationSearch(orbit_cap=30), seed=7)
        assert err.value.missing_cells

    def test_round_trip_dict(self, logistic_calib):
        d = logistic_calib.to_dict()
        back = ReferenceCalibration.from_dict(d)
        assert back.J == logistic_calib.J
        assert back.N == logistic_calib.N
        assert back.iota == logistic_calib.iota
