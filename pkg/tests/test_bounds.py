import math

import numpy as np
import pytest

from fbmlab.bounds import (
    BoundReport,
    ProblemConstants,
    bootstrap_mean_ci,
    bounded_ball_radius,
    contraction_factor,
    convergence_curve,
    convergence_rate,
    dissipativity_asymptote,
    dissipativity_curve,
    first_moment_bound,
    fit_decay_rate,
    lipschitz_thresholds,
    noise_gronwall_bound,
    noise_gronwall_bound_quadrature,
    noise_moment_bound,
    noise_moment_bound_quadrature,
    stationary_noise_moment,
    stationary_noise_moment_quadrature,
    verify_bound,
    windowed_second_moment_bound,
)
from fbmlab.errors import DomainError, GridMismatch, ThresholdViolated

ALPHA = math.pi**2

# frozen scalar oracles (40-digit arithmetic on the closed forms)
GOLDEN_NOISE_MOMENT = 0.0056017252360148617
GOLDEN_GRONWALL = 0.060188657338075858
GOLDEN_THETA1 = 0.014104628880621508
GOLDEN_THR_EXIST = 5.6134248021073191
GOLDEN_THR_COMPAT = 2.8067124010536595
GOLDEN_RADIUS = 0.20215259622975704
GOLDEN_ASYMPTOTE = 0.1088763673695091
GOLDEN_CONV_RATE = 9.6542579464488071
GOLDEN_STATIONARY = 0.021436633651401106
GOLDEN_FIRST_MOMENT_F1_G0 = 0.14328979206268907
GOLDEN_FIRST_MOMENT_F1_G1 = 0.1809108523998561


def example_consts(**over):
    base = dict(
        n_stab=1.0,
        alpha=ALPHA,
        h=0.75,
        sigmas=(1.0,),
        lip=2.0 / 3.0,
        m0=1.0,
        c1=1.0,
        c2=1.0,
    )
    base.update(over)
    return ProblemConstants(**base)


class TestNoiseMomentBound:
    def test_golden(self):
        assert noise_moment_bound(example_consts()) == pytest.approx(
            GOLDEN_NOISE_MOMENT, rel=1e-10
        )

    def test_zero_covariance(self):
        assert noise_moment_bound(example_consts(sigmas=(0.0,))) == 0.0

    def test_alpha_scaling(self):
        c1 = noise_moment_bound(example_consts())
        c2 = noise_moment_bound(example_consts(alpha=2 * ALPHA))
        assert c2 == pytest.approx(c1 * 2.0**-1.5, rel=1e-12)

    def test_quadrature_agreement(self):
        for h in (0.55, 0.75, 0.95):
            for alpha in (1.0, ALPHA):
                consts = example_consts(h=h, alpha=alpha, sigmas=(1.0, 0.5))
                assert noise_moment_bound(consts) == pytest.approx(
                    noise_moment_bound_quadrature(consts), rel=1e-8
                )


class TestGronwallBound:
    def test_golden(self):
        assert noise_gronwall_bound(example_consts()) == pytest.approx(
            GOLDEN_GRONWALL, rel=1e-10
        )

    def test_zero_covariance(self):
        assert noise_gronwall_bound(example_consts(sigmas=(0.0,))) == 0.0

    def test_quadrature_agreement_random_points(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            h = float(rng.uniform(0.55, 0.95))
            alpha = float(rng.uniform(0.5, 20.0))
            consts = example_consts(h=h, alpha=alpha)
            assert noise_gronwall_bound(consts) == pytest.approx(
                noise_gronwall_bound_quadrature(consts), rel=1e-8
            )


class TestStationaryMoment:
    def test_golden(self):
        assert stationary_noise_moment(example_consts()) == pytest.approx(
            GOLDEN_STATIONARY, rel=1e-12
        )

    def test_quadrature_agreement(self):
        for h in (0.6, 0.85):
            consts = example_consts(h=h, alpha=3.0)
            assert stationary_noise_moment(consts) == pytest.approx(
                stationary_noise_moment_quadrature(consts), rel=1e-8
            )


class TestContractionFactor:
    def test_zero_lipschitz(self):
        assert contraction_factor(example_consts(lip=0.0)) == 0.0

    def test_golden(self):
        assert contraction_factor(example_consts()) == pytest.approx(
            GOLDEN_THETA1, rel=1e-10
        )

    def test_quadratic_in_lipschitz(self):
        one = contraction_factor(example_consts())
        two = contraction_factor(example_consts(lip=4.0 / 3.0))
        assert two == pytest.approx(4.0 * one, rel=1e-12)


class TestThresholdsAndRadius:
    def test_goldens(self):
        thr = lipschitz_thresholds(example_consts())
        assert thr.existence == pytest.approx(GOLDEN_THR_EXIST, rel=1e-10)
        assert thr.compatibility == pytest.approx(GOLDEN_THR_COMPAT, rel=1e-10)
        assert thr.convergence == pytest.approx(GOLDEN_THR_COMPAT, rel=1e-10)

    def test_all_exceed_example_lipschitz(self):
        thr = lipschitz_thresholds(example_consts())
        for value in (thr.existence, thr.compatibility, thr.convergence):
            assert value > 2.0 / 3.0

    def test_thresholds_shrink_with_stability_prefactor(self):
        small = lipschitz_thresholds(example_consts(n_stab=100.0))
        assert small.existence < 0.1

    def test_radius_golden(self):
        assert bounded_ball_radius(example_consts()) == pytest.approx(
            GOLDEN_RADIUS, rel=1e-10
        )

    def test_radius_zero_at_zero_offset(self):
        assert bounded_ball_radius(example_consts(m0=0.0)) == 0.0

    def test_radius_monotone_in_offset(self):
        r1 = bounded_ball_radius(example_consts(m0=1.0))
        r2 = bounded_ball_radius(example_consts(m0=2.0))
        assert r2 == pytest.approx(2 * r1, rel=1e-12)

    def test_radius_threshold_violation(self):
        with pytest.raises(ThresholdViolated):
            bounded_ball_radius(example_consts(lip=10.0))


class TestLinearMomentBounds:
    def test_zero_forcing(self):
        assert first_moment_bound(example_consts(), 0.0, 0.0) == 0.0

    def test_drift_only_golden(self):
        assert first_moment_bound(example_consts(), 1.0, 0.0) == pytest.approx(
            GOLDEN_FIRST_MOMENT_F1_G0, rel=1e-10
        )

    def test_drift_and_noise_golden(self):
        assert first_moment_bound(example_consts(), 1.0, 1.0) == pytest.approx(
            GOLDEN_FIRST_MOMENT_F1_G1, rel=1e-10
        )

    def test_windowed_bound_tail_vanishes(self):
        consts = example_consts()
        widened = windowed_second_moment_bound(consts, 1.0, 1.0, 5.0, 5.0, 1.0, 1e6)
        window_only = windowed_second_moment_bound(consts, 1.0, 1.0, 0.0, 0.0, 1.0, 2.0)
        assert widened == pytest.approx(window_only, rel=1e-12)

    def test_windowed_bound_domain(self):
        with pytest.raises(DomainError):
            windowed_second_moment_bound(example_consts(), 1, 1, 1, 1, 2.0, 1.0)


class TestDissipativity:
    def test_asymptote_golden(self):
        assert dissipativity_asymptote(example_consts()) == pytest.approx(
            GOLDEN_ASYMPTOTE, rel=1e-10
        )

    def test_initial_value(self):
        curve, certified = dissipativity_curve(
            example_consts(), 0.4, 1.0, np.array([1.0, 2.0])
        )
        assert certified
        assert curve[0] == pytest.approx(3.0 * 0.4, rel=1e-12)

    def test_balance_point_constant_curve(self):
        consts = example_consts()
        asy = dissipativity_asymptote(consts)
        x_s_sq = asy / 3.0
        curve, _ = dissipativity_curve(consts, x_s_sq, 0.0, np.linspace(0, 5, 11))
        assert np.allclose(curve, asy, rtol=1e-12)

    def test_condition_flag(self):
        curve, certified = dissipativity_curve(
            example_consts(c2=10.0), 1.0, 0.0, np.array([0.0, 1.0])
        )
        assert not certified
        assert np.all(np.isfinite(curve) | np.isinf(curve))

    def test_curve_monotone_toward_asymptote(self):
        consts = example_consts()
        times = np.linspace(0.0, 3.0, 50)
        curve, _ = dissipativity_curve(consts, 1.0, 0.0, times)
        assert np.all(np.diff(curve) <= 1e-12)
        assert curve[-1] == pytest.approx(dissipativity_asymptote(consts), rel=1e-6)


class TestConvergence:
    def test_rate_golden(self):
        assert convergence_rate(example_consts()) == pytest.approx(
            GOLDEN_CONV_RATE, rel=1e-10
        )

    def test_zero_initial_difference(self):
        curve, certified = convergence_curve(
            example_consts(), 0.0, 0.0, np.linspace(0, 1, 5)
        )
        assert certified
        assert np.all(curve == 0.0)

    def test_initial_value(self):
        curve, _ = convergence_curve(example_consts(), 0.7, 2.0, np.array([2.0, 3.0]))
        assert curve[0] == pytest.approx(3.0 * 0.7, rel=1e-12)

    def test_threshold_flag(self):
        _, certified = convergence_curve(
            example_consts(lip=5.0), 1.0, 0.0, np.array([0.0])
        )
        assert not certified


class TestVerifyBound:
    def test_zero_ensemble_no_violation(self):
        times = np.linspace(0, 1, 11)
        stats = np.zeros((20, 11))
        report = verify_bound(times, stats, np.ones(11))
        assert report.violations == 0
        assert report.margin == pytest.approx(1.0)

    def test_detects_violation(self):
        times = np.linspace(0, 1, 5)
        rng = np.random.default_rng(0)
        stats = 2.0 + 0.01 * rng.standard_normal((50, 5))
        report = verify_bound(times, stats, np.ones(5))
        assert report.violations == 5
        assert report.margin < 0

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            verify_bound(np.zeros(3), np.zeros((4, 2)), np.zeros(3))

    def test_json_round_trip(self):
        import json

        times = np.linspace(0, 1, 3)
        report = verify_bound(times, np.zeros((5, 3)), np.ones(3))
        payload = json.loads(report.to_json())
        assert payload["violations"] == 0
        assert len(payload["ci"]) == 3
        assert payload["statistic"] == "mean-square-norm"

    def test_bootstrap_covers_truth(self):
        rng = np.random.default_rng(3)
        samples = 1.0 + rng.standard_normal((400, 4))
        lo, hi = bootstrap_mean_ci(samples, n_boot=500, seed=1)
        assert np.all(lo < 1.0) and np.all(hi > 1.0)

    def test_fit_decay_rate_recovers_slope(self):
        times = np.linspace(0, 2, 40)
        rng = np.random.default_rng(9)
        base = np.exp(-3.0 * times)
        samples = base[None, :] * np.exp(0.05 * rng.standard_normal((200, 40)))
        rate, ci = fit_decay_rate(times, samples, n_boot=200, seed=2)
        assert rate == pytest.approx(3.0, abs=0.1)
        assert ci < 0.1


class TestConstantsValidation:
    def test_rejects_bad_stability(self):
        with pytest.raises(DomainError):
            ProblemConstants(n_stab=0.5, alpha=1.0, h=0.75, sigmas=(1.0,))

    def test_rejects_negative_alpha(self):
        with pytest.raises(DomainError):
            ProblemConstants(n_stab=1.0, alpha=-1.0, h=0.75, sigmas=(1.0,))

    def test_rejects_negative_sigma(self):
        with pytest.raises(DomainError):
            ProblemConstants(n_stab=1.0, alpha=1.0, h=0.75, sigmas=(-1.0,))
