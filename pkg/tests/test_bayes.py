import json
import math

import numpy as np
import pytest
from scipy import stats

from stablesheets.bayes import (
    ChainOutput,
    ForwardOp,
    Observation,
    PosteriorSpec,
    PriorConfig,
    SpecError,
    autocorrelation,
    effective_sample_size,
    estimate_log_z,
    mcmc_increments,
    mcmc_lepage,
    ndll,
    probe_wellposedness,
    sign_block_kernel,
    tv_distance_weighted,
    weak_convergence_report,
)
from stablesheets.lepage import ArrivalSequence, Box, LePageState, draw_lepage_state
from stablesheets.norms import bl_functionals
from stablesheets.rng import stream
from stablesheets.sheet import GridSheet, eval_piecewise, lepage_sheet, sample_increments
from stablesheets.stable import ecf_standard_errors, empirical_char_fn


def conjugate_spec(y=0.8, noise=1.0, n_cells=8):
    # alpha = 2 sheet, one observation of U(1) ~ N(0, 2)
    prior = PriorConfig(2.0, 1, "increments", resolution=n_cells)
    return PosteriorSpec(prior, ForwardOp.pointwise([[1.0]]), Observation([y], [noise]))


def conjugate_log_z(y, noise):
    return 0.5 * math.log(noise / (noise + 2)) - y * y / (2 * (noise + 2))


def lepage_spec(n_terms=200, y=(0.5, -0.3), forward=None, noise=0.1, alpha=1.0):
    prior = PriorConfig(alpha, 1, "lepage", truncation=n_terms)
    fwd = forward or ForwardOp.pointwise([[0.3], [0.8]])
    return PosteriorSpec(prior, fwd, Observation(list(y), [noise] * len(y)))


class TestNdll:
    def test_exact_fit(self):
        s = GridSheet.from_increments([1.0, 2.0])
        assert ndll(s, Observation([3.0], [1.0]), ForwardOp.pointwise([[1.0]])) == 0.0

    def test_scalar(self):
        s = GridSheet.from_increments([0.0])
        assert ndll(s, Observation([1.0], [1.0]), ForwardOp.pointwise([[1.0]])) == 0.5

    def test_weighted(self):
        s = GridSheet.from_increments([0.0, 0.0])
        obs = Observation([1.0, 1.0], np.diag([1.0, 4.0]))
        assert ndll(s, obs, ForwardOp.pointwise([[0.5], [1.0]])) == pytest.approx(0.625)

    def test_nonnegative(self, rng):
        spec = lepage_spec()
        for i in range(20):
            assert spec.phi(spec.prior.draw(rng)) >= 0.0


class TestObservation:
    def test_not_spd(self):
        with pytest.raises(ValueError):
            Observation([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_ill_conditioned(self):
        with pytest.raises(ValueError, match="ill-conditioned"):
            Observation([0.0, 0.0], [1.0, 1e-13])

    def test_shape(self):
        with pytest.raises(ValueError):
            Observation([0.0, 0.0], np.eye(3))

    def test_whiten(self, rng):
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + np.eye(3)
        obs = Observation(np.zeros(3), cov)
        r = rng.standard_normal(3)
        w = obs.whiten(r)
        assert w @ w == pytest.approx(r @ np.linalg.solve(cov, r))


class TestForward:
    @pytest.mark.parametrize(
        "op",
        [
            ForwardOp.pointwise([[0.1], [0.55], [1.0]]),
            ForwardOp.convolution([0.5, 0.25], [0, 3, 7], 8),
            ForwardOp.explicit(np.arange(16.0).reshape(2, 8)),
        ],
    )
    def test_linearity_and_increment_matrix(self, op, rng):
        a = GridSheet.from_increments(rng.integers(-5, 5, 8).astype(float))
        b = GridSheet.from_increments(rng.integers(-5, 5, 8).astype(float))
        comb = GridSheet.from_increments(2 * a.increments - 3 * b.increments)
        assert np.array_equal(op(comb), 2 * op(a) - 3 * op(b))
        assert np.array_equal(op.increment_matrix(8) @ a.increments, op(a))

    def test_pointwise_uses_piecewise_rule(self, rng):
        s = sample_increments(1.0, 16, 1, rng)
        pts = np.array([[0.0], [0.3], [0.99]])
        assert np.array_equal(ForwardOp.pointwise(pts)(s), eval_piecewise(s, pts))

    def test_pointwise_2d(self, rng):
        s = sample_increments(1.0, 4, 2, rng)
        op = ForwardOp.pointwise([[0.5, 0.75]])
        assert op(s)[0] == pytest.approx((op.increment_matrix(4) @ s.increments.ravel())[0])

    def test_lepage_response_is_sheet_value(self, rng):
        st = draw_lepage_state(1.0, Box.unit(1), 300, rng)
        pts = np.array([[0.2], [0.7]])
        np.testing.assert_allclose(ForwardOp.pointwise(pts)(st), lepage_sheet(st, pts), atol=1e-12)

    def test_matrix_on_lepage_uses_discretisation(self, rng):
        from stablesheets.sheet import discretize_lepage

        st = draw_lepage_state(1.0, Box.unit(1), 300, rng)
        op = ForwardOp.convolution([1.0, -1.0], [2, 5], 8)
        np.testing.assert_allclose(op(st), op(discretize_lepage(st, 8)), atol=1e-12)

    def test_zero(self, rng):
        assert np.array_equal(ForwardOp.zero(3)(sample_increments(1.0, 4, 1, rng)), np.zeros(3))

    def test_grid_mismatch(self, rng):
        with pytest.raises(ValueError):
            ForwardOp.explicit(np.ones((1, 8)))(sample_increments(1.0, 4, 1, rng))


class TestSpec:
    def test_json_round_trip(self):
        spec = lepage_spec()
        back = PosteriorSpec.from_json(spec.to_json())
        assert back.to_dict() == spec.to_dict()

    def test_errors_listed_exhaustively(self):
        bad = {
            "prior": {"alpha": 3.0, "d": 1, "representation": "increments"},
            "forward": {"kind": "pointwise", "points": [[0.5]]},
            "observation": {"y": [0.0], "sigma_cov": [[-1.0]]},
        }
        with pytest.raises(SpecError) as err:
            PosteriorSpec.from_dict(bad)
        msgs = " | ".join(err.value.errors)
        assert "alpha" in msgs and "resolution" in msgs and "observation" in msgs

    def test_dimension_mismatch(self):
        with pytest.raises(SpecError):
            PosteriorSpec(PriorConfig(1.0, 2, resolution=4), ForwardOp.pointwise([[0.5]]), Observation([0.0], [1.0]))

    def test_output_mismatch(self):
        with pytest.raises(SpecError):
            PosteriorSpec(PriorConfig(1.0, 1, resolution=4), ForwardOp.zero(2), Observation([0.0], [1.0]))


class TestLogZ:
    def test_zero_map_exact(self, rng):
        spec = PosteriorSpec(PriorConfig(1.0, 1, resolution=8), ForwardOp.zero(2), Observation([1.0, 2.0], [1.0, 2.0]))
        est, se = estimate_log_z(spec, 500, rng)
        assert est == -spec.phi(spec.prior.draw(rng))
        assert est == pytest.approx(-0.5 * (1.0 + 4.0 / 2.0), abs=1e-15)
        assert se == 0.0

    def test_conjugate_y_zero(self, rng):
        est, se = estimate_log_z(conjugate_spec(0.0, 1.0), 20_000, rng)
        assert abs(est - (-0.5 * math.log(3.0))) < 3 * se

    def test_conjugate_general(self, rng):
        est, se = estimate_log_z(conjugate_spec(1.3, 0.5), 20_000, rng)
        assert abs(est - conjugate_log_z(1.3, 0.5)) < 3 * se
        assert est <= 0.0

    def test_sigma_inflation(self):
        spec = lepage_spec(100)
        small, _ = estimate_log_z(spec, 400, stream(1, "infl"))
        big, _ = estimate_log_z(spec.with_obs(spec.obs.scaled(100.0)), 400, stream(1, "infl"))
        assert small < big <= 0.0

    def test_needs_two(self, rng):
        with pytest.raises(ValueError):
            estimate_log_z(conjugate_spec(), 1, rng)


class TestProbe:
    def test_zero_perturbation(self, rng):
        rep = probe_wellposedness(lepage_spec(100), [np.zeros(2)], 5.0, 200, rng)
        assert rep.wp1_modulus == [0.0] and rep.wp3_sup == [0.0]
        assert rep.wd2_finite

    def test_algebraic_bound(self, rng):
        spec = lepage_spec(200)
        deltas = [np.array([0.3, -0.2]), np.array([2.0, 1.0]), np.array([1e-3, 0.0])]
        rep = probe_wellposedness(spec, deltas, 3.0, 500, rng, p=2.0)
        assert all(rep.wp3_bound_ok)
        assert max(rep.wp3_max_bound_ratio) <= 1.0 + 1e-12

    def test_halving_ratio(self, rng):
        spec = conjugate_spec(0.8, 1.0)
        rep = probe_wellposedness(spec, [np.array([0.05])], 10.0, 5000, rng)
        assert 0.3 <= rep.wp1_half_ratio[0] <= 0.7

    def test_report_serialises(self, rng):
        rep = probe_wellposedness(conjugate_spec(), [[0.1]], 1.0, 50, rng)
        json.dumps(rep.to_dict())


class TestTV:
    def test_identical(self, rng):
        spec = lepage_spec(100)
        assert tv_distance_weighted(spec, spec, 300, rng)[0] == 0.0

    def test_zero_map(self, rng):
        a = PosteriorSpec(PriorConfig(1.0, 1, resolution=8), ForwardOp.zero(1), Observation([0.0], [1.0]))
        b = a.with_obs(Observation([3.0], [1.0]))
        assert tv_distance_weighted(a, b, 300, rng)[0] == 0.0

    def test_gaussian_oracle(self, rng):
        noise = 1.0
        a, b = conjugate_spec(0.0, noise), conjugate_spec(1.0, noise)
        sd = math.sqrt(2 * noise / (2 + noise))
        dm = 2 * 1.0 / (2 + noise)
        exact = 2 * stats.norm.cdf(dm / (2 * sd)) - 1
        est, se = tv_distance_weighted(a, b, 20_000, rng)
        assert abs(est - exact) < 3 * se

    def test_vanishing_weights(self, rng):
        spec = conjugate_spec(1e4, 1e-3)
        with pytest.raises(ValueError, match="vanish"):
            tv_distance_weighted(spec, conjugate_spec(), 50, rng)

    def test_incompatible_priors(self, rng):
        with pytest.raises(ValueError):
            tv_distance_weighted(conjugate_spec(), lepage_spec(10), 10, rng)


class TestIncrementSampler:
    def test_rejects_general_alpha(self, rng):
        spec = PosteriorSpec(PriorConfig(1.5, 1, resolution=4), ForwardOp.zero(1), Observation([0.0], [1.0]))
        with pytest.raises(ValueError, match="mcmc_lepage"):
            mcmc_increments(spec, 10, 1.0, rng)

    def test_null_proposal(self, rng):
        ch = mcmc_increments(conjugate_spec(), 50, 0.0, rng)
        assert ch.acceptance["single-site"] == 1.0
        assert all(np.array_equal(s.increments, ch.samples[0].increments) for s in ch.samples)

    def test_trace_length(self, rng):
        ch = mcmc_increments(conjugate_spec(), 100, 1.0, rng, thin=10)
        assert len(ch) == 10 and len(ch.samples) == 10 and ch.observables.shape == (10, 1)
        assert 0.0 <= ch.acceptance["single-site"] <= 1.0

    def test_gaussian_prior_recovery(self, rng):
        # zero map, alpha = 2: increments ~ N(0, 2 h^d)
        n = 8
        spec = PosteriorSpec(PriorConfig(2.0, 1, resolution=n), ForwardOp.zero(1), Observation([0.0], [1.0]))
        ch = mcmc_increments(spec, 100_000, 2.0, rng, thin=10, keep_samples=True)
        x = np.array([s.increments for s in ch.samples]).ravel()
        assert abs(x.var() / (2 / n) - 1) < 0.05

    def test_cauchy_prior_quartiles(self, rng):
        n = 8
        spec = PosteriorSpec(PriorConfig(1.0, 1, resolution=n), ForwardOp.zero(1), Observation([0.0], [1.0]))
        ch = mcmc_increments(spec, 40_000, 3.0, rng, thin=10)
        x = np.array([s.increments for s in ch.samples]).ravel()
        q1, q3 = np.quantile(x, [0.25, 0.75])
        # quartiles of a Cauchy with scale h are -h and +h
        assert abs(q1 + 1 / n) < 0.1 / n and abs(q3 - 1 / n) < 0.1 / n

    def test_conjugate_mean(self, rng):
        y, noise = 0.8, 1.0
        ch = mcmc_increments(conjugate_spec(y, noise), 20_000, 1.0, rng, burn_in=200, keep_samples=False)
        mean, se = ch.observable_mean(0)
        assert abs(mean - 2 * y / (2 + noise)) < 3 * se


class TestLePageSampler:
    def test_zero_map(self, rng):
        spec = PosteriorSpec(PriorConfig(1.0, 1, "lepage", truncation=100), ForwardOp.zero(1), Observation([1.0], [1.0]))
        ch = mcmc_lepage(spec, 4000, 10, rng, thin=10)
        assert ch.acceptance == {"block": 1.0, "spacings": 1.0}
        # U(0.5) ~ S_1(0.5): ch.f. exp(-0.5|t|)
        u = np.array([lepage_sheet(s, 0.5) for s in ch.samples])
        t = np.array([0.5, 1.0, 2.0])
        ecf = empirical_char_fn(u, t)
        se, _ = ecf_standard_errors(u, t)
        n_eff = min(effective_sample_size(np.cos(tt * u)) for tt in t)
        assert np.all(np.abs(ecf.real - np.exp(-0.5 * t)) < 3 * se * math.sqrt(u.size / n_eff) + 0.02)

    def test_block_size_bounds(self, rng):
        with pytest.raises(ValueError):
            mcmc_lepage(lepage_spec(10), 10, 11, rng)

    def test_concentration(self, rng):
        truth = LePageState(1.0, Box.unit(1), [1.0, -1.0], ArrivalSequence([0.5, 1.0]), [[0.2], [0.6]])
        fwd = ForwardOp.pointwise([[0.4], [0.9]])
        y = fwd(truth)
        spec = PosteriorSpec(PriorConfig(1.0, 1, "lepage", truncation=200), fwd, Observation(y, [1e-3, 1e-3]))
        ch = mcmc_lepage(spec, 20_000, 4, rng, thin=10, burn_in=5000, keep_samples=False)
        sd = ch.observables.std(axis=0)
        mean = ch.observables.mean(axis=0)
        assert np.all(np.abs(mean - y) <= 3 * sd + 1e-12)

    def test_detailed_balance(self):
        st = LePageState(1.0, Box.unit(1), [1.0, 1.0], ArrivalSequence([0.4, 0.9]), [[0.3], [0.7]])
        spec = lepage_spec(2, y=(0.9, -0.2), noise=0.2)
        for b in (1, 2):
            configs, pi, k = sign_block_kernel(st, spec, b)
            assert configs.shape == (4, 2)
            np.testing.assert_allclose(k.sum(axis=1), 1.0, atol=1e-14)
            flow = pi[:, None] * k
            assert np.max(np.abs(flow - flow.T)) < 1e-12


class TestDiagnostics:
    def test_iid_ess(self, rng):
        x = rng.standard_normal(5000)
        assert 0.8 * x.size < effective_sample_size(x) < 1.2 * x.size

    def test_ar1_ess(self, rng):
        phi, n = 0.9, 50_000
        x = np.empty(n)
        x[0] = 0.0
        e = rng.standard_normal(n)
        for i in range(1, n):
            x[i] = phi * x[i - 1] + e[i]
        # integrated autocorrelation time (1 + phi) / (1 - phi) = 19
        assert effective_sample_size(x) == pytest.approx(n / 19, rel=0.2)

    def test_autocorrelation_lag0(self, rng):
        assert autocorrelation(rng.standard_normal(100))[0] == 1.0

    def test_positive_on_nonconstant(self):
        assert effective_sample_size([1.0, 2.0, 1.5, 3.0, 0.5]) > 0


class TestWeakReport:
    def _sets(self, rng, n=60):
        return [sample_increments(1.0, 16, 1, rng) for _ in range(n)]

    def test_identical(self, rng):
        a = self._sets(rng)
        g = bl_functionals([np.zeros(32), np.ones(32)], 1.0)
        rep = weak_convergence_report([a, list(a)], g)
        assert rep.max_gap == 0.0

    def test_shuffled(self, rng):
        a = self._sets(rng)
        b = [a[i] for i in rng.permutation(len(a))]
        g = bl_functionals([np.zeros(16)], 1.0)
        assert weak_convergence_report([a, b], g).max_gap == 0.0

    def test_grid_incompatible(self, rng):
        g = bl_functionals([np.zeros(24)], 1.0)
        with pytest.raises(ValueError):
            weak_convergence_report([self._sets(rng, 3), self._sets(rng, 3)], g)

    def test_prior_resolutions(self):
        # alpha = 1 prior ensembles at N = 32 and N = 256 share their BL means
        x = (np.arange(256) + 1) / 256
        step = (x > 0.5).astype(float)
        anchors = [np.zeros(256), step, -step, x, -x]
        g = bl_functionals(anchors, 1.0)
        sets = [[sample_increments(1.0, n, 1, stream(3, "weak", n * 10_000 + i)) for i in range(1000)] for n in (32, 256)]
        assert weak_convergence_report(sets, g).within(3.0)

    def test_needs_two_sets(self, rng):
        with pytest.raises(ValueError):
            weak_convergence_report([self._sets(rng)], bl_functionals([np.zeros(16)], 1.0))
