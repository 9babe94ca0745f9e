import numpy as np
import pytest

from stablesheets.experiments import (
    REFERENCE_POINTS,
    converge_posterior_tv,
    converge_prior,
    reference_anchors,
    reference_observation,
    reference_spec,
    sobolev_ladder,
)


class TestReference:
    def test_observation_fixed(self):
        a, b = reference_observation(), reference_observation()
        assert np.array_equal(a.y, b.y) and a.k == len(REFERENCE_POINTS)
        assert np.allclose(np.diag(a.sigma_cov), 0.1)

    def test_specs(self):
        assert reference_spec("increments", resolution=32).prior.resolution == 32
        assert reference_spec("lepage", truncation=100).prior.is_lepage

    def test_anchors(self):
        anchors = reference_anchors(64)
        assert len(anchors) == 5 and all(a.shape == (64,) for a in anchors)


class TestDrivers:
    def test_converge_prior_shapes(self):
        res = converge_prior(1.0, 1, 1.0, [8, 64], 1000, 3, seed=1)
        assert res.distances.shape == (3, 2)
        assert len(res.rows) == 6
        assert 0.0 <= res.nonincreasing_fraction <= 1.0

    def test_ladder_must_increase(self):
        with pytest.raises(ValueError):
            converge_prior(1.0, 1, 1.0, [64, 8], 100, 1, seed=1)

    def test_converge_prior_2d(self):
        res = converge_prior(1.0, 2, 1.0, [4, 8], 300, 2, seed=1, eval_resolution=64)
        assert np.all(res.distances > 0)

    def test_sobolev_ladder(self):
        out = sobolev_ladder(1.0, 2.0, [0.0, 0.5], [16, 32], 2, seed=0, truncation=200)
        assert out.shape == (2, 2, 2)
        assert np.all(out[:, :, 1] >= out[:, :, 0])

    def test_tv_rows(self):
        spec = reference_spec("lepage", truncation=10)
        rows = converge_posterior_tv(spec, [10, 50, 100], seed=0, prior_samples=200)
        assert [r[0] for r in rows] == [10, 50] and all(r[1] == 100 for r in rows)
