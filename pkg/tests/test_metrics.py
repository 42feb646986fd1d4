import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordinal_diffusion.metrics import (
    MetricsReport, collinearity_probe, evaluate, fit_alpha, frechet_gaussian,
    knn_precision_recall, write_collinearity_csv,
)
from ordinal_diffusion.schedule import build_schedule


def brute_force_precision_recall(real, gen, k):
    """Independent double-loop version of the k-NN coverage rule."""
    def sqd(a, b):
        s = 0.0
        for j in range(len(a)):
            diff = a[j] - b[j]
            s += diff * diff
        return s

    def radii(points):
        out = []
        for i, p in enumerate(points):
            ds = sorted(sqd(p, q) for j, q in enumerate(points) if j != i)
            out.append(ds[k - 1])
        return out

    def covered(query, ref):
        rr = radii(ref)
        hits = 0
        for x in query:
            if any(sqd(x, ref[j]) <= rr[j] for j in range(len(ref))):
                hits += 1
        return hits / len(query)

    return covered(gen, real), covered(real, gen)


def axis_cross(scale, D=2):
    # 2D points with mean 0 and unbiased covariance exactly scale^2 * I
    a = np.sqrt(1.5) * scale
    return np.array([[a, 0], [-a, 0], [0, a], [0, -a]])


class TestFrechet:
    def test_identical(self):
        x = np.random.default_rng(0).normal(size=(50, 3))
        assert frechet_gaussian(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_mean_shift_1d(self):
        assert frechet_gaussian(np.array([-1.0, 1.0]), np.array([0.0, 2.0])) == pytest.approx(1.0, abs=1e-9)

    def test_diagonal_covariances(self):
        real, gen = axis_cross(1.0), axis_cross(2.0)
        np.testing.assert_allclose(np.cov(real, rowvar=False), np.eye(2), atol=1e-15)
        assert frechet_gaussian(real, gen) == pytest.approx(2.0, abs=1e-9)

    def test_general_closed_form_via_scipy(self):
        from scipy import linalg
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(40, 3)), rng.normal(size=(30, 3)) @ rng.normal(size=(3, 3))
        m1, m2 = a.mean(0), b.mean(0)
        s1, s2 = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
        ref = ((m1 - m2) ** 2).sum() + np.trace(s1 + s2 - 2 * linalg.sqrtm(s1 @ s2).real)
        assert frechet_gaussian(a, b) == pytest.approx(ref, rel=1e-8)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            frechet_gaussian(np.zeros((1, 2)), np.zeros((5, 2)))

    def test_marginal_counts_regularised(self):
        rng = np.random.default_rng(1)
        assert np.isfinite(frechet_gaussian(rng.normal(size=(2, 4)), rng.normal(size=(3, 4))))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_symmetric_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(20, 2))
        b = rng.normal(1, 2, size=(25, 2))
        ab, ba = frechet_gaussian(a, b), frechet_gaussian(b, a)
        assert ab >= 0
        assert ab == pytest.approx(ba, rel=1e-9, abs=1e-12)


class TestPrecisionRecall:
    def test_identical_sets(self):
        x = np.random.default_rng(0).normal(size=(40, 2))
        assert knn_precision_recall(x, x.copy(), 3) == (1.0, 1.0)

    def test_far_apart(self):
        x = np.random.default_rng(0).normal(size=(40, 2))
        assert knn_precision_recall(x, x + 1e3, 3) == (0.0, 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        real = rng.normal(size=(50, 2))
        gen = rng.normal(0.3, 1.2, size=(50, 2))
        assert knn_precision_recall(real, gen, 3) == brute_force_precision_recall(real, gen, 3)

    def test_bounds_and_small_sets(self):
        with pytest.raises(ValueError):
            knn_precision_recall(np.zeros((3, 2)), np.zeros((10, 2)), 3)
        with pytest.raises(ValueError):
            knn_precision_recall(np.zeros((10, 2)), np.zeros((10, 2)), 0)

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(5, 60), m=st.integers(5, 60), k=st.integers(1, 4),
           seed=st.integers(0, 2**32 - 1))
    def test_in_unit_interval_and_matches_oracle(self, n, m, k, seed):
        rng = np.random.default_rng(seed)
        real, gen = rng.normal(size=(n, 3)), rng.normal(0.5, 1.0, size=(m, 3))
        p, r = knn_precision_recall(real, gen, k)
        assert 0 <= p <= 1 and 0 <= r <= 1
        assert (p, r) == brute_force_precision_recall(real, gen, k)


def constant_predictor(vectors):
    """Mock model: class c always predicts vectors[c], whatever the input."""
    return lambda x, t, c: np.tile(vectors[c], (x.shape[0], 1))


@pytest.fixture(scope="module")
def sched():
    return build_schedule(1e-4, 0.02, 1000)


def toy_data(C=3, D=2):
    rng = np.random.default_rng(0)
    return {c: rng.normal(c, 1, size=(20, D)) for c in range(1, C + 1)}


class TestCollinearity:
    def test_midpoint(self, sched):
        v = {1: np.array([0.0, 0.0]), 2: np.array([1.0, 2.0]), 3: np.array([2.0, 4.0])}
        (rec,) = collinearity_probe(constant_predictor(v), toy_data(), [900], sched, "euclidean")
        assert rec.alpha_hat == 0.5
        assert rec.interp_residual == 0.0
        assert rec.residual == pytest.approx(0.0, abs=1e-30)

    def test_endpoint(self, sched):
        v = {1: np.array([1.0, -1.0]), 2: np.array([1.0, -1.0]), 3: np.array([3.0, 0.5])}
        (rec,) = collinearity_probe(constant_predictor(v), toy_data(), [10], sched)
        assert rec.alpha_hat == 1.0

    @pytest.mark.parametrize("seed", range(4))
    def test_alpha_matches_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        p, q, r = rng.normal(size=(3, 5))
        alpha, _ = fit_alpha(p, q, r)
        grid = np.arange(-5.0, 5.0, 1e-4)
        obj = [np.sum((q - (a * p + (1 - a) * r)) ** 2) for a in grid]
        assert abs(alpha - grid[int(np.argmin(obj))]) <= 1e-3

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_alpha_is_stationary(self, seed):
        rng = np.random.default_rng(seed)
        p, q, r = rng.normal(size=(3, 4))
        a, _ = fit_alpha(p, q, r)
        u, v = p - r, q - r
        assert abs(-2 * u @ (v - a * u)) <= 1e-10

    @pytest.mark.parametrize("alpha", [0.0, 0.2, 0.5, 0.75, 1.0])
    def test_collinear_mock_metric_zero_sets(self, sched, alpha):
        p, r = np.array([0.0, 1.0]), np.array([2.0, -1.0])
        v = {1: p, 2: alpha * p + (1 - alpha) * r, 3: r}
        data = toy_data()
        (eu,) = collinearity_probe(constant_predictor(v), data, [500], sched, "euclidean")
        (sq,) = collinearity_probe(constant_predictor(v), data, [500], sched, "squared")
        assert eu.residual == pytest.approx(0.0, abs=1e-28)
        if alpha in (0.0, 1.0):
            assert sq.residual == pytest.approx(0.0, abs=1e-28)
        else:
            assert sq.residual > 0

    def test_records_per_t_and_triplet(self, sched):
        v = {c: np.array([c, c ** 2], dtype=float) for c in range(1, 5)}
        recs = collinearity_probe(constant_predictor(v), toy_data(C=4), [100, 900], sched)
        assert len(recs) == 8
        assert {(r.p, r.q, r.r) for r in recs} == {(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)}
        assert all(r.residual >= 0 for r in recs)

    def test_csv(self, sched, tmp_path):
        v = {c: np.array([c, 0.0]) for c in range(1, 4)}
        recs = collinearity_probe(constant_predictor(v), toy_data(), [900], sched)
        write_collinearity_csv(recs, tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "t,p,q,r,residual,alpha_hat"
        assert lines[1].startswith("900,1,2,3,")


def test_evaluate_report_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    real = {c: rng.normal(c, 1, size=(30, 2)) for c in (1, 2, 3)}
    rep = evaluate(real, real, k=3)
    assert rep.precision == rep.recall == 1.0
    assert rep.frechet_overall == pytest.approx(0.0, abs=1e-9)
    assert len(rep.frechet_per_class) == 3
    rep.to_json(tmp_path / "r.json")
    back = MetricsReport.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert back == rep
