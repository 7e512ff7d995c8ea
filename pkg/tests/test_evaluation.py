import numpy as np
import pytest
import torch

from exinpaint.config import default_brush_params
from exinpaint.errors import NumericError, ParameterError
from exinpaint.evaluation import (
    EvalReport,
    FeatureExtractor,
    evaluate,
    extract_features,
    fid,
    ids_scores,
)

from conftest import rand_image


@pytest.fixture(scope="module")
def extractor():
    return FeatureExtractor()


# --- features -----------------------------------------------------------------

def test_features_deterministic_and_permutable(extractor):
    imgs = rand_image(np.random.default_rng(0), 16, batch=6)
    f1 = extract_features(imgs, extractor)
    f2 = extract_features(imgs, extractor)
    assert np.array_equal(f1, f2)
    perm = [3, 1, 5, 0, 2, 4]
    f3 = extract_features(imgs[perm], extractor)
    assert np.array_equal(f3, f1[perm])


def test_features_batch_vs_single(extractor):
    imgs = rand_image(np.random.default_rng(1), 16, batch=5)
    batched = extract_features(imgs, extractor, batch_size=5)
    singles = np.concatenate([extract_features(imgs[i : i + 1], extractor) for i in range(5)])
    assert np.allclose(batched, singles, atol=1e-5)


def test_extractor_hash_stable(extractor):
    assert extractor.weights_hash == FeatureExtractor().weights_hash


# --- fid -----------------------------------------------------------------------

def _exact_moment_features(rng, n, mu, cov):
    """Samples whose empirical mean/cov (ddof=1) equal mu/cov exactly."""
    d = len(mu)
    x = rng.standard_normal((n, d))
    x -= x.mean(axis=0)
    c = np.cov(x, rowvar=False)
    evals, evecs = np.linalg.eigh(c)
    whiten = evecs @ np.diag(evals**-0.5) @ evecs.T
    evals2, evecs2 = np.linalg.eigh(cov)
    color = evecs2 @ np.diag(np.sqrt(evals2)) @ evecs2.T
    return x @ whiten @ color + mu


def _closed_form_fid(mu1, cov1, mu2, cov2):
    from scipy.linalg import sqrtm

    cross = sqrtm(cov1 @ cov2)
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1 + cov2 - 2 * cross.real))


def test_fid_self_is_zero(extractor):
    feats = extract_features(rand_image(np.random.default_rng(2), 16, batch=32), extractor)
    assert fid(feats, feats) <= 1e-6


def test_fid_matches_closed_form_gaussians():
    rng = np.random.default_rng(3)
    d = 6
    mu1, mu2 = rng.standard_normal(d), rng.standard_normal(d)
    a1 = rng.standard_normal((d, d))
    a2 = rng.standard_normal((d, d))
    cov1 = a1 @ a1.T + 0.5 * np.eye(d)
    cov2 = a2 @ a2.T + 0.5 * np.eye(d)
    fa = _exact_moment_features(rng, 500, mu1, cov1)
    fb = _exact_moment_features(rng, 500, mu2, cov2)
    # regularization adds eps to each diagonal; fold it into the oracle
    expected = _closed_form_fid(mu1, cov1 + 1e-6 * np.eye(d), mu2, cov2 + 1e-6 * np.eye(d))
    assert fid(fa, fb) == pytest.approx(expected, abs=1e-3)


def test_fid_symmetry_and_nonnegativity():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((64, 8))
    b = rng.standard_normal((64, 8)) + 0.3
    ab, ba = fid(a, b), fid(b, a)
    assert abs(ab - ba) <= 1e-8
    assert ab >= 0


def test_fid_shape_errors():
    with pytest.raises(ParameterError):
        fid(np.zeros((4, 3)), np.zeros((4, 5)))
    with pytest.raises(ParameterError):
        fid(np.zeros((1, 3)), np.zeros((4, 3)))


# --- separability scores ----------------------------------------------------------

def test_ids_identical_sets_gives_half():
    rng = np.random.default_rng(5)
    feats = rng.standard_normal((128, 6))
    u, p = ids_scores(feats, feats.copy())
    assert u == pytest.approx(0.5, abs=1e-9)
    assert p == pytest.approx(0.5, abs=1e-9)


def test_ids_separated_clusters_gives_zero():
    rng = np.random.default_rng(6)
    real = rng.standard_normal((128, 4)) + 50.0
    fake = rng.standard_normal((128, 4)) - 50.0
    u, p = ids_scores(real, fake)
    assert u == 0.0 and p == 0.0


def test_ids_overlap_matches_bayes_error():
    rng = np.random.default_rng(7)
    from scipy.stats import norm

    mu = 0.7  # clusters at +/- mu with unit isotropic covariance
    n = 4000
    real = rng.standard_normal((n, 2)) + np.array([mu, 0.0])
    fake = rng.standard_normal((n, 2)) - np.array([mu, 0.0])
    bayes = float(norm.cdf(-mu))
    u, _ = ids_scores(real, fake)
    assert abs(u - bayes) <= 0.03


def test_ids_degenerate_features_rejected():
    with pytest.raises(NumericError):
        ids_scores(np.zeros((16, 4)), np.zeros((16, 4)))


def test_ids_shape_mismatch():
    with pytest.raises(ParameterError):
        ids_scores(np.zeros((16, 4)), np.zeros((8, 4)))


# --- binned protocol ---------------------------------------------------------------

def test_evaluate_identity_oracle_near_zero_fid(toy_dataset, extractor):
    rng = np.random.default_rng(8)
    report = evaluate(
        lambda gt, m, exe: gt,
        toy_dataset.images,
        extractor,
        rng,
        brush=default_brush_params(16),
        bins=((0.1, 0.4), (0.4, 0.7)),
        n_samples=16,
    )
    names = [b.name for b in report.bins]
    assert "center" in names
    for b in report.bins:
        assert b.fid <= 1e-6
        assert b.count == 16


def test_evaluate_orders_identity_before_noise_model(toy_dataset, extractor):
    def noisy(gt, m, exe):
        junk = torch.from_numpy(
            np.random.default_rng(9).uniform(-1, 1, gt.shape).astype(np.float32)
        )
        return gt * (1 - m) + junk * m

    rng = np.random.default_rng(10)
    kwargs = dict(brush=default_brush_params(16), bins=((0.1, 0.5),), n_samples=16)
    r_noise = evaluate(noisy, toy_dataset.images, extractor, np.random.default_rng(10), **kwargs)
    r_ident = evaluate(lambda gt, m, exe: gt, toy_dataset.images, extractor,
                       np.random.default_rng(10), **kwargs)
    for nb, ib in zip(r_noise.bins, r_ident.bins):
        assert nb.fid > ib.fid


def test_evaluate_insufficient_bin_error(toy_dataset, extractor):
    with pytest.raises(ParameterError):
        evaluate(
            lambda gt, m, exe: gt,
            toy_dataset.images,
            extractor,
            np.random.default_rng(11),
            brush=default_brush_params(16),
            bins=((0.9997, 0.9999),),  # between attainable ratios at 16x16
            n_samples=4,
        )


def test_eval_report_json_roundtrip(toy_dataset, extractor):
    report = evaluate(
        lambda gt, m, exe: gt,
        toy_dataset.images,
        extractor,
        np.random.default_rng(12),
        brush=default_brush_params(16),
        bins=((0.1, 0.5),),
        n_samples=8,
    )
    restored = EvalReport.from_json(report.to_json())
    assert restored.extractor_hash == report.extractor_hash == extractor.weights_hash
    assert [vars(b) for b in restored.bins] == [vars(b) for b in report.bins]
