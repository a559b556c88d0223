import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fepca.core import (
    Dataset,
    RankError,
    apply_projection,
    corrected_residuals,
    curvature_index,
    estimate_noise_variance,
    fit_pca,
    noise_df,
    nonlinearity,
    preprocess,
    projection_diagonal,
    projection_operator,
)
from conftest import low_rank


def vec(m):
    return np.asarray(m).ravel(order="F")


# ---------------------------------------------------------------- preprocess


def test_preprocess_means():
    w, pre = preprocess(np.array([[1.0, 10], [2, 20], [3, 30]]))
    np.testing.assert_allclose(pre.col_means, [2, 20])
    np.testing.assert_allclose(w.mean(axis=0), 0, atol=1e-12)
    assert not pre.scaled and np.all(pre.col_scales == 1)


def test_constant_column_centres_to_zero():
    x = np.column_stack([np.full(5, 7.0), np.arange(5.0)])
    w, _ = preprocess(x)
    assert np.all(w[:, 0] == 0)


def test_already_centred_is_unchanged(rng):
    x = rng.standard_normal((6, 3))
    x -= x.mean(axis=0)
    w, pre = preprocess(x)
    np.testing.assert_allclose(w, x, atol=1e-15)
    np.testing.assert_allclose(pre.col_means, 0, atol=1e-15)


def test_scaling_unit_sd_and_exact_inverse(rng):
    x = rng.normal(3, 5, size=(12, 4))
    w, pre = preprocess(x, scale=True)
    np.testing.assert_allclose(w.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(w.std(axis=0, ddof=1), 1, atol=1e-10)
    np.testing.assert_allclose(pre.invert(w), x, atol=1e-12)


def test_scaling_zero_variance_column_named():
    data = Dataset(np.array([[1.0, 2], [1, 3], [1, 5]]), ("a", "b", "c"), ("flat", "v"))
    with pytest.raises(ValueError, match="flat"):
        preprocess(data, scale=True)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 3)), ("a", "b"), ("x", "y", "z"))
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0, np.nan], [1, 2], [3, 4]]), ("a", "b", "c"), ("x", "y"))
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), ("a", "b"), ("x", "y"))


# ---------------------------------------------------------------- fit_pca


def test_fit_invariants(rng):
    x = rng.standard_normal((15, 7))
    fit = fit_pca(x, 3)
    np.testing.assert_allclose(fit.U.T @ fit.U, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(fit.V.T @ fit.V, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(fit.U.sum(axis=0), 0, atol=1e-10)
    assert np.all(np.diff(fit.sqrt_lambda) <= 0)
    idx = np.argmax(np.abs(fit.V), axis=0)
    assert np.all(fit.V[idx, range(3)] > 0)
    np.testing.assert_allclose(fit.fitted - fit.preprocess.col_means, fit.centered_fit, atol=1e-10)


def test_exact_low_rank_recovered(rng):
    x = low_rank(rng, 9, 6, 2)
    np.testing.assert_allclose(fit_pca(x, 2).fitted, x, atol=1e-10)


def test_full_rank_truncation_recovers_data(rng):
    x = rng.standard_normal((5, 8))
    np.testing.assert_allclose(fit_pca(x, 4).fitted, x, atol=1e-10)


def test_residual_equals_trailing_spectrum(rng):
    x = rng.standard_normal((10, 6))
    xc = x - x.mean(axis=0)
    s = np.linalg.svd(xc, compute_uv=False)  # oracle: full spectrum
    fit = fit_pca(x, 2)
    assert np.sum((xc - fit.centered_fit) ** 2) == pytest.approx(np.sum(s[2:] ** 2), rel=1e-10)


def test_eckart_young_against_random_rank_s(rng):
    x = rng.standard_normal((12, 8))
    xc = x - x.mean(axis=0)
    best = np.linalg.norm(xc - fit_pca(x, 3).centered_fit)
    for _ in range(20):
        m = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 8))
        assert best <= np.linalg.norm(xc - m)


def test_deterministic_bit_identical(rng):
    x = rng.standard_normal((11, 5))
    a, b = fit_pca(x, 2), fit_pca(x.copy(), 2)
    assert a.U.tobytes() == b.U.tobytes()
    assert a.V.tobytes() == b.V.tobytes()
    assert a.fitted.tobytes() == b.fitted.tobytes()


def test_rank_out_of_range(rng):
    x = rng.standard_normal((4, 6))
    with pytest.raises(RankError):
        fit_pca(x, 4)
    with pytest.raises(RankError):
        fit_pca(x, 0)


def test_degenerate_flag():
    # two equal leading singular values, rank 1 requested
    x = np.zeros((4, 2))
    x[:, 0] = [1, -1, 0, 0]
    x[:, 1] = [0, 0, 1, -1]
    fit = fit_pca(x, 1)
    assert fit.degenerate and "degenerate_subspace" in fit.warnings
    assert not fit_pca(x, 2).degenerate


# ---------------------------------------------------------------- noise


def test_noise_df_formula():
    assert noise_df(10, 5, 2) == 26


def test_noise_zero_on_exact_rank(rng):
    x = low_rank(rng, 10, 5, 2)
    assert estimate_noise_variance(x, fit_pca(x, 2)).sigma2 == pytest.approx(0, abs=1e-20)


def test_noise_df_nonpositive_raises(rng):
    from dataclasses import replace

    # df = (n - S)(p - S) + S is positive for every valid rank; force S past p
    x = rng.standard_normal((10, 2))
    fit = replace(fit_pca(x, 1), rank=5)
    with pytest.raises(RankError, match="rank too large"):
        estimate_noise_variance(x, fit)


def test_noise_monte_carlo(rng):
    signal = low_rank(rng, 100, 20, 2)
    est = []
    for _ in range(50):
        x = signal + rng.normal(0, 0.5, signal.shape)
        est.append(estimate_noise_variance(x, fit_pca(x, 2)).sigma2)
    assert np.mean(est) == pytest.approx(0.25, rel=0.15)


# ---------------------------------------------------------------- projector


def _trace_dim(n, p, s):
    return p + s * (n - 1) + p * s - s * s


def test_projector_properties(rng):
    x = rng.standard_normal((8, 4))
    fit = fit_pca(x, 2)
    op = projection_operator(fit)
    P = op.P
    n, p = x.shape
    assert np.linalg.norm(P - P.T) <= 1e-9 * n * p
    assert np.linalg.norm(P @ P - P) <= 1e-8 * n * p
    assert np.all(op.diag >= -1e-10) and np.all(op.diag <= 1 + 1e-10)
    assert np.trace(P) == pytest.approx(_trace_dim(n, p, 2), abs=1e-6)
    # oracle: direct truncated SVD
    assert np.max(np.abs(P @ vec(x) - vec(fit.fitted))) < 1e-9


def test_projector_full_rank_reproduces_data(rng):
    x = rng.standard_normal((5, 3))
    fit = fit_pca(x, 3)
    np.testing.assert_allclose(projection_operator(fit).P @ vec(x), vec(x), atol=1e-9)


def test_projector_size_guard(rng):
    fit = fit_pca(rng.standard_normal((70, 60)), 2)
    with pytest.raises(MemoryError, match="projection_diagonal"):
        projection_operator(fit)


def test_projection_identity_many_random_matrices(rng):
    for _ in range(100):
        n = int(rng.integers(3, 31))
        p = int(rng.integers(2, 21))
        s = int(rng.integers(1, min(n - 1, p) + 1))
        x = rng.standard_normal((n, p)) * rng.uniform(0.1, 10)
        fit = fit_pca(x, s)
        P = projection_operator(fit).P
        assert np.linalg.norm(P @ vec(x) - vec(fit.fitted)) <= 1e-8 * np.linalg.norm(x)


def test_apply_projection_matches_matrix(rng):
    x = rng.standard_normal((7, 5))
    fit = fit_pca(x, 2)
    P = projection_operator(fit).P
    z = rng.standard_normal((3, 7, 5))
    got = apply_projection(fit, z)
    for k in range(3):
        np.testing.assert_allclose(vec(got[k]), P @ vec(z[k]), atol=1e-12)


def test_projection_diagonal_matches_operator(rng):
    x = rng.standard_normal((8, 4))
    fit = fit_pca(x, 2)
    d = projection_diagonal(fit)
    np.testing.assert_allclose(vec(d), projection_operator(fit).diag, atol=1e-12)
    assert np.all((d >= 0) & (d <= 1))


def test_projection_diagonal_full_rank_is_one(rng):
    fit = fit_pca(rng.standard_normal((4, 6)), 3)
    np.testing.assert_allclose(projection_diagonal(fit), 1, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 15), p=st.integers(2, 12), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_projector_is_projection_property(n, p, seed, data):
    s = data.draw(st.integers(1, min(n - 1, p)))
    x = np.random.default_rng(seed).standard_normal((n, p))
    fit = fit_pca(x, s)
    op = projection_operator(fit)
    assert np.linalg.norm(op.P @ op.P - op.P) <= 1e-8 * n * p
    assert np.trace(op.P) == pytest.approx(_trace_dim(n, p, s), abs=1e-6)
    np.testing.assert_allclose(vec(projection_diagonal(fit)), op.diag, atol=1e-12)


# ---------------------------------------------------------------- diagnostics


def test_curvature_index():
    from dataclasses import replace

    fit = fit_pca(np.random.default_rng(0).standard_normal((6, 3)), 2)
    fit = replace(fit, sqrt_lambda=np.array([4.0, 2.0]))
    assert curvature_index(fit) == 0.5
    with pytest.raises(ValueError, match="rank deficient"):
        curvature_index(replace(fit, sqrt_lambda=np.array([4.0, 0.0])))


def test_curvature_halves_when_data_doubles(rng):
    x = rng.standard_normal((9, 5))
    assert curvature_index(fit_pca(2 * x, 2)) == pytest.approx(curvature_index(fit_pca(x, 2)) / 2)


def test_nonlinearity_smaller_at_high_snr(rng):
    signal = low_rank(rng, 30, 10, 2)
    hi, lo = [], []
    for _ in range(20):
        for sd, acc in ((0.05, hi), (1.0, lo)):
            x = signal + rng.normal(0, sd, signal.shape)
            f = fit_pca(x, 2)
            acc.append(nonlinearity(f, estimate_noise_variance(x, f)))
    assert np.mean(hi) < np.mean(lo)


def test_corrected_residuals(rng):
    x = low_rank(rng, 8, 5, 2)
    fit = fit_pca(x, 2)
    np.testing.assert_allclose(corrected_residuals(x, fit), 0, atol=1e-8)

    y = rng.standard_normal((4, 3))
    fit = fit_pca(y, 1)
    diag = np.full((4, 3), 0.75)
    diag[0, 0] = 1.0
    xs = fit.fitted - 1.0  # raw residual xhat - x = 1
    out = corrected_residuals(xs, fit, diag)
    np.testing.assert_allclose(out[1:], 2.0)
    assert np.isnan(out[0, 0])


def test_noise_units_follow_fitted(rng):
    x = low_rank(rng, 10, 5, 2) * 3 + 100
    working, pre = preprocess(x, scale=True)
    own = fit_pca(working, 2)
    given_pre = fit_pca(working, 2, preprocess=pre)
    assert estimate_noise_variance(working, own).sigma2 == pytest.approx(0, abs=1e-20)
    assert estimate_noise_variance(x, given_pre).sigma2 == pytest.approx(0, abs=1e-18)
