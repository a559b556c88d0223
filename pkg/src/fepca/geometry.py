"""Procrustes alignment of pseudo-realizations and Gaussian confidence ellipsoids."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import PcaFit
from .inference import PseudoRealizationSet


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    center: np.ndarray
    cov: np.ndarray
    level: float
    radius2: float

    @property
    def dim(self) -> int:
        return self.center.shape[0]


def procrustes_rotation(reference: np.ndarray, replicate: np.ndarray) -> np.ndarray:
    """Orthogonal ``R`` minimising ``||reference - replicate @ R||``.

    ``R = E_l E_r'`` from the SVD of ``replicate' reference``. Both inputs are
    assumed centred; no translation or scaling is fitted.
    """
    reference = np.asarray(reference, dtype=float)
    replicate = np.asarray(replicate, dtype=float)
    if reference.shape != replicate.shape:
        raise ValueError("reference and replicate must have the same shape")
    if not np.any(replicate):
        warnings.warn("zero replicate matrix; returning identity rotation", RuntimeWarning)
        return np.eye(replicate.shape[1])
    el, _, er_t = np.linalg.svd(replicate.T @ reference)
    return el @ er_t


def _center(m: np.ndarray) -> np.ndarray:
    return m - m.mean(axis=-2, keepdims=True)


def _rotate(ref: np.ndarray, reps: np.ndarray) -> np.ndarray:
    # batched SVD of the p x p cross-products
    cross = np.swapaxes(reps, -1, -2) @ ref
    el, _, er_t = np.linalg.svd(cross)
    return reps @ (el @ er_t)


def align_replicates(reference: np.ndarray, replicates: np.ndarray) -> np.ndarray:
    """Centre every replicate and rotate it onto the centred reference."""
    return _rotate(_center(np.asarray(reference, dtype=float)), _center(np.asarray(replicates, dtype=float)))


def align_set(pset: PseudoRealizationSet, side: str = "rows") -> np.ndarray:
    """Aligned, centred replicates ``(K, n, p)``.

    ``side="columns"`` solves the transposed problem, so the result has shape
    ``(K, p, n)`` and its rows are the column points.
    """
    ref_c = _center(pset.reference.fitted)
    reps_c = _center(pset.replicates)
    if side == "rows":
        return _rotate(ref_c, reps_c)
    if side == "columns":
        # column-centred already; centring the transpose again would move the column points
        return _rotate(ref_c.T, np.swapaxes(reps_c, 1, 2))
    raise ValueError("side must be 'rows' or 'columns'")


def _axes(fit: PcaFit, side: str) -> np.ndarray:
    return fit.V if side == "rows" else fit.U


def project_scores(aligned: np.ndarray, fit: PcaFit, dims=None, side: str = "rows") -> np.ndarray:
    """Coordinates of the aligned (centred) replicates on the reference axes.

    ``dims`` are 1-based component numbers. For rows the axes are the
    loadings ``V``; for columns (transposed problem) they are ``U``.
    """
    dims = _check_dims(dims, fit.rank)
    axes = _axes(fit, side)[:, [d - 1 for d in dims]]
    return np.asarray(aligned) @ axes


def aligned_coordinates(pset: PseudoRealizationSet, dims=None, side: str = "rows") -> np.ndarray:
    """``project_scores(align_set(pset))`` without forming the full rotations.

    The centred reference is ``F V'`` with ``F`` the ``S`` scores, so the
    cross-product ``X_b' F V'`` has rank ``S`` and the rotation restricted to
    the reference axes is ``A B'`` from the thin SVD ``X_b' F = A D B'``.
    Returns ``(K, n_points, len(dims))``.
    """
    fit = pset.reference
    dims = _check_dims(dims, fit.rank)
    reps = _center(pset.replicates)
    if side == "rows":
        scores = fit.U * fit.sqrt_lambda
    elif side == "columns":
        reps = np.swapaxes(reps, 1, 2)
        scores = fit.V * fit.sqrt_lambda
    else:
        raise ValueError("side must be 'rows' or 'columns'")
    m = np.swapaxes(reps, 1, 2) @ scores
    a, _, bt = np.linalg.svd(m, full_matrices=False)
    coords = reps @ (a @ bt)
    return coords[:, :, [d - 1 for d in dims]]


def reference_coordinates(fit: PcaFit, dims=None, side: str = "rows") -> np.ndarray:
    dims = _check_dims(dims, fit.rank)
    idx = [d - 1 for d in dims]
    other = fit.U if side == "rows" else fit.V
    return other[:, idx] * fit.sqrt_lambda[idx]


def true_coordinates(truth: np.ndarray, fit: PcaFit, dims=None) -> np.ndarray:
    """Row points of a true matrix placed on the reference map.

    The truth is centred with the reference column means and projected on
    the reference loadings, the same map applied to the replicates.
    """
    dims = _check_dims(dims, fit.rank)
    pre = fit.preprocess
    centred = (np.asarray(truth, dtype=float) - pre.col_means) / pre.col_scales
    return centred @ fit.V[:, [d - 1 for d in dims]]


def _check_dims(dims, rank: int) -> list[int]:
    if dims is None:
        return list(range(1, rank + 1))
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 or d > rank for d in dims):
        raise ValueError(f"dims must be within 1..{rank}, got {dims}")
    return dims


def fit_ellipsoid(points, level: float = 0.95) -> ConfidenceEllipsoid:
    """Gaussian ellipsoid: sample mean, sample covariance (divisor K-1) and the
    chi-square quantile at ``level``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    K, d = pts.shape
    if K <= d:
        raise ValueError(f"need more than {d} points for a {d}-d ellipsoid, got {K}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    center = pts.mean(axis=0)
    dev = pts - center
    cov = dev.T @ dev / (K - 1)
    cov = 0.5 * (cov + cov.T)
    tr = np.trace(cov)
    if tr > 0 and np.linalg.matrix_rank(cov) < d:
        cov = cov + (1e-12 * tr / d) * np.eye(d)
    return ConfidenceEllipsoid(center, cov, float(level), float(stats.chi2.ppf(level, d)))


def fit_ellipsoids(coords: np.ndarray, level: float = 0.95) -> list[ConfidenceEllipsoid]:
    """One ellipsoid per point from ``coords`` of shape ``(K, n_points, d)``."""
    coords = np.asarray(coords, dtype=float)
    return [fit_ellipsoid(coords[:, i, :], level) for i in range(coords.shape[1])]


def mahalanobis2(e: ConfidenceEllipsoid, point) -> float:
    diff = np.atleast_1d(np.asarray(point, dtype=float)) - e.center
    if not np.any(diff):
        return 0.0
    if not np.any(e.cov):
        # collapsed ellipsoid: only its centre is inside
        return float("inf")
    try:
        sol = np.linalg.solve(e.cov, diff)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("ellipsoid covariance is singular") from exc
    return float(diff @ sol)


def contains(e: ConfidenceEllipsoid, point) -> bool:
    return mahalanobis2(e, point) <= e.radius2


def ellipse_outline(e: ConfidenceEllipsoid, m: int = 128) -> np.ndarray:
    """``m`` boundary points of a 2-d ellipse, ``center + sqrt(r2) cov^(1/2) (cos t, sin t)``."""
    if e.dim != 2:
        raise ValueError("outline needs a 2-d ellipse")
    if m < 8:
        raise ValueError("need at least 8 outline points")
    w, q = np.linalg.eigh(e.cov)
    root = (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T
    t = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    circle = np.column_stack([np.cos(t), np.sin(t)])
    return e.center + np.sqrt(e.radius2) * circle @ root.T
