"""End-to-end analysis of one dataset: fit, pseudo-realizations, ellipsoids."""

from __future__ import annotations

import numpy as np

from .core import Dataset, curvature_index, estimate_noise_variance, fit_pca, preprocess
from .dataio import EllipsoidRecord, ResultBundle
from .geometry import aligned_coordinates, fit_ellipsoids
from .inference import DEFAULT_B, normalize_method, run_method


def default_dim_pairs(rank: int) -> list[tuple[int, int]]:
    pairs = [(s, s + 1) for s in range(1, rank, 2)]
    if rank % 2 == 1 and rank > 1:
        pairs.append((rank - 1, rank))
    return pairs


def _records(coords: np.ndarray, labels, side: str, dims, level: float) -> list[EllipsoidRecord]:
    return [
        EllipsoidRecord(side, lab, list(dims), e.center.tolist(), e.cov.tolist(), e.level, e.radius2)
        for lab, e in zip(labels, fit_ellipsoids(coords, level))
    ]


def analyze(
    data: Dataset,
    rank: int,
    method: str,
    *,
    scale: bool = False,
    B: int = DEFAULT_B,
    seed: int = 0,
    level: float = 0.95,
    dim_pairs=None,
    columns: bool = False,
    workers: int = 1,
    asymptotic_mode: str = "full",
) -> ResultBundle:
    """Fit rank-``rank`` PCA and build confidence ellipsoids by ``method``.

    Ellipsoids are produced in the full ``rank``-dimensional space and, for
    plotting, on each pair in ``dim_pairs`` (defaults to (1,2), (3,4), ...).
    """
    method = normalize_method(method)
    working, pre = preprocess(data, scale)
    ref = fit_pca(working, rank)
    noise = estimate_noise_variance(working, ref)
    try:
        k_int = curvature_index(ref)
    except ValueError:
        k_int = float("inf")

    # inference runs on the working matrix; its fit equals ref up to rounding
    pset = run_method(method, working, rank, B=B, seed=seed, workers=workers,
                      asymptotic_mode=asymptotic_mode)
    fit = pset.reference
    pairs = [tuple(p) for p in (dim_pairs if dim_pairs is not None else default_dim_pairs(rank))]
    full = tuple(range(1, rank + 1))

    records: list[EllipsoidRecord] = []
    sides = [("row", "rows", data.row_labels)]
    if columns:
        sides.append(("column", "columns", data.col_labels))
    for side, geo_side, labels in sides:
        coords = aligned_coordinates(pset, full, side=geo_side)
        for dims in dict.fromkeys([full] + pairs):
            idx = [d - 1 for d in dims]
            records += _records(coords[:, :, idx], labels, side, dims, level)

    warnings = list(dict.fromkeys(list(ref.warnings) + pset.warnings))
    return ResultBundle(
        method=method,
        rank=rank,
        scale=bool(scale),
        level=float(level),
        seed=int(seed),
        n_replicates=len(pset),
        row_labels=list(data.row_labels),
        col_labels=list(data.col_labels),
        eigenvalues=fit.eigenvalues.tolist(),
        explained=fit.explained_ratio().tolist(),
        total_inertia=fit.total_inertia,
        sigma2=noise.sigma2,
        df=noise.df,
        k_int=k_int,
        sigma_k_int=noise.sigma * k_int,
        scores=fit.scores.tolist(),
        loadings=fit.V.tolist(),
        col_means=pre.col_means.tolist(),
        col_scales=pre.col_scales.tolist(),
        warnings=warnings,
        ellipsoids=records,
    )
