"""PCA with missing cells by alternating imputation (EM-PCA)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PcaFit, RankError, fit_pca


@dataclass(frozen=True)
class MaskedMatrix:
    values: np.ndarray
    mask: np.ndarray  # True = observed

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 2:
            raise ValueError("values and mask must be matrices of the same shape")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def drop_cell(cls, x, i: int, j: int) -> "MaskedMatrix":
        mask = np.ones(np.shape(x), dtype=bool)
        mask[i, j] = False
        return cls(x, mask)

    def validate(self, rank: int) -> None:
        n, p = self.values.shape
        if np.any(self.mask.sum(axis=1) < 1):
            raise ValueError("every row needs at least one observed entry")
        if np.any(self.mask.sum(axis=0) < 2):
            raise ValueError("every column needs at least two observed entries")
        # free parameters: column means plus the rank-S manifold dimension
        if self.mask.sum() < p + rank * (n - 1) + p * rank - rank * rank:
            raise ValueError("too few observed cells for the requested rank")


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    init: str | np.ndarray = "mean"  # "mean", "zero" or a full n x p matrix

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class EmTrace:
    losses: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    completed: np.ndarray | None = None


def weighted_loss(masked: MaskedMatrix, fit: PcaFit) -> float:
    """Residual sum of squares over observed cells only."""
    r = np.where(masked.mask, masked.values - fit.fitted, 0.0)
    return float(np.sum(r * r))


def _initial_fill(masked: MaskedMatrix, init) -> np.ndarray:
    x = masked.values
    if isinstance(init, str):
        if init == "mean":
            obs = np.where(masked.mask, x, 0.0)
            fill = obs.sum(axis=0) / masked.mask.sum(axis=0)
            return np.where(masked.mask, x, fill)
        if init == "zero":
            return np.where(masked.mask, x, 0.0)
        raise ValueError(f"unknown EM initialisation {init!r}")
    start = np.asarray(init, dtype=float)
    if start.shape != x.shape:
        raise ValueError("initial matrix has the wrong shape")
    return np.where(masked.mask, x, start)


def _reconstruct(x: np.ndarray, rank: int) -> np.ndarray:
    means = x.mean(axis=0)
    u, s, vt = np.linalg.svd(x - means, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank] + means


def _observed_rss(masked: MaskedMatrix, recon: np.ndarray) -> float:
    r = np.where(masked.mask, masked.values - recon, 0.0)
    return float(np.sum(r * r))


def em_pca(masked: MaskedMatrix, rank: int, cfg: EmConfig = EmConfig(), *, return_trace: bool = False):
    """Rank-``rank`` PCA minimising the residual sum of squares over observed cells.

    Missing cells are filled, the completed matrix is re-centred and fitted,
    and the fill is replaced by the fitted values, until the relative
    Frobenius change of the completed matrix drops below ``cfg.tol``. A run
    that hits ``cfg.max_iter`` still returns its last fit, tagged with an
    ``"em_not_converged"`` warning.
    """
    n, p = masked.values.shape
    if not 1 <= rank <= min(n - 1, p):
        raise RankError(f"rank must lie in [1, {min(n - 1, p)}], got {rank}")
    masked.validate(rank)
    missing = ~masked.mask
    completed = _initial_fill(masked, cfg.init)
    trace = EmTrace()

    if not missing.any():
        fit = fit_pca(completed, rank)
        trace.losses.append(weighted_loss(masked, fit))
        trace.n_iter, trace.converged, trace.completed = 1, True, completed
        return (fit, trace) if return_trace else fit

    recon = _reconstruct(completed, rank)
    if return_trace:
        trace.losses.append(_observed_rss(masked, recon))
    for it in range(1, cfg.max_iter + 1):
        fill = recon[missing]
        delta = np.linalg.norm(fill - completed[missing])
        scale = np.linalg.norm(completed)
        completed[missing] = fill
        recon = _reconstruct(completed, rank)
        if return_trace:
            trace.losses.append(_observed_rss(masked, recon))
        trace.n_iter = it
        if delta <= cfg.tol * max(scale, np.finfo(float).tiny):
            trace.converged = True
            break

    fit = fit_pca(completed, rank)
    trace.completed = completed
    if not trace.converged:
        fit = PcaFit(**{**fit.__dict__, "warnings": fit.warnings + ("em_not_converged",)})
    return (fit, trace) if return_trace else fit
