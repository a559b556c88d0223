"""Pseudo-realizations of the rank-S PCA estimator.

Four generators are provided: Gaussian draws from the first-order asymptotic
distribution, a parametric (residual) bootstrap, a cell-wise jackknife built
on EM-PCA, and its leverage-based approximation. Each returns a
:class:`PseudoRealizationSet` of ``n x p`` matrices in the coordinates of the
analysed matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .core import (
    NoiseModel,
    PcaFit,
    apply_projection,
    estimate_noise_variance,
    fit_pca,
    projection_diagonal,
)
from .missing import EmConfig, MaskedMatrix, em_pca
from .parallel import parallel_map, substream

METHODS = ("asymptotic", "bootstrap", "jackknife", "approx_jackknife")
DEFAULT_B = 500


def normalize_method(name: str) -> str:
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    aliases = {"approx": "approx_jackknife", "approximate_jackknife": "approx_jackknife",
               "jack": "jackknife", "boot": "bootstrap", "asymp": "asymptotic"}
    key = aliases.get(key, key)
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return key


@dataclass
class PseudoRealizationSet:
    method: str
    replicates: np.ndarray  # (K, n, p)
    reference: PcaFit
    seed: int | None = None
    flags: list[tuple[str, ...]] = field(default_factory=list)
    cells: np.ndarray | None = None  # (K, 2) left-out cell per jackknife replicate
    imputed: np.ndarray | None = None  # n x p, leave-one-out predictions of each cell

    def __len__(self) -> int:
        return self.replicates.shape[0]

    @property
    def warnings(self) -> list[str]:
        out = sorted({w for f in self.flags for w in f})
        return list(self.reference.warnings) + [w for w in out if w not in self.reference.warnings]


def pseudo_value(reference: np.ndarray, loo: np.ndarray, n_cells: int) -> np.ndarray:
    """Jackknife pseudo-value ``Xhat + sqrt(np) (Xhat_(-ij) - Xhat)``."""
    return reference + np.sqrt(n_cells) * (loo - reference)


def asymptotic_draws(
    fit: PcaFit,
    noise: NoiseModel,
    K: int = DEFAULT_B,
    seed: int = 0,
    mode: str = "full",
) -> PseudoRealizationSet:
    """Gaussian draws centred on the fit with covariance ``sigma^2 P``.

    ``mode="full"`` draws ``vec(Xhat) + sigma P z`` (P is idempotent, so the
    covariance is exactly ``sigma^2 P``); ``mode="diagonal"`` draws each cell
    independently with variance ``sigma^2 P_ij,ij``.
    """
    if K < 2:
        raise ValueError("need at least two draws")
    if noise.df <= 0:
        raise ValueError("noise model has non-positive degrees of freedom")
    n, p = fit.shape
    z = np.stack([substream(seed, "asymptotic", k).standard_normal((p, n)).T for k in range(K)])
    if mode == "full":
        step = apply_projection(fit, z)
    elif mode == "diagonal":
        step = np.sqrt(projection_diagonal(fit)) * z
    else:
        raise ValueError("mode must be 'full' or 'diagonal'")
    reps = fit.fitted + noise.sigma * step
    return PseudoRealizationSet("asymptotic", reps, fit, seed, [() for _ in range(K)])


def _bootstrap_one(b: int, *, fitted: np.ndarray, rank: int, sigma: float, seed: int):
    n, p = fitted.shape
    eps = substream(seed, "bootstrap", b).standard_normal((p, n)).T * sigma
    f = fit_pca(fitted + eps, rank)
    return f.fitted, f.warnings


def parametric_bootstrap(x, rank: int, B: int = DEFAULT_B, seed: int = 0,
                         workers: int = 1, reference: PcaFit | None = None) -> PseudoRealizationSet:
    """Residual bootstrap: refit PCA on ``Xhat + eps_b``, ``eps_b ~ N(0, sigma_hat^2)``."""
    if B < 2:
        raise ValueError("need at least two bootstrap replicates")
    x = np.asarray(x, dtype=float)
    ref = reference if reference is not None else fit_pca(x, rank)
    noise = estimate_noise_variance(x, ref)
    if noise.sigma2 == 0.0:
        reps = np.repeat(ref.fitted[None], B, axis=0)
        return PseudoRealizationSet("bootstrap", reps, ref, seed, [() for _ in range(B)])
    task = partial(_bootstrap_one, fitted=ref.fitted, rank=rank, sigma=noise.sigma, seed=seed)
    out = parallel_map(task, range(B), workers)
    reps = np.stack([o[0] for o in out])
    return PseudoRealizationSet("bootstrap", reps, ref, seed, [o[1] for o in out])


def _jackknife_block(cells, *, x: np.ndarray, rank: int, cfg: EmConfig):
    out = []
    for i, j in cells:
        fit = em_pca(MaskedMatrix.drop_cell(x, i, j), rank, cfg)
        out.append((fit.fitted, fit.warnings))
    return out


def _cell_order(n: int, p: int) -> np.ndarray:
    # column-stacked (vec) order
    jj, ii = np.meshgrid(np.arange(p), np.arange(n), indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()])


def _blocks(cells: np.ndarray, size: int) -> list[np.ndarray]:
    return [cells[k:k + size] for k in range(0, len(cells), size)]


def cellwise_jackknife(x, rank: int, em_cfg: EmConfig | None = None, workers: int = 1,
                       reference: PcaFit | None = None) -> PseudoRealizationSet:
    """Leave-one-cell-out jackknife; each deletion is refitted by EM-PCA.

    Unless ``em_cfg`` provides its own initialisation, EM starts from the
    reference fit. Runs that do not converge are kept and flagged.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    ref = reference if reference is not None else fit_pca(x, rank)
    cfg = em_cfg if em_cfg is not None else EmConfig(init=ref.fitted)
    cells = _cell_order(n, p)
    task = partial(_jackknife_block, x=x, rank=rank, cfg=cfg)
    blocks = parallel_map(task, _blocks(cells, n), workers)
    results = [r for blk in blocks for r in blk]
    loo = np.stack([r[0] for r in results])
    imputed = np.empty((n, p))
    imputed[cells[:, 0], cells[:, 1]] = loo[np.arange(len(cells)), cells[:, 0], cells[:, 1]]
    reps = pseudo_value(ref.fitted, loo, n * p)
    return PseudoRealizationSet("jackknife", reps, ref, None, [r[1] for r in results],
                                cells=cells, imputed=imputed)


def approx_loo_values(x, ref: PcaFit, diag: np.ndarray | None = None) -> np.ndarray:
    """``x_ij - (x_ij - xhat_ij) / (1 - P_ij,ij)``; NaN where the leverage is ~1."""
    x = np.asarray(x, dtype=float)
    if diag is None:
        diag = projection_diagonal(ref)
    out = np.full(x.shape, np.nan)
    ok = diag < 1.0 - 1e-10
    out[ok] = x[ok] - (x - ref.fitted)[ok] / (1.0 - diag[ok])
    return out


def _approx_block(cells, *, x: np.ndarray, rank: int, values: np.ndarray):
    out = []
    for i, j in cells:
        xs = x.copy()
        xs[i, j] = values[i, j]
        f = fit_pca(xs, rank)
        out.append((f.fitted, f.warnings))
    return out


def approximate_jackknife(x, rank: int, workers: int = 1,
                          reference: PcaFit | None = None) -> PseudoRealizationSet:
    """Jackknife where each deleted cell is replaced by its leverage-corrected
    prediction and the altered matrix is refitted directly (no EM).
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    ref = reference if reference is not None else fit_pca(x, rank)
    values = approx_loo_values(x, ref)
    cells = _cell_order(n, p)
    keep = ~np.isnan(values[cells[:, 0], cells[:, 1]])
    if not keep.any():
        raise ValueError("every cell has leverage 1; approximate jackknife undefined")
    cells = cells[keep]
    task = partial(_approx_block, x=x, rank=rank, values=values)
    blocks = parallel_map(task, _blocks(cells, n), workers)
    results = [r for blk in blocks for r in blk]
    reps = pseudo_value(ref.fitted, np.stack([r[0] for r in results]), n * p)
    flags = [r[1] for r in results]
    if not keep.all():
        ref = replace(ref, warnings=ref.warnings + (f"approx_jackknife_skipped_{int((~keep).sum())}_cells",))
    return PseudoRealizationSet("approx_jackknife", reps, ref, None, flags,
                                cells=cells, imputed=values)


def run_method(method: str, x, rank: int, *, B: int = DEFAULT_B, seed: int = 0,
               workers: int = 1, em_cfg: EmConfig | None = None,
               asymptotic_mode: str = "full") -> PseudoRealizationSet:
    """Dispatch to one of the four generators by name."""
    method = normalize_method(method)
    x = np.asarray(x, dtype=float)
    ref = fit_pca(x, rank)
    if method == "asymptotic":
        return asymptotic_draws(ref, estimate_noise_variance(x, ref), B, seed, asymptotic_mode)
    if method == "bootstrap":
        return parametric_bootstrap(x, rank, B, seed, workers, reference=ref)
    if method == "jackknife":
        return cellwise_jackknife(x, rank, em_cfg, workers, reference=ref)
    return approximate_jackknife(x, rank, workers, reference=ref)
