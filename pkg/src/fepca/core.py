"""Fixed-effects PCA: preprocessing, truncated SVD fit, noise variance and
the tangent-space projector.

Matrices are ``n x p`` with rows as observations. Whenever a matrix is
vectorised the columns are stacked (Fortran order), so cell ``(i, j)`` sits
at index ``j * n + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_PROJECTOR_SIZE = 4000


class RankError(ValueError):
    """Requested rank is incompatible with the data."""


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("dataset values must be a 2-d matrix")
        n, p = values.shape
        if n < 3 or p < 2:
            raise ValueError(f"dataset must have n >= 3 and p >= 2, got {n}x{p}")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset contains non-finite entries")
        if len(self.row_labels) != n or len(self.col_labels) != p:
            raise ValueError("label arrays do not match matrix dimensions")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_labels", tuple(str(r) for r in self.row_labels))
        object.__setattr__(self, "col_labels", tuple(str(c) for c in self.col_labels))

    @classmethod
    def from_array(cls, values) -> "Dataset":
        values = np.asarray(values, dtype=float)
        n, p = values.shape
        return cls(values, tuple(f"R{i + 1}" for i in range(n)),
                   tuple(f"C{j + 1}" for j in range(p)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Preprocess:
    col_means: np.ndarray
    col_scales: np.ndarray
    scaled: bool = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.col_means) / self.col_scales

    def invert(self, working: np.ndarray) -> np.ndarray:
        return working * self.col_scales + self.col_means


@dataclass(frozen=True)
class PcaFit:
    """Rank-``S`` PCA of a column-centred matrix.

    ``fitted`` is expressed in the coordinates of the matrix handed to
    :func:`fit_pca` (column means and scales restored); ``U``, ``sqrt_lambda``
    and ``V`` describe its centred part.
    """

    U: np.ndarray
    sqrt_lambda: np.ndarray
    V: np.ndarray
    rank: int
    preprocess: Preprocess
    fitted: np.ndarray
    total_inertia: float
    degenerate: bool = False
    warnings: tuple[str, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return self.fitted.shape

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.sqrt_lambda**2

    @property
    def scores(self) -> np.ndarray:
        """Row coordinates ``F = U diag(sqrt_lambda)``."""
        return self.U * self.sqrt_lambda

    @property
    def centered_fit(self) -> np.ndarray:
        return (self.U * self.sqrt_lambda) @ self.V.T

    def explained_ratio(self) -> np.ndarray:
        if self.total_inertia <= 0:
            return np.zeros(self.rank)
        return self.eigenvalues / self.total_inertia


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float
    df: int

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


@dataclass(frozen=True)
class ProjectionOperator:
    P: np.ndarray
    diag: np.ndarray


def preprocess(data, scale: bool = False) -> tuple[np.ndarray, Preprocess]:
    """Centre (and optionally standardise) the columns of ``data``.

    ``data`` may be a :class:`Dataset` or a plain matrix. Scaling uses the
    sample standard deviation (divisor ``n - 1``).
    """
    if isinstance(data, Dataset):
        x, labels = data.values, data.col_labels
    else:
        x = np.asarray(data, dtype=float)
        labels = tuple(f"C{j + 1}" for j in range(x.shape[1]))
    means = x.mean(axis=0)
    if scale:
        scales = x.std(axis=0, ddof=1)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
        zero = np.flatnonzero(scales <= tol)
        if zero.size:
            names = ", ".join(labels[j] for j in zero)
            raise ValueError(f"cannot scale zero-variance column(s): {names}")
    else:
        scales = np.ones(x.shape[1])
    pre = Preprocess(means, scales, bool(scale))
    return pre.apply(x), pre


def _sign_fix(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-|entry| of each loadings column is made positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def fit_pca(x, rank: int, preprocess: Preprocess | None = None) -> PcaFit:
    """Truncated SVD of the centred matrix.

    Parameters
    ----------
    x : array_like, shape (n, p)
        Data. When ``preprocess`` is None the columns are centred here and the
        means are recorded; otherwise ``x`` is taken to be the working matrix
        produced by ``preprocess``.
    rank : int
        Number of components, ``1 <= rank <= min(n - 1, p)``.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if not 1 <= rank <= min(n - 1, p):
        raise RankError(f"rank must lie in [1, {min(n - 1, p)}], got {rank}")
    if preprocess is None:
        means = x.mean(axis=0)
        xc = x - means
        preprocess = Preprocess(means, np.ones(p), False)
    else:
        xc = x
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    U, V = _sign_fix(u[:, :rank], vt[:rank].T)
    sl = s[:rank].copy()
    degenerate = False
    if rank < s.size:
        gap = s[rank - 1] ** 2 - s[rank] ** 2
        degenerate = bool(gap <= 1e-10 * max(s[0] ** 2, 1.0))
    centered = (U * sl) @ V.T
    return PcaFit(
        U=U,
        sqrt_lambda=sl,
        V=V,
        rank=rank,
        preprocess=preprocess,
        fitted=preprocess.invert(centered),
        total_inertia=float(np.sum(s**2)),
        degenerate=degenerate,
        warnings=("degenerate_subspace",) if degenerate else (),
    )


def noise_df(n: int, p: int, rank: int) -> int:
    return n * p - n * rank - p * rank + rank + rank * rank


def estimate_noise_variance(x, fit: PcaFit) -> NoiseModel:
    """Residual sum of squares over ``np - nS - pS + S + S^2``.

    ``x`` must be in the units of ``fit.fitted``: the raw data for a fit that
    centred itself, or the original values for a fit given a ``preprocess``.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    df = noise_df(n, p, fit.rank)
    if df <= 0:
        raise RankError("rank too large for unbiased variance estimate")
    resid = x - fit.fitted
    return NoiseModel(float(np.sum(resid**2)) / df, df)


def _projectors(fit: PcaFit) -> tuple[np.ndarray, np.ndarray]:
    # U and V are orthonormal, so (U'U)^-1 = I
    return fit.U @ fit.U.T, fit.V @ fit.V.T


def projection_operator(fit: PcaFit, max_size: int = DEFAULT_MAX_PROJECTOR_SIZE) -> ProjectionOperator:
    """Materialise the ``np x np`` tangent-space projector."""
    n, p = fit.shape
    if n * p > max_size:
        raise MemoryError(
            f"projector would be {n * p}x{n * p} (limit {max_size}); "
            "use projection_diagonal or apply_projection instead"
        )
    PU, PV = _projectors(fit)
    Ip = np.eye(p)
    J = np.full((n, n), 1.0 / n)
    C = np.eye(n) - J
    P = np.kron(Ip, J) + np.kron(PV.T, C) + np.kron(Ip, PU) - np.kron(PV.T, PU)
    return ProjectionOperator(P, np.diag(P).copy())


def apply_projection(fit: PcaFit, z: np.ndarray) -> np.ndarray:
    """``P vec(Z)`` reshaped back to ``n x p``, without forming ``P``.

    Uses ``(A kron B) vec(Z) = vec(B Z A')``. ``z`` may carry a leading batch
    axis.
    """
    PU, PV = _projectors(fit)
    z = np.asarray(z, dtype=float)
    col_mean = z.mean(axis=-2, keepdims=True)
    zc = z - col_mean
    return col_mean + zc @ PV + PU @ z - PU @ z @ PV


def projection_diagonal(fit: PcaFit) -> np.ndarray:
    """Diagonal of the projector as an ``n x p`` matrix of cell leverages."""
    n, _ = fit.shape
    hu = np.sum(fit.U**2, axis=1)
    hv = np.sum(fit.V**2, axis=1)
    return 1.0 / n + np.outer(1.0 - 1.0 / n - hu, hv) + hu[:, None]


def curvature_index(fit: PcaFit) -> float:
    last = float(fit.sqrt_lambda[-1])
    if last <= 0:
        raise RankError("signal rank deficient")
    return 1.0 / last


def nonlinearity(fit: PcaFit, noise: NoiseModel) -> float:
    """``sigma_hat * K_int``; small values favour the asymptotic regions."""
    return noise.sigma * curvature_index(fit)


def corrected_residuals(x, fit: PcaFit, diag: np.ndarray | None = None) -> np.ndarray:
    """Leverage-corrected residuals ``(xhat - x) / sqrt(1 - P_ij,ij)``.

    Cells whose leverage is within 1e-10 of one are returned as NaN.
    """
    x = np.asarray(x, dtype=float)
    if diag is None:
        diag = projection_diagonal(fit)
    diag = np.asarray(diag, dtype=float).reshape(x.shape, order="F") if np.ndim(diag) == 1 else diag
    out = np.full(x.shape, np.nan)
    ok = diag < 1.0 - 1e-10
    out[ok] = (fit.fitted - x)[ok] / np.sqrt(1.0 - diag[ok])
    return out
