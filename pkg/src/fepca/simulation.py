"""Monte-Carlo coverage studies for the confidence ellipsoids."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy import stats

from .core import Dataset, fit_pca, preprocess
from .geometry import aligned_coordinates, true_coordinates
from .inference import DEFAULT_B, METHODS, normalize_method, run_method
from .missing import EmConfig
from .parallel import derive_seed, parallel_map, substream


@dataclass
class SimulationConfig:
    """One experimental condition.

    Either ``signal`` is given (a fixed true matrix, reused by every
    replicate) or a rank-two structure is generated afresh per replicate from
    ``n``, ``p`` and ``ratio``. Exactly one of ``sigma`` and ``snr`` sets the
    noise; SNR is the signal root-mean-square over the noise sd.
    """

    n: int = 20
    p: int = 10
    rank: int = 2
    ratio: float = 1.0
    sigma: float | None = None
    snr: float | None = None
    replicates: int = 50
    methods: tuple[str, ...] = METHODS
    level: float = 0.95
    seed: int = 0
    B: int = DEFAULT_B
    signal: np.ndarray | None = None
    label: str | None = None
    em_tol: float = 1e-8
    em_max_iter: int = 1000

    def __post_init__(self):
        self.methods = tuple(normalize_method(m) for m in self.methods)
        if self.signal is not None:
            self.signal = np.asarray(self.signal, dtype=float)
            self.n, self.p = self.signal.shape
        elif self.rank != 2:
            raise ValueError("the structure generator supports rank 2 only; pass a signal matrix")
        if self.n < 3 or self.p < 2:
            raise ValueError("need n >= 3 and p >= 2")
        if self.ratio < 1:
            raise ValueError("eigenvalue ratio must be >= 1")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if (self.sigma is None) == (self.snr is None):
            raise ValueError("give exactly one of sigma and snr")

    @property
    def condition(self) -> str:
        if self.label:
            return self.label
        if self.sigma is not None:
            return f"sigma={self.sigma:g}"
        return f"n={self.n},p={self.p},snr={self.snr:g},ratio={self.ratio:g}"


@dataclass
class CoverageEntry:
    method: str
    condition: str
    inside: int
    total: int
    per_replicate: list[int] = field(default_factory=list)
    failures: int = 0

    @property
    def coverage(self) -> float:
        return self.inside / self.total if self.total else float("nan")

    @property
    def stderr(self) -> float:
        c = self.coverage
        return math.sqrt(c * (1 - c) / self.total) if self.total else float("nan")


@dataclass
class CoverageTable:
    entries: list[CoverageEntry] = field(default_factory=list)
    level: float = 0.95

    def get(self, method: str, condition: str | None = None) -> CoverageEntry:
        method = normalize_method(method)
        for e in self.entries:
            if e.method == method and (condition is None or e.condition == condition):
                return e
        raise KeyError((method, condition))

    def coverage(self, method: str, condition: str | None = None) -> float:
        return self.get(method, condition).coverage

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(e.method for e in self.entries))

    @property
    def conditions(self) -> list[str]:
        return list(dict.fromkeys(e.condition for e in self.entries))

    def extend(self, other: "CoverageTable") -> None:
        self.entries.extend(other.entries)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "entries": [
                {
                    "method": e.method,
                    "condition": e.condition,
                    "inside": e.inside,
                    "total": e.total,
                    "coverage": e.coverage,
                    "stderr": e.stderr,
                    "failures": e.failures,
                    "per_replicate": list(e.per_replicate),
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageTable":
        entries = [
            CoverageEntry(e["method"], e["condition"], int(e["inside"]), int(e["total"]),
                          [int(v) for v in e.get("per_replicate", [])], int(e.get("failures", 0)))
            for e in d["entries"]
        ]
        return cls(entries, float(d.get("level", 0.95)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """Wide layout: one row per condition, one coverage column per method."""
        methods = self.methods
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition"] + methods)
        for cond in self.conditions:
            row = [cond]
            for m in methods:
                try:
                    row.append(f"{self.get(m, cond).coverage:.4f}")
                except KeyError:
                    row.append("")
            w.writerow(row)
        return buf.getvalue()

    def format(self) -> str:
        methods = self.methods
        head = f"{'condition':<28}" + "".join(f"{m:>18}" for m in methods)
        lines = [head]
        for cond in self.conditions:
            cells = []
            for m in methods:
                try:
                    e = self.get(m, cond)
                    cells.append(f"{e.coverage:>10.3f} ({e.stderr:.3f})")
                except KeyError:
                    cells.append(" " * 18)
            lines.append(f"{cond:<28}" + "".join(f"{c:>18}" for c in cells))
        return "\n".join(lines)


def replication_counts(p: int, ratio: float) -> tuple[int, int]:
    p1 = math.floor(p * ratio / (ratio + 1) + 0.5)  # half up: the first axis dominates
    p2 = p - p1
    if p1 < 1 or p2 < 1:
        raise ValueError(f"cannot split {p} columns at eigenvalue ratio {ratio}")
    return p1, p2


def generate_structure(n: int, p: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Rank-two structure: the two left singular vectors of an ``n x 2``
    Gaussian matrix, copied ``p1`` and ``p2`` times with ``p1/p2 ~ ratio``.
    """
    p1, p2 = replication_counts(p, ratio)
    u, _, _ = np.linalg.svd(rng.standard_normal((n, 2)), full_matrices=False)
    return np.hstack([np.repeat(u[:, :1], p1, axis=1), np.repeat(u[:, 1:2], p2, axis=1)])


def noise_sd(signal: np.ndarray, sigma: float | None = None, snr: float | None = None) -> float:
    if sigma is not None:
        return float(sigma)
    if snr is None or snr <= 0:
        raise ValueError("need sigma or a positive snr")
    rms = np.linalg.norm(signal) / math.sqrt(signal.size)
    return float(rms / snr)


def add_noise(signal, rng: np.random.Generator, sigma: float | None = None,
              snr: float | None = None) -> np.ndarray:
    signal = np.asarray(signal, dtype=float)
    sd = noise_sd(signal, sigma, snr)
    return signal + sd * rng.standard_normal(signal.shape)


def signal_from_dataset(data, rank: int, scale: bool = False) -> np.ndarray:
    """Rank-``rank`` reconstruction of ``data``.

    With ``scale=True`` the result is in unit-variance column units; the
    column means (in those units) are kept so an exact low-rank input is
    returned unchanged.
    """
    working, pre = preprocess(data, scale)
    fit = fit_pca(working, rank, preprocess=pre)
    return fit.centered_fit + pre.col_means / pre.col_scales


def _replicate(r: int, *, cfg: SimulationConfig) -> dict:
    rng = substream(cfg.seed, "data", r)
    truth = cfg.signal if cfg.signal is not None else generate_structure(cfg.n, cfg.p, cfg.ratio, rng)
    x = add_noise(truth, rng, cfg.sigma, cfg.snr)
    ref = fit_pca(x, cfg.rank)
    target = true_coordinates(truth, ref)
    radius2 = stats.chi2.ppf(cfg.level, cfg.rank)
    em_cfg = EmConfig(tol=cfg.em_tol, max_iter=cfg.em_max_iter, init=ref.fitted)
    out = {}
    for method in cfg.methods:
        try:
            pset = run_method(method, x, cfg.rank, B=cfg.B, seed=derive_seed(cfg.seed, method, r),
                              workers=1, em_cfg=em_cfg)
            coords = aligned_coordinates(pset)
            out[method] = int(np.sum(_inside(coords, target, radius2)))
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            out[method] = None
    return out


def _inside(coords: np.ndarray, target: np.ndarray, radius2: float) -> np.ndarray:
    """Containment of each target point in its Gaussian ellipsoid, vectorised
    over points; same rule as :func:`fepca.geometry.contains`.
    """
    K = coords.shape[0]
    center = coords.mean(axis=0)
    dev = coords - center
    cov = np.einsum("kia,kib->iab", dev, dev) / (K - 1)
    d = cov.shape[-1]
    tr = np.trace(cov, axis1=1, axis2=2)
    ranks = np.linalg.matrix_rank(cov)
    cov = cov + ((ranks < d) & (tr > 0))[:, None, None] * (1e-12 * tr / d)[:, None, None] * np.eye(d)
    diff = target - center
    collapsed = tr == 0
    # collapsed ellipsoids contain only their centre
    cov[collapsed] = np.eye(d)
    m2 = np.einsum("ia,ia->i", diff, np.linalg.solve(cov, diff[..., None])[..., 0])
    m2 = np.where(collapsed, np.where(np.any(diff != 0, axis=1), np.inf, 0.0), m2)
    return m2 <= radius2


def run_coverage_experiment(cfg: SimulationConfig, workers: int = 1) -> CoverageTable:
    """Coverage of the true row points by the ellipsoids of every method.

    Coverage is ``inside / (n * replicates)``; a replicate on which a method
    fails is dropped from that method's denominator only.
    """
    task = partial(_replicate, cfg=cfg)
    results = parallel_map(task, range(cfg.replicates), workers)
    table = CoverageTable(level=cfg.level)
    for method in cfg.methods:
        counts = [r[method] for r in results]
        ok = [c for c in counts if c is not None]
        table.entries.append(CoverageEntry(
            method=method,
            condition=cfg.condition,
            inside=int(sum(ok)),
            total=cfg.n * len(ok),
            per_replicate=ok,
            failures=len(counts) - len(ok),
        ))
    return table


def run_coverage_grid(cfgs: Sequence[SimulationConfig], workers: int = 1) -> CoverageTable:
    table = CoverageTable(level=cfgs[0].level if cfgs else 0.95)
    for cfg in cfgs:
        table.extend(run_coverage_experiment(cfg, workers))
    return table


def dataset_signal(path_or_data, rank: int, scale: bool) -> np.ndarray:
    from .dataio import read_csv

    data = path_or_data if isinstance(path_or_data, Dataset) else read_csv(path_or_data)
    return signal_from_dataset(data, rank, scale)
