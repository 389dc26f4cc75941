"""Visual-gap difficulty scores from kernel geometry.

Treats each domain of an embedding set as a point cloud, forms the two
kernel mean embeddings, and measures how far each infrared sample sits
along the infrared-to-visible axis in the induced feature space. The
feature map is never materialized; every quantity reduces to averages of
kernel evaluations.

The squared gap between the two mean embeddings equals the biased MMD
V-statistic, so the per-sample projection denominator is exact.

Scores file: one header line {"mmd", "bandwidth", "n_ir", "n_vis"}
followed by {"id", "projection", "d"} rows in input order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSetError,
    DimensionMismatchError,
    EmptyDomainError,
    IndistinguishableDomainsError,
    MalformedLineError,
)
from .ingest import INFRARED, VISIBLE, EmbeddingSet

KERNEL_KINDS = ("gaussian", "linear")
BANDWIDTH_MODES = ("fixed", "median")

# Gram blocks are accumulated in fixed index order so results do not
# depend on how work is scheduled.
_BLOCK = 256


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float | None = None
    bandwidth_mode: str = "fixed"
    kind: str = "gaussian"
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.bandwidth_mode not in BANDWIDTH_MODES:
            raise ValueError(
                f"bandwidth_mode must be one of {BANDWIDTH_MODES}, got {self.bandwidth_mode!r}"
            )
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.kind == "gaussian" and self.bandwidth_mode == "fixed":
            if self.bandwidth is None or not math.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ValueError("fixed-mode Gaussian kernel needs a positive bandwidth")


@dataclass(frozen=True)
class DomainGeometry:
    gram_ir_ir_mean: float
    gram_vis_vis_mean: float
    gram_cross_mean: float
    mmd: float


@dataclass(frozen=True)
class VisualScore:
    id: str
    projection: float
    d: float


def _resolve_bandwidth(embedding_set: EmbeddingSet, cfg: KernelConfig) -> float | None:
    if cfg.kind == "linear":
        return None
    if cfg.bandwidth_mode == "median":
        return median_bandwidth(embedding_set)
    return float(cfg.bandwidth)


def _kernel_block(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, bandwidth: float | None):
    if cfg.kind == "linear":
        return a @ b.T
    # direct differences keep k(x, x) exactly 1
    sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    return np.exp(-sq / (2.0 * bandwidth * bandwidth))


def gaussian_kernel(x, y, cfg: KernelConfig) -> float:
    """Evaluate exp(-||x - y||^2 / (2 bandwidth^2)) for a single pair."""
    if len(x) != len(y):
        raise DimensionMismatchError(f"vectors have dimensions {len(x)} and {len(y)}")
    if cfg.bandwidth is None:
        raise ValueError("gaussian_kernel needs a resolved bandwidth")
    sq = float(np.sum((np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)) ** 2))
    return float(np.exp(-sq / (2.0 * cfg.bandwidth * cfg.bandwidth)))


def median_bandwidth(embedding_set: EmbeddingSet) -> float:
    """Median pairwise Euclidean distance over the whole set, zeros excluded."""
    vectors = np.asarray(embedding_set.vectors(), dtype=np.float64)
    if len(vectors) < 2:
        raise DegenerateSetError("median bandwidth needs at least two samples")
    distances = []
    for i in range(0, len(vectors), _BLOCK):
        block = vectors[i : i + _BLOCK]
        for j in range(i, len(vectors), _BLOCK):
            other = vectors[j : j + _BLOCK]
            sq = np.sum((block[:, None, :] - other[None, :, :]) ** 2, axis=2)
            if i == j:
                sq = sq[np.triu_indices_from(sq, k=1)]
            else:
                sq = sq.ravel()
            distances.append(sq[sq > 0.0])
    nonzero = np.concatenate(distances)
    if nonzero.size == 0:
        raise DegenerateSetError("all samples identical; pairwise distances are zero")
    return float(np.median(np.sqrt(nonzero)))


def _gram_mean(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, bandwidth: float | None) -> float:
    total = 0.0
    for i in range(0, len(a), _BLOCK):
        for j in range(0, len(b), _BLOCK):
            total += float(np.sum(_kernel_block(a[i : i + _BLOCK], b[j : j + _BLOCK], cfg, bandwidth)))
    return total / (len(a) * len(b))


def _domain_matrices(embedding_set: EmbeddingSet):
    ir = np.asarray(embedding_set.vectors(INFRARED), dtype=np.float64)
    vis = np.asarray(embedding_set.vectors(VISIBLE), dtype=np.float64)
    if len(ir) == 0 or len(vis) == 0:
        raise EmptyDomainError("both domains must be non-empty")
    return ir, vis


def domain_geometry(embedding_set: EmbeddingSet, cfg: KernelConfig) -> DomainGeometry:
    """Mean-embedding geometry of the two domains: three Gram means and the MMD."""
    ir, vis = _domain_matrices(embedding_set)
    bandwidth = _resolve_bandwidth(embedding_set, cfg)
    kii = _gram_mean(ir, ir, cfg, bandwidth)
    kvv = _gram_mean(vis, vis, cfg, bandwidth)
    kiv = _gram_mean(ir, vis, cfg, bandwidth)
    mmd = math.sqrt(max(0.0, kii + kvv - 2.0 * kiv))
    return DomainGeometry(kii, kvv, kiv, mmd)


def projection_scores(embedding_set: EmbeddingSet, cfg: KernelConfig) -> list[VisualScore]:
    """Score each infrared sample by its signed offset along the domain axis.

    For infrared sample x the offset of phi(x) - c_ir along the unit vector
    from c_ir to c_vis is

        projection = (<phi(x), c_vis> - <phi(x), c_ir>
                      - <c_ir, c_vis> + ||c_ir||^2) / mmd

    and the reported distance is d = projection + mmd. Visible samples are
    not scored.
    """
    ir, vis = _domain_matrices(embedding_set)
    bandwidth = _resolve_bandwidth(embedding_set, cfg)
    geo = domain_geometry(embedding_set, cfg)
    if geo.mmd <= cfg.epsilon:
        raise IndistinguishableDomainsError(
            f"mmd {geo.mmd:.3e} is below epsilon {cfg.epsilon:.3e}; ranking is undefined"
        )
    row_vis = np.zeros(len(ir))
    row_ir = np.zeros(len(ir))
    for j in range(0, len(vis), _BLOCK):
        row_vis += np.sum(_kernel_block(ir, vis[j : j + _BLOCK], cfg, bandwidth), axis=1)
    for j in range(0, len(ir), _BLOCK):
        row_ir += np.sum(_kernel_block(ir, ir[j : j + _BLOCK], cfg, bandwidth), axis=1)
    row_vis /= len(vis)
    row_ir /= len(ir)
    numerator = row_vis - row_ir - geo.gram_cross_mean + geo.gram_ir_ir_mean
    ids = embedding_set.ids(INFRARED)
    scores = []
    for sample_id, value in zip(ids, numerator):
        projection = float(value) / geo.mmd
        scores.append(VisualScore(sample_id, projection, projection + geo.mmd))
    return scores


def rank_by_visual_difficulty(scores) -> list[str]:
    """Easy-to-hard order: descending d, ties by ascending id."""
    if not scores:
        raise ValueError("cannot rank an empty score list")
    return [s.id for s in sorted(scores, key=lambda s: (-s.d, s.id))]


def write_visual_scores(path, geo: DomainGeometry, cfg: KernelConfig,
                        embedding_set: EmbeddingSet, scores) -> None:
    bandwidth = _resolve_bandwidth(embedding_set, cfg)
    header = {
        "mmd": geo.mmd,
        "bandwidth": bandwidth,
        "n_ir": embedding_set.count(INFRARED),
        "n_vis": embedding_set.count(VISIBLE),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in scores:
            fh.write(json.dumps({"id": s.id, "projection": s.projection, "d": s.d}) + "\n")


def load_visual_scores(path):
    header = None
    scores: list[VisualScore] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if header is None:
                if "mmd" not in obj:
                    raise MalformedLineError(path, line_no, "first line must be the header")
                header = obj
                continue
            for key in ("id", "projection", "d"):
                if key not in obj:
                    raise MalformedLineError(path, line_no, f"missing field {key!r}")
            scores.append(VisualScore(obj["id"], float(obj["projection"]), float(obj["d"])))
    if header is None:
        raise MalformedLineError(path, 1, "empty scores file")
    return header, scores
