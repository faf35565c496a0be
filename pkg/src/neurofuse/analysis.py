"""Post-hoc connectivity analysis over generated multimodal matrices.

All functions here are pure: group averaging, signed difference matrices,
dead-band plus per-sign quantile thresholding, top-k altered connections,
and occlusion-based ROI importance.  Edges are reported on the upper
triangle only since the fused matrices are symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConnectivityMatrix, RoiAtlas, SubjectSample
from .errors import ConfigError, ShapeError
from .model import CtganModel, compute_mc, forward_subject


@dataclass(frozen=True)
class Edge:
    roi_a: int
    roi_b: int
    strength: float


def group_average_mc(
    model: CtganModel, atlas: RoiAtlas, samples: list[SubjectSample]
) -> ConnectivityMatrix:
    """Entrywise mean of the per-subject generated matrices."""
    if not samples:
        raise ConfigError("cannot average an empty group")
    total = np.zeros((atlas.n_rois, atlas.n_rois))
    for s in samples:
        total += compute_mc(model, atlas, s).data
    return ConnectivityMatrix(Tensor(total / len(samples)), "MC")


def difference_matrix(mc_late: ConnectivityMatrix, mc_early: ConnectivityMatrix) -> ConnectivityMatrix:
    """Late minus early; positive entries are increased connections."""
    if mc_late.data.shape != mc_early.data.shape:
        raise ShapeError(
            f"difference of mismatched shapes: {mc_late.data.shape} vs {mc_early.data.shape}"
        )
    return ConnectivityMatrix(Tensor(mc_late.data - mc_early.data), "DIFF")


def _upper_edges(diff: np.ndarray) -> list[Edge]:
    n = diff.shape[0]
    idx = np.triu_indices(n, k=1)
    return [Edge(int(i), int(j), float(diff[i, j])) for i, j in zip(*idx)]


def _sort_edges(edges: list[Edge]) -> list[Edge]:
    # |strength| descending, ties by (row, col)
    return sorted(edges, key=lambda e: (-abs(e.strength), e.roi_a, e.roi_b))


def threshold_connections(
    diff: ConnectivityMatrix, dead_band: float = 0.1, quantile: float = 0.5
) -> tuple[list[Edge], list[Edge]]:
    """Dead-band then per-sign quantile filtering of a difference matrix.

    Entries with |value| <= dead_band are ignored.  Surviving positives are
    kept when at or above the linear-interpolation quantile of the surviving
    positive values; negatives symmetrically by magnitude.
    """
    if not 0.0 < quantile < 1.0:
        raise ConfigError(f"quantile must lie in (0, 1), got {quantile}")
    edges = [e for e in _upper_edges(diff.data) if abs(e.strength) > dead_band]
    pos = [e for e in edges if e.strength > 0]
    neg = [e for e in edges if e.strength < 0]
    if pos:
        cut = np.quantile([e.strength for e in pos], quantile)
        pos = [e for e in pos if e.strength >= cut]
    if neg:
        cut = np.quantile([-e.strength for e in neg], quantile)
        neg = [e for e in neg if -e.strength >= cut]
    return _sort_edges(pos), _sort_edges(neg)


def top_k_connections(
    diff: ConnectivityMatrix, k: int = 10, dead_band: float = 0.1
) -> tuple[list[Edge], list[Edge]]:
    """The k strongest increased and decreased connections beyond the dead band."""
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    edges = [e for e in _upper_edges(diff.data) if abs(e.strength) > dead_band]
    pos = _sort_edges([e for e in edges if e.strength > 0])
    neg = _sort_edges([e for e in edges if e.strength < 0])
    return pos[:k], neg[:k]


def _accuracy(
    model: CtganModel,
    atlas: RoiAtlas,
    samples: list[SubjectSample],
    occlude_roi: int | None = None,
) -> float:
    correct = 0
    with ad.no_grad():
        for s in samples:
            probs = forward_subject(model, atlas, s, occlude_roi=occlude_roi).probs.data
            correct += int(np.argmax(probs)) == s.label
    return correct / len(samples)


def roi_importance(
    model: CtganModel, atlas: RoiAtlas, samples: list[SubjectSample], top: int = 10
) -> tuple[np.ndarray, list[int]]:
    """Accuracy drop when one ROI is occluded end to end.

    Occlusion zeroes the ROI's embedding rows and its row and column of the
    generated matrix before classification.  Returns the per-ROI scores and
    the indices of the ``top`` highest, ties broken by ROI index.
    """
    if not samples:
        raise ConfigError("ROI importance needs a non-empty evaluation set")
    baseline = _accuracy(model, atlas, samples)
    scores = np.zeros(atlas.n_rois)
    for roi in range(atlas.n_rois):
        scores[roi] = baseline - _accuracy(model, atlas, samples, occlude_roi=roi)
    ranked = np.argsort(-scores, kind="stable")
    return scores, [int(i) for i in ranked[:top]]
