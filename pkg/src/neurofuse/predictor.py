"""Stage classifier over a multimodal connectivity matrix.

Row-based filtering in two stages: edge-to-node collapses each ROI's row
into per-channel node scores, node-to-graph collapses rectified node
scores into per-channel graph scores, and a dense layer plus softmax
yields class probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConnectivityMatrix
from .errors import ShapeError


@dataclass
class PredictorParams:
    e2n: Tensor  # (C_e, N) row filters
    n2g: Tensor  # (C_e, N) node weights
    dense_w: Tensor  # (C_e, n_classes)
    dense_b: Tensor  # (1, n_classes)
    input_scale: float = 1.0


def init_predictor(
    rng: np.random.Generator,
    n: int,
    n_classes: int,
    channels: int = 16,
    input_scale: float | None = None,
) -> PredictorParams:
    # the fused matrix scales with N; normalize so logits start O(1)
    if input_scale is None:
        input_scale = 1.0 / n
    a = 1.0 / np.sqrt(n)
    return PredictorParams(
        e2n=Tensor(rng.uniform(-a, a, (channels, n)), requires_grad=True),
        n2g=Tensor(rng.uniform(-a, a, (channels, n)), requires_grad=True),
        dense_w=Tensor(rng.uniform(-1, 1, (channels, n_classes)) / np.sqrt(channels), requires_grad=True),
        dense_b=Tensor(np.zeros((1, n_classes)), requires_grad=True),
        input_scale=input_scale,
    )


def edge_to_node(mc: Tensor, filters: Tensor) -> Tensor:
    """Node scores (N, C_e): each channel dots every matrix row with its filter."""
    return ad.matmul(mc, ad.transpose(filters))


def predict(mc: ConnectivityMatrix, params: PredictorParams, n_classes: int) -> Tensor:
    """Class-probability vector of length n_classes."""
    values = mc.values
    if values.data.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ShapeError(f"predictor expects a square matrix, got {values.shape}")
    if params.e2n.shape[1] != values.shape[0]:
        raise ShapeError(
            f"predictor built for N={params.e2n.shape[1]}, got input N={values.shape[0]}"
        )
    if params.dense_w.shape[1] != n_classes:
        raise ShapeError(
            f"predictor head has {params.dense_w.shape[1]} classes, asked for {n_classes}"
        )
    x = ad.scale(values, params.input_scale)
    nodes = ad.relu(edge_to_node(x, params.e2n))  # (N, C_e)
    graph = ad.sum_all(ad.mul(nodes, ad.transpose(params.n2g)), axis=0, keepdims=True)  # (1, C_e)
    logits = ad.add(ad.matmul(graph, params.dense_w), params.dense_b)
    return ad.reshape(ad.softmax_rows(logits), (n_classes,))
