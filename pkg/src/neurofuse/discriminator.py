"""Adversarial critics scoring connectivity matrices as empirical vs reconstructed.

Each sub-discriminator runs a local branch (four 3x3 stride-1 convolutions
with leaky ReLU, channel plan 1-4-8-8-4, then average pooling) and a
global branch (a 1xN row-filter bank and an Nx1 column-filter bank) over
the input matrix, concatenates the flattened branch outputs, and maps them
through one dense layer to a sigmoid probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

LOCAL_CHANNELS = (4, 8, 8, 4)
LEAKY_SLOPE = 0.2


@dataclass
class SubDiscriminatorParams:
    local_kernels: list[Tensor]
    local_biases: list[Tensor]
    row_filters: Tensor  # (C_g, 1, 1, N)
    row_bias: Tensor
    col_filters: Tensor  # (C_g, 1, N, 1)
    col_bias: Tensor
    head_weight: Tensor  # (flat, 1)
    head_bias: Tensor  # (1, 1)
    pool_extent: int = 2


def init_sub_discriminator(
    rng: np.random.Generator, n: int, global_channels: int = 4, pool_extent: int = 2
) -> SubDiscriminatorParams:
    kernels, biases = [], []
    c_in = 1
    for c_out in LOCAL_CHANNELS:
        a = 1.0 / np.sqrt(c_in * 9)
        kernels.append(Tensor(rng.uniform(-a, a, (c_out, c_in, 3, 3)), requires_grad=True))
        biases.append(Tensor(np.zeros((c_out, 1, 1)), requires_grad=True))
        c_in = c_out
    a = 1.0 / np.sqrt(n)
    row_f = Tensor(rng.uniform(-a, a, (global_channels, 1, 1, n)), requires_grad=True)
    col_f = Tensor(rng.uniform(-a, a, (global_channels, 1, n, 1)), requires_grad=True)
    pooled = n // pool_extent
    flat = LOCAL_CHANNELS[-1] * pooled * pooled + 2 * global_channels * n
    a = 1.0 / np.sqrt(flat)
    return SubDiscriminatorParams(
        local_kernels=kernels,
        local_biases=biases,
        row_filters=row_f,
        row_bias=Tensor(np.zeros((global_channels, 1, 1)), requires_grad=True),
        col_filters=col_f,
        col_bias=Tensor(np.zeros((global_channels, 1, 1)), requires_grad=True),
        head_weight=Tensor(rng.uniform(-a, a, (flat, 1)), requires_grad=True),
        head_bias=Tensor(np.zeros((1, 1)), requires_grad=True),
        pool_extent=pool_extent,
    )


def discriminate(x: Tensor, params: SubDiscriminatorParams) -> Tensor:
    """Probability in (0, 1) that an N x N matrix is empirical."""
    if x.data.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeError(f"discriminator expects a square matrix, got {x.shape}")
    n = x.shape[0]
    if params.row_filters.shape[3] != n:
        raise ShapeError(
            f"discriminator built for N={params.row_filters.shape[3]}, got input N={n}"
        )
    m = ad.reshape(x, (1, n, n))
    local = m
    for kernel, bias in zip(params.local_kernels, params.local_biases):
        local = ad.leaky_relu(ad.add(ad.conv2d(local, kernel, stride=1, padding=1), bias), LEAKY_SLOPE)
    local = ad.avg_pool2d(local, params.pool_extent)
    rows = ad.leaky_relu(ad.add(ad.conv2d(m, params.row_filters), params.row_bias), LEAKY_SLOPE)
    cols = ad.leaky_relu(ad.add(ad.conv2d(m, params.col_filters), params.col_bias), LEAKY_SLOPE)
    merged = ad.concat(
        [
            ad.reshape(local, (1, local.size)),
            ad.reshape(rows, (1, rows.size)),
            ad.reshape(cols, (1, cols.size)),
        ],
        axis=1,
    )
    logit = ad.add(ad.matmul(merged, params.head_weight), params.head_bias)
    return ad.reshape(ad.sigmoid(logit), ())
