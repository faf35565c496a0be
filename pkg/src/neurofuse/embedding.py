"""Volume-to-ROI embedding extractors.

Four stride-2 3x3 convolutions (ReLU between) shrink the volume, a 1x1
convolution fixes the channel count at q-4, the final map is sampled at
each ROI's (x, y) cell, and the four anatomical scalars (x, y, z, v) are
appended.  The anatomy bypasses the convolution path entirely, so a
zero-weight network embeds every ROI as (0, ..., 0, x, y, z, v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import RoiAtlas
from .errors import ConfigError, ShapeError

N_ANATOMY = 4


@dataclass
class ExtractorParams:
    """Kernels and biases of one modality's extractor."""

    kernels: list[Tensor]  # four stride-2 3x3 kernels
    biases: list[Tensor]  # per-channel biases, shape (C, 1, 1)
    head_kernel: Tensor  # 1x1 kernel producing q-4 channels
    head_bias: Tensor


def init_extractor(
    rng: np.random.Generator,
    embed_dim: int,
    channels: tuple[int, ...] = (8, 16, 16, 32),
    zero: bool = False,
) -> ExtractorParams:
    if embed_dim <= N_ANATOMY:
        raise ConfigError(f"embedding dimension must exceed {N_ANATOMY}, got {embed_dim}")
    if len(channels) != 4:
        raise ConfigError("the extractor uses exactly four down-sampling convolutions")
    kernels, biases = [], []
    c_in = 1
    for c_out in channels:
        fan = c_in * 9
        w = np.zeros((c_out, c_in, 3, 3)) if zero else rng.uniform(-1, 1, (c_out, c_in, 3, 3)) / np.sqrt(fan)
        kernels.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(np.zeros((c_out, 1, 1)), requires_grad=True))
        c_in = c_out
    q_feat = embed_dim - N_ANATOMY
    head = np.zeros((q_feat, c_in, 1, 1)) if zero else rng.uniform(-1, 1, (q_feat, c_in, 1, 1)) / np.sqrt(c_in)
    return ExtractorParams(
        kernels=kernels,
        biases=biases,
        head_kernel=Tensor(head, requires_grad=True),
        head_bias=Tensor(np.zeros((q_feat, 1, 1)), requires_grad=True),
    )


def _roi_cells(atlas: RoiAtlas, h_extent: int, w_extent: int) -> tuple[np.ndarray, np.ndarray]:
    # nearest-cell sampling of normalized coordinates in the final map
    rows = np.rint(atlas.y * (h_extent - 1)).astype(int)
    cols = np.rint(atlas.x * (w_extent - 1)).astype(int)
    return rows, cols


def extract(volume: Tensor, atlas: RoiAtlas, params: ExtractorParams) -> Tensor:
    """Map a (1, H, W) volume plus atlas to an (N, q) ROI embedding."""
    if volume.data.ndim != 3 or volume.shape[0] != 1:
        raise ShapeError(f"extract expects a (1, H, W) volume, got {volume.shape}")
    h, w = volume.shape[1], volume.shape[2]
    if h < 16 or w < 16:
        raise ShapeError(f"volume {h}x{w} too small for four stride-2 convolutions")
    x = volume
    for kernel, bias in zip(params.kernels, params.biases):
        x = ad.relu(ad.add(ad.conv2d(x, kernel, stride=2, padding=1), bias))
    x = ad.add(ad.conv2d(x, params.head_kernel, stride=1, padding=0), params.head_bias)
    rows, cols = _roi_cells(atlas, x.shape[1], x.shape[2])
    features = ad.gather_pixels(x, rows, cols)  # (N, q-4)
    anatomy = Tensor(atlas.anatomy())
    return ad.concat([features, anatomy], axis=1)


def forward_pair(
    sample, atlas: RoiAtlas, se_params: ExtractorParams, fe_params: ExtractorParams
) -> tuple[Tensor, Tensor]:
    """Structural and functional embeddings from one subject's volumes."""
    if atlas.n_rois < 1:
        raise ConfigError("atlas is empty")
    s = extract(sample.structural_volume, atlas, se_params)
    f = extract(sample.functional_volume, atlas, fe_params)
    return s, f
