"""Dual-channel separator: multimodal connectivity back to SC and FC.

Filters are cross-shaped: the output at cell (i, j) aggregates the whole
of row i and the whole of column j, per channel, with step size 1 so the
map size never changes.  The first filter bank is shared storage between
the two branches; the second and third banks are per-branch.  The
structural branch squashes through a sigmoid (targets live in [0, 1]),
the functional branch through tanh (targets live in [-1, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConnectivityMatrix
from .errors import ShapeError


@dataclass
class CrossFilterParams:
    """One bank of cross-shaped filters mapping C_in maps to C_out maps."""

    row_weights: Tensor  # (C_out, C_in, N)
    col_weights: Tensor  # (C_out, C_in, N)
    bias: Tensor  # (C_out,)


@dataclass
class SeparatorParams:
    shared: CrossFilterParams
    sc_mid: CrossFilterParams
    sc_out: CrossFilterParams
    fc_mid: CrossFilterParams
    fc_out: CrossFilterParams


def init_cross_filter(
    rng: np.random.Generator, c_out: int, c_in: int, n: int, gain: float = 1.0
) -> CrossFilterParams:
    # each output cell sums 2*N*C_in weighted terms; scale init to keep it O(gain)
    a = gain / np.sqrt(2.0 * n * c_in)
    return CrossFilterParams(
        row_weights=Tensor(rng.uniform(-a, a, (c_out, c_in, n)), requires_grad=True),
        col_weights=Tensor(rng.uniform(-a, a, (c_out, c_in, n)), requires_grad=True),
        bias=Tensor(np.zeros(c_out), requires_grad=True),
    )


def init_separator(
    rng: np.random.Generator, n: int, c1: int = 8, c2: int = 4
) -> SeparatorParams:
    return SeparatorParams(
        shared=init_cross_filter(rng, c1, 1, n),
        sc_mid=init_cross_filter(rng, c2, c1, n),
        sc_out=init_cross_filter(rng, 1, c2, n),
        fc_mid=init_cross_filter(rng, c2, c1, n),
        fc_out=init_cross_filter(rng, 1, c2, n),
    )


def cross_conv(x: Tensor, filters: CrossFilterParams) -> Tensor:
    """Row+column aggregation per output cell over (C, N, N) maps."""
    if x.data.ndim != 3 or x.shape[1] != x.shape[2]:
        raise ShapeError(f"cross_conv expects square (C, N, N) maps, got {x.shape}")
    r, s, b = filters.row_weights, filters.col_weights, filters.bias
    if r.shape[1] != x.shape[0] or r.shape[2] != x.shape[1]:
        raise ShapeError(f"cross filters {r.shape} do not match input {x.shape}")
    row_part = np.einsum("cik,pck->pi", x.data, r.data)
    col_part = np.einsum("ckj,pck->pj", x.data, s.data)
    data = row_part[:, :, None] + col_part[:, None, :] + b.data[:, None, None]

    def backward(g):
        d_row = g.sum(axis=2)  # (C', N)
        d_col = g.sum(axis=1)
        if x.requires_grad:
            dx = np.einsum("pi,pck->cik", d_row, r.data)
            dx += np.einsum("pj,pck->ckj", d_col, s.data)
            x._accum(dx)
        if r.requires_grad:
            r._accum(np.einsum("pi,cik->pck", d_row, x.data))
        if s.requires_grad:
            s._accum(np.einsum("pj,ckj->pck", d_col, x.data))
        if b.requires_grad:
            b._accum(g.sum(axis=(1, 2)))

    return ad.attach_op(data, (x, r, s, b), backward)


def cross_conv_oracle(x: np.ndarray, filters: CrossFilterParams) -> np.ndarray:
    """Straight triple-loop evaluation, kept as the reference semantics."""
    r, s, b = filters.row_weights.data, filters.col_weights.data, filters.bias.data
    c_out, c_in, n = r.shape
    out = np.zeros((c_out, n, n))
    for p in range(c_out):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for c in range(c_in):
                    for k in range(n):
                        acc += r[p, c, k] * x[c, i, k] + s[p, c, k] * x[c, k, j]
                out[p, i, j] = acc + b[p]
    return out


def separate(
    mc: ConnectivityMatrix, params: SeparatorParams, input_scale: float | None = None
) -> tuple[ConnectivityMatrix, ConnectivityMatrix]:
    """Decompose one multimodal matrix into (sc_hat, fc_hat) estimates.

    ``input_scale`` defaults to 1/N; the fused matrix grows with N by
    construction, and the squashing heads need O(1) pre-activations.
    """
    n = mc.n
    if input_scale is None:
        input_scale = 1.0 / n
    x = ad.reshape(ad.scale(mc.values, input_scale), (1, n, n))
    h1 = ad.relu(cross_conv(x, params.shared))
    sc_mid = ad.relu(cross_conv(h1, params.sc_mid))
    fc_mid = ad.relu(cross_conv(h1, params.fc_mid))
    sc_hat = ad.sigmoid(ad.reshape(cross_conv(sc_mid, params.sc_out), (n, n)))
    fc_hat = ad.tanh(ad.reshape(cross_conv(fc_mid, params.fc_out), (n, n)))
    return ConnectivityMatrix(sc_hat, "SC"), ConnectivityMatrix(fc_hat, "FC")
