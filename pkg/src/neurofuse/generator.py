"""Cross-modal transformer: swapping bi-attention layers and the
multimodal connectivity computation.

In swap mode each modality's per-head queries attend to the *other*
modality's keys and values; head outputs are concatenated along the
feature axis and each modality applies a post-attention residual followed
by a feed-forward residual.  Self mode (the ablation) sources keys and
values from the query's own modality and is otherwise identical.

The connectivity product is computed as MC = A A^T with A = S F^T: the
chained four-matrix form only composes dimensionally in this order, and
the A A^T structure is what makes MC symmetric positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConnectivityMatrix
from .errors import ConfigError, ShapeError


@dataclass
class GeneratorConfig:
    n_layers: int = 5
    heads: int = 8
    dim: int = 128
    attention_mode: str = "swap"  # swap | self
    ffm_hidden: int = 256
    layer_norm: bool = False

    def validate(self) -> None:
        if self.n_layers < 1:
            raise ConfigError("need at least one transformer layer")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.attention_mode not in ("swap", "self"):
            raise ConfigError(f"unknown attention mode {self.attention_mode!r}")


@dataclass
class FfmParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class SbmLayerParams:
    """Per-head projections for both modalities plus one feed-forward map each."""

    wq_s: list[Tensor]
    wk_s: list[Tensor]
    wv_s: list[Tensor]
    wq_f: list[Tensor]
    wk_f: list[Tensor]
    wv_f: list[Tensor]
    ffm_s: FfmParams
    ffm_f: FfmParams


def _proj(rng, q, d, zero):
    w = np.zeros((q, d)) if zero else rng.uniform(-1, 1, (q, d)) / np.sqrt(q)
    return Tensor(w, requires_grad=True)


def _ffm(rng, q, hidden, zero) -> FfmParams:
    return FfmParams(
        w1=_proj(rng, q, hidden, zero),
        b1=Tensor(np.zeros((1, hidden)), requires_grad=True),
        w2=_proj(rng, hidden, q, zero),
        b2=Tensor(np.zeros((1, q)), requires_grad=True),
    )


def init_sbm_layer(rng: np.random.Generator, config: GeneratorConfig, zero: bool = False) -> SbmLayerParams:
    config.validate()
    q, h = config.dim, config.heads
    d = q // h
    return SbmLayerParams(
        wq_s=[_proj(rng, q, d, zero) for _ in range(h)],
        wk_s=[_proj(rng, q, d, zero) for _ in range(h)],
        wv_s=[_proj(rng, q, d, zero) for _ in range(h)],
        wq_f=[_proj(rng, q, d, zero) for _ in range(h)],
        wk_f=[_proj(rng, q, d, zero) for _ in range(h)],
        wv_f=[_proj(rng, q, d, zero) for _ in range(h)],
        ffm_s=_ffm(rng, q, config.ffm_hidden, zero),
        ffm_f=_ffm(rng, q, config.ffm_hidden, zero),
    )


def init_generator(rng: np.random.Generator, config: GeneratorConfig, zero: bool = False) -> list[SbmLayerParams]:
    return [init_sbm_layer(rng, config, zero=zero) for _ in range(config.n_layers)]


def attention(q: Tensor, k: Tensor, v: Tensor, scale_dim: int) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V over token rows."""
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention shapes do not agree: {q.shape}, {k.shape}, {v.shape}")
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(scale_dim))
    return ad.matmul(ad.softmax_rows(logits), v)


def _row_norm(x: Tensor) -> Tensor:
    q = x.shape[1]
    mu = ad.scale(ad.sum_all(x, axis=1, keepdims=True), 1.0 / q)
    centered = ad.sub(x, mu)
    var = ad.scale(ad.sum_all(ad.mul(centered, centered), axis=1, keepdims=True), 1.0 / q)
    return ad.div(centered, ad.sqrt(ad.add(var, Tensor(np.full((x.shape[0], 1), 1e-8)))))


def _ffm_apply(x: Tensor, p: FfmParams) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(x, p.w1), p.b1))
    return ad.add(ad.matmul(hidden, p.w2), p.b2)


def sbm_layer(
    s: Tensor, f: Tensor, params: SbmLayerParams, config: GeneratorConfig
) -> tuple[Tensor, Tensor]:
    """One swapping bi-attention layer over the paired (N, q) embeddings."""
    q = config.dim
    heads = config.heads
    d = q // heads
    s_heads, f_heads = [], []
    for h in range(heads):
        q_s = ad.matmul(s, params.wq_s[h])
        k_s = ad.matmul(s, params.wk_s[h])
        v_s = ad.matmul(s, params.wv_s[h])
        q_f = ad.matmul(f, params.wq_f[h])
        k_f = ad.matmul(f, params.wk_f[h])
        v_f = ad.matmul(f, params.wv_f[h])
        if config.attention_mode == "swap":
            s_heads.append(attention(q_s, k_f, v_f, d))
            f_heads.append(attention(q_f, k_s, v_s, d))
        else:
            s_heads.append(attention(q_s, k_s, v_s, d))
            f_heads.append(attention(q_f, k_f, v_f, d))
    s_att = ad.concat(s_heads, axis=1)
    f_att = ad.concat(f_heads, axis=1)
    s_mid = ad.add(s, s_att)
    f_mid = ad.add(f, f_att)
    if config.layer_norm:
        s_mid = _row_norm(s_mid)
        f_mid = _row_norm(f_mid)
    s_out = ad.add(s_mid, _ffm_apply(s_mid, params.ffm_s))
    f_out = ad.add(f_mid, _ffm_apply(f_mid, params.ffm_f))
    if config.layer_norm:
        s_out = _row_norm(s_out)
        f_out = _row_norm(f_out)
    return s_out, f_out


def generate_mc(
    s0: Tensor, f0: Tensor, config: GeneratorConfig, layers: list[SbmLayerParams]
) -> tuple[ConnectivityMatrix, Tensor, Tensor]:
    """Run all layers, then fuse: MC = (S F^T)(S F^T)^T."""
    if s0.shape != f0.shape:
        raise ShapeError(f"paired embeddings differ in shape: {s0.shape} vs {f0.shape}")
    s, f = s0, f0
    for params in layers:
        s, f = sbm_layer(s, f, params, config)
    a = ad.matmul(s, ad.transpose(f))
    mc = ad.matmul(a, ad.transpose(a))
    return ConnectivityMatrix(mc, "MC"), s, f
