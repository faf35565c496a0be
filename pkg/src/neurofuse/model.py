"""Whole-model assembly: extractors, fusion layers, separator, critics, classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import discriminator as disc
from . import embedding, generator, predictor, separator
from .autodiff import Tensor, collect_parameters
from .data import ConnectivityMatrix, RoiAtlas, SubjectSample
from .errors import ConfigError


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults follow the reference settings."""

    n_rois: int = 90
    embed_dim: int = 128
    n_layers: int = 5
    heads: int = 8
    ffm_hidden: int = 256
    attention_mode: str = "swap"
    layer_norm: bool = False
    extractor_channels: tuple[int, ...] = (8, 16, 16, 32)
    separator_c1: int = 8
    separator_c2: int = 4
    discriminator_global_channels: int = 4
    discriminator_pool: int = 2
    predictor_channels: int = 16
    n_classes: int = 2

    def generator_config(self) -> generator.GeneratorConfig:
        return generator.GeneratorConfig(
            n_layers=self.n_layers,
            heads=self.heads,
            dim=self.embed_dim,
            attention_mode=self.attention_mode,
            ffm_hidden=self.ffm_hidden,
            layer_norm=self.layer_norm,
        )


@dataclass
class CtganModel:
    """All trainable parameter groups plus the architecture config."""

    config: ModelConfig
    se: embedding.ExtractorParams
    fe: embedding.ExtractorParams
    layers: list[generator.SbmLayerParams]
    sep: separator.SeparatorParams
    d_s: disc.SubDiscriminatorParams
    d_f: disc.SubDiscriminatorParams
    pred: predictor.PredictorParams

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        params.update(collect_parameters(self.se, "se"))
        params.update(collect_parameters(self.fe, "fe"))
        params.update(collect_parameters(self.layers, "layers"))
        params.update(collect_parameters(self.sep, "sep"))
        params.update(collect_parameters(self.d_s, "d_s"))
        params.update(collect_parameters(self.d_f, "d_f"))
        params.update(collect_parameters(self.pred, "pred"))
        return params

    def generator_parameters(self, include_predictor: bool = True) -> dict[str, Tensor]:
        """Everything updated on the generator step (extractors through classifier)."""
        params: dict[str, Tensor] = {}
        params.update(collect_parameters(self.se, "se"))
        params.update(collect_parameters(self.fe, "fe"))
        params.update(collect_parameters(self.layers, "layers"))
        params.update(collect_parameters(self.sep, "sep"))
        if include_predictor:
            params.update(collect_parameters(self.pred, "pred"))
        return params

    def discriminator_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        params.update(collect_parameters(self.d_s, "d_s"))
        params.update(collect_parameters(self.d_f, "d_f"))
        return params


def build_model(config: ModelConfig, seed: int = 0) -> CtganModel:
    if config.embed_dim % config.heads != 0:
        raise ConfigError(f"embed_dim {config.embed_dim} not divisible by {config.heads} heads")
    rng = np.random.default_rng(seed)
    gcfg = config.generator_config()
    return CtganModel(
        config=config,
        se=embedding.init_extractor(rng, config.embed_dim, config.extractor_channels),
        fe=embedding.init_extractor(rng, config.embed_dim, config.extractor_channels),
        layers=generator.init_generator(rng, gcfg),
        sep=separator.init_separator(rng, config.n_rois, config.separator_c1, config.separator_c2),
        d_s=disc.init_sub_discriminator(
            rng, config.n_rois, config.discriminator_global_channels, config.discriminator_pool
        ),
        d_f=disc.init_sub_discriminator(
            rng, config.n_rois, config.discriminator_global_channels, config.discriminator_pool
        ),
        pred=predictor.init_predictor(rng, config.n_rois, config.n_classes, config.predictor_channels),
    )


@dataclass
class ForwardResult:
    mc: ConnectivityMatrix
    sc_hat: ConnectivityMatrix
    fc_hat: ConnectivityMatrix
    probs: Tensor
    s_final: Tensor
    f_final: Tensor


def forward_subject(
    model: CtganModel, atlas: RoiAtlas, sample: SubjectSample, occlude_roi: int | None = None
) -> ForwardResult:
    """Full pipeline for one subject; optionally zero one ROI end to end."""
    s0, f0 = embedding.forward_pair(sample, atlas, model.se, model.fe)
    if occlude_roi is not None:
        mask = np.ones((atlas.n_rois, 1))
        mask[occlude_roi] = 0.0
        mask_t = Tensor(mask)
        s0 = ad.mul(s0, mask_t)
        f0 = ad.mul(f0, mask_t)
    mc, s_final, f_final = generator.generate_mc(s0, f0, model.config.generator_config(), model.layers)
    if occlude_roi is not None:
        row_mask = np.ones((atlas.n_rois, atlas.n_rois))
        row_mask[occlude_roi, :] = 0.0
        row_mask[:, occlude_roi] = 0.0
        mc = ConnectivityMatrix(ad.mul(mc.values, Tensor(row_mask)), "MC")
    sc_hat, fc_hat = separator.separate(mc, model.sep)
    probs = predictor.predict(mc, model.pred, model.config.n_classes)
    return ForwardResult(mc=mc, sc_hat=sc_hat, fc_hat=fc_hat, probs=probs, s_final=s_final, f_final=f_final)


def compute_mc(model: CtganModel, atlas: RoiAtlas, sample: SubjectSample) -> ConnectivityMatrix:
    """Generator-only inference, no gradient graph."""
    with ad.no_grad():
        s0, f0 = embedding.forward_pair(sample, atlas, model.se, model.fe)
        mc, _, _ = generator.generate_mc(s0, f0, model.config.generator_config(), model.layers)
    return mc


def parameter_checksum(params: dict[str, Tensor]) -> int:
    """Order-independent fingerprint of parameter bytes, for partition tests."""
    acc = 0
    for name in sorted(params):
        acc ^= hash((name, params[name].data.tobytes()))
    return acc
