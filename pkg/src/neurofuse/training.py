"""Hybrid-loss adversarial training, evaluation metrics, cross-validation.

Each batch takes two optimizer steps: the critics ascend the adversarial
losses on detached reconstructions, then the generator side (extractors,
fusion layers, separator, classifier) descends the weighted sum of its
adversarial, classification, and L1 reconstruction terms.  The two
parameter partitions are updated by disjoint optimizers.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ConnectivityMatrix, RoiAtlas, SubjectSample, kfold_split
from .discriminator import SubDiscriminatorParams, discriminate
from .errors import ConfigError, TrainingDiverged
from .model import CtganModel, ModelConfig, build_model, forward_subject
from .optim import Adam

PROB_EPS = 1e-7

CURVE_COLUMNS = ("epoch", "l_adv_sc", "l_adv_fc", "l_cls", "l1_sc", "l1_fc")


@dataclass
class LossWeights:
    adv: float = 1.0
    cls: float = 1.0
    pcr: float = 1.0

    def validate(self) -> None:
        if min(self.adv, self.cls, self.pcr) < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 0.001
    weight_decay: float = 0.01
    use_sfc_discriminator: bool = True
    attention_mode: str | None = None  # None keeps the model config's mode
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    non_saturating: bool = True
    freeze_predictor: bool = False

    def validate(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch size must be positive")
        self.weights.validate()


@dataclass
class Metrics:
    acc: float
    sen: float | None
    spe: float | None
    auc: float | None

    def as_dict(self) -> dict:
        return {"acc": self.acc, "sen": self.sen, "spe": self.spe, "auc": self.auc}


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _values(m) -> Tensor:
    return m.values if isinstance(m, ConnectivityMatrix) else m


def _mean_log_prob(d_params: SubDiscriminatorParams, mats, complement: bool) -> Tensor:
    terms = []
    for m in mats:
        p = clamp_prob(discriminate(_values(m), d_params))
        if complement:
            p = ad.sub(Tensor(np.asarray(1.0)), p)
            p = clamp_prob(p)
        terms.append(ad.log(p))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


def clamp_prob(p: Tensor) -> Tensor:
    return ad.clamp(p, PROB_EPS, 1.0 - PROB_EPS)


def adversarial_losses(
    d_s: SubDiscriminatorParams,
    d_f: SubDiscriminatorParams,
    real_sc,
    real_fc,
    sc_hat,
    fc_hat,
) -> tuple[Tensor, Tensor]:
    """E[log D(real)] + E[log(1 - D(fake))], per modality.

    Critics ascend these; the generator side descends them.  Inputs are
    single matrices or equal-length batches.
    """
    real_sc, real_fc, sc_hat, fc_hat = (
        m if isinstance(m, (list, tuple)) else [m] for m in (real_sc, real_fc, sc_hat, fc_hat)
    )
    adv_sc = ad.add(_mean_log_prob(d_s, real_sc, False), _mean_log_prob(d_s, sc_hat, True))
    adv_fc = ad.add(_mean_log_prob(d_f, real_fc, False), _mean_log_prob(d_f, fc_hat, True))
    return adv_sc, adv_fc


def generator_adversarial_term(
    d_params: SubDiscriminatorParams, fakes, non_saturating: bool = True
) -> Tensor:
    """The fake-side objective the generator minimizes.

    Non-saturating: -E[log D(fake)].  Literal minimax: E[log(1 - D(fake))].
    """
    fakes = fakes if isinstance(fakes, (list, tuple)) else [fakes]
    if non_saturating:
        return ad.scale(_mean_log_prob(d_params, fakes, False), -1.0)
    return _mean_log_prob(d_params, fakes, True)


def classification_loss(probs: Tensor, label: int) -> Tensor:
    """Negative log-probability of the true class."""
    if not 0 <= label < probs.shape[0]:
        raise ConfigError(f"label {label} outside the {probs.shape[0]}-class distribution")
    p = ad.slice_axis(ad.reshape(probs, (1, probs.shape[0])), 1, label, label + 1)
    return ad.scale(ad.log(clamp_prob(ad.reshape(p, ()))), -1.0)


def reconstruction_losses(sc_hat, fc_hat, sc, fc) -> tuple[Tensor, Tensor]:
    """Mean absolute entrywise difference per matrix pair."""
    sc_hat_t, fc_hat_t, sc_t, fc_t = map(_values, (sc_hat, fc_hat, sc, fc))
    l1_sc = ad.scale(ad.abs_sum(ad.sub(sc_hat_t, sc_t)), 1.0 / sc_t.size)
    l1_fc = ad.scale(ad.abs_sum(ad.sub(fc_hat_t, fc_t)), 1.0 / fc_t.size)
    return l1_sc, l1_fc


def _mean_scalar(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: CtganModel
    curves: list[dict]
    discriminator_updates: int


def _check_finite(name: str, value: float, epoch: int) -> float:
    if not np.isfinite(value):
        raise TrainingDiverged(f"loss {name} became {value} at epoch {epoch}")
    return value


def train(
    samples: list[SubjectSample],
    atlas: RoiAtlas,
    model_config: ModelConfig,
    train_config: TrainConfig,
    model: CtganModel | None = None,
) -> TrainResult:
    """Alternating adversarial optimization; deterministic given the seed."""
    train_config.validate()
    if not samples:
        raise ConfigError("cannot train on an empty dataset")
    if train_config.attention_mode is not None:
        model_config = dataclasses.replace(model_config, attention_mode=train_config.attention_mode)
    if model is None:
        model = build_model(model_config, seed=train_config.seed)

    w = train_config.weights
    g_opt = Adam(
        model.generator_parameters(include_predictor=not train_config.freeze_predictor),
        learning_rate=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )
    d_opt = (
        Adam(
            model.discriminator_parameters(),
            learning_rate=train_config.learning_rate,
            weight_decay=train_config.weight_decay,
        )
        if train_config.use_sfc_discriminator
        else None
    )
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 7]))

    curves: list[dict] = []
    d_updates = 0
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(len(samples))
        sums = dict.fromkeys(CURVE_COLUMNS[1:], 0.0)
        n_batches = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [samples[i] for i in order[start : start + train_config.batch_size]]
            n_batches += 1

            if d_opt is not None:
                with ad.no_grad():
                    fakes = [forward_subject(model, atlas, s) for s in batch]
                adv_sc, adv_fc = adversarial_losses(
                    model.d_s,
                    model.d_f,
                    [s.sc for s in batch],
                    [s.fc for s in batch],
                    [Tensor(r.sc_hat.data) for r in fakes],
                    [Tensor(r.fc_hat.data) for r in fakes],
                )
                d_loss = ad.scale(ad.add(adv_sc, adv_fc), -1.0)
                d_opt.zero_grad()
                d_loss.backward()
                d_opt.step()
                d_updates += 1
                sums["l_adv_sc"] += _check_finite("l_adv_sc", adv_sc.item(), epoch)
                sums["l_adv_fc"] += _check_finite("l_adv_fc", adv_fc.item(), epoch)

            results = [forward_subject(model, atlas, s) for s in batch]
            cls_loss = _mean_scalar(
                [classification_loss(r.probs, s.label) for r, s in zip(results, batch)]
            )
            recon = [
                reconstruction_losses(r.sc_hat, r.fc_hat, s.sc, s.fc)
                for r, s in zip(results, batch)
            ]
            l1_sc = _mean_scalar([r[0] for r in recon])
            l1_fc = _mean_scalar([r[1] for r in recon])
            g_loss = ad.add(ad.scale(cls_loss, w.cls), ad.scale(ad.add(l1_sc, l1_fc), w.pcr))
            if d_opt is not None and w.adv > 0:
                g_adv = ad.add(
                    generator_adversarial_term(
                        model.d_s, [r.sc_hat for r in results], train_config.non_saturating
                    ),
                    generator_adversarial_term(
                        model.d_f, [r.fc_hat for r in results], train_config.non_saturating
                    ),
                )
                g_loss = ad.add(g_loss, ad.scale(g_adv, w.adv))
            g_opt.zero_grad()
            g_loss.backward()
            g_opt.step()
            sums["l_cls"] += _check_finite("l_cls", cls_loss.item(), epoch)
            sums["l1_sc"] += _check_finite("l1_sc", l1_sc.item(), epoch)
            sums["l1_fc"] += _check_finite("l1_fc", l1_fc.item(), epoch)

        row = {"epoch": epoch}
        for key in CURVE_COLUMNS[1:]:
            row[key] = sums[key] / n_batches
        curves.append(row)
    return TrainResult(model=model, curves=curves, discriminator_updates=d_updates)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def predict_proba(model: CtganModel, atlas: RoiAtlas, sample: SubjectSample) -> np.ndarray:
    with ad.no_grad():
        return forward_subject(model, atlas, sample).probs.data.copy()


def auc_from_scores(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Rank-statistic AUC with mid-ranks for ties; None if a class is absent."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(
    model: CtganModel, atlas: RoiAtlas, samples: list[SubjectSample], positive_class: int = 1
) -> Metrics:
    """Accuracy, sensitivity, specificity, and AUC on a held-out split."""
    if not samples:
        raise ConfigError("cannot evaluate an empty split")
    tp = fn = tn = fp = 0
    scores, labels = [], []
    for s in samples:
        probs = predict_proba(model, atlas, s)
        predicted = int(np.argmax(probs))
        actual_pos = s.label == positive_class
        predicted_pos = predicted == positive_class
        if actual_pos and predicted_pos:
            tp += 1
        elif actual_pos:
            fn += 1
        elif predicted_pos:
            fp += 1
        else:
            tn += 1
        scores.append(float(probs[positive_class]))
        labels.append(1 if actual_pos else 0)
    acc = (tp + tn) / len(samples)
    sen = tp / (tp + fn) if (tp + fn) > 0 else None
    spe = tn / (tn + fp) if (tn + fp) > 0 else None
    auc = auc_from_scores(np.asarray(scores), np.asarray(labels))
    return Metrics(acc=acc, sen=sen, spe=spe, auc=auc)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    metrics: Metrics
    result: TrainResult


@dataclass
class CrossValResult:
    folds: list[FoldResult]
    mean: Metrics
    discriminator_updates: int


def select_task(
    samples: list[SubjectSample], class_a: int, class_b: int
) -> list[SubjectSample]:
    """Restrict to a binary task; class_a maps to 0, class_b (positive) to 1."""
    if class_a == class_b:
        raise ConfigError("a binary task needs two distinct classes")
    out = []
    for s in samples:
        if s.label == class_a:
            out.append(dataclasses.replace(s, label=0))
        elif s.label == class_b:
            out.append(dataclasses.replace(s, label=1))
    if not out:
        raise ConfigError(f"no samples with labels {class_a} or {class_b}")
    return out


def _mean_metric(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def cross_validate(
    samples: list[SubjectSample],
    atlas: RoiAtlas,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int = 5,
    jobs: int = 1,
) -> CrossValResult:
    """Stratified k-fold training and evaluation; folds are independent runs."""
    splits = kfold_split(samples, k, seed=train_config.seed)

    def run_fold(fold: int) -> FoldResult:
        train_idx, test_idx = splits[fold]
        fold_config = dataclasses.replace(train_config, seed=train_config.seed + fold)
        result = train(
            [samples[i] for i in train_idx], atlas, model_config, fold_config
        )
        metrics = evaluate(result.model, atlas, [samples[i] for i in test_idx])
        return FoldResult(fold=fold, metrics=metrics, result=result)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(run_fold, range(k)))
    else:
        folds = [run_fold(fold) for fold in range(k)]

    mean = Metrics(
        acc=float(np.mean([f.metrics.acc for f in folds])),
        sen=_mean_metric([f.metrics.sen for f in folds]),
        spe=_mean_metric([f.metrics.spe for f in folds]),
        auc=_mean_metric([f.metrics.auc for f in folds]),
    )
    return CrossValResult(
        folds=folds,
        mean=mean,
        discriminator_updates=sum(f.result.discriminator_updates for f in folds),
    )
