"""Reproducible paired-modality cohorts with planted class structure.

Each subject carries two synthetic image volumes plus the ground-truth
connectivity matrices they encode.  Per-class block models give the
structural matrices; a correlation-like normalization derives the
functional ones.  The per-ROI volume intensity encodes that ROI's row
statistic, so the matrices are recoverable from the images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, SplitError

DEFAULT_CLASS_NAMES = ("NC", "EMCI", "LMCI", "AD")


@dataclass
class RoiAtlas:
    """Per-ROI anatomical record: coordinates in [0,1] and a positive volume."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    v: np.ndarray

    @property
    def n_rois(self) -> int:
        return len(self.x)

    def anatomy(self) -> np.ndarray:
        """(N, 4) matrix of the (x, y, z, v) scalars."""
        return np.stack([self.x, self.y, self.z, self.v], axis=1)

    def validate(self) -> None:
        for arr in (self.x, self.y, self.z, self.v):
            if len(arr) != self.n_rois:
                raise ConfigError("atlas columns have unequal lengths")
        for name, arr in (("x", self.x), ("y", self.y), ("z", self.z)):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ConfigError(f"atlas {name} coordinates outside [0,1]")
        if np.any(self.v <= 0):
            raise ConfigError("atlas volumes must be positive")


@dataclass
class SubjectSample:
    """One paired observation: two volumes, the matrices they encode, a label."""

    structural_volume: Tensor
    functional_volume: Tensor
    sc: "ConnectivityMatrix"
    fc: "ConnectivityMatrix"
    label: int


@dataclass
class ConnectivityMatrix:
    """An N x N matrix tagged with what it measures."""

    values: Tensor
    kind: str  # MC | SC | FC | DIFF

    @property
    def data(self) -> np.ndarray:
        return self.values.data

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass
class DatasetSpec:
    """Everything needed to synthesize a cohort deterministically."""

    n_per_class: int = 24
    n_classes: int = 4
    n_rois: int = 90
    volume_extent: int = 64
    seed: int = 0
    noise: float = 0.05
    # block model: community id per ROI (defaults to two equal halves)
    communities: list[int] | None = None
    class_within: list[float] | None = None
    class_between: list[float] | None = None
    # additive within-block shift applied to the functional matrix per class
    fc_class_shift: list[float] | None = None
    # extra class-specific symmetric edge offsets: per class, list of (i, j, delta)
    class_edge_deltas: list[list[tuple[int, int, float]]] | None = None
    footprint_sigma: float = 1.5
    class_names: list[str] | None = None

    def resolved_class_names(self) -> list[str]:
        if self.class_names is not None:
            if len(self.class_names) != self.n_classes:
                raise ConfigError("class_names length must equal n_classes")
            return list(self.class_names)
        names = list(DEFAULT_CLASS_NAMES[: self.n_classes])
        names += [f"C{i}" for i in range(len(names), self.n_classes)]
        return names

    def validate(self) -> None:
        if self.n_per_class <= 0 or self.n_classes <= 0:
            raise ConfigError("class counts must be positive")
        if self.noise < 0:
            raise ConfigError("noise level must be non-negative")
        if self.n_rois < 2:
            raise ConfigError("need at least two ROIs")
        radius = int(np.ceil(3.0 * self.footprint_sigma))
        if 2 * radius + 1 > self.volume_extent:
            raise ConfigError(
                f"ROI footprint (radius {radius}) exceeds the {self.volume_extent}-pixel volume"
            )
        for name in ("class_within", "class_between", "fc_class_shift"):
            vals = getattr(self, name)
            if vals is not None and len(vals) != self.n_classes:
                raise ConfigError(f"{name} must have one entry per class")
        if self.communities is not None and len(self.communities) != self.n_rois:
            raise ConfigError("communities must assign every ROI")


def _default_strengths(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = spec.n_classes
    within = np.asarray(spec.class_within) if spec.class_within is not None else np.linspace(0.8, 0.4, c)
    between = np.asarray(spec.class_between) if spec.class_between is not None else np.linspace(0.15, 0.3, c)
    fc_shift = np.asarray(spec.fc_class_shift) if spec.fc_class_shift is not None else np.linspace(-0.05, 0.05, c)
    return within, between, fc_shift


def make_atlas(spec: DatasetSpec, rng: np.random.Generator) -> RoiAtlas:
    """Jittered-grid ROI placement: spread, deterministic, collision-free for small N."""
    n = spec.n_rois
    side = int(np.ceil(np.sqrt(n)))
    margin = (int(np.ceil(3.0 * spec.footprint_sigma)) + 1) / spec.volume_extent
    centers = np.linspace(margin, 1.0 - margin, side)
    grid = [(cx, cy) for cy in centers for cx in centers][:n]
    jitter = 0.25 * (centers[1] - centers[0]) if side > 1 else 0.0
    x = np.array([gx for gx, _ in grid]) + rng.uniform(-jitter, jitter, n)
    y = np.array([gy for _, gy in grid]) + rng.uniform(-jitter, jitter, n)
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(y, 0.0, 1.0)
    z = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.5, 1.5, n)
    return RoiAtlas(x=x, y=y, z=z, v=v)


def class_base_sc(spec: DatasetSpec, label: int) -> np.ndarray:
    """Noise-free structural matrix for a class: block model plus planted edges."""
    n = spec.n_rois
    within, between, _ = _default_strengths(spec)
    comm = np.asarray(spec.communities) if spec.communities is not None else (np.arange(n) >= n // 2).astype(int)
    same = comm[:, None] == comm[None, :]
    base = np.where(same, within[label], between[label])
    if spec.class_edge_deltas is not None:
        for i, j, delta in spec.class_edge_deltas[label]:
            base[i, j] += delta
            base[j, i] += delta
    np.fill_diagonal(base, 0.0)
    return base


def _fc_from_sc(sc: np.ndarray, spec: DatasetSpec, label: int) -> np.ndarray:
    """Correlation-like normalization by row sums, then the class shift."""
    _, _, fc_shift = _default_strengths(spec)
    d = sc.sum(axis=1)
    d = np.maximum(d, 1e-12)
    fc = sc / np.sqrt(d[:, None] * d[None, :])
    comm = (
        np.asarray(spec.communities)
        if spec.communities is not None
        else (np.arange(spec.n_rois) >= spec.n_rois // 2).astype(int)
    )
    same = comm[:, None] == comm[None, :]
    fc = fc + fc_shift[label] * same
    fc = np.clip(fc, -1.0, 1.0)
    np.fill_diagonal(fc, 1.0)
    return fc


def _splat_volume(intensity: np.ndarray, atlas: RoiAtlas, spec: DatasetSpec) -> np.ndarray:
    """Render per-ROI intensities as Gaussian footprints at the (x, y) cells."""
    h = w = spec.volume_extent
    sigma = spec.footprint_sigma
    radius = int(np.ceil(3.0 * sigma))
    span = np.arange(-radius, radius + 1)
    kernel = np.exp(-(span[:, None] ** 2 + span[None, :] ** 2) / (2.0 * sigma * sigma))
    vol = np.zeros((h, w))
    rows = np.rint(atlas.y * (h - 1)).astype(int)
    cols = np.rint(atlas.x * (w - 1)).astype(int)
    for i in range(atlas.n_rois):
        r0, c0 = rows[i] - radius, cols[i] - radius
        r1, c1 = rows[i] + radius + 1, cols[i] + radius + 1
        kr0, kc0 = max(0, -r0), max(0, -c0)
        r0, c0 = max(0, r0), max(0, c0)
        r1, c1 = min(h, r1), min(w, c1)
        vol[r0:r1, c0:c1] += intensity[i] * kernel[kr0 : kr0 + (r1 - r0), kc0 : kc0 + (c1 - c0)]
    return vol[None, :, :]


def generate_dataset(spec: DatasetSpec) -> tuple[list[SubjectSample], RoiAtlas]:
    """Synthesize the cohort; bit-identical for a given spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    atlas = make_atlas(spec, rng)
    n = spec.n_rois
    samples: list[SubjectSample] = []
    for label in range(spec.n_classes):
        base = class_base_sc(spec, label)
        for _ in range(spec.n_per_class):
            noise = rng.normal(0.0, spec.noise, size=(n, n)) if spec.noise > 0 else np.zeros((n, n))
            noise = 0.5 * (noise + noise.T)
            sc = np.clip(base + noise, 0.0, None)
            np.fill_diagonal(sc, 0.0)
            fc = _fc_from_sc(sc, spec, label)
            sc_intensity = sc.sum(axis=1) / (n - 1)
            fc_intensity = fc.sum(axis=1) / n
            samples.append(
                SubjectSample(
                    structural_volume=Tensor(_splat_volume(sc_intensity, atlas, spec)),
                    functional_volume=Tensor(_splat_volume(fc_intensity, atlas, spec)),
                    sc=ConnectivityMatrix(Tensor(sc), "SC"),
                    fc=ConnectivityMatrix(Tensor(fc), "FC"),
                    label=label,
                )
            )
    return samples, atlas


def validate_sample(sample: SubjectSample) -> None:
    """Assert the structural/functional matrix contracts."""
    sc, fc = sample.sc.data, sample.fc.data
    if not np.allclose(sc, sc.T):
        raise ConfigError("structural matrix is not symmetric")
    if np.any(sc < 0):
        raise ConfigError("structural matrix has negative entries")
    if np.any(np.diag(sc) != 0):
        raise ConfigError("structural matrix has a nonzero diagonal")
    if not np.allclose(fc, fc.T):
        raise ConfigError("functional matrix is not symmetric")
    if np.any(np.diag(fc) != 1.0):
        raise ConfigError("functional matrix diagonal must be exactly 1")
    off = fc[~np.eye(fc.shape[0], dtype=bool)]
    if np.any(off < -1.0) or np.any(off > 1.0):
        raise ConfigError("functional off-diagonals outside [-1, 1]")


def kfold_split(
    samples: list[SubjectSample], k: int, seed: int
) -> list[tuple[list[int], list[int]]]:
    """Label-stratified k-fold partitions as (train_indices, test_indices) pairs."""
    if k < 2:
        raise SplitError(f"k-fold needs k >= 2, got {k}")
    by_class: dict[int, list[int]] = {}
    for idx, s in enumerate(samples):
        by_class.setdefault(s.label, []).append(idx)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < k:
            raise SplitError(f"class {label} has {len(members)} samples, fewer than k={k}")
        order = rng.permutation(len(members))
        for pos, m in enumerate(order):
            folds[pos % k].append(members[m])
    splits = []
    for i in range(k):
        test = sorted(folds[i])
        train = sorted(idx for j, fold in enumerate(folds) if j != i for idx in fold)
        splits.append((train, test))
    return splits
