"""File formats: CSV matrices, dataset directories, checkpoints, reports.

Matrices are header-free comma-separated values printed with 17
significant digits so every float64 round-trips exactly.  Checkpoints are
one little-endian float64 binary file per named parameter plus a JSON
index of names to shapes, which keeps partial loads trivial.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .analysis import Edge
from .autodiff import Tensor
from .data import ConnectivityMatrix, DatasetSpec, RoiAtlas, SubjectSample
from .errors import ConfigError

MATRIX_FMT = "%.17g"


# ---------------------------------------------------------------------------
# matrices and small CSV reports
# ---------------------------------------------------------------------------


def write_matrix_csv(path: Path | str, matrix: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(matrix), fmt=MATRIX_FMT, delimiter=",")


def read_matrix_csv(path: Path | str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def write_atlas_csv(path: Path | str, atlas: RoiAtlas) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,z,v\n")
        for i in range(atlas.n_rois):
            fh.write(
                ",".join(
                    MATRIX_FMT % value
                    for value in (atlas.x[i], atlas.y[i], atlas.z[i], atlas.v[i])
                )
                + "\n"
            )


def read_atlas_csv(path: Path | str) -> RoiAtlas:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return RoiAtlas(x=raw[:, 0], y=raw[:, 1], z=raw[:, 2], v=raw[:, 3])


def write_edges_csv(path: Path | str, increased: list[Edge], decreased: list[Edge]) -> None:
    with open(path, "w") as fh:
        fh.write("roi_a,roi_b,strength,direction\n")
        for edges, direction in ((increased, "increased"), (decreased, "decreased")):
            for e in edges:
                fh.write(f"{e.roi_a},{e.roi_b},{MATRIX_FMT % e.strength},{direction}\n")


def read_edges_csv(path: Path | str) -> tuple[list[Edge], list[Edge]]:
    increased, decreased = [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            a, b, strength, direction = line.strip().split(",")
            edge = Edge(int(a), int(b), float(strength))
            (increased if direction == "increased" else decreased).append(edge)
    return increased, decreased


def write_importance_csv(path: Path | str, scores: np.ndarray) -> None:
    order = np.argsort(-scores, kind="stable")
    rank = np.empty(len(scores), dtype=int)
    rank[order] = np.arange(1, len(scores) + 1)
    with open(path, "w") as fh:
        fh.write("roi_index,score,rank\n")
        for i, score in enumerate(scores):
            fh.write(f"{i},{MATRIX_FMT % score},{rank[i]}\n")


def write_curves_csv(path: Path | str, curves: list[dict]) -> None:
    from .training import CURVE_COLUMNS

    with open(path, "w") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for row in curves:
            fh.write(
                ",".join(
                    str(row["epoch"]) if col == "epoch" else MATRIX_FMT % row[col]
                    for col in CURVE_COLUMNS
                )
                + "\n"
            )


def write_json(path: Path | str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: Path | str) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# dataset directories
# ---------------------------------------------------------------------------

SUBJECT_FILES = ("sc", "fc", "dti", "fmri")


def save_dataset(
    out_dir: Path | str, samples: list[SubjectSample], atlas: RoiAtlas, spec: DatasetSpec
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_atlas_csv(out / "atlas.csv", atlas)
    subjects = []
    for idx, s in enumerate(samples):
        sub_id = f"sub{idx:03d}"
        sub_dir = out / sub_id
        sub_dir.mkdir(exist_ok=True)
        write_matrix_csv(sub_dir / "sc.csv", s.sc.data)
        write_matrix_csv(sub_dir / "fc.csv", s.fc.data)
        write_matrix_csv(sub_dir / "dti.csv", s.structural_volume.data[0])
        write_matrix_csv(sub_dir / "fmri.csv", s.functional_volume.data[0])
        subjects.append(
            {
                "id": sub_id,
                "label": s.label,
                "files": {name: f"{sub_id}/{name}.csv" for name in SUBJECT_FILES},
            }
        )
    manifest = {
        "spec": dataclasses.asdict(spec),
        "class_names": spec.resolved_class_names(),
        "n_rois": spec.n_rois,
        "atlas": "atlas.csv",
        "subjects": subjects,
    }
    write_json(out / "manifest.json", manifest)


def load_dataset(data_dir: Path | str) -> tuple[list[SubjectSample], RoiAtlas, dict]:
    root = Path(data_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json in {root}")
    manifest = read_json(manifest_path)
    atlas = read_atlas_csv(root / manifest["atlas"])
    samples = []
    for entry in manifest["subjects"]:
        files = entry["files"]
        samples.append(
            SubjectSample(
                structural_volume=Tensor(read_matrix_csv(root / files["dti"])[None, :, :]),
                functional_volume=Tensor(read_matrix_csv(root / files["fmri"])[None, :, :]),
                sc=ConnectivityMatrix(Tensor(read_matrix_csv(root / files["sc"])), "SC"),
                fc=ConnectivityMatrix(Tensor(read_matrix_csv(root / files["fc"])), "FC"),
                label=int(entry["label"]),
            )
        )
    return samples, atlas, manifest


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(out_dir: Path | str, params: dict[str, Tensor]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {}
    for name in sorted(params):
        data = params[name].data
        filename = f"{name}.bin"
        with open(out / filename, "wb") as fh:
            fh.write(data.astype("<f8").tobytes())
        index[name] = {"shape": list(data.shape), "file": filename}
    write_json(out / "index.json", {"params": index})


def load_checkpoint(ckpt_dir: Path | str) -> dict[str, np.ndarray]:
    root = Path(ckpt_dir)
    index = read_json(root / "index.json")["params"]
    arrays = {}
    for name, meta in index.items():
        raw = np.fromfile(root / meta["file"], dtype="<f8")
        arrays[name] = raw.reshape(meta["shape"]).astype(np.float64)
    return arrays


def apply_checkpoint(params: dict[str, Tensor], arrays: dict[str, np.ndarray], partial: bool = False) -> None:
    """Copy checkpoint arrays into live parameters, validating names and shapes."""
    if not partial:
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ConfigError(f"checkpoint mismatch: missing={missing[:3]} extra={extra[:3]}")
    for name, tensor in params.items():
        if name not in arrays:
            continue
        if tuple(arrays[name].shape) != tensor.data.shape:
            raise ConfigError(
                f"checkpoint {name} has shape {arrays[name].shape}, expected {tensor.data.shape}"
            )
        tensor.data[...] = arrays[name]
