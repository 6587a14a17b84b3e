"""Dataset manifests: phantom generation to disk, k-fold splits, loading.

A dataset directory holds one ``manifest.json`` plus two ``.vol`` files per
sample.  Generation is idempotent: the same configuration always produces
byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .phantom import generate_phantom_pair
from .seeds import derive_seed
from .volume import Volume, load_volume, volume_to_bytes

__all__ = [
    "DatasetManifest",
    "SampleRef",
    "split_dataset",
    "generate_dataset",
    "load_manifest",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA = "1"

SPLIT_NAMES = ("train", "val", "test")

# Fold-count pattern for train/val/test, generalizing the 7:1:2 split.
_SPLIT_RATIO = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class SampleRef:
    """File references and provenance for one stored sample pair."""

    subject_id: str
    seed: int
    source: str
    target: str


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[SampleRef, ...]
    split: dict[str, list[int]]
    generator_params: dict
    global_seed: int
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        indices = sorted(i for name in SPLIT_NAMES for i in self.split.get(name, []))
        if indices != list(range(len(self.samples))):
            raise ValueError("split lists must partition the sample indices")

    def indices(self, split: str) -> list[int]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}, expected one of {SPLIT_NAMES}")
        return list(self.split[split])

    def load_pair(self, index: int) -> tuple[Volume, Volume]:
        if self.root is None:
            raise ValueError("manifest has no root directory; load it from disk first")
        ref = self.samples[index]
        return load_volume(self.root / ref.source), load_volume(self.root / ref.target)


def split_dataset(n: int, folds: int, fold_index: int, seed: int) -> dict[str, list[int]]:
    """Partition {0..n-1} into train/val/test via seeded folds.

    The indices are permuted with ``seed``, chunked into ``folds`` nearly
    equal folds, and the folds are assigned to test/val/train in a rotation
    controlled by ``fold_index``.  Fold counts follow the 7:1:2 pattern at
    10 folds and scale proportionally otherwise (at least one fold each).
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if not 0 <= fold_index < folds:
        raise ValueError(f"fold_index must be in [0, {folds}), got {fold_index}")
    if n < folds:
        raise ValueError(f"need at least one sample per fold, got n={n} < folds={folds}")

    import numpy as np

    perm = np.random.default_rng(derive_seed(seed, "split", n, folds)).permutation(n)
    fold_lists = [list(map(int, chunk)) for chunk in np.array_split(perm, folds)]

    n_test = max(1, round(_SPLIT_RATIO[2] * folds))
    n_val = max(1, round(_SPLIT_RATIO[1] * folds))
    if n_test + n_val >= folds:
        # At two folds there is no room for a validation fold.
        n_test, n_val = 1, 0
    roles = {}
    for offset in range(folds):
        fold = (fold_index + offset) % folds
        if offset < n_test:
            roles[fold] = "test"
        elif offset < n_test + n_val:
            roles[fold] = "val"
        else:
            roles[fold] = "train"

    split = {name: [] for name in SPLIT_NAMES}
    for fold, members in enumerate(fold_lists):
        split[roles[fold]].extend(members)
    for name in SPLIT_NAMES:
        split[name].sort()
    return split


def _manifest_bytes(manifest: DatasetManifest) -> bytes:
    doc = {
        "schema_version": MANIFEST_SCHEMA,
        "global_seed": manifest.global_seed,
        "generator_params": manifest.generator_params,
        "samples": [
            {
                "subject_id": s.subject_id,
                "seed": s.seed,
                "source": s.source,
                "target": s.target,
            }
            for s in manifest.samples
        ],
        "split": {name: manifest.split[name] for name in SPLIT_NAMES},
    }
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


class OutputConflictError(RuntimeError):
    """An output file exists with different contents and --force is not set."""


def _write_exact(path: Path, payload: bytes, force: bool) -> None:
    if path.exists():
        if path.read_bytes() == payload:
            return
        if not force:
            raise OutputConflictError(
                f"{path} exists with different contents; pass --force to overwrite"
            )
    path.write_bytes(payload)


def generate_dataset(
    out_dir: str | os.PathLike,
    n_samples: int,
    shape: tuple[int, int, int],
    structure_count: int,
    seed: int,
    folds: int = 10,
    fold_index: int = 0,
    force: bool = False,
) -> DatasetManifest:
    """Write ``n_samples`` phantom pairs plus a manifest under ``out_dir``."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    refs = []
    for i in range(n_samples):
        sample_seed = derive_seed(seed, "sample", i)
        pair = generate_phantom_pair(sample_seed, shape, structure_count)
        src_name = f"s{i:04d}_src.vol"
        tgt_name = f"s{i:04d}_tgt.vol"
        _write_exact(root / src_name, volume_to_bytes(pair.source), force)
        _write_exact(root / tgt_name, volume_to_bytes(pair.target), force)
        refs.append(
            SampleRef(subject_id=pair.subject_id, seed=sample_seed, source=src_name, target=tgt_name)
        )

    manifest = DatasetManifest(
        samples=tuple(refs),
        split=split_dataset(n_samples, folds, fold_index, seed),
        generator_params={
            "n_samples": n_samples,
            "shape": list(shape),
            "structure_count": structure_count,
            "folds": folds,
            "fold_index": fold_index,
        },
        global_seed=seed,
        root=root,
    )
    _write_exact(root / MANIFEST_NAME, _manifest_bytes(manifest), force)
    return manifest


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Load a manifest from a file or from a dataset directory."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.exists():
        raise FileNotFoundError(f"no manifest at {p}")
    doc = json.loads(p.read_text("utf-8"))
    if doc.get("schema_version") != MANIFEST_SCHEMA:
        raise ValueError(f"unsupported manifest schema {doc.get('schema_version')!r}")
    refs = tuple(
        SampleRef(
            subject_id=s["subject_id"],
            seed=int(s["seed"]),
            source=s["source"],
            target=s["target"],
        )
        for s in doc["samples"]
    )
    return DatasetManifest(
        samples=refs,
        split={name: list(map(int, doc["split"][name])) for name in SPLIT_NAMES},
        generator_params=doc["generator_params"],
        global_seed=int(doc["global_seed"]),
        root=p.parent,
    )
