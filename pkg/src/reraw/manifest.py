"""Dataset manifest: paired RGB/raw images, sensor profile, train/test split.

The manifest is a versioned YAML file living at the root of a dataset
directory; all paths inside it are relative to that directory. The split
assignment is seeded and stored so it never recomputes differently.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import InputError
from .imaging import SensorProfile

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.yaml"


@dataclass
class PairRecord:
    image_id: str
    rgb_path: str
    raw_path: str
    width: int
    height: int
    split: str = "train"


@dataclass
class DatasetManifest:
    sensor: SensorProfile
    pairs: list[PairRecord]
    split_seed: int = 0
    root: Path = Path(".")
    version: int = MANIFEST_VERSION

    def pairs_for_split(self, split: str | None) -> list[PairRecord]:
        if split is None:
            return list(self.pairs)
        return [p for p in self.pairs if p.split == split]

    def rgb_file(self, pair: PairRecord) -> Path:
        return self.root / pair.rgb_path

    def raw_file(self, pair: PairRecord) -> Path:
        return self.root / pair.raw_path


def assign_splits(image_ids: list[str], seed: int, test_fraction: float = 0.2) -> dict[str, str]:
    """Image-level 80/20 split, deterministic in (ids, seed)."""
    rng = np.random.default_rng(seed)
    order = list(image_ids)
    rng.shuffle(order)
    n_test = int(round(len(order) * test_fraction))
    test = set(order[:n_test])
    return {i: ("test" if i in test else "train") for i in image_ids}


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "version": manifest.version,
        "sensor": manifest.sensor.to_dict(),
        "split_seed": int(manifest.split_seed),
        "pairs": [
            {
                "image_id": p.image_id,
                "rgb": p.rgb_path,
                "raw": p.raw_path,
                "width": int(p.width),
                "height": int(p.height),
                "split": p.split,
            }
            for p in manifest.pairs
        ],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or "pairs" not in doc or "sensor" not in doc:
        raise InputError(f"{path} is not a dataset manifest")
    version = int(doc.get("version", 0))
    if version != MANIFEST_VERSION:
        raise InputError(f"unsupported manifest version {version} in {path}")
    sensor = SensorProfile.from_dict(doc["sensor"])
    pairs = [
        PairRecord(
            image_id=str(e["image_id"]),
            rgb_path=str(e["rgb"]),
            raw_path=str(e["raw"]),
            width=int(e["width"]),
            height=int(e["height"]),
            split=str(e.get("split", "train")),
        )
        for e in doc["pairs"]
    ]
    ids = [p.image_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate image ids in {path}")
    return DatasetManifest(
        sensor=sensor,
        pairs=pairs,
        split_seed=int(doc.get("split_seed", 0)),
        root=path.parent,
        version=version,
    )
