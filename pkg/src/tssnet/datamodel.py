"""Concentration-to-class mapping, dataset manifests, splits, and preprocessing.

Class boundaries: the characterized sample ranges are 40-70 mg/L (low),
80-400 mg/L (medium) and 500-6000 mg/L (high), which leaves the intervals
(70, 80) and (400, 500) unassigned.  We close the gaps at their midpoints:
concentrations up to and including 75 mg/L are low, up to and including
450 mg/L are medium, and anything above (up to the 20000 mg/L domain limit)
is high.  Models shipped here are only trained on concentrations up to
6000 mg/L; higher values still map to "high" but are outside the
characterized range.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import cv2
import numpy as np

from .errors import OutOfDomainError, ParameterError, ValidationError
from .seeding import derive_rng

logger = logging.getLogger(__name__)

LOW_MAX_MG_PER_L = 75.0
MEDIUM_MAX_MG_PER_L = 450.0
DOMAIN_MAX_MG_PER_L = 20000.0
CHARACTERIZED_MAX_MG_PER_L = 6000.0

MANIFEST_HEADER = ("id", "path", "concentration_mg_per_l", "class", "split")
SPLIT_VALUES = ("train", "val", "")  # "" means unassigned


class ClassLabel(Enum):
    """The three pollution levels, ordered high, medium, low."""

    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"

    @property
    def code(self) -> int:
        """Integer code used in reports: high=1, medium=2, low=3."""
        return {ClassLabel.HIGH: 1, ClassLabel.MEDIUM: 2, ClassLabel.LOW: 3}[self]

    @property
    def index(self) -> int:
        """Zero-based position in CLASS_ORDER (array/logit index)."""
        return CLASS_ORDER.index(self)

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ParameterError(f"unknown class name {name!r}; expected one of "
                                 f"{[c.value for c in cls]}") from None


CLASS_ORDER: tuple[ClassLabel, ...] = (ClassLabel.HIGH, ClassLabel.MEDIUM, ClassLabel.LOW)
CLASS_NAMES: tuple[str, ...] = tuple(c.value for c in CLASS_ORDER)

# Concentration ranges the physical samples were prepared in, per class.
SAMPLE_RANGES: dict[ClassLabel, tuple[float, float]] = {
    ClassLabel.LOW: (40.0, 70.0),
    ClassLabel.MEDIUM: (80.0, 400.0),
    ClassLabel.HIGH: (500.0, 6000.0),
}


def label_from_concentration(concentration: float) -> ClassLabel:
    """Map a TSS concentration in mg/L to its pollution class.

    Low covers (0, 75], medium (75, 450], high (450, 20000].  Values at or
    below zero or above 20000 mg/L are rejected as out of domain.
    """
    c = float(concentration)
    if not math.isfinite(c) or c <= 0.0:
        raise OutOfDomainError(f"concentration must be a positive finite mg/L value, got {concentration!r}")
    if c > DOMAIN_MAX_MG_PER_L:
        raise OutOfDomainError(
            f"concentration {c} mg/L exceeds the {DOMAIN_MAX_MG_PER_L:.0f} mg/L domain limit")
    if c <= LOW_MAX_MG_PER_L:
        return ClassLabel.LOW
    if c <= MEDIUM_MAX_MG_PER_L:
        return ClassLabel.MEDIUM
    return ClassLabel.HIGH


@dataclass
class ImageRecord:
    """A single image with provenance and optional ground truth."""

    pixels: np.ndarray  # H x W x 3 uint8
    sample_id: str | None = None
    frame_index: int | None = None
    concentration: float | None = None
    label: ClassLabel | None = None


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: str
    concentration: float
    label: ClassLabel
    split: str = ""  # "train", "val" or "" (unassigned)


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered image list with concentrations, labels and split assignment."""

    rows: tuple[ManifestRow, ...]
    root: Path = Path(".")

    def __post_init__(self):
        paths = [r.path for r in self.rows]
        if len(set(paths)) != len(paths):
            dupes = sorted({p for p in paths if paths.count(p) > 1})
            raise ValidationError(f"duplicate paths in manifest: {dupes[:5]}")
        for r in self.rows:
            if r.split not in SPLIT_VALUES:
                raise ValidationError(f"row {r.id!r} has invalid split {r.split!r}")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def class_counts(self) -> dict[ClassLabel, int]:
        counts = {label: 0 for label in CLASS_ORDER}
        for r in self.rows:
            counts[r.label] += 1
        return counts

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest(tuple(r for r in self.rows if r.split == split), self.root)

    def image_path(self, row: ManifestRow) -> Path:
        p = Path(row.path)
        return p if p.is_absolute() else self.root / p

    def write_csv(self, path: str | os.PathLike) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(MANIFEST_HEADER)
            for r in self.rows:
                writer.writerow([r.id, r.path, repr(r.concentration), r.label.value, r.split])
        os.replace(tmp, path)

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        rows = []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = set(MANIFEST_HEADER) - set(reader.fieldnames or [])
            if missing:
                raise ValidationError(f"manifest {path} is missing columns {sorted(missing)}")
            for rec in reader:
                rows.append(ManifestRow(
                    id=rec["id"],
                    path=rec["path"],
                    concentration=float(rec["concentration_mg_per_l"]),
                    label=ClassLabel.from_name(rec["class"]),
                    split=rec["split"],
                ))
        return cls(tuple(rows), root=path.parent)


def build_manifest(image_dir: str | os.PathLike, labels_csv: str | os.PathLike) -> DatasetManifest:
    """Assemble a manifest from an image directory and a labels CSV.

    Labels are recomputed from the concentration column and cross-checked
    against the CSV's class column when present.  Every referenced image
    must exist.
    """
    image_dir = Path(image_dir)
    rows: list[ManifestRow] = []
    missing_files: list[str] = []
    mismatched: list[str] = []
    over_characterized = 0

    with open(labels_csv, newline="") as f:
        reader = csv.DictReader(f)
        fields = set(reader.fieldnames or [])
        if "path" not in fields or "concentration_mg_per_l" not in fields:
            raise ValidationError(
                f"labels CSV {labels_csv} needs at least 'path' and 'concentration_mg_per_l' columns")
        for rec in reader:
            rel = rec["path"]
            concentration = float(rec["concentration_mg_per_l"])
            label = label_from_concentration(concentration)
            if concentration > CHARACTERIZED_MAX_MG_PER_L:
                over_characterized += 1
            if rec.get("class"):
                stated = ClassLabel.from_name(rec["class"])
                if stated is not label:
                    mismatched.append(f"{rel}: concentration {concentration} maps to "
                                      f"{label.value!r} but CSV says {stated.value!r}")
            if not (image_dir / rel).is_file():
                missing_files.append(str(image_dir / rel))
            row_id = rec.get("id") or Path(rel).stem
            rows.append(ManifestRow(id=row_id, path=rel, concentration=concentration,
                                    label=label, split=rec.get("split", "")))

    if missing_files:
        raise ValidationError(f"{len(missing_files)} referenced images do not exist: {missing_files}")
    if mismatched:
        raise ValidationError("label column contradicts concentration mapping:\n  "
                              + "\n  ".join(mismatched))
    if over_characterized:
        logger.warning("%d rows exceed the characterized 6000 mg/L range; models shipped "
                       "here were trained only up to 6000 mg/L", over_characterized)
    return DatasetManifest(tuple(rows), root=image_dir)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stratified_val_counts(class_counts: list[int], val_fraction: float) -> list[int]:
    """round(count * fraction) per class, nudged so the total matches
    round(N * fraction); adjustment goes to the classes with the largest
    fractional residuals."""
    targets = [c * val_fraction for c in class_counts]
    counts = [_round_half_up(t) for t in targets]
    total_target = _round_half_up(sum(class_counts) * val_fraction)
    residuals = [t - c for t, c in zip(targets, counts)]
    while sum(counts) < total_target:
        i = max(range(len(counts)), key=lambda j: (residuals[j], -j))
        counts[i] += 1
        residuals[i] -= 1.0
    while sum(counts) > total_target:
        i = min(range(len(counts)), key=lambda j: (residuals[j], j))
        counts[i] -= 1
        residuals[i] += 1.0
    # never empty a class's train side
    return [min(c, n - 1) if n > 1 else 0 for c, n in zip(counts, class_counts)]


def split_manifest(manifest: DatasetManifest, val_fraction: float = 0.1,
                   strategy: str = "stratified_random", seed: int = 0) -> DatasetManifest:
    """Assign every row to train or val.

    ``stratified_random`` draws per-class validation rows so that per-class
    counts are round(class_count * val_fraction), adjusted so the total
    equals round(N * val_fraction).  ``grouped_by_sample`` keeps all frames
    that share a concentration value (one physical sample) in one split.
    Deterministic under ``seed``.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ParameterError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if strategy not in ("stratified_random", "grouped_by_sample"):
        raise ParameterError(f"unknown split strategy {strategy!r}")
    if any(r.split for r in manifest.rows):
        raise ValidationError("manifest already has split assignments; refusing to resplit")
    counts = manifest.class_counts
    empty = [label.value for label in CLASS_ORDER if counts[label] == 0]
    if empty:
        raise ValidationError(f"classes with zero rows cannot be split: {empty}")

    by_class: dict[ClassLabel, list[int]] = {label: [] for label in CLASS_ORDER}
    for i, r in enumerate(manifest.rows):
        by_class[r.label].append(i)

    val_indices: set[int] = set()
    targets = _stratified_val_counts([counts[label] for label in CLASS_ORDER], val_fraction)

    for label, n_val in zip(CLASS_ORDER, targets):
        rng = derive_rng(seed, label.code)
        indices = by_class[label]
        if strategy == "stratified_random":
            chosen = rng.permutation(len(indices))[:n_val]
            val_indices.update(indices[j] for j in chosen)
        else:
            groups: dict[float, list[int]] = {}
            for i in indices:
                groups.setdefault(manifest.rows[i].concentration, []).append(i)
            keys = sorted(groups)
            if len(keys) == 1:
                warnings.warn(f"class {label.value!r} has a single sample group; "
                              f"all its frames stay in train", stacklevel=2)
                continue
            order = rng.permutation(len(keys))
            taken = 0
            for j in order:
                if taken >= n_val:
                    break
                group = groups[keys[j]]
                if taken + len(group) >= len(indices):  # would empty this class's train side
                    continue
                val_indices.update(group)
                taken += len(group)

    new_rows = tuple(replace(r, split="val" if i in val_indices else "train")
                     for i, r in enumerate(manifest.rows))
    return DatasetManifest(new_rows, manifest.root)


# Channel statistics conventionally shipped with the pretrained backbone weights.
IMAGENET_MEANS = (0.485, 0.456, 0.406)
IMAGENET_STDS = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessSpec:
    """Resize + scale + per-channel standardization applied before the network."""

    resize_side: int = 224
    channel_means: tuple[float, float, float] = IMAGENET_MEANS
    channel_stds: tuple[float, float, float] = IMAGENET_STDS
    scale_to_unit: bool = True

    def __post_init__(self):
        if self.resize_side <= 0:
            raise ParameterError(f"resize_side must be positive, got {self.resize_side}")
        if len(self.channel_means) != 3 or len(self.channel_stds) != 3:
            raise ParameterError("channel_means and channel_stds must have 3 entries")
        if any(s <= 0 for s in self.channel_stds):
            raise ParameterError(f"channel_stds must be strictly positive, got {self.channel_stds}")

    def to_dict(self) -> dict:
        return {"resize_side": self.resize_side,
                "channel_means": list(self.channel_means),
                "channel_stds": list(self.channel_stds),
                "scale_to_unit": self.scale_to_unit}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessSpec":
        return cls(resize_side=int(d["resize_side"]),
                   channel_means=tuple(float(x) for x in d["channel_means"]),
                   channel_stds=tuple(float(x) for x in d["channel_stds"]),
                   scale_to_unit=bool(d["scale_to_unit"]))


def preprocess_for_network(image: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """8-bit RGB image -> float32 3xSxS array, bilinear-resized and standardized."""
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        raise ParameterError(f"expected an HxWx3 image array, got shape "
                             f"{getattr(image, 'shape', None)}")
    if image.dtype != np.uint8:
        raise ParameterError(f"expected an 8-bit image, got dtype {image.dtype}")
    side = spec.resize_side
    if image.shape[0] != side or image.shape[1] != side:
        resized = cv2.resize(image, (side, side), interpolation=cv2.INTER_LINEAR)
    else:
        resized = image
    x = resized.astype(np.float32)
    if spec.scale_to_unit:
        x /= 255.0
    means = np.asarray(spec.channel_means, dtype=np.float32)
    stds = np.asarray(spec.channel_stds, dtype=np.float32)
    x = (x - means) / stds
    return np.ascontiguousarray(x.transpose(2, 0, 1))


@dataclass
class ManifestDataset:
    """Lazy batch loader over one split of a manifest.

    Images are read and preprocessed per requested batch, so the full
    dataset never has to fit in memory.
    """

    manifest: DatasetManifest
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)

    def __len__(self) -> int:
        return len(self.manifest)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label.index for r in self.manifest.rows], dtype=np.int64)

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        from PIL import Image

        xs = []
        ys = []
        for i in indices:
            row = self.manifest.rows[int(i)]
            with Image.open(self.manifest.image_path(row)) as im:
                pixels = np.asarray(im.convert("RGB"))
            xs.append(preprocess_for_network(pixels, self.preprocess))
            ys.append(row.label.index)
        return np.stack(xs), np.array(ys, dtype=np.int64)
