"""Deterministic renderer of laterally illuminated suspended-solids images.

The optical model is intentionally simple: a dark background plus one soft
Gaussian bright blob per suspended particle (lateral light scattered toward
the camera), with the particle count Poisson-distributed around
``particle_coefficient * concentration``, plus i.i.d. Gaussian sensor noise,
clipped to 8 bits.  More particles scatter more light, so expected mean
luminance increases strictly with concentration, which is the one physical
signal the classifier needs.  No attempt is made to match the radiometry of
any particular lab rig.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .datamodel import (
    CHARACTERIZED_MAX_MG_PER_L,
    CLASS_ORDER,
    DOMAIN_MAX_MG_PER_L,
    SAMPLE_RANGES,
    ClassLabel,
    DatasetManifest,
    ImageRecord,
    ManifestRow,
    label_from_concentration,
)
from .errors import ParameterError
from .seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines one rendered image, including the seed."""

    concentration: float
    image_size: int = 450
    particle_coefficient: float = 0.5  # expected particles per mg/L
    base_luminance: float = 0.08
    scatter_gain: float = 0.25
    blob_sigma_range: tuple[float, float] = (1.0, 3.0)
    noise_sigma: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if not np.isfinite(self.concentration) or self.concentration < 0:
            raise ParameterError(f"concentration: must be >= 0 mg/L, got {self.concentration}")
        if self.image_size < 16:
            raise ParameterError(f"image_size: must be >= 16 pixels, got {self.image_size}")
        if self.particle_coefficient <= 0:
            raise ParameterError(f"particle_coefficient: must be > 0, got {self.particle_coefficient}")
        if not 0.0 <= self.base_luminance <= 1.0:
            raise ParameterError(f"base_luminance: must be in [0, 1], got {self.base_luminance}")
        if not 0.0 <= self.scatter_gain <= 1.0:
            raise ParameterError(f"scatter_gain: must be in [0, 1], got {self.scatter_gain}")
        lo, hi = self.blob_sigma_range
        if not 0 < lo <= hi:
            raise ParameterError(f"blob_sigma_range: need 0 < min <= max, got {self.blob_sigma_range}")
        if not 0.0 <= self.noise_sigma <= 1.0:
            raise ParameterError(f"noise_sigma: must be in [0, 1], got {self.noise_sigma}")

    def to_dict(self) -> dict:
        return {"concentration": self.concentration, "image_size": self.image_size,
                "particle_coefficient": self.particle_coefficient,
                "base_luminance": self.base_luminance, "scatter_gain": self.scatter_gain,
                "blob_sigma_range": list(self.blob_sigma_range),
                "noise_sigma": self.noise_sigma, "seed": self.seed}


def render_sample_image(spec: SceneSpec) -> ImageRecord:
    """Render one simulated water-sample image.

    Bit-identical output for identical specs.  Draw order per image: blob
    count (Poisson), then x positions, y positions, sigmas, then the noise
    field; the grayscale scene is replicated across the three channels.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    canvas = np.full((size, size), spec.base_luminance, dtype=np.float64)

    n_blobs = int(rng.poisson(spec.particle_coefficient * spec.concentration))
    if n_blobs:
        xs = rng.uniform(0.0, size, n_blobs)
        ys = rng.uniform(0.0, size, n_blobs)
        lo, hi = spec.blob_sigma_range
        sigmas = rng.uniform(lo, hi, n_blobs)
        for x, y, sigma in zip(xs, ys, sigmas):
            radius = int(np.ceil(3.0 * sigma))
            x0, x1 = max(0, int(x) - radius), min(size, int(x) + radius + 1)
            y0, y1 = max(0, int(y) - radius), min(size, int(y) + radius + 1)
            yy, xx = np.mgrid[y0:y1, x0:x1]
            canvas[y0:y1, x0:x1] += spec.scatter_gain * np.exp(
                -((xx - x) ** 2 + (yy - y) ** 2) / (2.0 * sigma * sigma))

    if spec.noise_sigma > 0:
        canvas += rng.normal(0.0, spec.noise_sigma, (size, size))

    gray = np.clip(np.rint(np.clip(canvas, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    pixels = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
    in_domain = 0.0 < spec.concentration <= DOMAIN_MAX_MG_PER_L
    return ImageRecord(pixels=pixels, concentration=spec.concentration,
                       label=label_from_concentration(spec.concentration) if in_domain else None)


def uniform_concentration_sampler(label: ClassLabel, rng: np.random.Generator) -> float:
    """Default sampler: uniform over the class's prepared sample range."""
    lo, hi = SAMPLE_RANGES[label]
    return float(rng.uniform(lo, hi))


@dataclass(frozen=True)
class SyntheticBatchPlan:
    """How many images per class to render and how to draw concentrations."""

    per_class_counts: Mapping[ClassLabel, int]
    seed: int = 0
    concentration_sampler: Callable[[ClassLabel, np.random.Generator], float] = \
        uniform_concentration_sampler
    base_scene: SceneSpec = field(default_factory=lambda: SceneSpec(concentration=0.0))

    def validate(self) -> None:
        for label, count in self.per_class_counts.items():
            if not isinstance(label, ClassLabel):
                raise ParameterError(f"per_class_counts: key {label!r} is not a ClassLabel")
            if count < 0:
                raise ParameterError(f"per_class_counts: count for {label.value!r} must be >= 0, got {count}")


def generate_dataset(plan: SyntheticBatchPlan, out_dir: str | Path) -> DatasetManifest:
    """Render the planned images into ``out_dir`` and write manifest.csv.

    One PNG per image, named ``<class>_<index>.png``; concentrations and the
    per-image render seed are derived from (plan.seed, global index), so the
    output is identical no matter how rendering is scheduled.
    """
    from PIL import Image

    plan.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as e:
        raise OSError(f"output directory {out_dir} is not writable: {e}") from e

    rows: list[ManifestRow] = []
    index = 0
    for label in CLASS_ORDER:
        for _ in range(int(plan.per_class_counts.get(label, 0))):
            conc_rng = derive_rng(plan.seed, index, 0)
            concentration = plan.concentration_sampler(label, conc_rng)
            if label_from_concentration(concentration) is not label:
                raise ParameterError(
                    f"concentration sampler produced {concentration} mg/L, which maps to "
                    f"{label_from_concentration(concentration).value!r}, not {label.value!r}")
            spec = SceneSpec(
                concentration=concentration,
                image_size=plan.base_scene.image_size,
                particle_coefficient=plan.base_scene.particle_coefficient,
                base_luminance=plan.base_scene.base_luminance,
                scatter_gain=plan.base_scene.scatter_gain,
                blob_sigma_range=plan.base_scene.blob_sigma_range,
                noise_sigma=plan.base_scene.noise_sigma,
                seed=derive_seed(plan.seed, index, 1),
            )
            record = render_sample_image(spec)
            name = f"{label.value}_{index:05d}.png"
            Image.fromarray(record.pixels).save(out_dir / name)
            rows.append(ManifestRow(id=f"{label.value}_{index:05d}", path=name,
                                    concentration=concentration, label=label, split=""))
            index += 1

    if not rows:
        logger.warning("plan produced zero images; writing an empty manifest")
    if any(r.concentration > CHARACTERIZED_MAX_MG_PER_L for r in rows):
        logger.warning("some concentrations exceed the characterized 6000 mg/L range")
    manifest = DatasetManifest(tuple(rows), root=out_dir)
    manifest.write_csv(out_dir / "manifest.csv")
    return manifest
