"""Video-to-image ingestion: frame extraction, blur filtering, center crop.

Decoding is delegated to anything that satisfies :class:`FrameDecoder`;
the shipped implementations are an OpenCV-backed file decoder and a
procedural :class:`SyntheticVideo` for fixtures.  Frames are sampled at
uniform timestamps k/rate and each timestamp takes the nearest decoded
frame at or before it (no interpolation), which keeps extraction
bit-stable across runs.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Protocol

import numpy as np

from .errors import IngestionError, ParameterError

# 3x3 Laplacian; replicate padding keeps the score invariant to adding a
# constant to all pixels while still scoring every pixel position.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class VideoSource:
    """Metadata for one recorded sample video."""

    path: str
    duration_s: float
    native_fps: float
    frame_size: tuple[int, int]  # (width, height)

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ParameterError(f"duration_s must be > 0, got {self.duration_s}")
        if self.native_fps <= 0:
            raise ParameterError(f"native_fps must be > 0, got {self.native_fps}")
        if any(d <= 0 for d in self.frame_size):
            raise ParameterError(f"frame_size must be positive, got {self.frame_size}")


@dataclass
class FrameRecord:
    sample_id: str
    frame_index: int
    timestamp_s: float
    pixels: np.ndarray  # H x W x 3 uint8
    blur_score: float | None = None


class FrameDecoder(Protocol):
    """Narrow decoding interface the pipeline depends on."""

    @property
    def source(self) -> VideoSource: ...

    def frame_at(self, timestamp_s: float) -> np.ndarray: ...


class SyntheticVideo:
    """Procedural decoder for tests and fixtures: frame k = pattern(k)."""

    def __init__(self, duration_s: float, native_fps: float = 30.0,
                 frame_size: tuple[int, int] = (64, 48),
                 pattern: Callable[[int], np.ndarray] | None = None,
                 path: str = "<synthetic>"):
        self._source = VideoSource(path, duration_s, native_fps, frame_size)
        self._source.validate()
        self._pattern = pattern

    @property
    def source(self) -> VideoSource:
        return self._source

    def frame_at(self, timestamp_s: float) -> np.ndarray:
        index = int(math.floor(timestamp_s * self._source.native_fps + 1e-9))
        if self._pattern is not None:
            frame = np.asarray(self._pattern(index), dtype=np.uint8)
        else:
            w, h = self._source.frame_size
            frame = np.full((h, w, 3), (index * 7 + 11) % 256, dtype=np.uint8)
        return frame


class OpenCVVideoDecoder:
    """cv2.VideoCapture-backed decoder; frames returned as RGB uint8."""

    def __init__(self, path: str | os.PathLike):
        import cv2

        self._cv2 = cv2
        self._cap = cv2.VideoCapture(str(path))
        if not self._cap.isOpened():
            raise IngestionError(f"could not open video {path!r} (cv2.VideoCapture failed; "
                                 f"unsupported container or missing file)")
        fps = self._cap.get(cv2.CAP_PROP_FPS)
        n_frames = self._cap.get(cv2.CAP_PROP_FRAME_COUNT)
        width = int(self._cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(self._cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
        if fps <= 0 or n_frames <= 0:
            raise IngestionError(f"video {path!r}: decoder reports fps={fps}, "
                                 f"frames={n_frames}; cannot determine duration")
        self._n_frames = int(n_frames)
        self._source = VideoSource(str(path), duration_s=n_frames / fps,
                                   native_fps=fps, frame_size=(width, height))

    @property
    def source(self) -> VideoSource:
        return self._source

    def frame_at(self, timestamp_s: float) -> np.ndarray:
        index = int(math.floor(timestamp_s * self._source.native_fps + 1e-9))
        index = min(max(index, 0), self._n_frames - 1)
        self._cap.set(self._cv2.CAP_PROP_POS_FRAMES, index)
        ok, frame = self._cap.read()
        if not ok or frame is None:
            raise IngestionError(f"video {self._source.path!r}: failed to decode frame "
                                 f"{index} at t={timestamp_s:.3f}s")
        return self._cv2.cvtColor(frame, self._cv2.COLOR_BGR2RGB)

    def close(self) -> None:
        self._cap.release()


def open_video(path: str | os.PathLike) -> OpenCVVideoDecoder:
    return OpenCVVideoDecoder(path)


def extract_frames(decoder: FrameDecoder, rate_fps: float = 4.0,
                   sample_id: str | None = None) -> Iterator[FrameRecord]:
    """Yield floor(duration * rate) frames sampled at timestamps k/rate.

    Lazy: frames are decoded as the iterator is consumed, so long videos
    never have to be held in memory at once.
    """
    src = decoder.source
    src.validate()
    if rate_fps <= 0:
        raise ParameterError(f"rate_fps must be > 0, got {rate_fps}")
    if rate_fps > src.native_fps:
        raise ParameterError(f"rate_fps {rate_fps} exceeds native fps {src.native_fps} "
                             f"of {src.path!r}")
    if sample_id is None:
        sample_id = Path(src.path).stem
    n = int(math.floor(src.duration_s * rate_fps + 1e-9))
    for k in range(n):
        t = k / rate_fps
        yield FrameRecord(sample_id=sample_id, frame_index=k, timestamp_s=t,
                          pixels=decoder.frame_at(t))


def blur_score(image: np.ndarray) -> float:
    """Sharpness score: variance of the 3x3 Laplacian of the grayscale image.

    The image is converted with BT.601 luma weights, padded by edge
    replication (so constant offsets cancel), convolved with
    [[0,1,0],[1,-4,1],[0,1,0]] and the population variance of the response
    is returned.  Higher means sharper; a constant image scores 0.
    """
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise ParameterError(f"expected HxWx3 or HxW image, got shape {img.shape}")
        gray = img.astype(np.float64) @ np.array(_LUMA_WEIGHTS)
    elif img.ndim == 2:
        gray = img.astype(np.float64)
    else:
        raise ParameterError(f"expected HxWx3 or HxW image, got shape {img.shape}")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ParameterError(f"image must be at least 3x3, got {gray.shape}")
    p = np.pad(gray, 1, mode="edge")
    lap = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
    return float(np.var(lap))


def filter_blurred(frames, threshold: float) -> tuple[list[FrameRecord], list[FrameRecord]]:
    """Partition frames into (kept, dropped) by blur score >= threshold.

    Missing scores are computed and filled in; input order is preserved in
    both outputs.
    """
    if not (threshold >= 0):
        raise ParameterError(f"threshold must be >= 0, got {threshold}")
    kept: list[FrameRecord] = []
    dropped: list[FrameRecord] = []
    for frame in frames:
        if frame.blur_score is None:
            frame.blur_score = blur_score(frame.pixels)
        (kept if frame.blur_score >= threshold else dropped).append(frame)
    return kept, dropped


def center_crop(image: np.ndarray, side: int = 450) -> np.ndarray:
    """Central side x side crop with origin (floor((W-side)/2), floor((H-side)/2))."""
    img = np.asarray(image)
    if side <= 0:
        raise ParameterError(f"crop side must be positive, got {side}")
    h, w = img.shape[:2]
    if w < side or h < side:
        raise ParameterError(f"image {w}x{h} is smaller than crop side {side}")
    x0 = (w - side) // 2
    y0 = (h - side) // 2
    return img[y0:y0 + side, x0:x0 + side].copy()


FRAME_MANIFEST_HEADER = ("sample_id", "frame_index", "timestamp_s", "path", "blur_score", "kept")


def write_frame_manifest(path: str | os.PathLike, rows: list[dict]) -> None:
    """Write the per-frame ingest log (one row per extracted frame)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=FRAME_MANIFEST_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, path)
