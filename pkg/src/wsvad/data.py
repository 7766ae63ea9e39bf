"""Video feature samples: synthetic generation, uniform sampling, file I/O.

On-disk layout
--------------
Feature file (``.wsvf``)::

    b"WSVF" | version u32 | T_raw u32 | D u32 | T_raw*D float32, little-endian, row-major

Manifest (plain text, one video per line, ``#`` starts a comment)::

    id,label,relative/path.wsvf,frame_count,start:end;start:end

Intervals are half-open frame ranges and may be empty.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wsvad.errors import DataError
from wsvad.numcore import make_rng

FEATURE_MAGIC = b"WSVF"
FEATURE_VERSION = 1
SEGMENT_FRAMES = 16
_HEADER = struct.Struct("<4sIII")
MANIFEST_HEADER = "# id,label,path,frame_count,intervals"


@dataclass
class VideoSample:
    id: str
    features: np.ndarray
    label: int
    frame_count: int
    intervals: list[tuple[int, int]] = field(default_factory=list)

    @property
    def num_segments(self) -> int:
        return self.features.shape[0]

    def frame_labels(self) -> np.ndarray:
        out = np.zeros(self.frame_count, dtype=np.int64)
        for start, end in self.intervals:
            out[start:end] = 1
        return out


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 32
    train_per_class: int = 60
    test_per_class: int = 20
    min_frames: int = 320
    max_frames: int = 1600
    separation: float = 2.0
    noise: float = 1.0
    drift: float = 0.5
    offset: float = 0.0
    min_interval_frames: int = 96
    max_interval_frames: int = 480
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.train_per_class < 1 or self.test_per_class < 0:
            raise ValueError("need at least one training video per class")
        if not SEGMENT_FRAMES <= self.min_frames <= self.max_frames:
            raise ValueError(f"frame range must satisfy {SEGMENT_FRAMES} <= min <= max")
        if not SEGMENT_FRAMES <= self.min_interval_frames <= self.max_interval_frames:
            raise ValueError(f"interval range must satisfy {SEGMENT_FRAMES} <= min <= max")
        if min(self.separation, self.noise, self.drift, self.offset) < 0:
            raise ValueError("separation, noise, drift and offset must be non-negative")


def _validate_intervals(intervals, frame_count: int, label: int, where: str) -> None:
    if label == 0 and intervals:
        raise DataError(f"{where}: normal video has anomaly intervals")
    prev_end = 0
    for start, end in sorted(intervals):
        if not 0 <= start < end <= frame_count:
            raise DataError(f"{where}: interval [{start}, {end}) outside [0, {frame_count})")
        if start < prev_end:
            raise DataError(f"{where}: overlapping intervals")
        prev_end = end


def _place_intervals(rng: np.random.Generator, num_segments: int, cfg: SynthConfig) -> list[tuple[int, int]]:
    # one interval per equal-width zone keeps them disjoint; each zone keeps a normal segment
    count = int(rng.integers(1, 4))
    edges = np.linspace(0, num_segments, count + 1).astype(int)
    lo = cfg.min_interval_frames // SEGMENT_FRAMES
    hi = cfg.max_interval_frames // SEGMENT_FRAMES
    out = []
    for z0, z1 in zip(edges[:-1], edges[1:]):
        room = z1 - z0 - 1
        if room < 1:
            continue
        length = min(int(rng.integers(lo, hi + 1)), room)
        start = z0 + int(rng.integers(0, room - length + 1))
        out.append((start, start + length))
    return out


def _synth_video(
    rng: np.random.Generator,
    vid: str,
    label: int,
    mean_normal: np.ndarray,
    mean_abnormal: np.ndarray,
    cfg: SynthConfig,
) -> VideoSample:
    lo = -(-cfg.min_frames // SEGMENT_FRAMES)
    hi = cfg.max_frames // SEGMENT_FRAMES
    t = int(rng.integers(lo, hi + 1))
    seg_intervals = _place_intervals(rng, t, cfg) if label else []
    means = np.tile(mean_normal, (t, 1))
    for start, end in seg_intervals:
        means[start:end] = mean_abnormal
    direction = rng.normal(size=cfg.dim)
    direction /= np.linalg.norm(direction)
    period = rng.uniform(0.5, 2.0) * t
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = cfg.drift * np.sin(2.0 * np.pi * np.arange(t) / period + phase)
    feats = means + wave[:, None] * direction + cfg.noise * rng.normal(size=(t, cfg.dim))
    # round through float32 so in-memory data equals what the feature file stores
    feats = feats.astype(np.float32).astype(np.float64)
    intervals = [(s * SEGMENT_FRAMES, e * SEGMENT_FRAMES) for s, e in seg_intervals]
    return VideoSample(vid, feats, label, t * SEGMENT_FRAMES, intervals)


def generate_synthetic(cfg: SynthConfig) -> tuple[list[VideoSample], list[VideoSample]]:
    """Train and test sets with planted anomaly intervals.

    Every segment is ``class mean + slow sinusoidal drift + Gaussian noise``;
    anomalous segments use a mean ``separation`` away from the normal one.
    Training videos keep only their video-level label (intervals dropped).
    """
    cfg.validate()
    rng = make_rng(cfg.seed)
    v = rng.normal(size=cfg.dim)
    u = rng.normal(size=cfg.dim)
    mean_normal = cfg.offset * v / np.linalg.norm(v)
    mean_abnormal = mean_normal + cfg.separation * u / np.linalg.norm(u)

    def make(split: str, per_class: int) -> list[VideoSample]:
        videos = []
        for label in (0, 1):
            for i in range(per_class):
                vid = f"{split}_{'abnormal' if label else 'normal'}_{i:04d}"
                videos.append(_synth_video(rng, vid, label, mean_normal, mean_abnormal, cfg))
        return videos

    train = make("train", cfg.train_per_class)
    for v in train:
        v.intervals = []
    test = make("test", cfg.test_per_class)
    return train, test


def uniform_sample_segments(sample: VideoSample | np.ndarray, t: int) -> np.ndarray:
    """Rows ``floor(i * T_raw / t)`` for ``i < t``."""
    feats = sample.features if isinstance(sample, VideoSample) else np.asarray(sample)
    t_raw = feats.shape[0]
    if t < 1 or t_raw < 1:
        raise ValueError(f"need t >= 1 and at least one raw segment, got t={t}, T_raw={t_raw}")
    return feats[(np.arange(t) * t_raw) // t]


def write_features(path: Path, features: np.ndarray) -> None:
    f = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, f.shape[0], f.shape[1]))
        fh.write(f.tobytes())


def read_features(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read feature file ({exc.strerror})") from exc
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, t, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if t < 1 or d < 1 or len(raw) != _HEADER.size + 4 * t * d:
        raise DataError(f"{path}: payload size does not match header T={t}, D={d}")
    feats = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d).astype(np.float64)
    if not np.all(np.isfinite(feats)):
        raise DataError(f"{path}: non-finite feature values")
    return feats


def _format_intervals(intervals) -> str:
    return ";".join(f"{s}:{e}" for s, e in intervals)


def _parse_intervals(text: str, where: str) -> list[tuple[int, int]]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        try:
            s, e = part.split(":")
            out.append((int(s), int(e)))
        except ValueError as exc:
            raise DataError(f"{where}: bad interval {part!r}") from exc
    return out


def save_dataset(videos: list[VideoSample], manifest_path: Path, feature_dir: str = "features") -> None:
    """Write one ``.wsvf`` per video next to the manifest."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    (root / feature_dir).mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER]
    for v in videos:
        rel = f"{feature_dir}/{v.id}.wsvf"
        write_features(root / rel, v.features)
        lines.append(f"{v.id},{v.label},{rel},{v.frame_count},{_format_intervals(v.intervals)}")
    manifest_path.write_text("\n".join(lines) + "\n")


def load_dataset(manifest_path: Path) -> list[VideoSample]:
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text()
    except OSError as exc:
        raise DataError(f"{manifest_path}: cannot read manifest ({exc.strerror})") from exc
    videos: list[VideoSample] = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{manifest_path}:{lineno}"
        parts = line.split(",")
        if len(parts) != 5:
            raise DataError(f"{where}: expected 5 comma-separated fields, got {len(parts)}")
        vid, label_s, rel, frames_s, ivals = (p.strip() for p in parts)
        try:
            label, frames = int(label_s), int(frames_s)
        except ValueError as exc:
            raise DataError(f"{where}: label and frame_count must be integers") from exc
        if label not in (0, 1):
            raise DataError(f"{where}: label must be 0 or 1, got {label}")
        if frames < 1:
            raise DataError(f"{where}: frame_count must be >= 1")
        intervals = _parse_intervals(ivals, where)
        _validate_intervals(intervals, frames, label, where)
        feats = read_features(manifest_path.parent / rel)
        if dim is None:
            dim = feats.shape[1]
        elif feats.shape[1] != dim:
            raise DataError(f"{where}: feature dim {feats.shape[1]} differs from {dim}")
        videos.append(VideoSample(vid, feats, label, frames, sorted(intervals)))
    if not videos:
        raise DataError(f"{manifest_path}: empty dataset")
    return videos
