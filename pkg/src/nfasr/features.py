"""Per-utterance feature compression and the MLP-side input transforms."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateDimensionError, DimensionError


def compress_features(cepstra) -> np.ndarray:
    """Average each cepstral channel over time: ``(K, N) -> (K,)``."""
    c = np.asarray(cepstra, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] == 0 or c.shape[0] == 0:
        raise DimensionError(f"expected a non-empty (channels, frames) matrix, got shape {c.shape}")
    return c.mean(axis=1)


def drop_dc_channel(f) -> np.ndarray:
    """Remove channel 0 (the dc cepstrum) from a 13-value feature vector."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != 13:
        raise DimensionError(f"expected 13 cepstral features, got {f.shape[-1]}")
    return f[..., 1:]


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionError("mean and std must be 1-D vectors of equal length")
        bad = np.flatnonzero(~(std > 0))
        if bad.size:
            raise DegenerateDimensionError(int(bad[0]))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_normalizer(train) -> NormalizationStats:
    """Per-dimension mean and population standard deviation."""
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("need at least two training vectors to fit a normaliser")
    return NormalizationStats(x.mean(axis=0), x.std(axis=0))


def apply_normalizer(stats: NormalizationStats, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != stats.dim:
        raise DimensionError(f"normaliser fitted on {stats.dim} dims, got {f.shape[-1]}")
    return (f - stats.mean) / stats.std


def invert_normalizer(stats: NormalizationStats, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != stats.dim:
        raise DimensionError(f"normaliser fitted on {stats.dim} dims, got {z.shape[-1]}")
    return z * stats.std + stats.mean


# ---------------------------------------------------------------------------
# Feature cache: ``source_id,label,v0,...,v12`` per line
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CachedFeature:
    source_id: str
    label: str
    values: np.ndarray


def format_cache_line(source_id: str, label: str, values) -> str:
    if "," in source_id or "," in label:
        raise DataError(f"source id / label may not contain commas: {source_id!r}, {label!r}")
    return ",".join([source_id, label] + [f"{float(v):.17g}" for v in values])


def write_feature_cache(path, rows) -> None:
    text = "".join(format_cache_line(r.source_id, r.label, r.values) + "\n" for r in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_feature_cache(path, dim: int = 13) -> list[CachedFeature]:
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim + 2:
            raise DataError(f"{path}:{lineno}: expected {dim + 2} fields, got {len(parts)}")
        try:
            values = np.array([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite(values)):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        rows.append(CachedFeature(parts[0], parts[1], values))
    return rows
