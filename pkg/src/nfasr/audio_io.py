"""WAV parsing, energy-based endpointing and dataset manifests."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DuplicateEntryError,
    EmptyManifestError,
    ManifestError,
    UnsupportedFormatError,
    VocabularyError,
    WavParseError,
)

DEFAULT_VOCABULARY = ("left", "right", "up", "down")

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# First two bytes of the KSDATAFORMAT_SUBTYPE_PCM GUID.
_PCM_SUBFORMAT_TAG = 0x0001


@dataclass(frozen=True)
class Utterance:
    """A mono PCM signal normalised to [-1, 1)."""

    samples: np.ndarray
    sample_rate_hz: int
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("utterance samples must be a non-empty 1-D sequence")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not (np.all(samples >= -1.0) and np.all(samples < 1.0)):
            raise ValueError("utterance samples must lie in [-1, 1)")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def slice(self, start: int, end: int) -> "Utterance":
        return Utterance(self.samples[start:end], self.sample_rate_hz, self.label, self.source_id)


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def _iter_chunks(data: bytes, offset: int):
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        name = chunk_id.decode("latin-1")
        if body_start + size > len(data):
            raise WavParseError(name, f"declares {size} bytes but only "
                                      f"{len(data) - body_start} remain")
        yield name, data[body_start:body_start + size]
        # chunks are word aligned
        offset = body_start + size + (size & 1)


def parse_wav(data: bytes, label: str | None = None, source_id: str = "") -> Utterance:
    """Decode a mono integer-PCM RIFF/WAVE byte string.

    Samples are divided by ``2**(bits - 1)`` so 16-bit values map exactly
    onto multiples of 2**-15 in [-1, 1).  8-bit data is unsigned with a
    128 offset, as the format prescribes.
    """
    if len(data) < 12:
        raise WavParseError("RIFF", "file shorter than the 12-byte RIFF header")
    if data[0:4] != b"RIFF":
        raise WavParseError("RIFF", f"bad magic {data[0:4]!r}")
    if data[8:12] != b"WAVE":
        raise WavParseError("RIFF", f"form type is {data[8:12]!r}, expected b'WAVE'")

    fmt = None
    payload = None
    for name, body in _iter_chunks(data, 12):
        if name == "fmt " and fmt is None:
            if len(body) < 16:
                raise WavParseError("fmt ", f"{len(body)} bytes, need at least 16")
            fmt = body
        elif name == "data" and payload is None:
            payload = body
    if fmt is None:
        raise WavParseError("fmt ", "missing")
    if payload is None:
        raise WavParseError("data", "missing")

    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise WavParseError("fmt ", "extensible format header truncated")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if tag != _WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"format tag 0x{tag:04x} is not integer PCM")
    if channels != 1:
        raise UnsupportedFormatError(f"{channels} channels; only mono is supported")
    if bits not in (8, 16, 24, 32):
        raise UnsupportedFormatError(f"{bits}-bit samples are not supported")
    if rate == 0:
        raise WavParseError("fmt ", "sample rate is zero")
    width = bits // 8
    if block_align != width:
        raise WavParseError("fmt ", f"block align {block_align} inconsistent with {bits}-bit mono")

    n = len(payload) // width
    if n == 0:
        raise WavParseError("data", "contains no samples")
    raw = payload[:n * width]
    if bits == 8:
        ints = np.frombuffer(raw, dtype=np.uint8).astype(np.int64) - 128
    elif bits == 16:
        ints = np.frombuffer(raw, dtype="<i2").astype(np.int64)
    elif bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int64)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
    else:
        ints = np.frombuffer(raw, dtype="<i4").astype(np.int64)
    samples = ints.astype(np.float64) / float(1 << (bits - 1))
    return Utterance(samples, int(rate), label, source_id)


def serialize_wav(samples, sample_rate_hz: int) -> bytes:
    """Encode amplitudes in [-1, 1) as 16-bit mono PCM.

    Values are scaled by 2**15, rounded half-to-even and clipped, which makes
    ``parse_wav(serialize_wav(x))`` exact whenever ``x`` is already on the
    16-bit grid.
    """
    x = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
    body = ints.tobytes()
    fmt = struct.pack("<HHIIHH", _WAVE_FORMAT_PCM, 1, sample_rate_hz,
                      sample_rate_hz * 2, 2, 16)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav(path, label: str | None = None, source_id: str | None = None) -> Utterance:
    path = Path(path)
    return parse_wav(path.read_bytes(), label=label,
                     source_id=str(path) if source_id is None else source_id)


def write_wav(path, samples, sample_rate_hz: int) -> None:
    Path(path).write_bytes(serialize_wav(samples, sample_rate_hz))


# ---------------------------------------------------------------------------
# Voice activity detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 10.0
    energy_threshold_ratio: float = 0.05
    hangover_frames: int = 5
    min_segment_ms: float = 100.0

    def __post_init__(self):
        if self.frame_ms <= 0 or self.min_segment_ms <= 0 or self.hangover_frames <= 0:
            raise ConfigError("VAD frame_ms, hangover_frames and min_segment_ms must be positive")
        if not 0.0 < self.energy_threshold_ratio < 1.0:
            raise ConfigError("energy_threshold_ratio must lie in (0, 1)")


def frame_energies(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """Mean-square energy of consecutive non-overlapping frames.

    The trailing partial frame, if any, is kept and averaged over its own
    length.
    """
    n = samples.size
    n_frames = -(-n // frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[:n] = samples
    sums = np.sum(padded.reshape(n_frames, frame_len) ** 2, axis=1)
    counts = np.full(n_frames, frame_len, dtype=np.float64)
    counts[-1] = n - (n_frames - 1) * frame_len
    return sums / counts


def energy_vad(u: Utterance, cfg: VadConfig = VadConfig()) -> list[tuple[int, int]]:
    """Locate speech as runs of frames whose energy clears a peak-relative threshold.

    Returns sorted, disjoint ``(start, end)`` sample ranges, end exclusive.
    Runs separated by at most ``hangover_frames`` quiet frames are merged,
    runs shorter than ``min_segment_ms`` are discarded, and survivors are
    widened by ``hangover_frames`` on each side (clipped to the signal).
    """
    frame_len = int(round(cfg.frame_ms * u.sample_rate_hz / 1000.0))
    if frame_len < 1:
        raise ConfigError(f"frame_ms={cfg.frame_ms} is shorter than one sample")
    energy = frame_energies(u.samples, frame_len)
    peak = energy.max()
    if peak <= 0.0:
        return []
    speech = energy >= cfg.energy_threshold_ratio * peak

    idx = np.flatnonzero(speech)
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i - prev - 1 > cfg.hangover_frames:
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))

    n = u.samples.size
    min_len = math.ceil(cfg.min_segment_ms * u.sample_rate_hz / 1000.0)
    h = cfg.hangover_frames
    segments: list[tuple[int, int]] = []
    for first, last in runs:
        if min((last + 1) * frame_len, n) - first * frame_len < min_len:
            continue
        s = max(0, (first - h) * frame_len)
        e = min(n, (last + 1 + h) * frame_len)
        if segments and s <= segments[-1][1]:
            segments[-1] = (segments[-1][0], e)
        else:
            segments.append((s, e))
    return segments


def longest_segment(segments):
    """Longest ``(start, end)`` pair; the earliest wins on ties.  None if empty."""
    best = None
    for seg in segments:
        if best is None or seg[1] - seg[0] > best[1] - best[0]:
            best = seg
    return best


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    speaker_id: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    root: Path = field(default=Path("."), compare=False)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    @property
    def speakers(self) -> list[str]:
        return sorted({e.speaker_id for e in self.entries})

    def __len__(self):
        return len(self.entries)


def parse_manifest(text: str, vocabulary=DEFAULT_VOCABULARY, root=Path(".")) -> DatasetManifest:
    """Parse ``path,label,speaker_id,split`` lines; ``#`` starts a comment line."""
    vocabulary = tuple(vocabulary)
    entries = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in stripped.split(",")]
        if len(fields) != 4 or not all(fields):
            raise ManifestError(f"expected 4 non-empty comma-separated fields, got {line!r}", lineno)
        path, label, speaker, split = fields
        if label not in vocabulary:
            raise VocabularyError(f"label {label!r} not in vocabulary {list(vocabulary)}", lineno)
        if split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {split!r}", lineno)
        if path in seen:
            raise DuplicateEntryError(f"path {path!r} already listed on line {seen[path]}", lineno)
        seen[path] = lineno
        entries.append(ManifestEntry(path, label, speaker, split))
    if not entries:
        raise EmptyManifestError("manifest has no entries")
    return DatasetManifest(tuple(entries), vocabulary, Path(root))


def load_manifest(path, vocabulary=DEFAULT_VOCABULARY) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), vocabulary, path.parent)


def format_manifest(entries) -> str:
    lines = ["# path,label,speaker_id,split"]
    lines += [f"{e.path},{e.label},{e.speaker_id},{e.split}" for e in entries]
    return "\n".join(lines) + "\n"
