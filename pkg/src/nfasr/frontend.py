"""Floating-point MFCC front-end.

Framing, Hamming window, FFT power spectrum, triangular mel filterbank and
the unnormalised DCT over log filterbank energies.  Cepstra come out as a
``(num_cepstra, n_frames)`` array: one row per cepstral channel, one column
per frame, with row 0 being the dc channel (plain sum of log energies).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DimensionError, TooShortError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


@dataclass(frozen=True)
class FrontendConfig:
    frame_length_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int | None = None
    num_mel_filters: int = 26
    num_cepstra: int = 13
    low_freq_hz: float = 0.0
    high_freq_hz: float | None = None
    pre_emphasis: float = 0.97
    energy_floor: float = 1e-10

    def __post_init__(self):
        if not self.frame_length_ms >= self.hop_ms > 0:
            raise ConfigError("need frame_length_ms >= hop_ms > 0")
        if self.num_cepstra < 1 or self.num_cepstra > self.num_mel_filters:
            raise ConfigError("need 1 <= num_cepstra <= num_mel_filters")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ConfigError("pre_emphasis must lie in [0, 1)")
        if self.fft_size is not None and not _is_pow2(self.fft_size):
            raise ConfigError(f"fft_size {self.fft_size} is not a power of two")
        if self.energy_floor < 0:
            raise ConfigError("energy_floor must be non-negative")
        if self.low_freq_hz < 0:
            raise ConfigError("low_freq_hz must be non-negative")

    def frame_length(self, fs: int) -> int:
        return int(round(self.frame_length_ms * fs / 1000.0))

    def hop(self, fs: int) -> int:
        return int(round(self.hop_ms * fs / 1000.0))

    def nfft(self, fs: int) -> int:
        L = self.frame_length(fs)
        n = self.fft_size if self.fft_size is not None else next_pow2(L)
        if n < L:
            raise ConfigError(f"fft_size {n} shorter than frame length {L}")
        return n

    def band(self, fs: int) -> tuple[float, float]:
        high = fs / 2.0 if self.high_freq_hz is None else float(self.high_freq_hz)
        if not self.low_freq_hz < high <= fs / 2.0:
            raise ConfigError(f"need low_freq_hz < high_freq_hz <= {fs / 2.0}")
        return float(self.low_freq_hz), high


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def pre_emphasize(samples, alpha: float) -> np.ndarray:
    """y[n] = x[n] - alpha * x[n-1], with x[-1] = 0."""
    x = np.asarray(samples, dtype=np.float64)
    y = x.copy()
    if alpha:
        y[1:] -= alpha * x[:-1]
    return y


def frame_signal(samples, cfg: FrontendConfig, fs: int) -> np.ndarray:
    """Split into ``(n_frames, L)`` frames starting every ``hop`` samples.

    A trailing partial frame is dropped.
    """
    x = np.asarray(samples, dtype=np.float64)
    L, hop = cfg.frame_length(fs), cfg.hop(fs)
    if L < 1 or hop < 1:
        raise ConfigError("frame length and hop must each span at least one sample")
    if x.size < L:
        raise TooShortError(f"signal of {x.size} samples is shorter than one {L}-sample frame")
    n_frames = (x.size - L) // hop + 1
    starts = np.arange(n_frames) * hop
    return x[starts[:, None] + np.arange(L)[None, :]]


@lru_cache(maxsize=32)
def _hamming(L: int) -> np.ndarray:
    n = np.arange(L)
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (L - 1))
    w.setflags(write=False)
    return w


def hamming_window(L: int) -> np.ndarray:
    if L < 2:
        raise ConfigError("Hamming window needs at least 2 points")
    return _hamming(L)


def apply_window(frames) -> np.ndarray:
    """Multiply the last axis by a Hamming window of matching length."""
    frames = np.asarray(frames, dtype=np.float64)
    return frames * hamming_window(frames.shape[-1])


def fft_power_spectrum(frames, fft_size: int) -> np.ndarray:
    """|X[b]|**2 for b = 0..fft_size/2 after zero-padding each frame."""
    if not _is_pow2(fft_size):
        raise ConfigError(f"fft_size {fft_size} is not a power of two")
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] > fft_size:
        raise ConfigError(f"frame length {frames.shape[-1]} exceeds fft_size {fft_size}")
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FilterBank:
    weights: np.ndarray        # (M, fft_size // 2 + 1)
    center_bins: np.ndarray    # (M,)
    vertices_hz: np.ndarray    # (M + 2,)
    fft_size: int
    sample_rate_hz: int

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]


def build_mel_filterbank(cfg: FrontendConfig, fs: int) -> FilterBank:
    """Triangular filters with vertices equally spaced on the mel scale.

    Filter m rises from vertex m-1 to a peak of 1 at vertex m and falls back
    to zero at vertex m+1; weights are sampled at FFT bin centre frequencies.
    """
    nfft = cfg.nfft(fs)
    low, high = cfg.band(fs)
    M = cfg.num_mel_filters
    mels = np.linspace(hz_to_mel(low), hz_to_mel(high), M + 2)
    hz = mel_to_hz(mels)
    hz[0], hz[-1] = low, high
    vertex_bins = np.rint(hz * nfft / fs).astype(int)
    if np.any(np.diff(vertex_bins) <= 0):
        raise ConfigError(f"{M} mel filters are not resolvable with fft_size {nfft} at {fs} Hz: "
                          "adjacent filter vertices fall in the same FFT bin")

    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    left, center, right = hz[:-2, None], hz[1:-1, None], hz[2:, None]
    rising = (freqs[None, :] - left) / (center - left)
    falling = (right - freqs[None, :]) / (right - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights.setflags(write=False)
    centers = vertex_bins[1:-1].copy()
    centers.setflags(write=False)
    return FilterBank(weights, centers, hz, nfft, fs)


def filterbank_energies(power, fb: FilterBank, floor: float = 1e-10) -> np.ndarray:
    """E_m = sum_b weights[m, b] * power[b], clamped below at ``floor``.

    Works on a single spectrum or a ``(n_frames, bins)`` stack.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.shape[-1] != fb.weights.shape[1]:
        raise DimensionError(f"spectrum has {power.shape[-1]} bins, filterbank expects "
                             f"{fb.weights.shape[1]}")
    return np.maximum(power @ fb.weights.T, floor)


@lru_cache(maxsize=32)
def dct_matrix(n: int, k: int) -> np.ndarray:
    """cos(pi*k/n * (i - 1/2)) for k = 0..K-1 (rows) and i = 1..n (columns)."""
    i = np.arange(1, n + 1)
    m = np.cos(np.pi * np.arange(k)[:, None] / n * (i[None, :] - 0.5))
    m.setflags(write=False)
    return m


def dct_cepstrum(energies, num_cepstra: int) -> np.ndarray:
    """C_k = sum_{i=1..N} log(E_i) cos(pi k / N (i - 1/2)),  k = 0..K-1.

    No orthonormal scaling is applied.  The last axis of ``energies`` holds
    the N filterbank energies; the result replaces it with K coefficients.
    """
    e = np.asarray(energies, dtype=np.float64)
    n = e.shape[-1]
    if num_cepstra > n:
        raise ConfigError(f"cannot take {num_cepstra} cepstra from {n} energies")
    if np.any(e <= 0):
        raise ValueError("filterbank energies must be strictly positive")
    return np.log(e) @ dct_matrix(n, num_cepstra).T


def mfcc(u, cfg: FrontendConfig = FrontendConfig(), fb: FilterBank | None = None) -> np.ndarray:
    """Cepstral matrix of shape ``(num_cepstra, n_frames)`` for one utterance."""
    fs = u.sample_rate_hz
    if fb is None:
        fb = build_mel_filterbank(cfg, fs)
    frames = frame_signal(pre_emphasize(u.samples, cfg.pre_emphasis), cfg, fs)
    power = fft_power_spectrum(apply_window(frames), fb.fft_size)
    energies = filterbank_energies(power, fb, cfg.energy_floor)
    return dct_cepstrum(energies, cfg.num_cepstra).T


def format_cepstra(c: np.ndarray) -> str:
    """Text dump: one frame per line, coefficients separated by spaces."""
    return "".join(" ".join(f"{v:.17g}" for v in col) + "\n" for col in np.asarray(c).T)


def parse_cepstra(text: str) -> np.ndarray:
    rows = [[float(v) for v in line.split()] for line in text.splitlines() if line.strip()]
    return np.array(rows, dtype=np.float64).T
