"""Deterministic pseudo-speech corpus standing in for recorded commands.

Each command is a voiced segment whose harmonic amplitudes follow a
class-specific formant trajectory, optionally followed or preceded by a
band-limited noise burst (a crude stop/fricative).  Speakers differ in pitch
and in a vocal-tract scale factor applied to every formant.  Every
utterance gets its own jitter on pitch, formants, duration and level, a
stretch of leading and trailing silence, and low-level background noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import DEFAULT_VOCABULARY, ManifestEntry, format_manifest, serialize_wav
from .errors import ConfigError

SAMPLE_RATE = 48000


@dataclass(frozen=True)
class CommandTemplate:
    formants_start: tuple[float, float, float]
    formants_end: tuple[float, float, float]
    burst_band: tuple[float, float] | None   # Hz
    burst_at_end: bool


TEMPLATES = {
    "left": CommandTemplate((550, 1850, 2600), (450, 2150, 2900), (3500, 7500), True),
    "right": CommandTemplate((650, 1150, 1500), (400, 2000, 2700), (2500, 5000), True),
    "up": CommandTemplate((700, 1200, 2500), (600, 1000, 2400), (300, 1500), True),
    "down": CommandTemplate((350, 900, 2300), (750, 1300, 2500), (1500, 4000), False),
}


@dataclass(frozen=True)
class Speaker:
    name: str
    f0_hz: float
    tract_scale: float


SPEAKERS = (Speaker("spk1", 120.0, 1.0), Speaker("spk2", 210.0, 1.12))


def _envelope(n: int, attack: int, release: int) -> np.ndarray:
    env = np.ones(n)
    a = min(attack, n // 2)
    r = min(release, n - a)
    if a:
        env[:a] = 0.5 - 0.5 * np.cos(np.pi * np.arange(a) / a)
    if r:
        env[n - r:] = 0.5 + 0.5 * np.cos(np.pi * np.arange(1, r + 1) / r)
    return env


def _voiced(rng, n: int, f0: float, formants_a, formants_b, fs: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    # slow pitch declination with a little vibrato
    f0_t = f0 * (1.05 - 0.1 * t) * (1 + 0.01 * np.sin(2 * np.pi * 5 * t * n / fs))
    phase = 2 * np.pi * np.cumsum(f0_t) / fs
    fa, fb = np.asarray(formants_a), np.asarray(formants_b)
    traj = fa[:, None] + (fb - fa)[:, None] * (0.5 - 0.5 * np.cos(np.pi * t))[None, :]
    bandwidths = np.array([80.0, 120.0, 170.0])
    gains = np.array([1.0, 0.6, 0.35])
    out = np.zeros(n)
    n_harm = int(6000 // f0)
    for k in range(1, n_harm + 1):
        fk = k * f0_t
        amp = np.zeros(n)
        for g, bw, track in zip(gains, bandwidths, traj):
            amp += g * np.exp(-0.5 * ((fk - track) / (bw + 0.1 * track)) ** 2)
        amp = (amp + 0.01) / (1.0 + fk / 1500.0)
        out += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out


def _burst(rng, n: int, band, fs: int) -> np.ndarray:
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < band[0]) | (f > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.max(np.abs(x)) + 1e-12)


def synth_utterance(rng, label: str, speaker: Speaker, fs: int = SAMPLE_RATE) -> np.ndarray:
    tpl = TEMPLATES[label]
    f0 = speaker.f0_hz * rng.uniform(0.92, 1.08)
    jitter = rng.uniform(0.96, 1.04, size=3)
    fa = np.asarray(tpl.formants_start) * speaker.tract_scale * jitter
    fb = np.asarray(tpl.formants_end) * speaker.tract_scale * jitter
    n_voiced = int(rng.uniform(0.30, 0.45) * fs)
    voiced = _voiced(rng, n_voiced, f0, fa, fb, fs)
    voiced *= _envelope(n_voiced, int(0.03 * fs), int(0.06 * fs)) / np.max(np.abs(voiced))

    parts = [voiced]
    if tpl.burst_band is not None:
        n_burst = int(rng.uniform(0.06, 0.09) * fs)
        band = tuple(b * speaker.tract_scale for b in tpl.burst_band)
        burst = 0.35 * _burst(rng, n_burst, band, fs) * _envelope(n_burst, int(0.01 * fs), int(0.03 * fs))
        gap = np.zeros(int(rng.uniform(0.01, 0.03) * fs))
        parts = [voiced, gap, burst] if tpl.burst_at_end else [burst, gap, voiced]
    speech = np.concatenate(parts) * rng.uniform(0.25, 0.7)

    lead = np.zeros(int(rng.uniform(0.15, 0.35) * fs))
    trail = np.zeros(int(rng.uniform(0.15, 0.35) * fs))
    signal = np.concatenate([lead, speech, trail])
    signal += 3e-4 * rng.standard_normal(signal.size)
    return np.clip(signal, -1.0, 32767 / 32768)


def synth_corpus(seed: int, out_dir, per_class: int = 24, vocabulary=DEFAULT_VOCABULARY,
                 speakers=SPEAKERS, fs: int = SAMPLE_RATE):
    """Write WAV files plus ``manifest.csv``; returns the manifest path.

    ``per_class`` utterances per command are spread evenly over the
    speakers, and each (speaker, command) group is split half train, half
    test at random.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if per_class % (2 * len(speakers)):
        raise ConfigError(f"per_class must be a multiple of {2 * len(speakers)}")
    rng = np.random.default_rng(seed)
    per_speaker = per_class // len(speakers)
    entries = []
    for speaker in speakers:
        for label in vocabulary:
            splits = np.array(["train"] * (per_speaker // 2) + ["test"] * (per_speaker // 2))
            rng.shuffle(splits)
            for i in range(per_speaker):
                name = f"{speaker.name}_{label}_{i:02d}.wav"
                x = synth_utterance(rng, label, speaker, fs)
                (out_dir / name).write_bytes(serialize_wav(x, fs))
                entries.append(ManifestEntry(name, label, speaker.name, str(splits[i])))
    manifest = out_dir / "manifest.csv"
    manifest.write_text(format_manifest(entries), encoding="utf-8")
    return manifest
