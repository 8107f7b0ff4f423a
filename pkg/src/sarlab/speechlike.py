"""Synthetic speech-like utterances for demos and desk-scale experiments.

Harmonic source with a wandering pitch, formant-shaped spectral envelope,
syllabic amplitude modulation and occasional noise bursts.  Not speech, but
enough shared structure (harmonics, formants, temporal modulation) for mel
models and intelligibility metrics to behave sensibly.
"""

from pathlib import Path

import numpy as np

from .dsp import AudioClip, write_wav
from .nn import make_rng


def speechlike_utterance(rng: np.random.Generator, sample_rate: int = 16000,
                         duration: float = 1.0) -> AudioClip:
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    # wandering fundamental, 100-220 Hz
    drift = np.cumsum(rng.standard_normal(n)) / sample_rate
    drift = drift / (np.max(np.abs(drift)) + 1e-9)
    f0 = rng.uniform(100, 180) * 2.0 ** (0.3 * drift + 0.1 * np.sin(2 * np.pi * rng.uniform(1, 3) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    # formant-like log-amplitude envelope with 3 random resonances
    centers = rng.uniform([300, 900, 1800], [800, 1700, 3200])
    widths = rng.uniform(80, 250, 3)
    def envelope(freq):
        e = np.zeros_like(freq)
        for c, w in zip(centers, widths):
            e += np.exp(-0.5 * ((freq - c) / w) ** 2)
        return e + 0.02

    f0_mean = float(np.mean(f0))
    n_harm = max(3, int(4000 / f0_mean))
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        amp = envelope(np.array([h * f0_mean]))[0] / h ** 0.3
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))

    # syllabic modulation (2-6 Hz) with random onsets
    syl = rng.uniform(2.0, 6.0)
    am = 0.35 + 0.65 * np.abs(np.sin(np.pi * syl * t + rng.uniform(0, np.pi))) ** 1.5
    x *= am

    # a fricative-ish noise burst now and then
    if rng.uniform() < 0.6:
        start = int(rng.uniform(0.1, 0.7) * n)
        width = int(rng.uniform(0.05, 0.15) * n)
        burst = rng.standard_normal(width)
        burst -= np.convolve(burst, np.ones(9) / 9, mode="same")  # high-pass
        x[start:start + width] += 0.4 * burst[:max(0, min(width, n - start))]

    # gentle fade at the edges, normalize to a fixed peak
    ramp = min(n // 20, 400)
    if ramp > 0:
        fade = np.linspace(0, 1, ramp)
        x[:ramp] *= fade
        x[-ramp:] *= fade[::-1]
    x *= 0.5 / (np.max(np.abs(x)) + 1e-9)
    return AudioClip(x, sample_rate)


def make_corpus(root, n_utterances: int, seed: int = 0,
                sample_rate: int = 16000,
                duration_range: tuple = (0.7, 1.2)) -> list:
    """Write a directory of speech-like WAVs; returns the file paths."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    paths = []
    for i in range(n_utterances):
        dur = float(rng.uniform(*duration_range))
        clip = speechlike_utterance(rng, sample_rate, dur)
        path = root / ("utt%04d.wav" % i)
        write_wav(clip, path)
        paths.append(path)
    return paths
