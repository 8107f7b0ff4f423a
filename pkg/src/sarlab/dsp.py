"""Deterministic signal processing: WAV I/O, resampling, STFT, mel, Griffin-Lim.

Everything in here is a pure function of its inputs.  All audio is mono,
amplitude-normalized to [-1, 1].  Mel features are natural-log magnitudes
with a hard floor so silence maps to a finite value.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, get_window, resample_poly

MEL_FLOOR = 1e-5
LOG_MEL_FLOOR = math.log(MEL_FLOOR)

MEL_MAGIC = b"SARMEL1"


@dataclass
class AudioClip:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip requires a 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def feature_hop(sample_rate: int) -> int:
    """Feature-frame hop in samples: 16 ms at the given rate."""
    return int(round(0.016 * sample_rate))


@dataclass
class StftConfig:
    fft_size: int = 1024
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a positive power of two")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError("hop must satisfy 0 < hop <= fft_size")

    @classmethod
    def for_rate(cls, sample_rate: int, fft_size: int = 1024) -> "StftConfig":
        """Feature-extraction config: 16 ms hop at this rate."""
        return cls(fft_size=fft_size, hop=feature_hop(sample_rate))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class ComplexSpectrogram:
    frames: np.ndarray  # (T, n_bins) complex
    config: StftConfig


@dataclass
class MelFilterBank:
    weights: np.ndarray  # (n_mels, n_bins)
    fmin: float
    fmax: float
    sample_rate: int = 0
    fft_size: int = 0


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) log magnitudes
    sample_rate: int
    hop: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------------------
# WAV I/O

def read_wav(path) -> AudioClip:
    """Load a mono RIFF/WAVE file (16-bit PCM or 32-bit float)."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError("unsupported channel count: %d" % data.shape[1])
    if data.size == 0:
        raise ValueError("empty data chunk in %s" % path)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise ValueError("unsupported encoding: %s" % data.dtype)
    return AudioClip(samples, int(rate))


def write_wav(clip: AudioClip, path) -> None:
    """Write 16-bit PCM mono; out-of-range samples are hard-clipped."""
    if len(clip) == 0:
        raise ValueError("cannot write an empty clip")
    q = np.round(clip.samples * 32768.0)
    q = np.clip(q, -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.sample_rate, q)


def wav_duration(path) -> float:
    """Duration in seconds, read from the header without decoding samples."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise ValueError("not a RIFF/WAVE file: %s" % path)
        rate = None
        block_align = None
        while True:
            hdr = f.read(8)
            if len(hdr) < 8:
                break
            cid, size = struct.unpack("<4sI", hdr)
            if cid == b"fmt ":
                fmt = f.read(size)
                _, channels, rate, _, block_align, _ = struct.unpack(
                    "<HHIIHH", fmt[:16])
            elif cid == b"data":
                if rate is None:
                    raise ValueError("data chunk before fmt in %s" % path)
                return size / block_align / rate
            else:
                f.seek(size + (size & 1), 1)
    raise ValueError("no data chunk in %s" % path)


# ---------------------------------------------------------------------------
# Resampling

def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase windowed-sinc resampler (Kaiser beta=12, 64 taps/phase)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    g = math.gcd(clip.sample_rate, target_rate)
    up = target_rate // g
    down = clip.sample_rate // g
    # cutoff at the narrower of the two Nyquists, in units of the
    # upsampled-rate Nyquist
    fc = min(1.0 / up, 1.0 / down)
    taps = 64 * up + 1
    h = firwin(taps, fc, window=("kaiser", 12.0))
    out = resample_poly(clip.samples, up, down, window=h)
    return AudioClip(out, target_rate)


# ---------------------------------------------------------------------------
# STFT / ISTFT

def _window(config: StftConfig) -> np.ndarray:
    return get_window(config.window, config.fft_size, fftbins=True)


def stft(clip_or_samples, config: StftConfig) -> ComplexSpectrogram:
    """Centered STFT: reflect-pad by fft_size/2, then windowed rFFT frames."""
    if isinstance(clip_or_samples, AudioClip):
        x = clip_or_samples.samples
    else:
        x = np.asarray(clip_or_samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot STFT an empty clip")
    n_fft, hop = config.fft_size, config.hop
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect") if x.size > 1 else np.pad(x, pad)
    n_frames = 1 + (len(xp) - n_fft) // hop
    win = _window(config)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(xp[idx] * win, n=n_fft, axis=1)
    return ComplexSpectrogram(frames, config)


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Overlap-add inverse of `stft`, trimming the center padding.

    Exact wherever the squared-window overlap is nonzero; with a Hann
    window at hop = fft/4 that covers the whole unpadded signal.
    """
    frames = spec.frames
    if frames.size == 0:
        raise ValueError("cannot invert an empty spectrogram")
    cfg = spec.config
    n_fft, hop = cfg.fft_size, cfg.hop
    win = _window(cfg)
    n_frames = frames.shape[0]
    total = (n_frames - 1) * hop + n_fft
    y = np.zeros(total)
    wsum = np.zeros(total)
    chunks = np.fft.irfft(frames, n=n_fft, axis=1) * win
    for t in range(n_frames):
        s = t * hop
        y[s:s + n_fft] += chunks[t]
        wsum[s:s + n_fft] += win * win
    good = wsum > 1e-10
    y[good] /= wsum[good]
    pad = n_fft // 2
    out = y[pad:total - pad] if total > 2 * pad else y
    # sample rate is not carried by the spectrogram; caller re-attaches it
    return AudioClip(out, 1) if out.size else AudioClip(np.zeros(1), 1)


# ---------------------------------------------------------------------------
# Mel filterbank and extraction

_F_SP = 200.0 / 3.0
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    mel = f / _F_SP
    above = f >= _MIN_LOG_HZ
    mel = np.where(above, _MIN_LOG_MEL + np.log(np.maximum(f, 1e-30) / _MIN_LOG_HZ) / _LOGSTEP, mel)
    return mel


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * _F_SP
    above = m >= _MIN_LOG_MEL
    return np.where(above, _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL)), f)


def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int = 80,
                   fmin: float = 0.0, fmax: float | None = None) -> MelFilterBank:
    """Triangular Slaney-style filters, area-normalized."""
    if fmax is None:
        fmax = sample_rate / 2.0
    if not (0 <= fmin < fmax <= sample_rate / 2.0):
        raise ValueError("invalid frequency range [%g, %g]" % (fmin, fmax))
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    n_bins = fft_size // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    weights = np.zeros((n_mels, n_bins))
    for k in range(n_mels):
        lo, mid, hi = pts[k], pts[k + 1], pts[k + 2]
        rise = (bin_freqs - lo) / max(mid - lo, 1e-12)
        fall = (hi - bin_freqs) / max(hi - mid, 1e-12)
        tri = np.maximum(0.0, np.minimum(rise, fall))
        weights[k] = tri * (2.0 / (hi - lo))
    if not np.all(weights.max(axis=1) > 0):
        raise ValueError("filterbank has empty rows; increase fft_size or lower n_mels")
    return MelFilterBank(weights, fmin, fmax, sample_rate, fft_size)


def filter_centers(bank: MelFilterBank, n_mels: int | None = None) -> np.ndarray:
    """Center frequencies (Hz) of each filter."""
    n_mels = bank.weights.shape[0] if n_mels is None else n_mels
    pts = mel_to_hz(np.linspace(hz_to_mel(bank.fmin), hz_to_mel(bank.fmax), n_mels + 2))
    return pts[1:-1]


def mel_spectrogram(clip: AudioClip, config: StftConfig,
                    bank: MelFilterBank) -> MelSpectrogram:
    """Log-mel magnitudes: log(max(bank @ |STFT|, floor))."""
    if bank.fft_size and bank.fft_size != config.fft_size:
        raise ValueError("filterbank fft_size %d != config fft_size %d"
                         % (bank.fft_size, config.fft_size))
    if bank.sample_rate and bank.sample_rate != clip.sample_rate:
        raise ValueError("filterbank sample_rate %d != clip sample_rate %d"
                         % (bank.sample_rate, clip.sample_rate))
    spec = stft(clip, config)
    mag = np.abs(spec.frames)  # (T, n_bins)
    mel = mag @ bank.weights.T
    frames = np.log(np.maximum(mel, MEL_FLOOR))
    return MelSpectrogram(frames, clip.sample_rate, config.hop)


# ---------------------------------------------------------------------------
# Griffin-Lim

def mel_to_linear(mel: MelSpectrogram, bank: MelFilterBank) -> np.ndarray:
    """Nonnegative least-squares-style magnitude estimate via pinv, clamped at 0."""
    amp = np.exp(mel.frames)  # (T, n_mels) linear mel magnitudes
    pinv = np.linalg.pinv(bank.weights)  # (n_bins, n_mels)
    return np.maximum(amp @ pinv.T, 0.0)  # (T, n_bins)


def griffin_lim(mel: MelSpectrogram, config: StftConfig, bank: MelFilterBank,
                iterations: int = 60, return_errors: bool = False):
    """Phase reconstruction from a log-mel spectrogram.

    Deterministic: zero-phase init, no momentum.  The feature frames are
    mapped onto a hop = fft/4 synthesis grid by nearest-frame lookup, since
    overlap-add inversion needs that hop for full window coverage.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if mel.frames.size == 0:
        raise ValueError("empty mel spectrogram")
    mag = mel_to_linear(mel, bank)  # (T, n_bins) on the feature grid
    synth_hop = config.fft_size // 4
    if mel.hop != synth_hop:
        t_feat = mag.shape[0]
        t_synth = max(1, int(round(t_feat * mel.hop / synth_hop)))
        idx = np.clip(np.round(np.arange(t_synth) * synth_hop / mel.hop).astype(int),
                      0, t_feat - 1)
        mag = mag[idx]
    synth_cfg = StftConfig(config.fft_size, synth_hop, config.window)
    target = mag
    spec = target.astype(np.complex128)  # zero phase
    errors = []
    x = None
    for _ in range(iterations):
        x = istft(ComplexSpectrogram(spec, synth_cfg)).samples
        est = stft(x, synth_cfg).frames
        est_mag = np.abs(est)
        if return_errors:
            errors.append(float(np.linalg.norm(est_mag - target)
                                / max(np.linalg.norm(target), 1e-12)))
        spec = target * est / np.maximum(est_mag, 1e-12)
    x = istft(ComplexSpectrogram(spec, synth_cfg)).samples
    clip = AudioClip(x, mel.sample_rate)
    if return_errors:
        return clip, errors
    return clip


# ---------------------------------------------------------------------------
# Mel feature files

def save_mel(mel: MelSpectrogram, path) -> None:
    """SARMEL1 file: ASCII header line + row-major little-endian float32."""
    t, d = mel.frames.shape
    header = "SARMEL1 %d %d %d %d\n" % (t, d, mel.sample_rate, mel.hop)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(mel.frames.astype("<f4").tobytes())


def load_mel(path) -> MelSpectrogram:
    with open(path, "rb") as f:
        header = f.readline()
        parts = header.split()
        if len(parts) != 5 or parts[0] != MEL_MAGIC:
            raise ValueError("not a SARMEL1 file: %s" % path)
        t, d, rate, hop = (int(p) for p in parts[1:])
        raw = f.read(4 * t * d)
        if len(raw) != 4 * t * d:
            raise ValueError("truncated SARMEL1 file: %s" % path)
        frames = np.frombuffer(raw, dtype="<f4").reshape(t, d).astype(np.float64)
    return MelSpectrogram(frames, rate, hop)
