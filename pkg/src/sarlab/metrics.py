"""Objective quality measures: ESTOI on waveform pairs, log-mel distortion.

ESTOI follows the standard published definition: both signals are resampled
to 10 kHz, silent reference frames (40 dB below the loudest) are removed from
both, a 256-sample Hann / 512-point STFT feeds 15 one-third-octave bands from
150 Hz, and 30-frame segments are row- then column-normalized before
correlation.  Higher is better; the score never exceeds 1.
"""

import math

import numpy as np
from scipy.signal import get_window

from .dsp import AudioClip, MelSpectrogram, resample

ESTOI_RATE = 10000
FRAME_LEN = 256
FRAME_HOP = 128
FFT_LEN = 512
N_BANDS = 15
FIRST_CENTER_HZ = 150.0
SEG_LEN = 30
DYN_RANGE_DB = 40.0
NORM_EPS = 1e-12


def _strip_digital_silence(ref: np.ndarray, deg: np.ndarray):
    """Drop exact-zero leading/trailing runs of the reference from both.

    Keeps frame alignment independent of prepended digital silence.
    """
    nz = np.flatnonzero(ref)
    if nz.size == 0:
        raise ValueError("reference is all-silent")
    return ref[nz[0]:nz[-1] + 1], deg[nz[0]:nz[-1] + 1]


def _frame(x: np.ndarray, win: np.ndarray):
    n = 1 + (len(x) - FRAME_LEN) // FRAME_HOP
    idx = np.arange(FRAME_LEN)[None, :] + FRAME_HOP * np.arange(n)[:, None]
    return x[idx] * win


def _remove_silent_frames(ref: np.ndarray, deg: np.ndarray):
    """Overlap-add back only the frames whose reference energy is in range."""
    win = get_window("hann", FRAME_LEN, fftbins=True)
    if len(ref) < FRAME_LEN:
        raise ValueError("too short for silence removal")
    rf = _frame(ref, win)
    df = _frame(deg, win)
    energy_db = 20 * np.log10(np.linalg.norm(rf, axis=1) + NORM_EPS)
    keep = energy_db > energy_db.max() - DYN_RANGE_DB
    if not np.any(keep):
        raise ValueError("reference is all-silent")
    rf, df = rf[keep], df[keep]
    n = rf.shape[0]
    out_len = (n - 1) * FRAME_HOP + FRAME_LEN
    r = np.zeros(out_len)
    d = np.zeros(out_len)
    for i in range(n):
        s = i * FRAME_HOP
        r[s:s + FRAME_LEN] += rf[i]
        d[s:s + FRAME_LEN] += df[i]
    return r, d


def _third_octave_matrix():
    centers = FIRST_CENTER_HZ * 2.0 ** (np.arange(N_BANDS) / 3.0)
    lo = centers / 2.0 ** (1.0 / 6.0)
    hi = centers * 2.0 ** (1.0 / 6.0)
    freqs = np.arange(FFT_LEN // 2 + 1) * ESTOI_RATE / FFT_LEN
    mat = np.zeros((N_BANDS, len(freqs)))
    for k in range(N_BANDS):
        a = int(np.argmin(np.abs(freqs - lo[k])))
        b = int(np.argmin(np.abs(freqs - hi[k])))
        mat[k, a:b] = 1.0
    return mat


def _band_spectrogram(x: np.ndarray, band_mat: np.ndarray):
    win = get_window("hann", FRAME_LEN, fftbins=True)
    frames = _frame(x, win)
    spec = np.abs(np.fft.rfft(frames, n=FFT_LEN, axis=1)) ** 2  # (T, bins)
    return np.sqrt(spec @ band_mat.T).T  # (bands, T)


def _normalize_rows_then_cols(seg: np.ndarray):
    seg = seg - seg.mean(axis=1, keepdims=True)
    seg = seg / (np.linalg.norm(seg, axis=1, keepdims=True) + NORM_EPS)
    seg = seg - seg.mean(axis=0, keepdims=True)
    seg = seg / (np.linalg.norm(seg, axis=0, keepdims=True) + NORM_EPS)
    return seg


def estoi(reference: AudioClip, degraded: AudioClip) -> float:
    """Extended short-time objective intelligibility of `degraded` vs `reference`."""
    if reference.sample_rate != degraded.sample_rate:
        raise ValueError("sample-rate mismatch: %d vs %d"
                         % (reference.sample_rate, degraded.sample_rate))
    sr = reference.sample_rate
    ref, deg = reference.samples, degraded.samples
    tol = int(round(0.016 * sr)) + 2  # one feature hop of slack
    if abs(len(ref) - len(deg)) > tol:
        raise ValueError("length mismatch beyond one hop: %d vs %d"
                         % (len(ref), len(deg)))
    n = min(len(ref), len(deg))
    ref, deg = ref[:n], deg[:n]
    ref, deg = _strip_digital_silence(ref, deg)
    if sr != ESTOI_RATE:
        ref = resample(AudioClip(ref, sr), ESTOI_RATE).samples
        deg = resample(AudioClip(deg, sr), ESTOI_RATE).samples
    ref, deg = _remove_silent_frames(ref, deg)
    band_mat = _third_octave_matrix()
    x = _band_spectrogram(ref, band_mat)  # (15, T)
    y = _band_spectrogram(deg, band_mat)
    t_frames = x.shape[1]
    if t_frames < SEG_LEN:
        raise ValueError("too short: %d analysis frames, need %d"
                         % (t_frames, SEG_LEN))
    scores = []
    for m in range(SEG_LEN, t_frames + 1):
        xs = _normalize_rows_then_cols(x[:, m - SEG_LEN:m])
        ys = _normalize_rows_then_cols(y[:, m - SEG_LEN:m])
        scores.append(float(np.sum(xs * ys)) / SEG_LEN)
    return float(np.mean(scores))


def log_mel_distortion(ref, deg) -> float:
    """Mel-cepstral-distance-style constant applied to log-mel RMS difference."""
    a = ref.frames if isinstance(ref, MelSpectrogram) else np.asarray(ref)
    b = deg.frames if isinstance(deg, MelSpectrogram) else np.asarray(deg)
    if a.shape != b.shape:
        raise ValueError("shape mismatch: %s vs %s" % (a.shape, b.shape))
    rms = np.sqrt(np.mean((a - b) ** 2))
    return float(10.0 / math.log(10.0) * math.sqrt(2.0) * rms)
