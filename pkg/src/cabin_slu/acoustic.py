"""Utterance-level acoustic vectors.

Either loaded from precomputed sidecars (e.g. openSMILE IS10 output, 1582
values per utterance) or computed by a small built-in extractor: per-frame
MFCC, log-energy and zero-crossing rate (plus deltas), summarised over the
utterance by eight statistical functionals.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from . import sidecar
from .errors import ConfigError, EmptyInputError, FormatError, TooShortError

IS10_DIM = 1582
LOG_FLOOR = 1e-10
FUNCTIONALS = ("mean", "stddev", "min", "max", "range", "median", "skewness", "kurtosis")
BUILTIN = "builtin"
PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        if np.asarray(self.samples).size == 0:
            raise EmptyInputError("audio clip has no samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class LldConfig:
    frame_len: float = 0.025
    hop: float = 0.010
    preemphasis: float = 0.97
    n_mel: int = 26
    n_mfcc: int = 13
    include_log_energy: bool = True
    include_zcr: bool = True
    include_deltas: bool = True
    fmin: float = 0.0
    fmax: float | None = None

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ConfigError("need 0 < hop <= frame_len")
        if not 1 <= self.n_mfcc <= self.n_mel:
            raise ConfigError("need 1 <= n_mfcc <= n_mel")

    @property
    def n_base(self) -> int:
        return self.n_mfcc + int(self.include_log_energy) + int(self.include_zcr)

    @property
    def n_lld(self) -> int:
        return self.n_base * (2 if self.include_deltas else 1)

    def lld_names(self) -> list:
        names = [f"mfcc{k}" for k in range(self.n_mfcc)]
        if self.include_log_energy:
            names.append("log_energy")
        if self.include_zcr:
            names.append("zcr")
        if self.include_deltas:
            names += [f"delta_{n}" for n in names]
        return names

    def frame_samples(self, sample_rate: int):
        L = int(round(self.frame_len * sample_rate))
        S = int(round(self.hop * sample_rate))
        if S < 1 or L < S:
            raise ConfigError(f"frame {L} / hop {S} samples invalid at {sample_rate} Hz")
        return L, S


@dataclass(frozen=True)
class UtteranceAcoustics:
    vector: np.ndarray
    source: str = BUILTIN

    @property
    def dim(self) -> int:
        return int(self.vector.size)


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        raise TooShortError(f"{n_samples} samples is shorter than one {frame_len}-sample frame")
    return (n_samples - frame_len) // hop + 1


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n = frame_count(len(x), frame_len, hop)
    idx = hop * np.arange(n)[:, None] + np.arange(frame_len)[None, :]
    return x[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def fft_size(frame_len: int) -> int:
    return 1 << max(0, (frame_len - 1).bit_length())


def mel_edges(n_mel: int, fmin: float, fmax: float) -> np.ndarray:
    """The ``n_mel + 2`` corner frequencies (Hz) of the triangular filters."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mel + 2))


def mel_filterbank(n_mel: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax=None) -> np.ndarray:
    """Triangular HTK-Mel filters evaluated at the rfft bin frequencies.

    Returns an ``(n_mel, n_fft // 2 + 1)`` weight matrix with unit peaks.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_edges(n_mel, fmin, fmax)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def deltas(feats: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-``width`` frames with edge replication."""
    T = feats.shape[0]
    padded = np.concatenate([np.repeat(feats[:1], width, 0), feats, np.repeat(feats[-1:], width, 0)])
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    out = np.zeros_like(feats)
    for n in range(1, width + 1):
        out += n * (padded[width + n:width + n + T] - padded[width - n:width - n + T])
    return out / denom


def zero_crossing_rate(frames: np.ndarray) -> np.ndarray:
    signs = frames >= 0.0
    return np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1) / (frames.shape[1] - 1)


def log_mel_spectrum(clip: AudioClip, cfg: LldConfig) -> np.ndarray:
    """Per-frame log Mel filterbank energies, shape (frames, n_mel)."""
    x = np.asarray(clip.samples, dtype=np.float64)
    L, S = cfg.frame_samples(clip.sample_rate)
    emph = x.copy()
    emph[1:] -= cfg.preemphasis * x[:-1]
    frames = frame_signal(emph, L, S) * np.hamming(L)
    n_fft = fft_size(L)
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mel, n_fft, clip.sample_rate, cfg.fmin, cfg.fmax)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def extract_lld(clip: AudioClip, cfg: LldConfig = LldConfig()) -> np.ndarray:
    """Frame-level descriptors, shape ``(frames, cfg.n_lld)``.

    Column order: MFCC 0..n_mfcc-1, log-energy, ZCR, then the deltas of all
    of those in the same order (see ``LldConfig.lld_names``).
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    L, S = cfg.frame_samples(clip.sample_rate)
    frame_count(len(x), L, S)
    logmel = log_mel_spectrum(clip, cfg)
    cols = [dct(logmel, type=2, norm="ortho", axis=1)[:, :cfg.n_mfcc]]
    raw = frame_signal(x, L, S)
    if cfg.include_log_energy:
        cols.append(np.log(np.maximum(np.sum(raw * raw, axis=1), LOG_FLOOR))[:, None])
    if cfg.include_zcr:
        cols.append(zero_crossing_rate(raw)[:, None])
    base = np.concatenate(cols, axis=1)
    if cfg.include_deltas:
        return np.concatenate([base, deltas(base)], axis=1)
    return base


def _column_functionals(col: np.ndarray) -> list:
    mean = float(np.mean(col))
    lo, hi = float(np.min(col)), float(np.max(col))
    median = float(np.median(col))
    if col.size < 2 or lo == hi:
        return [mean, 0.0, lo, hi, hi - lo, median, 0.0, 0.0]
    d = col - mean
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        return [mean, 0.0, lo, hi, hi - lo, median, 0.0, 0.0]
    skew = float(np.mean(d ** 3)) / m2 ** 1.5
    kurt = float(np.mean(d ** 4)) / (m2 * m2) - 3.0
    return [mean, math.sqrt(m2), lo, hi, hi - lo, median, skew, kurt]


def apply_functionals(lld: np.ndarray) -> np.ndarray:
    """Eight functionals per column, laid out ``[col0 x 8, col1 x 8, ...]``.

    Standard deviation, skewness and excess kurtosis use population moments.
    Degenerate (single-frame or constant) columns get 0 for the spread and
    shape statistics.
    """
    lld = np.asarray(lld, dtype=np.float64)
    if lld.ndim != 2 or lld.shape[0] == 0 or lld.shape[1] == 0:
        raise EmptyInputError("functionals need at least one frame and one column")
    out = []
    for j in range(lld.shape[1]):
        out.extend(_column_functionals(lld[:, j]))
    return np.array(out)


def functional_names(lld_names) -> list:
    return [f"{lld}_{fn}" for lld in lld_names for fn in FUNCTIONALS]


def extract_utterance(clip: AudioClip, cfg: LldConfig = LldConfig()) -> UtteranceAcoustics:
    return UtteranceAcoustics(apply_functionals(extract_lld(clip, cfg)), BUILTIN)


def load_precomputed(path, expected_dim: int | None = None) -> dict:
    """Read an acoustic sidecar into ``id -> UtteranceAcoustics``."""
    vectors = sidecar.read_vectors(path)
    if expected_dim is not None:
        for uid, vec in vectors.items():
            if vec.size != expected_dim:
                raise FormatError(f"{uid!r} has {vec.size} values, expected {expected_dim}", path)
    return {uid: UtteranceAcoustics(vec, PRECOMPUTED) for uid, vec in vectors.items()}


def read_wav(path) -> AudioClip:
    """Load an integer-PCM WAV file as a mono float clip in [-1, 1]."""
    with wave.open(str(path), "rb") as wf:
        width = wf.getsampwidth()
        channels = wf.getnchannels()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width in (2, 4):
        dtype = np.int16 if width == 2 else np.int32
        data = np.frombuffer(raw, dtype=dtype).astype(np.float64) / float(2 ** (8 * width - 1))
    else:
        raise FormatError(f"unsupported sample width {width} bytes", path)
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return AudioClip(data, rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(np.asarray(clip.samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def extract_directory(paths, cfg: LldConfig = LldConfig()) -> dict:
    """``id -> vector`` for a list of WAV paths; the id is the file stem."""
    out = {}
    for p in sorted(Path(q) for q in paths):
        out[p.stem] = extract_utterance(read_wav(p), cfg).vector
    return out
