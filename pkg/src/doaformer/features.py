"""STFT frontend: waveforms to normalized log-magnitude + phase planes.

Audio is 16 kHz multi-channel; frames are 32 ms Hann windows hopped by 16 ms
through a 512-point DFT. Bins 1..256 are retained (DC dropped: it carries no
inter-channel phase cue and 256 keeps the feature width a power of two).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

LOG_EPS = 1e-8
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    window_len: int = 512
    hop: int = 256
    dft_size: int = 512

    def __post_init__(self):
        if self.hop > self.window_len:
            raise ValueError("hop must not exceed window_len")
        if self.dft_size < self.window_len:
            raise ValueError("dft_size must be at least window_len")

    @property
    def n_bins(self) -> int:
        return self.dft_size // 2

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            raise ValueError(
                f"signal of {n_samples} samples is shorter than one window ({self.window_len})"
            )
        return (n_samples - self.window_len) // self.hop + 1

    def frame_center_time(self, frame: int) -> float:
        return (frame * self.hop + self.window_len / 2) / self.sample_rate

    def bin_frequency(self, index: int) -> float:
        """Center frequency of retained bin `index` (bin 0 here is DFT bin 1)."""
        return (index + 1) * self.sample_rate / self.dft_size


@dataclass
class ComplexSpectrogram:
    """Per-channel complex STFT, retained bins only. values (C, F, T)."""

    values: np.ndarray
    cfg: StftConfig

    @property
    def channels(self):
        return self.values.shape[0]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(waveform: np.ndarray, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Windowed framewise DFT; frame t covers samples [t*hop, t*hop + window).

    waveform: (C, n) float array. Returns bins 1..dft_size/2 per frame.
    """
    wav = np.atleast_2d(np.asarray(waveform, dtype=np.float64))
    channels, n = wav.shape
    frames = cfg.n_frames(n)
    win = hann_window(cfg.window_len)
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(frames)[:, None]
    segments = wav[:, idx] * win  # (C, T, win)
    spec = np.fft.rfft(segments, n=cfg.dft_size, axis=-1)[:, :, 1 : cfg.n_bins + 1]
    return ComplexSpectrogram(values=np.ascontiguousarray(spec.transpose(0, 2, 1)), cfg=cfg)


def spectral_features(spec: ComplexSpectrogram) -> np.ndarray:
    """Stack per-mic [log-magnitude, phase] planes; (2C, F, T) float64.

    Log magnitudes are standardized per frequency bin over the utterance
    (variance floored so silence maps to zeros); phase is kept raw in
    (-pi, pi] to preserve inter-channel phase differences.
    """
    vals = spec.values
    if not np.isfinite(vals.view(np.float64)).all():
        raise ValueError("spectrogram contains non-finite values")
    logmag = np.log(np.abs(vals) + LOG_EPS)
    mu = logmag.mean(axis=2, keepdims=True)
    var = logmag.var(axis=2, keepdims=True)
    logmag = (logmag - mu) / np.sqrt(np.maximum(var, VAR_FLOOR))
    phase = np.angle(vals)
    channels, f, t = vals.shape
    planes = np.empty((2 * channels, f, t), dtype=np.float64)
    planes[0::2] = logmag
    planes[1::2] = phase
    return planes


def features_from_waveform(waveform, cfg: StftConfig = StftConfig()) -> np.ndarray:
    return spectral_features(stft(waveform, cfg))


def read_wav(path, expect_rate: int | None = 16000) -> tuple[int, np.ndarray]:
    """Read RIFF WAV; returns (rate, (C, n) float64 in [-1, 1] for PCM)."""
    rate, data = wavfile.read(path)
    if expect_rate is not None and rate != expect_rate:
        raise ValueError(f"{path}: sample rate {rate} != expected {expect_rate}")
    if data.ndim == 1:
        data = data[:, None]
    data = data.T
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return rate, np.ascontiguousarray(data)


def write_wav(path, waveform: np.ndarray, rate: int = 16000):
    """Write (C, n) float64 as a 64-bit float WAV."""
    wavfile.write(path, rate, np.asarray(waveform, dtype=np.float64).T.copy())
