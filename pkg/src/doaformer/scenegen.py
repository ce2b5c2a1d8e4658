"""Synthetic moving-source scenes for a 2-mic horizontal array.

Scenes are sampled from uniform parameter ranges (room size, RT60, SNR,
azimuth) and rendered free-field with per-sample fractional delays plus an
optional first-order image-source approximation of the room reflections.
Ground truth is the direct-path direction per STFT frame, as a unit vector
in array coordinates (x along the mic axis, z up, planar scenes so z = 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import StftConfig
from .numerics import Rng
from .numerics.checkpoint import load_tensors, save_tensors

SPEED_OF_SOUND = 343.0
MIC_SPACING = 0.08
SINC_HALF_TAPS = 16


class ManifestError(ValueError):
    """Dataset manifest is malformed."""


@dataclass(frozen=True)
class SceneRanges:
    """Uniform sampling intervals for scene parameters."""

    room_min: tuple = (4.0, 5.0, 3.0)
    room_max: tuple = (10.0, 8.0, 6.0)
    rt60: tuple = (0.2, 1.3)
    snr: tuple = (-5.0, 15.0)
    azimuth: tuple = (0.0, 180.0)
    max_sweep_deg: float = 90.0
    noise_kinds: tuple = ("white", "pink", "diffuse")
    duration_s: float = 4.0
    sample_rate: int = 16000


@dataclass
class SourceSpec:
    """Generative description of one source signal (buffers derive from seed)."""

    seed: int
    kind: str = "modnoise"
    distance: float = 1.5
    trajectory: list = field(default_factory=list)  # [(time_s, azimuth_deg), ...]


@dataclass
class SceneConfig:
    room: tuple
    rt60: float
    snr: float
    noise_kind: str
    mic_center: tuple
    mic_axis: tuple
    sources: list  # list[SourceSpec]
    n_sources: int
    duration_s: float
    sample_rate: int
    seed: int

    def to_dict(self):
        d = asdict(self)
        d["room"] = list(self.room)
        d["mic_center"] = list(self.mic_center)
        d["mic_axis"] = list(self.mic_axis)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["room"] = tuple(d["room"])
        d["mic_center"] = tuple(d["mic_center"])
        d["mic_axis"] = tuple(d["mic_axis"])
        d["sources"] = [
            SourceSpec(
                seed=s["seed"], kind=s["kind"], distance=s["distance"],
                trajectory=[tuple(k) for k in s["trajectory"]],
            )
            for s in d["sources"]
        ]
        return cls(**d)


@dataclass
class LabeledClip:
    waveform: np.ndarray  # (2, n)
    labels: np.ndarray  # (T, S, 3) unit direction vectors
    mask: np.ndarray  # (T, S) bool


def sample_scene(rng: Rng, ranges: SceneRanges = SceneRanges(), n_sources=1, seed=0) -> SceneConfig:
    """Draw one scene uniformly from the parameter intervals."""
    room = tuple(
        rng.uniform(lo, hi) for lo, hi in zip(ranges.room_min, ranges.room_max)
    )
    rt60 = rng.uniform(*ranges.rt60)
    snr = rng.uniform(*ranges.snr)
    noise_kind = str(rng.choice(list(ranges.noise_kinds)))
    margin = 1.2
    mic_center = (
        rng.uniform(margin, room[0] - margin),
        rng.uniform(margin, room[1] - margin),
        rng.uniform(1.0, room[2] - 1.0),
    )
    psi = rng.uniform(0.0, 2.0 * math.pi)
    mic_axis = (math.cos(psi), math.sin(psi), 0.0)
    wall_clearance = min(
        mic_center[0], room[0] - mic_center[0], mic_center[1], room[1] - mic_center[1]
    )
    r_hi = max(0.9, wall_clearance - 0.3)
    sources = []
    starts = []
    for s in range(n_sources):
        for _ in range(64):
            az0 = rng.uniform(*ranges.azimuth)
            if all(abs(az0 - prev) >= 30.0 for prev in starts):
                break
        starts.append(az0)
        sweep = rng.uniform(-ranges.max_sweep_deg, ranges.max_sweep_deg)
        az1 = min(max(az0 + sweep, ranges.azimuth[0]), ranges.azimuth[1])
        sources.append(
            SourceSpec(
                seed=int(rng.integers(0, 2**31 - 1)),
                distance=float(rng.uniform(0.8, r_hi)),
                trajectory=[(0.0, float(az0)), (ranges.duration_s, float(az1))],
            )
        )
    return SceneConfig(
        room=room, rt60=float(rt60), snr=float(snr), noise_kind=noise_kind,
        mic_center=mic_center, mic_axis=mic_axis, sources=sources,
        n_sources=n_sources, duration_s=ranges.duration_s,
        sample_rate=ranges.sample_rate, seed=seed,
    )


# -- source signals ------------------------------------------------------


def _pink_noise(rng: Rng, n: int) -> np.ndarray:
    """Gaussian noise shaped to a 1/f power spectrum (-3 dB/octave)."""
    white = rng.normal(size=n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    weights = np.zeros_like(f)
    weights[1:] = 1.0 / np.sqrt(f[1:])
    shaped = np.fft.irfft(spec * weights, n=n)
    return shaped / (np.std(shaped) + 1e-30)


def synth_source(spec: SourceSpec, n: int, sample_rate: int) -> np.ndarray:
    """Speech-like test signal: pink noise under a slow random envelope."""
    rng = Rng(spec.seed).child("source")
    base = _pink_noise(rng, n)
    ctrl_hz = 6.0
    n_ctrl = max(2, int(round(n / sample_rate * ctrl_hz)) + 1)
    ctrl = rng.uniform(0.0, 1.0, size=n_ctrl)
    t = np.linspace(0.0, n_ctrl - 1.0, n)
    i0 = np.minimum(t.astype(int), n_ctrl - 2)
    frac = t - i0
    smooth = ctrl[i0] * (1 - frac) + ctrl[i0 + 1] * frac
    smooth = 0.5 - 0.5 * np.cos(np.pi * np.clip(smooth, 0, 1))  # soften corners
    env = 0.15 + 0.85 * smooth
    sig = base * env
    return sig / (np.std(sig) + 1e-30)


# -- geometry -------------------------------------------------------------


def _array_frame(mic_axis):
    """Right-handed horizontal frame (u along axis, v = z x u, z up)."""
    u = np.asarray(mic_axis, dtype=np.float64)
    u = u / np.linalg.norm(u)
    v = np.array([-u[1], u[0], 0.0])
    return u, v


def mic_positions(scene: SceneConfig) -> np.ndarray:
    u, _ = _array_frame(scene.mic_axis)
    center = np.asarray(scene.mic_center)
    return np.stack([center + 0.5 * MIC_SPACING * u, center - 0.5 * MIC_SPACING * u])


def azimuth_at(trajectory, times) -> np.ndarray:
    """Piecewise-linear azimuth (degrees) at the given times, ends clamped."""
    knots = np.asarray(trajectory, dtype=np.float64)
    return np.interp(times, knots[:, 0], knots[:, 1])


def source_positions(scene: SceneConfig, src: SourceSpec, times) -> np.ndarray:
    """(len(times), 3) world positions along the sampled trajectory."""
    u, v = _array_frame(scene.mic_axis)
    az = np.deg2rad(azimuth_at(src.trajectory, times))
    center = np.asarray(scene.mic_center)
    return (
        center
        + src.distance * np.cos(az)[:, None] * u
        + src.distance * np.sin(az)[:, None] * v
    )


def direction_labels(scene: SceneConfig, cfg: StftConfig = StftConfig()) -> tuple:
    """(labels (T,S,3), mask (T,S)) at STFT frame centers; planar unit vectors."""
    n = int(round(scene.duration_s * scene.sample_rate))
    frames = cfg.n_frames(n)
    times = np.array([cfg.frame_center_time(t) for t in range(frames)])
    s = len(scene.sources)
    labels = np.zeros((frames, s, 3))
    for i, src in enumerate(scene.sources):
        az = np.deg2rad(azimuth_at(src.trajectory, times))
        labels[:, i, 0] = np.cos(az)
        labels[:, i, 1] = np.sin(az)
    mask = np.ones((frames, s), dtype=bool)
    return labels, mask


# -- rendering ------------------------------------------------------------


def _fractional_delay_render(src_signal, positions, mic_pos, sample_rate, gain=1.0):
    """Delay-and-attenuate one propagation path with windowed-sinc interpolation."""
    n = len(src_signal)
    dist = np.linalg.norm(positions - mic_pos, axis=1)
    if dist.min() < 1e-6:
        raise ValueError("source co-located with a microphone")
    delay = dist / SPEED_OF_SOUND * sample_rate
    pos = np.arange(n) - delay
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    taps = np.arange(-SINC_HALF_TAPS + 1, SINC_HALF_TAPS + 1)
    arg = frac[:, None] - taps[None, :]
    win = 0.5 + 0.5 * np.cos(np.pi * arg / SINC_HALF_TAPS)
    win[np.abs(arg) > SINC_HALF_TAPS] = 0.0
    kernel = np.sinc(arg) * win
    idx = i0[:, None] + taps[None, :]
    valid = (idx >= 0) & (idx < n)
    samples = src_signal[np.clip(idx, 0, n - 1)] * valid
    return (samples * kernel).sum(axis=1) * (gain / np.maximum(dist, 0.1))


def render_freefield(scene: SceneConfig, cfg: StftConfig = StftConfig()) -> LabeledClip:
    """Direct-path render: per-sample propagation delay and 1/distance decay."""
    n = int(round(scene.duration_s * scene.sample_rate))
    times = np.arange(n) / scene.sample_rate
    mics = mic_positions(scene)
    wave = np.zeros((2, n))
    for src in scene.sources:
        sig = synth_source(src, n, scene.sample_rate)
        positions = source_positions(scene, src, times)
        for c in range(2):
            wave[c] += _fractional_delay_render(sig, positions, mics[c], scene.sample_rate)
    labels, mask = direction_labels(scene, cfg)
    return LabeledClip(waveform=wave, labels=labels, mask=mask)


def reflection_coefficient(scene: SceneConfig) -> float:
    """Wall amplitude coefficient from RT60 via Sabine's absorption."""
    lx, ly, lz = scene.room
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * scene.rt60)
    alpha = min(alpha, 0.98)
    return math.sqrt(1.0 - alpha)


def _first_order_images(positions, room):
    """Reflect a (n, 3) path across each of the 6 walls."""
    images = []
    for axis in range(3):
        for wall in (0.0, room[axis]):
            img = positions.copy()
            img[:, axis] = 2.0 * wall - img[:, axis]
            images.append(img)
    return images


def add_reflections(clip: LabeledClip, scene: SceneConfig, order: int = 1) -> LabeledClip:
    """Add 6 first-order image sources per real source; labels stay direct-path."""
    if order not in (0, 1):
        raise ValueError("reflection order must be 0 or 1")
    if order == 0:
        return clip
    n = clip.waveform.shape[1]
    times = np.arange(n) / scene.sample_rate
    mics = mic_positions(scene)
    beta = reflection_coefficient(scene)
    wave = clip.waveform.copy()
    for src in scene.sources:
        sig = synth_source(src, n, scene.sample_rate)
        positions = source_positions(scene, src, times)
        for img in _first_order_images(positions, scene.room):
            for c in range(2):
                wave[c] += _fractional_delay_render(
                    sig, img, mics[c], scene.sample_rate, gain=beta
                )
    return LabeledClip(waveform=wave, labels=clip.labels, mask=clip.mask)


# -- noise ----------------------------------------------------------------


def diffuse_coherence(freq_hz, spacing=MIC_SPACING):
    """Ideal diffuse-field coherence sinc(2*pi*f*d/c) between two mics."""
    return np.sinc(2.0 * np.asarray(freq_hz, dtype=np.float64) * spacing / SPEED_OF_SOUND)


def _noise_pair(kind: str, n: int, sample_rate: int, rng: Rng) -> np.ndarray:
    if kind == "white":
        return rng.normal(size=(2, n))
    if kind == "pink":
        return np.stack([_pink_noise(rng.child("m0"), n), _pink_noise(rng.child("m1"), n)])
    if kind == "diffuse":
        s1 = np.fft.rfft(_pink_noise(rng.child("m0"), n))
        s2 = np.fft.rfft(_pink_noise(rng.child("m1"), n))
        f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
        gamma = diffuse_coherence(f)
        mixed = gamma * s1 + np.sqrt(np.maximum(1.0 - gamma**2, 0.0)) * s2
        return np.stack([np.fft.irfft(s1, n=n), np.fft.irfft(mixed, n=n)])
    raise ValueError(f"unknown noise kind {kind!r}")


def add_noise(clip: LabeledClip, snr_db: float, kind: str, rng: Rng) -> LabeledClip:
    """Scale noise so 10*log10(P_signal/P_noise) equals snr_db exactly."""
    p_sig = float(np.mean(clip.waveform**2))
    if p_sig <= 0.0:
        raise ValueError("cannot set SNR on a silent clip")
    noise = _noise_pair(kind, clip.waveform.shape[1], 16000, rng)
    p_noise = float(np.mean(noise**2))
    gain = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return LabeledClip(
        waveform=clip.waveform + gain * noise, labels=clip.labels, mask=clip.mask
    )


def render_scene(scene: SceneConfig, reflections: int = 1,
                 cfg: StftConfig = StftConfig()) -> LabeledClip:
    clip = render_freefield(scene, cfg)
    clip = add_reflections(clip, scene, order=reflections)
    noise_rng = Rng(scene.seed).child("noise").child(scene.sources[0].seed)
    return add_noise(clip, scene.snr, scene.noise_kind, noise_rng)


# -- dataset + manifest ----------------------------------------------------


def save_labels(path, clip: LabeledClip):
    save_tensors(
        path,
        {"labels": clip.labels, "mask": clip.mask.astype(np.float64)},
        meta={"frames": clip.labels.shape[0], "sources": clip.labels.shape[1]},
    )


def load_labels(path):
    tensors, _ = load_tensors(path)
    return tensors["labels"], tensors["mask"] > 0.5


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{i + 1}: invalid record: {e}") from None
            for key in ("wav", "labels", "scene"):
                if key not in rec:
                    raise ManifestError(f"{path}:{i + 1}: missing field {key!r}")
            records.append(rec)
    if not records:
        raise ManifestError(f"{path}: empty manifest")
    return records
