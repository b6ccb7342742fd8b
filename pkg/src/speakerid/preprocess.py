"""Speech conditioning: Wiener denoising, endpoint detection, pre-emphasis,
frame blocking and Hamming windowing.

The fixed stage order is the one used by :func:`preprocess_pipeline`::

    wiener_denoise -> detect_endpoints (crop) -> pre_emphasize
        -> frame_blocks -> hamming_window
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .audio_io import Utterance
from .errors import ConfigError, NoSpeechDetected, TooShort


@dataclass(frozen=True)
class PreprocessConfig:
    pre_emphasis_alpha: float = 0.97
    frame_len_ms: float = 20.0
    overlap_pct: float = 50.0
    energy_floor_db: float = -120.0
    endpoint_margin_fraction: float = 0.25
    hangover_frames: int = 5
    noise_lead_ms: float = 100.0
    wiener_gain_floor: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.pre_emphasis_alpha <= 1.0:
            raise ConfigError(f"pre_emphasis_alpha must be in [0, 1], got {self.pre_emphasis_alpha}")
        if not 10.0 <= self.frame_len_ms <= 30.0:
            raise ConfigError(f"frame_len_ms must be in [10, 30], got {self.frame_len_ms}")
        if not 25.0 <= self.overlap_pct <= 75.0:
            raise ConfigError(f"overlap_pct must be in [25, 75], got {self.overlap_pct}")
        if not 0.0 < self.endpoint_margin_fraction < 1.0:
            raise ConfigError("endpoint_margin_fraction must be in (0, 1)")
        if int(self.hangover_frames) != self.hangover_frames or self.hangover_frames < 0:
            raise ConfigError("hangover_frames must be a non-negative integer")
        if self.noise_lead_ms <= 0:
            raise ConfigError("noise_lead_ms must be positive")
        # 1.0 is allowed: it switches the Wiener stage off
        if not 0.0 < self.wiener_gain_floor <= 1.0:
            raise ConfigError("wiener_gain_floor must be in (0, 1]")

    def frame_len(self, rate: int) -> int:
        n = int(np.floor(self.frame_len_ms * rate / 1000.0))
        if n < 2:
            raise ConfigError(f"frame of {self.frame_len_ms} ms at {rate} Hz is {n} samples")
        return n

    def hop(self, rate: int) -> int:
        n = self.frame_len(rate)
        return min(max(int(round(n * (1.0 - self.overlap_pct / 100.0))), 1), n)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(**d)


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray
    frame_len: int
    hop: int
    source_rate: int

    def __post_init__(self):
        if not 1 <= self.hop <= self.frame_len:
            raise ConfigError(f"hop {self.hop} outside [1, {self.frame_len}]")
        if self.frames.ndim != 2 or self.frames.shape[1] != self.frame_len:
            raise ConfigError("frames must be a (num_frames, frame_len) array")
        self.frames.setflags(write=False)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def num_frames_for(signal_len: int, frame_len: int, hop: int) -> int:
    if signal_len < frame_len:
        return 0
    return (signal_len - frame_len) // hop + 1


def _frame_view(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    count = num_frames_for(x.size, frame_len, hop)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def hamming_weights(n: int) -> np.ndarray:
    # symmetric form, taper to 0.08 at both ends
    if n < 2:
        raise TooShort(f"Hamming window needs N >= 2, got {n}")
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    # mirror the first half so the window is symmetric to the last bit
    w[n - n // 2:] = w[:n // 2][::-1]
    return w


def hamming_window(frame) -> np.ndarray:
    x = np.asarray(frame, dtype=np.float64)
    return x * hamming_weights(x.shape[-1])


def short_term_log_energy(frame, floor_db: float = -120.0) -> float:
    """Frame energy in dB, ``10 log10(sum s^2)``, floored at ``floor_db``."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size == 0:
        raise TooShort("empty frame")
    e = float(np.dot(x, x))
    if e <= 0.0:
        return float(floor_db)
    return max(10.0 * np.log10(e), float(floor_db))


def _frame_energies(frames: np.ndarray, floor_db: float) -> np.ndarray:
    e = np.einsum("ij,ij->i", frames, frames)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(e)
    return np.maximum(np.where(e > 0, db, floor_db), floor_db)


def _lead_frame_count(config: PreprocessConfig, rate: int, frame_len: int, hop: int) -> int:
    lead = int(round(config.noise_lead_ms * rate / 1000.0))
    return max(num_frames_for(lead, frame_len, hop), 1)


def wiener_denoise(utterance: Utterance, config: PreprocessConfig) -> Utterance:
    """Single-pass spectral Wiener gain with overlap-add resynthesis.

    The noise power spectrum is the average periodogram of the Hamming
    windowed frames inside the first ``noise_lead_ms``. Each frame gets the
    gain ``max(1 - P_noise/P_frame, gain_floor)`` (capped at 1), frames are
    overlap-added at 50 % and divided by the summed window so that unity gain
    reconstructs the input exactly.
    """
    rate = utterance.sample_rate
    x = utterance.samples
    n = config.frame_len(rate)
    hop = max(n // 2, 1)
    lead = int(round(config.noise_lead_ms * rate / 1000.0))
    if x.size < lead + n:
        raise TooShort(f"utterance of {x.size} samples shorter than noise lead + one frame")

    count = int(np.ceil(max(x.size - n, 0) / hop)) + 1
    padded = np.zeros((count - 1) * hop + n)
    padded[:x.size] = x
    win = hamming_weights(n)
    frames = _frame_view(padded, n, hop) * win
    spec = np.fft.rfft(frames, axis=1)
    power = spec.real ** 2 + spec.imag ** 2

    noise_psd = power[:_lead_frame_count(config, rate, n, hop)].mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(power > 0, noise_psd / power, 0.0)
    gain = np.clip(1.0 - ratio, config.wiener_gain_floor, 1.0)
    filtered = np.fft.irfft(spec * gain, n=n, axis=1)

    out = np.zeros_like(padded)
    norm = np.zeros_like(padded)
    for i in range(count):
        out[i * hop:i * hop + n] += filtered[i]
        norm[i * hop:i * hop + n] += win
    y = out[:x.size] / norm[:x.size]
    return Utterance(np.clip(y, -1.0, 1.0), rate)


def detect_endpoints(utterance: Utterance, config: PreprocessConfig) -> tuple[int, int]:
    """Return inclusive ``(start, end)`` sample bounds of the speech region.

    Threshold is ``E_noise + margin * (E_max - E_noise)`` on the per-frame
    log energies, where ``E_noise`` averages the frames inside the noise
    lead. The longest run of frames above threshold (first one on ties) is
    widened by ``hangover_frames`` on both sides and clamped to the signal.
    """
    rate = utterance.sample_rate
    n = config.frame_len(rate)
    hop = config.hop(rate)
    x = utterance.samples
    if x.size < n:
        raise TooShort(f"utterance of {x.size} samples shorter than one frame ({n})")
    energies = _frame_energies(_frame_view(x, n, hop), config.energy_floor_db)
    e_noise = energies[:_lead_frame_count(config, rate, n, hop)].mean()
    e_max = energies.max()
    if e_max <= e_noise:
        raise NoSpeechDetected("no frame rises above the noise-lead energy")
    threshold = e_noise + config.endpoint_margin_fraction * (e_max - e_noise)
    above = energies > threshold
    if not above.any():
        raise NoSpeechDetected("no frame exceeds the endpoint threshold")

    # longest run of consecutive above-threshold frames
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    best = int(np.argmax(stops - starts))
    first = max(int(starts[best]) - config.hangover_frames, 0)
    last = int(stops[best]) + config.hangover_frames

    start = first * hop
    if last >= energies.size - 1:
        end = x.size - 1
    else:
        end = min(last * hop + n - 1, x.size - 1)
    return start, end


def pre_emphasize(utterance: Utterance, alpha: float) -> Utterance:
    """First-order FIR ``y[t] = s[t] - alpha * s[t-1]`` with ``s[-1] = 0``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"pre-emphasis alpha must be in [0, 1], got {alpha}")
    # |y| can reach 2 for alpha near 1; the Utterance range forces a clip here
    y = _emphasis(utterance.samples, alpha)
    return Utterance(np.clip(y, -1.0, 1.0), utterance.sample_rate)


def _emphasis(s: np.ndarray, alpha: float) -> np.ndarray:
    y = s.copy()
    y[1:] -= alpha * s[:-1]
    return y


def frame_blocks(utterance: Utterance, config: PreprocessConfig) -> FrameMatrix:
    rate = utterance.sample_rate
    n = config.frame_len(rate)
    hop = config.hop(rate)
    if len(utterance) < n:
        raise TooShort(f"signal of {len(utterance)} samples shorter than frame ({n})")
    return FrameMatrix(_frame_view(utterance.samples, n, hop), n, hop, rate)


def preprocess_pipeline(utterance: Utterance, config: PreprocessConfig) -> FrameMatrix:
    denoised = wiener_denoise(utterance, config)
    start, end = detect_endpoints(denoised, config)
    if not 0.0 <= config.pre_emphasis_alpha <= 1.0:
        raise ConfigError("pre-emphasis alpha must be in [0, 1]")
    # unclipped pre-emphasis: framing works on the raw filtered array
    emphasized = _emphasis(denoised.samples[start:end + 1], config.pre_emphasis_alpha)
    rate = denoised.sample_rate
    n = config.frame_len(rate)
    hop = config.hop(rate)
    if emphasized.size < n:
        raise TooShort(f"speech region of {emphasized.size} samples shorter than frame ({n})")
    return FrameMatrix(hamming_window(_frame_view(emphasized, n, hop)), n, hop, rate)
