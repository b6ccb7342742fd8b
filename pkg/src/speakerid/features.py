"""Cepstral feature extraction: RCC, MFCC, delta MFCC, delta-delta MFCC,
LPC and LPCC, plus pooling of per-frame rows into one fixed-length vector.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import (ConfigError, DegenerateFrame, DegenerateUtterance, EmptyFeatures,
                     NumericalInstability)
from .preprocess import FrameMatrix

METHODS = ("RCC", "MFCC", "DMFCC", "DDMFCC", "LPC", "LPCC")
POOLINGS = ("mean", "mean_std")
REFLECTION_TOL = 1e-9


@dataclass(frozen=True)
class FeatureConfig:
    method: str = "MFCC"
    num_coefficients: int = 12
    num_mel_filters: int = 26
    fft_size: int | None = None  # None: next power of two >= frame length
    lpc_order: int = 12
    delta_window: int = 2
    log_floor: float = 1e-10
    pooling: str = "mean"

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in METHODS:
            raise ConfigError(f"unknown feature method {self.method!r}; choose from {METHODS}")
        object.__setattr__(self, "method", method)
        if self.pooling not in POOLINGS:
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.num_coefficients < 1 or self.lpc_order < 1 or self.delta_window < 1:
            raise ConfigError("num_coefficients, lpc_order and delta_window must be >= 1")
        if method in ("MFCC", "DMFCC", "DDMFCC") and self.num_coefficients >= self.num_mel_filters:
            raise ConfigError("num_coefficients must be smaller than num_mel_filters")
        if self.fft_size is not None and (self.fft_size < 2 or self.fft_size & (self.fft_size - 1)):
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")
        if not self.log_floor > 0:
            raise ConfigError("log_floor must be positive")

    def nfft(self, frame_len: int) -> int:
        if self.fft_size is None:
            return 1 << max(int(frame_len - 1).bit_length(), 1)
        if self.fft_size < frame_len:
            raise ConfigError(f"fft_size {self.fft_size} shorter than frame length {frame_len}")
        return self.fft_size

    @property
    def dim(self) -> int:
        per_frame = self.lpc_order if self.method == "LPC" else self.num_coefficients
        return per_frame * (2 if self.pooling == "mean_std" else 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    method: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ConfigError("feature rows must form a 2-D array")
        if not np.all(np.isfinite(rows)):
            raise ConfigError("feature matrix contains non-finite entries")
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame_index"] + [f"c{i + 1}" for i in range(self.dim)])
            for i, row in enumerate(self.rows):
                w.writerow([i] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ConfigError("feature vector contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# cepstra
# ---------------------------------------------------------------------------

def real_cepstrum(frame, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Real cepstrum c_1..c_Q of a windowed frame (c_0 dropped)."""
    x = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    nfft = config.nfft(x.shape[-1])
    mag = np.abs(np.fft.fft(x, n=nfft, axis=-1))
    ceps = np.fft.ifft(np.log(np.maximum(mag, config.log_floor)), axis=-1).real
    out = ceps[:, 1:config.num_coefficients + 1]
    return out[0] if np.ndim(frame) == 1 else out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(num_filters: int, sample_rate: int) -> np.ndarray:
    """Edge/center frequencies in Hz: ``num_filters + 2`` points from 0 to Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_filters + 2))


@lru_cache(maxsize=32)
def mel_filterbank(num_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters over the ``nfft//2 + 1`` rfft bins, shape (filters, bins).

    Weights are evaluated at each bin's exact frequency, so narrow low
    filters never collapse to empty rows when bins are coarse.
    """
    pts = mel_centers(num_filters, sample_rate)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(np.minimum(rising, falling), 0.0)
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=32)
def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II rows 0..n_out-1."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    m = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


def mel_energies(frame, sample_rate: int, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    x = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    nfft = config.nfft(x.shape[-1])
    spec = np.fft.rfft(x, n=nfft, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    return power @ mel_filterbank(config.num_mel_filters, nfft, int(sample_rate)).T


def mfcc(frame, sample_rate: int, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """MFCC c_1..c_Q of one frame (1-D input) or of each row (2-D input)."""
    if config.num_coefficients >= config.num_mel_filters:
        raise ConfigError("num_coefficients must be smaller than num_mel_filters")
    logfb = np.log(np.maximum(mel_energies(frame, sample_rate, config), config.log_floor))
    d = dct_matrix(config.num_coefficients + 1, config.num_mel_filters)
    out = (logfb @ d.T)[:, 1:]
    return out[0] if np.ndim(frame) == 1 else out


def _as_rows(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.rows
    return np.asarray(features, dtype=np.float64)


def delta(features, window: int = 2):
    """Regression deltas over +-``window`` frames, edges replicated.

    Returns the same type it was given (FeatureMatrix or array).
    """
    c = _as_rows(features)
    if c.shape[0] < 1:
        raise EmptyFeatures("delta needs at least one frame")
    if window < 1:
        raise ConfigError("delta window must be >= 1")
    T = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], window, axis=0), c,
                             np.repeat(c[-1:], window, axis=0)])
    out = np.zeros_like(c)
    for tau in range(1, window + 1):
        out += tau * (padded[window + tau:window + tau + T] - padded[window - tau:window - tau + T])
    out /= 2.0 * sum(tau * tau for tau in range(1, window + 1))
    if isinstance(features, FeatureMatrix):
        return FeatureMatrix(out, features.method)
    return out


def delta_delta(features, window: int = 2):
    return delta(delta(features, window), window)


# ---------------------------------------------------------------------------
# linear prediction
# ---------------------------------------------------------------------------

def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the autocorrelation normal equations.

    Returns ``(a, k, err)`` with predictor ``s[n] ~ sum a[j] s[n-1-j]``,
    reflection coefficients ``k`` and final prediction error power.
    """
    if r[0] <= 0.0:
        raise DegenerateFrame("zero-energy frame has no LPC solution")
    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for i in range(order):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        ki = acc / err
        if abs(ki) >= 1.0 + REFLECTION_TOL:
            raise NumericalInstability(f"reflection coefficient {ki:.6g} at stage {i + 1}")
        k[i] = ki
        a[:i] = a[:i] - ki * a[:i][::-1]
        a[i] = ki
        err *= 1.0 - ki * ki
        if err <= 0.0:
            # perfectly predictable frame; remaining coefficients stay zero
            break
    return a, k, err


def lpc(frame, order: int = 12) -> np.ndarray:
    """LPC predictor coefficients a_1..a_p (autocorrelation method)."""
    x = np.asarray(frame, dtype=np.float64)
    if order >= x.size:
        raise ConfigError(f"LPC order {order} must be below frame length {x.size}")
    if not np.any(x):
        raise DegenerateFrame("zero-energy frame has no LPC solution")
    r = np.array([np.dot(x[:x.size - lag], x[lag:]) for lag in range(order + 1)])
    return levinson_durbin(r, order)[0]


def lpcc(lpc_coeffs, num_coefficients: int = 12) -> np.ndarray:
    """Cepstrum c_1..c_Q of the all-pole model 1/A(z) from its LPC set."""
    a = np.asarray(lpc_coeffs, dtype=np.float64)
    p = a.size
    if p < 1:
        raise ConfigError("LPC order must be >= 1")
    c = np.zeros(num_coefficients + 1)  # c[0] unused
    for n in range(1, num_coefficients + 1):
        acc = a[n - 1] if n <= p else 0.0
        for k in range(max(1, n - p), n):
            acc += (k / n) * c[k] * a[n - k - 1]
        c[n] = acc
    return c[1:]


# ---------------------------------------------------------------------------
# dispatch and pooling
# ---------------------------------------------------------------------------

def extract_features(frames: FrameMatrix, config: FeatureConfig) -> FeatureMatrix:
    x = frames.frames
    if x.shape[0] < 1:
        raise DegenerateUtterance("no frames to extract features from")
    method = config.method
    if method == "RCC":
        rows = real_cepstrum(x, config)
    elif method in ("MFCC", "DMFCC", "DDMFCC"):
        rows = mfcc(x, frames.source_rate, config)
        if method == "DMFCC":
            rows = delta(rows, config.delta_window)
        elif method == "DDMFCC":
            rows = delta_delta(rows, config.delta_window)
    else:
        kept = []
        for f in x:
            try:
                a = lpc(f, config.lpc_order)
            except DegenerateFrame:
                continue
            kept.append(a if method == "LPC" else lpcc(a, config.num_coefficients))
        if not kept:
            raise DegenerateUtterance("every frame was degenerate for LPC")
        rows = np.array(kept)
    return FeatureMatrix(np.atleast_2d(rows), method)


def pool(features, pooling: str = "mean") -> FeatureVector:
    rows = _as_rows(features)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise EmptyFeatures("cannot pool an empty feature matrix")
    if pooling == "mean":
        return FeatureVector(rows.mean(axis=0))
    if pooling == "mean_std":
        return FeatureVector(np.concatenate([rows.mean(axis=0), rows.std(axis=0)]))
    raise ConfigError(f"unknown pooling {pooling!r}")
