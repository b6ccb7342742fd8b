"""WAV input/output and a deterministic formant-synthesis toy corpus.

Only 16-bit mono PCM is handled. Integer samples map to floats by dividing
by 32768, so -32768 is exactly -1.0 and positive full scale is 32767/32768.
"""
from __future__ import annotations

import os
import struct
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import AudioIoError, ConfigError, CorruptHeader, FormatUnsupported

PCM_SCALE = 32768.0
DEFAULT_RATE = 11025
SILENCE_PAD_S = 0.15
# background level of a "clean" recording, about -50 dBFS (roughly 30 dB below the voice)
NOISE_FLOOR_RMS = 3e-3


@dataclass(frozen=True)
class Utterance:
    samples: np.ndarray
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size < 1:
            raise ConfigError("utterance must be a non-empty 1-D signal")
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 1.0):
            raise ConfigError("utterance samples must lie in [-1, 1]")
        if int(self.sample_rate) <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SyntheticSpeakerProfile:
    speaker_id: str
    formant_frequencies: tuple[float, float, float]
    formant_bandwidths: tuple[float, float, float] = (80.0, 100.0, 140.0)
    pitch: float = 120.0
    jitter_seed: int = 0

    def validate(self, sample_rate: int = DEFAULT_RATE) -> None:
        f = self.formant_frequencies
        if len(f) != 3 or not (0 < f[0] < f[1] < f[2] < sample_rate / 2):
            raise ConfigError(f"formants must be strictly increasing below Nyquist: {f}")
        if len(self.formant_bandwidths) != 3 or min(self.formant_bandwidths) <= 0:
            raise ConfigError("formant bandwidths must be three positive values")
        if not 60.0 <= self.pitch <= 400.0:
            raise ConfigError(f"pitch must be in [60, 400] Hz, got {self.pitch}")


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def read_wav(path) -> Utterance:
    """Read a 16-bit mono PCM RIFF/WAVE file into an :class:`Utterance`."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise AudioIoError(f"cannot read {path}: {exc}") from exc

    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE container")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid, size = struct.unpack("<4sI", blob[pos:pos + 8])
        body = pos + 8
        if body + size > len(blob):
            raise CorruptHeader(
                f"{path}: chunk {cid!r} declares {size} bytes, "
                f"only {len(blob) - body} present")
        if cid == b"fmt ":
            if size < 16:
                raise CorruptHeader(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", blob[body:body + 16])
        elif cid == b"data":
            data = blob[body:body + size]
        pos = body + size + (size & 1)
        if fmt is not None and data is not None:
            break

    if fmt is None or data is None:
        raise CorruptHeader(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt
    if tag != 1:
        raise FormatUnsupported(f"{path}: format tag {tag} is not PCM")
    if bits != 16:
        raise FormatUnsupported(f"{path}: {bits}-bit samples, need 16")
    if channels != 1:
        raise FormatUnsupported(f"{path}: {channels} channels, need mono")
    if rate <= 0:
        raise CorruptHeader(f"{path}: sample rate {rate}")
    if len(data) % 2 or not data:
        raise CorruptHeader(f"{path}: data chunk of {len(data)} bytes")

    pcm = np.frombuffer(data, dtype="<i2").astype(np.float64)
    return Utterance(pcm / PCM_SCALE, rate)


def to_pcm16(samples) -> np.ndarray:
    x = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(x, -32768, 32767).astype("<i2")


def write_wav(utterance: Utterance, path) -> None:
    try:
        with open(path, "wb") as fh, wave.open(fh, "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(utterance.sample_rate)
            wf.writeframes(to_pcm16(utterance.samples).tobytes())
    except OSError as exc:
        raise AudioIoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def _rosenberg_pulse(period: int, open_frac=0.4, close_frac=0.16) -> np.ndarray:
    n = np.arange(period, dtype=np.float64)
    tp = max(open_frac * period, 1.0)
    tn = max(close_frac * period, 1.0)
    g = np.zeros(period)
    rise = n < tp
    fall = (n >= tp) & (n < tp + tn)
    g[rise] = 0.5 * (1.0 - np.cos(np.pi * n[rise] / tp))
    g[fall] = np.cos(np.pi * (n[fall] - tp) / (2.0 * tn))
    return g


def _resonator(freq, bw, rate):
    r = np.exp(-np.pi * bw / rate)
    theta = 2.0 * np.pi * freq / rate
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a  # unity gain at DC


def synthesize_utterance(profile: SyntheticSpeakerProfile, phrase_seed: int,
                         duration_s: float = 1.0, noise_snr_db=None,
                         sample_rate: int = DEFAULT_RATE) -> Utterance:
    """Render one utterance of ``profile`` saying the abstract phrase ``phrase_seed``.

    Recipe: a Rosenberg glottal pulse train (pitch contour with slow
    drift, vibrato, per-period jitter and shimmer) is differentiated for lip
    radiation and passed through three cascaded second-order resonators.
    The phrase is split into three segments, each with its own small formant
    shift, so different phrase seeds give different but speaker-consistent
    spectra. ``duration_s`` is the voiced part; 0.15 s of silence is added
    before and after it. Peak level of the voiced part is 0.5.

    Without ``noise_snr_db`` the result still carries a white background
    floor of RMS ``NOISE_FLOOR_RMS``, as any microphone would. Exact digital
    silence would pin the silent frames to the energy floor and make
    endpoint detection depend on the overall level. With ``noise_snr_db``
    white Gaussian noise is added to the whole signal instead, scaled so
    that its power over the voiced region is exactly
    ``speech_power / 10**(snr/10)``.

    Every random draw comes from a generator seeded with
    ``(profile.jitter_seed, phrase_seed)`` so the output is bit-reproducible.
    """
    if not 0.3 <= duration_s <= 5.0:
        raise ConfigError(f"duration_s must be in [0.3, 5.0], got {duration_s}")
    profile.validate(sample_rate)
    rng = np.random.default_rng([int(profile.jitter_seed) & 0xFFFFFFFF,
                                 int(phrase_seed) & 0xFFFFFFFF])
    n_speech = int(round(duration_s * sample_rate))

    # phrase-level parameters, drawn in a fixed order
    drift = rng.uniform(-0.06, 0.06)
    vib_rate = rng.uniform(3.0, 6.0)
    vib_phase = rng.uniform(0.0, 2.0 * np.pi)
    seg_bounds = np.sort(rng.uniform(0.2, 0.8, size=2))
    seg_shift = rng.uniform(0.96, 1.04, size=(3, 3))

    # glottal excitation
    excitation = np.zeros(n_speech + 2 * sample_rate // 60 + 2)
    pos = 0
    while pos < n_speech:
        t = pos / n_speech
        f0 = profile.pitch * (1.0 + drift * (t - 0.5)
                              + 0.02 * np.sin(2 * np.pi * vib_rate * pos / sample_rate + vib_phase))
        f0 *= 1.0 + 0.01 * rng.standard_normal()
        period = max(int(round(sample_rate / f0)), 4)
        amp = 1.0 + 0.05 * rng.standard_normal()
        excitation[pos:pos + period] += amp * _rosenberg_pulse(period)
        pos += period
    excitation = np.diff(excitation[:n_speech + 1])

    # segment-wise formant filtering, filter state carried across segments
    cuts = [0, *(int(b * n_speech) for b in seg_bounds), n_speech]
    speech = np.empty(n_speech)
    states = [np.zeros(2) for _ in range(3)]
    for s in range(3):
        seg = excitation[cuts[s]:cuts[s + 1]]
        for k in range(3):
            b, a = _resonator(profile.formant_frequencies[k] * seg_shift[s, k],
                              profile.formant_bandwidths[k], sample_rate)
            seg, states[k] = lfilter(b, a, seg, zi=states[k])
        speech[cuts[s]:cuts[s + 1]] = seg

    ramp = min(int(0.03 * sample_rate), n_speech // 4)
    env = np.ones(n_speech)
    env[:ramp] = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
    env[n_speech - ramp:] = env[:ramp][::-1]
    speech *= env
    speech *= 0.5 / np.max(np.abs(speech))

    pad = int(round(SILENCE_PAD_S * sample_rate))
    clean = np.concatenate([np.zeros(pad), speech, np.zeros(pad)])
    noise = rng.standard_normal(clean.size)
    if noise_snr_db is None:
        return Utterance(np.clip(clean + NOISE_FLOOR_RMS * noise, -1.0, 1.0), sample_rate)

    region = slice(pad, pad + n_speech)
    speech_power = np.mean(clean[region] ** 2)
    target = speech_power / 10.0 ** (noise_snr_db / 10.0)
    noise *= np.sqrt(target / np.mean(noise[region] ** 2))
    return Utterance(np.clip(clean + noise, -1.0, 1.0), sample_rate)


def speech_region(duration_s: float, sample_rate: int = DEFAULT_RATE) -> slice:
    """Sample range of the voiced part of a synthesized utterance."""
    pad = int(round(SILENCE_PAD_S * sample_rate))
    n = int(round(duration_s * sample_rate))
    return slice(pad, pad + n)


def make_speaker_profiles(count: int, seed: int = 0) -> list[SyntheticSpeakerProfile]:
    """Draw ``count`` distinct speaker profiles, deterministic in ``seed``.

    Formants are spread on a jittered grid so every pair of speakers differs
    by at least one formant step.
    """
    if count < 1:
        raise ConfigError("need at least one speaker")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFF)
    # evenly spaced base positions, then shuffled independently per formant
    grid = (np.arange(count) + 0.5) / count
    profiles = []
    f1_order = rng.permutation(count)
    f2_order = rng.permutation(count)
    pitch_order = rng.permutation(count)
    for i in range(count):
        f1 = 350.0 + 450.0 * grid[f1_order[i]] + rng.uniform(-15, 15)
        f2 = 1100.0 + 1000.0 * grid[f2_order[i]] + rng.uniform(-30, 30)
        f3 = 2500.0 + rng.uniform(0.0, 700.0)
        bws = (rng.uniform(60, 110), rng.uniform(80, 140), rng.uniform(110, 190))
        pitch = 90.0 + 150.0 * grid[pitch_order[i]] + rng.uniform(-5, 5)
        profiles.append(SyntheticSpeakerProfile(
            speaker_id=f"speaker_{i + 1:02d}",
            formant_frequencies=(float(f1), float(f2), float(f3)),
            formant_bandwidths=tuple(float(b) for b in bws),
            pitch=float(pitch),
            jitter_seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return profiles


def phrase_seed_for(corpus_seed: int, speaker_index: int, utterance_index: int) -> int:
    """Phrase seed shared across corpora built with the same ``corpus_seed``."""
    ss = np.random.SeedSequence([int(corpus_seed) & 0xFFFFFFFF, speaker_index, utterance_index])
    return int(ss.generate_state(1)[0])


def write_corpus(out_dir, profiles, utterance_indices, noise_snr_db=None,
                 corpus_seed: int = 0, duration_s: float = 1.0,
                 sample_rate: int = DEFAULT_RATE):
    """Write ``<out>/<speaker_id>/utt_<i>.wav`` for each profile and index.

    Returns the list of written paths in write order.
    """
    written = []
    for s, prof in enumerate(profiles):
        spk_dir = os.path.join(os.fspath(out_dir), prof.speaker_id)
        try:
            os.makedirs(spk_dir, exist_ok=True)
        except OSError as exc:
            raise AudioIoError(f"cannot create {spk_dir}: {exc}") from exc
        for i in utterance_indices:
            utt = synthesize_utterance(prof, phrase_seed_for(corpus_seed, s, i),
                                       duration_s, noise_snr_db, sample_rate)
            path = os.path.join(spk_dir, f"utt_{i:02d}.wav")
            write_wav(utt, path)
            written.append(path)
    return written
