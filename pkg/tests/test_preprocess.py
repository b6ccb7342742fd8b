import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import frame_starts
from speakerid.audio_io import Utterance
from speakerid.errors import ConfigError, NoSpeechDetected, TooShort
from speakerid.preprocess import (PreprocessConfig, detect_endpoints, frame_blocks,
                                  hamming_weights, hamming_window, pre_emphasize,
                                  preprocess_pipeline, short_term_log_energy, wiener_denoise)

RATE = 11025
CFG = PreprocessConfig()
finite = st.floats(-1.0, 1.0, allow_nan=False)


def tone(n, freq=440.0, amp=0.5, rate=RATE):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / rate)


def silence_tone_silence(pre_s, tone_s, post_s, rate=RATE):
    return Utterance(np.concatenate([np.zeros(int(pre_s * rate)),
                                     tone(int(tone_s * rate)),
                                     np.zeros(int(post_s * rate))]), rate)


# ---- config -------------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    dict(pre_emphasis_alpha=1.2), dict(frame_len_ms=5), dict(frame_len_ms=31),
    dict(overlap_pct=10), dict(overlap_pct=80), dict(endpoint_margin_fraction=0.0),
    dict(hangover_frames=-1), dict(wiener_gain_floor=0.0),
])
def test_config_ranges(bad):
    with pytest.raises(ConfigError):
        PreprocessConfig(**bad)


def test_frame_geometry():
    assert CFG.frame_len(RATE) == 220
    assert CFG.hop(RATE) == 110


# ---- log energy ------------------------------------------------------------------

def test_energy_floor():
    assert short_term_log_energy(np.zeros(50), -120.0) == -120.0


def test_energy_direct():
    assert short_term_log_energy(np.ones(100)) == pytest.approx(20.0, abs=1e-12)


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(0.01, 1.0)),
       st.floats(0.01, 100.0))
def test_energy_scaling(frame, c):
    base = short_term_log_energy(frame, -300.0)
    assert short_term_log_energy(c * frame, -300.0) == pytest.approx(base + 20 * np.log10(c), abs=1e-9)


@settings(max_examples=30)
@given(arrays(np.float64, 64, elements=finite), st.integers(0, 63))
def test_energy_shift_invariant(frame, k):
    a = short_term_log_energy(frame)
    assert short_term_log_energy(np.roll(frame, k)) == pytest.approx(a, abs=1e-9)


# ---- pre-emphasis ------------------------------------------------------------------

def test_pre_emphasis_identity_at_zero(rng):
    u = Utterance(rng.uniform(-1, 1, 300))
    np.testing.assert_array_equal(pre_emphasize(u, 0.0).samples, u.samples)


def test_pre_emphasis_cancels_constant():
    np.testing.assert_array_equal(pre_emphasize(Utterance([1.0, 1.0, 1.0]), 1.0).samples, [1, 0, 0])


def test_pre_emphasis_direct():
    np.testing.assert_allclose(pre_emphasize(Utterance([1.0, 1.0, 1.0]), 0.97).samples,
                               [1.0, 0.03, 0.03], atol=1e-15)


def test_pre_emphasis_alpha_range():
    with pytest.raises(ConfigError):
        pre_emphasize(Utterance([0.1]), -0.1)


# ---- framing -------------------------------------------------------------------------

def test_frame_count_one_second():
    fm = frame_blocks(Utterance(np.zeros(RATE)), CFG)
    assert (fm.frame_len, fm.hop) == (220, 110)
    assert fm.num_frames == len(frame_starts(RATE, 220, 110)) == 99


def test_exact_frame_length_gives_one_frame():
    assert frame_blocks(Utterance(np.zeros(220)), CFG).num_frames == 1


def test_too_short_signal():
    with pytest.raises(TooShort):
        frame_blocks(Utterance(np.zeros(219)), CFG)


def test_overlap_out_of_band():
    with pytest.raises(ConfigError):
        frame_blocks(Utterance(np.zeros(500)), PreprocessConfig(overlap_pct=10))


@settings(max_examples=40, deadline=None)
@given(st.integers(220, 3000), st.sampled_from([25.0, 40.0, 50.0, 66.0, 75.0]),
       st.sampled_from([10.0, 20.0, 30.0]))
def test_frames_match_enumeration(n, overlap, ms):
    cfg = PreprocessConfig(overlap_pct=overlap, frame_len_ms=ms)
    x = np.linspace(-1, 1, n)
    L = cfg.frame_len(RATE)
    if n < L:
        return
    fm = frame_blocks(Utterance(x), cfg)
    starts = frame_starts(n, L, fm.hop)
    assert fm.num_frames == len(starts)
    for i, s in enumerate(starts):
        np.testing.assert_array_equal(fm.frames[i], x[s:s + L])


# ---- windowing -------------------------------------------------------------------------

def test_hamming_three_points():
    np.testing.assert_allclose(hamming_window(np.ones(3)), [0.08, 1.0, 0.08], atol=1e-15)


def test_hamming_symmetry():
    w = hamming_weights(220)
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)


def test_hamming_zero_and_short():
    np.testing.assert_array_equal(hamming_window(np.zeros(10)), np.zeros(10))
    with pytest.raises(TooShort):
        hamming_window([1.0])


@settings(max_examples=30)
@given(arrays(np.float64, st.integers(2, 100), elements=finite))
def test_hamming_length_and_idempotence(frame):
    once = hamming_window(frame)
    assert once.shape == frame.shape
    twice = hamming_window(once)
    assert np.array_equal(twice, once) == (not np.any(once))


# ---- Wiener ------------------------------------------------------------------------------

def test_wiener_zero_in_zero_out():
    out = wiener_denoise(Utterance(np.zeros(4000)), CFG)
    np.testing.assert_array_equal(out.samples, np.zeros(4000))


def test_wiener_passes_tone_after_silent_lead():
    x = np.concatenate([np.zeros(1200), tone(6000)])
    out = wiener_denoise(Utterance(x), CFG).samples
    assert out.size == x.size
    assert np.max(np.abs(out[1200:] - x[1200:])) < 1e-3


def test_wiener_improves_snr_at_zero_db(rng):
    n_lead, n_sig = 1103, 11025
    clean = np.concatenate([np.zeros(n_lead), tone(n_sig, amp=0.3)])
    sig_power = np.mean(clean[n_lead:] ** 2)
    noise = rng.standard_normal(clean.size) * np.sqrt(sig_power)
    noisy = clean + noise
    out = wiener_denoise(Utterance(np.clip(noisy, -1, 1)), CFG).samples
    region = slice(n_lead, None)

    def snr(y):
        return 10 * np.log10(np.sum(clean[region] ** 2) / np.sum((y[region] - clean[region]) ** 2))

    assert snr(out) - snr(noisy) >= 5.0


def test_wiener_too_short():
    with pytest.raises(TooShort):
        wiener_denoise(Utterance(np.zeros(1200)), CFG)


def test_wiener_unity_floor_is_identity(rng):
    x = rng.uniform(-0.5, 0.5, 3001)
    out = wiener_denoise(Utterance(x), PreprocessConfig(wiener_gain_floor=1.0)).samples
    np.testing.assert_allclose(out, x, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.5), st.floats(0.0, 0.5))
def test_wiener_never_amplifies(seed, noise_amp, tone_amp):
    r = np.random.default_rng(seed)
    x = noise_amp * r.uniform(-1, 1, 4000)
    x[1500:] += tone_amp * np.sin(0.3 * np.arange(2500))
    x = np.clip(x, -1, 1)
    out = wiener_denoise(Utterance(x), CFG).samples
    n, hop = 220, 110
    for s in range(0, x.size - n + 1, hop):
        assert np.sum(out[s:s + n] ** 2) <= np.sum(x[s:s + n] ** 2) + 1e-9


# ---- endpoints ------------------------------------------------------------------------------

TIGHT = PreprocessConfig(hangover_frames=0)


def test_endpoints_on_constructed_boundaries():
    u = silence_tone_silence(0.2, 0.5, 0.3)
    start, end = detect_endpoints(u, TIGHT)
    assert abs(start / RATE - 0.2) <= 0.025
    assert abs(end / RATE - 0.7) <= 0.025


@pytest.mark.parametrize("pre,dur,post", [(0.15, 1.0, 0.15), (0.3, 0.4, 0.2), (0.12, 2.0, 0.5)])
def test_endpoints_other_boundaries(pre, dur, post):
    start, end = detect_endpoints(silence_tone_silence(pre, dur, post), TIGHT)
    assert abs(start / RATE - pre) <= 0.025
    assert abs(end / RATE - (pre + dur)) <= 0.025


def test_endpoints_all_silence():
    with pytest.raises(NoSpeechDetected):
        detect_endpoints(Utterance(np.zeros(5000)), CFG)


def test_endpoints_tone_from_sample_zero():
    x = np.concatenate([tone(3000), np.zeros(2000)])
    start, end = detect_endpoints(Utterance(x), CFG)
    assert start == 0 and end > start


def test_endpoints_hangover_extends_region():
    u = silence_tone_silence(0.3, 0.4, 0.3)
    s0, e0 = detect_endpoints(u, TIGHT)
    s5, e5 = detect_endpoints(u, PreprocessConfig(hangover_frames=5))
    assert s0 - s5 == 5 * 110
    assert e5 - e0 == 5 * 110


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1200, 3000), st.integers(300, 4000),
       st.integers(0, 3000), st.integers(0, 8))
def test_endpoint_bounds_contain_peak_frame(seed, lead, burst, tail, hang):
    r = np.random.default_rng(seed)
    x = np.concatenate([0.001 * r.standard_normal(lead),
                        0.5 * r.uniform(-1, 1, burst),
                        0.001 * r.standard_normal(tail)])
    u = Utterance(np.clip(x, -1, 1))
    cfg = PreprocessConfig(hangover_frames=hang)
    start, end = detect_endpoints(u, cfg)
    assert 0 <= start < end <= x.size - 1
    energies = [np.sum(x[s:s + 220] ** 2) for s in range(0, x.size - 219, 110)]
    peak = int(np.argmax(energies)) * 110
    assert start <= peak and peak + 219 <= end


# ---- pipeline --------------------------------------------------------------------------------

def test_pipeline_frame_count_matches_cropped_region():
    u = silence_tone_silence(0.15, 1.0, 0.15)
    fm = preprocess_pipeline(u, CFG)
    start, end = detect_endpoints(wiener_denoise(u, CFG), CFG)
    n = end - start + 1
    assert fm.num_frames == (n - 220) // 110 + 1


def test_pipeline_frames_are_windowed():
    u = silence_tone_silence(0.15, 1.0, 0.15)
    fm = preprocess_pipeline(u, CFG)
    assert np.all(np.abs(fm.frames[:, 0]) <= 0.08 * 2 + 1e-12)


def test_pipeline_propagates_no_speech():
    with pytest.raises(NoSpeechDetected):
        preprocess_pipeline(Utterance(np.zeros(6000)), CFG)


def test_pipeline_degenerates_to_plain_framing(rng):
    # quiet lead, then loud content to the end; a huge hangover reaches back to sample 0
    x = np.concatenate([0.001 * rng.standard_normal(1200), rng.uniform(-0.5, 0.5, 5000)])
    x = np.clip(x, -1, 1)
    cfg = PreprocessConfig(pre_emphasis_alpha=0.0, wiener_gain_floor=1.0,
                           endpoint_margin_fraction=1e-9, hangover_frames=1000)
    fm = preprocess_pipeline(Utterance(x), cfg)
    direct = np.array([hamming_window(x[s:s + 220]) for s in frame_starts(x.size, 220, 110)])
    assert fm.frames.shape == direct.shape
    np.testing.assert_allclose(fm.frames, direct, atol=1e-12)
