"""Acceptance criteria, one test per criterion, each printing a pass/fail line."""
import time

import numpy as np
import pytest

from oracles import (allpole_cepstrum, ar_process, frame_starts, naive_delta, naive_mfcc,
                     naive_real_cepstrum)
from speakerid.audio_io import Utterance, make_speaker_profiles, read_wav, write_corpus
from speakerid.cli import main
from speakerid.features import FeatureConfig, delta, lpc, lpcc, mfcc, real_cepstrum
from speakerid.identify import enroll, evaluate, identify, list_corpus
from speakerid.neurogenetic import (GaConfig, LabeledDataset, MlpConfig, decode_weights,
                                    forward, ga_evolve)
from speakerid.preprocess import (PreprocessConfig, detect_endpoints, frame_blocks,
                                  hamming_weights, hamming_window, num_frames_for, pre_emphasize)

from test_neurogenetic import XOR_GA, XOR_MLP, XOR_T, XOR_X, max_relative_gradient_error

pytestmark = pytest.mark.acceptance

RATE = 11025
SEED = 0


@pytest.fixture(scope="module")
def clean_run(tmp_path_factory):
    """Criterion 1 setup: synthesize, enroll with defaults, evaluate held-out phrases."""
    root = tmp_path_factory.mktemp("accept")
    t0 = time.perf_counter()
    profiles = make_speaker_profiles(5, SEED)
    write_corpus(root / "train", profiles, range(10), corpus_seed=SEED)
    write_corpus(root / "test", profiles, range(10, 15), corpus_seed=SEED)
    result = enroll(root / "train", ga=GaConfig(rng_seed=SEED))
    report = evaluate(result.model, root / "test")
    return root, profiles, result, report, time.perf_counter() - t0


def test_criterion_1_clean_corpus(clean_run, criterion):
    _, _, result, report, elapsed = clean_run
    with criterion("1", "clean corpus identification") as d:
        d.update(rate=f"{report.identification_rate:.2f}", training_rate=f"{result.training_rate:.2f}",
                 seconds=f"{elapsed:.1f}")
        cfg = result.model.network.config
        assert (cfg.gain_hidden, cfg.speed_hidden, cfg.hidden_dim) == (0.4, 0.15, 30)
        assert report.total == 25
        assert report.identification_rate >= 90.0
        assert result.training_rate == 100.0
        assert elapsed < 120.0


@pytest.fixture(scope="module")
def noisy_root(clean_run):
    root, profiles, *_ = clean_run
    write_corpus(root / "noisy", profiles, range(10, 15), noise_snr_db=10.0, corpus_seed=SEED)
    return root / "noisy"


def test_criterion_2_noisy_corpus(clean_run, noisy_root, criterion):
    _, _, result, clean, _ = clean_run
    t0 = time.perf_counter()
    noisy = evaluate(result.model, noisy_root)
    elapsed = time.perf_counter() - t0
    with criterion("2", "noisy corpus below clean, above chance") as d:
        d.update(noisy=f"{noisy.identification_rate:.2f}", clean=f"{clean.identification_rate:.2f}",
                 seconds=f"{elapsed:.1f}")
        assert 20.0 < noisy.identification_rate < clean.identification_rate
        assert elapsed < 60.0


def test_criterion_3_feature_ranking(clean_run, noisy_root, tmp_path, criterion):
    root = clean_run[0]
    out = tmp_path / "features.csv"
    rows = []
    with criterion("3", "all five feature types evaluated on noisy set") as d:
        for method in ("MFCC", "DMFCC", "DDMFCC", "RCC", "LPCC"):
            model = enroll(root / "train", feature=FeatureConfig(method=method),
                           ga=GaConfig(rng_seed=SEED)).model
            rate = evaluate(model, noisy_root).identification_rate
            rows.append(f"{method},{rate:.2f}")
        out.write_text("feature,identification_rate\n" + "\n".join(rows) + "\n")
        d["rows"] = ";".join(rows)
        lines = out.read_text().splitlines()
        assert len(lines) == 6
        assert [l.split(",")[0] for l in lines[1:]] == ["MFCC", "DMFCC", "DDMFCC", "RCC", "LPCC"]


def test_criterion_4_gradient_check(criterion):
    with criterion("4", "backprop vs central differences on 20 3-4-2 nets") as d:
        worst = max(max_relative_gradient_error(seed) for seed in range(20))
        d["max_rel_error"] = f"{worst:.2e}"
        assert worst < 1e-4


def test_criterion_5_ga_sanity(criterion):
    ds = LabeledDataset(XOR_X, XOR_T)
    with criterion("5", "GA solves XOR, best-fitness history non-increasing") as d:
        best, _ = ga_evolve(ds, XOR_MLP, GaConfig(rng_seed=SEED, **XOR_GA))
        predicted = np.argmax(forward(decode_weights(best, XOR_MLP), XOR_X), axis=1)
        monotone = 0
        for seed in range(100):
            _, history = ga_evolve(ds, XOR_MLP, GaConfig(rng_seed=seed, **XOR_GA))
            monotone += all(b <= a for a, b in zip(history, history[1:]))
        d.update(best_fitness=f"{best.fitness:.4f}", monotone_runs=f"{monotone}/100")
        assert best.fitness < 0.25
        assert predicted.tolist() == [0, 1, 1, 0]
        assert monotone == 100


def test_criterion_6_dsp_oracles(criterion):
    r = np.random.default_rng(SEED)
    cfg = FeatureConfig()
    worst = {"mfcc": 0.0, "rcc": 0.0, "delta": 0.0}
    with criterion("6", "DSP outputs match direct-sum oracles") as d:
        for _ in range(100):
            frame = hamming_window(r.uniform(-1, 1, 220))
            worst["mfcc"] = max(worst["mfcc"], np.max(np.abs(
                mfcc(frame, RATE, cfg) - naive_mfcc(frame, RATE, 256, 26, 12))))
            worst["rcc"] = max(worst["rcc"], np.max(np.abs(
                real_cepstrum(frame, cfg) - naive_real_cepstrum(frame, 256, 12))))
        for _ in range(100):
            rows = r.standard_normal((int(r.integers(1, 30)), 12))
            worst["delta"] = max(worst["delta"], np.max(np.abs(delta(rows, 2) - naive_delta(rows, 2))))
        a = lpc(ar_process([0.9, -0.2], 20000, seed=SEED), 2)
        lp_err = np.max(np.abs(a - [0.9, -0.2]))
        a8 = lpc(hamming_window(r.standard_normal(300)), 8)
        cep_err = np.max(np.abs(lpcc(a8, 8) - allpole_cepstrum(a8, 8)))
        d.update({k: f"{v:.1e}" for k, v in worst.items()}, lpc=f"{lp_err:.1e}", lpcc=f"{cep_err:.1e}")
        assert all(v <= 1e-6 for v in worst.values())
        assert lp_err <= 1e-2
        assert cep_err <= 1e-4


def _tone_between(pre, dur, post):
    t = np.arange(int(dur * RATE))
    return Utterance(np.concatenate([np.zeros(int(pre * RATE)),
                                     0.5 * np.sin(2 * np.pi * 440 * t / RATE),
                                     np.zeros(int(post * RATE))]))


def test_criterion_7_pipeline_invariants(clean_run, criterion):
    root, *_ = clean_run
    r = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    with criterion("7", "pipeline invariants") as d:
        # gain invariance of identify for MFCC-family and RCC models
        fast = dict(max_epochs=100)
        wavs = [read_wav(p) for _, p in list_corpus(root / "test")[::5]]
        worst = 0.0
        for method in ("MFCC", "DMFCC", "DDMFCC", "RCC"):
            model = enroll(root / "train", feature=FeatureConfig(method=method, pooling="mean_std"),
                           mlp_params=fast, ga=GaConfig(generations=2)).model
            for utt in wavs:
                for gain in (0.3, 1.8):
                    a, sa = identify(model, utt)
                    b, sb = identify(model, Utterance(utt.samples * gain))
                    assert a == b
                    worst = max(worst, float(np.max(np.abs(sa - sb))))
        assert worst <= 1e-6

        # endpoints within 25 ms on constructed boundaries
        tight = PreprocessConfig(hangover_frames=0)
        ep_worst = 0.0
        for pre, dur, post in [(0.2, 0.5, 0.3), (0.15, 1.0, 0.15), (0.3, 0.4, 0.2), (0.12, 2.0, 0.5)]:
            start, end = detect_endpoints(_tone_between(pre, dur, post), tight)
            ep_worst = max(ep_worst, abs(start / RATE - pre), abs(end / RATE - (pre + dur)))
        assert ep_worst <= 0.025

        # Hamming symmetry
        for n in range(2, 400):
            w = hamming_weights(n)
            assert np.array_equal(w, w[::-1])

        # pre-emphasis identity at alpha = 0
        for _ in range(50):
            x = r.uniform(-1, 1, int(r.integers(1, 2000)))
            assert np.array_equal(pre_emphasize(Utterance(x), 0.0).samples, x)

        # frame count vs enumeration
        for _ in range(200):
            length, flen = int(r.integers(1, 5000)), int(r.integers(1, 400))
            hop = int(r.integers(1, flen + 1))
            assert num_frames_for(length, flen, hop) == len(frame_starts(length, flen, hop))
        assert frame_blocks(Utterance(np.zeros(RATE)), PreprocessConfig()).num_frames == 99

        elapsed = time.perf_counter() - t0
        d.update(gain_max_diff=f"{worst:.1e}", endpoint_max_err_s=f"{ep_worst:.4f}",
                 seconds=f"{elapsed:.1f}")
        assert elapsed < 180.0


def test_criterion_8_determinism(clean_run, tmp_path, criterion, capsys):
    root = clean_run[0]
    with criterion("8", "byte-identical models and sweep CSVs") as d:
        models = []
        for name in ("a.json", "b.json"):
            assert main(["enroll", str(root / "train"), str(tmp_path / name), "--seed", "7"]) == 0
            models.append((tmp_path / name).read_bytes())
        sweeps = []
        for name in ("a.csv", "b.csv"):
            assert main(["sweep", "--param", "hidden_nodes", "--values", "10,20", "--trials", "2",
                         "--train-dir", str(root / "train"), "--test-dir", str(root / "test"),
                         "--out", str(tmp_path / name), "--max-epochs", "200"]) == 0
            sweeps.append((tmp_path / name).read_bytes())
        capsys.readouterr()
        d.update(model_bytes=len(models[0]), sweep_rows=sweeps[0].count(b"\n") - 1)
        assert models[0] == models[1]
        assert sweeps[0] == sweeps[1]
