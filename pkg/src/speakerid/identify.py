"""Enrollment, model persistence, closed-set identification, evaluation and
parameter sweeps.

Corpora are directories laid out as ``<root>/<speaker_id>/<utterance>.wav``.
Speakers are ordered by sorted directory name and utterances by sorted file
name, so a corpus always maps to the same dataset.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import Utterance, read_wav
from .errors import (ConfigError, CorpusEmpty, DegenerateUtterance, DimMismatch,
                     ModelFormatError, NoSpeechDetected, SingleSpeaker, TooShort,
                     UnknownSpeakerLabel)
from .features import FeatureConfig, extract_features, pool
from .neurogenetic import (GaConfig, LabeledDataset, MlpConfig, MlpNetwork, TrainingReport,
                           forward, train_hybrid)
from .preprocess import PreprocessConfig, preprocess_pipeline

FORMAT_VERSION = 1
STD_EPS = 1e-12
SWEEP_PARAMETERS = ("gain", "speed", "hidden_nodes", "crossover_points", "generations")

# utterances that cannot be turned into a feature vector
UNUSABLE = (NoSpeechDetected, TooShort, DegenerateUtterance)


def _map(fn, items, workers):
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool_:
        return list(pool_.map(fn, items))


def utterance_vector(utterance: Utterance, preprocess: PreprocessConfig,
                     feature: FeatureConfig) -> np.ndarray:
    frames = preprocess_pipeline(utterance, preprocess)
    return pool(extract_features(frames, feature), feature.pooling).values


def list_corpus(root) -> list[tuple[str, str]]:
    """``(speaker_id, wav_path)`` pairs sorted by speaker, then file name."""
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise CorpusEmpty(f"corpus directory {root} does not exist")
    pairs = []
    for spk in sorted(os.listdir(root)):
        d = os.path.join(root, spk)
        if not os.path.isdir(d):
            continue
        for name in sorted(os.listdir(d)):
            if name.lower().endswith(".wav"):
                pairs.append((spk, os.path.join(d, name)))
    return pairs


@dataclass
class LoadReport:
    loaded: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class Normalization:
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalization":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std < STD_EPS, 1.0, std))

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds


def _vectors_for(pairs, preprocess, feature, workers):
    def one(pair):
        spk, path = pair
        try:
            return utterance_vector(read_wav(path), preprocess, feature)
        except UNUSABLE as exc:
            return exc
    return _map(one, pairs, workers)


def build_dataset(corpus_root, preprocess: PreprocessConfig = PreprocessConfig(),
                  feature: FeatureConfig = FeatureConfig(), workers=None):
    """Return ``(dataset, speaker_labels, normalization, load_report)``.

    Inputs are z-scored with statistics computed on this corpus.
    """
    pairs = list_corpus(corpus_root)
    if not pairs:
        raise CorpusEmpty(f"no .wav files under {corpus_root}")
    labels = sorted({spk for spk, _ in pairs})
    if len(labels) < 2:
        raise SingleSpeaker(f"corpus {corpus_root} has only speaker {labels[0]!r}")

    report = LoadReport()
    rows, targets = [], []
    for (spk, path), vec in zip(pairs, _vectors_for(pairs, preprocess, feature, workers)):
        if isinstance(vec, Exception):
            report.skipped.append((path, f"{type(vec).__name__}: {vec}"))
            continue
        rows.append(vec)
        onehot = np.zeros(len(labels))
        onehot[labels.index(spk)] = 1.0
        targets.append(onehot)
        report.loaded += 1
    if not rows:
        raise CorpusEmpty(f"no usable utterances under {corpus_root}")

    raw = np.array(rows)
    norm = Normalization.fit(raw)
    return LabeledDataset(norm.apply(raw), np.array(targets)), labels, norm, report


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class SpeakerModel:
    network: MlpNetwork
    speaker_labels: list[str]
    feature_config: FeatureConfig
    preprocess_config: PreprocessConfig
    normalization: Normalization
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.speaker_labels) != self.network.config.output_dim:
            raise DimMismatch(f"{len(self.speaker_labels)} labels for "
                              f"{self.network.config.output_dim} output nodes")
        n = self.network.config.input_dim
        if self.normalization.means.shape != (n,) or self.normalization.stds.shape != (n,):
            raise DimMismatch("normalization statistics do not match network input size")
        if np.any(self.normalization.stds <= 0):
            raise ModelFormatError("normalization stds must be positive")

    def to_dict(self) -> dict:
        net = self.network
        return {
            "format_version": self.format_version,
            "speaker_labels": list(self.speaker_labels),
            "preprocess_config": self.preprocess_config.to_dict(),
            "feature_config": self.feature_config.to_dict(),
            "normalization": {"means": self.normalization.means.tolist(),
                              "stds": self.normalization.stds.tolist()},
            "network": {
                "dims": [net.config.input_dim, net.config.hidden_dim, net.config.output_dim],
                "config": net.config.to_dict(),
                "hidden_weights": net.hidden_weights.tolist(),
                "hidden_biases": net.hidden_biases.tolist(),
                "output_weights": net.output_weights.tolist(),
                "output_biases": net.output_biases.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format_version {version!r}")
        try:
            net = d["network"]
            cfg = MlpConfig(**net["config"])
            if list(net["dims"]) != [cfg.input_dim, cfg.hidden_dim, cfg.output_dim]:
                raise DimMismatch("network dims disagree with its config")
            network = MlpNetwork(cfg, net["hidden_weights"], net["hidden_biases"],
                                 net["output_weights"], net["output_biases"])
            norm = Normalization(np.asarray(d["normalization"]["means"], dtype=np.float64),
                                 np.asarray(d["normalization"]["stds"], dtype=np.float64))
            return cls(network, list(d["speaker_labels"]),
                       FeatureConfig.from_dict(d["feature_config"]),
                       PreprocessConfig.from_dict(d["preprocess_config"]), norm, version)
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SpeakerModel":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelFormatError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


@dataclass
class EnrollResult:
    model: SpeakerModel
    report: TrainingReport
    training_rate: float
    load_report: LoadReport


def train_model(dataset: LabeledDataset, labels, norm: Normalization,
                preprocess: PreprocessConfig, feature: FeatureConfig,
                mlp_params: dict | None = None, ga: GaConfig = GaConfig()):
    mlp = MlpConfig(input_dim=dataset.inputs.shape[1], output_dim=len(labels),
                    **(mlp_params or {}))
    network, report = train_hybrid(dataset, mlp, ga)
    model = SpeakerModel(network, list(labels), feature, preprocess, norm)
    predicted = np.argmax(forward(network, dataset.inputs), axis=1)
    rate = 100.0 * float(np.mean(predicted == dataset.labels))
    return model, report, rate


def enroll(corpus_root, preprocess: PreprocessConfig = PreprocessConfig(),
           feature: FeatureConfig = FeatureConfig(), mlp_params: dict | None = None,
           ga: GaConfig = GaConfig(), workers=None) -> EnrollResult:
    """Build the training set from ``corpus_root`` and train a speaker model."""
    dataset, labels, norm, load_report = build_dataset(corpus_root, preprocess, feature, workers)
    model, report, rate = train_model(dataset, labels, norm, preprocess, feature, mlp_params, ga)
    return EnrollResult(model, report, rate, load_report)


def score_vector(model: SpeakerModel, vector) -> np.ndarray:
    return forward(model.network, model.normalization.apply(vector))


def identify(model: SpeakerModel, utterance: Utterance) -> tuple[str, np.ndarray]:
    """Closed-set decision: the label of the largest output (lowest index on ties)."""
    vec = utterance_vector(utterance, model.preprocess_config, model.feature_config)
    if vec.size != model.network.config.input_dim:
        raise DimMismatch(f"feature vector of dim {vec.size}, model expects "
                          f"{model.network.config.input_dim}")
    scores = score_vector(model, vec)
    return model.speaker_labels[int(np.argmax(scores))], scores


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvaluationReport:
    """Counts for one evaluation run.

    Utterances that could not be processed (no speech found, too short)
    are wrong by definition: they count in ``total`` and ``rejected`` but
    have no column in ``confusion``, so each confusion row sums to that
    speaker's total minus its rejections.
    """
    labels: list[str]
    confusion: np.ndarray
    rejected: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum() + self.rejected.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.confusion))

    @property
    def identification_rate(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0

    @property
    def per_speaker(self) -> dict[str, tuple[int, int]]:
        totals = self.confusion.sum(axis=1) + self.rejected
        return {lab: (int(totals[i]), int(self.confusion[i, i]))
                for i, lab in enumerate(self.labels)}

    def speaker_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["speaker", "total", "correct"])
        for lab, (tot, cor) in self.per_speaker.items():
            w.writerow([lab, tot, cor])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.labels, "rejected"])
        for i, lab in enumerate(self.labels):
            w.writerow([lab, *self.confusion[i].tolist(), int(self.rejected[i])])
        return buf.getvalue()

    def write(self, prefix) -> tuple[str, str]:
        """Write ``<prefix>_speakers.csv`` and ``<prefix>_confusion.csv``."""
        paths = (f"{prefix}_speakers.csv", f"{prefix}_confusion.csv")
        for path, text in zip(paths, (self.speaker_csv(), self.confusion_csv())):
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return paths


def _report_from(model: SpeakerModel, truth: list[int], vectors) -> EvaluationReport:
    n = len(model.speaker_labels)
    confusion = np.zeros((n, n), dtype=np.int64)
    rejected = np.zeros(n, dtype=np.int64)
    for true_idx, vec in zip(truth, vectors):
        if isinstance(vec, Exception):
            rejected[true_idx] += 1
            continue
        confusion[true_idx, int(np.argmax(score_vector(model, vec)))] += 1
    return EvaluationReport(list(model.speaker_labels), confusion, rejected)


def _test_pairs(model: SpeakerModel, test_root):
    pairs = list_corpus(test_root)
    if not pairs:
        raise CorpusEmpty(f"no .wav files under {test_root}")
    unknown = sorted({spk for spk, _ in pairs} - set(model.speaker_labels))
    if unknown:
        raise UnknownSpeakerLabel(f"test speakers not enrolled: {', '.join(unknown)}")
    return pairs


def evaluate(model: SpeakerModel, test_root, workers=None) -> EvaluationReport:
    pairs = _test_pairs(model, test_root)
    vectors = _vectors_for(pairs, model.preprocess_config, model.feature_config, workers)
    truth = [model.speaker_labels.index(spk) for spk, _ in pairs]
    return _report_from(model, truth, vectors)


# ---------------------------------------------------------------------------
# parameter sweep
# ---------------------------------------------------------------------------

def apply_sweep_value(parameter: str, value, mlp_params: dict, ga: GaConfig):
    """Return ``(mlp_params, ga)`` with ``parameter`` set to ``value``."""
    mlp_params = dict(mlp_params)
    if parameter == "gain":
        mlp_params.update(gain_hidden=float(value), gain_output=float(value))
    elif parameter == "speed":
        mlp_params.update(speed_hidden=float(value), speed_output=float(value))
    elif parameter == "hidden_nodes":
        mlp_params["hidden_dim"] = int(value)
    elif parameter == "crossover_points":
        ga = replace(ga, crossover_points=int(value))
    elif parameter == "generations":
        ga = replace(ga, generations=int(value))
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    return mlp_params, ga


@dataclass
class SweepResult:
    parameter: str
    rows: list[tuple]
    best_value: object

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "value", "trial", "identification_rate", "final_rms"])
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


def parameter_sweep(parameter: str, values, trials: int, train_root, test_root,
                    out_csv=None, preprocess: PreprocessConfig = PreprocessConfig(),
                    feature: FeatureConfig = FeatureConfig(), mlp_params: dict | None = None,
                    ga: GaConfig = GaConfig(), workers=None) -> SweepResult:
    """Enroll and evaluate once per (value, trial); trial ``t`` uses seed ``ga.rng_seed + t``.

    Features do not depend on any sweepable parameter, so both corpora are
    analysed once and reused by every run.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    mlp_params = dict(mlp_params or {})
    for v in values:  # fail fast on values the configs reject
        p, g = apply_sweep_value(parameter, v, mlp_params, ga)
        MlpConfig(input_dim=1, output_dim=1, **p)

    dataset, labels, norm, _ = build_dataset(train_root, preprocess, feature, workers)
    test_pairs = list_corpus(test_root)
    if not test_pairs:
        raise CorpusEmpty(f"no .wav files under {test_root}")
    unknown = sorted({spk for spk, _ in test_pairs} - set(labels))
    if unknown:
        raise UnknownSpeakerLabel(f"test speakers not enrolled: {', '.join(unknown)}")
    test_vectors = _vectors_for(test_pairs, preprocess, feature, workers)
    truth = [labels.index(spk) for spk, _ in test_pairs]

    rows = []
    means = []
    for v in values:
        p, g = apply_sweep_value(parameter, v, mlp_params, ga)
        rates = []
        for trial in range(trials):
            seeded = replace(g, rng_seed=ga.rng_seed + trial)
            model, report, _ = train_model(dataset, labels, norm, preprocess, feature, p, seeded)
            rate = _report_from(model, truth, test_vectors).identification_rate
            rates.append(rate)
            rows.append((parameter, v, trial, f"{rate:.4f}", repr(report.final_rms)))
        means.append(float(np.mean(rates)))
    result = SweepResult(parameter, rows, values[int(np.argmax(means))])
    if out_csv is not None:
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.to_csv())
    return result
