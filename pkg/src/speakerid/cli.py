"""Command-line interface: ``speakerid {synth,enroll,identify,evaluate,sweep}``.

Settings resolve as built-in defaults, then the JSON file given by
``--config``, then explicit flags. Exit codes: 0 success, 2 usage, config
or corpus problem, 3 training failure, 4 no speech found.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import __version__
from .audio_io import make_speaker_profiles, read_wav, write_corpus
from .errors import ConfigError, NoSpeechDetected, SpeakerIdError
from .features import METHODS, FeatureConfig
from .identify import (SWEEP_PARAMETERS, SpeakerModel, build_dataset, evaluate, identify,
                       parameter_sweep, train_model)
from .neurogenetic import GaConfig, MlpConfig
from .preprocess import PreprocessConfig

EXIT_OK, EXIT_USAGE, EXIT_TRAINING, EXIT_NO_SPEECH = 0, 2, 3, 4

log = logging.getLogger("speakerid")

# MLP fields that come from the data rather than from settings
_MLP_DERIVED = ("input_dim", "output_dim")
# flag spellings that differ from the dataclass field name
_ALIASES = {("feature_config", "method"): "--feature",
            ("mlp_config", "hidden_dim"): "--hidden-nodes",
            ("ga_config", "rng_seed"): "--seed"}
_SECTIONS = (("preprocess_config", PreprocessConfig),
             ("feature_config", FeatureConfig),
             ("mlp_config", MlpConfig),
             ("ga_config", GaConfig))


def _field_type(f):
    t = str(f.type)
    if "int" in t:
        return int
    if "float" in t:
        return float
    return str


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON settings file (same sections as a model file)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for feature extraction (default: CPU count)")
    for section, cls in _SECTIONS:
        group = p.add_argument_group(section)
        for f in dataclasses.fields(cls):
            if section == "mlp_config" and f.name in _MLP_DERIVED:
                continue
            flag = _ALIASES.get((section, f.name), "--" + f.name.replace("_", "-"))
            kwargs = dict(dest=f"{section}.{f.name}", default=None, metavar=f.name.upper())
            if (section, f.name) == ("feature_config", "method"):
                kwargs.update(type=str.upper, choices=METHODS, metavar="{" + "|".join(m.lower() for m in METHODS) + "}")
            else:
                kwargs["type"] = _field_type(f)
            group.add_argument(flag, **kwargs)


def resolve_settings(args) -> dict:
    """Merge defaults, config file and flags into validated config objects."""
    sections = {name: {} for name, _ in _SECTIONS}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        for name, _ in _SECTIONS:
            sections[name].update(data.get(name, {}))
        if "seed" in data:
            sections["ga_config"]["rng_seed"] = data["seed"]
    for key, value in vars(args).items():
        if "." in key and value is not None:
            section, name = key.split(".", 1)
            sections[section][name] = value

    mlp_params = {k: v for k, v in sections["mlp_config"].items() if k not in _MLP_DERIVED}
    try:
        settings = {
            "preprocess": PreprocessConfig(**sections["preprocess_config"]),
            "feature": FeatureConfig(**sections["feature_config"]),
            "ga": GaConfig(**sections["ga_config"]),
            "mlp_params": mlp_params,
        }
        MlpConfig(input_dim=1, output_dim=1, **mlp_params)
    except TypeError as exc:
        raise ConfigError(f"unknown setting: {exc}") from exc
    return settings


def _threads(args):
    return args.threads if args.threads else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.speakers < 2:
        raise ConfigError("synth needs at least 2 speakers")
    if args.utterances < 1:
        raise ConfigError("synth needs at least 1 utterance per speaker")
    profiles = make_speaker_profiles(args.speakers, args.seed)
    indices = range(args.first_utterance, args.first_utterance + args.utterances)
    for path in write_corpus(args.out_dir, profiles, indices, args.noise_snr_db,
                             corpus_seed=args.seed, duration_s=args.duration):
        print(path)
    return EXIT_OK


def cmd_enroll(args) -> int:
    s = resolve_settings(args)
    dataset, labels, norm, load = build_dataset(args.train_dir, s["preprocess"], s["feature"],
                                                _threads(args))
    for path, why in load.skipped:
        log.warning("skipped %s (%s)", path, why)
    try:
        model, report, rate = train_model(dataset, labels, norm, s["preprocess"], s["feature"],
                                          s["mlp_params"], s["ga"])
    except SpeakerIdError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    model.save(args.model_out)
    if args.report_csv:
        report.to_csv(args.report_csv)
    cfg = model.network.config
    print(f"feature={s['feature'].method} speakers={len(labels)} utterances={len(dataset)} "
          f"hidden_nodes={cfg.hidden_dim} generations={s['ga'].generations} "
          f"crossover_points={s['ga'].crossover_points} gain={cfg.gain_hidden},{cfg.gain_output} "
          f"speed={cfg.speed_hidden},{cfg.speed_output} seed={s['ga'].rng_seed}")
    print(f"ga_best_fitness={report.ga_best_fitness:.6g} stop_reason={report.stop_reason}")
    for w in report.warnings:
        print(f"warning: {w}")
    print(f"final_rms={report.final_rms:.6g}")
    print(f"training_identification_rate={rate:.2f}")
    return EXIT_OK


def _load_model(path) -> SpeakerModel:
    try:
        return SpeakerModel.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot open model {path}: {exc}") from exc


def cmd_identify(args) -> int:
    model = _load_model(args.model)
    speaker, scores = identify(model, read_wav(args.wav))
    print(speaker)
    print("speaker,score")
    for label, score in zip(model.speaker_labels, scores):
        print(f"{label},{float(score)!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    report = evaluate(model, args.test_dir, _threads(args))
    if args.report_out:
        for path in report.write(args.report_out):
            log.info("wrote %s", path)
    print(f"correct={report.correct} total={report.total}")
    print(f"identification_rate={report.identification_rate:.2f}")
    return EXIT_OK


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def cmd_sweep(args) -> int:
    s = resolve_settings(args)
    try:
        values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list {args.values!r}") from exc
    result = parameter_sweep(args.param, values, args.trials, args.train_dir, args.test_dir,
                             args.out, s["preprocess"], s["feature"], s["mlp_params"], s["ga"],
                             _threads(args))
    print(f"rows={len(result.rows)} csv={args.out}")
    print(f"best_{args.param}={result.best_value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speakerid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic speaker corpus")
    p.add_argument("out_dir")
    p.add_argument("--speakers", type=int, default=5)
    p.add_argument("--utterances", type=int, default=10, help="utterances per speaker")
    p.add_argument("--first-utterance", type=int, default=0,
                   help="index of the first phrase; use disjoint ranges for train/test")
    p.add_argument("--noise-snr-db", type=float, default=None)
    p.add_argument("--duration", type=float, default=1.0, help="voiced seconds per utterance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enroll", help="train a speaker model from a corpus")
    p.add_argument("train_dir")
    p.add_argument("model_out")
    p.add_argument("--report-csv", help="write the stage,iteration,rms training curve here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="identify the speaker of one WAV file")
    p.add_argument("model")
    p.add_argument("wav")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="identification rate on a labelled test corpus")
    p.add_argument("model")
    p.add_argument("test_dir")
    p.add_argument("--report-out", metavar="PREFIX",
                   help="write PREFIX_speakers.csv and PREFIX_confusion.csv")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="enroll/evaluate over values of one parameter")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--train-dir", required=True)
    p.add_argument("--test-dir", required=True)
    p.add_argument("--out", required=True, help="sweep CSV path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NoSpeechDetected as exc:
        print(f"error: NoSpeechDetected: {exc}", file=sys.stderr)
        return EXIT_NO_SPEECH
    except SpeakerIdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
