"""Command-line entry point: ``cuesync <subcommand> --out DIR [options]``.

Every subcommand writes its resolved configuration to ``DIR/config.json``
next to its outputs. Module parameters come from ``--config`` (a JSON
object); unknown keys are rejected. Exit codes: 0 success, 1 pipeline
error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .classify import (
    MlpConfig,
    MlpModel,
    MultiGaussianModel,
    extract_window_features,
    mlp_posteriors,
    train_mlp,
    train_multigaussian,
)
from .core import (
    Corpus,
    FormatError,
    Modality,
    PhonemeKind,
    Segmentation,
    SegmentationError,
    Tier,
    frame_labels,
    load_corpus,
    read_json,
    save_corpus,
    speech_end,
    write_json,
)
from .experiments import (
    ABLATION_CELLS,
    SEGMENTATION_SOURCES,
    TWO_STREAM_CONDITIONS,
    TWO_STREAM_TASKS,
    RecognitionConfig,
    class_map,
    compare_segmentations,
    paired_gap,
    run_ablation,
    sweep_delta_c,
    two_stream_experiments,
)
from .hpm import (
    DegenerateFitError,
    HpmModel,
    T0Search,
    delta_cv_stats,
    fit_hpm,
    hpm_segmentation,
    theoretical_delta_c,
)
from .metrics import pooled
from .mshmm import MsHmmModel, StreamWeights, TrainSchedule, evaluate, train_mshmm
from .mshmm.decode import reference_labels, score_labels
from .resync import EdgePolicy, ResyncConfig, resync_corpus
from .synth import SynthConfig, generate_corpus, measure_empirical_hpt

log = logging.getLogger("cuesync")

REST = "rest"


class UsageError(Exception):
    """Bad configuration; reported with exit code 2."""


# ---------------------------------------------------------------------------
# configuration blocks


def _merge(defaults: dict, given: dict, name: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise UsageError(f"unknown {name} config keys: {sorted(unknown)}")
    return {**defaults, **given}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = read_json(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


CLASSIFIER_DEFAULTS = {
    "kind": "multigaussian",  # or "mlp"
    "stream": "P",  # P (hand position, vowels) or S (hand shape, consonants)
    "segmentation": "truth",  # audio, hpm or truth
    "window_ms": 60.0,
    "n_components": 1,
    "consonant_lag_ms": 60.0,
    "mlp": {},
}

TRAIN_DEFAULTS = {
    "streams": ["L", "P", "S"],
    "weights": None,  # None: 0.4 lips, 0.2 hand position, 0.4 hand shape, renormalised
    "mixtures": [1, 2],
    "max_iters": 20,
    "rel_tol": 1e-5,
    "var_floor_scale": 1e-4,
    "triphones": False,
    "min_occupancy": 10,
    "triphone_iters": 5,
}

RECOGNITION_DEFAULTS = {
    "repeats": 10,
    "train_frac": 0.8,
    "mixtures": [1, 2],
    "max_iters": 8,
    "min_occupancy": 10,
    "triphone_iters": 4,
    "delta_v": None,  # None: measured on each training split
    "delta_c": None,
}

SWEEP_DEFAULTS = {"lag_min": 0, "lag_max": 160, "lag_step": 10, "window_ms": 60.0, "n_components": 1,
                  "repeats": 10, "train_frac": 0.8}

TABLE2_DEFAULTS = {"window_ms": 60.0, "n_components": 1, "repeats": 10, "train_frac": 0.8, "use_decay": True}


def _recognition_config(p: dict) -> RecognitionConfig:
    if (p["delta_v"] is None) != (p["delta_c"] is None):
        raise UsageError("set both delta_v and delta_c, or neither")
    resync = None if p["delta_v"] is None else ResyncConfig(p["delta_v"], p["delta_c"])
    return RecognitionConfig(TrainSchedule(tuple(p["mixtures"]), p["max_iters"]), p["min_occupancy"],
                             p["triphone_iters"], resync, p["train_frac"])


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _finish(args, out: Path, params: dict, inputs: dict) -> None:
    write_json({"subcommand": args.command, "seed": args.seed, "threads": args.threads,
                "params": params, "inputs": inputs}, out / "config.json")


def _corpus(path) -> Corpus:
    log.info("loading corpus %s", path)
    return load_corpus(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, out: Path, cfg: dict) -> None:
    doc = dict(cfg)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        synth_cfg = SynthConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    corpus = generate_corpus(synth_cfg)
    save_corpus(corpus, out)
    log.info("wrote %d sentences", len(corpus))
    _finish(args, out, synth_cfg.to_dict(), {})


def cmd_fit_hpm(args, out: Path, cfg: dict) -> None:
    p = _merge({"t0_min": 300, "t0_max": 1500, "t0_step": 20}, cfg, "fit-hpm")
    corpus = _corpus(args.corpus)
    vowel_obs, cons = measure_empirical_hpt(corpus)
    model = fit_hpm(vowel_obs, T0Search(p["t0_min"], p["t0_max"], p["t0_step"]))
    model.save(out / "hpm.json")
    _write_csv(out / "hpt_scatter.csv", ["u_ms", "delta_v_ms", "sentence", "label"],
               [(float(o.u), float(o.delta_v), o.sentence_id, o.label) for o in vowel_obs])
    cv = delta_cv_stats(corpus)
    summary = {"delta_v_star": model.mean_ms, "t0_ms": model.t0_ms, "delta_cv": cv,
               "delta_c_mean": float(np.mean(cons)) if cons else None}
    d_c = (corpus.metadata.get("config") or {}).get("D_c_ms")
    if d_c is not None:
        summary["delta_c_theory"] = theoretical_delta_c(max(model.mean_ms, 0.0), cv["mean_ms"], d_c)
    write_json(summary, out / "summary.json")
    _finish(args, out, p, {"corpus": args.corpus})


def cmd_resync(args, out: Path, cfg: dict) -> None:
    if cfg:
        raise UsageError("resync takes its parameters from flags, not --config")
    rc = ResyncConfig(args.delta_v, args.delta_c, EdgePolicy(args.edge))
    corpus = resync_corpus(_corpus(args.corpus), rc)
    save_corpus(corpus, out)
    _finish(args, out, {"delta_v": rc.delta_v_star, "delta_c": rc.delta_c_star, "edge": rc.edge_policy.value},
            {"corpus": args.corpus})


def _classifier_params(cfg: dict) -> dict:
    p = _merge(CLASSIFIER_DEFAULTS, cfg, "classifier")
    if p["kind"] not in ("multigaussian", "mlp"):
        raise UsageError(f"unknown classifier kind {p['kind']!r}")
    if p["stream"] not in ("P", "S"):
        raise UsageError("classifier stream must be P or S")
    if p["segmentation"] not in SEGMENTATION_SOURCES:
        raise UsageError(f"segmentation must be one of {SEGMENTATION_SOURCES}")
    p["mlp"] = _merge({f.name: f.default for f in dataclasses.fields(MlpConfig)}, p["mlp"], "mlp")
    return p


def _classifier_data(corpus: Corpus, p: dict, hpm_path):
    """Window samples (multi-Gaussian) or labelled frames (MLP) for the chosen stream."""
    stream = Modality(p["stream"])
    kind = PhonemeKind.VOWEL if stream == Modality.HAND_POS else PhonemeKind.CONSONANT
    labels = class_map(corpus, kind)
    model = None
    if p["segmentation"] == "hpm":
        if hpm_path is None:
            raise UsageError("segmentation 'hpm' needs --hpm")
        model = HpmModel.load(hpm_path)
    segs = []
    for s in corpus:
        if p["segmentation"] == "truth":
            if s.truth is None:
                raise ValueError(f"sentence {s.id} has no hand-tier truth")
            seg = s.truth.hand_pos_seg if kind == PhonemeKind.VOWEL else s.truth.hand_shape_seg
        elif p["segmentation"] == "hpm":
            seg = hpm_segmentation(s.audio_seg, model, speech_end(s.audio_seg, corpus.alphabet), corpus.alphabet,
                                   p["consonant_lag_ms"], kinds={kind})
        else:
            seg = [iv for iv in s.audio_seg if corpus.alphabet.kind(iv.label) == kind]
        segs.append(seg)
    if p["kind"] == "multigaussian":
        return [(labels[lab], x) for s, seg in zip(corpus, segs)
                for lab, x in extract_window_features(s.stream(stream), seg, p["window_ms"])]
    X, y = [], []
    tier = Tier.HAND_POS if kind == PhonemeKind.VOWEL else Tier.HAND_SHAPE
    for s, seg in zip(corpus, segs):
        seg = seg if isinstance(seg, Segmentation) else Segmentation(tier, tuple(seg))
        X.append(s.stream(stream).frames)
        y.extend(REST if lab is None else labels[lab] for lab in frame_labels(seg, s.n_frames, s.period_ms))
    return np.vstack(X), y


def cmd_train_classifier(args, out: Path, cfg: dict) -> None:
    p = _classifier_params(cfg)
    corpus = _corpus(args.corpus)
    data = _classifier_data(corpus, p, args.hpm)
    if p["kind"] == "multigaussian":
        model = train_multigaussian(data, p["n_components"])
    else:
        X, y = data
        mcfg = dict(p["mlp"])
        mcfg["hidden"] = tuple(mcfg["hidden"])
        mcfg["seed"] = args.seed if args.seed is not None else mcfg["seed"]
        model = train_mlp(X, y, MlpConfig(**mcfg))
    model.save(out / "classifier.json")
    _finish(args, out, p, {"corpus": args.corpus, "hpm": args.hpm})


def cmd_eval_classifier(args, out: Path, cfg: dict) -> None:
    p = _classifier_params(cfg)
    corpus = _corpus(args.corpus)
    doc = read_json(args.model)
    data = _classifier_data(corpus, p, args.hpm)
    if doc.get("kind") != p["kind"]:
        raise UsageError(f"model kind {doc.get('kind')!r} does not match classifier kind {p['kind']!r}")
    if p["kind"] == "multigaussian":
        model = MultiGaussianModel.from_json(doc)
        acc, n = model.accuracy(data), len(data)
    else:
        model = MlpModel.from_json(doc)
        X, y = data
        pred = np.asarray(model.classes)[np.argmax(mlp_posteriors(model, X), axis=1)]
        acc, n = float(np.mean(pred == np.asarray(y))), len(y)
    write_json({"accuracy": acc, "n": n}, out / "metrics.json")
    _finish(args, out, p, {"corpus": args.corpus, "model": args.model, "hpm": args.hpm})


def cmd_train(args, out: Path, cfg: dict) -> None:
    p = _merge(TRAIN_DEFAULTS, cfg, "train")
    corpus = _corpus(args.corpus)
    streams = tuple(Modality(s) for s in p["streams"])
    weights = None if p["weights"] is None else StreamWeights(tuple(p["weights"]))
    if weights is None:
        weights = StreamWeights.from_named(streams)
    schedule = TrainSchedule(tuple(p["mixtures"]), p["max_iters"], p["rel_tol"], p["var_floor_scale"])
    tri = TrainSchedule((p["mixtures"][-1],), p["triphone_iters"], p["rel_tol"], p["var_floor_scale"])
    model = train_mshmm(corpus, streams, weights, schedule, triphones=p["triphones"],
                        min_occupancy=p["min_occupancy"], triphone_schedule=tri)
    model.meta.update({"seed": args.seed, "schedule": schedule.to_dict()})
    model.save(out / "model.json")
    _finish(args, out, p, {"corpus": args.corpus})


def cmd_decode(args, out: Path, cfg: dict) -> None:
    p = _merge({"weights": None}, cfg, "decode")
    corpus = _corpus(args.corpus)
    model = MsHmmModel.load(args.model)
    weights = None if p["weights"] is None else StreamWeights(tuple(p["weights"]))
    _, _, decoded = evaluate(model, corpus, weights)
    period = corpus.period_ms
    doc = {s.id: {"labels": d.labels,
                  "segments": [[name, lo * period, hi * period] for name, lo, hi in d.segments],
                  "score": d.score}
           for s, d in zip(corpus, decoded)}
    write_json(doc, out / "decoded.json")
    _finish(args, out, p, {"corpus": args.corpus, "model": args.model})


def cmd_score(args, out: Path, cfg: dict) -> None:
    p = _merge({"ignore": None}, cfg, "score")
    corpus = _corpus(args.corpus)
    hyp = read_json(args.hyp)
    rows, results = [], []
    for s in corpus:
        if s.id not in hyp:
            raise ValueError(f"no hypothesis for sentence {s.id}")
        r = score_labels(reference_labels(s, corpus.alphabet), hyp[s.id]["labels"], corpus.alphabet, p["ignore"])
        results.append(r)
        rows.append((s.id, r.N, r.H, r.D, r.S, r.I))
    total = pooled(results)
    _write_csv(out / "per_sentence.csv", ["sentence", "N", "H", "D", "S", "I"], rows)
    write_json({"N": total.N, "H": total.H, "D": total.D, "S": total.S, "I": total.I,
                "correctness": total.correctness, "accuracy": total.accuracy}, out / "score.json")
    _finish(args, out, p, {"corpus": args.corpus, "hyp": args.hyp})


def cmd_sweep(args, out: Path, cfg: dict) -> None:
    p = _merge(SWEEP_DEFAULTS, cfg, "sweep")
    corpus = _corpus(args.corpus)
    lags = np.arange(p["lag_min"], p["lag_max"] + p["lag_step"] / 2, p["lag_step"])
    res = sweep_delta_c(corpus, lags, p["window_ms"], p["n_components"], p["repeats"], p["train_frac"],
                        args.seed or 0, args.threads)
    _write_csv(out / "sweep.csv", ["delta_c_ms", "mean", "std"] + [f"run_{s}" for s in res.seeds],
               [[lag, m, sd, *res.runs[:, i]] for i, (lag, m, sd) in enumerate(zip(res.lags, res.mean, res.std))])
    write_json(res.to_json(), out / "report.json")
    log.info("argmax delta_c = %s ms", res.argmax)
    _finish(args, out, p, {"corpus": args.corpus})


def _report_rows(reports):
    return [[r.name, r.mean, r.std, *r.runs] for r in reports]


def cmd_ablate(args, out: Path, cfg: dict) -> None:
    p = _merge(RECOGNITION_DEFAULTS, cfg, "ablate")
    corpus = _corpus(args.corpus)
    reports = run_ablation(corpus, p["repeats"], args.seed or 0, _recognition_config(p), workers=args.threads)
    _write_csv(out / "ablation.csv", ["cell", "mean", "std"] + [f"run_{s}" for s in reports[0].seeds],
               _report_rows(reports))
    gaps = {"mono": paired_gap(reports[0], reports[1]), "tri": paired_gap(reports[2], reports[3])}
    write_json({"cells": [r.to_json() for r in reports], "order": list(ABLATION_CELLS),
                "resync_gap": {k: {"mean_gap": g, "pooled_std": s} for k, (g, s) in gaps.items()}},
               out / "report.json")
    _finish(args, out, p, {"corpus": args.corpus})


def cmd_table2(args, out: Path, cfg: dict) -> None:
    p = _merge(TABLE2_DEFAULTS, cfg, "table2")
    corpus = _corpus(args.corpus)
    reports = compare_segmentations(corpus, SEGMENTATION_SOURCES, p["window_ms"], p["n_components"],
                                    p["repeats"], p["train_frac"], args.seed or 0, p["use_decay"], args.threads)
    rows = [reports[s] for s in SEGMENTATION_SOURCES]
    _write_csv(out / "table2.csv", ["segmentation", "mean", "std"] + [f"run_{s}" for s in rows[0].seeds],
               _report_rows(rows))
    write_json({"sources": {k: r.to_json() for k, r in reports.items()}}, out / "report.json")
    _finish(args, out, p, {"corpus": args.corpus})


def cmd_table34(args, out: Path, cfg: dict) -> None:
    p = _merge(RECOGNITION_DEFAULTS, cfg, "table34")
    corpus = _corpus(args.corpus)
    reports = two_stream_experiments(corpus, p["repeats"], args.seed or 0, _recognition_config(p), args.threads)
    keys = [f"{t}/{c}" for t in TWO_STREAM_TASKS for c in TWO_STREAM_CONDITIONS]
    rows = [reports[k] for k in keys]
    _write_csv(out / "table34.csv", ["condition", "mean", "std"] + [f"run_{s}" for s in rows[0].seeds],
               _report_rows(rows))
    write_json({"conditions": {k: reports[k].to_json() for k in keys}}, out / "report.json")
    _finish(args, out, p, {"corpus": args.corpus})


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic corpus"),
    "fit-hpm": (cmd_fit_hpm, "fit the hand-preceding model to a corpus's hand tiers"),
    "resync": (cmd_resync, "delay the hand streams of a corpus"),
    "train-classifier": (cmd_train_classifier, "train a hand position or shape classifier"),
    "eval-classifier": (cmd_eval_classifier, "evaluate a hand classifier"),
    "train": (cmd_train, "train a multi-stream HMM"),
    "decode": (cmd_decode, "decode a corpus with a trained multi-stream HMM"),
    "score": (cmd_score, "score decoded labels against a corpus"),
    "sweep": (cmd_sweep, "consonant lag sweep"),
    "ablate": (cmd_ablate, "resync x context ablation"),
    "table2": (cmd_table2, "hand-position accuracy per segmentation source"),
    "table34": (cmd_table34, "two-stream vowel and consonant experiments"),
}

NEEDS = {
    "corpus": {"fit-hpm", "resync", "train-classifier", "eval-classifier", "train", "decode", "score", "sweep",
               "ablate", "table2", "table34"},
    "model": {"eval-classifier", "decode"},
    "hyp": {"score"},
    "hpm": {"train-classifier", "eval-classifier"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuesync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="root seed")
        sp.add_argument("--threads", type=int, default=1, help="maximum worker processes")
        sp.add_argument("--config", default=None, help="JSON file of module parameters")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        if name in NEEDS["corpus"]:
            sp.add_argument("--corpus", required=True, help="corpus manifest.json")
        if name in NEEDS["model"]:
            sp.add_argument("--model", required=True, help="model JSON")
        if name in NEEDS["hyp"]:
            sp.add_argument("--hyp", required=True, help="decoded.json from the decode subcommand")
        if name in NEEDS["hpm"]:
            sp.add_argument("--hpm", default=None, help="HPM JSON for the 'hpm' segmentation source")
        if name == "resync":
            sp.add_argument("--delta-v", type=float, default=140.0, help="hand position delay in ms")
            sp.add_argument("--delta-c", type=float, default=60.0, help="hand shape delay in ms")
            sp.add_argument("--edge", choices=[e.value for e in EdgePolicy], default=EdgePolicy.REPLICATE.value)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    fn = COMMANDS[args.command][0]
    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        fn(args, out, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, SegmentationError, DegenerateFitError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
