"""Experiment harnesses: train/test splits, lag sweeps, segmentation comparison and ablations.

Every harness repeats a random group-level 80/20 split ``repeats`` times with
seeds ``seed, seed + 1, ...``; repeats may run in worker processes and are
always reduced in seed order, so results do not depend on ``workers``.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .classify import extract_window_features, train_multigaussian
from .core import (
    Alphabet,
    Corpus,
    Interval,
    Modality,
    Phoneme,
    PhonemeKind,
    Segmentation,
    Tier,
    derive_rng,
    dumps,
    speech_end,
    to_jsonable,
)
from .hpm import fit_hpm, hpm_segmentation, shift_intervals
from .mshmm.decode import default_ignore, evaluate
from .mshmm.model import StreamWeights
from .mshmm.train import TrainSchedule, expand_triphones, train_mshmm
from .resync import ResyncConfig, resync_corpus
from .synth import measure_empirical_hpt

DEFAULT_LAGS = tuple(range(0, 161, 10))
ABLATION_CELLS = ("non-resyn/mono", "resyn/mono", "non-resyn/tri", "resyn/tri")


def fingerprint(obj) -> str:
    """sha256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()


@dataclass
class ExperimentReport:
    name: str
    runs: list
    seeds: list
    fingerprint: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.runs) != len(self.seeds):
            raise ValueError("one seed per run required")

    @property
    def mean(self) -> float:
        return float(np.mean(self.runs))

    @property
    def std(self) -> float:
        """Sample standard deviation over the listed runs (0 for a single run)."""
        return float(np.std(self.runs, ddof=1)) if len(self.runs) > 1 else 0.0

    def to_json(self) -> dict:
        return to_jsonable({**asdict(self), "mean": self.mean, "std": self.std})


def paired_gap(base: ExperimentReport, other: ExperimentReport) -> tuple[float, float]:
    """Mean of ``other - base`` over shared seeds, and the pooled std of the two cells."""
    if base.seeds != other.seeds:
        raise ValueError("reports must share their seed lists")
    gap = float(np.mean(np.asarray(other.runs) - np.asarray(base.runs)))
    pooled = float(np.sqrt((base.std ** 2 + other.std ** 2) / 2))
    return gap, pooled


# ---------------------------------------------------------------------------
# splitting


def split_corpus(corpus: Corpus, train_frac: float = 0.8, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Random split at repetition-group granularity; corpus order is kept within each side."""
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    groups = sorted({s.repetition_group for s in corpus})
    if len(groups) < 2:
        raise ValueError("need at least two repetition groups to split")
    n_train = min(max(int(round(train_frac * len(groups))), 1), len(groups) - 1)
    perm = derive_rng(seed, "split").permutation(len(groups))
    train_groups = {groups[i] for i in perm[:n_train]}
    train = [s for s in corpus if s.repetition_group in train_groups]
    test = [s for s in corpus if s.repetition_group not in train_groups]
    return corpus.subset(train), corpus.subset(test)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _seeds(seed: int, repeats: int) -> list:
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return [seed + r for r in range(repeats)]


def _base_config(corpus: Corpus) -> dict:
    return {"corpus": corpus.metadata.get("config"), "n_sentences": len(corpus)}


# ---------------------------------------------------------------------------
# window classification


def class_map(corpus: Corpus, kind: PhonemeKind) -> dict:
    """Phoneme symbol to hand class label; phonemes sharing a position or shape share a class.

    Uses the generator's maps when present, otherwise each phoneme is its own class.
    """
    key = "vowel_positions" if kind == PhonemeKind.VOWEL else "consonant_shapes"
    prefix = "P" if kind == PhonemeKind.VOWEL else "H"
    table = corpus.metadata.get(key)
    symbols = corpus.alphabet.of_kind(kind)
    if table:
        return {sym: f"{prefix}{table[sym]}" for sym in symbols}
    return {sym: sym for sym in symbols}


def _windows(corpus: Corpus, stream: Modality, segs, labels: dict, window_ms: float):
    out = []
    for s, seg in zip(corpus, segs):
        for lab, x in extract_window_features(s.stream(stream), seg, window_ms):
            out.append((labels[lab], x))
    return out


def _kind_intervals(seg: Segmentation, alphabet: Alphabet, kind: PhonemeKind):
    return [iv for iv in seg if alphabet.kind(iv.label) == kind]


def _classify(train, test, n_components: int) -> float:
    model = train_multigaussian(train, n_components)
    return model.accuracy(test)


@dataclass
class SweepResult:
    lags: list
    runs: np.ndarray  # (repeats, n_lags)
    seeds: list
    fingerprint: str = ""

    @property
    def mean(self) -> np.ndarray:
        return self.runs.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.runs.std(axis=0, ddof=1) if len(self.runs) > 1 else np.zeros(len(self.lags))

    @property
    def argmax(self) -> float:
        """Lag with the best mean accuracy; ties go to the smaller lag."""
        return float(self.lags[int(np.argmax(self.mean))])

    def to_json(self) -> dict:
        return to_jsonable({"lags": self.lags, "runs": self.runs, "seeds": self.seeds, "mean": self.mean,
                            "std": self.std, "argmax": self.argmax, "fingerprint": self.fingerprint})


def _sweep_one(seed, corpus, lags, window_ms, n_components, train_frac):
    train, test = split_corpus(corpus, train_frac, seed)
    labels = class_map(corpus, PhonemeKind.CONSONANT)
    row = []
    for lag in lags:
        def segs(part):
            out = []
            for s in part:
                ivs = _kind_intervals(s.audio_seg, corpus.alphabet, PhonemeKind.CONSONANT)
                out.append(shift_intervals(ivs, [lag] * len(ivs), Tier.HAND_SHAPE))
            return out

        row.append(_classify(_windows(train, Modality.HAND_SHAPE, segs(train), labels, window_ms),
                             _windows(test, Modality.HAND_SHAPE, segs(test), labels, window_ms), n_components))
    return row


def sweep_delta_c(corpus: Corpus, lags=DEFAULT_LAGS, window_ms: float = 60.0, n_components: int = 1,
                  repeats: int = 10, train_frac: float = 0.8, seed: int = 0, workers: int = 1) -> SweepResult:
    """Hand-shape classification accuracy when consonant windows sit ``lag`` ms before the audio."""
    lags = [float(x) for x in lags]
    seeds = _seeds(seed, repeats)
    fn = partial(_sweep_one, corpus=corpus, lags=lags, window_ms=window_ms, n_components=n_components,
                 train_frac=train_frac)
    runs = np.array(_map(fn, seeds, workers))
    fp = fingerprint({**_base_config(corpus), "experiment": "sweep", "lags": lags, "window_ms": window_ms,
                      "n_components": n_components, "train_frac": train_frac, "seeds": seeds})
    return SweepResult(lags, runs, seeds, fp)


# ---------------------------------------------------------------------------
# segmentation comparison

SEGMENTATION_SOURCES = ("audio", "hpm", "truth")


def _vowel_segs(part: Corpus, source: str, hpm_model, use_decay: bool):
    alphabet = part.alphabet
    out = []
    for s in part:
        if source == "audio":
            out.append(_kind_intervals(s.audio_seg, alphabet, PhonemeKind.VOWEL))
        elif source == "hpm":
            out.append(hpm_segmentation(s.audio_seg, hpm_model, speech_end(s.audio_seg, alphabet), alphabet,
                                        kinds={PhonemeKind.VOWEL}, use_decay=use_decay))
        elif source == "truth":
            if s.truth is None:
                raise ValueError(f"sentence {s.id} has no hand-tier truth")
            out.append(s.truth.hand_pos_seg)
        else:
            raise ValueError(f"unknown segmentation source {source!r}")
    return out


def _compare_one(seed, corpus, sources, window_ms, n_components, train_frac, use_decay):
    train, test = split_corpus(corpus, train_frac, seed)
    labels = class_map(corpus, PhonemeKind.VOWEL)
    model = fit_hpm(measure_empirical_hpt(train)[0]) if "hpm" in sources else None
    row = []
    for src in sources:
        tr = _windows(train, Modality.HAND_POS, _vowel_segs(train, src, model, use_decay), labels, window_ms)
        te = _windows(test, Modality.HAND_POS, _vowel_segs(test, src, model, use_decay), labels, window_ms)
        row.append(_classify(tr, te, n_components))
    return row


def compare_segmentations(corpus: Corpus, sources=SEGMENTATION_SOURCES, window_ms: float = 60.0,
                          n_components: int = 1, repeats: int = 10, train_frac: float = 0.8, seed: int = 0,
                          use_decay: bool = True, workers: int = 1) -> dict:
    """Hand-position classification accuracy per vowel segmentation source.

    ``audio`` windows sit on the vowel audio, ``hpm`` windows are moved earlier
    by an HPM fitted on the training split's hand tiers, ``truth`` uses the
    hand tiers themselves.
    """
    sources = tuple(sources)
    seeds = _seeds(seed, repeats)
    fn = partial(_compare_one, corpus=corpus, sources=sources, window_ms=window_ms, n_components=n_components,
                 train_frac=train_frac, use_decay=use_decay)
    rows = np.array(_map(fn, seeds, workers))
    fp = fingerprint({**_base_config(corpus), "experiment": "segmentations", "sources": sources,
                      "window_ms": window_ms, "n_components": n_components, "train_frac": train_frac,
                      "use_decay": use_decay, "seeds": seeds})
    return {src: ExperimentReport(src, rows[:, i].tolist(), seeds, fp) for i, src in enumerate(sources)}


# ---------------------------------------------------------------------------
# recognition experiments


def estimate_resync(train: Corpus) -> ResyncConfig:
    """Lags measured on the training split's hand tiers: HPM mean for vowels, mean consonant lag."""
    vowel_obs, cons = measure_empirical_hpt(train)
    dv = fit_hpm(vowel_obs).mean_ms
    dc = float(np.mean(cons)) if cons else 0.0
    return ResyncConfig(max(dv, 0.0), max(dc, 0.0))


@dataclass
class RecognitionConfig:
    schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(mixtures=(1, 2), max_iters=8))
    min_occupancy: float = 10
    triphone_iters: int = 4
    resync: ResyncConfig | None = None  # None: estimate from each training split
    train_frac: float = 0.8

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def _resync_pair(train, test, cfg: RecognitionConfig):
    rc = cfg.resync or estimate_resync(train)
    return resync_corpus(train, rc), resync_corpus(test, rc), rc


def _ablation_one(seed, corpus, cfg: RecognitionConfig, streams, weights):
    train, test = split_corpus(corpus, cfg.train_frac, seed)
    out = {}
    tri_schedule = TrainSchedule(mixtures=(cfg.schedule.mixtures[-1],), max_iters=cfg.triphone_iters,
                                 rel_tol=cfg.schedule.rel_tol, var_floor_scale=cfg.schedule.var_floor_scale)
    rtrain, rtest, rc = _resync_pair(train, test, cfg)
    for tag, (tr, te) in (("non-resyn", (train, test)), ("resyn", (rtrain, rtest))):
        mono = train_mshmm(tr, streams, weights, cfg.schedule)
        out[f"{tag}/mono"] = evaluate(mono, te)[0]
        tri = expand_triphones(mono, tr, cfg.min_occupancy, tri_schedule)
        out[f"{tag}/tri"] = evaluate(tri, te)[0]
    out["resync"] = [rc.delta_v_star, rc.delta_c_star]
    return out


def run_ablation(corpus: Corpus, repeats: int = 10, seed: int = 0, config: RecognitionConfig | None = None,
                 streams=(Modality.LIPS, Modality.HAND_POS, Modality.HAND_SHAPE),
                 weights: StreamWeights | None = None, workers: int = 1) -> list:
    """Resync on/off crossed with monophone/triphone units.

    Returns four reports ordered non-resyn/mono, resyn/mono, non-resyn/tri,
    resyn/tri. Triphone models grow from the same split's monophone model.
    """
    cfg = config or RecognitionConfig()
    seeds = _seeds(seed, repeats)
    fn = partial(_ablation_one, corpus=corpus, cfg=cfg, streams=streams, weights=weights)
    rows = _map(fn, seeds, workers)
    fp = fingerprint({**_base_config(corpus), "experiment": "ablation", "recognition": cfg.to_dict(),
                      "streams": [Modality(s).value for s in streams],
                      "weights": None if weights is None else list(weights.values), "seeds": seeds})
    lags = [r["resync"] for r in rows]
    return [ExperimentReport(cell, [r[cell] for r in rows], seeds, fp, {"resync_lags": lags})
            for cell in ABLATION_CELLS]


FILLER = {PhonemeKind.VOWEL: "V*", PhonemeKind.CONSONANT: "C*"}


def collapse_kind(corpus: Corpus, kind: PhonemeKind) -> Corpus:
    """Relabel every phoneme of ``kind`` as one filler symbol of that kind."""
    filler = FILLER[kind]
    keep = [p for p in corpus.alphabet if p.kind != kind]
    alphabet = Alphabet(keep + [Phoneme(filler, kind)])

    def relabel(s):
        ivs = tuple(Interval(iv.start, iv.end, filler if corpus.alphabet.kind(iv.label) == kind else iv.label)
                    for iv in s.audio_seg)
        return s.replace(audio_seg=Segmentation(s.audio_seg.tier, ivs))

    return Corpus(tuple(relabel(s) for s in corpus), alphabet, corpus.period_ms, dict(corpus.metadata))


TWO_STREAM_TASKS = {
    "vowel": (PhonemeKind.CONSONANT, Modality.HAND_POS),
    "consonant": (PhonemeKind.VOWEL, Modality.HAND_SHAPE),
}
TWO_STREAM_CONDITIONS = ("lips", "hand", "non-resyn", "resyn")


def _two_stream_one(seed, corpus, cfg: RecognitionConfig):
    train, test = split_corpus(corpus, cfg.train_frac, seed)
    rtrain, rtest, _ = _resync_pair(train, test, cfg)
    out = {}
    for task, (other, hand) in TWO_STREAM_TASKS.items():
        tr, te = collapse_kind(train, other), collapse_kind(test, other)
        rtr, rte = collapse_kind(rtrain, other), collapse_kind(rtest, other)
        ignore = default_ignore(tr.alphabet) | {FILLER[other]}
        pair = (Modality.LIPS, hand)
        w = StreamWeights.from_named(pair)
        runs = {
            "lips": (tr, te, (Modality.LIPS,), StreamWeights((1.0,))),
            "hand": (tr, te, (hand,), StreamWeights((1.0,))),
            "non-resyn": (tr, te, pair, w),
            "resyn": (rtr, rte, pair, w),
        }
        for cond in TWO_STREAM_CONDITIONS:
            a, b, streams, weights = runs[cond]
            model = train_mshmm(a, streams, weights, cfg.schedule)
            out[f"{task}/{cond}"] = evaluate(model, b, ignore=ignore)[0]
    return out


def two_stream_experiments(corpus: Corpus, repeats: int = 10, seed: int = 0,
                           config: RecognitionConfig | None = None, workers: int = 1) -> dict:
    """Vowel task on lips + hand position, consonant task on lips + hand shape.

    The other phoneme kind is collapsed into one filler label that, like
    silence, is left out of scoring. Each task reports single-stream
    baselines and the fused model without and with resync, keyed
    ``"<task>/<condition>"``.
    """
    cfg = config or RecognitionConfig()
    seeds = _seeds(seed, repeats)
    rows = _map(partial(_two_stream_one, corpus=corpus, cfg=cfg), seeds, workers)
    fp = fingerprint({**_base_config(corpus), "experiment": "two-stream", "recognition": cfg.to_dict(),
                      "seeds": seeds})
    return {key: ExperimentReport(key, [r[key] for r in rows], seeds, fp) for key in rows[0]}
