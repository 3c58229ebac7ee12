"""Synthetic cued-speech corpora with known hand-preceding lags.

Each sentence is ``sil (C V)+ sil`` on the audio tier. The lips stream follows
the audio tier frame by frame. Hand position reaches the vowel's position for
``D_v`` ms centred ``delta_v`` ms before the vowel's audio midpoint, hand shape
holds the consonant's shape for ``D_c`` ms centred ``delta_c`` ms before the
consonant midpoint. Between targets the hand streams either emit a "rest"
class (``hand_motion="rest"``) or move linearly from one target to the next
(``hand_motion="glide"``); before the first and after the last target they rest.

Vowel identity is split across modalities: lips give a lip group, the hand
position separates vowels within a group (likewise shapes for consonants).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SILENCE,
    Alphabet,
    Corpus,
    FrameStream,
    Interval,
    Modality,
    Phoneme,
    PhonemeKind,
    Segmentation,
    Sentence,
    SentenceTruth,
    Tier,
    derive_rng,
    frame_labels,
    speech_end,
    to_jsonable,
)


HAND_MOTIONS = ("rest", "glide")


@dataclass
class HpmParams:
    mean_ms: float = 140.0
    t0_ms: float = 880.0
    a: float = 0.159
    b: float = 0.0

    def delta(self, u: float) -> float:
        return self.mean_ms if u > self.t0_ms else self.a * u + self.b


@dataclass
class SynthConfig:
    seed: int = 0
    n_sentences: int = 100
    repetitions: int = 1
    syllables_per_sentence: tuple[int, int] = (6, 12)
    n_vowels: int = 10
    n_consonants: int = 8
    n_positions: int = 5
    n_shapes: int = 8
    # optional explicit maps; default is index modulo positions/shapes
    vowel_positions: list[int] | None = None
    vowel_lip_groups: list[int] | None = None
    consonant_shapes: list[int] | None = None
    consonant_lip_groups: list[int] | None = None
    vowel_dur_ms: tuple[int, int] = (120, 200)
    consonant_dur_ms: tuple[int, int] = (80, 120)
    silence_dur_ms: tuple[int, int] = (240, 400)
    duration_step_ms: int = 10
    hpm_true: HpmParams = field(default_factory=HpmParams)
    delta_c_true_ms: float = 60.0
    hpt_noise_std_ms: float = 10.0
    D_v_ms: int = 60
    D_c_ms: int = 60
    period_ms: int = 20
    lips_dim: int = 4
    hand_pos_dim: int = 2
    hand_shape_dim: int = 3
    lips_separation: float = 3.0
    lips_noise: float = 0.5
    hand_pos_radius: float = 1.0
    hand_pos_noise: float = 0.1
    hand_shape_separation: float = 3.0
    hand_shape_noise: float = 0.5
    coarticulation: float = 0.0
    hand_motion: str = "rest"

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "hpm_true" in doc:
            hp = doc["hpm_true"]
            bad = set(hp) - {f.name for f in dataclasses.fields(HpmParams)}
            if bad:
                raise ValueError(f"unknown hpm_true keys: {sorted(bad)}")
            doc["hpm_true"] = HpmParams(**hp)
        for key in ("syllables_per_sentence", "vowel_dur_ms", "consonant_dur_ms", "silence_dur_ms"):
            if key in doc:
                doc[key] = tuple(doc[key])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        for key in ("vowel_dur_ms", "consonant_dur_ms", "silence_dur_ms", "syllables_per_sentence"):
            lo, hi = getattr(self, key)
            if lo <= 0 or hi < lo:
                raise ValueError(f"{key} must be a positive (min, max) range, got {(lo, hi)}")
        if self.n_sentences <= 0 or self.repetitions <= 0:
            raise ValueError("n_sentences and repetitions must be positive")
        if self.D_v_ms <= 0 or self.D_c_ms <= 0 or self.period_ms <= 0 or self.duration_step_ms <= 0:
            raise ValueError("durations must be positive")
        if self.hand_motion not in HAND_MOTIONS:
            raise ValueError(f"hand_motion must be one of {HAND_MOTIONS}, got {self.hand_motion!r}")
        if self.hpt_noise_std_ms < 0:
            raise ValueError("hpt_noise_std_ms must be >= 0")
        if not 1 <= self.n_positions <= 5:
            raise ValueError("n_positions must be in 1..5")
        if not 1 <= self.n_shapes <= 8:
            raise ValueError("n_shapes must be in 1..8")
        if self.n_vowels < 1 or self.n_consonants < 1:
            raise ValueError("need at least one vowel and one consonant")
        for name, n, top in (("vowel_positions", self.n_vowels, self.n_positions),
                             ("consonant_shapes", self.n_consonants, self.n_shapes)):
            vals = getattr(self, name)
            if vals is not None and (len(vals) != n or min(vals) < 0 or max(vals) >= top):
                raise ValueError(f"{name} must list {n} values in 0..{top - 1}")
        for name, n in (("vowel_lip_groups", self.n_vowels), ("consonant_lip_groups", self.n_consonants)):
            vals = getattr(self, name)
            if vals is not None and (len(vals) != n or min(vals) < 0):
                raise ValueError(f"{name} must list {n} non-negative values")


@dataclass
class Inventory:
    """Symbol tables and class maps derived from a config."""

    alphabet: Alphabet
    vowel_position: dict
    consonant_shape: dict
    lips_class: dict
    n_lips_classes: int

    @classmethod
    def from_config(cls, cfg: SynthConfig) -> "Inventory":
        vowels = [f"V{i}" for i in range(cfg.n_vowels)]
        consonants = [f"C{j}" for j in range(cfg.n_consonants)]
        vpos = cfg.vowel_positions or [i % cfg.n_positions for i in range(cfg.n_vowels)]
        vlip = cfg.vowel_lip_groups or [i // cfg.n_positions for i in range(cfg.n_vowels)]
        cshape = cfg.consonant_shapes or [j % cfg.n_shapes for j in range(cfg.n_consonants)]
        clip = cfg.consonant_lip_groups or [j // cfg.n_shapes for j in range(cfg.n_consonants)]
        n_vgroups = max(vlip) + 1
        lips_class = {SILENCE: 0}
        lips_class.update({v: 1 + g for v, g in zip(vowels, vlip)})
        lips_class.update({c: 1 + n_vgroups + g for c, g in zip(consonants, clip)})
        alphabet = Alphabet(
            [Phoneme(SILENCE, PhonemeKind.SILENCE)]
            + [Phoneme(v, PhonemeKind.VOWEL) for v in vowels]
            + [Phoneme(c, PhonemeKind.CONSONANT) for c in consonants]
        )
        return cls(alphabet, dict(zip(vowels, vpos)), dict(zip(consonants, cshape)),
                   lips_class, 1 + n_vgroups + max(clip) + 1)


def emitter_means(cfg: SynthConfig, inv: Inventory) -> dict:
    """Class means per modality; hand classes end with the rest class."""
    rng = derive_rng(cfg.seed, "emitters")
    lips = rng.normal(0.0, cfg.lips_separation, size=(inv.n_lips_classes, cfg.lips_dim))
    angles = 2 * np.pi * np.arange(cfg.n_positions) / cfg.n_positions
    pos = np.zeros((cfg.n_positions + 1, cfg.hand_pos_dim))
    pos[:-1, 0] = cfg.hand_pos_radius * np.cos(angles)
    if cfg.hand_pos_dim > 1:
        pos[:-1, 1] = cfg.hand_pos_radius * np.sin(angles)
    shape = rng.normal(0.0, cfg.hand_shape_separation, size=(cfg.n_shapes + 1, cfg.hand_shape_dim))
    return {"lips": lips, "hand_pos": pos, "hand_shape": shape}


def _draw_duration(rng, lo_hi, step):
    lo, hi = lo_hi
    k_lo = -(-lo // step)
    k_hi = hi // step
    if k_hi < k_lo:
        return int(lo)
    return int(step * rng.integers(k_lo, k_hi + 1))


def _target_tier(tier, events, half_width, lags, report):
    """Intervals of length ``2 * half_width`` centred ``lag`` before each event midpoint."""
    out = []
    for (t, label), lag in zip(events, lags):
        centre = t - lag
        start, end = int(round(centre - half_width)), int(round(centre + half_width))
        if start < 0:
            report["clamped"] += 1
            start = 0
        if out and start < out[-1].end:
            prev = out[-1]
            if start <= prev.start:
                raise ValueError(
                    "hand targets would be reordered; lower hpt_noise_std_ms or lengthen syllables"
                )
            report["truncated"] += 1
            out[-1] = Interval(prev.start, start, prev.label)
        if end <= start:
            raise ValueError("hand target collapsed to zero length at sentence start")
        out.append(Interval(start, end, label))
    return Segmentation(tier, tuple(out))


def _hand_track(seg, n_frames, period, class_means, class_of, motion):
    """Noise-free hand trajectory; the last row of ``class_means`` is the rest class."""
    labels = frame_labels(seg, n_frames, period)
    rest = len(class_means) - 1
    out = class_means[[rest if lab is None else class_of[lab] for lab in labels]].copy()
    if motion == "glide":
        ivs = seg.intervals
        for prev, nxt in zip(ivs, ivs[1:]):
            lo = -(-prev.end // period)
            hi = min(-(-nxt.start // period), n_frames)
            if hi <= lo:
                continue
            frac = ((np.arange(lo, hi) * period - prev.end) / (nxt.start - prev.end))[:, None]
            a, b = class_means[class_of[prev.label]], class_means[class_of[nxt.label]]
            out[lo:hi] = a + frac * (b - a)
    return out


def _sentence(cfg, inv, means, sid, group, content, rng, report):
    step = cfg.duration_step_ms
    intervals = []
    t = _draw_duration(rng, cfg.silence_dur_ms, step)
    intervals.append(Interval(0, t, SILENCE))
    for c, v in content:
        dc = _draw_duration(rng, cfg.consonant_dur_ms, step)
        dv = _draw_duration(rng, cfg.vowel_dur_ms, step)
        intervals.append(Interval(t, t + dc, c))
        intervals.append(Interval(t + dc, t + dc + dv, v))
        t += dc + dv
    t_end_speech = t
    t_end = t + _draw_duration(rng, cfg.silence_dur_ms, step)
    intervals.append(Interval(t, t_end, SILENCE))
    audio = Segmentation(Tier.AUDIO, tuple(intervals))

    vowel_events = [(iv.midpoint, iv.label) for iv in intervals if iv.label.startswith("V")]
    cons_events = [(iv.midpoint, iv.label) for iv in intervals if iv.label.startswith("C")]
    sd = cfg.hpt_noise_std_ms
    lag_v = [int(round(cfg.hpm_true.delta(t_end_speech - tv) + (rng.normal(0, sd) if sd > 0 else 0.0)))
             for tv, _ in vowel_events]
    lag_c = [int(round(cfg.delta_c_true_ms + (rng.normal(0, sd) if sd > 0 else 0.0)))
             for _ in cons_events]
    pos_seg = _target_tier(Tier.HAND_POS, vowel_events, cfg.D_v_ms / 2, lag_v, report)
    shape_seg = _target_tier(Tier.HAND_SHAPE, cons_events, cfg.D_c_ms / 2, lag_c, report)
    delta_v = tuple(int(round(tv - iv.midpoint)) for (tv, _), iv in zip(vowel_events, pos_seg))
    delta_c = tuple(int(round(tc - iv.midpoint)) for (tc, _), iv in zip(cons_events, shape_seg))

    period = cfg.period_ms
    n_frames = -(-t_end // period)

    lips_mean = np.zeros((n_frames, cfg.lips_dim))
    for k, iv in enumerate(intervals):
        mu = means["lips"][inv.lips_class[iv.label]]
        if cfg.coarticulation and iv.label.startswith("C") and k + 1 < len(intervals):
            nxt = means["lips"][inv.lips_class[intervals[k + 1].label]]
            mu = mu + cfg.coarticulation * (nxt - mu)
        lo = -(-iv.start // period)
        hi = min(-(-iv.end // period), n_frames)
        lips_mean[lo:hi] = mu
    lips = lips_mean + rng.normal(0, cfg.lips_noise, size=lips_mean.shape)

    hand_pos = _hand_track(pos_seg, n_frames, period, means["hand_pos"], inv.vowel_position, cfg.hand_motion)
    hand_pos = hand_pos + rng.normal(0, cfg.hand_pos_noise, size=hand_pos.shape)
    hand_shape = _hand_track(shape_seg, n_frames, period, means["hand_shape"], inv.consonant_shape,
                             cfg.hand_motion)
    hand_shape = hand_shape + rng.normal(0, cfg.hand_shape_noise, size=hand_shape.shape)
    truth = SentenceTruth(pos_seg, shape_seg, delta_v, delta_c)
    return Sentence(
        sid,
        FrameStream(Modality.LIPS, period, lips),
        FrameStream(Modality.HAND_POS, period, hand_pos),
        FrameStream(Modality.HAND_SHAPE, period, hand_shape),
        audio,
        truth,
        group,
    )


def generate_corpus(cfg: SynthConfig) -> Corpus:
    """Deterministic corpus for ``cfg``; every sentence draws from its own derived seed."""
    cfg.validate()
    inv = Inventory.from_config(cfg)
    means = emitter_means(cfg, inv)
    vowels = inv.alphabet.of_kind(PhonemeKind.VOWEL)
    consonants = inv.alphabet.of_kind(PhonemeKind.CONSONANT)
    report = {"clamped": 0, "truncated": 0}
    sentences = []
    for g in range(cfg.n_sentences):
        crng = derive_rng(cfg.seed, "content", g)
        lo, hi = cfg.syllables_per_sentence
        n_syl = int(crng.integers(lo, hi + 1))
        content = [(consonants[crng.integers(len(consonants))], vowels[crng.integers(len(vowels))])
                   for _ in range(n_syl)]
        for r in range(cfg.repetitions):
            idx = g * cfg.repetitions + r
            sid = f"s{g:04d}" if cfg.repetitions == 1 else f"s{g:04d}r{r}"
            rng = derive_rng(cfg.seed, "sentence", idx)
            sentences.append(_sentence(cfg, inv, means, sid, f"g{g:04d}", content, rng, report))
    metadata = {
        "generator": "cuesync.synth",
        "config": to_jsonable(cfg.to_dict()),
        "clamped_targets": report["clamped"],
        "truncated_targets": report["truncated"],
        "vowel_positions": inv.vowel_position,
        "consonant_shapes": inv.consonant_shape,
        "lips_classes": inv.lips_class,
    }
    return Corpus(tuple(sentences), inv.alphabet, cfg.period_ms, metadata)


@dataclass(frozen=True)
class HptObservation:
    u: float
    delta_v: float
    sentence_id: str = ""
    label: str = ""


def _require_truth(sentence):
    if sentence.truth is None:
        raise ValueError(
            f"sentence {sentence.id} has no hand-tier truth; generate the corpus with synth.generate_corpus"
        )
    return sentence.truth


def measure_empirical_hpt(corpus: Corpus) -> tuple[list[HptObservation], list[float]]:
    """Vowel HPT observations ``(u, t_v - t_tar_v)`` and consonant lags ``t_c - t_tar_c``.

    Audio and hand-tier intervals are paired in order of occurrence.
    """
    vowel_obs, cons = [], []
    for s in corpus:
        truth = _require_truth(s)
        end = speech_end(s.audio_seg, corpus.alphabet)
        vowels = [iv for iv in s.audio_seg if corpus.alphabet.kind(iv.label) == PhonemeKind.VOWEL]
        consonants = [iv for iv in s.audio_seg if corpus.alphabet.kind(iv.label) == PhonemeKind.CONSONANT]
        if len(vowels) != len(truth.hand_pos_seg) or len(consonants) != len(truth.hand_shape_seg):
            raise ValueError(f"sentence {s.id}: hand tiers do not pair one-to-one with audio phonemes")
        for iv, tgt in zip(vowels, truth.hand_pos_seg):
            vowel_obs.append(HptObservation(end - iv.midpoint, iv.midpoint - tgt.midpoint, s.id, iv.label))
        for iv, tgt in zip(consonants, truth.hand_shape_seg):
            cons.append(iv.midpoint - tgt.midpoint)
    return vowel_obs, cons


def count_vowels(corpus: Corpus) -> int:
    return sum(1 for s in corpus for iv in s.audio_seg if corpus.alphabet.kind(iv.label) == PhonemeKind.VOWEL)


def config_for_vowel_count(n_vowels_total: int, **overrides) -> SynthConfig:
    """Config with enough sentences for roughly ``n_vowels_total`` vowels."""
    cfg = SynthConfig(**overrides)
    lo, hi = cfg.syllables_per_sentence
    cfg.n_sentences = max(1, math.ceil(n_vowels_total / ((lo + hi) / 2) / cfg.repetitions))
    return cfg
