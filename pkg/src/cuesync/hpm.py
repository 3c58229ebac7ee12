"""Hand-preceding model: piecewise lag of hand position versus time-to-end.

The lag is constant (``mean_ms``) for vowels more than ``t0_ms`` before the end
of speech and affine (``a * u + b``) closer to the end, where ``u`` is the time
from the vowel's audio midpoint to the end of speech.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    MODEL_FORMAT_VERSION,
    Alphabet,
    Corpus,
    Interval,
    PhonemeKind,
    Segmentation,
    Tier,
    read_model_json,
    write_json,
)
from .synth import HptObservation


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class HpmModel:
    mean_ms: float
    t0_ms: float
    a: float
    b: float
    n_obs: int = 0
    sse_constant: float = 0.0
    sse_linear: float = 0.0
    slope_fallback: bool = False

    def __post_init__(self):
        if not self.t0_ms > 0:
            raise ValueError("t0_ms must be positive")
        if not np.isfinite(self.mean_ms):
            raise ValueError("mean_ms must be finite")

    def to_json(self) -> dict:
        return {"kind": "hpm", "version": MODEL_FORMAT_VERSION, **asdict(self)}

    @classmethod
    def from_json(cls, doc: dict) -> "HpmModel":
        doc = {k: v for k, v in doc.items() if k not in ("kind", "version")}
        return cls(**doc)

    def save(self, path) -> None:
        write_json(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "HpmModel":
        return cls.from_json(read_model_json(path, "hpm"))


ZERO_MODEL = HpmModel(mean_ms=0.0, t0_ms=1.0, a=0.0, b=0.0)


@dataclass(frozen=True)
class T0Search:
    min_ms: float = 300.0
    max_ms: float = 1500.0
    step_ms: float = 20.0

    def grid(self) -> np.ndarray:
        n = int(np.floor((self.max_ms - self.min_ms) / self.step_ms + 1e-9)) + 1
        return self.min_ms + self.step_ms * np.arange(n)


def _as_arrays(obs):
    if len(obs) and isinstance(obs[0], HptObservation):
        u = np.array([o.u for o in obs], dtype=float)
        d = np.array([o.delta_v for o in obs], dtype=float)
    else:
        arr = np.asarray(obs, dtype=float).reshape(-1, 2)
        u, d = arr[:, 0], arr[:, 1]
    return u, d


def _ols(u, d):
    """Least-squares line; slope 0 when ``u`` has no spread."""
    um, dm = u.mean(), d.mean()
    du = u - um
    sxx = float(du @ du)
    if sxx <= 1e-12 * max(1.0, um * um) * len(u):
        return 0.0, dm, float(((d - dm) ** 2).sum()), True
    a = float(du @ (d - dm)) / sxx
    b = dm - a * um
    resid = d - (a * u + b)
    return a, b, float(resid @ resid), False


def fit_hpm(obs: Sequence, t0_search: T0Search = T0Search()) -> HpmModel:
    """Grid search over the breakpoint minimising the two-segment SSE.

    ``obs`` holds HptObservation records or ``(u, delta_v)`` pairs.
    """
    u, d = _as_arrays(obs)
    if len(u) < 10:
        raise DegenerateFitError(f"need at least 10 observations, got {len(u)}")
    if np.any(u < 0):
        raise ValueError("time-to-end must be non-negative")
    best = None
    for t0 in t0_search.grid():
        tail = u <= t0
        n_tail = int(tail.sum())
        if n_tail < 2 or n_tail == len(u):
            continue
        head_d = d[~tail]
        mean = float(head_d.mean())
        sse_c = float(((head_d - mean) ** 2).sum())
        a, b, sse_l, flat = _ols(u[tail], d[tail])
        total = sse_c + sse_l
        if best is None or total < best[0]:
            best = (total, float(t0), mean, a, b, sse_c, sse_l, flat)
    if best is None:
        raise DegenerateFitError(
            "no breakpoint candidate leaves >= 2 observations in the decay region and >= 1 before it"
        )
    _, t0, mean, a, b, sse_c, sse_l, flat = best
    if flat:
        warnings.warn("decay region has no spread in time-to-end; slope set to 0", RuntimeWarning)
    return HpmModel(mean, t0, a, b, len(u), sse_c, sse_l, flat)


def predict_delta(model: HpmModel, u):
    """Predicted lag (ms) at time-to-end ``u``; accepts scalars or arrays."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ValueError("time-to-end must be non-negative")
    out = np.where(u_arr > model.t0_ms, model.mean_ms, model.a * u_arr + model.b)
    return float(out) if out.ndim == 0 else out


@dataclass
class ShiftReport:
    dropped: list = field(default_factory=list)
    clamped: int = 0
    truncated: int = 0


def shift_intervals(intervals: Iterable[Interval], lags: Iterable[float], tier: Tier,
                    report: ShiftReport | None = None) -> Segmentation:
    """Move each interval ``lag`` ms earlier, clamp at 0, truncate overlaps, drop collapsed ones."""
    report = report if report is not None else ShiftReport()
    out: list[Interval] = []
    for iv, lag in zip(intervals, lags):
        lag = int(round(lag))
        s, e = iv.start - lag, iv.end - lag
        if s < 0:
            s = 0
            report.clamped += 1
        if e <= s:
            report.dropped.append(iv)
            continue
        while out and s < out[-1].end:
            prev = out.pop()
            if s > prev.start:
                out.append(Interval(prev.start, s, prev.label))
                report.truncated += 1
            else:
                report.dropped.append(prev)
        out.append(Interval(s, e, iv.label))
    return Segmentation(tier, tuple(out))


def hpm_segmentation(
    audio_seg: Segmentation,
    model: HpmModel,
    sentence_end: int,
    alphabet: Alphabet | None = None,
    consonant_lag_ms: float = 60.0,
    kinds: Iterable[PhonemeKind] | None = None,
    tier: Tier = Tier.HAND_POS,
    use_decay: bool = True,
    report: ShiftReport | None = None,
) -> Segmentation:
    """Hand-tier segmentation predicted from the audio tier.

    Vowels move earlier by the model lag at their time-to-end (the constant
    ``mean_ms`` everywhere when ``use_decay`` is false), consonants by
    ``consonant_lag_ms``, silences stay put. ``kinds`` keeps only those
    phoneme kinds. Without an alphabet, labels are classified by their
    first letter (V/C) with ``sil`` as silence.
    """
    if audio_seg.tier != Tier.AUDIO:
        raise ValueError(f"expected an Audio tier, got {audio_seg.tier.value}")
    kinds = set(kinds) if kinds is not None else None

    def kind_of(label):
        if alphabet is not None:
            return alphabet.kind(label)
        if label.startswith("V"):
            return PhonemeKind.VOWEL
        if label.startswith("C"):
            return PhonemeKind.CONSONANT
        return PhonemeKind.SILENCE

    keep, lags = [], []
    for iv in audio_seg:
        k = kind_of(iv.label)
        if kinds is not None and k not in kinds:
            continue
        if k == PhonemeKind.VOWEL:
            if use_decay:
                lag = predict_delta(model, max(0.0, sentence_end - iv.midpoint))
            else:
                lag = model.mean_ms
        elif k == PhonemeKind.CONSONANT:
            lag = consonant_lag_ms
        else:
            lag = 0.0
        keep.append(iv)
        lags.append(lag)
    return shift_intervals(keep, lags, tier, report)


def cv_pairs(corpus: Corpus):
    """(consonant interval, vowel interval) for each consonant directly followed by a vowel."""
    for s in corpus:
        ivs = s.audio_seg.intervals
        for c, v in zip(ivs, ivs[1:]):
            if (corpus.alphabet.kind(c.label) == PhonemeKind.CONSONANT
                    and corpus.alphabet.kind(v.label) == PhonemeKind.VOWEL):
                yield c, v


def delta_cv_stats(corpus: Corpus) -> dict:
    """Mean and std of ``t_v - t_c`` over CV syllables (audio midpoints)."""
    vals = np.array([v.midpoint - c.midpoint for c, v in cv_pairs(corpus)])
    if vals.size == 0:
        raise ValueError("corpus has no consonant-vowel pairs")
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return {"mean_ms": float(vals.mean()), "std_ms": std, "n": int(vals.size)}


def theoretical_delta_c(delta_v_star: float, mean_delta_cv: float, D_c: float) -> float:
    """Consonant lag implied by the vowel lag, CV spacing and shape-hold duration."""
    if min(delta_v_star, mean_delta_cv, D_c) < 0:
        raise ValueError("inputs must be non-negative")
    out = (delta_v_star - mean_delta_cv) + D_c / 2
    if out < 0:
        warnings.warn(f"negative consonant lag {out} ms", RuntimeWarning)
    return out
