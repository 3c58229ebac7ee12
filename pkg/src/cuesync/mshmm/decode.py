"""Viterbi decoding of continuous sentences over a free loop of units."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..core import Corpus, Sentence
from ..metrics import AlignmentResult, pooled, t_corr
from .dp import loop_viterbi
from .model import N_STATES, MsHmmModel, StreamWeights, assemble_observations, parse_unit
from .train import silence_symbol, transcribe


@dataclass
class DecodeResult:
    labels: list  # centre phonemes, in order
    segments: list  # (unit name, first frame, end frame)
    state_path: np.ndarray  # global state index 3u + j per frame
    score: float


def _graph(model: MsHmmModel):
    center, left, right = model.unit_arrays()
    log_stay, log_adv = model.log_stay_adv()
    return center, left, right, log_stay, log_adv


def decode_scores(model: MsHmmModel, stream_ll, weights: StreamWeights | None = None,
                  entry_logp: float | None = None, graph=None) -> DecodeResult:
    """Decode from precomputed per-stream log-likelihoods (n_streams, T, 3U)."""
    center, left, right, log_stay, log_adv = graph or _graph(model)
    E = np.ascontiguousarray(model.combine(stream_ll, weights))
    if entry_logp is None:
        entry_logp = -np.log(model.n_units)
    path, score = loop_viterbi(E, log_stay, log_adv, center.astype(np.int64), left.astype(np.int64),
                               right.astype(np.int64), len(model.alphabet), float(entry_logp))
    if not np.isfinite(score):
        raise ValueError("no complete path through the unit loop (sentence shorter than one unit?)")
    segments = []
    start = 0
    for t in range(1, len(path) + 1):
        if t == len(path) or path[t] // N_STATES != path[t - 1] // N_STATES or path[t] < path[t - 1]:
            segments.append((model.units[path[start] // N_STATES], start, t))
            start = t
    labels = [parse_unit(name)[1] for name, _, _ in segments]
    return DecodeResult(labels, segments, path, float(score))


def sentence_stream_loglik(model: MsHmmModel, sentence: Sentence):
    return model.stream_loglik(assemble_observations(sentence, model.streams))


def viterbi_decode(model: MsHmmModel, sentence: Sentence, weights: StreamWeights | None = None,
                   entry_logp: float | None = None) -> DecodeResult:
    if sentence.n_frames == 0:
        raise ValueError("empty sentence")
    return decode_scores(model, sentence_stream_loglik(model, sentence), weights, entry_logp)


def reference_labels(sentence: Sentence, alphabet, segmentation=None) -> list:
    seg = segmentation(sentence) if segmentation else sentence.audio_seg
    return [lab for lab, _, _ in transcribe(seg, sentence.n_frames, sentence.period_ms, silence_symbol(alphabet))]


def default_ignore(alphabet) -> set:
    sil = silence_symbol(alphabet)
    return {sil} if sil else set()


def score_labels(ref, hyp, alphabet, ignore=None) -> AlignmentResult:
    """Alignment counts after removing ``ignore`` labels (silence by default)."""
    ignore = default_ignore(alphabet) if ignore is None else set(ignore)
    ref = [x for x in ref if x not in ignore]
    hyp = [x for x in hyp if x not in ignore]
    if not ref:
        return AlignmentResult(0, 0, 0, 0, len(hyp))
    return t_corr(ref, hyp)[0]


def evaluate(model: MsHmmModel, corpus: Corpus, weights: StreamWeights | None = None,
             ignore=None, cache=None) -> tuple[float, AlignmentResult, list]:
    """Corpus-level correctness of ``model`` on ``corpus``."""
    graph = _graph(model)
    results, decoded = [], []
    for i, s in enumerate(corpus):
        ll = cache[i] if cache is not None else sentence_stream_loglik(model, s)
        d = decode_scores(model, ll, weights, graph=graph)
        decoded.append(d)
        results.append(score_labels(reference_labels(s, corpus.alphabet), d.labels, corpus.alphabet, ignore))
    total = pooled(results)
    return total.correctness, total, decoded


def simplex_grid(n: int, step: float = 0.1):
    k = int(round(1.0 / step))
    for combo in itertools.product(range(k + 1), repeat=n - 1):
        if sum(combo) <= k:
            yield tuple(c / k for c in combo) + ((k - sum(combo)) / k,)


def optimize_weights(model: MsHmmModel, dev: Corpus, step: float = 0.1,
                     ignore=None) -> tuple[StreamWeights, dict]:
    """Exhaustive simplex grid search of stream weights maximising dev correctness.

    The exactly uniform point is always a candidate, off-grid or not. Ties go
    to the weights closest to uniform, then to the first candidate.
    """
    cache = [sentence_stream_loglik(model, s) for s in dev]
    n = len(model.streams)
    uniform = np.full(n, 1.0 / n)
    scores = {}
    best = None
    candidates = list(simplex_grid(n, step))
    if tuple(uniform) not in candidates:
        candidates.insert(0, tuple(uniform))
    for w in candidates:
        sw = StreamWeights(w)
        corr = evaluate(model, dev, sw, ignore=ignore, cache=cache)[0]
        scores[w] = corr
        key = (corr, -float(((np.array(w) - uniform) ** 2).sum()))
        if best is None or key > best[0]:
            best = (key, sw)
    return best[1], scores
