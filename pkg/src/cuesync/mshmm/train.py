"""Flat start and embedded Baum-Welch re-estimation of multi-stream HMMs."""
from __future__ import annotations

import logging
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from ..core import STREAM_ORDER, Corpus, PhonemeKind, Segmentation, Sentence
from ..gmm import log_gauss_diag, split_diag
from .dp import chain_backward, chain_forward
from .model import N_STATES, MsHmmModel, StreamWeights, UnitMode, assemble_observations, paper_weights, unit_name

log = logging.getLogger(__name__)

PRUNE_OCCUPANCY = 1e-6


@dataclass
class TrainSchedule:
    mixtures: tuple = (1, 2)
    max_iters: int = 20
    rel_tol: float = 1e-5
    var_floor_scale: float = 1e-4

    def to_dict(self):
        return asdict(self)


def silence_symbol(alphabet):
    sil = alphabet.of_kind(PhonemeKind.SILENCE)
    return sil[0] if sil else None


def transcribe(seg: Segmentation, n_frames: int, period_ms: int, silence: str | None):
    """(label, first_frame, end_frame) covering every frame; gaps become silence."""
    out = []
    cursor = 0
    for s, e, lab in seg.intervals:
        lo = min(n_frames, -(-s // period_ms))
        hi = min(n_frames, -(-e // period_ms))
        if lo > cursor:
            if silence is None:
                raise ValueError("segmentation leaves frames uncovered and the alphabet has no silence")
            out.append((silence, cursor, lo))
        if hi > lo:
            out.append((lab, lo, hi))
        cursor = max(cursor, hi)
    if cursor < n_frames:
        if silence is None:
            raise ValueError("segmentation leaves frames uncovered and the alphabet has no silence")
        out.append((silence, cursor, n_frames))
    merged = []
    for lab, lo, hi in out:
        if merged and lab == silence and merged[-1][0] == silence:
            merged[-1] = (silence, merged[-1][1], hi)
        else:
            merged.append((lab, lo, hi))
    return merged


def context_units(labels, model: MsHmmModel, silence):
    """Map a phoneme sequence onto the model's units (triphones where available)."""
    if model.mode == UnitMode.MONOPHONE:
        return [model.unit_index(lab) for lab in labels]
    out = []
    for i, lab in enumerate(labels):
        left = labels[i - 1] if i > 0 else silence
        right = labels[i + 1] if i + 1 < len(labels) else silence
        name = unit_name(lab, left, right)
        out.append(model.unit_index(name if model.has_unit(name) else lab))
    return out


SegmentationSource = Callable[[Sentence], Segmentation]


def _audio(s: Sentence) -> Segmentation:
    return s.audio_seg


def init_model(corpus: Corpus, streams=STREAM_ORDER, weights: StreamWeights | None = None,
               segmentation: SegmentationSource = _audio, var_floor_scale: float = 1e-4) -> MsHmmModel:
    """Flat start: split every labelled segment evenly over the three states."""
    alphabet = corpus.alphabet
    units = alphabet.symbols
    U = len(units)
    P = N_STATES * U
    silence = silence_symbol(alphabet)
    obs_all = [assemble_observations(s, streams) for s in corpus]
    dims = [X.shape[1] for X in obs_all[0]]
    cnt = np.zeros(P)
    sx = [np.zeros((P, d)) for d in dims]
    sxx = [np.zeros((P, d)) for d in dims]
    seg_frames = np.zeros(P)
    seg_visits = np.zeros(P)
    for s, obs in zip(corpus, obs_all):
        for lab, lo, hi in transcribe(segmentation(s), s.n_frames, s.period_ms, silence):
            u = alphabet.index(lab)
            n = hi - lo
            for j in range(N_STATES):
                a = lo + (j * n) // N_STATES
                b = lo + ((j + 1) * n) // N_STATES
                p = N_STATES * u + j
                seg_visits[p] += 1
                seg_frames[p] += b - a
                if b > a:
                    cnt[p] += b - a
                    for k, X in enumerate(obs):
                        sx[k][p] += X[a:b].sum(axis=0)
                        sxx[k][p] += (X[a:b] ** 2).sum(axis=0)
    floors = []
    means, variances = [], []
    for k, X_dim in enumerate(dims):
        allx = np.concatenate([o[k] for o in obs_all])
        gvar = allx.var(axis=0)
        floor = var_floor_scale * np.where(gvar > 0, gvar, 1.0)
        floors.append(floor)
        mu = np.tile(allx.mean(axis=0), (P, 1))
        var = np.tile(np.maximum(gvar, floor), (P, 1))
        has = cnt > 0
        mu[has] = sx[k][has] / cnt[has, None]
        var[has] = np.maximum(sxx[k][has] / cnt[has, None] - mu[has] ** 2, floor)
        means.append(mu[:, None, :])
        variances.append(var[:, None, :])
    mean_len = np.where(seg_visits > 0, seg_frames / np.maximum(seg_visits, 1), 2.0)
    stay = np.clip(1.0 - 1.0 / np.maximum(mean_len, 1.0), 0.1, 0.95)
    mix = [np.ones((P, 1)) for _ in dims]
    return MsHmmModel(alphabet, tuple(streams), list(units), mix, means, variances, stay, floors,
                      weights or paper_weights(streams), UnitMode.MONOPHONE,
                      {"init": "flat-start"})


def _split(model: MsHmmModel):
    for s in range(len(model.streams)):
        w, mu, var = model.mix[s], model.means[s], model.variances[s]
        P, M, d = mu.shape
        new_w = np.zeros((P, 2 * M))
        new_mu = np.zeros((P, 2 * M, d))
        new_var = np.ones((P, 2 * M, d))
        for p in range(P):
            live = w[p] > 0
            nw, nm, nv = split_diag(w[p][live], mu[p][live], var[p][live])
            k = len(nw)
            new_w[p, :k], new_mu[p, :k], new_var[p, :k] = nw, nm, nv
        model.mix[s], model.means[s], model.variances[s] = new_w, new_mu, new_var


class _Accumulators:
    def __init__(self, model):
        P = N_STATES * model.n_units
        self.occ = [np.zeros(w.shape) for w in model.mix]
        self.sx = [np.zeros(m.shape) for m in model.means]
        self.sxx = [np.zeros(m.shape) for m in model.means]
        self.state_occ = np.zeros(P)
        self.exits = np.zeros(P)
        self.loglik = 0.0
        self.n_used = 0


def _mixture_terms(X, mix, mu, var):
    """Mixture log-density (T, P) and component posteriors (T, P, M)."""
    P, M, d = mu.shape
    comp = log_gauss_diag(X, mu.reshape(P * M, d), var.reshape(P * M, d)).reshape(len(X), P, M)
    with np.errstate(divide="ignore"):
        comp += np.log(mix)[None]
    top = comp.max(axis=2, keepdims=True)
    np.exp(comp - top, out=comp)
    total = comp.sum(axis=2, keepdims=True)
    comp /= total
    return (top + np.log(total))[:, :, 0], comp


def _estep(model, obs, unit_seq, acc, log_stay, log_adv, lam):
    chain = (N_STATES * np.repeat(unit_seq, N_STATES) + np.tile(np.arange(N_STATES), len(unit_seq)))
    T = len(obs[0])
    if T < len(chain):
        return False
    pdfs, inv = np.unique(chain, return_inverse=True)
    posts = []
    E = np.zeros((T, len(chain)))
    for s, X in enumerate(obs):
        ll, post = _mixture_terms(X, model.mix[s][pdfs], model.means[s][pdfs], model.variances[s][pdfs])
        posts.append(post)
        if lam[s] != 0:
            E += lam[s] * ll[:, inv]
    alpha, logp = chain_forward(E, log_stay[chain], log_adv[chain])
    if not np.isfinite(logp):
        return False
    beta = chain_backward(E, log_stay[chain], log_adv[chain])
    gamma = np.exp(alpha + beta - logp)
    acc.loglik += logp
    acc.n_used += 1
    np.add.at(acc.state_occ, chain, gamma.sum(axis=0))
    np.add.at(acc.exits, chain, 1.0)
    # occupancy of each distinct pdf, summed over its chain positions
    onehot = np.zeros((len(chain), len(pdfs)))
    onehot[np.arange(len(chain)), inv] = 1.0
    G = gamma @ onehot
    for s, X in enumerate(obs):
        R = G[:, :, None] * posts[s]
        Pq, M = R.shape[1:]
        Rf = R.reshape(T, Pq * M)
        acc.occ[s][pdfs] += Rf.sum(axis=0).reshape(Pq, M)
        acc.sx[s][pdfs] += (Rf.T @ X).reshape(Pq, M, -1)
        acc.sxx[s][pdfs] += (Rf.T @ (X * X)).reshape(Pq, M, -1)
    return True


def _mstep(model, acc):
    for s in range(len(model.streams)):
        occ = acc.occ[s]
        total = occ.sum(axis=1)
        for p in np.nonzero(total > 0)[0]:
            live = (model.mix[s][p] > 0) & (occ[p] > PRUNE_OCCUPANCY)
            dead = (model.mix[s][p] > 0) & ~live
            if dead.any():
                warnings.warn(f"pdf {p} stream {s}: pruned {int(dead.sum())} starved component(s)",
                              RuntimeWarning)
            w = np.where(live, occ[p], 0.0)
            model.mix[s][p] = w / w.sum()
            o = np.where(live, occ[p], 1.0)[:, None]
            mu = acc.sx[s][p] / o
            var = np.maximum(acc.sxx[s][p] / o - mu**2, model.floors[s])
            model.means[s][p] = np.where(live[:, None], mu, model.means[s][p])
            model.variances[s][p] = np.where(live[:, None], var, model.variances[s][p])
    used = acc.state_occ > 0
    model.stay[used] = np.clip(1.0 - acc.exits[used] / acc.state_occ[used], 0.0, 1.0)


def _compact(model):
    """Drop mixture slots that are pruned in every pdf."""
    for s in range(len(model.streams)):
        keep = (model.mix[s] > 0).any(axis=0)
        order = np.argsort(~(model.mix[s] > 0), axis=1, kind="stable")
        rows = np.arange(model.mix[s].shape[0])[:, None]
        model.mix[s] = model.mix[s][rows, order][:, : max(1, int(keep.sum()))]
        model.means[s] = model.means[s][rows, order][:, : model.mix[s].shape[1]]
        model.variances[s] = model.variances[s][rows, order][:, : model.mix[s].shape[1]]


def train_embedded(model: MsHmmModel, corpus: Corpus, schedule: TrainSchedule = TrainSchedule(),
                   segmentation: SegmentationSource = _audio) -> MsHmmModel:
    """Baum-Welch over whole-sentence composite HMMs built from each transcription.

    Mixtures grow by splitting to each size in ``schedule.mixtures``; each
    stage iterates until the relative log-likelihood gain drops below
    ``rel_tol`` or ``max_iters`` is reached. The per-iteration totals are kept
    in ``meta["loglik_trace"]`` as one list per stage.
    """
    model = model.copy()
    silence = silence_symbol(model.alphabet)
    data = []
    for s in corpus:
        labels = [lab for lab, _, _ in transcribe(segmentation(s), s.n_frames, s.period_ms, silence)]
        data.append((assemble_observations(s, model.streams), np.array(context_units(labels, model, silence))))
    lam = model.weights.as_array()
    traces = []
    for target in schedule.mixtures:
        while max(int((w > 0).sum(axis=1).max()) for w in model.mix) < target:
            _split(model)
        trace = []
        prev = None
        for it in range(schedule.max_iters):
            log_stay, log_adv = model.log_stay_adv()
            acc = _Accumulators(model)
            skipped = 0
            for obs, units in data:
                if not _estep(model, obs, units, acc, log_stay, log_adv, lam):
                    skipped += 1
            if acc.n_used == 0:
                raise ValueError("no sentence can be aligned to its transcription")
            if skipped and it == 0:
                warnings.warn(f"{skipped} sentence(s) shorter than their transcription were skipped",
                              RuntimeWarning)
            trace.append(acc.loglik)
            if prev is not None and (acc.loglik - prev) <= schedule.rel_tol * abs(prev):
                break
            prev = acc.loglik
            _mstep(model, acc)
        log.debug("stage M=%d: %d iterations, loglik %.3f", target, len(trace), trace[-1])
        traces.append(trace)
    _compact(model)
    model.meta = dict(model.meta)
    model.meta["loglik_trace"] = traces
    model.meta["schedule"] = schedule.to_dict()
    return model


def context_counts(corpus: Corpus, segmentation: SegmentationSource = _audio) -> Counter:
    silence = silence_symbol(corpus.alphabet)
    counts = Counter()
    for s in corpus:
        labels = [lab for lab, _, _ in transcribe(segmentation(s), s.n_frames, s.period_ms, silence)]
        for i, lab in enumerate(labels):
            if lab == silence:
                continue
            left = labels[i - 1] if i > 0 else silence
            right = labels[i + 1] if i + 1 < len(labels) else silence
            counts[(left, lab, right)] += 1
    return counts


def expand_triphones(model: MsHmmModel, corpus: Corpus, min_occupancy: float = 10,
                     schedule: TrainSchedule | None = None,
                     segmentation: SegmentationSource = _audio) -> MsHmmModel:
    """Clone monophones into triphones seen at least ``min_occupancy`` times, then retrain.

    Rarer contexts fall back to the monophone, which stays in the model.
    """
    if math.isinf(min_occupancy):
        return model
    counts = context_counts(corpus, segmentation)
    new = sorted(ctx for ctx, n in counts.items() if n >= min_occupancy)
    out = model.copy()
    names = list(out.units)
    src = []
    for left, c, right in new:
        name = unit_name(c, left, right)
        if name in out._index:
            continue
        names.append(name)
        src.append(model.unit_index(c))
    if src:
        rows = (N_STATES * np.repeat(src, N_STATES) + np.tile(np.arange(N_STATES), len(src)))
        for s in range(len(out.streams)):
            out.mix[s] = np.concatenate([out.mix[s], out.mix[s][rows]])
            out.means[s] = np.concatenate([out.means[s], out.means[s][rows]])
            out.variances[s] = np.concatenate([out.variances[s], out.variances[s][rows]])
        out.stay = np.concatenate([out.stay, out.stay[rows]])
    out = MsHmmModel(out.alphabet, out.streams, names, out.mix, out.means, out.variances, out.stay,
                     out.floors, out.weights, UnitMode.TRIPHONE,
                     {**out.meta, "n_triphones": len(src), "min_occupancy": min_occupancy})
    if schedule is None:
        M = max(w.shape[1] for w in out.mix)
        schedule = TrainSchedule(mixtures=(M,), max_iters=5)
    if src:
        out = train_embedded(out, corpus, schedule, segmentation)
    return out


def train_mshmm(corpus: Corpus, streams=STREAM_ORDER, weights: StreamWeights | None = None,
                schedule: TrainSchedule = TrainSchedule(), segmentation: SegmentationSource = _audio,
                triphones: bool = False, min_occupancy: float = 10,
                triphone_schedule: TrainSchedule | None = None) -> MsHmmModel:
    """Flat start, monophone EM and optional triphone expansion in one call."""
    model = init_model(corpus, streams, weights, segmentation, schedule.var_floor_scale)
    model = train_embedded(model, corpus, schedule, segmentation)
    if triphones:
        model = expand_triphones(model, corpus, min_occupancy, triphone_schedule, segmentation)
    return model
