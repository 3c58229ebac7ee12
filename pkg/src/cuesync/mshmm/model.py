"""Multi-stream HMM units: per-state, per-stream diagonal GMMs with stream exponents."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..core import (
    MODEL_FORMAT_VERSION,
    STREAM_ORDER,
    Alphabet,
    Modality,
    Sentence,
    read_model_json,
    write_json,
)
from ..gmm import log_gauss_diag

N_STATES = 3


class UnitMode(str, enum.Enum):
    MONOPHONE = "monophone"
    TRIPHONE = "triphone"


@dataclass(frozen=True)
class StreamWeights:
    """Stream exponents, one per stream in model order; they sum to 1."""

    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if any(x < 0 or x > 1 for x in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"stream weights must lie in [0, 1] and sum to 1, got {v}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def as_array(self):
        return np.array(self.values)

    @classmethod
    def uniform(cls, n: int) -> "StreamWeights":
        return cls((1.0 / n,) * n)

    @classmethod
    def from_named(cls, streams, lips=0.4, hand_pos=0.2, hand_shape=0.4) -> "StreamWeights":
        """Weights for ``streams`` taken from per-modality values, renormalised to sum 1."""
        table = {Modality.LIPS: lips, Modality.HAND_POS: hand_pos, Modality.HAND_SHAPE: hand_shape}
        raw = np.array([table[Modality(s)] for s in streams], dtype=float)
        return cls(tuple(raw / raw.sum()))


def paper_weights(streams=STREAM_ORDER) -> StreamWeights:
    """0.4 lips, 0.4 hand shape, 0.2 hand position."""
    return StreamWeights.from_named(streams)


def unit_name(center: str, left: str | None = None, right: str | None = None) -> str:
    if left is None and right is None:
        return center
    return f"{left}-{center}+{right}"


def parse_unit(name: str) -> tuple:
    """(left, center, right); contexts are None for monophones."""
    if "-" in name and "+" in name:
        left, rest = name.split("-", 1)
        center, right = rest.split("+", 1)
        return left, center, right
    return None, name, None


def derivative(x: np.ndarray) -> np.ndarray:
    """Central difference ``(x[t+1] - x[t-1]) / 2`` with edge frames repeated."""
    padded = np.concatenate([x[:1], x, x[-1:]], axis=0)
    return 0.5 * (padded[2:] - padded[:-2])


def assemble_observations(sentence: Sentence, streams=STREAM_ORDER) -> list:
    """Per stream, frames with their first derivatives appended: ``[x_t ; dx_t]``."""
    out = []
    lengths = {len(sentence.stream(m)) for m in streams}
    if len(lengths) != 1:
        raise ValueError(f"sentence {sentence.id}: stream lengths differ")
    for m in streams:
        x = sentence.stream(m).frames
        if len(x) < 3:
            raise ValueError(f"sentence {sentence.id}: stream {Modality(m).value} has fewer than 3 frames")
        out.append(np.hstack([x, derivative(x)]))
    return out


@dataclass
class StreamGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray


@dataclass
class HmmUnit:
    """Read-only view of one unit: transitions and per-state per-stream GMMs."""

    name: str
    stay: np.ndarray  # (3,) self-loop probabilities
    states: list  # [state][stream] -> StreamGmm


def emission_logprob(state_gmms, frame_streams, weights) -> float:
    """``sum_s lambda_s * log sum_m c_m N(o_s; mu_m, Sigma_m)`` for one frame."""
    lam = weights.values if isinstance(weights, StreamWeights) else tuple(weights)
    total = 0.0
    for g, o, w in zip(state_gmms, frame_streams, lam):
        comp = np.log(g.weights) + log_gauss_diag(np.asarray(o, float)[None], g.means, g.variances)[0]
        total += w * float(logsumexp(comp))
    return total


@dataclass
class MsHmmModel:
    """Units share one parameter layout: pdf ``3 * u + j`` is state ``j`` of unit ``u``.

    Per stream ``s``: ``mix[s]`` (P, M) weights (0 marks a pruned slot),
    ``means[s]`` and ``variances[s]`` (P, M, d_s). ``stay`` holds (3U,)
    self-loop probabilities; moving on has probability ``1 - stay``.
    """

    alphabet: Alphabet
    streams: tuple
    units: list
    mix: list
    means: list
    variances: list
    stay: np.ndarray
    floors: list
    weights: StreamWeights
    mode: UnitMode = UnitMode.MONOPHONE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.streams = tuple(Modality(s) for s in self.streams)
        self._index = {u: i for i, u in enumerate(self.units)}
        if len(self.weights) != len(self.streams):
            raise ValueError("one stream weight per stream required")

    # -- structure ---------------------------------------------------------
    @property
    def n_units(self):
        return len(self.units)

    @property
    def dims(self):
        return [m.shape[2] for m in self.means]

    def unit_index(self, name):
        return self._index[name]

    def has_unit(self, name):
        return name in self._index

    def unit_arrays(self):
        """(center, left, right) symbol indices per unit, -1 for no context."""
        center, left, right = [], [], []
        for u in self.units:
            lft, c, r = parse_unit(u)
            center.append(self.alphabet.index(c))
            left.append(-1 if lft is None else self.alphabet.index(lft))
            right.append(-1 if r is None else self.alphabet.index(r))
        return np.array(center), np.array(left), np.array(right)

    def unit(self, name) -> HmmUnit:
        u = self._index[name]
        states = []
        for j in range(N_STATES):
            p = N_STATES * u + j
            per_stream = []
            for s in range(len(self.streams)):
                live = self.mix[s][p] > 0
                per_stream.append(StreamGmm(self.mix[s][p][live], self.means[s][p][live],
                                            self.variances[s][p][live]))
            states.append(per_stream)
        return HmmUnit(name, self.stay[N_STATES * u:N_STATES * u + N_STATES].copy(), states)

    def log_stay_adv(self):
        with np.errstate(divide="ignore"):
            return np.log(self.stay), np.log1p(-self.stay)

    def with_weights(self, weights: StreamWeights) -> "MsHmmModel":
        return MsHmmModel(self.alphabet, self.streams, list(self.units), self.mix, self.means,
                          self.variances, self.stay, self.floors, weights, self.mode, dict(self.meta))

    def copy(self) -> "MsHmmModel":
        return MsHmmModel(self.alphabet, self.streams, list(self.units),
                          [a.copy() for a in self.mix], [a.copy() for a in self.means],
                          [a.copy() for a in self.variances], self.stay.copy(),
                          [f.copy() for f in self.floors], self.weights, self.mode, dict(self.meta))

    # -- scoring -----------------------------------------------------------
    def stream_loglik(self, obs, pdfs=None) -> np.ndarray:
        """Per-stream mixture log-density, shape (n_streams, T, n_pdfs)."""
        out = []
        for s, X in enumerate(obs):
            mix, mu, var = self.mix[s], self.means[s], self.variances[s]
            if pdfs is not None:
                mix, mu, var = mix[pdfs], mu[pdfs], var[pdfs]
            P, M, d = mu.shape
            comp = log_gauss_diag(X, mu.reshape(P * M, d), var.reshape(P * M, d)).reshape(len(X), P, M)
            with np.errstate(divide="ignore"):
                comp = comp + np.log(mix)[None]
            out.append(logsumexp(comp, axis=2))
        return np.stack(out)

    def combine(self, stream_ll, weights: StreamWeights | None = None) -> np.ndarray:
        lam = (weights or self.weights).as_array()
        return np.tensordot(lam, stream_ll, axes=1)

    # -- persistence -------------------------------------------------------
    def to_json(self) -> dict:
        units = []
        for name in self.units:
            u = self.unit(name)
            units.append({
                "name": name,
                "stay": u.stay,
                "states": [[{"weights": g.weights, "means": g.means, "variances": g.variances}
                            for g in state] for state in u.states],
            })
        return {
            "kind": "mshmm",
            "version": MODEL_FORMAT_VERSION,
            "mode": self.mode.value,
            "alphabet": self.alphabet.to_json(),
            "streams": [s.value for s in self.streams],
            "dims": self.dims,
            "stream_weights": list(self.weights.values),
            "floors": self.floors,
            "units": units,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc) -> "MsHmmModel":
        alphabet = Alphabet.from_json(doc["alphabet"])
        streams = tuple(Modality(s) for s in doc["streams"])
        dims = doc["dims"]
        names = [u["name"] for u in doc["units"]]
        P = N_STATES * len(names)
        M = max(len(st[s]["weights"]) for u in doc["units"] for st in u["states"] for s in range(len(streams)))
        mix = [np.zeros((P, M)) for _ in streams]
        means = [np.zeros((P, M, d)) for d in dims]
        variances = [np.ones((P, M, d)) for d in dims]
        stay = np.zeros(P)
        for ui, u in enumerate(doc["units"]):
            stay[N_STATES * ui:N_STATES * ui + N_STATES] = u["stay"]
            for j, st in enumerate(u["states"]):
                p = N_STATES * ui + j
                for s, g in enumerate(st):
                    k = len(g["weights"])
                    mix[s][p, :k] = g["weights"]
                    means[s][p, :k] = g["means"]
                    variances[s][p, :k] = g["variances"]
        return cls(alphabet, streams, names, mix, means, variances, stay,
                   [np.array(f, float) for f in doc["floors"]], StreamWeights(tuple(doc["stream_weights"])),
                   UnitMode(doc["mode"]), dict(doc.get("meta", {})))

    def save(self, path):
        write_json(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "MsHmmModel":
        return cls.from_json(read_model_json(path, "mshmm"))
