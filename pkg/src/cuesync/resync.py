"""Delay the hand streams by their hand-preceding times, then fuse."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Corpus, FrameStream, Modality, Sentence


class EdgePolicy(str, enum.Enum):
    REPLICATE = "replicate"
    ZEROS = "zeros"


@dataclass(frozen=True)
class ResyncConfig:
    delta_v_star: float = 140.0
    delta_c_star: float = 60.0
    edge_policy: EdgePolicy = EdgePolicy.REPLICATE

    def __post_init__(self):
        if self.delta_v_star < 0 or self.delta_c_star < 0:
            raise ValueError("lags must be non-negative")
        object.__setattr__(self, "edge_policy", EdgePolicy(self.edge_policy))


def lag_frames(lag_ms: float, period_ms: int) -> int:
    # nearest frame, halves rounded up so 10 ms at 20 ms/frame is one frame
    return int(np.floor(lag_ms / period_ms + 0.5))


def shift_stream(stream: FrameStream, lag_ms: float,
                 edge_policy: EdgePolicy = EdgePolicy.REPLICATE) -> FrameStream:
    """``out[i] = in[i - n]`` with ``n = round(lag / period)``; length preserved."""
    if lag_ms < 0:
        raise ValueError("lag must be non-negative")
    n = lag_frames(lag_ms, stream.period_ms)
    if n == 0:
        return stream
    if n >= len(stream):
        raise ValueError(f"lag of {n} frames is not shorter than the stream ({len(stream)} frames)")
    x = stream.frames
    if EdgePolicy(edge_policy) == EdgePolicy.REPLICATE:
        pad = np.repeat(x[:1], n, axis=0)
    else:
        pad = np.zeros((n, x.shape[1]))
    return stream.with_frames(np.concatenate([pad, x[:-n]], axis=0))


def resync_sentence(sentence: Sentence, cfg: ResyncConfig) -> Sentence:
    """Delay hand position by ``delta_v_star`` and hand shape by ``delta_c_star``."""
    return sentence.replace(
        hand_pos=shift_stream(sentence.hand_pos, cfg.delta_v_star, cfg.edge_policy),
        hand_shape=shift_stream(sentence.hand_shape, cfg.delta_c_star, cfg.edge_policy),
    )


def resync_corpus(corpus: Corpus, cfg: ResyncConfig) -> Corpus:
    out = corpus.map(lambda s: resync_sentence(s, cfg))
    out.metadata["resync"] = {
        "delta_v_star": cfg.delta_v_star,
        "delta_c_star": cfg.delta_c_star,
        "edge_policy": cfg.edge_policy.value,
    }
    return out


def merge_streams(sentence: Sentence) -> FrameStream:
    """Frame-wise concatenation in the order lips, hand position, hand shape."""
    streams = sentence.streams()
    lengths = {len(s) for s in streams}
    if len(lengths) != 1:
        raise ValueError(f"sentence {sentence.id}: stream lengths differ {[len(s) for s in streams]}")
    return FrameStream(Modality.MERGED, sentence.period_ms, np.hstack([s.frames for s in streams]))
