"""Multi-stream HMM-GMM phonetic decoder."""
from .decode import DecodeResult, evaluate, optimize_weights, simplex_grid, viterbi_decode
from .model import (
    N_STATES,
    HmmUnit,
    MsHmmModel,
    StreamGmm,
    StreamWeights,
    UnitMode,
    assemble_observations,
    emission_logprob,
    paper_weights,
)
from .train import TrainSchedule, expand_triphones, init_model, train_embedded, train_mshmm

__all__ = [
    "N_STATES", "DecodeResult", "HmmUnit", "MsHmmModel", "StreamGmm", "StreamWeights", "TrainSchedule",
    "UnitMode", "assemble_observations", "emission_logprob", "evaluate", "expand_triphones", "init_model",
    "optimize_weights", "paper_weights", "simplex_grid", "train_embedded", "train_mshmm", "viterbi_decode",
]
