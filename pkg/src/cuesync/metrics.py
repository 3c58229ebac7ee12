"""Edit-distance alignment and recognition correctness."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


@dataclass(frozen=True)
class AlignmentResult:
    N: int
    H: int
    D: int
    S: int
    I: int
    pairs: tuple = field(default=(), repr=False)

    @property
    def correctness(self) -> float:
        return (self.N - self.D - self.S) / self.N

    @property
    def accuracy(self) -> float:
        """Correctness also penalising insertions."""
        return (self.N - self.D - self.S - self.I) / self.N


def align(ref: Sequence, hyp: Sequence) -> AlignmentResult:
    """Unit-cost Levenshtein alignment.

    Among optimal alignments the traceback prefers match, then substitution,
    then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        ri = ref[i - 1]
        for j in range(1, m + 1):
            diag = cost[i - 1, j - 1] + (0 if ri == hyp[j - 1] else 1)
            cost[i, j] = min(diag, cost[i - 1, j] + 1, cost[i, j - 1] + 1)
    i, j = n, m
    pairs = []
    H = D = S = I = 0
    while i > 0 or j > 0:
        c = cost[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and c == cost[i - 1, j - 1]:
            pairs.append((MATCH, ref[i - 1], hyp[j - 1]))
            H += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and c == cost[i - 1, j - 1] + 1:
            pairs.append((SUB, ref[i - 1], hyp[j - 1]))
            S += 1
            i, j = i - 1, j - 1
        elif i > 0 and c == cost[i - 1, j] + 1:
            pairs.append((DEL, ref[i - 1], None))
            D += 1
            i -= 1
        else:
            pairs.append((INS, None, hyp[j - 1]))
            I += 1
            j -= 1
    return AlignmentResult(n, H, D, S, I, tuple(reversed(pairs)))


def t_corr(ref: Sequence, hyp: Sequence) -> tuple[AlignmentResult, float]:
    """``(N - D - S) / N`` from an optimal alignment; insertions are counted, not charged."""
    if len(ref) == 0:
        raise ValueError("reference must be non-empty")
    res = align(ref, hyp)
    return res, res.correctness


def pooled(results: Sequence[AlignmentResult]) -> AlignmentResult:
    """Sum counts over sentences (corpus-level correctness)."""
    return AlignmentResult(
        sum(r.N for r in results), sum(r.H for r in results), sum(r.D for r in results),
        sum(r.S for r in results), sum(r.I for r in results),
    )
