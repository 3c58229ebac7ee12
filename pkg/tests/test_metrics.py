import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cuesync.metrics import AlignmentResult, align, pooled, t_corr

RANK = {"match": 0, "sub": 1, "del": 2, "ins": 3}


def exhaustive(ref, hyp):
    """Best (cost, ops read from the end) over every alignment; ties resolve by op rank."""
    best = None

    def walk(i, j, cost, ops):
        nonlocal best
        if i == 0 and j == 0:
            key = (cost, tuple(RANK[o] for o in ops))
            if best is None or key < best[0]:
                best = (key, list(ops))
            return
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            walk(i - 1, j - 1, cost + (0 if same else 1), ops + ["match" if same else "sub"])
        if i > 0:
            walk(i - 1, j, cost + 1, ops + ["del"])
        if j > 0:
            walk(i, j - 1, cost + 1, ops + ["ins"])

    walk(len(ref), len(hyp), 0, [])
    ops = best[1]
    return len(ref), ops.count("del"), ops.count("sub"), ops.count("ins"), best[0][0]


def test_against_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        ref = list(rng.choice(list("abc"), size=rng.integers(1, 8)))
        hyp = list(rng.choice(list("abcd"), size=rng.integers(0, 8)))
        N, D, S, I, cost = exhaustive(ref, hyp)
        r = align(ref, hyp)
        assert (r.N, r.D, r.S, r.I) == (N, D, S, I)
        assert r.D + r.S + r.I == cost


def test_worked_example():
    res, corr = t_corr(list("abcd"), list("axd"))
    assert (res.N, res.H, res.S, res.D, res.I) == (4, 2, 1, 1, 0)
    assert corr == 0.5


def test_identity_is_perfect():
    res, corr = t_corr(list("abcab"), list("abcab"))
    assert corr == 1.0 and res.I == 0


def test_empty_hypothesis_scores_zero():
    res, corr = t_corr(list("abc"), [])
    assert corr == 0.0 and res.D == 3


def test_empty_reference_rejected():
    with pytest.raises(ValueError):
        t_corr([], list("ab"))


def test_insertions_do_not_lower_correctness():
    res, corr = t_corr(list("ab"), list("xaybz"))
    assert corr == 1.0 and res.I == 3
    assert res.accuracy == pytest.approx(-0.5)


def test_swap_tie_prefers_substitutions():
    # "ab" vs "ba": two substitutions and delete-plus-insert both cost 2
    res = align(list("ab"), list("ba"))
    assert res.D + res.S + res.I == 2
    assert (res.S, res.D, res.I) == (2, 0, 0)


@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
       st.lists(st.sampled_from("abcd"), max_size=8))
def test_relabelling_invariance(ref, hyp):
    perm = dict(zip("abcd", "dcab"))
    a = align(ref, hyp)
    b = align([perm[x] for x in ref], [perm[x] for x in hyp])
    assert (a.N, a.H, a.D, a.S, a.I) == (b.N, b.H, b.D, b.S, b.I)


@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=8),
       st.lists(st.sampled_from("abc"), max_size=8))
def test_counts_are_consistent(ref, hyp):
    r = align(ref, hyp)
    assert r.H + r.D + r.S == r.N
    assert r.H + r.S + r.I == len(hyp)
    assert 0.0 <= r.correctness <= 1.0


def test_pooled_sums_counts():
    total = pooled([align(list("ab"), list("a")), align(list("abc"), list("abc"))])
    assert total == AlignmentResult(5, 4, 1, 0, 0)
    assert total.correctness == pytest.approx(0.8)
