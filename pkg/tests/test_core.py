import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuesync.core import (
    Alphabet,
    FormatError,
    FrameStream,
    Interval,
    Modality,
    Segmentation,
    SegmentationError,
    Tier,
    derive_rng,
    format_segmentation,
    format_stream,
    frame_index,
    frame_labels,
    load_corpus,
    load_segmentation,
    load_stream,
    parse_segmentation,
    parse_stream,
    save_corpus,
    save_stream,
    speech_end,
)


def test_frame_index_examples():
    assert frame_index(140, 20) == 7
    assert frame_index(0, 20) == 0
    assert frame_index(59, 20) == 2
    with pytest.raises(ValueError):
        frame_index(-1, 20)


def test_load_stream_three_rows(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("#stream modality=P period_ms=20 dim=2\n0.0 1.0\n2.5 -3.0\n4.0 5.0\n")
    s = load_stream(p)
    assert s.modality == Modality.HAND_POS and s.period_ms == 20 and s.dim == 2 and len(s) == 3
    np.testing.assert_array_equal(s.frames, [[0, 1], [2.5, -3], [4, 5]])


def test_stream_file_round_trip_is_byte_exact(tmp_path):
    p = tmp_path / "s.txt"
    text = "#stream modality=L period_ms=20 dim=3\n0.1 -2.0 3.3333333333333335\n1e-300 5.0 7.25\n"
    p.write_text(text)
    q = tmp_path / "t.txt"
    save_stream(load_stream(p), q)
    assert q.read_bytes() == p.read_bytes()


def test_nan_cell_names_row_two():
    with pytest.raises(FormatError) as err:
        parse_stream("#stream modality=L period_ms=20 dim=2\n1.0 2.0\n1.0 NaN\n")
    assert "row 2" in str(err.value)
    assert err.value.line == 3


@pytest.mark.parametrize("text,line", [
    ("modality=L period_ms=20 dim=2\n1 2\n", 1),
    ("#stream modality=Q period_ms=20 dim=2\n1 2\n", 1),
    ("#stream modality=L period_ms=0 dim=2\n1 2\n", 1),
    ("#stream modality=L period_ms=20 dim=2\n1 2\n1 2 3\n", 3),
    ("#stream modality=L period_ms=20 dim=2\n1 x\n", 2),
    ("#stream modality=L period_ms=20 dim=2\ninf 1\n", 2),
    ("#stream modality=L period_ms=20 dim=2\n", 1),
])
def test_malformed_stream_reports_line(text, line):
    with pytest.raises(FormatError) as err:
        parse_stream(text)
    assert err.value.line == line


def test_frame_stream_invariants():
    with pytest.raises(ValueError):
        FrameStream(Modality.LIPS, 20, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        FrameStream(Modality.LIPS, 20, np.array([[1.0, np.inf]]))
    s = FrameStream(Modality.LIPS, 20, np.ones((2, 2)))
    with pytest.raises(ValueError):
        s.frames[0, 0] = 3.0


@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_stream_load_of_save_is_identity(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d)) * 10.0 ** np.random.default_rng(seed).integers(-5, 5)
    s = FrameStream(Modality.HAND_SHAPE, 40, x)
    back = parse_stream(format_stream(s))
    assert back == s
    np.testing.assert_array_equal(back.frames, x)


def test_segmentation_example(toy_alphabet):
    seg = parse_segmentation("0 180 sil\n180 320 p\n320 520 a\n", toy_alphabet)
    assert seg.intervals == (Interval(0, 180, "sil"), Interval(180, 320, "p"), Interval(320, 520, "a"))
    assert seg.tier == Tier.AUDIO


def test_segmentation_overlap_error_at_index_one():
    with pytest.raises(SegmentationError) as err:
        parse_segmentation("0 200 a\n180 320 p\n")
    assert err.value.index == 1


def test_segmentation_unknown_label(toy_alphabet):
    with pytest.raises(SegmentationError) as err:
        parse_segmentation("0 100 a\n100 200 zz\n", toy_alphabet)
    assert err.value.index == 1


def test_empty_segmentation_file(tmp_path):
    p = tmp_path / "e.lab"
    p.write_text("")
    seg = load_segmentation(p)
    assert len(seg) == 0


def test_segmentation_round_trip(tmp_path):
    seg = Segmentation(Tier.HAND_SHAPE, ((0, 60, "p"), (100, 160, "t")))
    p = tmp_path / "x.lab"
    p.write_text(format_segmentation(seg))
    assert load_segmentation(p) == seg
    assert format_segmentation(load_segmentation(p)) == p.read_text()


def _first_violation(ivs):
    prev_start = prev_end = None
    for i, (s, e) in enumerate(ivs):
        if s < 0 or e <= s or (prev_start is not None and (s < prev_start or s < prev_end)):
            return i
        prev_start, prev_end = s, e
    return None


@given(st.lists(st.tuples(st.integers(-5, 60), st.integers(-5, 60)), max_size=8))
@settings(max_examples=300, deadline=None)
def test_validation_rejects_exactly_invalid_sets(pairs):
    bad = _first_violation(pairs)
    ivs = tuple((s, e, "a") for s, e in pairs)
    if bad is None:
        assert len(Segmentation(Tier.AUDIO, ivs)) == len(pairs)
    else:
        with pytest.raises(SegmentationError) as err:
            Segmentation(Tier.AUDIO, ivs)
        assert err.value.index == bad


def test_frame_labels_use_frame_start_times():
    seg = Segmentation(Tier.AUDIO, ((0, 30, "a"), (50, 100, "b")))
    assert frame_labels(seg, 6, 20, fill="-") == ["a", "a", "-", "b", "b", "-"]


def test_speech_end_skips_trailing_silence(toy_alphabet):
    seg = Segmentation(Tier.AUDIO, ((0, 100, "sil"), (100, 200, "p"), (200, 350, "a"), (350, 600, "sil")))
    assert speech_end(seg, toy_alphabet) == 350


def test_alphabet_json_round_trip(toy_alphabet):
    assert Alphabet.from_json(toy_alphabet.to_json()) == toy_alphabet


def test_derive_rng_is_deterministic_and_separates_components():
    a = derive_rng(5, "split", 2).random(4)
    np.testing.assert_array_equal(a, derive_rng(5, "split", 2).random(4))
    assert not np.array_equal(a, derive_rng(5, "split", 3).random(4))
    assert not np.array_equal(a, derive_rng(5, "other", 2).random(4))


def test_corpus_round_trip(tmp_path, small_corpus):
    path = save_corpus(small_corpus, tmp_path / "c")
    back = load_corpus(path)
    assert back.alphabet == small_corpus.alphabet
    assert back.metadata == small_corpus.metadata
    for a, b in zip(small_corpus, back):
        assert a == b
    path2 = save_corpus(back, tmp_path / "d")
    for f in (tmp_path / "c").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "d" / f.relative_to(tmp_path / "c")).read_bytes()
    assert path2.name == "manifest.json"
