"""Domain types shared by every module, plus text/JSON file formats.

Times are integer milliseconds from sentence start. Streams are sampled at a
fixed frame period; frame ``i`` covers ``[i * period, (i + 1) * period)``.
"""
from __future__ import annotations

import enum
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

DEFAULT_PERIOD_MS = 20
SILENCE = "sil"
MODEL_FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.path = path


class SegmentationError(ValueError):
    def __init__(self, message: str, index: int):
        super().__init__(f"interval {index}: {message}")
        self.index = index


class Modality(str, enum.Enum):
    LIPS = "L"
    HAND_POS = "P"
    HAND_SHAPE = "S"
    MERGED = "LPS"


STREAM_ORDER = (Modality.LIPS, Modality.HAND_POS, Modality.HAND_SHAPE)


class Tier(str, enum.Enum):
    AUDIO = "Audio"
    HAND_POS = "HandPosTier"
    HAND_SHAPE = "HandShapeTier"


class PhonemeKind(str, enum.Enum):
    VOWEL = "vowel"
    CONSONANT = "consonant"
    SILENCE = "silence"


@dataclass(frozen=True)
class Phoneme:
    symbol: str
    kind: PhonemeKind


class Alphabet:
    """Ordered phoneme table. Order defines unit indices and tie-breaks."""

    def __init__(self, phonemes: Iterable[Phoneme]):
        self.phonemes = tuple(phonemes)
        self._index = {}
        for i, p in enumerate(self.phonemes):
            if p.symbol in self._index:
                raise ValueError(f"duplicate phoneme symbol {p.symbol!r}")
            self._index[p.symbol] = i

    def __len__(self):
        return len(self.phonemes)

    def __iter__(self):
        return iter(self.phonemes)

    def __contains__(self, symbol):
        return symbol in self._index

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.phonemes == other.phonemes

    def __repr__(self):
        return f"Alphabet({[p.symbol for p in self.phonemes]})"

    @property
    def symbols(self) -> list[str]:
        return [p.symbol for p in self.phonemes]

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def kind(self, symbol: str) -> PhonemeKind:
        return self.phonemes[self._index[symbol]].kind

    def of_kind(self, kind: PhonemeKind) -> list[str]:
        return [p.symbol for p in self.phonemes if p.kind == kind]

    def to_json(self) -> list[dict]:
        return [{"symbol": p.symbol, "kind": p.kind.value} for p in self.phonemes]

    @classmethod
    def from_json(cls, rows: Sequence[Mapping]) -> "Alphabet":
        return cls(Phoneme(r["symbol"], PhonemeKind(r["kind"])) for r in rows)


def frame_index(t: int, period_ms: int = DEFAULT_PERIOD_MS) -> int:
    """Frame containing time ``t`` (ms)."""
    if t < 0:
        raise ValueError(f"negative time {t}")
    if period_ms <= 0:
        raise ValueError("frame period must be positive")
    return int(t) // int(period_ms)


@dataclass(frozen=True, eq=False)
class FrameStream:
    modality: Modality
    period_ms: int
    frames: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2 or frames.shape[0] == 0 or frames.shape[1] == 0:
            raise ValueError(f"stream needs a non-empty (n, d) array, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            bad = int(np.nonzero(~np.all(np.isfinite(frames), axis=1))[0][0])
            raise ValueError(f"non-finite value in frame {bad}")
        if self.period_ms <= 0:
            raise ValueError("frame period must be positive")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "modality", Modality(self.modality))

    def __len__(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, FrameStream)
            and self.modality == other.modality
            and self.period_ms == other.period_ms
            and np.array_equal(self.frames, other.frames)
        )

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_ms(self) -> int:
        return len(self) * self.period_ms

    def with_frames(self, frames) -> "FrameStream":
        return FrameStream(self.modality, self.period_ms, frames)


class Interval(NamedTuple):
    start: int
    end: int
    label: str

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class Segmentation:
    tier: Tier
    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        ivs = tuple(Interval(int(s), int(e), str(lab)) for s, e, lab in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "tier", Tier(self.tier))
        validate_intervals(ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def labels(self) -> list[str]:
        return [iv.label for iv in self.intervals]

    @property
    def end(self) -> int:
        return self.intervals[-1].end if self.intervals else 0

    def check_alphabet(self, alphabet: Alphabet) -> None:
        for i, iv in enumerate(self.intervals):
            if iv.label not in alphabet:
                raise SegmentationError(f"unknown label {iv.label!r}", i)


def validate_intervals(intervals: Sequence[Interval]) -> None:
    """Raise SegmentationError for the first interval breaking the invariants."""
    prev_end = None
    prev_start = None
    for i, (s, e, _) in enumerate(intervals):
        if s < 0:
            raise SegmentationError(f"negative start {s}", i)
        if e <= s:
            raise SegmentationError(f"end {e} <= start {s}", i)
        if prev_start is not None and s < prev_start:
            raise SegmentationError("intervals not sorted by start", i)
        if prev_end is not None and s < prev_end:
            raise SegmentationError(f"overlaps previous interval ending at {prev_end}", i)
        prev_start, prev_end = s, e


def speech_end(seg: Segmentation, alphabet: Alphabet | None = None) -> int:
    """End time of the last non-silence interval (the HPM's time origin)."""
    for iv in reversed(seg.intervals):
        if alphabet is not None and iv.label in alphabet:
            if alphabet.kind(iv.label) == PhonemeKind.SILENCE:
                continue
        elif iv.label == SILENCE:
            continue
        return iv.end
    return seg.end


def frame_labels(seg: Segmentation, n_frames: int, period_ms: int, fill: str | None = None) -> list:
    """Label of the interval containing each frame's start time (``fill`` in gaps)."""
    out = [fill] * n_frames
    for s, e, lab in seg.intervals:
        lo = -(-s // period_ms)
        hi = -(-e // period_ms)
        for i in range(lo, min(hi, n_frames)):
            out[i] = lab
    return out


@dataclass(frozen=True)
class SentenceTruth:
    hand_pos_seg: Segmentation
    hand_shape_seg: Segmentation
    delta_v: tuple[int, ...] = ()
    delta_c: tuple[int, ...] = ()


@dataclass(frozen=True)
class Sentence:
    id: str
    lips: FrameStream
    hand_pos: FrameStream
    hand_shape: FrameStream
    audio_seg: Segmentation
    truth: SentenceTruth | None = None
    group: str | None = None

    def __post_init__(self):
        periods = {self.lips.period_ms, self.hand_pos.period_ms, self.hand_shape.period_ms}
        if len(periods) != 1:
            raise ValueError(f"sentence {self.id}: streams disagree on frame period {sorted(periods)}")
        dur = max(len(self.lips), len(self.hand_pos), len(self.hand_shape)) * self.period_ms
        if self.audio_seg.end > dur:
            raise ValueError(
                f"sentence {self.id}: segmentation ends at {self.audio_seg.end} ms, "
                f"past stream duration {dur} ms"
            )

    @property
    def period_ms(self) -> int:
        return self.lips.period_ms

    @property
    def n_frames(self) -> int:
        return len(self.lips)

    @property
    def repetition_group(self) -> str:
        return self.group if self.group is not None else self.id

    def stream(self, modality: Modality) -> FrameStream:
        return {
            Modality.LIPS: self.lips,
            Modality.HAND_POS: self.hand_pos,
            Modality.HAND_SHAPE: self.hand_shape,
        }[Modality(modality)]

    def streams(self) -> tuple[FrameStream, FrameStream, FrameStream]:
        return self.lips, self.hand_pos, self.hand_shape

    def replace(self, **changes) -> "Sentence":
        return replace(self, **changes)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    alphabet: Alphabet
    period_ms: int = DEFAULT_PERIOD_MS
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        for s in self.sentences:
            if s.period_ms != self.period_ms:
                raise ValueError(f"sentence {s.id}: period {s.period_ms} != corpus period {self.period_ms}")
            s.audio_seg.check_alphabet(self.alphabet)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def subset(self, sentences: Iterable[Sentence]) -> "Corpus":
        return Corpus(tuple(sentences), self.alphabet, self.period_ms, dict(self.metadata))

    def map(self, fn) -> "Corpus":
        return self.subset(fn(s) for s in self.sentences)


# ---------------------------------------------------------------------------
# seeding


def derive_rng(seed: int, component: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(component, index)`` under a root seed."""
    tag = zlib.crc32(component.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, int(index)]))


# ---------------------------------------------------------------------------
# stream files


def _fmt(x: float) -> str:
    return repr(float(x))


def format_stream(stream: FrameStream) -> str:
    lines = [f"#stream modality={stream.modality.value} period_ms={stream.period_ms} dim={stream.dim}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in stream.frames)
    return "\n".join(lines) + "\n"


def save_stream(stream: FrameStream, path) -> None:
    Path(path).write_text(format_stream(stream), encoding="utf-8")


def parse_stream(text: str, path: str | None = None) -> FrameStream:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#stream"):
        raise FormatError("missing '#stream' header", 1, path)
    header = {}
    for tok in lines[0].split()[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"bad header token {tok!r}", 1, path)
        header[key] = val
    try:
        modality = Modality(header["modality"])
        period = int(header["period_ms"])
        dim = int(header["dim"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header: {exc}", 1, path) from None
    if period <= 0 or dim <= 0:
        raise FormatError("period_ms and dim must be positive", 1, path)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(" ")
        where = f"row {len(rows) + 1}"
        if len(cells) != dim:
            raise FormatError(f"{where}: expected {dim} values, got {len(cells)}", lineno, path)
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise FormatError(f"{where}: unparseable number in {line!r}", lineno, path) from None
        if not all(math.isfinite(v) for v in row):
            raise FormatError(f"{where}: non-finite value", lineno, path)
        rows.append(row)
    if not rows:
        raise FormatError("stream has no frames", len(lines), path)
    return FrameStream(modality, period, np.array(rows))


def load_stream(path) -> FrameStream:
    return parse_stream(Path(path).read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------------------
# segmentation files


def format_segmentation(seg: Segmentation) -> str:
    lines = [f"#tier {seg.tier.value}"]
    lines.extend(f"{s} {e} {lab}" for s, e, lab in seg.intervals)
    return "\n".join(lines) + "\n"


def save_segmentation(seg: Segmentation, path) -> None:
    Path(path).write_text(format_segmentation(seg), encoding="utf-8")


def parse_segmentation(text: str, alphabet: Alphabet | None = None, path: str | None = None,
                       default_tier: Tier = Tier.AUDIO) -> Segmentation:
    tier = default_tier
    intervals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#tier"):
            parts = line.split()
            try:
                tier = Tier(parts[1])
            except (IndexError, ValueError):
                raise FormatError(f"bad tier header {line!r}", lineno, path) from None
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"expected 'start end label', got {line!r}", lineno, path)
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"non-integer time in {line!r}", lineno, path) from None
        intervals.append(Interval(start, end, parts[2]))
    seg = Segmentation(tier, tuple(intervals))
    if alphabet is not None:
        seg.check_alphabet(alphabet)
    return seg


def load_segmentation(path, alphabet: Alphabet | None = None) -> Segmentation:
    return parse_segmentation(Path(path).read_text(encoding="utf-8"), alphabet, str(path))


# ---------------------------------------------------------------------------
# JSON helpers and corpus manifest


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def read_model_json(path, kind: str) -> dict:
    doc = read_json(path)
    if doc.get("kind") != kind:
        raise FormatError(f"expected a {kind} model, found {doc.get('kind')!r}", path=str(path))
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}", path=str(path))
    return doc


def save_corpus(corpus: Corpus, out_dir) -> Path:
    """Write streams, label files and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "streams").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in corpus.sentences:
        entry = {"id": s.id, "group": s.repetition_group}
        for key, stream in (("lips", s.lips), ("hand_pos", s.hand_pos), ("hand_shape", s.hand_shape)):
            rel = f"streams/{s.id}.{stream.modality.value}.txt"
            save_stream(stream, out / rel)
            entry[key] = rel
        rel = f"labels/{s.id}.audio.lab"
        save_segmentation(s.audio_seg, out / rel)
        entry["audio_seg"] = rel
        if s.truth is not None:
            truth = {"delta_v": list(s.truth.delta_v), "delta_c": list(s.truth.delta_c)}
            for key, seg in (("hand_pos_seg", s.truth.hand_pos_seg), ("hand_shape_seg", s.truth.hand_shape_seg)):
                rel = f"labels/{s.id}.{key}.lab"
                save_segmentation(seg, out / rel)
                truth[key] = rel
            entry["truth"] = truth
        entries.append(entry)
    manifest = {
        "version": MODEL_FORMAT_VERSION,
        "frame_period_ms": corpus.period_ms,
        "alphabet": corpus.alphabet.to_json(),
        "metadata": corpus.metadata,
        "sentences": entries,
    }
    path = out / "manifest.json"
    write_json(manifest, path)
    return path


def load_corpus(manifest_path) -> Corpus:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    doc = read_json(manifest_path)
    try:
        alphabet = Alphabet.from_json(doc["alphabet"])
        period = int(doc["frame_period_ms"])
        entries = doc["sentences"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad manifest: {exc}", path=str(manifest_path)) from None
    sentences = []
    for entry in entries:
        streams = {k: load_stream(root / entry[k]) for k in ("lips", "hand_pos", "hand_shape")}
        for key, mod in (("lips", Modality.LIPS), ("hand_pos", Modality.HAND_POS), ("hand_shape", Modality.HAND_SHAPE)):
            if streams[key].modality != mod:
                raise FormatError(f"{entry[key]} has modality {streams[key].modality.value}, expected {mod.value}",
                                  path=str(manifest_path))
        audio = load_segmentation(root / entry["audio_seg"], alphabet)
        truth = None
        if "truth" in entry:
            t = entry["truth"]
            truth = SentenceTruth(
                load_segmentation(root / t["hand_pos_seg"], alphabet),
                load_segmentation(root / t["hand_shape_seg"], alphabet),
                tuple(int(v) for v in t.get("delta_v", ())),
                tuple(int(v) for v in t.get("delta_c", ())),
            )
        sentences.append(Sentence(entry["id"], streams["lips"], streams["hand_pos"], streams["hand_shape"],
                                  audio, truth, entry.get("group")))
    return Corpus(tuple(sentences), alphabet, period, doc.get("metadata", {}))
