"""The corpus manifest: a single versioned JSON document describing audios,
their segments and subset membership."""
from __future__ import annotations

import bisect
import hashlib
import json
import random
import re
import wave
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .errors import InsufficientDataError, InvariantError, ParseError, SchemaError
from .textnorm import SPECIAL_WORDS

SOURCES = ("audiobook", "podcast", "youtube")
CATEGORIES = (
    "Arts", "Business", "Education", "Autos and Vehicles", "Comedy", "Crime",
    "Entertainment", "Film and Animation", "Gaming", "Health and Fitness",
    "History", "Howto and Style", "Kids and Family", "Leisure", "Music",
    "News and Politics", "Nonprofits and Activism", "People and Blogs",
    "Pets and Animals", "Religion and Spirituality", "Science and Technology",
    "Society and Culture", "Sports", "Travel and Events", "N/A",
)
TRAIN_SUBSETS = ("XS", "S", "M", "L", "XL")
EVAL_SUBSETS = ("DEV", "TEST")
MAX_SEGMENT_S = 20.0

# Target hours per subset and source.
SUBSET_SOURCE_HOURS = {
    "XL": {"audiobook": 2655.0, "podcast": 3499.0, "youtube": 3846.0},
    "L": {"audiobook": 650.0, "podcast": 875.0, "youtube": 975.0},
    "M": {"audiobook": 260.0, "podcast": 350.0, "youtube": 390.0},
    "S": {"audiobook": 65.0, "podcast": 87.5, "youtube": 97.5},
    "XS": {"audiobook": 2.6, "podcast": 3.5, "youtube": 3.9},
}

_VERSION_RE = re.compile(r"[0-9A-Za-z_-]+(\.[0-9A-Za-z_-]+)+")
_MD5_RE = re.compile(r"[0-9a-f]{32}")
_TN_TOKEN_RE = re.compile(r"[A-Z][A-Z']*")
_TIME_DECIMALS = 3


@dataclass(frozen=True)
class WordTime:
    word: str
    begin: float
    end: float


@dataclass(frozen=True)
class SegmentRecord:
    sid: str
    begin_time: float
    end_time: float
    text_tn: str
    text_raw: str
    wer_estimate: float
    subsets: frozenset = frozenset()
    # optional word-level timing, used for frame-level evaluation
    words: tuple[WordTime, ...] | None = None

    @property
    def duration(self) -> float:
        return self.end_time - self.begin_time


@dataclass(frozen=True)
class AudioDoc:
    aid: str
    url: str
    path: str
    format: str
    md5: str
    source: str
    category: str
    duration_s: float
    subsets: frozenset = frozenset()
    segments: tuple[SegmentRecord, ...] = ()


@dataclass(frozen=True)
class Manifest:
    dataset_name: str
    version: str
    audios: tuple[AudioDoc, ...] = ()

    @property
    def segments(self):
        for a in self.audios:
            yield from a.segments

    def hours(self, subset: str | None = None) -> float:
        return sum(s.duration for s in self.segments
                   if subset is None or subset in s.subsets) / 3600.0


# ---------------------------------------------------------------------------
# validation

def check_text_tn(text: str) -> bool:
    toks = text.split()
    return bool(toks) and all(t in SPECIAL_WORDS or _TN_TOKEN_RE.fullmatch(t) for t in toks)


def validate_manifest(m: Manifest) -> None:
    """Raise InvariantError on the first violated manifest invariant."""
    if not m.version or not _VERSION_RE.fullmatch(m.version):
        raise InvariantError(f"bad version {m.version!r}")
    seen = set()
    for a in m.audios:
        if a.aid in seen:
            raise InvariantError(f"duplicate aid {a.aid}")
        seen.add(a.aid)
        if a.duration_s < 0:
            raise InvariantError(f"{a.aid}: negative duration")
        sids = set()
        prev_end = None
        for s in a.segments:
            if s.sid in sids:
                raise InvariantError(f"{a.aid}: duplicate sid {s.sid}")
            sids.add(s.sid)
            if not s.end_time > s.begin_time:
                raise InvariantError(f"{s.sid}: end_time <= begin_time")
            if s.end_time - s.begin_time >= MAX_SEGMENT_S:
                raise InvariantError(f"{s.sid}: segment length >= {MAX_SEGMENT_S}s")
            if s.begin_time < 0 or s.end_time > a.duration_s:
                raise InvariantError(f"{s.sid}: outside [0, {a.duration_s}]")
            if prev_end is not None and s.begin_time < prev_end:
                raise InvariantError(f"{s.sid}: overlapping or unsorted segments")
            prev_end = s.end_time
            if not check_text_tn(s.text_tn):
                raise InvariantError(f"{s.sid}: text_tn outside the token alphabet")


def _require(d: dict, key: str, types, where: str):
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected object")
    if key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, types):
        raise SchemaError(f"{where}.{key}: bad type {type(v).__name__}")
    return v


def _subsets(d, where):
    v = _require(d, "subsets", list, where)
    if not all(isinstance(x, str) for x in v):
        raise SchemaError(f"{where}.subsets: expected strings")
    return frozenset(v)


def _segment_from_json(d: dict, where: str) -> SegmentRecord:
    sid = _require(d, "sid", str, where)
    words = None
    if d.get("words") is not None:
        words = []
        for w in _require(d, "words", list, where):
            if (not isinstance(w, list) or len(w) != 3 or not isinstance(w[0], str)
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                               for x in w[1:])):
                raise SchemaError(f"{where}.words: expected [word, begin, end]")
            words.append(WordTime(w[0], float(w[1]), float(w[2])))
        words = tuple(words)
    return SegmentRecord(
        sid=sid,
        begin_time=float(_require(d, "begin_time", (int, float), where)),
        end_time=float(_require(d, "end_time", (int, float), where)),
        text_tn=_require(d, "text_tn", str, where),
        text_raw=_require(d, "text_raw", str, where),
        wer_estimate=float(_require(d, "wer_estimate", (int, float), where)),
        subsets=_subsets(d, where),
        words=words,
    )


def _audio_from_json(d: dict, where: str) -> AudioDoc:
    aid = _require(d, "aid", str, where)
    where = f"audio[{aid}]"
    source = _require(d, "source", str, where)
    if source not in SOURCES:
        raise SchemaError(f"{where}.source: {source!r} not in {SOURCES}")
    category = _require(d, "category", str, where)
    if category not in CATEGORIES:
        raise SchemaError(f"{where}.category: unknown category {category!r}")
    md5 = _require(d, "md5", str, where)
    if not _MD5_RE.fullmatch(md5):
        raise SchemaError(f"{where}.md5: not a hex digest")
    segs = _require(d, "segments", list, where)
    return AudioDoc(
        aid=aid,
        url=_require(d, "url", str, where),
        path=_require(d, "path", str, where),
        format=_require(d, "format", str, where),
        md5=md5,
        source=source,
        category=category,
        duration_s=float(_require(d, "duration", (int, float), where)),
        subsets=_subsets(d, where),
        segments=tuple(_segment_from_json(s, f"{where}.segments[{i}]")
                       for i, s in enumerate(segs)),
    )


def manifest_from_dict(d: dict) -> Manifest:
    m = Manifest(
        dataset_name=_require(d, "dataset", str, "manifest"),
        version=_require(d, "version", str, "manifest"),
        audios=tuple(_audio_from_json(a, f"audios[{i}]")
                     for i, a in enumerate(_require(d, "audios", list, "manifest"))),
    )
    validate_manifest(m)
    return m


def load_manifest(data) -> Manifest:
    """Parse and fully validate a manifest from JSON bytes or text."""
    try:
        d = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(str(e)) from e
    if not isinstance(d, dict):
        raise SchemaError("manifest: expected a JSON object")
    return manifest_from_dict(d)


def _t(x: float) -> float:
    return round(x, _TIME_DECIMALS)


def _segment_to_json(s: SegmentRecord) -> dict:
    d = {
        "sid": s.sid,
        "begin_time": _t(s.begin_time),
        "end_time": _t(s.end_time),
        "text_tn": s.text_tn,
        "text_raw": s.text_raw,
        "wer_estimate": round(s.wer_estimate, _TIME_DECIMALS),
        "subsets": sorted(s.subsets),
    }
    if s.words is not None:
        d["words"] = [[w.word, _t(w.begin), _t(w.end)] for w in s.words]
    return d


def manifest_to_dict(m: Manifest) -> dict:
    return {
        "dataset": m.dataset_name,
        "version": m.version,
        "audios": [
            {
                "aid": a.aid,
                "url": a.url,
                "path": a.path,
                "format": a.format,
                "md5": a.md5,
                "source": a.source,
                "category": a.category,
                "duration": _t(a.duration_s),
                "subsets": sorted(a.subsets),
                "segments": [_segment_to_json(s) for s in a.segments],
            }
            for a in m.audios
        ],
    }


def save_manifest(m: Manifest) -> bytes:
    """Deterministic serialization: sorted keys, times rounded to ms."""
    return (json.dumps(manifest_to_dict(m), sort_keys=True, indent=1,
                       ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# subset partitioning

def _split_ratios(ratios, subset):
    first = next(iter(ratios.values()))
    if isinstance(first, Mapping):
        return ratios[subset]
    return ratios


def _refine_fit(items, taken, fresh, total, target_s, hi, subset) -> float:
    """One best add-or-swap move toward ``target_s``; updates ``taken`` and
    ``fresh`` in place and returns the new total."""
    by_dur = sorted((items[i][2], i) for i in fresh)
    durs = [d for d, _ in by_dur]
    best_gap, move = abs(target_s - total), None
    for r, (_, _, dur, el) in enumerate(items):
        if taken[r] or (el and subset not in el):
            continue
        if total + dur <= hi and abs(total + dur - target_s) < best_gap:
            best_gap, move = abs(total + dur - target_s), (r, None)
        want = total + dur - target_s  # duration to drop for a perfect swap
        k = bisect.bisect_left(durs, want)
        for j in (k - 1, k):
            if 0 <= j < len(durs):
                t = total + dur - durs[j]
                if t <= hi and abs(t - target_s) < best_gap:
                    best_gap, move = abs(t - target_s), (r, j)
    if move is None:
        return total
    r, j = move
    taken[r] = True
    fresh.append(r)
    total += items[r][2]
    if j is not None:
        out = by_dur[j][1]
        taken[out] = False
        fresh.remove(out)
        total -= items[out][2]
    return total


def partition_subsets(m: Manifest, targets: Mapping[str, float],
                      ratios: Mapping, seed: int, tolerance: float = 0.02) -> Manifest:
    """Assign nested training-subset tags to segments.

    ``targets`` maps subset name to hours; ``ratios`` maps source to
    fraction, or subset to such a map.  Smaller subsets are prefixes of
    larger ones.  A segment that already carries training-subset tags is
    only eligible for those subsets; segments tagged DEV or TEST are left
    alone.
    """
    order = sorted(targets, key=lambda s: (targets[s], s))
    for s in order:
        r = _split_ratios(ratios, s)
        if abs(sum(r.values()) - 1.0) > 1e-6:
            raise ValueError(f"ratios for {s} do not sum to 1")

    train_tags = set(targets) | set(TRAIN_SUBSETS)
    pool: dict[str, list[tuple[str, str, float, frozenset]]] = {src: [] for src in SOURCES}
    for a in sorted(m.audios, key=lambda a: a.aid):
        for s in a.segments:
            if s.subsets & set(EVAL_SUBSETS):
                continue
            eligible = s.subsets & train_tags
            pool[a.source].append((a.aid, s.sid, s.duration, frozenset(eligible)))

    rng = random.Random(seed)
    membership: dict[tuple[str, str], set[str]] = {}
    for src in SOURCES:
        items = pool[src]
        rng.shuffle(items)
        chosen: list[int] = []
        taken = [False] * len(items)
        total = 0.0
        for subset in order:
            target_s = targets[subset] * _split_ratios(ratios, subset).get(src, 0.0) * 3600.0
            lo, hi = target_s * (1 - tolerance), target_s * (1 + tolerance)
            available = sum(d for i, (_, _, d, el) in enumerate(items)
                            if not taken[i] and (not el or subset in el)) + total
            if available < lo:
                raise InsufficientDataError(
                    f"{subset}/{src}: {available / 3600:.3f}h available, "
                    f"{target_s / 3600:.3f}h requested")
            # fill up to the target in shuffled order, then improve the fit by
            # adding one more segment or swapping one picked in this round
            fresh = []
            for i, (_, _, dur, el) in enumerate(items):
                if taken[i] or (el and subset not in el):
                    continue
                if total + dur <= target_s:
                    taken[i] = True
                    fresh.append(i)
                    total += dur
            total = _refine_fit(items, taken, fresh, total, target_s, hi, subset)
            chosen.extend(fresh)
            if total < lo:
                raise InsufficientDataError(
                    f"{subset}/{src}: no segment combination within "
                    f"{tolerance:.0%} of {target_s / 3600:.4f}h")
            for i in chosen:
                membership.setdefault(items[i][:2], set()).add(subset)

    audios = []
    for a in m.audios:
        segs = []
        for s in a.segments:
            if s.subsets & set(EVAL_SUBSETS):
                segs.append(s)
                continue
            keep = s.subsets - train_tags
            segs.append(replace(s, subsets=frozenset(keep | membership.get((a.aid, s.sid), set()))))
        tags = frozenset().union(*(s.subsets for s in segs)) if segs else a.subsets - train_tags
        audios.append(replace(a, segments=tuple(segs), subsets=frozenset(tags)))
    return replace(m, audios=tuple(audios))


def subset_source_hours(m: Manifest, subset: str) -> dict[str, float]:
    out = {src: 0.0 for src in SOURCES}
    for a in m.audios:
        for s in a.segments:
            if subset in s.subsets:
                out[a.source] += s.duration / 3600.0
    return out


# ---------------------------------------------------------------------------
# verification

OK = "OK"
MISSING = "MISSING"
MD5_MISMATCH = "MD5_MISMATCH"
DURATION_MISMATCH = "DURATION_MISMATCH"
DURATION_UNKNOWN = "DURATION_UNKNOWN"
SEGMENT_OUT_OF_BOUNDS = "SEGMENT_OUT_OF_BOUNDS"


@dataclass
class AudioStatus:
    aid: str
    status: str
    md5_ok: bool | None = None
    duration_s: float | None = None
    problems: list[str] = field(default_factory=list)


@dataclass
class VerificationReport:
    entries: list[AudioStatus]

    @property
    def ok(self) -> bool:
        return all(e.status == OK for e in self.entries)

    def to_json(self) -> dict:
        return {"ok": self.ok, "audios": [vars(e) for e in self.entries]}


def file_md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def audio_duration(path: Path) -> float | None:
    """Duration in seconds for WAV files; None for formats we cannot read."""
    try:
        with wave.open(str(path), "rb") as w:
            return w.getnframes() / float(w.getframerate())
    except (wave.Error, EOFError):
        return None


def _verify_one(a: AudioDoc, root: Path, duration_tol: float) -> AudioStatus:
    st = AudioStatus(a.aid, OK)
    for s in a.segments:
        if s.begin_time < 0 or s.end_time > a.duration_s:
            st.problems.append(f"{SEGMENT_OUT_OF_BOUNDS}:{s.sid}")
    path = root / a.path
    if not path.is_file():
        st.status = MISSING
        return st
    st.md5_ok = file_md5(path) == a.md5
    st.duration_s = audio_duration(path)
    if not st.md5_ok:
        st.status = MD5_MISMATCH
    elif st.duration_s is None:
        st.status = DURATION_UNKNOWN
    elif abs(st.duration_s - a.duration_s) > duration_tol:
        st.status = DURATION_MISMATCH
    elif st.problems:
        st.status = SEGMENT_OUT_OF_BOUNDS
    return st


def verify_manifest(m: Manifest, file_root, duration_tol: float = 0.05,
                    jobs: int = 4) -> VerificationReport:
    root = Path(file_root)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        entries = list(ex.map(lambda a: _verify_one(a, root, duration_tol), m.audios))
    return VerificationReport(entries)
