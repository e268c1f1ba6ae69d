"""Deterministic synthetic corpora with a known answer key, and a synthetic
acoustic scorer that stands in for a trained acoustic model."""
from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from .align_graph import UNK_WORD
from .chunk_match import TimedHypothesis, TimedWord
from .metadata import CATEGORIES, SOURCES, AudioDoc, Manifest, SegmentRecord, WordTime

FRAME_RATE = 100
# spoken fillers the transcriber may leave out (conjunctions are ordinary words here)
SPOKEN_FILLERS = ("AH", "UH", "UM", "ER", "ERR", "YOU KNOW", "I MEAN", "SORT OF")
SOURCE_WEIGHTS = (0.2655, 0.3499, 0.3846)

_ONSETS = "BDFGKLMNPRSTVZ"
_VOWELS = "AEIOU"
_RESERVED = {"JAN", "FEB", "MAR", "APR", "MAY", "JUN", "JUL", "AUG", "SEP", "SEPT",
             "OCT", "NOV", "DEC", "JUNE", "JULY", "MARCH", "APRIL"}


@dataclass(frozen=True)
class ErrorRates:
    deletion: float = 0.0  # spoken word missing from the transcript
    typo: float = 0.0  # transcript has a different word
    filler_drop: float = 0.0  # spoken filler missing from the transcript
    disfluency_drop: float = 0.0  # spoken repetition collapsed in the transcript

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"error rate {k} must lie in [0, 1]")
        if self.deletion + self.typo > 1.0:
            raise ValueError("deletion + typo must not exceed 1")


@dataclass(frozen=True)
class PauseModel:
    inter_word_mean_s: float = 0.06
    sentence_pause_mean_s: float = 0.4
    comma_pause_s: float = 0.15
    edge_silence_s: float = 0.5


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_docs: int = 10
    words_per_doc: int = 200
    vocab_size: int = 500
    error_rates: ErrorRates = ErrorRates()
    pause_model: PauseModel = PauseModel()
    filler_rate: float = 0.0  # chance of a spoken filler before a word
    repetition_rate: float = 0.0  # chance a word is spoken twice
    sentence_words: tuple[int, int] = (4, 14)
    comma_rate: float = 0.1

    def __post_init__(self):
        if self.n_docs <= 0 or self.words_per_doc <= 0 or self.vocab_size <= 1:
            raise ValueError("n_docs and words_per_doc must be positive, vocab_size > 1")
        for name in ("filler_rate", "repetition_rate", "comma_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.sentence_words
        if not 1 <= lo <= hi:
            raise ValueError("sentence_words must be (lo, hi) with 1 <= lo <= hi")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "error_rates" in d:
            d["error_rates"] = ErrorRates(**d["error_rates"])
        if "pause_model" in d:
            d["pause_model"] = PauseModel(**d["pause_model"])
        if "sentence_words" in d:
            d["sentence_words"] = tuple(d["sentence_words"])
        return cls(**d)


@dataclass(frozen=True)
class Injection:
    kind: str  # deletion | typo | filler_drop | disfluency_drop
    begin_s: float  # spoken span of the affected audio
    end_s: float
    spoken: tuple[str, ...]
    written: str | None = None  # replacement word for typos

    def to_json(self) -> dict:
        return {"kind": self.kind, "begin": self.begin_s, "end": self.end_s,
                "spoken": list(self.spoken), "written": self.written}

    @classmethod
    def from_json(cls, d: dict) -> "Injection":
        return cls(d["kind"], float(d["begin"]), float(d["end"]), tuple(d["spoken"]),
                   d["written"])


@dataclass(frozen=True)
class GoldSegment:
    begin_s: float
    end_s: float
    words: tuple[tuple[str, float, float], ...]
    text: str  # human transcription (normalized words and punctuation)

    def to_json(self) -> dict:
        return {"begin": self.begin_s, "end": self.end_s,
                "words": [list(w) for w in self.words], "text": self.text}

    @classmethod
    def from_json(cls, d: dict) -> "GoldSegment":
        return cls(float(d["begin"]), float(d["end"]),
                   tuple((w[0], float(w[1]), float(w[2])) for w in d["words"]), d["text"])


@dataclass
class SynthDoc:
    aid: str
    source: str
    category: str
    duration_s: float
    true_spoken: tuple[TimedWord, ...]
    transcript_raw: str
    answer_key: tuple[Injection, ...]
    human_segments: tuple[GoldSegment, ...]

    @property
    def hypothesis(self) -> TimedHypothesis:
        """First-pass recognizer output; the synthetic recognizer is exact."""
        return TimedHypothesis(self.true_spoken, self.duration_s)

    def to_json(self) -> dict:
        return {
            "aid": self.aid, "source": self.source, "category": self.category,
            "duration": self.duration_s,
            "spoken": [[w.text, w.begin_s, w.end_s] for w in self.true_spoken],
            "transcript": self.transcript_raw,
            "answer_key": [i.to_json() for i in self.answer_key],
            "human_segments": [g.to_json() for g in self.human_segments],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SynthDoc":
        return cls(d["aid"], d["source"], d["category"], float(d["duration"]),
                   tuple(TimedWord(w[0], float(w[1]), float(w[2])) for w in d["spoken"]),
                   d["transcript"],
                   tuple(Injection.from_json(v) for v in d["answer_key"]),
                   tuple(GoldSegment.from_json(v) for v in d["human_segments"]))


def word_duration(word: str) -> float:
    return round(min(1.2, max(0.15, 0.08 * len(word))), 2)


def make_vocab(size: int, seed: int) -> list[str]:
    """Pronounceable pseudo-words, none of them a filler or a month name."""
    rng = random.Random(f"vocab:{seed}")
    banned = _RESERVED | {w for p in SPOKEN_FILLERS for w in p.split()} | {"AND", "OR", "BUT"}
    seen, out = set(), []
    while len(out) < size:
        n = rng.choice((1, 2, 2, 3, 3, 4))
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n))
        if rng.random() < 0.3:
            w += rng.choice(_ONSETS)
        if w in seen or w in banned:
            continue
        seen.add(w)
        out.append(w)
    return out


def _rt(x: float) -> float:
    return round(x, 2)


def _exp(rng: random.Random, mean: float) -> float:
    return rng.expovariate(1.0 / mean) if mean > 0 else 0.0


def _generate_doc(spec: SynthSpec, k: int, vocab: list[str], weights: list[float]) -> SynthDoc:
    rng = random.Random(f"doc:{spec.seed}:{k}")
    er, pm = spec.error_rates, spec.pause_model
    source = rng.choices(SOURCES, weights=SOURCE_WEIGHTS)[0]
    category = rng.choice(CATEGORIES[:-1])

    spoken: list[TimedWord] = []
    key: list[Injection] = []
    written_sents: list[str] = []
    gold: list[tuple[list[tuple[str, float, float]], str]] = []
    t = _rt(pm.edge_silence_s)
    n_left = spec.words_per_doc

    def speak(word):
        nonlocal t
        d = word_duration(word)
        w = TimedWord(word, t, _rt(t + d))
        spoken.append(w)
        t = w.end_s
        return w

    def pause(seconds):
        nonlocal t
        t = _rt(t + seconds)

    while n_left > 0:
        lo, hi = spec.sentence_words
        n = min(n_left, rng.randint(lo, hi))
        n_left -= n
        written: list[str] = []
        human: list[str] = []
        sent_words: list[tuple[str, float, float]] = []
        prev = None
        for j in range(n):
            if spec.filler_rate and rng.random() < spec.filler_rate:
                phrase = rng.choice(SPOKEN_FILLERS)
                parts = [speak(p) for p in phrase.split()]
                for p in parts:
                    pause(0.01 * rng.randint(1, 5))
                sent_words += [(p.text, p.begin_s, p.end_s) for p in parts]
                human += phrase.split()
                if rng.random() < er.filler_drop:
                    key.append(Injection("filler_drop", parts[0].begin_s, parts[-1].end_s,
                                         tuple(phrase.split())))
                else:
                    written += [p.lower() for p in phrase.split()]
            word = rng.choices(vocab, weights=weights)[0]
            while word == prev:
                word = rng.choices(vocab, weights=weights)[0]
            prev = word
            copies = 2 if spec.repetition_rate and rng.random() < spec.repetition_rate else 1
            said = []
            for c in range(copies):
                said.append(speak(word))
                if c < copies - 1:
                    pause(0.01 * rng.randint(2, 8))
            sent_words += [(w.text, w.begin_s, w.end_s) for w in said]
            human += [word] * copies
            if copies > 1 and rng.random() < er.disfluency_drop:
                key.append(Injection("disfluency_drop", said[0].begin_s, said[1].end_s,
                                     (word, word)))
                said = said[:1]
            u = rng.random()
            out = []
            if u < er.deletion:
                for w in said:
                    key.append(Injection("deletion", w.begin_s, w.end_s, (word,)))
            elif u < er.deletion + er.typo:
                alt = rng.choice(vocab)
                while alt == word:
                    alt = rng.choice(vocab)
                key.append(Injection("typo", said[0].begin_s, said[0].end_s, (word,), alt))
                out = [alt] + [word] * (len(said) - 1)
            else:
                out = [word] * len(said)
            out = [w.lower() for w in out]
            last = j == n - 1
            if not last and spec.comma_rate and rng.random() < spec.comma_rate:
                if out:
                    out[-1] += ","
                human.append(",")
                pause(pm.comma_pause_s + _exp(rng, pm.inter_word_mean_s))
            elif not last:
                pause(0.01 * max(1, round(100 * _exp(rng, pm.inter_word_mean_s))))
            written += out
        end = rng.choices((".", "?", "!"), weights=(0.8, 0.12, 0.08))[0]
        human.append(end)
        if written:
            written[0] = written[0][:1].upper() + written[0][1:]
            written[-1] = written[-1].rstrip(",") + end
            written_sents.append(" ".join(written))
        gold.append((sent_words, " ".join(human)))
        if n_left > 0:
            pause(0.25 + _exp(rng, pm.sentence_pause_mean_s))
    duration = _rt(t + pm.edge_silence_s)

    segs = []
    bounds = [(s[0][1], s[-1][2]) for s, _ in gold]
    for i, (words, text) in enumerate(gold):
        b, e = bounds[i]
        prev_end = bounds[i - 1][1] if i else 0.0
        next_start = bounds[i + 1][0] if i + 1 < len(bounds) else duration
        lead = min(0.15, (b - prev_end) / (2 if i else 1))
        trail = min(0.15, (next_start - e) / (2 if i + 1 < len(bounds) else 1))
        segs.append(GoldSegment(round(b - lead, 6), round(e + trail, 6), tuple(words),
                                _human_tn(text)))
    return SynthDoc(f"SYN{spec.seed:03d}_{k:05d}", source, category, duration, tuple(spoken),
                    " ".join(written_sents), tuple(key), tuple(segs))


def _human_tn(text: str) -> str:
    marks = {",": "<COMMA>", ".": "<PERIOD>", "?": "<QUESTIONMARK>", "!": "<EXCLAMATIONMARK>"}
    return " ".join(marks.get(w, w) for w in text.split())


def generate(spec: SynthSpec) -> list[SynthDoc]:
    """Generate ``spec.n_docs`` documents; each document depends only on
    (seed, index), so corpora of different sizes share their prefixes."""
    vocab = make_vocab(spec.vocab_size, spec.seed)
    weights = [1.0 / (r + 1) for r in range(len(vocab))]
    return [_generate_doc(spec, k, vocab, weights) for k in range(spec.n_docs)]


# ---------------------------------------------------------------------------
# scorer

class SynthScorer:
    """Acoustic scorer over a known word sequence.

    Word i owns the frames from its onset to the onset of word i+1 (the
    first word also owns the leading silence, the last one the trailing
    silence), so the true words tile [0, total_frames).  ``best_span`` is
    defined only at those onsets: the true word scores 0, any other word
    scores ``-margin``, both plus optional deterministic jitter.
    """

    def __init__(self, words, total_frames: int, boundaries, noise: float = 0.0,
                 seed: int = 0, margin: float = 16.0, frame_rate: int = FRAME_RATE,
                 timed=(), offset: int = 0, unk_penalty: float = 3.0):
        if margin < 4.0:
            raise ValueError("margin must be at least 4 nats")
        self.words = tuple(words)
        self.boundaries = tuple(boundaries)
        self.total_frames = total_frames
        self.noise = noise
        self.seed = seed
        self.margin = margin
        self.frame_rate = frame_rate
        self.timed = tuple(timed)
        self.offset = offset  # absolute frame of local frame 0, keeps jitter stable
        self.unk_penalty = unk_penalty
        self._at = {b: i for i, b in enumerate(self.boundaries[:-1])}

    @classmethod
    def from_words(cls, timed, duration_s: float, noise: float = 0.0, seed: int = 0,
                   margin: float = 16.0, frame_rate: int = FRAME_RATE,
                   unk_penalty: float = 3.0) -> "SynthScorer":
        T = round(duration_s * frame_rate)
        bounds = [0] + [round(w.begin_s * frame_rate) for w in timed[1:]] + [T]
        return cls([w.text for w in timed], T, bounds if timed else [0], noise, seed,
                   margin, frame_rate, timed, 0, unk_penalty)

    def _jitter(self, word: str, frame: int) -> float:
        if not self.noise:
            return 0.0
        h = hashlib.sha256(f"{self.seed}:{word}:{frame + self.offset}".encode()).digest()
        u1 = (int.from_bytes(h[:8], "big") + 1) / 2.0 ** 64
        u2 = int.from_bytes(h[8:16], "big") / 2.0 ** 64
        return self.noise * math.sqrt(-2.0 * math.log(u1)) * math.cos(2 * math.pi * u2)

    def best_span(self, word: str, from_frame: int):
        i = self._at.get(from_frame)
        if i is None:
            return None
        if word == UNK_WORD:
            base = -self.unk_penalty
        else:
            base = 0.0 if word == self.words[i] else -self.margin
        return self.boundaries[i + 1], base + self._jitter(word, from_frame)

    def window(self, begin_s: float, end_s: float) -> "SynthScorer":
        """Scorer restricted to [begin_s, end_s) with frames renumbered from 0;
        only words lying entirely inside the window are kept."""
        fr = self.frame_rate
        f0, f1 = round(begin_s * fr), round(end_s * fr)
        inside = [w for w in self.timed
                  if round(w.begin_s * fr) >= f0 and round(w.end_s * fr) <= f1]
        T = f1 - f0
        bounds = [0] + [round(w.begin_s * fr) - f0 for w in inside[1:]] + [T]
        return SynthScorer([w.text for w in inside], T, bounds if inside else [0],
                           self.noise, self.seed, self.margin, fr, inside, self.offset + f0,
                           self.unk_penalty)


def make_scorer(doc: SynthDoc, noise: float = 0.0, seed: int = 0,
                margin: float = 16.0, unk_penalty: float = 3.0) -> SynthScorer:
    return SynthScorer.from_words(doc.true_spoken, doc.duration_s, noise, seed, margin,
                                  unk_penalty=unk_penalty)


# ---------------------------------------------------------------------------
# answer key helpers and I/O

def injections_in(doc: SynthDoc, begin_s: float, end_s: float) -> list[Injection]:
    """Injections audible in [begin_s, end_s).

    Most injections count when their spoken span overlaps the window.  A
    dropped repetition is only a discrepancy when both copies are inside.
    """
    out = []
    for i in doc.answer_key:
        if i.kind == "disfluency_drop":
            if i.begin_s >= begin_s and i.end_s <= end_s:
                out.append(i)
        elif i.begin_s < end_s and i.end_s > begin_s:
            out.append(i)
    return out


def gold_manifest(docs: list[SynthDoc], name: str = "synth", version: str = "1.0") -> Manifest:
    audios = []
    for d in docs:
        segs = tuple(
            SegmentRecord(f"{d.aid}_G{k:05d}", g.begin_s, g.end_s, g.text, g.text, 0.0,
                          frozenset(), tuple(WordTime(*w) for w in g.words))
            for k, g in enumerate(d.human_segments))
        audios.append(AudioDoc(d.aid, f"synth://{d.aid}", f"audio/{d.aid}.opus", "opus",
                               doc_md5(d), d.source, d.category, d.duration_s,
                               frozenset(), segs))
    return Manifest(name, version, tuple(audios))


def doc_md5(doc: SynthDoc) -> str:
    payload = json.dumps([[w.text, w.begin_s, w.end_s] for w in doc.true_spoken])
    return hashlib.md5(payload.encode()).hexdigest()


def write_corpus(docs: list[SynthDoc], out_dir, spec: SynthSpec | None = None) -> Path:
    """Write ``docs.jsonl`` (one document per line), plain-text transcripts,
    answer keys and a gold manifest under ``out_dir``."""
    from .metadata import save_manifest

    out = Path(out_dir)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    (out / "answer_keys").mkdir(exist_ok=True)
    with open(out / "docs.jsonl", "w") as f:
        for d in docs:
            f.write(json.dumps(d.to_json(), sort_keys=True) + "\n")
    for d in docs:
        (out / "transcripts" / f"{d.aid}.txt").write_text(d.transcript_raw + "\n")
        (out / "answer_keys" / f"{d.aid}.json").write_text(
            json.dumps([i.to_json() for i in d.answer_key], indent=1) + "\n")
    (out / "gold_manifest.json").write_bytes(save_manifest(gold_manifest(docs)))
    if spec is not None:
        (out / "spec.json").write_text(json.dumps(spec.to_json(), indent=1) + "\n")
    return out


def load_corpus(path) -> list[SynthDoc]:
    p = Path(path)
    if p.is_dir():
        p = p / "docs.jsonl"
    with open(p) as f:
        return [SynthDoc.from_json(json.loads(line)) for line in f if line.strip()]
