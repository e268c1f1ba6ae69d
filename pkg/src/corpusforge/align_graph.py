"""Leaky n-gram forced-alignment graph.

The forced path consumes the reference words in order.  Every forced state
(except the final one) can leak down one n-gram order at a time until it
reaches the single null state, which carries a garbage-word loop and a
filler loop.  Return arcs bring the token back onto the forced path, at
most ``return_window`` words ahead of where it leaked out.  The null state
itself is shared, so return arcs are tagged with the forced position they
are valid for (the leak origin) and the decoder tracks that origin.
"""
from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable

from .errors import EmptyReferenceError
from .textnorm import TokenKind, TokenSeq

UNK_WORD = "<UNK>"
DEFAULT_FILLERS = ("AH", "UH", "UM", "ER", "ERR", "YOU KNOW", "I MEAN", "SORT OF",
                   "AND", "OR", "BUT")


class ArcKind(str, enum.Enum):
    FORCED = "FORCED"
    LEAK = "LEAK"
    GARBAGE = "GARBAGE"
    FILLER = "FILLER"
    RETURN = "RETURN"
    PUNCT = "PUNCT"


@dataclass(frozen=True)
class GraphWeights:
    leak_per_level: float = 2.0
    garbage_word: float = 4.0
    filler_word: float = 1.0
    return_arc: float = 1.0

    def __post_init__(self):
        for name in ("leak_per_level", "garbage_word", "filler_word", "return_arc"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be a non-negative cost")


@dataclass(frozen=True)
class GarbageVocab:
    words: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) > 1000:
            raise ValueError("garbage vocabulary holds at most 1000 words")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate garbage words")


def build_garbage_vocab(word_lists: Iterable[Iterable[str]], size: int = 1000) -> GarbageVocab:
    """Top ``size`` unigrams by count (ties broken alphabetically)."""
    counts = Counter()
    for words in word_lists:
        counts.update(words)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return GarbageVocab(tuple(w for w, _ in ranked[:min(size, 1000)]))


@dataclass(frozen=True)
class FillerSet:
    phrases: tuple[str, ...] = DEFAULT_FILLERS

    @property
    def sequences(self) -> list[tuple[str, ...]]:
        return [tuple(p.split()) for p in self.phrases]

    @property
    def words(self) -> frozenset:
        return frozenset(w for p in self.phrases for w in p.split())


@dataclass(frozen=True)
class State:
    id: int
    ref_position: int | None
    level: int
    is_null: bool = False
    null_loop: bool = False  # part of an excursion through the null state


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    label: str | None  # None for epsilon
    cost: float
    kind: ArcKind
    origin: int | None = None  # RETURN arcs: the leak origin they serve


@dataclass
class AlignGraph:
    states: list[State]
    arcs: list[Arc]
    start: int | None
    final: int | None
    order_n: int
    words: tuple[str, ...] = ()
    return_window: int = 0
    out_arcs: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.reindex()

    def reindex(self):
        self.out_arcs = [[] for _ in self.states]
        for k, a in enumerate(self.arcs):
            if 0 <= a.src < len(self.states):
                self.out_arcs[a.src].append(k)

    @property
    def null(self) -> int | None:
        nulls = [s.id for s in self.states if s.is_null]
        return nulls[0] if len(nulls) == 1 else None

    def count(self, kind: ArcKind) -> int:
        return sum(a.kind is kind for a in self.arcs)

    def dump(self) -> str:
        """One arc per line: ``from to label cost kind [origin]``."""
        lines = []
        for a in self.arcs:
            cols = [str(a.src), str(a.dst), a.label or "<eps>",
                    "inf" if math.isinf(a.cost) else f"{a.cost:.3f}", a.kind.value]
            if a.origin is not None:
                cols.append(str(a.origin))
            lines.append(" ".join(cols))
        lines.append(f"{self.final}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"states": len(self.states), "arcs": len(self.arcs),
                "words": len(self.words), "order": self.order_n,
                **{k.value.lower(): self.count(k) for k in ArcKind}}


def build_graph(ref: TokenSeq, order_n: int = 4, w: GraphWeights = GraphWeights(),
                garbage: GarbageVocab = GarbageVocab(()),
                fillers: FillerSet = FillerSet(), return_window: int = 10,
                filler_detours: bool = True, unk_word: str | None = None) -> AlignGraph:
    """Build the leaky forced-alignment graph for one reference.

    ``unk_word`` adds one more garbage arc for a generic garbage model that
    matches any speech moderately well.
    """
    words = ref.words()
    if not words:
        raise EmptyReferenceError("reference has no words")
    if order_n < 2:
        raise ValueError("order_n must be at least 2")
    if return_window < 0:
        raise ValueError("return_window must be non-negative")
    W = len(words)
    top = order_n - 1
    states: list[State] = []
    arcs: list[Arc] = []

    def new_state(pos, level, is_null=False, null_loop=False):
        states.append(State(len(states), pos, level, is_null, null_loop))
        return len(states) - 1

    forced = [new_state(p, top) for p in range(W + 1)]
    null = new_state(None, 0, is_null=True, null_loop=True)

    for p, word in enumerate(words):
        arcs.append(Arc(forced[p], forced[p + 1], word, 0.0, ArcKind.FORCED))

    for p in range(W):
        src = forced[p]
        for level in range(top - 1, 0, -1):
            mid = new_state(p, level)
            arcs.append(Arc(src, mid, None, w.leak_per_level, ArcKind.LEAK))
            src = mid
        arcs.append(Arc(src, null, None, w.leak_per_level, ArcKind.LEAK))

    for g in garbage.words:
        arcs.append(Arc(null, null, g, w.garbage_word, ArcKind.GARBAGE))
    if unk_word is not None and unk_word not in garbage.words:
        arcs.append(Arc(null, null, unk_word, w.garbage_word, ArcKind.GARBAGE))

    def filler_chain(anchor, seq, null_loop, pos):
        src = anchor
        for k, word in enumerate(seq):
            dst = anchor if k == len(seq) - 1 else new_state(pos, 0, null_loop=null_loop)
            arcs.append(Arc(src, dst, word, w.filler_word, ArcKind.FILLER))
            src = dst

    for seq in fillers.sequences:
        filler_chain(null, seq, True, None)
    if filler_detours:
        # the final state gets detours too, for fillers after the last word
        for p in range(W + 1):
            for seq in fillers.sequences:
                filler_chain(forced[p], seq, False, p)

    for p in range(W):
        for q in range(p, min(p + return_window, W) + 1):
            arcs.append(Arc(null, forced[q], None, w.return_arc, ArcKind.RETURN, origin=p))

    p = 0
    for tok in ref.tokens:
        if tok.kind is TokenKind.WORD:
            p += 1
        elif tok.kind is TokenKind.PUNCT:
            arcs.append(Arc(forced[p], forced[p], tok.text, 0.0, ArcKind.PUNCT))

    return AlignGraph(states, arcs, forced[0], forced[W], order_n, tuple(words), return_window)


# ---------------------------------------------------------------------------
# structural checks

UNREACHABLE_STATE = "UNREACHABLE_STATE"
NO_FINAL = "NO_FINAL"
FINAL_UNREACHABLE = "FINAL_UNREACHABLE"
NO_START = "NO_START"
NULL_STATE_COUNT = "NULL_STATE_COUNT"
NEGATIVE_COST = "NEGATIVE_COST"
NONDETERMINISTIC_FORCED = "NONDETERMINISTIC_FORCED"
BROKEN_FORCED_PATH = "BROKEN_FORCED_PATH"


def validate_graph(g: AlignGraph) -> list[tuple[str, object]]:
    """Return a list of (problem, detail) entries; empty for a sound graph."""
    report = []
    n = len(g.states)
    if g.start is None or not 0 <= g.start < n:
        report.append((NO_START, g.start))
        return report
    if g.final is None or not 0 <= g.final < n:
        report.append((NO_FINAL, g.final))
    nulls = [s.id for s in g.states if s.is_null]
    if len(nulls) != 1:
        report.append((NULL_STATE_COUNT, len(nulls)))
    for k, a in enumerate(g.arcs):
        if a.cost < 0:
            report.append((NEGATIVE_COST, k))

    seen = {g.start}
    queue = deque([g.start])
    out = [[] for _ in range(n)]
    for a in g.arcs:
        if 0 <= a.src < n and 0 <= a.dst < n:
            out[a.src].append(a.dst)
    while queue:
        s = queue.popleft()
        for d in out[s]:
            if d not in seen:
                seen.add(d)
                queue.append(d)
    for s in range(n):
        if s not in seen:
            report.append((UNREACHABLE_STATE, s))
    if g.final is not None and 0 <= g.final < n and g.final not in seen:
        report.append((FINAL_UNREACHABLE, g.final))

    forced_out: dict[int, list[Arc]] = {}
    for a in g.arcs:
        if a.kind is ArcKind.FORCED:
            forced_out.setdefault(a.src, []).append(a)
    for s, arcs in sorted(forced_out.items()):
        if len(arcs) > 1:
            report.append((NONDETERMINISTIC_FORCED, s))
    if g.final is not None:
        s, steps = g.start, 0
        while s != g.final and len(forced_out.get(s, ())) == 1 and steps <= len(g.arcs):
            s = forced_out[s][0].dst
            steps += 1
        if s != g.final:
            report.append((BROKEN_FORCED_PATH, s))
    return report
