"""Independent reference implementations used as test oracles.

They are written for obviousness, not speed, and share no code with the
package beyond plain data types.
"""
from __future__ import annotations

import bisect
import heapq
import math
from functools import lru_cache

PUNCT = {"<COMMA>", "<PERIOD>", "<QUESTIONMARK>", "<EXCLAMATIONMARK>"}
SIL = "<SIL>"


def levenshtein(a, b) -> int:
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j + 1) + (a[i] != b[j]), d(i + 1, j) + 1, d(i, j + 1) + 1)

    return d(0, 0)


def wer(ref_words, hyp_words) -> float:
    return 100.0 * levenshtein(ref_words, hyp_words) / len(ref_words)


def _moves(h, r, i, j, match=2, mismatch=-1, gap=-1, skip=0):
    """All single alignment steps from (i, j) as (score, ni, nj)."""
    out = []
    if i < len(h) and j < len(r) and h[i] != SIL and r[j] not in PUNCT:
        out.append((match if h[i] == r[j] else mismatch, i + 1, j + 1))
    if i < len(h):
        out.append((skip if h[i] == SIL else gap, i + 1, j))
    if j < len(r):
        out.append((skip if r[j] in PUNCT else gap, i, j + 1))
    return out


def sw_best_recursive(hyp, ref) -> int:
    """Best local alignment score: max over start cells of the best path
    that may stop anywhere (memoized suffix recursion)."""
    h, r = tuple(hyp), tuple(ref)

    @lru_cache(maxsize=None)
    def f(i, j):
        return max([0] + [s + f(ni, nj) for s, ni, nj in _moves(h, r, i, j)])

    return max(f(i, j) for i in range(len(h) + 1) for j in range(len(r) + 1))


def sw_best_enumerate(hyp, ref) -> int:
    """Literal enumeration of every local alignment (only for short inputs)."""
    h, r = tuple(hyp), tuple(ref)
    best = 0

    def walk(i, j, score):
        nonlocal best
        best = max(best, score)
        for s, ni, nj in _moves(h, r, i, j):
            walk(ni, nj, score + s)

    for i in range(len(h) + 1):
        for j in range(len(r) + 1):
            walk(i, j, 0)
    return best


def sw_ops_score(ops, hyp, ref) -> int:
    """Re-score alignment ops from their indices and the raw strings."""
    total = 0
    for op in ops:
        k = op.kind.value
        if k == "MATCH":
            assert hyp[op.hyp_index] == ref[op.ref_index]
            total += 2
        elif k == "SUB":
            assert hyp[op.hyp_index] != ref[op.ref_index]
            total -= 1
        elif k in ("INS", "DEL"):
            total -= 1
    return total


def exhaustive_decode_cost(graph, scorer) -> float:
    """Minimum accepting-path cost by enumerating every path whose nodes
    (state, leak origin, frame) do not repeat.  Repeating a node adds a
    cycle of non-negative cost, so such paths are never cheaper."""
    T = scorer.total_frames
    states = graph.states
    best = math.inf

    def step(node, cost, seen):
        nonlocal best
        if cost >= best:
            return
        state, origin, t = node
        if state == graph.final and t == T:
            best = cost
        for a in graph.arcs:
            if a.src != state or math.isinf(a.cost):
                continue
            kind = a.kind.value
            if kind == "PUNCT":
                continue
            if kind == "RETURN":
                if a.origin != origin:
                    continue
                nxt = (a.dst, None, t)
                add = a.cost
            elif kind == "LEAK":
                o = states[a.src].ref_position if states[a.dst].null_loop else None
                nxt = (a.dst, o, t)
                add = a.cost
            else:
                sp = scorer.best_span(a.label, t)
                if sp is None or sp[0] > T:
                    continue
                o = origin if states[a.dst].null_loop else None
                nxt = (a.dst, o, sp[0])
                add = a.cost - sp[1]
            if nxt in seen:
                continue
            seen.add(nxt)
            step(nxt, cost + add, seen)
            seen.discard(nxt)

    start = (graph.start, None, 0)
    step(start, 0.0, {start})
    return best


def dijkstra_decode_cost(graph, scorer) -> float:
    """Shortest path over the full (state, origin, frame) product, no beam."""
    T = scorer.total_frames
    states = graph.states
    dist = {(graph.start, None, 0): 0.0}
    heap = [(0.0, 0, graph.start, -1, None)]
    counter = 0
    while heap:
        c, _, s, _, o_t = heapq.heappop(heap)
        o, t = o_t if o_t is not None else (None, 0)
        if dist.get((s, o, t), math.inf) < c:
            continue
        if s == graph.final and t == T:
            return c
        for a in graph.arcs:
            if a.src != s or math.isinf(a.cost) or a.kind.value == "PUNCT":
                continue
            kind = a.kind.value
            if kind == "RETURN":
                if a.origin != o:
                    continue
                nk, add = (a.dst, None, t), a.cost
            elif kind == "LEAK":
                no = states[a.src].ref_position if states[a.dst].null_loop else None
                nk, add = (a.dst, no, t), a.cost
            else:
                sp = scorer.best_span(a.label, t)
                if sp is None or sp[0] > T:
                    continue
                no = o if states[a.dst].null_loop else None
                nk, add = (a.dst, no, sp[0]), a.cost - sp[1]
            nc = c + add
            if nc < dist.get(nk, math.inf):
                dist[nk] = nc
                counter += 1
                heapq.heappush(heap, (nc, counter, nk[0], -1, (nk[1], nk[2])))
    return math.inf


def cosine(u: dict, v: dict) -> float:
    dot = sum(u[k] * v.get(k, 0.0) for k in u)
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    return 0.0 if nu == 0 or nv == 0 else dot / (nu * nv)


def frame_pr(kept_segments, human_segments, total_frames, rate=100):
    """Precision/recall counts computed frame by frame from scratch.

    Segments are (begin_s, end_s, [(word, b, e), ...]) and must not overlap.
    Returns (correct, retrieved, human speech, correct speech).
    """
    def index(segs):
        segs = sorted(segs, key=lambda s: s[0])
        return [round(s[0] * rate) for s in segs], segs

    def label(idx, f):
        starts, segs = idx
        k = bisect.bisect_right(starts, f) - 1
        if k < 0:
            return False, SIL
        b, e, words = segs[k]
        if not f < round(e * rate):
            return False, SIL
        for w, wb, we in words:
            if round(wb * rate) <= f < round(we * rate):
                return True, w
        return True, SIL

    kept, human = index(kept_segments), index(human_segments)
    correct = retrieved = speech = correct_speech = 0
    for f in range(total_frames):
        ret, lab = label(kept, f)
        _, ref = label(human, f)
        speech += ref != SIL
        if ret:
            retrieved += 1
            correct += lab == ref
            correct_speech += lab == ref != SIL
    return correct, retrieved, speech, correct_speech
