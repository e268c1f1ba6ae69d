"""End-to-end corpus pipeline over per-document JSON records.

Every stage maps a list of document records to a new list; a record is a
plain JSON object that accumulates the output of each stage.  Records are
round-tripped through JSON between stages so that a chain of single-stage
runs reproduces a full run byte for byte.
"""
from __future__ import annotations

import json
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .align_graph import UNK_WORD, FillerSet, GarbageVocab, GraphWeights, build_garbage_vocab, build_graph
from .chunk_match import ChunkMatch, TimedHypothesis, TimedWord, chunk_hypothesis, chunk_transcript, match_chunks
from .errors import ConfigError, CorpusForgeError, NoPathError, UnknownStageError
from .evaluator import (FrameCounts, HumanDoc, LabeledSegment, PRPoint, frame_counts,
                        frame_labels, select_working_point)
from .metadata import (TRAIN_SUBSETS, AudioDoc, Manifest, SegmentRecord, WordTime,
                       partition_subsets, save_manifest, validate_manifest)
from .segmenter import CandidateSegment, SegmentRules, segment_transcript
from .sw_align import Scoring, TimedTranscript, align_chunk, hyp_items, stitch
from .synth import SynthDoc, SynthScorer, doc_md5
from .textnorm import TokenSeq, normalize_text
from .validator import (RewritePolicy, decode, judge, no_path_result, path_to_edits,
                        path_words)

STAGES = ("normalize", "match", "align", "segment", "graph", "validate", "evaluate")
CORPUS_STAGES = ("graph", "validate")  # need the corpus-level garbage vocabulary


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ChunkingConfig:
    words_per_chunk: int = 100
    overlap_words: int = 50
    window_s: float = 30.0
    overlap_s: float = 5.0
    match_threshold: float = 0.2


@dataclass(frozen=True)
class AlignmentConfig:
    match: int = 2
    mismatch: int = -1
    gap: int = -1
    skip: int = 0
    max_del_run: int = 15
    sil_gap_s: float = 0.1


@dataclass(frozen=True)
class GraphConfig:
    order_n: int = 4
    weights: GraphWeights = GraphWeights()
    return_window: int = 10
    garbage_size: int = 1000
    filler_detours: bool = True
    unk_garbage: bool = True
    fillers: tuple[str, ...] = FillerSet().phrases


@dataclass(frozen=True)
class SubsetPolicy:
    cap: float = 0.0
    fillers: bool = False
    disfluency: bool = False
    source_caps: tuple[tuple[str, float], ...] = ()  # per-source cap overrides

    def cap_for(self, source: str) -> float:
        return dict(self.source_caps).get(source, self.cap)


def default_policies() -> tuple[tuple[str, SubsetPolicy], ...]:
    strict = SubsetPolicy(0.0, False, False)
    xl = SubsetPolicy(4.0, True, True, (("audiobook", 0.0),))
    return tuple((s, xl if s == "XL" else strict) for s in TRAIN_SUBSETS)


@dataclass(frozen=True)
class ValidationConfig:
    beam: int = 64
    cap_exclusive: bool = False
    policies: tuple[tuple[str, SubsetPolicy], ...] = field(default_factory=default_policies)


@dataclass(frozen=True)
class ScorerConfig:
    noise: float = 0.0
    seed: int = 0
    margin: float = 16.0
    unk_penalty: float = 3.0


@dataclass(frozen=True)
class EvaluationConfig:
    caps: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 8.0)
    target_hours: float = 0.0
    max_cap: float = 4.0
    sweep_policy: str = "XL"  # whose rewriting rules produce the swept WER


@dataclass(frozen=True)
class PartitionConfig:
    targets: tuple[tuple[str, float], ...] = ()
    ratios: tuple[tuple[str, float], ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str = "corpus"
    out_dir: str = "out"
    dataset_name: str = "corpusforge"
    version: str = "1.0"
    jobs: int = 1
    dump_stages: bool = True
    chunking: ChunkingConfig = ChunkingConfig()
    alignment: AlignmentConfig = AlignmentConfig()
    segmentation: SegmentRules = SegmentRules()
    graph: GraphConfig = GraphConfig()
    validation: ValidationConfig = ValidationConfig()
    scorer: ScorerConfig = ScorerConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    partition: PartitionConfig | None = None

    def __post_init__(self):
        names = [s for s, _ in self.validation.policies]
        for s, p in self.validation.policies:
            if p.cap < 0 or any(c < 0 for _, c in p.source_caps):
                raise ConfigError(f"{s}: negative cap")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate subset policy")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if list(self.evaluation.caps) != sorted(self.evaluation.caps):
            raise ConfigError("evaluation caps must be ascending")
        if self.evaluation.sweep_policy not in names:
            raise ConfigError(f"sweep policy {self.evaluation.sweep_policy!r} has no subset policy")

    @property
    def policies(self) -> dict[str, SubsetPolicy]:
        return dict(self.validation.policies)

    def to_json(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_json(cls, d: dict, base_dir: str | os.PathLike | None = None) -> "PipelineConfig":
        try:
            cfg = _from_plain(cls, d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError, AttributeError) as e:
            raise ConfigError(f"bad config: {e}") from e
        if base_dir is not None:
            base = Path(base_dir)
            cfg = replace(cfg, corpus=str(base / cfg.corpus), out_dir=str(base / cfg.out_dir))
        return cfg


_MAPPING_FIELDS = {"policies", "source_caps", "targets", "ratios"}


def _to_plain(x):
    if is_dataclass(x):
        out = {}
        for f in fields(x):
            v = getattr(x, f.name)
            if f.name in _MAPPING_FIELDS:
                out[f.name] = {k: _to_plain(val) for k, val in v}
            else:
                out[f.name] = _to_plain(v)
        return out
    if isinstance(x, tuple):
        return [_to_plain(v) for v in x]
    return x


_NESTED = {
    "chunking": ChunkingConfig, "alignment": AlignmentConfig, "segmentation": SegmentRules,
    "graph": GraphConfig, "weights": GraphWeights, "validation": ValidationConfig,
    "scorer": ScorerConfig, "evaluation": EvaluationConfig, "partition": PartitionConfig,
}


def _from_plain(cls, d):
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        if k in _NESTED and v is not None:
            kw[k] = _from_plain(_NESTED[k], v)
        elif k == "policies":
            kw[k] = tuple((s, _from_plain(SubsetPolicy, p)) for s, p in v.items())
        elif k in _MAPPING_FIELDS:
            kw[k] = tuple((s, float(x)) for s, x in v.items())
        elif isinstance(v, list):
            kw[k] = tuple(v)
        else:
            kw[k] = v
    return cls(**kw)


def load_config(path) -> PipelineConfig:
    p = Path(path)
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: {e}") from e
    return PipelineConfig.from_json(d, base_dir=p.parent)


# ---------------------------------------------------------------------------
# per-document stages

def _normalize(rec: dict, cfg: PipelineConfig, ctx) -> None:
    rec["tokens"] = normalize_text(rec["transcript"]).to_json()


def _hyp(rec) -> TimedHypothesis:
    return TimedHypothesis.from_json({"duration": rec["duration"],
                                      "words": rec.get("hypothesis", rec["spoken"])})


def _match(rec: dict, cfg: PipelineConfig, ctx) -> None:
    c = cfg.chunking
    ref = TokenSeq.from_json(rec["tokens"])
    rc = chunk_transcript(ref, c.words_per_chunk, c.overlap_words)
    hc = chunk_hypothesis(_hyp(rec), c.window_s, c.overlap_s)
    rec["matches"] = [m.to_json() for m in match_chunks(hc, rc, c.match_threshold)]


def _align(rec: dict, cfg: PipelineConfig, ctx) -> None:
    c, a = cfg.chunking, cfg.alignment
    ref = TokenSeq.from_json(rec["tokens"])
    hyp = _hyp(rec)
    rc = chunk_transcript(ref, c.words_per_chunk, c.overlap_words)
    hc = chunk_hypothesis(hyp, c.window_s, c.overlap_s)
    items = hyp_items(hyp, a.sil_gap_s)
    scoring = Scoring(a.match, a.mismatch, a.gap, a.skip)
    alignments = []
    for m in rec["matches"]:
        m = ChunkMatch.from_json(m)
        alignments.append(align_chunk(m, hc[m.hyp_chunk], rc[m.ref_chunk], items, ref,
                                      scoring, a.max_del_run))
    rec["timed"] = stitch(alignments, ref, hyp, a.sil_gap_s).to_json()


def _segment(rec: dict, cfg: PipelineConfig, ctx) -> None:
    tt = TimedTranscript.from_json(rec["timed"])
    stats = Counter()
    segs = segment_transcript(tt, cfg.segmentation, prefix=rec["aid"], stats=stats)
    rec["segments"] = [s.to_json() for s in segs]
    rec["segment_stats"] = dict(sorted(stats.items()))


def graph_for(seg: CandidateSegment, cfg: PipelineConfig, vocab: GarbageVocab):
    g = cfg.graph
    return build_graph(seg.tokens, g.order_n, g.weights, vocab, FillerSet(tuple(g.fillers)),
                       g.return_window, g.filler_detours, UNK_WORD if g.unk_garbage else None)


def _graph(rec: dict, cfg: PipelineConfig, vocab) -> None:
    rec["graphs"] = [graph_for(CandidateSegment.from_json(s), cfg, vocab).summary()
                     for s in rec["segments"]]


def _validate(rec: dict, cfg: PipelineConfig, vocab) -> None:
    if "spoken" not in rec:
        raise CorpusForgeError("document has no acoustic scorer input")
    sc = cfg.scorer
    timed = TimedHypothesis.from_json({"duration": rec["duration"], "words": rec["spoken"]}).words
    scorer = SynthScorer.from_words(timed, rec["duration"], sc.noise, sc.seed, sc.margin,
                                    unk_penalty=sc.unk_penalty)
    fillers = FillerSet(tuple(cfg.graph.fillers))
    out = []
    for sj in rec["segments"]:
        seg = CandidateSegment.from_json(sj)
        g = graph_for(seg, cfg, vocab)
        entry = {"sid": seg.sid, "results": {}}
        try:
            path = decode(g, scorer.window(seg.begin_s, seg.end_s), cfg.validation.beam)
        except NoPathError as e:
            path = None
            err = e
        if path is not None:
            es = path_to_edits(path, seg.tokens, fillers, graph=g)
            words = path_words(path)
        for subset, pol in cfg.validation.policies:
            cap = pol.cap_for(rec.get("source", ""))
            if path is None:
                r = no_path_result(seg.sid, err)
            else:
                r = judge(seg.sid, es, seg.tokens, cap, RewritePolicy(pol.fillers, pol.disfluency),
                          fillers, cfg.validation.cap_exclusive)
            entry["results"][subset] = {
                "wer": r.wer, "passed": r.passed, "cap": cap, "reason": r.reason,
                "edits": [e.to_json() for e in r.edit_script.entries],
                "rewritten": None if r.rewritten_ref is None else r.rewritten_ref.to_json(),
            }
        entry["path"] = [list(w) for w in words] if path is not None else []
        out.append(entry)
    rec["validation"] = out


def _human(rec) -> HumanDoc | None:
    if "human_segments" not in rec:
        return None
    segs = tuple(LabeledSegment(float(g["begin"]), float(g["end"]),
                                tuple((w[0], float(w[1]), float(w[2])) for w in g["words"]))
                 for g in rec["human_segments"])
    return HumanDoc(round(float(rec["duration"]) * 100), segs)


def _evaluate(rec: dict, cfg: PipelineConfig, ctx) -> None:
    """Per-document frame counts and hours for every evaluation cap."""
    policy = cfg.evaluation.sweep_policy
    segs = {s["sid"]: CandidateSegment.from_json(s) for s in rec["segments"]}
    scored = [(segs[v["sid"]], v["results"][policy]["wer"]) for v in rec["validation"]]
    human = _human(rec)
    gold = None if human is None else frame_labels(human.segments, human.total_frames)
    points = []
    for cap in cfg.evaluation.caps:
        kept = [s for s, wer in scored if round(wer, 9) <= cap]
        hours = sum(s.duration for s in kept) / 3600.0
        point = {"cap": cap, "hours": hours}
        if gold is not None:
            lab = frame_labels([LabeledSegment(s.begin_s, s.end_s, tuple(s.word_times))
                                for s in kept], human.total_frames)
            c = frame_counts(lab, gold)
            point["counts"] = [c.correct, c.retrieved, c.human_speech, c.correct_speech]
        points.append(point)
    rec["evaluation"] = points


_STAGE_FUNCS = {"normalize": _normalize, "match": _match, "align": _align,
                "segment": _segment, "graph": _graph, "validate": _validate,
                "evaluate": _evaluate}


def apply_stage(name: str, rec: dict, cfg: PipelineConfig, ctx=None) -> dict:
    """Run one stage on one record; failures are stored in the record."""
    if name not in _STAGE_FUNCS:
        raise UnknownStageError(name)
    rec = json.loads(json.dumps(rec))
    if "error" in rec:
        return rec
    try:
        _STAGE_FUNCS[name](rec, cfg, ctx)
    except Exception as e:  # noqa: BLE001  per-document isolation
        rec["error"] = {"stage": name, "type": type(e).__name__, "message": str(e)}
    return json.loads(json.dumps(rec))


def garbage_vocab_for(records: list[dict], cfg: PipelineConfig) -> GarbageVocab:
    lists = []
    for r in records:
        if "tokens" in r:
            lists.append(TokenSeq.from_json(r["tokens"]).words())
    return build_garbage_vocab(lists, cfg.graph.garbage_size)


# ---------------------------------------------------------------------------
# parallel execution

_WORKER: dict = {}


def _init_worker(cfg_json: dict, vocab_words):
    _WORKER["cfg"] = PipelineConfig.from_json(cfg_json)
    _WORKER["vocab"] = None if vocab_words is None else GarbageVocab(tuple(vocab_words))


def _work(args):
    stages, rec = args
    cfg, vocab = _WORKER["cfg"], _WORKER["vocab"]
    dumps = []
    for name in stages:
        rec = apply_stage(name, rec, cfg, vocab)
        dumps.append(_line(rec))
    return rec, dumps


def _line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def jobs_for(cfg: PipelineConfig) -> int:
    env = os.environ.get("CORPUSFORGE_JOBS")
    if env:
        try:
            n = int(env)
        except ValueError as e:
            raise ConfigError(f"CORPUSFORGE_JOBS={env!r} is not an integer") from e
        if n < 1:
            raise ConfigError("CORPUSFORGE_JOBS must be >= 1")
        return n
    return cfg.jobs


def run_stages(stages, records: list[dict], cfg: PipelineConfig, vocab=None, jobs: int = 1):
    """Run a sequence of stages over all records; returns (records, dumps by stage)."""
    vocab_words = None if vocab is None else list(vocab.words)
    work = [(tuple(stages), r) for r in records]
    if jobs > 1 and len(records) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(cfg.to_json(), vocab_words)) as ex:
            results = list(ex.map(_work, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        _init_worker(cfg.to_json(), vocab_words)
        results = [_work(w) for w in work]
    out = [r for r, _ in results]
    dumps = {name: [d[k] for _, d in results] for k, name in enumerate(stages)}
    return out, dumps


# ---------------------------------------------------------------------------
# inputs, aggregation, outputs

def load_records(path) -> list[dict]:
    p = Path(path)
    if p.is_dir():
        p = p / "docs.jsonl"
    with open(p) as f:
        recs = [json.loads(line) for line in f if line.strip()]
    aids = [r.get("aid") for r in recs]
    if any(a is None for a in aids) or len(set(aids)) != len(aids):
        raise ConfigError(f"{p}: every record needs a unique aid")
    return sorted(recs, key=lambda r: r["aid"])


def write_records(path, lines_or_records) -> None:
    with open(path, "w") as f:
        for x in lines_or_records:
            f.write((x if isinstance(x, str) else _line(x)) + "\n")


def _segment_record(rec, seg: CandidateSegment, v: dict, policies) -> SegmentRecord | None:
    passed = frozenset(s for s, r in v["results"].items() if r["passed"])
    if not passed:
        return None
    # the most permissive policy defines the stored text and WER
    best = max(passed, key=lambda s: (policies[s].cap_for(rec.get("source", "")),
                                      policies[s].fillers, policies[s].disfluency, s))
    res = v["results"][best]
    toks = TokenSeq.from_json(res["rewritten"]) if res["rewritten"] else seg.tokens
    raw = rec["transcript"]
    spans = seg.tokens.raw_spans
    text_raw = raw[spans[0][0]:spans[-1][1]] if spans else ""
    words = tuple(WordTime(w, round(b, 3), round(e, 3)) for w, b, e in seg.word_times)
    return SegmentRecord(seg.sid, round(seg.begin_s, 3), round(seg.end_s, 3), toks.render(),
                         text_raw, round(res["wer"], 3), passed, words)


def build_manifest(records: list[dict], cfg: PipelineConfig) -> Manifest:
    policies = cfg.policies
    audios = []
    for rec in records:
        if "error" in rec:
            continue
        segs = {s["sid"]: CandidateSegment.from_json(s) for s in rec["segments"]}
        kept = []
        for v in rec["validation"]:
            sr = _segment_record(rec, segs[v["sid"]], v, policies)
            if sr is not None:
                kept.append(sr)
        kept.sort(key=lambda s: s.begin_time)
        md5 = doc_md5_from_record(rec)
        audios.append(AudioDoc(rec["aid"], rec.get("url", f"synth://{rec['aid']}"),
                               rec.get("path", f"audio/{rec['aid']}.opus"),
                               rec.get("format", "opus"), md5, rec["source"],
                               rec.get("category", "N/A"), float(rec["duration"]),
                               frozenset().union(*(s.subsets for s in kept)) if kept else frozenset(),
                               tuple(kept)))
    m = Manifest(cfg.dataset_name, cfg.version, tuple(audios))
    if cfg.partition is not None and cfg.partition.targets:
        m = partition_subsets(m, dict(cfg.partition.targets), dict(cfg.partition.ratios),
                              cfg.partition.seed)
    validate_manifest(m)
    return m


def doc_md5_from_record(rec: dict) -> str:
    if "md5" in rec:
        return rec["md5"]
    stub = SynthDoc(rec["aid"], rec["source"], "", 0.0,
                    tuple(TimedWord(w[0], float(w[1]), float(w[2])) for w in rec["spoken"]),
                    "", (), ())
    return doc_md5(stub)


def build_report(records: list[dict], m: Manifest, cfg: PipelineConfig) -> dict:
    errors = [{"aid": r["aid"], **r["error"]} for r in records if "error" in r]
    seg_stats = Counter()
    validation = {s: Counter() for s, _ in cfg.validation.policies}
    for r in records:
        seg_stats.update(r.get("segment_stats", {}))
        for v in r.get("validation", []):
            for s, res in v["results"].items():
                validation[s]["passed" if res["passed"] else "failed"] += 1
    report = {
        "documents": len(records),
        "failed_documents": len(errors),
        "failures_by_stage": dict(sorted(Counter(e["stage"] for e in errors).items())),
        "errors": errors,
        "segmentation": dict(sorted(seg_stats.items())),
        "validation": {s: {"passed": c["passed"], "failed": c["failed"]}
                       for s, c in validation.items()},
        "manifest": {
            "audios": len(m.audios),
            "segments": sum(1 for _ in m.segments),
            "hours": round(m.hours(), 6),
            "hours_by_subset": {s: round(m.hours(s), 6) for s in TRAIN_SUBSETS},
        },
    }
    curve = aggregate_curve(records, cfg)
    if curve:
        report["evaluation"] = {
            "curve": [asdict(p) for p in curve],
            "working_point": asdict(select_working_point(
                curve, cfg.evaluation.target_hours, cfg.evaluation.max_cap)),
        }
    return report


def aggregate_curve(records: list[dict], cfg: PipelineConfig) -> list[PRPoint]:
    caps = cfg.evaluation.caps
    totals = [FrameCounts() for _ in caps]
    hours = [0.0 for _ in caps]
    have_gold = False
    for r in records:
        for k, p in enumerate(r.get("evaluation", [])):
            hours[k] += p["hours"]
            if "counts" in p:
                have_gold = True
                totals[k] = totals[k] + FrameCounts(*p["counts"])
    if not have_gold:
        return []
    return [PRPoint(cap, round(t.precision(), 6),
                    round(t.recall(), 6) if t.human_speech else 0.0, round(h, 6))
            for cap, t, h in zip(caps, totals, hours)]


@dataclass
class RunResult:
    manifest: Manifest
    report: dict
    records: list


def run(cfg: PipelineConfig, jobs: int | None = None) -> RunResult:
    """Run every stage over the corpus and write manifest, report and dumps."""
    jobs = jobs_for(cfg) if jobs is None else jobs
    records = load_records(cfg.corpus)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dumps = {}
    records, d = run_stages(("normalize", "match", "align", "segment"), records, cfg, None, jobs)
    dumps.update(d)
    vocab = garbage_vocab_for(records, cfg)
    records, d = run_stages(("graph", "validate", "evaluate"), records, cfg, vocab, jobs)
    dumps.update(d)
    if cfg.dump_stages:
        for name in STAGES:
            write_records(out / f"{name}.jsonl", dumps[name])
    m = build_manifest(records, cfg)
    report = build_report(records, m, cfg)
    (out / "manifest.json").write_bytes(save_manifest(m))
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return RunResult(m, report, records)


def stage(cfg: PipelineConfig, name: str, in_path, out_path, jobs: int | None = None) -> int:
    """Run exactly one stage over a records file; returns 0."""
    if name not in STAGES:
        raise UnknownStageError(f"unknown stage {name!r}; expected one of {', '.join(STAGES)}")
    jobs = jobs_for(cfg) if jobs is None else jobs
    records = load_records(in_path)
    vocab = garbage_vocab_for(records, cfg) if name in CORPUS_STAGES else None
    _, dumps = run_stages((name,), records, cfg, vocab, jobs)
    write_records(out_path, dumps[name])
    return 0


def finalize(cfg: PipelineConfig, in_path, out_dir) -> RunResult:
    """Build manifest and report from evaluated records."""
    records = load_records(in_path)
    m = build_manifest(records, cfg)
    report = build_report(records, m, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_bytes(save_manifest(m))
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return RunResult(m, report, records)
