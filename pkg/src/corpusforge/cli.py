"""Command-line entry point: ``corpusforge <subcommand> ...``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .align_graph import UNK_WORD, FillerSet, GarbageVocab, GraphWeights, build_graph, validate_graph
from .chunk_match import TimedHypothesis
from .errors import ConfigError, CorpusForgeError
from .evaluator import HumanDoc, LabeledSegment, ScoredSegment, curve_csv, pr_curve
from .metadata import load_manifest, verify_manifest
from .segmenter import CandidateSegment, SegmentRules, segment_transcript
from .sw_align import TimedTranscript
from .synth import SynthScorer, SynthSpec, generate, write_corpus
from .textnorm import normalize_text
from .validator import RewritePolicy, validate_segment

log = logging.getLogger("corpusforge")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _caps(v: str) -> list[float]:
    try:
        return [float(x) for x in v.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def cmd_normalize(args) -> int:
    src = open(args.inp, "rb") if args.inp else sys.stdin.buffer
    dst = open(args.out, "w") if args.out else sys.stdout
    try:
        for line in src:
            seq = normalize_text(line.rstrip(b"\r\n"))
            dst.write((json.dumps(seq.to_json()) if args.json else seq.render()) + "\n")
    finally:
        if args.inp:
            src.close()
        if args.out:
            dst.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec.from_json(json.loads(Path(args.spec).read_text()))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad synth spec: {e}") from e
    docs = generate(spec)
    write_corpus(docs, args.out, spec)
    log.info("wrote %d documents to %s", len(docs), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    from .pipeline import load_config, run
    cfg = load_config(args.config)
    res = run(cfg, jobs=args.jobs)
    log.info("manifest: %d segments, %.3f h", res.report["manifest"]["segments"],
             res.report["manifest"]["hours"])
    return EXIT_OK


def cmd_stage(args) -> int:
    from .pipeline import PipelineConfig, load_config, stage
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return stage(cfg, args.name, args.inp, args.out, jobs=args.jobs)


def cmd_finalize(args) -> int:
    from .pipeline import PipelineConfig, finalize, load_config
    cfg = load_config(args.config) if args.config else PipelineConfig()
    finalize(cfg, args.inp, args.out_dir)
    return EXIT_OK


def cmd_segment(args) -> int:
    tt = TimedTranscript.from_json(json.loads(Path(args.inp).read_text()))
    rules = SegmentRules(args.sil_thresh, args.punct_pause, args.max_len, args.boundary_sil)
    stats = Counter()
    segs = segment_transcript(tt, rules, prefix=args.prefix, stats=stats)
    with _output(args.out) as f:
        for s in segs:
            f.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
    log.info("segments: %s", dict(stats))
    return EXIT_OK


def _output(path):
    return open(path, "w") if path else contextlib.nullcontext(sys.stdout)


def _read_words(path) -> list[str]:
    return [w for line in Path(path).read_text().splitlines() for w in line.split()]


def cmd_build_graph(args) -> int:
    text = args.ref if args.ref is not None else Path(args.ref_file).read_text()
    ref = normalize_text(text)
    garbage = GarbageVocab(tuple(dict.fromkeys(_read_words(args.garbage)))[:1000]
                           if args.garbage else ())
    fillers = FillerSet() if args.fillers else FillerSet(())
    g = build_graph(ref, args.order, GraphWeights(), garbage, fillers, args.window,
                    args.fillers, UNK_WORD if args.unk else None)
    if args.dump:
        Path(args.dump).write_text(g.dump())
    report = validate_graph(g)
    print(json.dumps({"summary": g.summary(), "problems": [list(p) for p in report]},
                     sort_keys=True))
    return EXIT_OK if not report else EXIT_FAIL


def cmd_validate(args) -> int:
    """Validate the candidate segments of segmented records (``segment`` stage output)."""
    from .pipeline import PipelineConfig, graph_for, garbage_vocab_for, load_records
    cfg = PipelineConfig()
    records = load_records(args.inp)
    vocab = garbage_vocab_for(records, cfg)
    policy = RewritePolicy(args.fillers, args.disfluency)
    fillers = FillerSet(tuple(cfg.graph.fillers))
    n = passed = 0
    with _output(args.results) as out:
        for rec in records:
            if "error" in rec or "segments" not in rec:
                continue
            hyp = TimedHypothesis.from_json({"duration": rec["duration"], "words": rec["spoken"]})
            scorer = SynthScorer.from_words(hyp.words, rec["duration"])
            for sj in rec["segments"]:
                seg = CandidateSegment.from_json(sj)
                g = graph_for(seg, cfg, vocab)
                r = validate_segment(seg, scorer.window(seg.begin_s, seg.end_s), g, args.cap,
                                     policy, args.beam, fillers, args.cap_exclusive)
                n += 1
                passed += r.passed
                out.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    log.info("validated %d segments, %d passed", n, passed)
    return EXIT_OK


def _human_docs(m) -> dict[str, HumanDoc]:
    out = {}
    for a in m.audios:
        segs = tuple(LabeledSegment(s.begin_time, s.end_time,
                                    tuple((w.word, w.begin, w.end) for w in (s.words or ())))
                     for s in a.segments)
        out[a.aid] = HumanDoc(round(a.duration_s * 100), segs)
    return out


def cmd_evaluate(args) -> int:
    hyp = load_manifest(Path(args.hyp_manifest).read_bytes())
    ref = load_manifest(Path(args.ref_manifest).read_bytes())
    corpus = [ScoredSegment(a.aid, s.begin_time, s.end_time, s.wer_estimate,
                            tuple((w.word, w.begin, w.end) for w in (s.words or ())))
              for a in hyp.audios for s in a.segments]
    curve = pr_curve(corpus, _human_docs(ref), sorted(args.caps))
    text = curve_csv(curve)
    if args.curve_out:
        Path(args.curve_out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    m = load_manifest(Path(args.manifest).read_bytes())
    rep = verify_manifest(m, args.root, jobs=args.jobs)
    text = json.dumps(rep.to_json(), indent=1, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if rep.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corpusforge", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("normalize", help="normalize raw transcript lines")
    s.add_argument("--in", dest="inp")
    s.add_argument("--out")
    s.add_argument("--json", action="store_true", help="emit token sequences as JSON")
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run the whole pipeline")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("stage", help="run one pipeline stage on dumped records")
    s.add_argument("name")
    s.add_argument("--config")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_stage)

    s = sub.add_parser("finalize", help="write manifest and report from evaluated records")
    s.add_argument("--config")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_finalize)

    s = sub.add_parser("segment", help="cut a timed transcript into candidate segments")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out")
    s.add_argument("--prefix", default="seg")
    s.add_argument("--sil-thresh", type=float, default=1.0)
    s.add_argument("--punct-pause", type=float, default=0.2)
    s.add_argument("--max-len", type=float, default=20.0)
    s.add_argument("--boundary-sil", type=float, default=0.15)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("build-graph", help="build and check an alignment graph")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--ref")
    g.add_argument("--ref-file")
    s.add_argument("--order", type=int, default=4)
    s.add_argument("--window", type=int, default=10)
    s.add_argument("--garbage", help="file of garbage words, most frequent first")
    s.add_argument("--fillers", type=_onoff, default=True)
    s.add_argument("--unk", action="store_true")
    s.add_argument("--dump")
    s.set_defaults(func=cmd_build_graph)

    s = sub.add_parser("validate", help="validate candidate segments")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--cap", type=float, default=0.0)
    s.add_argument("--fillers", type=_onoff, default=False)
    s.add_argument("--disfluency", type=_onoff, default=False)
    s.add_argument("--beam", type=int, default=64)
    s.add_argument("--results")
    s.add_argument("--cap-exclusive", action="store_true")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("evaluate", help="frame-level PR curve against a reference manifest")
    s.add_argument("--hyp-manifest", required=True)
    s.add_argument("--ref-manifest", required=True)
    s.add_argument("--caps", type=_caps, default=[0.0, 1.0, 2.0, 4.0, 8.0])
    s.add_argument("--curve-out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("verify", help="check audio files against a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--root", required=True)
    s.add_argument("--report")
    s.add_argument("--jobs", type=int, default=4)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except CorpusForgeError as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
