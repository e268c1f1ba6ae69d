"""Sweep WER caps over a finished run and print the precision/recall curve.

Reads the ``evaluate`` stage dump of a run, so run_synth_pipeline.py (or
``corpusforge run``) must have been executed first.

    python3 scripts/pr_sweep.py demo_run/out/evaluate.jsonl --target-hours 0.05
"""
from __future__ import annotations

import argparse

from corpusforge.evaluator import curve_csv, select_working_point
from corpusforge.pipeline import EvaluationConfig, PipelineConfig, aggregate_curve, load_records


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("records", help="evaluate.jsonl from a pipeline run")
    ap.add_argument("--target-hours", type=float, default=0.0)
    ap.add_argument("--max-cap", type=float, default=4.0)
    args = ap.parse_args()

    records = load_records(args.records)
    # the caps were fixed by the run; recover them from the stored points
    caps = next((tuple(p["cap"] for p in r["evaluation"]) for r in records
                 if r.get("evaluation")), ())
    cfg = PipelineConfig(evaluation=EvaluationConfig(caps=caps))
    curve = aggregate_curve(records, cfg)
    if not curve:
        raise SystemExit("no gold labels in these records, nothing to sweep")
    print(curve_csv(curve), end="")
    wp = select_working_point(curve, args.target_hours, args.max_cap)
    print(f"# working point: cap={wp.cap:g} precision={wp.precision:.4f} "
          f"recall={wp.recall:.4f} hours={wp.retained_hours:.4f}"
          + (" shortfall" if wp.shortfall else ""))


if __name__ == "__main__":
    main()
