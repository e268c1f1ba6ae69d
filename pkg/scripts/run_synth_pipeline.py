"""Generate a synthetic corpus and push it through the whole pipeline.

    python3 scripts/run_synth_pipeline.py --workdir /tmp/demo
"""
from __future__ import annotations

import argparse
import json
import shutil
from dataclasses import replace
from pathlib import Path

from corpusforge.pipeline import PipelineConfig, run
from corpusforge.synth import SynthSpec, generate, write_corpus

HERE = Path(__file__).resolve().parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="demo_run")
    ap.add_argument("--spec", default=str(HERE / "example_spec.json"))
    ap.add_argument("--config", default=str(HERE / "example_config.json"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    work = Path(args.workdir)
    shutil.rmtree(work, ignore_errors=True)
    spec = SynthSpec.from_json(json.loads(Path(args.spec).read_text()))
    write_corpus(generate(spec), work / "corpus", spec)
    shutil.copy(args.config, work / "config.json")

    cfg = PipelineConfig.from_json(json.loads((work / "config.json").read_text()), base_dir=work)
    res = run(replace(cfg, jobs=args.jobs), jobs=args.jobs)
    rep = res.report
    print(f"documents      {rep['documents']} ({rep['failed_documents']} failed)")
    print(f"segments       {rep['manifest']['segments']}  ({rep['manifest']['hours']:.3f} h)")
    for subset, c in rep["validation"].items():
        total = c["passed"] + c["failed"]
        print(f"{subset:<14} {c['passed']}/{total} passed")
    if "evaluation" in rep:
        wp = rep["evaluation"]["working_point"]
        print(f"working point  cap={wp['cap']:g} P={wp['precision']:.4f} "
              f"R={wp['recall']:.4f}{' (shortfall)' if wp['shortfall'] else ''}")
    print(f"outputs in     {cfg.out_dir}")


if __name__ == "__main__":
    main()
