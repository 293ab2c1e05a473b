"""Run the evaluation fleet across seeds plus the grouping fixture.

Usage:
    python scripts/run_fixture.py [--seeds 1 2 3] [--out runs]

Writes one artifact tree per run under --out and a combined summary JSON
next to them. Each run is deterministic for its seed.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from ctxae.config import load_config
from ctxae.pipeline import run_all

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--skip-twin", action="store_true")
    args = ap.parse_args()

    summary: dict = {"fixture": {}, "twin": None}
    for seed in args.seeds:
        out_dir = args.out / f"fixture_s{seed}"
        cfg = load_config(ROOT / "configs" / "fixture.yaml",
                          seed=seed, out_dir=out_dir)
        t0 = time.time()
        report = run_all(cfg)
        summary["fixture"][seed] = {
            "elapsed_s": round(time.time() - t0, 1),
            "models": {k: {"recall": m["truth"]["per_kind"],
                           "fpr_by_context": m["fpr_by_context"]}
                       for k, m in report["models"].items()},
        }
        print(f"fixture seed {seed}: {summary['fixture'][seed]['elapsed_s']}s")

    if not args.skip_twin:
        cfg = load_config(ROOT / "configs" / "twin.yaml",
                          out_dir=args.out / "twin_s1")
        t0 = time.time()
        report = run_all(cfg)
        summary["twin"] = {
            "elapsed_s": round(time.time() - t0, 1),
            "grouping": report.get("grouping"),
        }
        print(f"twin: {summary['twin']['elapsed_s']}s")

    out_path = args.out / "summary.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
