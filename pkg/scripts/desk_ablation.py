#!/usr/bin/env python3
"""Desk-scale ablation: all four variants on the synthetic 8-category world.

Writes report.csv / report.txt / trajectories.jsonl and the training curves
to --out. Defaults reproduce the pinned acceptance run (seed 42).
"""

import argparse
import logging
import time
from pathlib import Path

from lerl import harness
from lerl.config import default_config, dumps_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--sessions", type=int, default=200)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--variants", nargs="+", default=list(harness.VARIANTS), choices=harness.VARIANTS)
    ap.add_argument("--out", default="runs/desk_ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = default_config(
        args.seed,
        env={"list_length": 4, "max_session_length": 20},
        catalog={"n_items": 64, "n_categories": 8},
        planner={"m": 3},
        training={"iterations": args.iterations, "batch_episodes": args.batch,
                  "eval_sessions": args.sessions, "workers": args.workers},
        output_dir=args.out,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(dumps_config(cfg))

    t0 = time.perf_counter()
    res = harness.ablate(cfg, args.variants)
    harness.write_reports(out, list(res.reports.values()))
    with open(out / "curves.csv", "w") as fh:
        fh.write("variant,iteration,mean_R_cum\n")
        for v, tr in res.training.items():
            fh.writelines(f"{v},{i},{c!r}\n" for i, c in enumerate(tr.curve))

    print(res.table(), end="")
    full, base = res.reports.get("full"), res.reports.get("wo_hsp")
    if full and base:
        gain = full.aggregate("T_int")[0] / base.aggregate("T_int")[0] - 1
        print(f"\nfull vs wo_hsp: T_int {gain:+.1%}")
    for v, r in res.reports.items():
        overlaps = sum(t.consecutive_overlaps() for t in r.trajectories)
        print(f"{v:<9} consecutive-round category overlaps: {overlaps}")
    print(f"\n{time.perf_counter() - t0:.1f}s, outputs in {out}")


if __name__ == "__main__":
    main()
