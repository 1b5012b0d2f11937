#!/usr/bin/env python3
"""Side-by-side category trajectories of one evaluation user under two variants."""

import argparse

from lerl import harness
from lerl.config import default_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--iterations", type=int, default=20)
    ap.add_argument("--user", type=int, default=0)
    ap.add_argument("--variants", nargs=2, default=["full", "wo_hsp"], choices=harness.VARIANTS)
    ap.add_argument("--rounds", type=int, default=6)
    args = ap.parse_args()

    cfg = default_config(args.seed, env={"list_length": 4}, catalog={"n_items": 64, "n_categories": 8},
                         training={"iterations": args.iterations})
    setup = harness.build_setup(cfg)
    names = setup.catalog.categories
    for v in args.variants:
        params = harness.train(cfg, v, setup=setup).params
        traj = harness.evaluate(params, cfg, args.user + 1, v, setup=setup).trajectories[args.user]
        t_int, r_cum, _ = traj.metrics()
        print(f"== {v}: T_int={t_int} R_cum={float(r_cum):.2f} overlaps={traj.consecutive_overlaps()}")
        for s in traj.steps[: args.rounds]:
            cats = ", ".join(names[c] for c in s["category_ids"])
            print(f"  round {s['t'] + 1:>2}  [{cats}]  reward {s['reward']:.2f}  budget {s['remaining_budget']}")


if __name__ == "__main__":
    main()
