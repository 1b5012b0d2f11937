#!/usr/bin/env python3
"""Training curves for the low-level learner.

With a single user the preferences are stationary and PPO should visibly
improve; with a fresh population each episode the signal is per-session only.
Prints block means of the per-iteration mean R_cum.
"""

import argparse

import numpy as np

from lerl import harness
from lerl.config import default_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--iterations", type=int, default=60)
    ap.add_argument("--users", type=int, nargs="+", default=[1, 100])
    ap.add_argument("--variant", default="wo_hsp", choices=harness.VARIANTS)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--block", type=int, default=10)
    args = ap.parse_args()

    for n_users in args.users:
        cfg = default_config(
            args.seed,
            env={"list_length": 4, "n_users": n_users},
            catalog={"n_items": 64, "n_categories": 8},
            policy={"lr": args.lr},
            training={"iterations": args.iterations},
        )
        curve = np.array(harness.train(cfg, args.variant).curve)
        n = len(curve) // args.block * args.block
        blocks = curve[:n].reshape(-1, args.block).mean(axis=1)
        print(f"users={n_users:<4} " + " ".join(f"{b:6.2f}" for b in blocks))


if __name__ == "__main__":
    main()
