"""``lerl`` command line: gen-data, train, eval, ablate, case-study, check."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from lerl import harness
from lerl.catalog import synthetic_catalog, write_catalog
from lerl.checks import CHECKS, run_checks
from lerl.config import RunConfig, default_config, dumps_config, parse_config
from lerl.errors import ConfigError, IoError, LerlError
from lerl.lpl import load_checkpoint
from lerl.numeric import RngStream
from lerl.simenv import generate_population

log = logging.getLogger("lerl")

EXIT_OK, EXIT_DOMAIN, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so ``main`` owns the exit status."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lerl", description="Hierarchical planner + PPO recommender simulation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override training.seed")
        sp.add_argument("--out", help="output directory (overrides output_dir)")

    g = sub.add_parser("gen-data", help="write a synthetic catalog and user population")
    common(g, config_required=False)

    t = sub.add_parser("train", help="train one variant and evaluate it")
    common(t)
    t.add_argument("--variant", default="full", choices=harness.VARIANTS)
    t.add_argument("--workers", type=int, help="episode collection threads")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--variant", default="full", choices=harness.VARIANTS)
    e.add_argument("--sessions", type=int)
    e.add_argument("--checkpoint", help="defaults to <out>/checkpoint.bin")

    a = sub.add_parser("ablate", help="train and evaluate all four variants")
    common(a)
    a.add_argument("--sessions", type=int)

    c = sub.add_parser("case-study", help="export one evaluation session per variant")
    common(c)
    c.add_argument("--variant", action="append", choices=harness.VARIANTS,
                   help="repeatable; defaults to full and wo_hsp")
    c.add_argument("--user", type=int, default=0, help="index of the evaluation user")

    k = sub.add_parser("check", help="run the oracle suite")
    k.add_argument("names", nargs="*", help="subset of checks")
    return p


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = default_config(0 if args.seed is None else args.seed)
    if args.seed is not None:
        cfg = cfg.replace(training={"seed": args.seed})
    if args.out:
        cfg = cfg.replace(output_dir=args.out)
    return cfg


def prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.toml").write_text(dumps_config(cfg), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc}") from exc
    return out


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out = prepare_out(cfg)
    seed = cfg.training.seed
    cat = synthetic_catalog(cfg.catalog.n_items, cfg.catalog.n_categories, cfg.policy.dim,
                            RngStream(seed, harness.CATALOG_STREAM))
    write_catalog(cat, out / "catalog.csv")
    users = generate_population(cfg.env.n_users, cat, RngStream(seed, harness.POPULATION_STREAM))
    with open(out / "population.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_noise_seed"] + [f"affinity_{c}" for c in cat.categories])
        for u in users:
            w.writerow([u.user_id, u.item_noise_seed] + [repr(a) for a in u.category_affinity])
    print(f"wrote {cat.n_items} items, {len(users)} users to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = prepare_out(cfg)
    setup = harness.build_setup(cfg)
    res = harness.train(cfg, args.variant, workers=args.workers, checkpoint_path=out / "checkpoint.bin",
                        setup=setup)
    (out / "curve.csv").write_text(
        "iteration,mean_R_cum\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(res.curve)), encoding="utf-8")
    report = harness.evaluate(res.params, cfg, variant=args.variant, setup=setup)
    harness.write_reports(out, [report])
    print(harness.report_text([report]), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    out = prepare_out(cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
    params, header = load_checkpoint(ckpt)
    if header.get("fingerprint") != cfg.fingerprint:
        log.warning("checkpoint fingerprint %s differs from config %s", header.get("fingerprint"), cfg.fingerprint)
    report = harness.evaluate(params, cfg, args.sessions, args.variant)
    harness.write_reports(out, [report])
    print(harness.report_text([report]), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    out = prepare_out(cfg)
    res = harness.ablate(cfg, n_sessions=args.sessions)
    harness.write_reports(out, list(res.reports.values()))
    print(res.table(), end="")
    return EXIT_OK


def cmd_case_study(args) -> int:
    cfg = resolve_config(args)
    out = prepare_out(cfg)
    setup = harness.build_setup(cfg)
    for v in args.variant or ["full", "wo_hsp"]:
        res = harness.train(cfg, v, setup=setup)
        report = harness.evaluate(res.params, cfg, args.user + 1, v, setup=setup)
        traj = report.trajectories[args.user]
        path = out / f"case_study_{v}.jsonl"
        harness.case_study_export(traj, path)
        cats = " | ".join(",".join(setup.catalog.categories[c] for c in s["category_ids"]) for s in traj.steps)
        print(f"{v}: T_int={len(traj.steps)} overlaps={traj.consecutive_overlaps()} -> {path}")
        log.info("%s rounds: %s", v, cats)
    return EXIT_OK


def cmd_check(args) -> int:
    unknown = [n for n in args.names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s): {', '.join(unknown)}; available: {', '.join(CHECKS)}")
    results = run_checks(args.names or None)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_DOMAIN


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "case-study": cmd_case_study,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LerlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
