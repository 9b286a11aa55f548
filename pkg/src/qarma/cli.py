"""Command-line front door: mine, generate, evaluate, and worker modes.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  QARMA_LOG
(error|info|debug) controls diagnostics on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import distributed, evaluation, generators
from .dataset import DatasetError, load_dataset, load_movielens
from .engine import EngineConfig, mine
from .rules import read_rule_lines, write_rule_lines


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("QARMA_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _fraction(name: str):
    def parse(text: str) -> float:
        value = float(text)
        if not 0.0 <= value <= 1.0:
            raise argparse.ArgumentTypeError(f"{name} must be in [0, 1], got {text}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qarma",
                                     description="Quantitative association rule mining")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mine = sub.add_parser("mine", help="mine all non-dominated rules from a history file")
    p_mine.add_argument("--input", required=True, help="history file (JSON lines)")
    p_mine.add_argument("--min-support", type=_fraction("--min-support"), required=True)
    p_mine.add_argument("--min-confidence", type=_fraction("--min-confidence"), required=True)
    p_mine.add_argument("--min-conviction", type=float, default=None)
    p_mine.add_argument("--ltf", default="confidence",
                        help="comma-separated metrics of the dominance comparison")
    p_mine.add_argument("--consequent-attr", required=True,
                        help="shared attribute constrained by rule consequents")
    p_mine.add_argument("--negate-attr", action="append", default=[],
                        help="augment this attribute with its negation (repeatable)")
    p_mine.add_argument("--max-len", type=int, default=3)
    p_mine.add_argument("--workers", type=int, default=1)
    p_mine.add_argument("--batch", type=int, default=128)
    p_mine.add_argument("--mode", choices=["geq", "eq"], default="geq")
    p_mine.add_argument("--widest", action="store_true")
    p_mine.add_argument("--workers-remote", default=None,
                        help="comma-separated host:port worker endpoints")
    p_mine.add_argument("--out", required=True, help="rules output file")
    p_mine.add_argument("--report", default=None, help="run report output file")

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen_sub = p_gen.add_subparsers(dest="generator", required=True)

    p_ecom = gen_sub.add_parser("ecom", help="e-commerce market simulation")
    p_ecom.add_argument("--items", type=int, default=2000)
    p_ecom.add_argument("--users", type=int, default=2000)
    p_ecom.add_argument("--elastic", type=_fraction("--elastic"), default=0.51)
    p_ecom.add_argument("--cycles", type=int, default=10)
    p_ecom.add_argument("--purchases", type=int, default=10)
    p_ecom.add_argument("--pareto-shape", type=float, default=1.0)
    p_ecom.add_argument("--seed", type=int, default=0)
    p_ecom.add_argument("--out", required=True, help="dataset output file")
    p_ecom.add_argument("--state", default=None,
                        help="market config file for later discounting runs")

    p_rare = gen_sub.add_parser("rare", help="rare-event predictive-maintenance data")
    p_rare.add_argument("--dims", type=int, default=20)
    p_rare.add_argument("--train", type=int, default=35000)
    p_rare.add_argument("--anoms", type=int, default=100)
    p_rare.add_argument("--sparsity", type=_fraction("--sparsity"), default=0.9)
    p_rare.add_argument("--anomaly-dims", type=int, default=3)
    p_rare.add_argument("--band", type=float, default=0.01)
    p_rare.add_argument("--seed", type=int, default=0)
    p_rare.add_argument("--out-train", required=True)
    p_rare.add_argument("--out-test", required=True)
    p_rare.add_argument("--out-labels", required=True)

    p_eval = sub.add_parser("eval", help="apply mined rules")
    eval_sub = p_eval.add_subparsers(dest="task", required=True)

    p_cov = eval_sub.add_parser("coverage", help="fraction of histories covered")
    p_cov.add_argument("--rules", required=True)
    p_cov.add_argument("--data", required=True)
    p_cov.add_argument("--shared-attr", required=True)

    p_roc = eval_sub.add_parser("roc", help="detection/false-alarm sweep")
    p_roc.add_argument("--rules", required=True)
    p_roc.add_argument("--data", required=True)
    p_roc.add_argument("--shared-attr", required=True)
    p_roc.add_argument("--labels", required=True)
    p_roc.add_argument("--target", required=True, help="consequent item to detect")
    p_roc.add_argument("--threshold", type=float, required=True)
    p_roc.add_argument("--cuts", default="0.85,0.9,0.95,0.99",
                       help="comma-separated confidence cuts")
    p_roc.add_argument("--out", default=None, help="CSV output (default: stdout)")

    p_res = eval_sub.add_parser("reserve", help="reservation-price estimates")
    p_res.add_argument("--rules", required=True)
    p_res.add_argument("--data", required=True)
    p_res.add_argument("--shared-attr", required=True)
    p_res.add_argument("--item", required=True)
    p_res.add_argument("--user", default=None, help="default: every user")
    p_res.add_argument("--min-conf", type=_fraction("--min-conf"), default=0.7)

    p_disc = eval_sub.add_parser("discount", help="discounting comparison table")
    p_disc.add_argument("--rules", required=True)
    p_disc.add_argument("--state", required=True, help="market config file from gen ecom")
    p_disc.add_argument("--levels", default="5,10,15,20,25,30,35,40",
                        help="comma-separated discount percents")
    p_disc.add_argument("--cycles", type=int, default=100)
    p_disc.add_argument("--min-conf", type=_fraction("--min-conf"), default=0.7)
    p_disc.add_argument("--out", default=None, help="CSV output (default: stdout)")

    p_worker = sub.add_parser("worker", help="serve mining tasks for a coordinator")
    p_worker.add_argument("--listen", required=True, help="host:port to listen on")
    p_worker.add_argument("--data", required=True, help="local copy of the dataset file")

    return parser


def _cmd_mine(args) -> int:
    thresholds = {"confidence": args.min_confidence}
    if args.min_conviction is not None:
        thresholds["conviction"] = args.min_conviction
    config = EngineConfig(
        s_min=args.min_support,
        thresholds=thresholds,
        ltf_metrics=tuple(m.strip() for m in args.ltf.split(",") if m.strip()),
        shared_attr=args.consequent_attr,
        max_len=args.max_len,
        workers=args.workers,
        batch=args.batch,
        mode=args.mode,
        widest=args.widest,
        negate_attrs=tuple(args.negate_attr),
    )
    if args.workers_remote:
        remotes = [r.strip() for r in args.workers_remote.split(",") if r.strip()]
        scored, report = distributed.mine_distributed(args.input, config, remotes)
    else:
        dataset = load_dataset(args.input, args.consequent_attr)
        scored, report = mine(dataset, config)
    n = write_rule_lines(scored, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    print(f"{n} rules -> {args.out}")
    return 0


def _cmd_gen(args) -> int:
    if args.generator == "ecom":
        config = generators.MarketConfig(
            n_items=args.items,
            n_users=args.users,
            elastic_frac=args.elastic,
            cycles=args.cycles,
            purchases_per_cycle=args.purchases,
            pareto_shape=args.pareto_shape,
            seed=args.seed,
        )
        dataset, state = generators.gen_market(config)
        dataset.write(args.out)
        if args.state:
            with open(args.state, "w", encoding="utf-8") as fh:
                json.dump({
                    "items": config.n_items, "users": config.n_users,
                    "elastic": config.elastic_frac, "cycles": config.cycles,
                    "purchases": config.purchases_per_cycle,
                    "pareto_shape": config.pareto_shape,
                    "price_range": list(config.price_range), "seed": config.seed,
                }, fh)
                fh.write("\n")
        print(f"{len(dataset)} histories, {dataset.transaction_count()} transactions -> {args.out}")
    else:
        config = generators.RareEventConfig(
            dims=args.dims,
            sparsity=args.sparsity,
            n_train=args.train,
            n_anomalies=args.anoms,
            anomaly_dims=args.anomaly_dims,
            extremal_band=args.band,
            seed=args.seed,
        )
        train, test, labels = generators.gen_rare_event(config)
        train.write(args.out_train)
        test.write(args.out_test)
        with open(args.out_labels, "w", encoding="utf-8") as fh:
            for user, anomaly in labels.items():
                fh.write(json.dumps({"u": user, "anomaly": anomaly}) + "\n")
        print(f"{len(train)} train + {len(test)} test histories")
    return 0


def market_state_from_file(path: str | Path) -> generators.MarketState:
    """Rebuild the market state recorded by ``gen ecom --state`` (the
    simulation is deterministic, so replaying the config reproduces it)."""
    with open(path, "r", encoding="utf-8") as fh:
        rec = json.load(fh)
    config = generators.MarketConfig(
        n_items=rec["items"], n_users=rec["users"], elastic_frac=rec["elastic"],
        cycles=rec["cycles"], purchases_per_cycle=rec["purchases"],
        pareto_shape=rec["pareto_shape"], price_range=tuple(rec["price_range"]),
        seed=rec["seed"],
    )
    _, state = generators.gen_market(config)
    return state


def _load_labels(path) -> dict[str, bool]:
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                labels[rec["u"]] = bool(rec["anomaly"])
    return labels


def _write_lines(lines, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            print(line)


def _cmd_eval(args) -> int:
    scored = read_rule_lines(args.rules)
    if args.task == "coverage":
        dataset = load_dataset(args.data, args.shared_attr)
        print(f"{evaluation.coverage(scored, dataset):.6g}")
    elif args.task == "roc":
        dataset = load_dataset(args.data, args.shared_attr)
        labels = _load_labels(args.labels)
        if not labels:
            raise DatasetError(f"no labels in {args.labels}")
        cuts = [float(c) for c in args.cuts.split(",") if c.strip()]
        rows = evaluation.roc_sweep(scored, dataset, args.target, args.threshold,
                                    labels, cuts)
        _write_lines(evaluation.roc_lines(rows), args.out)
    elif args.task == "reserve":
        dataset = load_dataset(args.data, args.shared_attr)
        users = [args.user] if args.user else [h.user for h in dataset.histories]
        for user in users:
            hist = dataset.histories[dataset.user_index[user]]
            est = evaluation.estimate_reservation_price(scored, hist, args.item,
                                                        args.min_conf)
            print(f"{user},{'' if est is None else format(est, '.6g')}")
    else:  # discount
        state = market_state_from_file(args.state)
        dataset, _ = generators.gen_market(state.config)
        levels = [float(x) / 100.0 for x in args.levels.split(",") if x.strip()]
        rows = evaluation.report_discounting(state, dataset, scored, levels,
                                             cycles=args.cycles, min_conf=args.min_conf)
        _write_lines(evaluation.discount_report_lines(rows), args.out)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "mine":
            return _cmd_mine(args)
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "worker":
            distributed.serve_worker(args.listen, args.data)
            return 0
    except (OSError, ValueError, KeyError) as exc:
        print(f"qarma: error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
