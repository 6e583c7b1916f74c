"""Command-line entry point.

Subcommands: prepare, train, evaluate, ablate, sweep, gradcheck. Exit
codes: 0 success, 1 run failure, 2 usage error. Every run directory gets
the fully resolved configuration written before any work starts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from . import config as cfgmod
from . import data as datamod
from .checkpoint import load_checkpoint
from .errors import CheckpointError, ConfigError, ContractError, DomainError, TrainingAborted
from .evaluation import average_reports, evaluate, metrics_csv, metrics_table
from .gradcheck import finite_difference_check, run_primitive_suite
from .instances import make_eval_instances
from .model import VARIANTS, loss_gradcheck_builder, similarity_gradcheck_builder
from .training import history_csv, train

log = logging.getLogger("logicrec")

GRADCHECK_TOL = 1e-4

_SWEEP_PARAMS = {"d": "d", "l": "layers", "n": "n_max", "lambda_p": "lambda_rule"}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--d", type=int, help="embedding dimension")
    p.add_argument("--layers", type=int, help="self-attention layers")
    p.add_argument("--heads", type=int, help="attention heads")
    p.add_argument("--n-max", dest="n_max", type=int, help="max history length")
    p.add_argument("--phi", type=float, help="similarity temperature")
    p.add_argument("--lambda-rule", dest="lambda_rule", type=float,
                   help="rule loss weight")
    p.add_argument("--lambda-length", dest="lambda_length", type=float,
                   help="vector length loss weight")
    p.add_argument("--lambda-params", dest="lambda_params", type=float,
                   help="parameter restriction loss weight")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int, help="early stopping patience")
    p.add_argument("--num-eval-negatives", dest="num_eval_negatives", type=int)


def _overrides(args: argparse.Namespace) -> dict:
    keys = set(cfgmod.DEFAULTS)
    return {k: v for k, v in vars(args).items() if k in keys and v is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logicrec",
        description="Logic-query recommender: data preparation, training, "
                    "evaluation, ablations, sweeps, gradient checking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse a raw dataset into a prepared directory")
    p.add_argument("--dataset", required=True, choices=datamod.FORMATS)
    p.add_argument("--input", required=True, help="raw dataset file")
    p.add_argument("--out", required=True, help="prepared-dataset directory")
    p.add_argument("--threshold", type=float, default=datamod.DEFAULT_THRESHOLD)
    p.add_argument("--dedupe", action="store_true",
                   help="drop repeated (item, timestamp) events per user")
    p.add_argument("--seed", type=int, default=0, help="recorded default run seed")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the full model on a prepared dataset")
    p.add_argument("--data", required=True, help="prepared-dataset directory")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--seed", type=int, help="training seed")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train, variant_override=None)

    p = sub.add_parser("evaluate", help="rank held-out targets with a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="metrics output directory")
    p.add_argument("--split", choices=("validation", "test"), default="test")
    p.add_argument("--seed", type=int,
                   help="candidate sampling seed (default: checkpoint seed)")
    p.add_argument("--num-eval-negatives", dest="num_eval_negatives", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train a reduced model variant")
    p.add_argument("--variant", required=True, choices=("q", "e", "p"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="run output directory")
    p.add_argument("--seed", type=int)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train across one hyperparameter's values")
    p.add_argument("--param", required=True, choices=sorted(_SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", help="comma-separated seeds (default 1,2,3)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="sweep output directory")
    p.add_argument("--parallel", type=int, default=1,
                   help="concurrent runs (default sequential)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def cmd_prepare(args) -> int:
    split, stats = datamod.prepare(args.dataset, args.input, threshold=args.threshold,
                                   dedupe=args.dedupe, seed=args.seed)
    out = datamod.save_prepared(split, cfgmod.output_dir(args.out))
    m = split.manifest
    sizes = split.split_sizes()
    print(f"prepared {out}")
    print(f"  users {m['num_users']}  items {m['num_items']}  "
          f"interactions {m['num_interactions']}  density {m['density_pct']}%")
    print(f"  split sizes: train {sizes['train']}  validation {sizes['validation']}  "
          f"test {sizes['test']}")
    if stats.skipped:
        print(f"  skipped {stats.skipped} malformed line(s)")
    return 0


def _train_once(data_dir, cfg: dict, seed: int, variant: str, out_dir: Path):
    """Train + evaluate one (config, seed); returns (run, val_report, test_report)."""
    split = datamod.load_prepared(data_dir)
    mc = cfgmod.to_model_config(cfg, seed=seed, variant=variant)
    run = train(mc, split, seed, out_dir=out_dir,
                num_eval_negatives=cfg["num_eval_negatives"])
    (out_dir / f"history_seed{seed}.csv").write_text(history_csv(run), "utf-8")
    ks = cfgmod.parse_int_list(cfg["ks"], "ks")
    val = make_eval_instances(split, mc.n_max, datamod.SPLIT_VAL, seed,
                              num_negatives=cfg["num_eval_negatives"])
    test = make_eval_instances(split, mc.n_max, datamod.SPLIT_TEST, seed,
                               num_negatives=cfg["num_eval_negatives"])
    val_report = evaluate(run.state, val, ks=ks)
    test_report = evaluate(run.state, test, ks=ks)
    return run, val_report, test_report


def cmd_train(args) -> int:
    variant = getattr(args, "variant", None) or "full"
    cfg = cfgmod.resolve(getattr(args, "config", None), _overrides(args))
    cfg["variant"] = variant
    out_dir = cfgmod.output_dir(args.out or cfg["out"])
    cfgmod.echo_config(cfg, out_dir)
    seed = int(cfg["seed"])
    run, val_report, test_report = _train_once(args.data, cfg, seed, variant, out_dir)
    ks = cfgmod.parse_int_list(cfg["ks"], "ks")
    rows = [(seed, "validation", k, val_report) for k in ks]
    rows += [(seed, "test", k, test_report) for k in ks]
    (out_dir / "metrics.csv").write_text(metrics_csv(rows), "utf-8")
    table = metrics_table([(f"validation seed {seed}", val_report),
                           (f"test seed {seed}", test_report)])
    (out_dir / "metrics.txt").write_text(table, "utf-8")
    print(table, end="")
    print(f"best epoch {run.best_epoch} (val NDCG@10 {run.best_val_ndcg10:.4f}); "
          f"checkpoint {run.checkpoint_path}")
    return 0


def cmd_evaluate(args) -> int:
    split = datamod.load_prepared(args.data)
    expected = datamod.manifest_sha256(split.manifest)
    try:
        state, _ = load_checkpoint(args.checkpoint, expected_manifest_hash=expected)
    except CheckpointError as exc:
        log.error("%s", exc)
        log.error("dataset manifest: %s", json.dumps(split.manifest, sort_keys=True))
        return 1
    if state.num_users != split.num_users or state.num_items != split.num_items:
        log.error("checkpoint id spaces (%d users, %d items) do not match dataset "
                  "(%d users, %d items)", state.num_users, state.num_items,
                  split.num_users, split.num_items)
        return 1
    seed = args.seed if args.seed is not None else state.config.seed
    which = datamod.SPLIT_CODES[args.split]
    negs = args.num_eval_negatives or 100
    instances = make_eval_instances(split, state.config.n_max, which, seed,
                                    num_negatives=negs)
    report = evaluate(state, instances)
    rows = [(seed, args.split, k, report) for k in sorted(report.ndcg)]
    table = metrics_table([(f"{args.split} seed {seed}", report)])
    print(table, end="")
    if args.out:
        out_dir = cfgmod.output_dir(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(metrics_csv(rows), "utf-8")
        (out_dir / "metrics.txt").write_text(table, "utf-8")
    return 0


def _sweep_worker(payload: dict) -> dict:
    out_dir = Path(payload["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    run, _, test_report = _train_once(
        payload["data"], payload["cfg"], payload["seed"], payload["variant"], out_dir)
    return {
        "param": payload["param"], "value": payload["value"], "seed": payload["seed"],
        "ndcg5": test_report.ndcg.get(5), "hr5": test_report.hr.get(5),
        "ndcg10": test_report.ndcg.get(10), "hr10": test_report.hr.get(10),
        "n_instances": test_report.count, "best_epoch": run.best_epoch,
    }


def _sweep_row_text(row: dict) -> str:
    return (f"{row['param']},{row['value']},{row['seed']},{row['ndcg5']:.6f},"
            f"{row['hr5']:.6f},{row['ndcg10']:.6f},{row['hr10']:.6f},"
            f"{row['n_instances']},{row['best_epoch']}")


def cmd_sweep(args) -> int:
    cfg = cfgmod.resolve(getattr(args, "config", None), _overrides(args))
    out_dir = cfgmod.output_dir(args.out or cfg["out"])
    cfgmod.echo_config(cfg, out_dir)
    field = _SWEEP_PARAMS[args.param]
    if args.param == "lambda_p":
        values = cfgmod.parse_float_list(args.values, "values")
    else:
        values = cfgmod.parse_int_list(args.values, "values")
    seeds = cfgmod.parse_int_list(args.seeds or cfg["seeds"], "seeds")

    jobs = []
    for value in values:
        for seed in seeds:
            run_cfg = dict(cfg)
            run_cfg[field] = value
            jobs.append({
                "data": args.data, "cfg": run_cfg, "seed": seed,
                "variant": cfg["variant"], "param": args.param, "value": value,
                "out_dir": str(out_dir / f"{args.param}_{value}" / f"seed_{seed}"),
            })

    header = "param,value,seed,ndcg5,hr5,ndcg10,hr10,n_instances,best_epoch"
    csv_path = out_dir / "sweep.csv"
    csv_path.write_text(header + "\n", "utf-8")
    rows = []

    def record(row: dict) -> None:
        rows.append(row)
        with open(csv_path, "a", encoding="utf-8") as fh:  # partial results persist
            fh.write(_sweep_row_text(row) + "\n")
        print(_sweep_row_text(row))

    print(header)
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [pool.submit(_sweep_worker, job) for job in jobs]
            for fut in as_completed(futures):
                record(fut.result())
    else:
        for job in jobs:
            record(_sweep_worker(job))

    rows.sort(key=lambda r: (str(r["value"]), r["seed"]))
    csv_path.write_text(header + "\n" + "".join(_sweep_row_text(r) + "\n" for r in rows),
                        "utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_primitive_suite(seed=args.seed, epsilon=args.epsilon)
    for variant in VARIANTS:
        builder = loss_gradcheck_builder(variant=variant, seed=args.seed)
        results[f"loss_graph/{variant}"] = finite_difference_check(
            builder, epsilon=args.epsilon)
    results["similarity_head"] = finite_difference_check(
        similarity_gradcheck_builder(seed=args.seed), epsilon=args.epsilon)
    worst_name = max(results, key=results.get)
    for name in sorted(results):
        print(f"{name:24s} {results[name]:.3e}")
    worst = results[worst_name]
    ok = worst < args.tol
    print(f"max relative error {worst:.3e} ({worst_name}); "
          f"{'OK' if ok else 'FAIL'} at tolerance {args.tol:g}")
    return 0 if ok else 1


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ContractError, ConfigError, CheckpointError, DomainError,
            TrainingAborted, OSError) as exc:
        log.error("error: %s", exc)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
