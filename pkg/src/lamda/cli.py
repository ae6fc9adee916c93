"""Command-line surface: analyze / plan / count / finetune / report.

Exit codes: 0 success, 2 usage or config error, 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import accounting, allocator, container
from .config import load_run_config
from .svd import energy_score, svd
from .errors import ConfigError, LamdaError, NumericalError
from .train import train


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path == "-" or path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _parse_int_list(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


# ----------------------------------------------------------------- analyze


def cmd_analyze(args):
    weights = container.read_weights(args.weights)
    if args.modules:
        wanted = args.modules.split(",")
        missing = [m for m in wanted if m not in weights]
        if missing:
            raise ConfigError(f"weights file has no tensor named {missing[0]!r}")
        weights = {m: weights[m] for m in wanted}
    matrices = {name: w for name, w in weights.items() if w.ndim == 2}
    if not matrices:
        raise ConfigError("no 2-D tensors to analyze")
    budget = allocator.RankBudget(ranks=_parse_int_list(args.ranks), target=args.target)

    names = sorted(matrices)
    with ThreadPoolExecutor(max_workers=min(8, len(names))) as pool:
        sigmas = dict(zip(names, pool.map(lambda n: svd(matrices[n]).sigma, names)))

    scores = [allocator.score_from_sigma(n, sigmas[n], budget) for n in names]
    _write_json(args.scores_out, allocator.scores_to_json(scores))

    if args.energy_csv:
        with open(args.energy_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["module", "rank", "energy_ratio"])
            for name in names:
                sigma = sigmas[name]
                total = energy_score(sigma, len(sigma))
                top = min(args.max_rank, len(sigma))
                for r in range(1, top + 1):
                    writer.writerow([name, r, energy_score(sigma, r) / total])
    return 0


# -------------------------------------------------------------------- plan


def cmd_plan(args):
    with open(args.scores, encoding="utf-8") as fh:
        scores = allocator.scores_from_json(json.load(fh))
    with open(args.budget, encoding="utf-8") as fh:
        budget = allocator.RankBudget.from_json(json.load(fh))
    plan = allocator.allocate(scores, budget, reverse=args.reverse)
    _write_json(args.out, plan.to_json())
    return 0


# ------------------------------------------------------------------- count


def cmd_count(args):
    spec = accounting.load_preset(args.model_preset)
    method = args.method.lower()
    ranks = args.rank
    if args.rank_plan:
        with open(args.rank_plan, encoding="utf-8") as fh:
            ranks = {k: int(v) for k, v in json.load(fh)["ranks"].items()}
    if method == "lora":
        report = accounting.count_lora(spec, ranks if isinstance(ranks, int) else args.rank)
    elif method == "lamda":
        report = accounting.count_lamda_effective(spec, ranks, args.ti)
    else:
        raise ConfigError(f"count supports methods lora|lamda, got {method!r}")
    _write_json(args.json, report.to_json())
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(report.csv_rows())
    return 0


# ---------------------------------------------------------------- finetune


def _write_metrics_csv(path, metrics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "live_params", "stored_activation_floats"])
        for step, loss, live, retained in metrics:
            writer.writerow([step, repr(float(loss)), live, retained])


def cmd_finetune(args):
    cfg = load_run_config(args.config)
    backbone = container.read_weights(args.backbone) if args.backbone else None
    os.makedirs(args.out_dir, exist_ok=True)
    result = train(cfg, backbone_weights=backbone)
    _write_metrics_csv(os.path.join(args.out_dir, "metrics.csv"), result.metrics)
    tensors, meta = container.checkpoint_from_result(result)
    container.save_checkpoint(os.path.join(args.out_dir, "checkpoint.ldck"), tensors, meta)
    container.write_weights(
        os.path.join(args.out_dir, "backbone.ldwt"), result.model.weights()
    )
    summary = {
        "method": cfg.method,
        "task": cfg.task,
        "steps": cfg.total_steps,
        "final_loss": result.metrics[-1][1],
        "config_hash": cfg.digest(),
    }
    _write_json(os.path.join(args.out_dir, "summary.json"), summary)
    return 0


# ------------------------------------------------------------------ report


def cmd_report(args):
    runs = sorted(
        d for d in os.listdir(args.runs)
        if os.path.isfile(os.path.join(args.runs, d, "metrics.csv"))
    )
    if not runs:
        raise ConfigError(f"no run directories with metrics.csv under {args.runs}")
    series = {}
    for run in runs:
        with open(os.path.join(args.runs, run, "metrics.csv"), encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        series[run] = {int(r["step"]): r for r in rows}
    steps = sorted(set().union(*(s.keys() for s in series.values())))
    header = ["step"]
    for run in runs:
        header += [f"{run}.loss", f"{run}.live_params"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for step in steps:
            row = [step]
            for run in runs:
                rec = series[run].get(step)
                row += [rec["loss"] if rec else "", rec["live_params"] if rec else ""]
            writer.writerow(row)
    return 0


# -------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lamda",
        description="Spectral adapter toolkit: spectrum analysis, rank "
        "planning, cost accounting, and toy-model fine-tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-module spectra and candidacy scores")
    p.add_argument("--weights", required=True)
    p.add_argument("--ranks", required=True, help="candidate ranks, e.g. 16,24,32,40,48")
    p.add_argument("--target", required=True, type=int)
    p.add_argument("--modules", help="comma-separated tensor names to restrict to")
    p.add_argument("--scores-out", default="-")
    p.add_argument("--energy-csv")
    p.add_argument("--max-rank", type=int, default=32)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plan", help="quantile rank assignment from scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--budget", required=True)
    p.add_argument("--reverse", action="store_true",
                   help="flip the assignment (ablation)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("count", help="analytical cost report for a model preset")
    p.add_argument("--model-preset", required=True,
                   help=f"one of: {', '.join(accounting.list_presets())}")
    p.add_argument("--method", required=True, help="lora | lamda")
    p.add_argument("--rank", type=int, default=32)
    p.add_argument("--rank-plan", help="plan JSON with per-module ranks")
    p.add_argument("--ti", type=float, default=0.3,
                   help="freeze horizon as a fraction of total iterations")
    p.add_argument("--json", default="-")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("finetune", help="run a training config")
    p.add_argument("--config", required=True)
    p.add_argument("--backbone", help="weight container with pre-trained backbone")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("report", help="merge run metrics into one CSV")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, LamdaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
