"""Command line entry points.

Four subcommands: shape re-weights advantages over a trace file, diagnose
summarizes focus/attention ratios, synth writes a synthetic trace, and
train-toy runs the small policy-training experiment. File outputs go where
--output points; human-readable summaries go to stderr so stdout stays clean
for piping.

Exit codes: 0 on success, 1 for anything wrong with the inputs (bad flags,
unreadable files, malformed traces, out-of-range config), 2 for unexpected
internal failures.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .diagnostics import SELECTORS, attention_allocation, ratio_distribution
from .errors import ShapingError
from .pipeline import shape_group
from .synthlab import (
    ALGOS,
    _TAG_GROUP,
    generate_group,
    run_experiment,
    vocab_embeddings,
)
from .traceio import (
    _AGG_ALIASES,
    _SCHEDULE_ALIASES,
    ConfigBundle,
    default_bundle,
    read_config,
    read_trace,
    shaped_line,
    write_report,
    write_trace,
)


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors, exit 1 (argparse defaults to 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_shaping_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--beta", type=float, default=None, help="compensation strength")
    sub.add_argument("--gamma", type=float, default=None, help="late-window fraction")
    sub.add_argument("--kappa", type=float, default=None, help="gate quantile fraction")
    sub.add_argument(
        "--schedule",
        choices=sorted(set(_SCHEDULE_ALIASES) | {"linear", "step"}),
        default=None,
        help="position ramp inside the compensation term",
    )
    sub.add_argument(
        "--power", type=int, choices=(1, 2), default=None,
        help="exponent for the exponential schedule",
    )
    sub.add_argument(
        "--span", choices=("late", "full"), default=None,
        help="gate window: the late tail or every position",
    )
    sub.add_argument("--eps-low", type=float, default=None, help="lower clip offset")
    sub.add_argument("--eps-high", type=float, default=None, help="upper clip offset")
    sub.add_argument(
        "--std-mode", choices=("sample", "population"), default=None,
        help="denominator convention for group advantage normalization",
    )
    sub.add_argument(
        "--no-intra", action="store_const", const=True, default=None,
        help="disable token-level re-weighting",
    )
    sub.add_argument(
        "--no-inter", action="store_const", const=True, default=None,
        help="disable trajectory-level re-weighting",
    )


def _merged_bundle(args: argparse.Namespace) -> ConfigBundle:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    config_path = getattr(args, "config", None)
    bundle = read_config(config_path) if config_path else default_bundle()

    shaping_kw = {}
    clip_kw = {}
    synth_kw = {}
    for name in ("beta", "gamma", "kappa", "power", "span"):
        value = getattr(args, name, None)
        if value is not None:
            shaping_kw[name] = value
    schedule = getattr(args, "schedule", None)
    if schedule is not None:
        shaping_kw["schedule"] = _SCHEDULE_ALIASES.get(schedule, schedule)
    std_mode = getattr(args, "std_mode", None)
    if std_mode is not None:
        shaping_kw["std_mode"] = std_mode
    if getattr(args, "no_intra", None):
        shaping_kw["enable_intra"] = False
    if getattr(args, "no_inter", None):
        shaping_kw["enable_inter"] = False
    eps_low = getattr(args, "eps_low", None)
    if eps_low is not None:
        shaping_kw["clip_low"] = eps_low
        clip_kw["clip_low"] = eps_low
    eps_high = getattr(args, "eps_high", None)
    if eps_high is not None:
        shaping_kw["clip_high"] = eps_high
        clip_kw["clip_high"] = eps_high
    loss_agg = getattr(args, "loss_agg", None)
    if loss_agg is not None:
        clip_kw["loss_agg"] = _AGG_ALIASES.get(loss_agg, loss_agg)
    seed = getattr(args, "seed", None)
    if seed is not None:
        synth_kw["seed"] = seed
    groups = getattr(args, "groups", None)
    if groups is not None:
        synth_kw["groups_per_batch"] = groups

    return ConfigBundle(
        shaping=replace(bundle.shaping, **shaping_kw) if shaping_kw else bundle.shaping,
        clip=replace(bundle.clip, **clip_kw) if clip_kw else bundle.clip,
        synth=replace(bundle.synth, **synth_kw) if synth_kw else bundle.synth,
    )


def _sibling_csv(output: str, suffix: str) -> str:
    stem, _ = os.path.splitext(output)
    return f"{stem}_{suffix}.csv"


def cmd_shape(args: argparse.Namespace) -> int:
    bundle = _merged_bundle(args)
    n_groups = n_traj = n_degenerate = n_tokens = 0
    abs_sum = 0.0
    with open(args.output, "w", encoding="utf-8") as out:
        for group in read_trace(args.input):
            shaped = shape_group(group, bundle.shaping)
            out.write(shaped_line(group.group_id, shaped) + "\n")
            n_groups += 1
            n_traj += len(group.trajectories)
            n_degenerate += int(shaped.degenerate_group)
            for adv in shaped.shaped_adv:
                abs_sum += float(np.abs(adv).sum())
                n_tokens += adv.shape[0]
    mean_abs = abs_sum / n_tokens if n_tokens else 0.0
    print(
        f"shaped {n_groups} groups / {n_traj} trajectories"
        f" ({n_degenerate} degenerate, mean |shaped| {mean_abs:.6f})"
        f" -> {args.output}",
        file=sys.stderr,
    )
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    groups = list(read_trace(args.input))
    report = ratio_distribution(
        groups, selector=args.selector, split_point=args.split_point
    )
    write_report(report.as_dict(), args.output)

    ratios_path = _sibling_csv(args.output, "ratios")
    with open(ratios_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "trajectory", "reward", "ratio"])
        for entry in report.entries:
            ratio = "" if entry["ratio"] is None else repr(entry["ratio"])
            writer.writerow([entry["group_id"], entry["trajectory"], entry["reward"], ratio])

    allocation_path = _sibling_csv(args.output, "allocation")
    skipped = 0
    with open(allocation_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["group_id", "trajectory", "position", "image", "query", "generated"]
        )
        for group in groups:
            for i, traj in enumerate(group.trajectories):
                if traj.attn_split is None:
                    skipped += 1
                    continue
                fractions = attention_allocation(traj.attn_split).fractions
                for pos, row in enumerate(fractions, start=1):
                    writer.writerow(
                        [group.group_id, i, pos, repr(row[0]), repr(row[1]), repr(row[2])]
                    )

    total = report.high["count"] + report.low["count"]
    undefined = report.high["undefined"] + report.low["undefined"]
    print(
        f"diagnosed {len(groups)} groups / {total} trajectories"
        f" ({undefined} undefined ratios,"
        f" {skipped} without attention masses) -> {args.output}",
        file=sys.stderr,
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    bundle = _merged_bundle(args)
    cfg = bundle.synth
    embeds = vocab_embeddings(cfg)

    def groups():
        for i in range(cfg.groups_per_batch):
            rng = np.random.default_rng([cfg.seed, _TAG_GROUP, i])
            yield generate_group(cfg, rng, group_id=f"synth-{i}", embeddings=embeds)

    n_bytes = write_trace(groups(), args.output)
    print(
        f"wrote {cfg.groups_per_batch} synthetic groups, {n_bytes} bytes"
        f" (seed {cfg.seed}, rho_decay {cfg.rho_decay}) -> {args.output}",
        file=sys.stderr,
    )
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    bundle = _merged_bundle(args)
    report = run_experiment(
        cfg=bundle.synth,
        shaping=bundle.shaping,
        clip=bundle.clip,
        algo=args.algo,
        steps=args.steps,
        n_seeds=args.seeds,
    )
    write_report(report, args.output)

    curves_path = _sibling_csv(args.output, "curves")
    with open(curves_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "step", "reward", "objective", "rho_ratio"])
        for run in report["runs"]:
            for point in run["curve"]:
                ratio = "" if point["rho_ratio"] is None else repr(point["rho_ratio"])
                writer.writerow(
                    [run["seed"], point["step"], point["reward"],
                     repr(point["objective"]), ratio]
                )

    for run in report["runs"]:
        ratio = run["final_rho_ratio"]
        ratio_text = "n/a" if ratio is None else f"{ratio:.4f}"
        print(
            f"seed {run['seed']}: final reward {run['final_reward']:.4f},"
            f" rho ratio {ratio_text}",
            file=sys.stderr,
        )
    summary = report["summary"]
    print(
        f"{args.algo}: mean final reward {summary['final_reward_mean']:.4f}"
        f" over {args.seeds} seeds -> {args.output}",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vgpo", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    shape = commands.add_parser("shape", help="re-weight advantages over a trace")
    shape.add_argument("--input", required=True, help="trace file (jsonl)")
    shape.add_argument("--output", required=True, help="shaped advantages (jsonl)")
    shape.add_argument("--config", default=None, help="TOML config file")
    _add_shaping_flags(shape)
    shape.set_defaults(func=cmd_shape)

    diagnose = commands.add_parser("diagnose", help="ratio and allocation report")
    diagnose.add_argument("--input", required=True, help="trace file (jsonl)")
    diagnose.add_argument("--output", required=True, help="report file (json)")
    diagnose.add_argument("--selector", choices=SELECTORS, default="rho")
    diagnose.add_argument(
        "--split-point", type=float, default=0.5,
        help="late/early boundary as a fraction of the sequence",
    )
    diagnose.set_defaults(func=cmd_diagnose)

    synth = commands.add_parser("synth", help="write a synthetic trace")
    synth.add_argument("--output", required=True, help="trace file (jsonl)")
    synth.add_argument("--config", default=None, help="TOML config file")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--groups", type=int, default=None, help="number of groups")
    synth.set_defaults(func=cmd_synth)

    train = commands.add_parser("train-toy", help="train the toy policy")
    train.add_argument("--output", required=True, help="report file (json)")
    train.add_argument("--config", default=None, help="TOML config file")
    train.add_argument("--algo", choices=ALGOS, default="vgpo")
    train.add_argument("--steps", type=int, default=300)
    train.add_argument("--seeds", type=int, default=5, help="number of seeds")
    train.add_argument("--seed", type=int, default=None, help="first seed")
    train.add_argument(
        "--loss-agg", choices=sorted(_AGG_ALIASES), default=None,
        help="surrogate aggregation",
    )
    _add_shaping_flags(train)
    train.set_defaults(func=cmd_train_toy)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ShapingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
