"""Command-line front end.

Subcommands expose the training, benchmarking, and cross-shift protocols
with fixed defaults (300 epochs, lr 0.1, momentum 0.9, cosine decay, 20
augmentation views, logit scale 100). The whole point of the tool is the
validation-free protocol: the same configuration runs on every task, and
per-task overrides require an explicit opt-in to the oracle mode.

All artifacts are byte-identical across re-runs with identical inputs;
wall-clock columns hold 0 unless ``--timing`` is passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import taskres_step_equivalence
from .bundled import BUNDLED, bundled_task
from .core import EmbeddingSet
from .data import sample_few_shot, save_container
from .errors import DomainError, ProtoAdaptError
from .harness import (
    METHODS,
    TaskSpec,
    config_with_overrides,
    cross_shift_matrix,
    run_benchmark,
    run_single,
)
from .probe import TrainConfig

BENCH_CSV_HEADER = "task,method,shots,seed,acc,acc_sd,drift,wall_ms"
WORKERS_ENV = "PROTOADAPT_WORKERS"


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=300, help="training epochs")
    p.add_argument("--lr0", type=float, default=0.1, help="initial learning rate")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum")
    p.add_argument(
        "--temperature-inv", type=float, default=100.0, help="logit scale (1/tau)"
    )
    p.add_argument(
        "--views",
        type=int,
        default=20,
        help="augmentation views per support sample (synthetic tasks)",
    )
    p.add_argument(
        "--config", type=Path, default=None, help="JSON file of config overrides"
    )
    p.add_argument(
        "--output", "-o", type=Path, default=Path("out"), help="output directory"
    )
    p.add_argument(
        "--workers",
        type=int,
        default=int(os.environ.get(WORKERS_ENV, "1")),
        help=f"parallel workers (or ${WORKERS_ENV})",
    )
    p.add_argument(
        "--timing",
        action="store_true",
        help="write real wall-clock times (breaks byte-identical re-runs)",
    )


def _task_from_args(args) -> TaskSpec:
    if args.synthetic is not None:
        task = bundled_task(args.synthetic)
        return TaskSpec(
            name=task.name,
            synthetic=replace(task.synthetic, n_views=args.views),
        )
    if not (args.features and args.test_features and args.prompts):
        raise DomainError(
            "provide either --synthetic NAME or all of --features, "
            "--test-features and --prompts"
        )
    return TaskSpec(
        name=Path(args.features).stem,
        train_path=str(args.features),
        test_path=str(args.test_features),
        prompts_path=str(args.prompts),
    )


def _base_config(args) -> TrainConfig:
    cfg = TrainConfig(
        epochs=args.epochs,
        lr0=args.lr0,
        momentum=args.momentum,
        temperature_inv=args.temperature_inv,
    )
    if args.config is not None:
        overrides = json.loads(Path(args.config).read_text())
        cfg = config_with_overrides(cfg, overrides)
    return cfg


def _parse_tasks(spec: str, views: int) -> list[TaskSpec]:
    tasks = []
    for name in spec.split(","):
        name = name.strip()
        task = bundled_task(name)
        tasks.append(
            TaskSpec(name=task.name, synthetic=replace(task.synthetic, n_views=views))
        )
    return tasks


def cmd_train(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    task = _task_from_args(args)
    cfg = replace(_base_config(args), seed=args.seed)
    train, test, anchors = task.resolve(cfg.temperature_inv)

    if args.method == "taskres-equiv":
        support = sample_few_shot(train, args.shots, args.seed)
        report = taskres_step_equivalence(
            args.alpha, args.eta, anchors, support, steps=args.steps
        )
        path = out / "taskres_equivalence.json"
        path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        print(str(path))
        return 0

    result, bank, trace = run_single(
        args.method,
        train,
        test,
        anchors,
        args.shots,
        args.seed,
        cfg,
        task.name,
        return_artifacts=True,
    )
    artifacts = []
    if bank is not None:
        bank_set = EmbeddingSet(
            bank.weights,
            np.arange(bank.n_classes),
            bank.n_classes,
            class_names=train.class_names,
        )
        artifacts.append(save_container(out / "bank.vlf", bank_set, split="prototypes"))
        trace_path = out / "trace.csv"
        trace_path.write_text(trace.to_csv())
        artifacts.append(trace_path)
    record = asdict(result)
    if not args.timing:
        record["wall_ms"] = 0.0
    result_path = out / "result.json"
    result_path.write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    artifacts.append(result_path)
    for a in artifacts:
        print(str(a))
    return 0


def cmd_bench(args) -> int:
    if args.per_task_config and not args.oracle_mode:
        print(
            "error=OracleRefusal msg=\"per-task overrides violate the "
            "validation-free protocol; pass --oracle-mode to run the oracle "
            "critique deliberately\"",
            file=sys.stderr,
        )
        return 1
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tasks = _parse_tasks(args.tasks, args.views)
    methods = [m.strip() for m in args.methods.split(",")]
    shots = [int(k) for k in args.shots.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    cfg = _base_config(args)
    if args.per_task_config:
        per_task = json.loads(args.per_task_config)
        results, aggregate = [], {}
        for task in tasks:
            task_cfg = config_with_overrides(cfg, per_task.get(task.name, {}))
            r, agg = run_benchmark(
                [task], methods, shots, seeds, task_cfg, workers=args.workers
            )
            results.extend(r)
            aggregate.update(agg)
    else:
        results, aggregate = run_benchmark(
            tasks, methods, shots, seeds, cfg, workers=args.workers
        )
    lines = [BENCH_CSV_HEADER]
    for r in results:
        sd = aggregate[f"{r.task}|{r.method}|{r.shots}"]["sd"]
        wall = r.wall_ms if args.timing else 0.0
        lines.append(
            f"{r.task},{r.method},{r.shots},{r.seed},{r.accuracy!r},{sd!r},"
            f"{r.mean_drift!r},{wall!r}"
        )
    csv_path = out / "results.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(aggregate, sort_keys=True, indent=1) + "\n")
    print(str(csv_path))
    print(str(summary_path))
    return 0


def cmd_crossshift(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    grid_text = args.grid
    if grid_text.startswith("@"):
        grid_text = Path(grid_text[1:]).read_text()
    try:
        grid = json.loads(grid_text)
    except json.JSONDecodeError as e:
        print(
            f"error=GridParseError pos={e.pos} line={e.lineno} col={e.colno} "
            f'msg="{e.msg}"',
            file=sys.stderr,
        )
        return 1
    if not isinstance(grid, list):
        raise DomainError("grid must be a JSON list of override objects")
    tasks = _parse_tasks(args.tasks, args.views)
    seeds = [int(s) for s in args.seeds.split(",")]
    cfg = _base_config(args)
    matrix = cross_shift_matrix(tasks, args.method, grid, args.shots, seeds, cfg)
    csv_path = out / "matrix.csv"
    csv_path.write_text(matrix.to_csv())
    chosen_path = out / "chosen.json"
    chosen_path.write_text(
        json.dumps(list(matrix.chosen), sort_keys=True, indent=1) + "\n"
    )
    outputs = [csv_path, chosen_path]
    if args.heatmap:
        outputs.append(_render_heatmap(matrix, out / "matrix.png"))
    for p in outputs:
        print(str(p))
    return 0


def _render_heatmap(matrix, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(1.2 + 0.8 * len(matrix.tasks),) * 2)
    im = ax.imshow(matrix.matrix, cmap="RdBu_r")
    ax.set_xticks(range(len(matrix.tasks)), matrix.tasks, rotation=45, ha="right")
    ax.set_yticks(range(len(matrix.tasks)), matrix.tasks)
    ax.set_xlabel("evaluated on")
    ax.set_ylabel("tuned on")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": ""})
    plt.close(fig)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoadapt",
        description="Validation-free few-shot adaptation of frozen embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p_train = sub.add_parser(
        "train", formatter_class=fmt, help="train one method on one task"
    )
    p_train.add_argument(
        "--method",
        choices=METHODS + ("taskres-equiv",),
        default="zslp",
        help="adaptation method",
    )
    p_train.add_argument(
        "--synthetic",
        choices=sorted(BUNDLED),
        default=None,
        help="bundled synthetic task",
    )
    p_train.add_argument("--features", type=Path, default=None, help="train container")
    p_train.add_argument(
        "--test-features", type=Path, default=None, help="test container"
    )
    p_train.add_argument(
        "--prompts", type=Path, default=None, help="prompt-embedding container"
    )
    p_train.add_argument("--shots", type=int, default=16, help="shots per class")
    p_train.add_argument("--seed", type=int, default=1, help="random seed")
    p_train.add_argument("--alpha", type=float, default=0.5, help="taskres-equiv scale")
    p_train.add_argument("--eta", type=float, default=0.01, help="taskres-equiv lr")
    p_train.add_argument("--steps", type=int, default=10, help="taskres-equiv steps")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_bench = sub.add_parser(
        "bench", formatter_class=fmt, help="few-shot benchmark sweep"
    )
    p_bench.add_argument(
        "--tasks", default="default", help="comma-separated bundled task names"
    )
    p_bench.add_argument(
        "--methods", default="zslp,clap", help="comma-separated method names"
    )
    p_bench.add_argument("--shots", default="1,2,4,8,16", help="comma-separated shots")
    p_bench.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    p_bench.add_argument(
        "--oracle-mode",
        action="store_true",
        help="allow per-task overrides (oracle critique protocol)",
    )
    p_bench.add_argument(
        "--per-task-config",
        default=None,
        help="JSON mapping task name to overrides (requires --oracle-mode)",
    )
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_cross = sub.add_parser(
        "crossshift", formatter_class=fmt, help="hyperparameter-transfer matrix"
    )
    p_cross.add_argument(
        "--tasks", default="default,noisy", help="comma-separated bundled task names"
    )
    p_cross.add_argument("--method", choices=METHODS, default="clap")
    p_cross.add_argument(
        "--grid", required=True, help="JSON list of overrides, or @file.json"
    )
    p_cross.add_argument("--shots", type=int, default=4, help="shots per class")
    p_cross.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    p_cross.add_argument("--heatmap", action="store_true", help="render matrix.png")
    _add_common(p_cross)
    p_cross.set_defaults(func=cmd_crossshift)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProtoAdaptError as e:
        print(e.record(), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
