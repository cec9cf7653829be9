"""Experiment protocols: few-shot benchmark sweeps, domain-generalization
evaluation, and cross-shift hyperparameter-transfer matrices.

A method is a named recipe that maps (anchors, support, seed, config
overrides) to a prototype bank or, for training-free recipes, directly to
predictions. One fixed configuration is used across all tasks; per-task
overrides are an explicitly-labeled oracle protocol.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, is_dataclass, replace

import numpy as np

from .baselines import TipCache, tip_adapter_logits
from .core import EmbeddingSet, PrototypeBank, l2_normalize_rows
from .data import SyntheticTaskSpec, generate_synthetic, load_container, load_prompts, sample_few_shot
from .errors import ClassSpaceError, DomainError, EmptyInput, ShapeError
from .penalty import PHR, QUADRATIC
from .probe import (
    RANDOM_INIT,
    ZERO_SHOT_INIT,
    PenaltySpec,
    TrainConfig,
    drift_norms,
    train_probe,
)
from .zeroshot import build_text_prototypes

METHODS = (
    "zeroshot",
    "zslp",
    "clap",
    "clap-const1",
    "clap-avg",
    "clap-corr",
    "clap-fullalm",
    "randlp",
    "tipadapter",
)


@dataclass(frozen=True)
class TaskSpec:
    """A benchmark task: either a synthetic spec or feature-container paths."""

    name: str
    synthetic: SyntheticTaskSpec | None = None
    train_path: str | None = None
    test_path: str | None = None
    prompts_path: str | None = None

    def resolve(self, temperature_inv: float = 100.0):
        """Return (train, test, anchors)."""
        if self.synthetic is not None:
            parts = generate_synthetic(self.synthetic, temperature_inv)
            return parts["train"], parts["test"], parts["anchors"]
        train = load_container(self.train_path)
        test = load_container(self.test_path)
        anchors = build_text_prototypes(
            load_prompts(self.prompts_path), temperature_inv
        )
        return train, test, anchors


@dataclass(frozen=True)
class RunResult:
    method: str
    fingerprint: str
    seed: int
    task: str
    shots: int
    accuracy: float
    per_class_accuracy: tuple[float, ...]
    mean_drift: float
    wall_ms: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise DomainError(f"accuracy out of [0,1]: {self.accuracy}")


def config_fingerprint(method: str, config: TrainConfig, **extra) -> str:
    """Stable hash of all hyperparameters, independent of field order."""
    payload = {"method": method, "config": _jsonable(config), **extra}
    blob = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def evaluate(bank: PrototypeBank, test: EmbeddingSet) -> dict:
    """Top-1 and per-class accuracies; argmax ties break to the lowest index."""
    if test.n_samples == 0:
        raise EmptyInput("empty test set")
    if test.dim != bank.dim:
        raise ShapeError(f"test dim {test.dim} != bank dim {bank.dim}")
    logits = l2_normalize_rows(test.features) @ bank.weights.T
    pred = np.argmax(logits, axis=1)
    return _accuracy_from_predictions(pred, test.labels, bank.n_classes)


def _accuracy_from_predictions(pred, labels, n_classes) -> dict:
    correct = pred == labels
    per_class = []
    for c in range(n_classes):
        mask = labels == c
        per_class.append(float(correct[mask].mean()) if np.any(mask) else float("nan"))
    return {
        "accuracy": float(correct.mean()),
        "per_class": per_class,
    }


def config_with_overrides(base: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply a flat override dict to a TrainConfig.

    Plain keys map to TrainConfig fields; ``lambda_override``,
    ``lambda_variant``, ``penalty_kind`` and ``rho_init`` rebuild the
    penalty spec.
    """
    overrides = dict(overrides)
    pen_keys = {
        k: overrides.pop(k)
        for k in ("lambda_override", "lambda_variant", "penalty_kind", "rho_init")
        if k in overrides
    }
    unknown = set(overrides) - {f.name for f in fields(TrainConfig)}
    if unknown:
        raise DomainError(f"unknown config overrides: {sorted(unknown)}")
    cfg = replace(base, **overrides) if overrides else base
    if pen_keys:
        spec = cfg.penalty or PenaltySpec()
        spec = replace(
            spec,
            kind=pen_keys.get("penalty_kind", spec.kind),
            lambda_variant=pen_keys.get("lambda_variant", spec.lambda_variant),
            lambda_override=pen_keys.get("lambda_override", spec.lambda_override),
            rho_init=pen_keys.get("rho_init", spec.rho_init),
        )
        cfg = replace(cfg, penalty=spec)
    return cfg


def method_config(method: str, base: TrainConfig) -> TrainConfig:
    """Fixed training recipe for each named method."""
    if method in ("zeroshot", "tipadapter"):
        return base
    if method == "zslp":
        return replace(base, init=ZERO_SHOT_INIT, penalty=None, outer_steps=0)
    if method == "randlp":
        return replace(base, init=RANDOM_INIT, penalty=None, outer_steps=0)
    if method == "clap":
        # a penalty spec already present on the base config (e.g. a grid
        # override) takes precedence over the default recipe
        spec = base.penalty or PenaltySpec(kind=QUADRATIC, lambda_variant="class_wise")
        return replace(base, penalty=spec, outer_steps=1)
    if method == "clap-const1":
        return replace(
            base, penalty=PenaltySpec(kind=QUADRATIC, lambda_variant="constant_one"),
            outer_steps=1,
        )
    if method == "clap-avg":
        return replace(
            base, penalty=PenaltySpec(kind=QUADRATIC, lambda_variant="avg"),
            outer_steps=1,
        )
    if method == "clap-corr":
        return replace(
            base, penalty=PenaltySpec(kind=QUADRATIC, lambda_variant="corrected"),
            outer_steps=1,
        )
    if method == "clap-fullalm":
        return replace(
            base, penalty=PenaltySpec(kind=PHR, lambda_variant="class_wise"),
            outer_steps=base.epochs,
        )
    raise DomainError(f"unknown method {method!r}", method=method)


def run_single(
    method: str,
    train: EmbeddingSet,
    test: EmbeddingSet,
    anchors: PrototypeBank,
    shots: int,
    seed: int,
    base_config: TrainConfig,
    task_name: str = "task",
    return_artifacts: bool = False,
):
    """One (task, method, shots, seed) benchmark cell.

    With ``return_artifacts`` the trained bank and trace are returned
    alongside the RunResult (both None for training-free methods).
    """
    t0 = time.perf_counter()
    cfg = replace(method_config(method, base_config), seed=seed)
    fingerprint = config_fingerprint(method, cfg, shots=shots)
    support = sample_few_shot(train, shots, seed)
    bank = trace = None
    if method == "zeroshot":
        metrics = evaluate(anchors, test)
        drift = 0.0
    elif method == "tipadapter":
        cache = TipCache.from_support(support, train.n_classes)
        feats = l2_normalize_rows(test.features)
        logits = np.stack([tip_adapter_logits(cache, anchors, v) for v in feats])
        pred = np.argmax(logits, axis=1)
        metrics = _accuracy_from_predictions(pred, test.labels, train.n_classes)
        drift = 0.0
    else:
        bank, trace = train_probe(anchors, support, cfg)
        metrics = evaluate(bank, test)
        drift = float(drift_norms(bank, anchors).mean())
    wall_ms = (time.perf_counter() - t0) * 1000.0
    result = RunResult(
        method=method,
        fingerprint=fingerprint,
        seed=seed,
        task=task_name,
        shots=shots,
        accuracy=metrics["accuracy"],
        per_class_accuracy=tuple(metrics["per_class"]),
        mean_drift=drift,
        wall_ms=wall_ms,
    )
    if return_artifacts:
        return result, bank, trace
    return result


def run_benchmark(
    tasks: list[TaskSpec],
    methods: list[str],
    shots: list[int],
    seeds: list[int],
    base_config: TrainConfig | None = None,
    workers: int = 1,
) -> tuple[list[RunResult], dict]:
    """Cartesian sweep; one fixed configuration across all tasks.

    Returns the per-run results (sorted by task, method, shots, seed) and a
    per-cell summary with mean and population standard deviation over seeds.
    """
    base_config = base_config or TrainConfig()
    resolved = {
        t.name: t.resolve(base_config.temperature_inv) for t in tasks
    }
    cells = [
        (t.name, m, k, s)
        for t in tasks
        for m in methods
        for k in shots
        for s in seeds
    ]

    def _run(cell):
        name, m, k, s = cell
        train, test, anchors = resolved[name]
        return run_single(m, train, test, anchors, k, s, base_config, task_name=name)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, cells))
    else:
        results = [_run(c) for c in cells]
    results.sort(key=lambda r: (r.task, r.method, r.shots, r.seed))

    summary = {}
    for r in results:
        key = (r.task, r.method, r.shots)
        summary.setdefault(key, []).append(r.accuracy)
    aggregate = {
        f"{t}|{m}|{k}": {
            "mean": float(np.mean(accs)),
            "sd": float(np.std(accs)),  # population SD over seeds
            "n_seeds": len(accs),
        }
        for (t, m, k), accs in summary.items()
    }
    return results, aggregate


def _masked_bank(bank: PrototypeBank, target: EmbeddingSet) -> PrototypeBank:
    """Restrict a source-class bank to a target's class subset, if masked."""
    if target.n_classes == bank.n_classes and target.parent_class_ids is None:
        return bank
    if target.parent_class_ids is None:
        raise ClassSpaceError(
            f"target has {target.n_classes} classes, source bank has "
            f"{bank.n_classes}, and no parent_class_ids mask is present"
        )
    ids = np.asarray(target.parent_class_ids, dtype=np.int64)
    if ids.shape[0] != target.n_classes or ids.max() >= bank.n_classes:
        raise ClassSpaceError("parent_class_ids inconsistent with source bank")
    return PrototypeBank(
        bank.weights[ids], bank.temperature_inv, normalized=bank.normalized
    )


def domain_generalization(
    source: TaskSpec,
    targets: list[TaskSpec],
    method: str,
    shots: int = 16,
    seeds: list[int] = (1, 2, 3),
    base_config: TrainConfig | None = None,
) -> dict:
    """Train once per seed on the source support; evaluate the frozen bank
    on every target. Reports per-target accuracy and delta vs zero-shot."""
    base_config = base_config or TrainConfig()
    train, source_test, anchors = source.resolve(base_config.temperature_inv)
    resolved_targets = [
        (t.name, t.resolve(base_config.temperature_inv)[1]) for t in targets
    ]
    rows = {"source": {"accs": []}}
    for name, _ in resolved_targets:
        rows[name] = {"accs": [], "zero_shot": None}
    bank_hashes = []
    for seed in seeds:
        if method == "zeroshot":
            bank = anchors
        else:
            cfg = replace(method_config(method, base_config), seed=seed)
            support = sample_few_shot(train, shots, seed)
            bank, _ = train_probe(anchors, support, cfg)
        bank_hashes.append(hashlib.sha256(bank.weights.tobytes()).hexdigest())
        rows["source"]["accs"].append(evaluate(bank, source_test)["accuracy"])
        for name, test in resolved_targets:
            masked = _masked_bank(bank, test)
            rows[name]["accs"].append(evaluate(masked, test)["accuracy"])
    out = {"method": method, "shots": shots, "seeds": list(seeds), "targets": {}}
    out["source_accuracy"] = float(np.mean(rows["source"]["accs"]))
    for name, test in resolved_targets:
        zs = evaluate(_masked_bank(anchors, test), test)["accuracy"]
        mean_acc = float(np.mean(rows[name]["accs"]))
        out["targets"][name] = {
            "accuracy": mean_acc,
            "zero_shot": zs,
            "delta_vs_zero_shot": mean_acc - zs,
        }
    out["bank_hashes"] = bank_hashes
    return out


@dataclass(frozen=True)
class CrossShiftMatrix:
    """Relative improvement of task-i-tuned hyperparameters applied to task j."""

    tasks: tuple[str, ...]
    matrix: np.ndarray  # delta(i, j) vs the plain zero-shot-initialized probe
    chosen: tuple[dict, ...]  # grid point selected per row task

    def to_csv(self) -> str:
        header = "source_task," + ",".join(self.tasks)
        lines = [header]
        for i, name in enumerate(self.tasks):
            lines.append(name + "," + ",".join(repr(x) for x in self.matrix[i]))
        return "\n".join(lines) + "\n"


def cross_shift_matrix(
    tasks: list[TaskSpec],
    method: str,
    hyper_grid: list[dict],
    shots: int,
    seeds: list[int],
    base_config: TrainConfig | None = None,
) -> CrossShiftMatrix:
    """Oracle hyperparameter-transfer protocol: for each row task, pick the
    grid point with the best TEST accuracy (explicitly unrealistic), then
    apply it to every column task and report the gain over the plain probe.
    """
    if not hyper_grid:
        raise DomainError("hyper_grid must be nonempty")
    base_config = base_config or TrainConfig()
    resolved = {t.name: t.resolve(base_config.temperature_inv) for t in tasks}
    names = tuple(t.name for t in tasks)

    def mean_acc(task_name: str, m: str, overrides: dict) -> float:
        train, test, anchors = resolved[task_name]
        cfg = config_with_overrides(base_config, overrides)
        accs = [
            run_single(m, train, test, anchors, shots, s, cfg, task_name).accuracy
            for s in seeds
        ]
        return float(np.mean(accs))

    baseline = {name: mean_acc(name, "zslp", {}) for name in names}
    chosen = []
    for name in names:
        scores = [mean_acc(name, method, g) for g in hyper_grid]
        chosen.append(hyper_grid[int(np.argmax(scores))])
    matrix = np.empty((len(names), len(names)))
    for i, g in enumerate(chosen):
        for j, name_j in enumerate(names):
            matrix[i, j] = mean_acc(name_j, method, g) - baseline[name_j]
    return CrossShiftMatrix(names, matrix, tuple(chosen))
