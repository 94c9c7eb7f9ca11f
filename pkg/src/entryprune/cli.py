"""Command line front end: select / eval / ablate / stability / mask.

Flags override values from an optional flat key=value config file, which
in turn overrides the profile presets. Exit codes: 0 success, 1 usage or
configuration problem, 2 unreadable or malformed data.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import ToySpec, load_csv, load_idx, make_split, make_toy, standardize
from .errors import ConfigError, DataError
from .evaluate import (
    FeatureSet,
    knn_accuracy,
    linear_classifier_accuracy,
    network_accuracy,
    random_baseline,
    stability,
)
from .mlp import OptimizerConfig
from .rng import SeededRng
from .selector import EntryMode, Metric, SelectionConfig, run_entryprune
from .stopping import StopKind, StoppingConfig

PROFILES = {"long": (0.2, 100), "wide": (0.5, 5)}

ABLATION_GRID = [
    (Metric.GRADIENT_SUM, EntryMode.ENTRY_SCORE),
    (Metric.GRADIENT_SUM, EntryMode.LIVE),
    (Metric.WEIGHT_CHANGE, EntryMode.ENTRY_SCORE),
    (Metric.WEIGHT_CHANGE, EntryMode.LIVE),
    (Metric.MAGNITUDE, EntryMode.ENTRY_SCORE),
    (Metric.MAGNITUDE, EntryMode.LIVE),
    (Metric.MOLCHANOV, EntryMode.LIVE),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_data_flags(p):
    p.add_argument("--data", help="csv path, idx images path, or toy spec like n=2000,seed=0")
    p.add_argument("--format", choices=("csv", "idx", "toy"), default="csv")
    p.add_argument("--labels", help="idx labels path (required with --format idx)")
    p.add_argument("--label-column", default=None, help="csv label column name or index (default: last)")
    p.add_argument("--train-ratio", type=float, default=0.8)
    p.add_argument("--test-ratio", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)


def _add_selection_flags(p, stopping_default="validation", patience_default=100, max_rotations_default=None):
    p.add_argument("--k", type=int, required=True, help="number of features to select")
    p.add_argument("--profile", choices=tuple(PROFILES), default=None,
                   help="long: c_ratio 0.2 / n_mb 100, wide: c_ratio 0.5 / n_mb 5")
    p.add_argument("--c-ratio", type=float, default=None)
    p.add_argument("--n-mb", type=int, default=None)
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.GRADIENT_SUM.value)
    p.add_argument("--entry-mode", choices=[m.value for m in EntryMode], default=EntryMode.ENTRY_SCORE.value)
    p.add_argument("--flex", action="store_true")
    p.add_argument("--stopping", choices=[k.value for k in StopKind], default=stopping_default)
    p.add_argument("--patience", type=int, default=patience_default)
    p.add_argument("--epochs", type=int, default=100, help="epoch budget for --stopping epochs")
    p.add_argument("--max-rotations", type=int, default=max_rotations_default)
    p.add_argument("--hidden", default="100", help="comma-separated hidden layer sizes")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=1024)


def _add_common_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="flat key=value file, overridden by explicit flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="entryprune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="run feature selection")
    _add_data_flags(p)
    _add_selection_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="evaluate a feature set downstream")
    _add_data_flags(p)
    p.add_argument("--selected", help="file of selected indices, one per line (default: all features)")
    p.add_argument("--learner", choices=("knn", "linear"), default="knn")
    p.add_argument("--knn-k", type=int, default=3)
    p.add_argument("--random-baseline", action="store_true", help="score random k-subsets instead")
    p.add_argument("--k", type=int, default=None, help="subset size for --random-baseline")
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="pruning-metric grid, one row per metric/entry-mode")
    _add_data_flags(p)
    _add_selection_flags(p, stopping_default="ident", patience_default=15, max_rotations_default=200)
    p.add_argument("--learner", choices=("knn", "linear"), default="knn")
    p.add_argument("--knn-k", type=int, default=3)
    _add_common_flags(p)
    p.set_defaults(func=cmd_ablate, runs=5)

    p = sub.add_parser("stability", help="selection overlap across reruns per c_ratio")
    _add_data_flags(p)
    _add_selection_flags(p, stopping_default="ident", patience_default=15, max_rotations_default=200)
    p.add_argument("--c-ratios", default="0.2,0.5,0.8")
    p.add_argument("--knn-k", type=int, default=3)
    _add_common_flags(p)
    p.set_defaults(func=cmd_stability, runs=10)

    p = sub.add_parser("mask", help="render a selection as a plain-text PGM image mask")
    p.add_argument("--selected", required=True)
    p.add_argument("--shape", help="image shape like 28x28 (default: taken from --data idx header)")
    p.add_argument("--data", help="idx images path to take the shape from")
    p.add_argument("--labels", help="idx labels path")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mask)

    return parser


def _splice_config(argv: list[str]) -> list[str]:
    """Expand --config key=value pairs into flag tokens after the subcommand."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None or not argv:
        return argv
    tokens = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return [argv[0], *tokens, *argv[1:]]


def _parse_toy_spec(text: str | None) -> ToySpec:
    fields = {
        "n": "n_samples", "linear": "n_linear", "interaction": "n_interaction",
        "noise": "n_noise", "coef": "linear_coefficient", "noise_sd": "noise_sd", "seed": "seed",
    }
    kwargs = {"n_samples": 2000}
    for part in (text or "").split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"toy spec entries look like n=2000, got {part!r}")
        key, value = part.split("=", 1)
        if key not in fields:
            raise ConfigError(f"unknown toy spec key {key!r}, expected one of {sorted(fields)}")
        name = fields[key]
        kwargs[name] = float(value) if name in ("linear_coefficient", "noise_sd") else int(value)
    return ToySpec(**kwargs)


def _resolve_data(args):
    """Load, split and standardize the requested dataset."""
    if args.format == "csv":
        if not args.data:
            raise ConfigError("--data is required with --format csv")
        label = args.label_column
        if label is None:
            label = -1
        elif isinstance(label, str) and (label.lstrip("-").isdigit()):
            label = int(label)
        dataset = load_csv(args.data, label_column=label)
        source = f"csv:{args.data}"
    elif args.format == "idx":
        if not args.data or not args.labels:
            raise ConfigError("--data and --labels are required with --format idx")
        dataset = load_idx(args.data, args.labels)
        source = f"idx:{args.data}"
    else:
        spec = _parse_toy_spec(args.data)
        dataset = make_toy(spec)
        source = f"toy:{spec}"
    split = make_split(dataset.n_samples, (args.train_ratio, 0.0, args.test_ratio), args.split_seed)
    return standardize(dataset, split), split, source


def _selection_config(args, seed: int) -> SelectionConfig:
    profile = PROFILES.get(args.profile) if args.profile else None
    c_ratio = args.c_ratio if args.c_ratio is not None else (profile[0] if profile else 0.2)
    n_mb = args.n_mb if args.n_mb is not None else (profile[1] if profile else 100)
    try:
        hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip())
    except ValueError:
        raise ConfigError(f"--hidden expects comma-separated integers, got {args.hidden!r}") from None
    return SelectionConfig(
        k=args.k,
        c_ratio=c_ratio,
        n_mb=n_mb,
        metric=Metric(args.metric),
        entry_mode=EntryMode(args.entry_mode),
        seed=seed,
        hidden_sizes=hidden,
        optimizer=OptimizerConfig(learning_rate=args.lr, batch_size=args.batch_size),
        flex=args.flex,
        max_rotations=args.max_rotations,
    )


def _stopping_config(args) -> StoppingConfig:
    kind = StopKind(args.stopping)
    return StoppingConfig(
        kind=kind,
        max_epochs=args.epochs,
        patience=args.patience,
        loss_patience=args.patience,
        ident_patience=args.patience,
    )


def _thread_cap(n_jobs: int) -> int:
    raw = os.environ.get("ENTRYPRUNE_THREADS", "").strip()
    try:
        cap = int(raw) if raw else 1
    except ValueError:
        raise ConfigError(f"ENTRYPRUNE_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, n_jobs))


def _fan_out(fn, jobs):
    """Run jobs with at most ENTRYPRUNE_THREADS workers, results in order."""
    workers = _thread_cap(len(jobs))
    if workers == 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _read_selected(path) -> FeatureSet:
    try:
        lines = Path(path).read_text(encoding="utf-8").split()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        idx = tuple(int(tok) for tok in lines)
    except ValueError as exc:
        raise DataError(f"{path}: selected-features files hold one integer per line") from exc
    if not idx:
        raise DataError(f"{path}: empty selection")
    return FeatureSet(idx, method="file")


def _history_lines(history):
    for rec in history:
        val = "-" if rec.val_loss is None else f"{rec.val_loss:.6f}"
        yield (
            f"phase={rec.phase} rotation={rec.rotation} epoch={rec.epoch} "
            f"loss={rec.running_loss:.6f} val_loss={val} min_top_entry={rec.min_top_entry:.6f} "
            f"top_changes={rec.top_changes} k_c={rec.k_c} c_ratio={rec.c_ratio:.6f}"
        )


def _write_run(out_dir: Path, result, cfg: SelectionConfig, stopping: StoppingConfig, source: str, args):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "selected.txt").write_text("".join(f"{i}\n" for i in result.selected), encoding="utf-8")
    (out_dir / "history.log").write_text("".join(f"{ln}\n" for ln in _history_lines(result.history)), encoding="utf-8")
    echo = {
        "command": "select",
        "source": source,
        "k": cfg.k,
        "c_ratio": cfg.c_ratio,
        "n_mb": cfg.n_mb,
        "metric": cfg.metric.value,
        "entry_mode": cfg.entry_mode.value,
        "flex": cfg.flex,
        "hidden": ",".join(str(h) for h in cfg.hidden_sizes),
        "learning_rate": cfg.optimizer.learning_rate,
        "batch_size": cfg.optimizer.batch_size,
        "stopping": stopping.kind.value,
        "patience": stopping.patience,
        "max_epochs": stopping.max_epochs,
        "train_ratio": args.train_ratio,
        "test_ratio": args.test_ratio,
        "split_seed": args.split_seed,
        "seed": cfg.seed,
        "stopped_at_rotation": result.stopped_at_rotation,
        "retrained": result.retrained,
        "total_epochs": result.total_epochs,
        "selected_count": len(result.selected),
        "wall_time_s": f"{result.wall_time:.2f}",
    }
    report = "".join(f"{key} = {value}\n" for key, value in echo.items())
    (out_dir / "report.txt").write_text(report, encoding="utf-8")


def cmd_select(args) -> int:
    std, split, source = _resolve_data(args)
    cfg = _selection_config(args, args.seed)
    stopping = _stopping_config(args)
    cfg.validate(std.n_features)
    out = Path(args.out or "entryprune_out")
    seeds = [args.seed + i for i in range(max(1, args.runs))]

    def one(seed):
        run_cfg = replace(cfg, seed=seed)
        return run_entryprune(std, run_cfg, stopping, SeededRng(seed), split=split)

    results = _fan_out(one, seeds)
    if len(results) == 1:
        _write_run(out, results[0], cfg, stopping, source, args)
    else:
        for i, (seed, result) in enumerate(zip(seeds, results)):
            _write_run(out / f"run_{i:02d}", result, replace(cfg, seed=seed), stopping, source, args)
        sets = [FeatureSet(tuple(r.selected), method="entryprune", seed=s) for s, r in zip(seeds, results)]
        lines = [f"runs = {len(results)}", f"seeds = {','.join(str(s) for s in seeds)}"]
        lines.append(f"stability_mean_pairwise_ji = {stability(sets):.4f}")
        for i, r in enumerate(results):
            lines.append(f"run_{i:02d}_selected = {','.join(str(f) for f in r.selected)}")
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text("".join(f"{ln}\n" for ln in lines), encoding="utf-8")
    print(f"selected features written to {out}")
    return 0


def _learner_fn(args):
    if args.learner == "knn":
        return lambda train, test, fs: knn_accuracy(train, test, fs, k=args.knn_k)
    return linear_classifier_accuracy


def cmd_eval(args) -> int:
    std, split, source = _resolve_data(args)
    if split.test.size == 0:
        raise ConfigError("evaluation needs a test partition (set --test-ratio > 0)")
    train = (std.X[split.train], std.y[split.train])
    test = (std.X[split.test], std.y[split.test])
    if args.random_baseline:
        if args.k is None:
            raise ConfigError("--random-baseline needs --k")
        sets = random_baseline(std.n_features, args.k, args.seed, runs=max(1, args.runs))
        label = "random"
    elif args.selected:
        sets = [_read_selected(args.selected)]
        label = "file"
    else:
        sets = [FeatureSet(tuple(range(std.n_features)), method="all")]
        label = "all"
    fn = _learner_fn(args)
    accs = [fn(train, test, fs).runs[0] for fs in sets]
    lines = [
        "command = eval",
        f"source = {source}",
        f"learner = {args.learner}" + (f" (k={args.knn_k})" if args.learner == "knn" else ""),
        f"feature_source = {label}",
        f"features = {sets[0].k}",
        f"runs = {len(accs)}",
        f"accuracy_mean = {float(np.mean(accs)):.4f}",
        f"accuracy_sd = {float(np.std(accs)):.4f}",
        f"accuracy_runs = {','.join(f'{a:.4f}' for a in accs)}",
    ]
    text = "".join(f"{ln}\n" for ln in lines)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    std, split, source = _resolve_data(args)
    if split.test.size == 0:
        raise ConfigError("ablation needs a test partition (set --test-ratio > 0)")
    base = _selection_config(args, args.seed)
    stopping = _stopping_config(args)
    train = (std.X[split.train], std.y[split.train])
    test = (std.X[split.test], std.y[split.test])
    fn = _learner_fn(args)
    seeds = [args.seed + i for i in range(max(1, args.runs))]
    jobs = [(metric, mode, seed) for metric, mode in ABLATION_GRID for seed in seeds]

    def one(job):
        metric, mode, seed = job
        cfg = replace(base, metric=metric, entry_mode=mode, seed=seed)
        result = run_entryprune(std, cfg, stopping, SeededRng(seed), split=split)
        fs = FeatureSet(tuple(result.selected), method=f"{metric.value}/{mode.value}", seed=seed)
        return fn(train, test, fs).runs[0]

    accs = _fan_out(one, jobs)
    by_cell = {}
    for (metric, mode, _seed), acc in zip(jobs, accs):
        by_cell.setdefault((metric, mode), []).append(acc)
    means = {cell: float(np.mean(v)) for cell, v in by_cell.items()}
    best = max(means, key=lambda cell: means[cell])
    lines = ["command = ablate", f"source = {source}", f"k = {base.k}", f"runs = {len(seeds)}", ""]
    lines.append(f"{'metric':<14} {'entry_mode':<12} {'mean':>7} {'sd':>7}  per-run")
    for metric, mode in ABLATION_GRID:
        vals = by_cell[(metric, mode)]
        star = " *" if (metric, mode) == best else ""
        lines.append(
            f"{metric.value:<14} {mode.value:<12} {np.mean(vals):7.4f} {np.std(vals):7.4f}  "
            + ",".join(f"{v:.4f}" for v in vals) + star
        )
    lines.append("")
    lines.append(f"best = {best[0].value}/{best[1].value}")
    text = "".join(f"{ln}\n" for ln in lines)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_stability(args) -> int:
    std, split, source = _resolve_data(args)
    if split.test.size == 0:
        raise ConfigError("stability runs need a test partition (set --test-ratio > 0)")
    try:
        ratios = [float(tok) for tok in str(args.c_ratios).split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--c-ratios expects comma-separated numbers, got {args.c_ratios!r}") from None
    if not ratios:
        raise ConfigError("--c-ratios is empty")
    base = _selection_config(args, args.seed)
    stopping = _stopping_config(args)
    train = (std.X[split.train], std.y[split.train])
    test = (std.X[split.test], std.y[split.test])
    seeds = [args.seed + i for i in range(max(2, args.runs))]
    jobs = [(c, seed) for c in ratios for seed in seeds]

    def one(job):
        c, seed = job
        cfg = replace(base, c_ratio=c, seed=seed)
        result = run_entryprune(std, cfg, stopping, SeededRng(seed), split=split)
        fs = FeatureSet(tuple(result.selected), method="entryprune", seed=seed)
        net = network_accuracy(result, std.X[split.test], std.y[split.test])
        knn = knn_accuracy(train, test, fs, k=args.knn_k).runs[0]
        return fs, net, knn

    outputs = _fan_out(one, jobs)
    rows = {}
    for (c, _seed), (fs, net, knn) in zip(jobs, outputs):
        rows.setdefault(c, []).append((fs, net, knn))
    lines = ["command = stability", f"source = {source}", f"k = {base.k}", f"runs_per_ratio = {len(seeds)}", ""]
    lines.append(f"{'c_ratio':>7} {'mean_ji':>8} {'net_acc':>8} {'net_sd':>7} {'knn_acc':>8} {'knn_sd':>7}")
    for c in ratios:
        cells = rows[c]
        ji = stability([fs for fs, _, _ in cells])
        nets = [net for _, net, _ in cells]
        knns = [knn for _, _, knn in cells]
        lines.append(
            f"{c:7.2f} {ji:8.4f} {np.mean(nets):8.4f} {np.std(nets):7.4f} "
            f"{np.mean(knns):8.4f} {np.std(knns):7.4f}"
        )
    text = "".join(f"{ln}\n" for ln in lines)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_mask(args) -> int:
    fs = _read_selected(args.selected)
    if args.shape:
        try:
            dims = tuple(int(tok) for tok in args.shape.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--shape looks like 28x28, got {args.shape!r}") from None
        if len(dims) not in (2, 3):
            raise ConfigError(f"--shape needs 2 or 3 dimensions, got {args.shape!r}")
    elif args.data and args.labels:
        dims = load_idx(args.data, args.labels).image_shape
    else:
        raise ConfigError("mask needs --shape or an idx --data/--labels pair")
    n_rows, n_cols = dims[0], dims[1]
    channels = dims[2] if len(dims) == 3 else 1
    total = n_rows * n_cols * channels
    if fs.indices[-1] >= total:
        raise ConfigError(f"selected index {fs.indices[-1]} outside image of {total} values")
    counts = np.zeros(n_rows * n_cols, dtype=np.int64)
    for idx in fs.indices:
        counts[idx // channels] += 1
    values = np.round(255.0 * counts / channels).astype(np.int64)
    lines = ["P2", f"{n_cols} {n_rows}", "255"]
    flat = values.tolist()
    for start in range(0, len(flat), 14):
        lines.append(" ".join(str(v) for v in flat[start : start + 14]))
    text = "".join(f"{ln}\n" for ln in lines)
    out = args.out or "mask.pgm"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(text, encoding="utf-8")
    print(f"mask written to {out}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _splice_config(argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
