"""Command-line front end: analyze, train, compare, influence, forecast.

Full runs are driven by a JSON config document rather than a pile of flags,
so a run is reproducible from one file; flags cover paths and small
overrides only. Every artifact written is echoed to stdout as a manifest
line. Exit codes: 0 success, 1 runtime/model failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Rng
from .charts import svg_heatmap, svg_line_chart
from .data import (
    RebaseRule, SplitSpec, WindowSpec, adjust_rebased_series, descriptive_stats,
    load_csv, log_transform, make_windows, normalize, run_pipeline,
)
from .data import NormStats
from .errors import ConfigError, DataError, MarketGraphError
from .graph import (
    G7_COUNTRIES, MINT_COUNTRIES, rank_influence, read_adjacency_csv,
    write_adjacency_csv,
)
from .metrics import dtw_matrix, spearman_matrix, write_labeled_matrix_csv
from .mtgnn import MtgnnConfig, MtgnnModel
from .training import (
    ComparisonSpec, TrainConfig, evaluate, run_comparison, train,
    write_history_csv, write_trace_csv,
)
from .baselines import MlpSpec

_MODEL_OVERRIDE_KEYS = {
    "num_layers", "conv_channels", "residual_channels", "skip_channels",
    "dropout", "gc_depth", "embedding_dim", "retain_ratio", "kernel_size",
    "alpha", "k", "use_residual",
}
_BASELINE_KEYS = {"ar_order", "var_order", "mlp_hidden", "mlp_epochs",
                  "gru_hidden", "tcn_channels", "tcn_blocks", "include"}


@dataclass
class RunConfig:
    """Validated mirror of the JSON run document."""

    dataset: str | None = None
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    window: WindowSpec = field(default_factory=WindowSpec)
    rebase: tuple[RebaseRule, ...] = ()
    train: TrainConfig = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)


def _reject_unknown(section: str, given: dict, allowed: set[str]) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def parse_run_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    _reject_unknown("config", doc, {"dataset", "seed", "split", "window", "rebase",
                                    "train", "model", "baselines"})

    split_doc = doc.get("split", {})
    _reject_unknown("split", split_doc, {"train", "validation", "test"})
    window_doc = doc.get("window", {})
    _reject_unknown("window", window_doc, {"P", "Q"})
    train_doc = doc.get("train", {})
    _reject_unknown("train", train_doc,
                    {"epochs", "batch_size", "loss", "learning_rate", "l2_coefficient"})
    model_doc = doc.get("model", {})
    _reject_unknown("model", model_doc, _MODEL_OVERRIDE_KEYS)
    baselines_doc = doc.get("baselines", {})
    _reject_unknown("baselines", baselines_doc, _BASELINE_KEYS)

    rebase_rules = []
    for i, entry in enumerate(doc.get("rebase", [])):
        _reject_unknown(f"rebase[{i}]", entry, {"column", "cutoff", "divisor"})
        try:
            from datetime import date
            cutoff = date.fromisoformat(entry["cutoff"])
        except (KeyError, ValueError):
            raise ConfigError(f"rebase[{i}] needs a cutoff in YYYY-MM-DD form") from None
        if "column" not in entry:
            raise ConfigError(f"rebase[{i}] needs a column name")
        rebase_rules.append(RebaseRule(column=entry["column"], cutoff=cutoff,
                                       divisor=float(entry.get("divisor", 100.0))))

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    try:
        return RunConfig(
            dataset=doc.get("dataset"),
            seed=seed,
            split=SplitSpec(**split_doc),
            window=WindowSpec(**window_doc),
            rebase=tuple(rebase_rules),
            train=TrainConfig(seed=seed, **train_doc),
            model=dict(model_doc),
            baselines=dict(baselines_doc),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve_seed(config_seed: int) -> int:
    env = os.environ.get("MARKETGRAPH_SEED")
    if env is None or env == "":
        return config_seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"MARKETGRAPH_SEED must be an integer, got {env!r}") from None


def _emit(path: Path) -> None:
    print(f"wrote {path}")


def _out_dir(raw: str) -> Path:
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label)


def _require_dataset(cfg: RunConfig) -> str:
    if not cfg.dataset:
        raise ConfigError("config has no dataset path")
    if not Path(cfg.dataset).exists():
        raise ConfigError(f"dataset not found: {cfg.dataset}")
    return cfg.dataset


def _comparison_spec(cfg: RunConfig, train_cfg: TrainConfig) -> ComparisonSpec:
    b = cfg.baselines
    mlp = MlpSpec(hidden=b.get("mlp_hidden", 32), epochs=b.get("mlp_epochs", 100))
    kwargs = {
        "train": train_cfg,
        "ar_order": b.get("ar_order", 5),
        "var_order": b.get("var_order", 5),
        "mlp": mlp,
        "gru_hidden": b.get("gru_hidden", 64),
        "tcn_channels": b.get("tcn_channels", 16),
        "tcn_blocks": b.get("tcn_blocks", 3),
        "mtgnn": dict(cfg.model),
    }
    if "include" in b:
        kwargs["include"] = tuple(b["include"])
    return ComparisonSpec(**kwargs)


# -- commands ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    frame = load_csv(args.csv)
    if args.config:
        cfg = parse_run_config(args.config)
        for rule in cfg.rebase:
            frame = adjust_rebased_series(frame, rule.column, rule.cutoff, rule.divisor)
    out = _out_dir(args.out)

    stats = descriptive_stats(frame)
    stats_path = out / "descriptive_stats.csv"
    keys = ("size", "mean", "median", "std", "min", "max", "skewness", "kurtosis")
    with open(stats_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", *keys])
        for name in frame.columns:
            writer.writerow([name, *(repr(stats[name][k]) for k in keys)])
    _emit(stats_path)

    spearman = spearman_matrix(frame)
    sp_csv, sp_svg = out / "spearman.csv", out / "spearman.svg"
    write_labeled_matrix_csv(frame.columns, spearman, sp_csv)
    sp_svg.write_text(svg_heatmap(frame.columns, spearman, "Rank correlation"), encoding="utf-8")
    _emit(sp_csv)
    _emit(sp_svg)

    warped = dtw_matrix(frame)
    dt_csv, dt_svg = out / "dtw.csv", out / "dtw.svg"
    write_labeled_matrix_csv(frame.columns, warped, dt_csv)
    dt_svg.write_text(svg_heatmap(frame.columns, warped, "Warping distance (z-scored)"), encoding="utf-8")
    _emit(dt_csv)
    _emit(dt_svg)
    return 0


def _checkpoint_extra(pipeline, cfg: RunConfig) -> dict:
    return {
        "labels": list(pipeline.train.columns),
        "norm_stats": pipeline.report["norm_stats"],
        "window": {"P": cfg.window.P, "Q": cfg.window.Q},
        "rebase": [{"column": r.column, "cutoff": r.cutoff.isoformat(), "divisor": r.divisor}
                   for r in cfg.rebase],
    }


def cmd_train(args) -> int:
    cfg = parse_run_config(args.config)
    dataset = _require_dataset(cfg)
    seed = _resolve_seed(cfg.seed)
    train_cfg = TrainConfig(epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
                            loss=cfg.train.loss, learning_rate=cfg.train.learning_rate,
                            l2_coefficient=cfg.train.l2_coefficient, seed=seed)
    out = _out_dir(args.out)

    pipeline = run_pipeline(dataset, cfg.window, cfg.split, cfg.rebase)
    labels = pipeline.train.columns
    model_cfg = MtgnnConfig(num_nodes=len(labels), input_window=cfg.window.P,
                            horizon=cfg.window.Q, **cfg.model)
    root = Rng(seed)
    model = MtgnnModel(model_cfg, root.split())
    result = train(model, pipeline.train_windows, pipeline.validation_windows,
                   train_cfg, rng=root.split(), labels=labels)

    ckpt_path = out / "checkpoint.json"
    from .checkpoint import save_checkpoint
    from dataclasses import asdict
    save_checkpoint(ckpt_path, kind="mtgnn", config=asdict(model_cfg),
                    params=result.model.state_dict(),
                    extra=_checkpoint_extra(pipeline, cfg))
    _emit(ckpt_path)

    hist_path = out / "history.csv"
    write_history_csv(result.history, hist_path)
    _emit(hist_path)

    adj_path = out / "adjacency.csv"
    write_adjacency_csv(result.adjacency, adj_path)
    _emit(adj_path)

    eval_result = evaluate(result.model, pipeline.test_windows, pipeline.stats, labels,
                           seed=seed, config={"epochs": train_cfg.epochs})
    report_path = out / "report.json"
    report_path.write_text(json.dumps({
        "pipeline": pipeline.report,
        "train": {"epochs": train_cfg.epochs, "batch_size": train_cfg.batch_size,
                  "loss": train_cfg.loss, "learning_rate": train_cfg.learning_rate,
                  "l2_coefficient": train_cfg.l2_coefficient, "seed": seed,
                  "best_epoch": result.best_epoch},
        "test_metrics": eval_result.report.to_dict(),
    }, indent=2), encoding="utf-8")
    _emit(report_path)
    return 0


def cmd_compare(args) -> int:
    cfg = parse_run_config(args.config)
    dataset = _require_dataset(cfg)
    seed = _resolve_seed(cfg.seed)
    train_cfg = TrainConfig(epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
                            loss=cfg.train.loss, learning_rate=cfg.train.learning_rate,
                            l2_coefficient=cfg.train.l2_coefficient, seed=seed)
    out = _out_dir(args.out)

    pipeline = run_pipeline(dataset, cfg.window, cfg.split, cfg.rebase)
    result = run_comparison(pipeline, cfg.window, _comparison_spec(cfg, train_cfg))

    json_path = out / "comparison.json"
    json_path.write_text(json.dumps(result.to_dict(), indent=2), encoding="utf-8")
    _emit(json_path)
    md_path = out / "comparison.md"
    md_path.write_text(result.render_markdown(), encoding="utf-8")
    _emit(md_path)

    for name, message in result.errors.items():
        print(f"model {name} failed: {message}", file=sys.stderr)
    return 0 if result.reports else 1


def cmd_influence(args) -> int:
    adj = read_adjacency_csv(args.adjacency)
    group = None
    if args.group:
        presets = {"g7": G7_COUNTRIES, "mint": MINT_COUNTRIES}
        group = presets.get(args.group.lower()) or [s.strip() for s in args.group.split(",")]
    for label, degree in rank_influence(adj, hops=args.hops, group=group):
        print(f"{label}\t{degree}")
    return 0


def cmd_forecast(args) -> int:
    model = MtgnnModel.load(args.checkpoint)
    from .checkpoint import load_checkpoint
    extra = load_checkpoint(args.checkpoint).extra
    for key in ("labels", "norm_stats", "window"):
        if key not in extra:
            raise ConfigError(f"{args.checkpoint}: checkpoint lacks {key!r} metadata; "
                              "re-train with the current tooling")
    stats = NormStats(columns=tuple(extra["norm_stats"]["columns"]),
                      mean=np.array(extra["norm_stats"]["mean"]),
                      std=np.array(extra["norm_stats"]["std"]))
    P, Q = extra["window"]["P"], extra["window"]["Q"]

    frame = load_csv(args.csv)
    for rule in extra.get("rebase", []):
        frame = adjust_rebased_series(frame, rule["column"], rule["cutoff"], rule["divisor"])
    frame = normalize(log_transform(frame), stats)
    out = _out_dir(args.out)

    trace_path = out / "forecast.csv"
    labels = frame.columns
    if args.steps == 0:
        write_trace_csv(trace_path, [], labels,
                        np.zeros((0, len(labels))), np.zeros((0, len(labels))))
        _emit(trace_path)
        return 0

    windows = make_windows(frame, WindowSpec(P=P, Q=Q))
    steps = len(windows) if args.steps is None else args.steps
    if steps < 0:
        raise ConfigError(f"steps must be nonnegative, got {steps}")
    if steps > len(windows):
        raise DataError(f"only {len(windows)} forecast positions available, {steps} requested")
    x = windows.x[-steps:]
    y = windows.y[-steps:, :, 0]
    starts = windows.start_indices[-steps:]
    pred = model.predict_windows(x, horizon=Q)[:, :, 0]

    from .data import invert_predictions
    actual_price = invert_predictions(y, stats)
    pred_price = invert_predictions(pred, stats)
    dates = [frame.dates[s + P] for s in starts]

    write_trace_csv(trace_path, dates, labels, actual_price, pred_price)
    _emit(trace_path)
    date_labels = [d.isoformat() for d in dates]
    for j, label in enumerate(labels):
        svg_path = out / f"forecast_{_safe_name(label)}.svg"
        svg_path.write_text(
            svg_line_chart(date_labels,
                           {"actual": actual_price[:, j], "predicted": pred_price[:, j]},
                           title=str(label)),
            encoding="utf-8",
        )
        _emit(svg_path)
    return 0


# -- wiring ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketgraph",
        description="Multivariate index forecasting with a learned inter-series graph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="descriptive stats, rank-correlation and warping-distance matrices")
    p.add_argument("csv", help="input CSV (date,<series>,... header)")
    p.add_argument("--out", default="analysis", help="output directory")
    p.add_argument("--config", default=None, help="optional run config (for rebasing rules)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="run the pipeline and train the graph model")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train every model kind and tabulate test metrics")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", default="comparison", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("influence", help="rank nodes of an adjacency CSV by out-degree")
    p.add_argument("adjacency", help="adjacency CSV (labels in header and first column)")
    p.add_argument("--hops", type=int, choices=(1, 2), default=1)
    p.add_argument("--group", default=None,
                   help="G7, MINT, or a comma-separated list of node labels")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("forecast", help="rolling forecasts from a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint written by `train`")
    p.add_argument("--csv", required=True, help="input CSV to forecast over")
    p.add_argument("--steps", type=int, default=None,
                   help="number of trailing forecast positions (default: all)")
    p.add_argument("--out", default="forecast", help="output directory")
    p.set_defaults(func=cmd_forecast)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MarketGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
