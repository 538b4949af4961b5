"""Shared experiment protocol: mini-batch training, evaluation, comparisons.

One loop serves every gradient-trained model kind: absolute-error loss with
an l2 penalty on all parameters, Adam updates, and best-validation-epoch
selection. All randomness descends from a single seed.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Rng, Tape, Tensor, abs_, mean
from .baselines import (
    GruConfig, GruModel, MlpSpec, TcnConfig, TcnModel, fit_ar_ensemble,
    fit_var_mlp, persistence_predictions,
)
from .data import NormStats, PipelineResult, WindowSet, WindowSpec, invert_predictions
from .errors import ConfigError, DataError, TrainingDiverged
from .graph import AdjacencyMatrix, snapshot_adjacency
from .metrics import MetricsReport, per_series_metrics
from .mtgnn import MtgnnConfig, MtgnnModel


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs; epoch/batch/loss defaults follow the reference
    experiment setup."""

    epochs: int = 30
    batch_size: int = 8
    loss: str = "l1"
    learning_rate: float = 0.001
    l2_coefficient: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.loss != "l1":
            raise ConfigError(f"only the l1 loss is supported, got {self.loss!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_coefficient < 0:
            raise ConfigError(f"l2_coefficient must be nonnegative, got {self.l2_coefficient}")


@dataclass
class TrainResult:
    model: object
    adjacency: AdjacencyMatrix | None
    history: list[dict]
    best_epoch: int


def _batch_loss(model, x: np.ndarray, y: np.ndarray, training: bool,
                rng: Rng | None):
    pred = model.forward_batch(Tensor(x), training=training, rng=rng)
    return mean(abs_(pred - Tensor(y)))


def _validation_loss(model, windows: WindowSet, chunk: int = 128) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(windows), chunk):
        x = windows.x[lo:lo + chunk]
        y = windows.y[lo:lo + chunk]
        pred = model.forward_batch(Tensor(x), training=False, rng=None)
        total += float(np.sum(np.abs(pred.data - y)))
        count += y.size
    return total / count


def train(model, train_windows: WindowSet, val_windows: WindowSet,
          config: TrainConfig = TrainConfig(), rng: Rng | None = None,
          labels=None) -> TrainResult:
    """Minimize mean |error| + l2 * sum(theta^2) and keep the best-validation weights.

    Works on any model exposing forward_batch/parameters/state_dict. Returns
    the per-epoch loss history; for graph-learning models the adjacency is
    snapshotted from the returned (best) weights. A non-finite loss aborts
    with the offending epoch.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise DataError("training and validation window sets must be nonempty")
    from .optim import Adam
    rng = rng or Rng(config.seed)
    shuffle_rng = rng.split()
    dropout_rng = rng.split()

    opt = Adam(model.parameters(), lr=config.learning_rate, l2=config.l2_coefficient)
    history: list[dict] = []
    best_state = model.state_dict()
    best_val = np.inf
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_windows))
        total, count = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            opt.zero_grad()
            tape = Tape()
            with tape:
                loss = _batch_loss(model, train_windows.x[idx], train_windows.y[idx],
                                   training=True, rng=dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            tape.backward(loss)
            opt.step()
            total += value * len(idx)
            count += len(idx)
        train_loss = total / count
        val_loss = _validation_loss(model, val_windows)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_state = model.state_dict()
            best_epoch = epoch

    model.load_state_dict(best_state)
    adjacency = None
    if isinstance(model, MtgnnModel):
        adjacency = snapshot_adjacency(model.embeddings, model.graph_params, labels)
    return TrainResult(model=model, adjacency=adjacency, history=history, best_epoch=best_epoch)


@dataclass
class EvalResult:
    report: MetricsReport
    y_true: np.ndarray
    y_pred: np.ndarray
    price_true: np.ndarray
    price_pred: np.ndarray


def evaluate(model, windows: WindowSet, stats: NormStats, labels=None, *,
             split: str = "test", seed: int | None = None,
             config: dict | None = None) -> EvalResult:
    """Rolling one-step-ahead evaluation over a window set.

    Metrics are computed on the normalized scale the models are trained on;
    the returned traces additionally carry the fully inverted price-scale
    values (exp of the de-normalized predictions).
    """
    if len(windows) == 0:
        raise DataError("empty evaluation window set")
    labels = tuple(labels) if labels is not None else tuple(stats.columns)
    horizon = windows.y.shape[2]
    if hasattr(model, "predict_windows"):
        pred = model.predict_windows(windows.x, horizon=horizon)
    else:
        pred = model.forward_batch(windows.x).data
    if pred.shape != windows.y.shape:
        raise DataError(f"prediction shape {pred.shape} does not match targets {windows.y.shape}")

    y_true = windows.y[:, :, 0]
    y_pred = pred[:, :, 0]
    report = MetricsReport(
        model_kind=getattr(model, "kind", type(model).__name__),
        series=labels,
        per_series=per_series_metrics(y_true, y_pred, labels),
        config=config or {},
        split=split,
        seed=seed,
    )
    return EvalResult(
        report=report,
        y_true=y_true,
        y_pred=y_pred,
        price_true=invert_predictions(y_true, stats),
        price_pred=invert_predictions(y_pred, stats),
    )


class _PersistenceModel:
    """Windows in, last observed value out; the no-learning floor."""

    kind = "persistence"

    def __init__(self, horizon: int):
        self.horizon = horizon

    def predict_windows(self, x: np.ndarray, horizon: int | None = None) -> np.ndarray:
        return persistence_predictions(x, horizon or self.horizon)


@dataclass(frozen=True)
class ComparisonSpec:
    """Which models to run and with what knobs; shared training protocol."""

    train: TrainConfig = TrainConfig()
    ar_order: int = 5
    var_order: int = 5
    mlp: MlpSpec = MlpSpec()
    gru_hidden: int = 64
    tcn_channels: int = 16
    tcn_blocks: int = 3
    mtgnn: dict = field(default_factory=dict)
    include: tuple[str, ...] = ("persistence", "ar", "var_mlp", "gru", "tcn", "mtgnn")

    def __post_init__(self):
        known = {"persistence", "ar", "var_mlp", "gru", "tcn", "mtgnn"}
        bad = set(self.include) - known
        if bad:
            raise ConfigError(f"unknown model kind(s) in include: {sorted(bad)}")


@dataclass
class ComparisonResult:
    series: tuple[str, ...]
    reports: dict[str, MetricsReport]
    errors: dict[str, str]
    flags: dict[str, dict[str, dict]]
    histories: dict[str, list[dict]]

    def to_dict(self) -> dict:
        return {
            "series": list(self.series),
            "models": {k: r.to_dict() for k, r in self.reports.items()},
            "errors": dict(self.errors),
            "flags": self.flags,
        }

    def render_markdown(self) -> str:
        """Table per series; best value bold, second-best italic."""
        metric_names = ("rse", "rmse", "mae", "mape")
        lines = ["Best value per metric in **bold**, second best in *italics*.", ""]
        model_names = list(self.reports)
        for series in self.series:
            lines.append(f"### {series}")
            lines.append("| model | RSE | RMSE | MAE | MAPE |")
            lines.append("|---|---|---|---|---|")
            for name in model_names:
                cells = []
                for metric in metric_names:
                    value = self.reports[name].per_series[series][metric]
                    text = f"{100.0 * value:.1f}%" if metric == "mape" else f"{value:.3f}"
                    flag = self.flags[series][metric]
                    if flag["best"] == name:
                        text = f"**{text}**"
                    elif flag.get("second") == name:
                        text = f"*{text}*"
                    cells.append(text)
                lines.append(f"| {name} | " + " | ".join(cells) + " |")
            lines.append("")
        for name, message in self.errors.items():
            lines.append(f"- {name}: FAILED ({message})")
        return "\n".join(lines)


def _rank_flags(series: tuple[str, ...], reports: dict[str, MetricsReport]) -> dict:
    flags: dict[str, dict[str, dict]] = {}
    for s in series:
        flags[s] = {}
        for metric in ("rse", "rmse", "mae", "mape"):
            ranked = sorted(reports, key=lambda name: (reports[name].per_series[s][metric], name))
            flags[s][metric] = {"best": ranked[0] if ranked else None,
                                "second": ranked[1] if len(ranked) > 1 else None}
    return flags


def run_comparison(pipeline: PipelineResult, window_spec: WindowSpec,
                   spec: ComparisonSpec = ComparisonSpec()) -> ComparisonResult:
    """Fit every requested model on identical splits and score the test windows.

    A failing model is recorded under `errors` and the rest still run.
    """
    labels = pipeline.train.columns
    n = len(labels)
    root = Rng(spec.train.seed)
    # Fixed spawn order keeps per-model streams stable however `include` is set.
    streams = {name: root.split() for name in ("persistence", "ar", "var_mlp", "gru", "tcn", "mtgnn")}

    reports: dict[str, MetricsReport] = {}
    errors: dict[str, str] = {}
    histories: dict[str, list[dict]] = {}

    def score(name, model, extra_config=None):
        result = evaluate(model, pipeline.test_windows, pipeline.stats, labels,
                          seed=spec.train.seed, config=extra_config or {})
        reports[name] = result.report

    for name in spec.include:
        try:
            if name == "persistence":
                score(name, _PersistenceModel(window_spec.Q))
            elif name == "ar":
                model = fit_ar_ensemble(pipeline.train.values, spec.ar_order)
                score(name, model, {"order": spec.ar_order})
            elif name == "var_mlp":
                model = fit_var_mlp(pipeline.train.values, spec.var_order, spec.mlp,
                                    streams[name])
                score(name, model, {"order": spec.var_order, "hidden": spec.mlp.hidden,
                                    "epochs": spec.mlp.epochs})
            elif name == "gru":
                model = GruModel(GruConfig(num_series=n, hidden_size=spec.gru_hidden,
                                           horizon=window_spec.Q), streams[name].split())
                result = train(model, pipeline.train_windows, pipeline.validation_windows,
                               spec.train, rng=streams[name].split())
                histories[name] = result.history
                score(name, result.model, {"hidden": spec.gru_hidden})
            elif name == "tcn":
                model = TcnModel(TcnConfig(channels=spec.tcn_channels,
                                           num_blocks=spec.tcn_blocks,
                                           horizon=window_spec.Q), streams[name].split())
                result = train(model, pipeline.train_windows, pipeline.validation_windows,
                               spec.train, rng=streams[name].split())
                histories[name] = result.history
                score(name, result.model, {"channels": spec.tcn_channels,
                                           "blocks": spec.tcn_blocks})
            elif name == "mtgnn":
                cfg = MtgnnConfig(num_nodes=n, input_window=window_spec.P,
                                  horizon=window_spec.Q, **spec.mtgnn)
                model = MtgnnModel(cfg, streams[name].split())
                result = train(model, pipeline.train_windows, pipeline.validation_windows,
                               spec.train, rng=streams[name].split(), labels=labels)
                histories[name] = result.history
                score(name, result.model, {k: v for k, v in asdict(cfg).items()
                                           if k != "num_nodes"})
        except Exception as exc:  # noqa: BLE001 - per-model isolation is the contract
            errors[name] = f"{type(exc).__name__}: {exc}"

    flags = _rank_flags(tuple(labels), reports)
    return ComparisonResult(series=tuple(labels), reports=reports, errors=errors,
                            flags=flags, histories=histories)


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"])])


def write_trace_csv(path, dates, labels, actual: np.ndarray, predicted: np.ndarray) -> None:
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape or actual.shape != (len(dates), len(labels)):
        raise DataError(f"trace shapes {actual.shape}/{predicted.shape} do not match "
                        f"{len(dates)} dates x {len(labels)} series")
    header = ["date"]
    for label in labels:
        header += [f"{label}_actual", f"{label}_predicted"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, d in enumerate(dates):
            row = [d.isoformat() if hasattr(d, "isoformat") else str(d)]
            for j in range(len(labels)):
                row += [repr(float(actual[i, j])), repr(float(predicted[i, j]))]
            writer.writerow(row)
