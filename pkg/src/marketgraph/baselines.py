"""Reference forecasters: per-series AR, VAR-MLP hybrid, multivariate GRU, TCN.

The neural baselines are built on the same tensor engine and trained by the
same harness as the graph model, so comparisons isolate architecture rather
than optimization differences.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import (
    Rng, Tape, Tensor, abs_, add_bias, causal_conv1d, channel_linear,
    last_step, mean, permute, relu, reshape, sigmoid, stack_last, tanh,
    time_index,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, DomainError, ShapeError
from .optim import Adam


# -- autoregression ----------------------------------------------------------

@dataclass(frozen=True)
class ArModel:
    """One series regressed on its own p most recent values."""

    order: int
    intercept: float
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.float64))
        if self.order < 1 or self.coeffs.shape != (self.order,):
            raise ShapeError(f"order {self.order} needs {self.order} coefficients, got {self.coeffs.shape}")
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(self.coeffs))):
            raise DataError("coefficients must be finite")


def fit_ar(series, p: int) -> ArModel:
    """Least-squares fit of x_t ~ c + sum_i phi_i * x_{t-i}.

    A constant series is handled by the intercept alone; any other exactly
    collinear lag structure is an error rather than an arbitrary solution.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if p < 1:
        raise DomainError(f"order must be at least 1, got {p}")
    if x.size <= p + 1:
        raise DataError(f"need more than {p + 1} observations for order {p}, have {x.size}")
    if np.ptp(x) == 0:
        return ArModel(order=p, intercept=float(x[0]), coeffs=np.zeros(p))
    rows = x.size - p
    design = np.ones((rows, p + 1))
    for i in range(1, p + 1):
        design[:, i] = x[p - i:x.size - i]
    coef, _, rank, _ = np.linalg.lstsq(design, x[p:], rcond=None)
    if rank < p + 1:
        raise DataError(f"exactly collinear lag structure at order {p}; reduce the order")
    return ArModel(order=p, intercept=float(coef[0]), coeffs=coef[1:])


def predict_ar(model: ArModel, history, steps: int) -> np.ndarray:
    """Recursive one-step forecasts; earlier forecasts feed later ones."""
    h = list(np.asarray(history, dtype=np.float64).reshape(-1))
    if steps < 0:
        raise DomainError(f"steps must be nonnegative, got {steps}")
    if len(h) < model.order:
        raise DataError(f"history of {len(h)} values is shorter than order {model.order}")
    out = []
    for _ in range(steps):
        recent = h[:-model.order - 1:-1]
        out.append(model.intercept + float(np.dot(model.coeffs, recent)))
        h.append(out[-1])
    return np.array(out)


class ArEnsemble:
    """Independent AR fits, one per series, behind the shared window API."""

    kind = "ar"

    def __init__(self, models: Sequence[ArModel]):
        if not models:
            raise DataError("empty ensemble")
        self.models = list(models)

    @property
    def order(self) -> int:
        return self.models[0].order

    def predict_windows(self, x: np.ndarray, horizon: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        B, N, P = x.shape
        if N != len(self.models):
            raise ShapeError(f"{N} series but {len(self.models)} fitted models")
        out = np.zeros((B, N, horizon))
        for j, m in enumerate(self.models):
            h = x[:, j, :]
            for q in range(horizon):
                recent = h[:, :-m.order - 1:-1]
                nxt = m.intercept + recent @ m.coeffs
                out[:, j, q] = nxt
                h = np.concatenate([h, nxt[:, None]], axis=1)
        return out

    def save(self, path) -> None:
        params = {}
        for j, m in enumerate(self.models):
            params[f"series{j}.intercept"] = np.array([m.intercept])
            params[f"series{j}.coeffs"] = m.coeffs
        save_checkpoint(path, kind="ar", config={"order": self.order, "num_series": len(self.models)},
                        params=params)

    @classmethod
    def load(cls, path) -> "ArEnsemble":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "ar":
            raise ConfigError(f"{path}: checkpoint holds a {ckpt.kind!r} model, not ar")
        n, p = ckpt.config["num_series"], ckpt.config["order"]
        return cls([ArModel(order=p,
                            intercept=float(ckpt.params[f"series{j}.intercept"][0]),
                            coeffs=ckpt.params[f"series{j}.coeffs"]) for j in range(n)])


def fit_ar_ensemble(values: np.ndarray, p: int) -> ArEnsemble:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected [rows, series] values, got {values.shape}")
    return ArEnsemble([fit_ar(values[:, j], p) for j in range(values.shape[1])])


# -- vector autoregression with a nonlinear residual correction ---------------

def _var_design(values: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    # Row for target x_t: [1, x_{t-1} (N cells), x_{t-2}, ..., x_{t-p}].
    T, N = values.shape
    rows = T - p
    design = np.ones((rows, 1 + N * p))
    for lag in range(1, p + 1):
        design[:, 1 + (lag - 1) * N:1 + lag * N] = values[p - lag:T - lag]
    return design, values[p:]


def fit_var(values: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """OLS estimate of x_t = c + sum_lag x_{t-lag} @ A_lag.

    Returns (intercept [N], coefficient stack [p, N, N]); A_lag right-multiplies
    the lagged row vector, so A_lag[m, n] couples series m into series n.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected [rows, series] values, got {values.shape}")
    if p < 1:
        raise DomainError(f"order must be at least 1, got {p}")
    T, N = values.shape
    if T - p <= 1 + N * p:
        raise DataError(f"{T} rows are too few for a VAR({p}) over {N} series")
    design, targets = _var_design(values, p)
    sol, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < design.shape[1]:
        raise DataError("singular VAR design matrix (collinear series or lags)")
    return sol[0], sol[1:].reshape(p, N, N)


@dataclass(frozen=True)
class MlpSpec:
    """Residual-correction network: one tanh hidden layer plus linear output."""

    hidden: int = 32
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 32

    def __post_init__(self):
        if self.hidden < 1 or self.batch_size < 1:
            raise ConfigError("hidden width and batch size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")


class VarMlpModel:
    """Linear VAR forecast plus an MLP trained on the VAR's residuals.

    The output layer starts at zero, so an untrained MLP contributes exactly
    nothing and the model degenerates to pure VAR.
    """

    kind = "var_mlp"

    def __init__(self, order: int, intercept: np.ndarray, coef: np.ndarray,
                 w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor):
        self.order = order
        self.intercept = np.asarray(intercept, dtype=np.float64)
        self.coef = np.asarray(coef, dtype=np.float64)
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        n = self.intercept.shape[0]
        if self.coef.shape != (order, n, n):
            raise ShapeError(f"coefficient stack {self.coef.shape} does not match order {order} over {n} series")
        if self.w1.shape[0] != n * order:
            raise ShapeError(f"MLP input width {self.w1.shape[0]} must equal N*order = {n * order}")

    @property
    def num_series(self) -> int:
        return self.intercept.shape[0]

    def _var_step(self, lag_rows: np.ndarray) -> np.ndarray:
        # lag_rows[..., lag-1, :] is x_{t-lag}; contributions sum over lags.
        out = np.tensordot(lag_rows, self.coef, axes=([-2, -1], [0, 1]))
        return self.intercept + out

    def _mlp_correction(self, lag_vec: np.ndarray) -> np.ndarray:
        h = np.tanh(lag_vec @ self.w1.data + self.b1.data)
        return h @ self.w2.data + self.b2.data

    def predict(self, history: np.ndarray, steps: int) -> np.ndarray:
        """history is [rows >= order, N] in time order; returns [steps, N]."""
        hist = np.asarray(history, dtype=np.float64)
        if hist.ndim != 2 or hist.shape[0] < self.order:
            raise DataError(f"history must be [rows >= {self.order}, {self.num_series}]")
        rows = [hist[i] for i in range(hist.shape[0])]
        out = []
        for _ in range(max(steps, 0)):
            lags = np.stack([rows[-lag] for lag in range(1, self.order + 1)])
            pred = self._var_step(lags) + self._mlp_correction(lags.reshape(-1))
            out.append(pred)
            rows.append(pred)
        return np.array(out) if out else np.zeros((0, self.num_series))

    def predict_windows(self, x: np.ndarray, horizon: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        B, N, P = x.shape
        if P < self.order:
            raise DataError(f"window of {P} steps is shorter than VAR order {self.order}")
        out = np.zeros((B, N, horizon))
        hist = np.swapaxes(x, 1, 2)  # [B, P, N]
        for q in range(horizon):
            lags = np.stack([hist[:, hist.shape[1] - lag, :] for lag in range(1, self.order + 1)], axis=1)
            pred = self._var_step(lags) + self._mlp_correction(lags.reshape(B, -1))
            out[:, :, q] = pred
            hist = np.concatenate([hist, pred[:, None, :]], axis=1)
        return out

    def save(self, path) -> None:
        save_checkpoint(path, kind=self.kind,
                        config={"order": self.order, "num_series": self.num_series,
                                "hidden": self.w1.shape[1]},
                        params={"var.intercept": self.intercept, "var.coef": self.coef,
                                "mlp.w1": self.w1.data, "mlp.b1": self.b1.data,
                                "mlp.w2": self.w2.data, "mlp.b2": self.b2.data})

    @classmethod
    def load(cls, path) -> "VarMlpModel":
        ckpt = load_checkpoint(path)
        if ckpt.kind != cls.kind:
            raise ConfigError(f"{path}: checkpoint holds a {ckpt.kind!r} model, not {cls.kind}")
        p = ckpt.params
        return cls(order=ckpt.config["order"], intercept=p["var.intercept"], coef=p["var.coef"],
                   w1=Tensor(p["mlp.w1"], requires_grad=True), b1=Tensor(p["mlp.b1"], requires_grad=True),
                   w2=Tensor(p["mlp.w2"], requires_grad=True), b2=Tensor(p["mlp.b2"], requires_grad=True))


def fit_var_mlp(values: np.ndarray, var_order: int, spec: MlpSpec = MlpSpec(),
                rng: Rng | None = None) -> VarMlpModel:
    """VAR by least squares, then an MLP fitted to the VAR residuals (Adam, l1)."""
    values = np.asarray(values, dtype=np.float64)
    rng = rng or Rng(0)
    intercept, coef = fit_var(values, var_order)
    design, targets = _var_design(values, var_order)
    residuals = targets - design @ np.concatenate([intercept[None, :], coef.reshape(-1, values.shape[1])])

    n = values.shape[1]
    in_dim = n * var_order
    init = rng.split()
    w1 = Tensor(init.normal((in_dim, spec.hidden), 1.0 / np.sqrt(in_dim)), requires_grad=True)
    b1 = Tensor(np.zeros(spec.hidden), requires_grad=True)
    w2 = Tensor(np.zeros((spec.hidden, n)), requires_grad=True)
    b2 = Tensor(np.zeros(n), requires_grad=True)
    model = VarMlpModel(var_order, intercept, coef, w1, b1, w2, b2)

    inputs = design[:, 1:]
    opt = Adam([w1, b1, w2, b2], lr=spec.learning_rate)
    shuffle = rng.split()
    for _ in range(spec.epochs):
        order = shuffle.permutation(inputs.shape[0])
        for lo in range(0, inputs.shape[0], spec.batch_size):
            idx = order[lo:lo + spec.batch_size]
            xb, yb = Tensor(inputs[idx]), Tensor(residuals[idx])
            opt.zero_grad()
            tape = Tape()
            with tape:
                h = tanh(add_bias(xb @ w1, b1, 1))
                out = add_bias(h @ w2, b2, 1)
                loss = mean(abs_(out - yb))
            tape.backward(loss)
            opt.step()
    return model


# -- gated recurrent unit ------------------------------------------------------

@dataclass
class GruParams:
    """Update gate z, reset gate r, candidate state weights."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    def all(self) -> list[Tensor]:
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                self.w_h, self.u_h, self.b_h]


def gru_cell(x: Tensor, h: Tensor, params: GruParams) -> Tensor:
    """One recurrence step: h' = (1-z) * h + z * tanh-candidate."""
    if x.ndim != 2 or h.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ShapeError(f"expected [batch, in] and [batch, hidden], got {x.shape} and {h.shape}")
    z = sigmoid(add_bias(x @ params.w_z + h @ params.u_z, params.b_z, 1))
    r = sigmoid(add_bias(x @ params.w_r + h @ params.u_r, params.b_r, 1))
    cand = tanh(add_bias(x @ params.w_h + (r * h) @ params.u_h, params.b_h, 1))
    return (1.0 - z) * h + z * cand


@dataclass(frozen=True)
class GruConfig:
    num_series: int
    hidden_size: int = 64
    horizon: int = 1

    def __post_init__(self):
        if self.num_series < 1 or self.hidden_size < 1 or self.horizon < 1:
            raise ConfigError("num_series, hidden_size, and horizon must be positive")


class GruModel:
    """Single-layer multivariate GRU with a linear readout of the final state."""

    kind = "gru"

    def __init__(self, config: GruConfig, rng: Rng):
        self.config = config
        n, h = config.num_series, config.hidden_size
        init = rng.split()

        def w(shape, fan):
            return Tensor(init.normal(shape, 1.0 / np.sqrt(fan)), requires_grad=True)

        def b(width):
            return Tensor(np.zeros(width), requires_grad=True)

        self.cell = GruParams(
            w_z=w((n, h), n), u_z=w((h, h), h), b_z=b(h),
            w_r=w((n, h), n), u_r=w((h, h), h), b_r=b(h),
            w_h=w((n, h), n), u_h=w((h, h), h), b_h=b(h),
        )
        self.read_w = w((h, n), h)
        self.read_b = b(n)
        self._names = {
            "cell.w_z": self.cell.w_z, "cell.u_z": self.cell.u_z, "cell.b_z": self.cell.b_z,
            "cell.w_r": self.cell.w_r, "cell.u_r": self.cell.u_r, "cell.b_r": self.cell.b_r,
            "cell.w_h": self.cell.w_h, "cell.u_h": self.cell.u_h, "cell.b_h": self.cell.b_h,
            "read.w": self.read_w, "read.b": self.read_b,
        }

    def parameters(self) -> list[Tensor]:
        return list(self._names.values())

    def forward_batch(self, x, training: bool = False, rng: Rng | None = None) -> Tensor:
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        if x.ndim != 3 or x.shape[1] != self.config.num_series:
            raise ShapeError(f"expected [batch, {self.config.num_series}, steps], got {x.shape}")
        B, N, P = x.shape
        h = Tensor(np.zeros((B, self.config.hidden_size)))
        for t in range(P):
            h = gru_cell(time_index(x, t), h, self.cell)
        preds = [add_bias(h @ self.read_w, self.read_b, 1)]
        for _ in range(1, self.config.horizon):
            h = gru_cell(preds[-1], h, self.cell)
            preds.append(add_bias(h @ self.read_w, self.read_b, 1))
        return stack_last(preds)

    def predict_windows(self, x: np.ndarray, horizon: int | None = None,
                        chunk: int = 256) -> np.ndarray:
        if horizon is not None and horizon != self.config.horizon:
            raise ShapeError(f"model predicts {self.config.horizon} step(s), {horizon} requested")
        x = np.asarray(x, dtype=np.float64)
        parts = [self.forward_batch(x[i:i + chunk]).data for i in range(0, x.shape[0], chunk)]
        return np.concatenate(parts, axis=0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._names.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self._names.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"{k}: shape {arr.shape} does not match {t.data.shape}")
            t.data = arr.copy()

    def save(self, path) -> None:
        save_checkpoint(path, kind=self.kind, config=asdict(self.config), params=self.state_dict())

    @classmethod
    def load(cls, path) -> "GruModel":
        ckpt = load_checkpoint(path)
        if ckpt.kind != cls.kind:
            raise ConfigError(f"{path}: checkpoint holds a {ckpt.kind!r} model, not {cls.kind}")
        model = cls(GruConfig(**ckpt.config), Rng(0))
        model.load_state_dict(ckpt.params)
        return model


# -- temporal convolutional network ---------------------------------------------

@dataclass(frozen=True)
class TcnConfig:
    channels: int = 16
    kernel_size: int = 2
    num_blocks: int = 3
    horizon: int = 1

    def __post_init__(self):
        if self.channels < 1 or self.num_blocks < 1 or self.horizon < 1:
            raise ConfigError("channels, num_blocks, and horizon must be positive")
        if self.kernel_size < 2:
            raise ConfigError(f"kernel_size must be at least 2, got {self.kernel_size}")

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2 ** i for i in range(self.num_blocks))

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)


class TcnModel:
    """Stacked residual blocks of dilated causal convolutions, shared across series."""

    kind = "tcn"

    def __init__(self, config: TcnConfig, rng: Rng):
        dil = config.dilations
        if any(b <= a for a, b in zip(dil, dil[1:])):
            raise ConfigError(f"dilations must strictly increase, got {dil}")
        self.config = config
        c, K = config.channels, config.kernel_size
        init = rng.split()

        def w(shape, fan):
            return Tensor(init.normal(shape, 1.0 / np.sqrt(fan)), requires_grad=True)

        def b(width):
            return Tensor(np.zeros(width), requires_grad=True)

        self.start_w = w((1, c), 1)
        self.start_b = b(c)
        self.blocks = [{"dilation": d, "w": w((c, c, K), c * K), "b": b(c)} for d in dil]
        self.head_w = w((c, config.horizon), c)
        self.head_b = b(config.horizon)
        self._names = {"start.w": self.start_w, "start.b": self.start_b,
                       "head.w": self.head_w, "head.b": self.head_b}
        for i, blk in enumerate(self.blocks):
            self._names[f"block{i}.w"] = blk["w"]
            self._names[f"block{i}.b"] = blk["b"]

    @property
    def receptive_field(self) -> int:
        return self.config.receptive_field

    def parameters(self) -> list[Tensor]:
        return list(self._names.values())

    def forward_batch(self, x, training: bool = False, rng: Rng | None = None) -> Tensor:
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        if x.ndim != 3:
            raise ShapeError(f"expected [batch, series, steps] input, got {x.shape}")
        B, N, P = x.shape
        if P < self.receptive_field:
            raise ShapeError(f"input window {P} is shorter than the receptive field {self.receptive_field}")
        v = add_bias(channel_linear(reshape(x, (B, 1, N, P)), self.start_w), self.start_b, 1)
        for blk in self.blocks:
            h = relu(add_bias(causal_conv1d(v, blk["w"], blk["dilation"]), blk["b"], 1))
            v = h + v
        out = add_bias(channel_linear(last_step(v), self.head_w), self.head_b, 1)
        return permute(out, (0, 2, 1))

    def temporal_features(self, x) -> list[np.ndarray]:
        """Per-block residual states, for causality inspection."""
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        if x.ndim == 2:
            x = reshape(x, (1, x.shape[0], x.shape[1]))
        B, N, P = x.shape
        v = add_bias(channel_linear(reshape(x, (B, 1, N, P)), self.start_w), self.start_b, 1)
        collected = []
        for blk in self.blocks:
            h = relu(add_bias(causal_conv1d(v, blk["w"], blk["dilation"]), blk["b"], 1))
            v = h + v
            collected.append(v.data.copy())
        return collected

    def predict_windows(self, x: np.ndarray, horizon: int | None = None,
                        chunk: int = 256) -> np.ndarray:
        if horizon is not None and horizon != self.config.horizon:
            raise ShapeError(f"model predicts {self.config.horizon} step(s), {horizon} requested")
        x = np.asarray(x, dtype=np.float64)
        parts = [self.forward_batch(x[i:i + chunk]).data for i in range(0, x.shape[0], chunk)]
        return np.concatenate(parts, axis=0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._names.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self._names.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"{k}: shape {arr.shape} does not match {t.data.shape}")
            t.data = arr.copy()

    def save(self, path) -> None:
        save_checkpoint(path, kind=self.kind, config=asdict(self.config), params=self.state_dict())

    @classmethod
    def load(cls, path) -> "TcnModel":
        ckpt = load_checkpoint(path)
        if ckpt.kind != cls.kind:
            raise ConfigError(f"{path}: checkpoint holds a {ckpt.kind!r} model, not {cls.kind}")
        model = cls(TcnConfig(**ckpt.config), Rng(0))
        model.load_state_dict(ckpt.params)
        return model


# -- naive floor ---------------------------------------------------------------

def persistence_predictions(x: np.ndarray, horizon: int = 1) -> np.ndarray:
    """Repeat each window's last observed value for every forecast step."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected [batch, series, steps] windows, got {x.shape}")
    return np.repeat(x[:, :, -1:], horizon, axis=2)


def fit_gru(train_windows, val_windows, gru_config: GruConfig, train_config,
            rng: Rng):
    """Train a GRU with the shared mini-batch harness; returns (model, history)."""
    from .training import train
    model = GruModel(gru_config, rng.split())
    result = train(model, train_windows, val_windows, train_config, rng=rng.split())
    return result.model, result.history


def fit_tcn(train_windows, val_windows, tcn_config: TcnConfig, train_config,
            rng: Rng):
    """Train a TCN with the shared mini-batch harness; returns (model, history)."""
    from .training import train
    model = TcnModel(tcn_config, rng.split())
    result = train(model, train_windows, val_windows, train_config, rng=rng.split())
    return result.model, result.history
