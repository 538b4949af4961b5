"""Spatio-temporal forecaster with a jointly learned series graph.

The network interleaves gated dilated causal temporal convolutions with
mix-hop graph convolutions over an adjacency that is itself learned from
node embeddings. Residual connections run from each temporal-convolution
input to the graph-convolution output; every temporal convolution also
feeds a skip path into the output head.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (
    Rng, Tensor, add_bias, causal_conv1d, channel_linear, dropout, graph_mix,
    last_step, mul, permute, relu, reshape, row_normalize, sigmoid, tanh,
    transpose,
)
from .errors import ConfigError, ShapeError
from .graph import (
    AdjacencyMatrix, GraphLearnParams, NodeEmbeddings, init_graph_learn_params,
    init_node_embeddings, learn_adjacency,
)


@dataclass(frozen=True)
class MtgnnConfig:
    """Architecture and regularization knobs; channel defaults follow the
    reference experiment setup (16/16/32 channels, dropout 0.3, depth-2
    graph convolutions, 40-dimensional node embeddings)."""

    num_nodes: int
    num_layers: int = 3
    conv_channels: int = 16
    residual_channels: int = 16
    skip_channels: int = 32
    dropout: float = 0.3
    gc_depth: int = 2
    embedding_dim: int = 40
    input_window: int = 30
    horizon: int = 1
    retain_ratio: float = 0.05
    kernel_size: int = 2
    alpha: float = 3.0
    k: int | None = None
    use_residual: bool = True

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ConfigError(f"need at least 2 nodes, got {self.num_nodes}")
        for name in ("num_layers", "conv_channels", "residual_channels",
                     "skip_channels", "embedding_dim", "input_window", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.gc_depth < 0:
            raise ConfigError(f"gc_depth must be nonnegative, got {self.gc_depth}")
        if not 0.0 <= self.retain_ratio <= 1.0:
            raise ConfigError(f"retain_ratio must be in [0, 1], got {self.retain_ratio}")
        if self.kernel_size < 2:
            raise ConfigError(f"kernel_size must be at least 2, got {self.kernel_size}")
        if self.k is not None and not 1 <= self.k <= self.num_nodes - 1:
            raise ConfigError(f"k={self.k} out of range for {self.num_nodes} nodes")
        if self.input_window < self.receptive_field:
            raise ConfigError(
                f"input window {self.input_window} is shorter than the receptive "
                f"field {self.receptive_field}; widen the window or drop layers"
            )

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2 ** i for i in range(self.num_layers))

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)

    @property
    def sparsity(self) -> int:
        return self.k if self.k is not None else min(5, self.num_nodes - 1)


def _mix_hop_core(h: Tensor, a_norm: Tensor, depth: int, beta: float,
                  weights: Sequence[Tensor]) -> Tensor:
    """out = sum_k H(k) W(k) with H(0)=H, H(k) = beta*H + (1-beta)*A_norm H(k-1)."""
    if len(weights) != depth + 1:
        raise ShapeError(f"need {depth + 1} hop weights, got {len(weights)}")
    out = channel_linear(h, weights[0])
    hk = h
    for k in range(1, depth + 1):
        hk = mul(h, beta) + mul(graph_mix(a_norm, hk), 1.0 - beta)
        out = out + channel_linear(hk, weights[k])
    return out


def normalized_propagation_matrix(a) -> Tensor:
    """Row-normalized (A + I): each row mixes a node with its in-edges."""
    if isinstance(a, AdjacencyMatrix):
        a = Tensor(a.values)
    elif not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=np.float64))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    return row_normalize(a + Tensor(np.eye(a.shape[0])))


def mix_hop_graph_conv(h: Tensor, a, depth: int, beta: float,
                       weights: Sequence[Tensor]) -> Tensor:
    """Mix-hop propagation over the graph; accepts [N, C] or [B, C, N, T] features."""
    if depth < 0:
        raise ConfigError(f"depth must be nonnegative, got {depth}")
    a_norm = normalized_propagation_matrix(a)
    n = a_norm.shape[0]
    if isinstance(h, np.ndarray):
        h = Tensor(h)
    if h.ndim == 2:
        if h.shape[0] != n:
            raise ShapeError(f"{h.shape[0]} feature rows vs {n} nodes")
        wide = reshape(permute(h, (1, 0)), (1, h.shape[1], n, 1))
        out = _mix_hop_core(wide, a_norm, depth, beta, weights)
        return permute(reshape(out, (out.shape[1], n)), (1, 0))
    if h.ndim == 4:
        if h.shape[2] != n:
            raise ShapeError(f"node axis of {h.shape} vs {n} nodes")
        return _mix_hop_core(h, a_norm, depth, beta, weights)
    raise ShapeError(f"expected [N, C] or [B, C, N, T] features, got {h.shape}")


def gated_temporal_conv(x: Tensor, filter_kernel: Tensor, gate_kernel: Tensor,
                        dilation: int, filter_bias: Tensor | None = None,
                        gate_bias: Tensor | None = None) -> Tensor:
    """tanh(conv(x)) * sigmoid(conv(x)), both branches causal and dilated."""
    f = causal_conv1d(x, filter_kernel, dilation)
    g = causal_conv1d(x, gate_kernel, dilation)
    bias_axis = 0 if f.ndim == 2 else 1
    if filter_bias is not None:
        f = add_bias(f, filter_bias, bias_axis)
    if gate_bias is not None:
        g = add_bias(g, gate_bias, bias_axis)
    return tanh(f) * sigmoid(g)


class MtgnnModel:
    """The full network; owns every learnable tensor, keyed by name."""

    kind = "mtgnn"

    def __init__(self, config: MtgnnConfig, rng: Rng):
        self.config = config
        c = config
        self._params: dict[str, Tensor] = {}

        self.embeddings = init_node_embeddings(c.num_nodes, c.embedding_dim, rng.split())
        self.graph_params = init_graph_learn_params(c.embedding_dim, rng.split(),
                                                    alpha=c.alpha, k=c.sparsity)
        self._add("emb.e1", self.embeddings.e1)
        self._add("emb.e2", self.embeddings.e2)
        self._add("graph.theta1", self.graph_params.theta1)
        self._add("graph.theta2", self.graph_params.theta2)

        init = rng.split()

        def weight(name, shape, fan_in):
            t = Tensor(init.normal(shape, 1.0 / np.sqrt(fan_in)), requires_grad=True)
            self._add(name, t)
            return t

        def bias(name, width):
            t = Tensor(np.zeros(width), requires_grad=True)
            self._add(name, t)
            return t

        self.start_w = weight("start.w", (1, c.residual_channels), 1)
        self.start_b = bias("start.b", c.residual_channels)

        self.layers = []
        K = c.kernel_size
        for i, dil in enumerate(c.dilations):
            fan = c.residual_channels * K
            layer = {
                "dilation": dil,
                "filter.w": weight(f"layer{i}.filter.w", (c.conv_channels, c.residual_channels, K), fan),
                "filter.b": bias(f"layer{i}.filter.b", c.conv_channels),
                "gate.w": weight(f"layer{i}.gate.w", (c.conv_channels, c.residual_channels, K), fan),
                "gate.b": bias(f"layer{i}.gate.b", c.conv_channels),
                "skip.w": weight(f"layer{i}.skip.w", (c.conv_channels, c.skip_channels), c.conv_channels),
                "mix_fwd": [weight(f"layer{i}.mix_fwd.{k}", (c.conv_channels, c.residual_channels), c.conv_channels)
                            for k in range(c.gc_depth + 1)],
                "mix_bwd": [weight(f"layer{i}.mix_bwd.{k}", (c.conv_channels, c.residual_channels), c.conv_channels)
                            for k in range(c.gc_depth + 1)],
            }
            self.layers.append(layer)

        self.skip_end_w = weight("skip_end.w", (c.residual_channels, c.skip_channels), c.residual_channels)
        self.head1_w = weight("head1.w", (c.skip_channels, c.skip_channels), c.skip_channels)
        self.head1_b = bias("head1.b", c.skip_channels)
        self.head2_w = weight("head2.w", (c.skip_channels, c.horizon), c.skip_channels)
        self.head2_b = bias("head2.b", c.horizon)

    def _add(self, name: str, t: Tensor) -> None:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._params[name] = t

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        surplus = set(state) - set(self._params)
        if missing or surplus:
            raise ShapeError(f"parameter names do not match (missing {sorted(missing)}, surplus {sorted(surplus)})")
        for name, t in self._params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} does not match {t.data.shape}")
            t.data = arr.copy()

    def adjacency(self) -> Tensor:
        """Current belief about the series graph, recomputed from embeddings."""
        return learn_adjacency(self.embeddings, self.graph_params)

    def _run(self, x: Tensor, training: bool, rng: Rng | None,
             collect: list | None = None) -> Tensor:
        c = self.config
        if x.ndim != 3:
            raise ShapeError(f"expected [batch, nodes, steps] input, got {x.shape}")
        B, N, P = x.shape
        if N != c.num_nodes:
            raise ShapeError(f"model built for {c.num_nodes} nodes, input has {N}")
        if P < c.receptive_field:
            raise ShapeError(f"input window {P} is shorter than the receptive field {c.receptive_field}")

        a = self.adjacency()
        eye = Tensor(np.eye(N))
        a_fwd = row_normalize(a + eye)
        a_bwd = row_normalize(permute(a, (1, 0)) + eye)

        v = reshape(x, (B, 1, N, P))
        v = add_bias(channel_linear(v, self.start_w), self.start_b, 1)

        skip_sum = None
        for layer in self.layers:
            h = gated_temporal_conv(v, layer["filter.w"], layer["gate.w"],
                                    layer["dilation"], layer["filter.b"], layer["gate.b"])
            if collect is not None:
                collect.append(h)
            h = dropout(h, c.dropout, training=training, rng=rng)
            s = channel_linear(last_step(h), layer["skip.w"])
            skip_sum = s if skip_sum is None else skip_sum + s
            z = (_mix_hop_core(h, a_fwd, c.gc_depth, c.retain_ratio, layer["mix_fwd"])
                 + _mix_hop_core(h, a_bwd, c.gc_depth, c.retain_ratio, layer["mix_bwd"]))
            v = z + v if c.use_residual else z

        skip_sum = skip_sum + channel_linear(last_step(v), self.skip_end_w)
        out = relu(skip_sum)
        out = relu(add_bias(channel_linear(out, self.head1_w), self.head1_b, 1))
        out = add_bias(channel_linear(out, self.head2_w), self.head2_b, 1)
        return permute(out, (0, 2, 1))

    def forward_batch(self, x, training: bool = False, rng: Rng | None = None) -> Tensor:
        """[B, N, P] normalized inputs -> [B, N, Q] predictions."""
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        return self._run(x, training, rng)

    def forward(self, x) -> Tensor:
        """[N, P] -> [N, Q], eval mode (deterministic)."""
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        if x.ndim != 2:
            raise ShapeError(f"expected [nodes, steps] input, got {x.shape}")
        N, P = x.shape
        out = self._run(reshape(x, (1, N, P)), training=False, rng=None)
        return reshape(out, (N, self.config.horizon))

    def temporal_features(self, x) -> list[np.ndarray]:
        """Per-layer gated-convolution outputs, for causality inspection."""
        if isinstance(x, np.ndarray):
            x = Tensor(x)
        if x.ndim == 2:
            x = reshape(x, (1, x.shape[0], x.shape[1]))
        collected: list[Tensor] = []
        self._run(x, training=False, rng=None, collect=collected)
        return [t.data.copy() for t in collected]

    def predict_windows(self, x: np.ndarray, horizon: int | None = None,
                        chunk: int = 64) -> np.ndarray:
        """Eval-mode predictions for stacked windows [B, N, P] -> [B, N, Q]."""
        if horizon is not None and horizon != self.config.horizon:
            raise ShapeError(f"model predicts {self.config.horizon} step(s), {horizon} requested")
        x = np.asarray(x, dtype=np.float64)
        parts = [self.forward_batch(x[i:i + chunk]).data for i in range(0, x.shape[0], chunk)]
        return np.concatenate(parts, axis=0)

    def save(self, path) -> None:
        from dataclasses import asdict
        from .checkpoint import save_checkpoint
        save_checkpoint(path, kind="mtgnn", config=asdict(self.config), params=self.state_dict())

    @classmethod
    def load(cls, path) -> "MtgnnModel":
        from .checkpoint import load_checkpoint
        ckpt = load_checkpoint(path)
        if ckpt.kind != "mtgnn":
            raise ConfigError(f"{path}: checkpoint holds a {ckpt.kind!r} model, not mtgnn")
        model = cls(MtgnnConfig(**ckpt.config), Rng(0))
        model.load_state_dict(ckpt.params)
        return model
