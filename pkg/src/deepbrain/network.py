"""Forward computation for all model kinds.

Arrays are float64 numpy arrays; batches have shape [n, T, 1]. LSTM gate
blocks are stacked along the last axis in the order (input, forget,
output, modulation), so ``W`` is [K, 4H], ``U`` is [H, 4H], ``b`` is [4H].
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, ShapeError

Params = dict  # name -> np.ndarray, insertion order is the canonical layout


class ModelKind(str, enum.Enum):
    DEEPBRAIN = "deepbrain"
    STACKED_LSTM = "stacked"
    PLAIN_LSTM = "lstm"
    MLP = "mlp"


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.DEEPBRAIN
    embed_widths: tuple[int, ...] = (16, 16)
    lstm_layers: int = 2
    lstm_hidden: int = 32
    attention_width: int | None = None
    mlp_hidden: int = 30
    dropout_rate: float = 0.2
    class_count: int = 4
    seq_len: int = 30
    input_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "embed_widths", tuple(int(w) for w in self.embed_widths))
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError("dropout_rate must be in [0, 1)")
        if self.kind is ModelKind.PLAIN_LSTM and self.lstm_layers != 1:
            object.__setattr__(self, "lstm_layers", 1)

    @classmethod
    def for_kind(cls, kind, **overrides) -> "ModelConfig":
        kind = ModelKind(kind)
        if kind is ModelKind.PLAIN_LSTM:
            overrides.setdefault("lstm_layers", 1)
        return cls(kind=kind, **overrides)

    @property
    def attn_width(self) -> int:
        return self.attention_width or self.lstm_hidden

    @property
    def head_width(self) -> int:
        if self.kind is ModelKind.MLP:
            return self.mlp_hidden
        if self.kind is ModelKind.DEEPBRAIN:
            return 2 * self.lstm_hidden
        return self.lstm_hidden

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["embed_widths"] = list(self.embed_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every trainable array, in canonical order."""
    shapes: dict[str, tuple[int, ...]] = {}
    if config.kind is ModelKind.MLP:
        shapes["hidden.W"] = (config.seq_len * config.input_dim, config.mlp_hidden)
        shapes["hidden.b"] = (config.mlp_hidden,)
    else:
        width = config.input_dim
        for i, w in enumerate(config.embed_widths):
            shapes[f"embed{i}.W"] = (width, w)
            shapes[f"embed{i}.b"] = (w,)
            width = w
        H = config.lstm_hidden
        for layer in range(config.lstm_layers):
            shapes[f"lstm{layer}.W"] = (width, 4 * H)
            shapes[f"lstm{layer}.U"] = (H, 4 * H)
            shapes[f"lstm{layer}.b"] = (4 * H,)
            width = H
        if config.kind is ModelKind.DEEPBRAIN:
            A = config.attn_width
            shapes["attn.W_h"] = (H, A)
            shapes["attn.W_c"] = (H, A)
            shapes["attn.b"] = (A,)
            shapes["attn.v"] = (A,)
    shapes["out.W"] = (config.head_width, config.class_count)
    shapes["out.b"] = (config.class_count,)
    return shapes


def init_params(config: ModelConfig, seed) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b") or name == "attn.b":
            arr = np.zeros(shape)
            if name.startswith("lstm"):
                H = shape[0] // 4
                arr[H:2 * H] = 1.0
        else:
            fan_in = shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        params[name] = arr
    return params


def zero_params(config: ModelConfig) -> Params:
    return {name: np.zeros(shape) for name, shape in param_shapes(config).items()}


def check_params(config: ModelConfig, params: Params) -> None:
    expected = param_shapes(config)
    if list(params) != list(expected):
        missing = set(expected) ^ set(params)
        raise ShapeError(f"parameter names do not match config (diff: {sorted(missing)})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")


# -- primitives ---------------------------------------------------------------

class DenseParams(NamedTuple):
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"


class LstmParams(NamedTuple):
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]


class AttentionParams(NamedTuple):
    W_h: np.ndarray
    W_c: np.ndarray
    b: np.ndarray
    v: np.ndarray


def as_float(x) -> np.ndarray:
    """Keep floating dtypes (float64 or extended precision); promote the rest to float64."""
    arr = np.asarray(x)
    return arr if arr.dtype.kind == "f" else arr.astype(np.float64)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis: int = -1):
    x = as_float(x)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def dense_forward(x, p: DenseParams) -> np.ndarray:
    x = as_float(x)
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise ShapeError(f"dense input {x.shape} incompatible with weights {p.weights.shape}")
    if p.bias.shape != (p.weights.shape[1],):
        raise ShapeError("bias width does not match weights")
    y = x @ p.weights + p.bias
    if p.activation == "tanh":
        return np.tanh(y)
    if p.activation == "identity":
        return y
    raise DataError(f"unknown activation {p.activation!r}")


class GateCache(NamedTuple):
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    m: np.ndarray
    tanh_c: np.ndarray


def _check_lstm(p: LstmParams, K: int):
    H = p.U.shape[0]
    if p.U.shape != (H, 4 * H) or p.W.shape != (K, 4 * H) or p.b.shape != (4 * H,):
        raise ShapeError(
            f"LSTM params W{p.W.shape} U{p.U.shape} b{p.b.shape} inconsistent with input width {K}"
        )
    return H


def lstm_cell_forward(x_t, h_prev, c_prev, p: LstmParams):
    """One step: gates from x_t @ W + h_prev @ U + b, then the cell update."""
    x_t = np.atleast_2d(as_float(x_t))
    H = _check_lstm(p, x_t.shape[1])
    h_prev = np.atleast_2d(h_prev)
    c_prev = np.atleast_2d(c_prev)
    if h_prev.shape[1] != H or c_prev.shape[1] != H:
        raise ShapeError("recurrent state width does not match hidden_size")
    z = x_t @ p.W + h_prev @ p.U + p.b
    g = sigmoid(z[:, :3 * H])
    i, f, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:]
    m = np.tanh(z[:, 3 * H:])
    c = f * c_prev + i * m
    tc = np.tanh(c)
    h = o * tc
    return h, c, GateCache(i, f, o, m, tc)


@dataclass
class LstmCache:
    inputs: np.ndarray     # [n, T, K]
    gates: np.ndarray      # [n, T, 4H] activated (i, f, o, m)
    cells: np.ndarray      # [n, T, H]
    tanh_cells: np.ndarray
    hidden: np.ndarray     # [n, T, H]
    h0: np.ndarray
    c0: np.ndarray


def lstm_layer_forward(xs, p: LstmParams, h0=None, c0=None):
    """Run the cell over all T steps; returns (hidden_seq, h_T, c_T, cache)."""
    xs = as_float(xs)
    if xs.ndim != 3 or xs.shape[1] < 1:
        raise ShapeError(f"LSTM input must be [n, T>=1, K], got {xs.shape}")
    n, T, K = xs.shape
    H = _check_lstm(p, K)
    dt = np.result_type(xs, p.W)
    h = np.zeros((n, H), dt) if h0 is None else np.array(h0, dtype=dt)
    c = np.zeros((n, H), dt) if c0 is None else np.array(c0, dtype=dt)
    h_init, c_init = h.copy(), c.copy()

    xw = (xs.reshape(n * T, K) @ p.W + p.b).reshape(n, T, 4 * H)
    gates = np.empty((n, T, 4 * H), dt)
    cells = np.empty((n, T, H), dt)
    tanh_cells = np.empty((n, T, H), dt)
    hidden = np.empty((n, T, H), dt)
    for t in range(T):
        z = xw[:, t] + h @ p.U
        g = gates[:, t]
        g[:, :3 * H] = sigmoid(z[:, :3 * H])
        g[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
        tc = np.tanh(c)
        h = g[:, 2 * H:3 * H] * tc
        cells[:, t] = c
        tanh_cells[:, t] = tc
        hidden[:, t] = h
    cache = LstmCache(xs, gates, cells, tanh_cells, hidden, h_init, c_init)
    return hidden, h, c, cache


@dataclass
class AttentionCache:
    hidden: np.ndarray   # [n, T, H]
    query: np.ndarray    # [n, H] final cell state
    u: np.ndarray        # [n, T, A] tanh activations
    scores: np.ndarray   # [n, T] raw scores
    weights: np.ndarray  # [n, T] normalized


def attention_forward(hidden_seq, final_c, p: AttentionParams):
    """Additive attention over timesteps queried by the final cell state."""
    hs = as_float(hidden_seq)
    cT = as_float(final_c)
    if hs.ndim != 3 or cT.shape != (hs.shape[0], hs.shape[2]):
        raise ShapeError(f"attention inputs {hs.shape} / {cT.shape} inconsistent")
    H = hs.shape[2]
    A = p.v.shape[0]
    if p.W_h.shape != (H, A) or p.W_c.shape != (H, A) or p.b.shape != (A,):
        raise ShapeError("attention projection widths do not match")
    u = np.tanh(hs @ p.W_h + (cT @ p.W_c + p.b)[:, None, :])
    scores = u @ p.v
    weights = softmax(scores, axis=1)
    context = np.einsum("nt,nth->nh", weights, hs)
    return context, weights, AttentionCache(hs, cT, u, scores, weights)


def dropout_apply(x, rate: float, rng: np.random.Generator | None = None):
    """Inverted dropout. ``rng=None`` is eval mode: identity and no mask."""
    if not 0.0 <= rate < 1.0:
        raise DataError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_float(x)
    if rng is None:
        return x, None
    if rate == 0.0:
        return x.copy(), np.ones_like(x)
    mask = ((rng.random(x.shape) >= rate) / (1.0 - rate)).astype(x.dtype)
    return x * mask, mask


# -- full model ---------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Activations cached by a training-mode forward pass."""

    batch: np.ndarray
    probs: np.ndarray
    embeds: list = field(default_factory=list)   # post-tanh activations per dense layer
    lstm: list = field(default_factory=list)     # LstmCache per layer
    attention: AttentionCache | None = None
    head_input: np.ndarray | None = None         # pre-dropout head input
    dropout_mask: np.ndarray | None = None


def lstm_params(params: Params, layer: int) -> LstmParams:
    return LstmParams(params[f"lstm{layer}.W"], params[f"lstm{layer}.U"], params[f"lstm{layer}.b"])


def attention_params(params: Params) -> AttentionParams:
    return AttentionParams(params["attn.W_h"], params["attn.W_c"], params["attn.b"], params["attn.v"])


def model_forward(config: ModelConfig, params: Params, batch, train: bool = False,
                  seed=None, rng: np.random.Generator | None = None):
    """Class probabilities [n, class_count] for ``batch`` of shape [n, T, input_dim].

    In training mode (``train=True``) dropout is drawn from ``rng`` (or a
    generator seeded with ``seed``) and a :class:`ForwardTrace` is returned
    alongside the probabilities; otherwise the trace is ``None``.
    """
    check_params(config, params)
    x = as_float(batch)
    x = x.astype(np.result_type(x, params["out.W"]), copy=False)
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        raise ShapeError(f"batch must be [n, T, {config.input_dim}], got {x.shape}")
    n, T, _ = x.shape
    if config.kind is ModelKind.MLP and T != config.seq_len:
        raise ShapeError(f"MLP expects sequences of length {config.seq_len}, got {T}")
    if train and rng is None:
        rng = np.random.default_rng(seed)
    trace = ForwardTrace(batch=x, probs=None) if train else None

    if config.kind is ModelKind.MLP:
        hid = np.tanh(x.reshape(n, T * config.input_dim) @ params["hidden.W"] + params["hidden.b"])
        if train:
            trace.embeds.append(hid)
        head = hid
    else:
        e = x.reshape(n * T, config.input_dim)
        for i in range(len(config.embed_widths)):
            e = np.tanh(e @ params[f"embed{i}.W"] + params[f"embed{i}.b"])
            if train:
                trace.embeds.append(e)
        seq = e.reshape(n, T, -1)
        for layer in range(config.lstm_layers):
            seq, h_T, c_T, cache = lstm_layer_forward(seq, lstm_params(params, layer))
            if train:
                trace.lstm.append(cache)
        if config.kind is ModelKind.DEEPBRAIN:
            context, _, acache = attention_forward(seq, c_T, attention_params(params))
            head = np.concatenate([h_T, context], axis=1)
            if train:
                trace.attention = acache
        else:
            head = h_T

    if train:
        trace.head_input = head
        head, trace.dropout_mask = dropout_apply(head, config.dropout_rate, rng)
    probs = softmax(head @ params["out.W"] + params["out.b"], axis=1)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite probabilities in forward pass")
    if train:
        trace.probs = probs
        return probs, trace
    return probs, None


def predict_proba(config: ModelConfig, params: Params, X, chunk: int = 512) -> np.ndarray:
    """Eval-mode probabilities, computed in fixed-size chunks."""
    X = as_float(X)
    out = [model_forward(config, params, X[s:s + chunk])[0] for s in range(0, len(X), chunk)]
    return np.concatenate(out, axis=0)
