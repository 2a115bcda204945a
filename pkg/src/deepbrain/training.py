"""Loss, exact BPTT gradients, finite-difference oracle, Adam and the training loop."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import Checkpoint
from .errors import ContractError, DataError, ShapeError, TrainingError
from .network import (
    ForwardTrace,
    ModelConfig,
    ModelKind,
    Params,
    as_float,
    init_params,
    model_forward,
    predict_proba,
)
from .preprocess import PreprocessConfig
from .signal_model import Dataset

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-15


def _cross_entropy(probs, one_hots):
    p = as_float(probs)
    y = as_float(one_hots)
    if p.shape != y.shape or p.ndim != 2:
        raise ShapeError(f"probs {p.shape} and labels {y.shape} must be equal 2-D shapes")
    return -np.mean(np.sum(y * np.log(np.maximum(p, PROB_FLOOR)), axis=1))


def cross_entropy_loss(probs, one_hots) -> float:
    """Mean over the batch of -sum_k y_k ln p_k, with p clamped at 1e-15."""
    return float(_cross_entropy(probs, one_hots))


def _lstm_backward(cache, d_hidden, dc_last, U):
    """Backprop through one LSTM layer.

    ``d_hidden`` is dL/dh_t for every step [n, T, H]; ``dc_last`` is an extra
    gradient on the final cell state. Returns (dX, dW, dU, db).
    """
    n, T, H = cache.hidden.shape
    K = cache.inputs.shape[2]
    dZ = np.empty((n, T, 4 * H))
    dU = np.zeros_like(U)
    dh_next = np.zeros((n, H))
    dc_next = np.zeros((n, H)) if dc_last is None else dc_last.copy()
    U_T = U.T
    for t in range(T - 1, -1, -1):
        g = cache.gates[:, t]
        i, f, o, m = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = cache.tanh_cells[:, t]
        c_prev = cache.cells[:, t - 1] if t > 0 else cache.c0
        h_prev = cache.hidden[:, t - 1] if t > 0 else cache.h0

        dh = d_hidden[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[:, t]
        dz[:, :H] = dc * m * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - m * m)
        dU += h_prev.T @ dz
        dh_next = dz @ U_T
        dc_next = dc * f
    dZ2 = dZ.reshape(n * T, 4 * H)
    dW = cache.inputs.reshape(n * T, K).T @ dZ2
    db = dZ2.sum(axis=0)
    return dZ, dW, dU, db


def backward(config: ModelConfig, params: Params, trace: ForwardTrace, batch, one_hots) -> dict:
    """Exact gradients of the mean cross-entropy with respect to every parameter."""
    if trace is None or trace.probs is None:
        raise ContractError("backward needs the trace of a training-mode forward pass")
    x = np.asarray(batch, dtype=np.float64)
    if trace.batch.shape != x.shape or not np.array_equal(trace.batch, x):
        raise ContractError("trace was produced for a different batch")
    y = np.asarray(one_hots, dtype=np.float64)
    if y.shape != trace.probs.shape:
        raise ShapeError(f"labels {y.shape} do not match probabilities {trace.probs.shape}")
    n, T, D = x.shape
    grads = {}

    d_logits = (trace.probs - y) / n
    head = trace.head_input if trace.dropout_mask is None else trace.head_input * trace.dropout_mask
    grads["out.W"] = head.T @ d_logits
    grads["out.b"] = d_logits.sum(axis=0)
    d_head = d_logits @ params["out.W"].T
    if trace.dropout_mask is not None:
        d_head = d_head * trace.dropout_mask

    if config.kind is ModelKind.MLP:
        hid = trace.embeds[0]
        d_pre = d_head * (1.0 - hid * hid)
        grads["hidden.W"] = x.reshape(n, T * D).T @ d_pre
        grads["hidden.b"] = d_pre.sum(axis=0)
        return {name: grads[name] for name in params}

    H = config.lstm_hidden
    top = trace.lstm[-1]
    d_hidden = np.zeros_like(top.hidden)
    dc_last = None
    if config.kind is ModelKind.DEEPBRAIN:
        d_hidden[:, -1] += d_head[:, :H]
        d_ctx = d_head[:, H:]
        a = trace.attention
        # context = sum_t w_t h_t
        d_w = np.einsum("nh,nth->nt", d_ctx, a.hidden)
        d_hidden += a.weights[:, :, None] * d_ctx[:, None, :]
        d_scores = a.weights * (d_w - np.sum(a.weights * d_w, axis=1, keepdims=True))
        grads["attn.v"] = np.einsum("nta,nt->a", a.u, d_scores)
        d_pre = d_scores[:, :, None] * params["attn.v"] * (1.0 - a.u * a.u)
        A = d_pre.shape[2]
        grads["attn.W_h"] = a.hidden.reshape(-1, H).T @ d_pre.reshape(-1, A)
        grads["attn.b"] = d_pre.sum(axis=(0, 1))
        d_query = d_pre.sum(axis=1)
        grads["attn.W_c"] = a.query.T @ d_query
        dc_last = d_query @ params["attn.W_c"].T
        d_hidden += d_pre @ params["attn.W_h"].T
    else:
        d_hidden[:, -1] += d_head

    for layer in range(config.lstm_layers - 1, -1, -1):
        cache = trace.lstm[layer]
        W = params[f"lstm{layer}.W"]
        dZ, grads[f"lstm{layer}.W"], grads[f"lstm{layer}.U"], grads[f"lstm{layer}.b"] = \
            _lstm_backward(cache, d_hidden, dc_last, params[f"lstm{layer}.U"])
        d_hidden = dZ @ W.T
        dc_last = None

    d_e = d_hidden.reshape(n * T, -1)
    for i in range(len(config.embed_widths) - 1, -1, -1):
        e = trace.embeds[i]
        d_pre = d_e * (1.0 - e * e)
        inp = trace.embeds[i - 1] if i > 0 else x.reshape(n * T, D)
        grads[f"embed{i}.W"] = inp.T @ d_pre
        grads[f"embed{i}.b"] = d_pre.sum(axis=0)
        d_e = d_pre @ params[f"embed{i}.W"].T

    return {name: grads[name] for name in params}


def loss_and_grads(config, params, batch, one_hots, seed=None, rng=None):
    probs, trace = model_forward(config, params, batch, train=True, seed=seed, rng=rng)
    return cross_entropy_loss(probs, one_hots), backward(config, params, trace, batch, one_hots)


def finite_diff_grad(config: ModelConfig, params: Params, batch, one_hots,
                     h: float = 1e-5, seed: int = 0, dtype=np.longdouble) -> dict:
    """Central differences of the training-mode loss, one scalar at a time.

    Every evaluation reseeds dropout with ``seed`` so the mask is identical
    across the +h and -h evaluations. The loss is evaluated in ``dtype``;
    extended precision keeps the rounding error of the difference quotient
    well below the size of the smallest gradient entries.
    """
    batch = np.asarray(batch).astype(dtype)
    one_hots = np.asarray(one_hots).astype(dtype)

    def loss_at(p):
        probs, _ = model_forward(config, p, batch, train=True, seed=seed)
        return _cross_entropy(probs, one_hots)

    work = {k: np.asarray(v).astype(dtype) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_at(work)
            flat[j] = orig - h
            down = loss_at(work)
            flat[j] = orig
            gflat[j] = (up - down) / (2 * dtype(h))
        grads[name] = g.astype(np.float64)
    return grads


def relative_errors(analytic: dict, numeric: dict, floor: float = 1e-8) -> dict:
    """Max elementwise |a - b| / max(|a|, |b|, floor) per parameter."""
    out = {}
    for name in analytic:
        a, b = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        out[name] = float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
    return out


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params, lr: float = 1e-4) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            lr=lr,
        )


def adam_step(params: Params, grads: dict, state: AdamState) -> tuple[Params, AdamState]:
    """Bias-corrected Adam update. Inputs are left untouched."""
    if list(params) != list(grads) or list(params) != list(state.m):
        raise ShapeError("params, grads and optimizer state must share one layout")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        new_p[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_p, replace(state, m=new_m, v=new_v, t=t)


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0
    shuffle_each_epoch: bool = True
    lr: float | None = None
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")

    @property
    def learning_rate(self) -> float:
        return 1e-4 if self.lr is None else self.lr


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    valid_accuracy: float
    steps: int


def dataset_hash(X: np.ndarray, Y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(Y, dtype="<f8").tobytes())
    return h.hexdigest()


def accuracy(probs: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.argmax(Y, axis=1)))


def train_model(config: ModelConfig, tcfg: TrainConfig, train: Dataset, valid: Dataset,
                preprocess_config: PreprocessConfig | None = None,
                ) -> tuple[Checkpoint, list[EpochRecord]]:
    """Minibatch BPTT + Adam; returns the best-validation checkpoint and history.

    History entry 0 describes the untrained initialization. The returned
    checkpoint holds the parameters of the epoch with the highest validation
    accuracy (earliest on ties).
    """
    if len(train) == 0 or len(valid) == 0:
        raise DataError("training and validation datasets must be non-empty")
    X, Y = train.arrays()
    Xv, Yv = valid.arrays()
    if X.shape[1] != config.seq_len:
        raise ShapeError(f"windows have length {X.shape[1]}, model expects {config.seq_len}")

    seeds = np.random.SeedSequence(tcfg.seed).spawn(3)
    params = init_params(config, seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])
    state = AdamState.zeros_like(params, lr=tcfg.learning_rate)

    def record(epoch):
        p_train = predict_proba(config, params, X)
        p_valid = predict_proba(config, params, Xv)
        return EpochRecord(epoch, cross_entropy_loss(p_train, Y), accuracy(p_train, Y),
                           accuracy(p_valid, Yv), state.t)

    history = [record(0)]
    best_params, best_epoch, best_acc = None, 0, -1.0
    n = len(X)
    order = np.arange(n)
    for epoch in range(1, tcfg.epochs + 1):
        if tcfg.shuffle_each_epoch:
            order = shuffle_rng.permutation(n)
        for b, start in enumerate(range(0, n, tcfg.batch_size)):
            idx = order[start:start + tcfg.batch_size]
            try:
                with np.errstate(over="raise", invalid="raise"):
                    loss, grads = loss_and_grads(config, params, X[idx], Y[idx], rng=dropout_rng)
            except FloatingPointError as exc:
                raise TrainingError(f"numeric failure at epoch {epoch}, batch {b}: {exc}",
                                    epoch, b) from exc
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            if tcfg.clip_norm is not None:
                grads = clip_by_global_norm(grads, tcfg.clip_norm)
            params, state = adam_step(params, grads, state)
        rec = record(epoch)
        history.append(rec)
        if rec.valid_accuracy > best_acc:
            best_params, best_epoch, best_acc = params, epoch, rec.valid_accuracy
        log.debug("epoch %d loss %.4f train %.3f valid %.3f", epoch, rec.loss,
                  rec.train_accuracy, rec.valid_accuracy)

    provenance = {
        "seed": tcfg.seed,
        "epochs": tcfg.epochs,
        "steps": state.t,
        "batch_size": tcfg.batch_size,
        "lr": tcfg.learning_rate,
        "best_epoch": best_epoch,
        "initial_loss": history[0].loss,
        "final_loss": history[-1].loss,
        "loss_history": [r.loss for r in history],
        "dataset_hash": dataset_hash(X, Y),
    }
    ckpt = Checkpoint(
        model_config=config,
        params=best_params,
        preprocess_config=preprocess_config or PreprocessConfig(),
        provenance=provenance,
    )
    return ckpt, history
