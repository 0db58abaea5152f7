"""From-scratch FFNN and two-layer LSTM sideslip regressors (numpy only).

Parameters are plain dicts of arrays, forward/backward are explicit, and
the optimizers are hand-rolled ADAM/NADAM. Inputs are min-max scaled to
[0, 1] with training-set statistics; targets are sideslip in degrees,
unscaled.

FFNN: dense -> ReLU -> inverted dropout per hidden layer, linear head.
LSTM: two stacked layers over a 20-step window; the first layer's hidden
sequence passes through tanh, the second's through a sigmoid, each with
(non-recurrent) dropout on the output sequence; a dense head reads the
final step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import FRAME_COLUMNS

INPUT_SETS = {
    "base": ("vx", "ax", "ay", "yaw_rate", "delta"),
    "tyre": (
        "vx",
        "ax",
        "ay",
        "yaw_rate",
        "delta",
        "fx_fl",
        "fy_fl",
        "fz_fl",
        "fx_fr",
        "fy_fr",
        "fz_fr",
        "fx_rl",
        "fy_rl",
        "fz_rl",
        "fx_rr",
        "fy_rr",
        "fz_rr",
    ),
}

# Published architecture table: (kind, input set) -> hidden widths.
ARCHITECTURES = {
    ("ffnn", "base"): (250, 100),
    ("ffnn", "tyre"): (150, 50),
    ("rnn", "base"): (100, 80),
    ("rnn", "tyre"): (100, 50),
}

LSTM_WINDOW = 20


@dataclass(frozen=True)
class NetworkSpec:
    kind: str  # "ffnn" | "rnn"
    input_width: int
    hidden: tuple[int, ...]
    dropout_rate: float = 0.2
    window: int = LSTM_WINDOW

    def __post_init__(self):
        if self.kind not in ("ffnn", "rnn"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.input_width <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.kind == "rnn" and self.window < 1:
            raise ValueError("window must be >= 1")


def network_for(kind: str, input_set: str) -> NetworkSpec:
    """Standard architecture for a (kind, input set) pair."""
    hidden = ARCHITECTURES[(kind, input_set)]
    return NetworkSpec(kind=kind, input_width=len(INPUT_SETS[input_set]), hidden=hidden)


@dataclass
class Scaler:
    mins: np.ndarray
    maxs: np.ndarray


def fit_scaler(features: np.ndarray) -> Scaler:
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        raise ValueError("cannot fit a scaler on an empty feature set")
    return Scaler(mins=features.min(axis=0), maxs=features.max(axis=0))


def apply_scaler(scaler: Scaler, features: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min); constant features map to 0; no clamping."""
    span = scaler.maxs - scaler.mins
    out = np.asarray(features, dtype=float) - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = out / safe
    return np.where(span > 0, out, 0.0)


def features_from_frames(frames: np.ndarray, input_set: str) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    names = INPUT_SETS[input_set]
    if frames.ndim != 2 or frames.shape[1] != len(FRAME_COLUMNS):
        have = frames.shape[1] if frames.ndim == 2 else 0
        missing = [c for c in names if c not in FRAME_COLUMNS[:have]]
        raise ValueError(f"frames missing channels: {', '.join(missing)}")
    idx = [FRAME_COLUMNS.index(c) for c in names]
    return frames[:, idx]


# --------------------------------------------------------------------------
# Initialization


def _xavier(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape or (fan_in, fan_out))


def xavier_init(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, np.ndarray] = {}
    if spec.kind == "ffnn":
        widths = (spec.input_width,) + spec.hidden
        for i in range(len(spec.hidden)):
            params[f"W{i}"] = _xavier(rng, widths[i], widths[i + 1])
            params[f"b{i}"] = np.zeros(widths[i + 1])
        params["W_head"] = _xavier(rng, widths[-1], 1)
        params["b_head"] = np.zeros(1)
        return params
    # LSTM: per layer, gate-stacked W (in, 4H), U (H, 4H), b (4H);
    # gate column order [i, f, g, o]; Xavier bound per gate block.
    in_w = spec.input_width
    for layer, h in enumerate(spec.hidden):
        w_blocks = [_xavier(rng, in_w, h) for _ in range(4)]
        u_blocks = [_xavier(rng, h, h) for _ in range(4)]
        params[f"W{layer}"] = np.concatenate(w_blocks, axis=1)
        params[f"U{layer}"] = np.concatenate(u_blocks, axis=1)
        params[f"b{layer}"] = np.zeros(4 * h)
        in_w = h
    params["W_head"] = _xavier(rng, spec.hidden[-1], 1)
    params["b_head"] = np.zeros(1)
    return params


def _dropout_mask(rng, shape, rate):
    return (rng.uniform(size=shape) >= rate) / (1.0 - rate)


# --------------------------------------------------------------------------
# FFNN


def forward_ffnn(params, batch, spec: NetworkSpec, training=False, rng=None):
    """Returns (predictions (B,), cache). Dropout only in training mode."""
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ValueError(
            f"batch width {x.shape[-1] if x.ndim == 2 else '?'} != input width {spec.input_width}"
        )
    cache = {"inputs": [x], "pre": [], "masks": []}
    a = x
    for i in range(len(spec.hidden)):
        z = a @ params[f"W{i}"] + params[f"b{i}"]
        a = np.maximum(z, 0.0)
        if training and spec.dropout_rate > 0.0:
            mask = _dropout_mask(rng, a.shape, spec.dropout_rate)
            a = a * mask
        else:
            mask = None
        cache["pre"].append(z)
        cache["masks"].append(mask)
        cache["inputs"].append(a)
    pred = (a @ params["W_head"] + params["b_head"])[:, 0]
    return pred, cache


def backward_ffnn(params, cache, dpred, spec: NetworkSpec):
    """Gradients of a scalar loss given dL/dpred (B,)."""
    grads = {}
    a_last = cache["inputs"][-1]
    dy = dpred[:, None]
    grads["W_head"] = a_last.T @ dy
    grads["b_head"] = dy.sum(axis=0)
    da = dy @ params["W_head"].T
    for i in reversed(range(len(spec.hidden))):
        mask = cache["masks"][i]
        if mask is not None:
            da = da * mask
        dz = da * (cache["pre"][i] > 0.0)
        a_in = cache["inputs"][i]
        grads[f"W{i}"] = a_in.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        da = dz @ params[f"W{i}"].T
    return grads


# --------------------------------------------------------------------------
# LSTM


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward_lstm_window(params, windows, spec: NetworkSpec, training=False, rng=None):
    """Stacked-LSTM forward over (B, T, F) windows -> predictions (B,).

    Each layer's hidden sequence passes through its output activation
    (tanh for the first layer, sigmoid for the second) and dropout; the
    head reads the last step of the top layer.
    """
    x = np.asarray(windows, dtype=float)
    if x.ndim != 3 or x.shape[1] != spec.window or x.shape[2] != spec.input_width:
        raise ValueError(
            f"windows must be (B, {spec.window}, {spec.input_width}); got {x.shape}"
        )
    b, t_steps, _ = x.shape
    cache = {"x": x, "layers": []}
    seq = x
    for layer, h_width in enumerate(spec.hidden):
        w, u, bias = params[f"W{layer}"], params[f"U{layer}"], params[f"b{layer}"]
        act = "tanh" if layer < len(spec.hidden) - 1 else "sigmoid"
        h = np.zeros((b, h_width))
        c = np.zeros((b, h_width))
        steps = []
        outs = np.empty((b, t_steps, h_width))
        for t in range(t_steps):
            z = seq[:, t, :] @ w + h @ u + bias
            zi, zf, zg, zo = np.split(z, 4, axis=1)
            gi, gf, go = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
            gg = np.tanh(zg)
            c_prev, h_prev = c, h
            c = gf * c_prev + gi * gg
            tanh_c = np.tanh(c)
            h = go * tanh_c
            if act == "tanh":
                out = np.tanh(h)
            else:
                out = _sigmoid(h)
            steps.append(
                {
                    "x": seq[:, t, :],
                    "h_prev": h_prev,
                    "c_prev": c_prev,
                    "i": gi,
                    "f": gf,
                    "g": gg,
                    "o": go,
                    "c": c,
                    "tanh_c": tanh_c,
                    "h": h,
                    "out": out,
                }
            )
            outs[:, t, :] = out
        if training and spec.dropout_rate > 0.0:
            mask = _dropout_mask(rng, outs.shape, spec.dropout_rate)
            outs = outs * mask
        else:
            mask = None
        cache["layers"].append({"steps": steps, "mask": mask, "act": act, "outs": outs})
        seq = outs
    pred = (seq[:, -1, :] @ params["W_head"] + params["b_head"])[:, 0]
    cache["top"] = seq[:, -1, :]
    return pred, cache


def backward_lstm(params, cache, dpred, spec: NetworkSpec):
    """BPTT over the window; returns gradients for every parameter."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    x = cache["x"]
    b, t_steps, _ = x.shape
    dy = dpred[:, None]
    grads["W_head"] = cache["top"].T @ dy
    grads["b_head"] = dy.sum(axis=0)

    # gradient wrt each layer's (post-dropout) output sequence
    n_layers = len(spec.hidden)
    dseq = np.zeros((b, t_steps, spec.hidden[-1]))
    dseq[:, -1, :] = dy @ params["W_head"].T

    for layer in reversed(range(n_layers)):
        lc = cache["layers"][layer]
        h_width = spec.hidden[layer]
        w, u = params[f"W{layer}"], params[f"U{layer}"]
        if lc["mask"] is not None:
            dseq = dseq * lc["mask"]
        dh_next = np.zeros((b, h_width))
        dc_next = np.zeros((b, h_width))
        dprev_seq = np.zeros((b, t_steps, w.shape[0]))
        dw = np.zeros_like(w)
        du = np.zeros_like(u)
        db = np.zeros_like(params[f"b{layer}"])
        for t in reversed(range(t_steps)):
            st = lc["steps"][t]
            dout = dseq[:, t, :]
            if lc["act"] == "tanh":
                dh = dout * (1.0 - st["out"] ** 2)
            else:
                dh = dout * st["out"] * (1.0 - st["out"])
            dh = dh + dh_next
            do = dh * st["tanh_c"]
            dc = dh * st["o"] * (1.0 - st["tanh_c"] ** 2) + dc_next
            di = dc * st["g"]
            dg = dc * st["i"]
            df = dc * st["c_prev"]
            dc_next = dc * st["f"]
            dzi = di * st["i"] * (1.0 - st["i"])
            dzf = df * st["f"] * (1.0 - st["f"])
            dzo = do * st["o"] * (1.0 - st["o"])
            dzg = dg * (1.0 - st["g"] ** 2)
            dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)
            dw += st["x"].T @ dz
            du += st["h_prev"].T @ dz
            db += dz.sum(axis=0)
            dprev_seq[:, t, :] = dz @ w.T
            dh_next = dz @ u.T
        grads[f"W{layer}"] = dw
        grads[f"U{layer}"] = du
        grads[f"b{layer}"] = db
        dseq = dprev_seq
    return grads


# --------------------------------------------------------------------------
# Loss and optimizers


def loss_mse(predictions: np.ndarray, targets: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError("predictions and targets must have equal length")
    return float(np.mean((predictions - targets) ** 2))


def loss_and_grads(params, batch, targets, spec: NetworkSpec, training=False, rng=None):
    """MSE loss and parameter gradients for either network kind."""
    targets = np.asarray(targets, dtype=float)
    if spec.kind == "ffnn":
        pred, cache = forward_ffnn(params, batch, spec, training, rng)
        dpred = 2.0 * (pred - targets) / targets.size
        return loss_mse(pred, targets), backward_ffnn(params, cache, dpred, spec)
    pred, cache = forward_lstm_window(params, batch, spec, training, rng)
    dpred = 2.0 * (pred - targets) / targets.size
    return loss_mse(pred, targets), backward_lstm(params, cache, dpred, spec)


@dataclass
class OptimizerState:
    kind: str  # "adam" | "nadam"
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def make_optimizer(kind: str, learning_rate: float, params) -> OptimizerState:
    if kind not in ("adam", "nadam"):
        raise ValueError(f"unknown optimizer {kind!r}")
    return OptimizerState(
        kind=kind,
        learning_rate=learning_rate,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_update(state: OptimizerState, params, grads, nesterov: bool | None = None):
    """In the Nesterov variant the first-moment estimate is replaced by
    the lookahead mix beta1*m_hat + (1-beta1)*g_hat."""
    if nesterov is None:
        nesterov = state.kind == "nadam"
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    new_params = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / (1.0 - b1**t)
        v_hat = state.v[k] / (1.0 - b2**t)
        if nesterov:
            m_eff = b1 * m_hat + (1.0 - b1) * g / (1.0 - b1**t)
        else:
            m_eff = m_hat
        new_params[k] = p - state.learning_rate * m_eff / (np.sqrt(v_hat) + state.eps)
    return state, new_params


def nadam_update(state: OptimizerState, params, grads):
    return adam_update(state, params, grads, nesterov=True)


# --------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    patience: int
    max_epochs: int
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def default_train_config(kind: str, seed: int = 0) -> TrainConfig:
    if kind == "ffnn":
        return TrainConfig(batch_size=1024, patience=20, max_epochs=500, seed=seed)
    return TrainConfig(batch_size=256, patience=4, max_epochs=200, seed=seed)


DEFAULT_LEARNING_RATE = {"ffnn": 8e-4, "rnn": 5e-4}


def train_with_early_stopping(
    spec: NetworkSpec,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    learning_rate: float | None = None,
):
    """Mini-batch training with patience-based early stopping.

    Returns (best_params, history) where history is one dict per executed
    epoch. The returned parameters are those of the best validation
    epoch, not the last.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")

    ss = np.random.SeedSequence(config.seed)
    init_ss, shuffle_ss, drop_ss = ss.spawn(3)
    params = xavier_init(spec, int(init_ss.generate_state(1, np.uint64)[0]))
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    drop_rng = np.random.Generator(np.random.PCG64(drop_ss))

    optimizer = make_optimizer(
        "adam" if spec.kind == "ffnn" else "nadam",
        learning_rate if learning_rate is not None else DEFAULT_LEARNING_RATE[spec.kind],
        params,
    )

    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = -1
    history = []
    n = len(x_train)
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(
                params, x_train[idx], y_train[idx], spec, training=True, rng=drop_rng
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            optimizer, params = adam_update(optimizer, params, grads)
            epoch_losses.append(loss)
        val_loss = _evaluate(params, x_val, y_val, spec)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_loss": val_loss,
            }
        )
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break
    return best_params, history


def _evaluate(params, x, y, spec, chunk=4096):
    losses = []
    weights = []
    for start in range(0, len(x), chunk):
        xb, yb = x[start : start + chunk], y[start : start + chunk]
        if spec.kind == "ffnn":
            pred, _ = forward_ffnn(params, xb, spec, training=False)
        else:
            pred, _ = forward_lstm_window(params, xb, spec, training=False)
        losses.append(loss_mse(pred, yb))
        weights.append(len(xb))
    return float(np.average(losses, weights=weights))


# --------------------------------------------------------------------------
# Inference over frames


def predict(params, spec: NetworkSpec, scaler: Scaler, frames: np.ndarray, input_set: str):
    """Per-frame sideslip prediction (degrees) over one manoeuvre.

    RNN predictions start at the first full window; the leading window-1
    outputs repeat the first valid prediction.
    """
    features = apply_scaler(scaler, features_from_frames(frames, input_set))
    if spec.kind == "ffnn":
        pred, _ = forward_ffnn(params, features, spec, training=False)
        return pred
    n = features.shape[0]
    if n < spec.window:
        raise ValueError(f"manoeuvre shorter than the {spec.window}-step window")
    windows = sliding_windows(features, spec.window)
    pred, _ = forward_lstm_window(params, windows, spec, training=False)
    out = np.empty(n)
    out[spec.window - 1 :] = pred
    out[: spec.window - 1] = pred[0]
    return out


def sliding_windows(features: np.ndarray, window: int, stride: int = 1) -> np.ndarray:
    """Stride-`stride` sliding windows (N_w, window, F) over one manoeuvre."""
    n = features.shape[0]
    if n < window:
        return np.empty((0, window, features.shape[1]))
    view = np.lib.stride_tricks.sliding_window_view(features, window, axis=0)
    return view.transpose(0, 2, 1)[::stride].copy()


# --------------------------------------------------------------------------
# Checkpointing


CHECKPOINT_VERSION = "1"


def save_checkpoint(path, spec: NetworkSpec, scaler: Scaler, params, history, input_set: str):
    payload = {
        "version": CHECKPOINT_VERSION,
        "input_set": input_set,
        "spec": {
            "kind": spec.kind,
            "input_width": spec.input_width,
            "hidden": list(spec.hidden),
            "dropout_rate": spec.dropout_rate,
            "window": spec.window,
        },
        "scaler": {"mins": scaler.mins.tolist(), "maxs": scaler.maxs.tolist()},
        "params": {k: v.tolist() for k, v in params.items()},
        "history": history,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    s = payload["spec"]
    spec = NetworkSpec(
        kind=s["kind"],
        input_width=s["input_width"],
        hidden=tuple(s["hidden"]),
        dropout_rate=s["dropout_rate"],
        window=s["window"],
    )
    scaler = Scaler(
        mins=np.array(payload["scaler"]["mins"]), maxs=np.array(payload["scaler"]["maxs"])
    )
    params = {k: np.array(v) for k, v in payload["params"].items()}
    return spec, scaler, params, payload["history"], payload["input_set"]
