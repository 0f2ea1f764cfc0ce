"""Stacked-LSTM next-position predictor: forward, BPTT, AdamW-style training.

Two LSTM layers (gate equations below) feed a dense head that maps the
last hidden state to a 2D position; per time step

    i = sigmoid(W_ii x + b_ii + W_hi h + b_hi)
    f = sigmoid(W_if x + b_if + W_hf h + b_hf)
    g = tanh   (W_ig x + b_ig + W_hg h + b_hg)
    o = sigmoid(W_io x + b_io + W_ho h + b_ho)
    c' = f * c + i * g
    h' = o * tanh(c')

Dropout (inverted scaling, training mode only) sits after the top LSTM
layer. Positions are min-max scaled into the unit square using the
configured movement area before entering the network and inverse-scaled
on output. Gradients are exact reverse accumulation through the whole
unrolled sequence; the optimizer is Adam with decoupled weight decay and
a per-epoch geometric learning-rate decay. Training keeps the parameter
snapshot with the lowest validation loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, StreamGapError
from .estimators import PositionEstimate
from .mobility import Area
from .rng import Stream, derive_seed

MODEL_FORMAT = "uwauth-rnn"
MODEL_VERSION = 1

_GATES = ("i", "f", "g", "o")
_LSTM_FIELDS = tuple(f"w_i{g}" for g in _GATES) + tuple(f"w_h{g}" for g in _GATES) \
    + tuple(f"b_i{g}" for g in _GATES) + tuple(f"b_h{g}" for g in _GATES)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmLayerParams:
    w_ii: np.ndarray
    w_if: np.ndarray
    w_ig: np.ndarray
    w_io: np.ndarray
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_hg: np.ndarray
    w_ho: np.ndarray
    b_ii: np.ndarray
    b_if: np.ndarray
    b_ig: np.ndarray
    b_io: np.ndarray
    b_hi: np.ndarray
    b_hf: np.ndarray
    b_hg: np.ndarray
    b_ho: np.ndarray

    def __post_init__(self):
        h, i = self.w_ii.shape
        for g in _GATES:
            if getattr(self, f"w_i{g}").shape != (h, i):
                raise ConfigError(f"w_i{g} shape mismatch")
            if getattr(self, f"w_h{g}").shape != (h, h):
                raise ConfigError(f"w_h{g} shape mismatch")
            for prefix in ("b_i", "b_h"):
                if getattr(self, f"{prefix}{g}").shape != (h,):
                    raise ConfigError(f"{prefix}{g} shape mismatch")

    @property
    def hidden_size(self) -> int:
        return self.w_ii.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_ii.shape[1]


@dataclass(frozen=True)
class LstmState:
    c: np.ndarray
    h: np.ndarray


@dataclass
class DenseLayer:
    w: np.ndarray   # (out, in)
    b: np.ndarray   # (out,)


@dataclass
class RnnModel:
    layers: list[LstmLayerParams]
    dense: list[DenseLayer]
    dropout_rate: float
    area: Area

    def __post_init__(self):
        if not self.layers or not self.dense:
            raise ConfigError("model needs at least one LSTM layer and one dense layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must be in [0, 1)")
        dim = self.layers[0].input_size
        if dim != 2:
            raise ConfigError("model input must be 2-dimensional positions")
        for i, layer in enumerate(self.layers):
            if layer.input_size != dim:
                raise ConfigError(f"LSTM layer {i} expects input {layer.input_size}, got {dim}")
            dim = layer.hidden_size
        for i, d in enumerate(self.dense):
            if d.w.shape[1] != dim:
                raise ConfigError(f"dense layer {i} expects input {d.w.shape[1]}, got {dim}")
            dim = d.w.shape[0]
        if dim != 2:
            raise ConfigError(f"dense head must end at 2 outputs, got {dim}")

    def parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for li, layer in enumerate(self.layers):
            for name in _LSTM_FIELDS:
                out[f"lstm{li}.{name}"] = getattr(layer, name)
        for di, d in enumerate(self.dense):
            out[f"dense{di}.w"] = d.w
            out[f"dense{di}.b"] = d.b
        return out

    def set_parameters(self, values: dict[str, np.ndarray]):
        for name, val in values.items():
            owner, attr = name.split(".")
            if owner.startswith("lstm"):
                setattr(self.layers[int(owner[4:])], attr, val)
            else:
                layer = self.dense[int(owner[5:])]
                setattr(layer, attr, val)

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}


def dense_widths(hidden: int, n_dense: int) -> list[int]:
    """Widths shrinking geometrically from the top hidden size down to 2."""
    ratio = (2.0 / hidden) ** (1.0 / n_dense)
    widths = [max(2, round(hidden * ratio ** j)) for j in range(1, n_dense)]
    return widths + [2]


def build_model(area: Area, hidden_sizes=(32, 64), n_dense: int = 4,
                dropout_rate: float = 0.2, seed: int = 0) -> RnnModel:
    """Fresh model with uniform(-k, k) init, k = 1/sqrt(hidden or fan-in)."""
    stream = Stream(derive_seed(seed, 0xC0DE))

    def uni(shape, k):
        return k * (2.0 * stream.uniform_co(int(np.prod(shape))) - 1.0).reshape(shape)

    layers = []
    in_dim = 2
    for h in hidden_sizes:
        k = 1.0 / math.sqrt(h)
        kwargs = {}
        for g in _GATES:
            kwargs[f"w_i{g}"] = uni((h, in_dim), k)
            kwargs[f"w_h{g}"] = uni((h, h), k)
            kwargs[f"b_i{g}"] = uni((h,), k)
            kwargs[f"b_h{g}"] = uni((h,), k)
        layers.append(LstmLayerParams(**kwargs))
        in_dim = h
    dense = []
    for w_out in dense_widths(in_dim, n_dense):
        k = 1.0 / math.sqrt(in_dim)
        dense.append(DenseLayer(w=uni((w_out, in_dim), k), b=uni((w_out,), k)))
        in_dim = w_out
    return RnnModel(layers=layers, dense=dense, dropout_rate=dropout_rate, area=Area(*area))


def zero_state(layer: LstmLayerParams, batch: int | None = None) -> LstmState:
    shape = (layer.hidden_size,) if batch is None else (batch, layer.hidden_size)
    return LstmState(c=np.zeros(shape), h=np.zeros(shape))


def _gate_preacts(params: LstmLayerParams, x: np.ndarray, h: np.ndarray):
    return (x @ params.w_ii.T + params.b_ii + h @ params.w_hi.T + params.b_hi,
            x @ params.w_if.T + params.b_if + h @ params.w_hf.T + params.b_hf,
            x @ params.w_ig.T + params.b_ig + h @ params.w_hg.T + params.b_hg,
            x @ params.w_io.T + params.b_io + h @ params.w_ho.T + params.b_ho)


def lstm_step(params: LstmLayerParams, x: np.ndarray,
              state: LstmState) -> tuple[np.ndarray, LstmState]:
    """One cell update; returns the output gate and the new (c, h) state."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_size:
        raise ConfigError(f"input size {x.shape[-1]} != expected {params.input_size}")
    a_i, a_f, a_g, a_o = _gate_preacts(params, x, state.h)
    i, f, o = _sigmoid(a_i), _sigmoid(a_f), _sigmoid(a_o)
    g = np.tanh(a_g)
    c = f * state.c + i * g
    h = o * np.tanh(c)
    return o, LstmState(c=c, h=h)


# ------------------------------------------------------------ scaling helpers

def scale_to_unit(p: np.ndarray, area: Area) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    out[..., 0] = (p[..., 0] - area.x_min) / (area.x_max - area.x_min)
    out[..., 1] = (p[..., 1] - area.y_min) / (area.y_max - area.y_min)
    return out


def scale_from_unit(u: np.ndarray, area: Area) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    out[..., 0] = area.x_min + u[..., 0] * (area.x_max - area.x_min)
    out[..., 1] = area.y_min + u[..., 1] * (area.y_max - area.y_min)
    return out


# ------------------------------------------------------- forward and backward

def _forward_cached(model: RnnModel, x_seq: np.ndarray, training: bool,
                    dropout_stream: Stream | None):
    """Unrolled forward over (B, L, 2) normalized inputs; caches every
    intermediate needed by the backward pass. Returns (Y, cache)."""
    B, L, _ = x_seq.shape
    n_layers = len(model.layers)
    layer_cache = [{k: [] for k in ("x", "h_prev", "c_prev", "i", "f", "g", "o",
                                    "c", "tanh_c")} for _ in range(n_layers)]
    states = [zero_state(layer, B) for layer in model.layers]
    masks: list[np.ndarray | None] = []
    dense_cache: list[list[np.ndarray]] = []
    y = np.empty((B, L, 2))
    use_dropout = training and model.dropout_rate > 0.0
    keep = 1.0 - model.dropout_rate
    for t in range(L):
        inp = x_seq[:, t, :]
        for li, layer in enumerate(model.layers):
            st = states[li]
            a_i, a_f, a_g, a_o = _gate_preacts(layer, inp, st.h)
            i, f, o = _sigmoid(a_i), _sigmoid(a_f), _sigmoid(a_o)
            g = np.tanh(a_g)
            c = f * st.c + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            lc = layer_cache[li]
            lc["x"].append(inp)
            lc["h_prev"].append(st.h)
            lc["c_prev"].append(st.c)
            lc["i"].append(i)
            lc["f"].append(f)
            lc["g"].append(g)
            lc["o"].append(o)
            lc["c"].append(c)
            lc["tanh_c"].append(tanh_c)
            states[li] = LstmState(c=c, h=h)
            inp = h
        if use_dropout:
            mask = (dropout_stream.uniform_co(inp.size).reshape(inp.shape) < keep) / keep
            inp = inp * mask
            masks.append(mask)
        else:
            masks.append(None)
        acts = [inp]
        for di, d in enumerate(model.dense):
            z = inp @ d.w.T + d.b
            inp = np.tanh(z) if di < len(model.dense) - 1 else z
            acts.append(inp)
        dense_cache.append(acts)
        y[:, t, :] = inp
    cache = {"layers": layer_cache, "masks": masks, "dense": dense_cache, "x": x_seq}
    return y, cache


def model_forward(model: RnnModel, inputs: np.ndarray, training: bool = False,
                  dropout_seed: int = 0) -> np.ndarray:
    """Predict the next position for every step of a (L, 2) input sequence.

    Inputs and outputs are raw coordinates in meters; states start at zero
    and thread across the sequence. Dropout acts only in training mode.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[-1] != 2:
        raise ConfigError(f"expected (L, 2) inputs, got {inputs.shape}")
    if inputs.shape[0] == 0:
        raise DataError("empty input sequence")
    x = scale_to_unit(inputs, model.area)[None]
    stream = Stream(derive_seed(dropout_seed, 0xD0)) if training else None
    y, _ = _forward_cached(model, x, training, stream)
    return scale_from_unit(y[0], model.area)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of per-coordinate squared errors, summed over x, y."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.shape[-1] != 2:
        raise ConfigError(f"shape mismatch: {pred.shape} vs {target.shape}")
    b = int(np.prod(pred.shape[:-1]))
    d = pred - target
    return float(np.sum(d * d) / b)


def backward(model: RnnModel, cache: dict, y: np.ndarray, targets: np.ndarray,
             frozen: frozenset[str] = frozenset()) -> dict[str, np.ndarray]:
    """Exact gradients of mse_loss(y, targets) w.r.t. every parameter."""
    B, L, _ = y.shape
    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    dy = 2.0 * (y - targets) / (B * L)
    n_layers = len(model.layers)
    dh_next = [np.zeros((B, layer.hidden_size)) for layer in model.layers]
    dc_next = [np.zeros((B, layer.hidden_size)) for layer in model.layers]
    for t in range(L - 1, -1, -1):
        # dense head (last layer linear, tanh in between)
        acts = cache["dense"][t]
        delta = dy[:, t, :]
        for di in range(len(model.dense) - 1, -1, -1):
            d = model.dense[di]
            if di < len(model.dense) - 1:
                delta = delta * (1.0 - acts[di + 1] ** 2)
            grads[f"dense{di}.w"] += delta.T @ acts[di]
            grads[f"dense{di}.b"] += delta.sum(axis=0)
            delta = delta @ d.w
        mask = cache["masks"][t]
        if mask is not None:
            delta = delta * mask
        d_above = delta
        for li in range(n_layers - 1, -1, -1):
            lc = cache["layers"][li]
            layer = model.layers[li]
            i = lc["i"][t]
            f = lc["f"][t]
            g = lc["g"][t]
            o = lc["o"][t]
            tanh_c = lc["tanh_c"][t]
            dh = d_above + dh_next[li]
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next[li]
            di_ = dc * g
            df = dc * lc["c_prev"][t]
            dg = dc * i
            dc_next[li] = dc * f
            da_i = di_ * i * (1.0 - i)
            da_f = df * f * (1.0 - f)
            da_o = do * o * (1.0 - o)
            da_g = dg * (1.0 - g ** 2)
            x = lc["x"][t]
            h_prev = lc["h_prev"][t]
            for gate, da in zip(_GATES, (da_i, da_f, da_g, da_o)):
                grads[f"lstm{li}.w_i{gate}"] += da.T @ x
                grads[f"lstm{li}.w_h{gate}"] += da.T @ h_prev
                s = da.sum(axis=0)
                grads[f"lstm{li}.b_i{gate}"] += s
                grads[f"lstm{li}.b_h{gate}"] += s
            d_above = (da_i @ layer.w_ii + da_f @ layer.w_if
                       + da_g @ layer.w_ig + da_o @ layer.w_io)
            dh_next[li] = (da_i @ layer.w_hi + da_f @ layer.w_hf
                           + da_g @ layer.w_hg + da_o @ layer.w_ho)
    for name in frozen:
        grads[name] = np.zeros_like(grads[name])
    return grads


def loss_and_grads(model: RnnModel, x_seq: np.ndarray, targets: np.ndarray,
                   training: bool = True, dropout_stream: Stream | None = None,
                   frozen: frozenset[str] = frozenset()):
    """Forward + backward on normalized (B, L, 2) batches."""
    y, cache = _forward_cached(model, x_seq, training, dropout_stream)
    return mse_loss(y, targets), backward(model, cache, y, targets, frozen)


# -------------------------------------------------------------------- optimizer

@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: AdamConfig) -> dict[str, np.ndarray]:
    """Adam with bias correction and decoupled weight decay; updates in place."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - cfg.beta1) * (g - m)
        v += (1.0 - cfg.beta2) * (g * g - v)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p -= cfg.lr * (update + cfg.weight_decay * p)
    return params


# --------------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    batch: int = 8
    epochs: int = 300
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    weight_decay: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 1:
            raise ConfigError("batch and epochs must be positive")
        if self.lr_start < 0 or self.lr_end < 0 or self.lr_end > self.lr_start:
            raise ConfigError("need 0 <= lr_end <= lr_start")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")

    def lr_at(self, epoch: int) -> float:
        if self.epochs == 1 or self.lr_start == 0.0:
            return self.lr_start
        frac = epoch / (self.epochs - 1)
        return self.lr_start * (self.lr_end / self.lr_start) ** frac


def _sequences_to_batches(seqs: list[np.ndarray], area: Area):
    arr = np.stack([np.asarray(s, dtype=np.float64) for s in seqs], axis=0)
    u = scale_to_unit(arr, area)
    return u[:, :-1, :], u[:, 1:, :]   # inputs, next-step targets


def train(model: RnnModel, train_seqs: list[np.ndarray], val_seqs: list[np.ndarray],
          cfg: TrainConfig) -> tuple[RnnModel, dict[str, list[float]]]:
    """Train to predict the next estimate; keeps the best-on-validation snapshot.

    Sequences are (L, 2) position-estimate arrays in meters, all of equal
    length; inputs are samples 0..L-2 and targets samples 1..L-1.
    """
    if not train_seqs or not val_seqs:
        raise DataError("training and validation sets must be non-empty")
    lengths = {len(s) for s in train_seqs} | {len(s) for s in val_seqs}
    if len(lengths) != 1:
        raise ConfigError(f"sequences must share one length, got {sorted(lengths)}")
    if lengths.pop() < 2:
        raise ConfigError("sequences need at least 2 samples")
    x_train, t_train = _sequences_to_batches(train_seqs, model.area)
    x_val, t_val = _sequences_to_batches(val_seqs, model.area)
    shuffle_stream = Stream(derive_seed(cfg.seed, 0x5F))
    dropout_stream = Stream(derive_seed(cfg.seed, 0xD8))
    opt_state = AdamState()
    history: dict[str, list[float]] = {"train_loss": [], "val_loss": [], "lr": []}
    best_val = math.inf
    best_params = model.copy_parameters()
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        opt_cfg = AdamConfig(lr=lr, weight_decay=cfg.weight_decay)
        order = np.argsort(shuffle_stream.u64(n), kind="stable")
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = loss_and_grads(model, x_train[idx], t_train[idx],
                                         training=True, dropout_stream=dropout_stream)
            adam_step(model.parameters(), grads, opt_state, opt_cfg)
            epoch_loss += loss
            n_batches += 1
        val_pred, _ = _forward_cached(model, x_val, False, None)
        val_loss = mse_loss(val_pred, t_val)
        history["train_loss"].append(epoch_loss / max(1, n_batches))
        history["val_loss"].append(val_loss)
        history["lr"].append(lr)
        if val_loss < best_val:
            best_val = val_loss
            best_params = model.copy_parameters()
    model.set_parameters(best_params)
    return model, history


# ------------------------------------------------------------------ prediction

def predict_next(model: RnnModel, estimates: list[PositionEstimate]) -> list[tuple[float, tuple[float, float]]]:
    """One prediction per instant from t = T on, emitted before that
    instant's estimate is consumed; hidden states persist across the stream."""
    if len(estimates) < 1:
        raise DataError("empty estimate stream")
    times = [e.t for e in estimates]
    if len(times) >= 2:
        spacing = times[1] - times[0]
        if spacing <= 0:
            raise StreamGapError("non-increasing timestamps")
        for t_prev, t_cur in zip(times[1:], times[2:]):
            if abs((t_cur - t_prev) - spacing) > 1e-9 * max(1.0, abs(spacing)):
                raise StreamGapError(
                    f"irregular sampling at t={t_cur:g}: step {t_cur - t_prev:g} != {spacing:g}")
    raw = np.array([e.p for e in estimates], dtype=np.float64)
    preds = model_forward(model, raw[:-1]) if len(estimates) > 1 else np.empty((0, 2))
    return [(estimates[k + 1].t, (float(preds[k, 0]), float(preds[k, 1])))
            for k in range(len(estimates) - 1)]


# ------------------------------------------------------------------ model file

def save_model(model: RnnModel, path: str):
    """Versioned JSON with row-major matrices, shapes, and scaling bounds."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dropout_rate": model.dropout_rate,
        "area": list(model.area),
        "layers": [], "dense": [],
    }
    for layer in model.layers:
        entry = {}
        for name in _LSTM_FIELDS:
            arr = getattr(layer, name)
            entry[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
        doc["layers"].append(entry)
    for d in model.dense:
        doc["dense"].append({"w": {"shape": list(d.w.shape), "data": d.w.ravel().tolist()},
                             "b": {"shape": list(d.b.shape), "data": d.b.ravel().tolist()}})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def _load_array(entry, expect_ndim: int) -> np.ndarray:
    shape = tuple(entry["shape"])
    arr = np.asarray(entry["data"], dtype=np.float64)
    if len(shape) != expect_ndim or arr.size != int(np.prod(shape)):
        raise DataError(f"array payload does not match declared shape {shape}")
    return arr.reshape(shape)


def load_model(path: str) -> RnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')!r}")
    layers = []
    for entry in doc["layers"]:
        kwargs = {}
        for name in _LSTM_FIELDS:
            kwargs[name] = _load_array(entry[name], 2 if name.startswith("w") else 1)
        layers.append(LstmLayerParams(**kwargs))
    dense = [DenseLayer(w=_load_array(e["w"], 2), b=_load_array(e["b"], 1))
             for e in doc["dense"]]
    return RnnModel(layers=layers, dense=dense, dropout_rate=float(doc["dropout_rate"]),
                    area=Area(*doc["area"]))
