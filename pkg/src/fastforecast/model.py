"""Model assembly, training and prediction.

The full architecture: affine input embedding, sinusoidal positional
encoding, a stack of encoder blocks (self-attention sublayer with residual
and layer norm, then a position-wise feed-forward sublayer with residual
and layer norm), two bidirectional LSTM layers, and a fully-connected head
that reads the last timestep's representation and emits the normalized
next-close prediction.

Five variants share this code path and differ only in which stages are
active and which attention kernel the blocks use:

  bilstm_only                  embed -> BiLSTM x2 -> head
  transformer_mh               embed+pos -> exact-attention blocks -> head
  transformer_mh_no_indicators same network, OHLCV-only features
  performer                    embed+pos -> FAVOR+ blocks -> head
  performer_bilstm             embed+pos -> FAVOR+ blocks -> BiLSTM x2 -> head

Training is mini-batch gradient descent with Adam moments and global-norm
gradient clipping, minimizing MSE in normalized space.  Everything is
deterministic given (spec, seed, dataset, hyperparameters).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, AttentionWeights, multi_head
from .data import ColumnStats, Dataset, MetricSet, evaluate_metrics
from .errors import ConfigError, DataError, DivergenceError, FiniteError
from .favor import FavorConfig, RandomFeatureMap, draw_features, favor_bidirectional, favor_unidirectional
from .lstm import LstmWeights, bilstm_forward_steps, init_lstm_weights
from .tensor import GradTape, Tensor

VARIANTS = ("bilstm_only", "transformer_mh", "transformer_mh_no_indicators",
            "performer", "performer_bilstm")
ATTENTION_VARIANTS = ("transformer_mh", "transformer_mh_no_indicators",
                      "performer", "performer_bilstm")
FAVOR_VARIANTS = ("performer", "performer_bilstm")
BILSTM_VARIANTS = ("bilstm_only", "performer_bilstm")

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelSpec:
    """Architecture plus every knob needed to rebuild it bit-identically."""

    variant: str
    window: int
    n_features: int
    d_model: int = 64
    blocks: int = 2
    heads: int = 4
    favor: FavorConfig | None = None
    bilstm_hidden: int = 64
    fc_widths: tuple = (64, 1)
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}'")
        if self.window < 1 or self.n_features < 1:
            raise ConfigError("window and n_features must be positive")
        if not self.fc_widths or self.fc_widths[-1] != 1:
            raise ConfigError("fc_widths must end in 1 (scalar close output)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.variant in FAVOR_VARIANTS:
            if self.favor is None:
                raise ConfigError(f"variant '{self.variant}' requires a favor config")
            if self.favor.d_k != self.d_model // self.heads:
                raise ConfigError(
                    f"favor d_k = {self.favor.d_k} != d_model/heads = "
                    f"{self.d_model // self.heads}")
        elif self.favor is not None:
            raise ConfigError(f"variant '{self.variant}' does not take a favor config")
        if self.variant in ATTENTION_VARIANTS:
            AttentionConfig.for_model(self.d_model, self.heads)  # validates divisibility

    @property
    def uses_attention(self) -> bool:
        return self.variant in ATTENTION_VARIANTS

    @property
    def uses_favor(self) -> bool:
        return self.variant in FAVOR_VARIANTS

    @property
    def uses_bilstm(self) -> bool:
        return self.variant in BILSTM_VARIANTS

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "window": self.window,
             "n_features": self.n_features, "d_model": self.d_model,
             "blocks": self.blocks, "heads": self.heads,
             "bilstm_hidden": self.bilstm_hidden,
             "fc_widths": list(self.fc_widths), "dropout": self.dropout,
             "seed": self.seed}
        if self.favor is not None:
            d["favor"] = {"r": self.favor.r, "d_k": self.favor.d_k,
                          "seed": self.favor.seed, "causal": self.favor.causal,
                          "redraw_interval": self.favor.redraw_interval}
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        favor = None
        if d.get("favor") is not None:
            f = d["favor"]
            favor = FavorConfig(r=f["r"], d_k=f["d_k"], seed=f["seed"],
                                causal=f.get("causal", False),
                                redraw_interval=f.get("redraw_interval"))
        return ModelSpec(variant=d["variant"], window=d["window"],
                         n_features=d["n_features"], d_model=d["d_model"],
                         blocks=d["blocks"], heads=d["heads"], favor=favor,
                         bilstm_hidden=d["bilstm_hidden"],
                         fc_widths=tuple(d["fc_widths"]), dropout=d["dropout"],
                         seed=d["seed"])


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Fixed position signal: interleaved sin/cos at geometric frequencies."""
    pe = np.zeros((length, d_model))
    pos = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: (d_model // 2)])
    return pe


def _glorot(rng, fan_in, fan_out):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-lim, lim, size=(fan_in, fan_out)), requires_grad=True)


class Model:
    """Built network: ordered parameter dict plus the fixed wiring."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.params: dict[str, Tensor] = {}
        self.feature_maps: list[list[RandomFeatureMap]] = []
        self.favor_generation = 0
        rng = np.random.default_rng(spec.seed)
        d = spec.d_model

        self.params["embed.w"] = _glorot(rng, spec.n_features, d)
        self.params["embed.b"] = Tensor(np.zeros((1, d)), requires_grad=True)
        self.positional = sinusoidal_encoding(spec.window, d) if spec.uses_attention else None

        if spec.uses_attention:
            self.attn_cfg = AttentionConfig.for_model(
                d, spec.heads, causal=bool(spec.favor and spec.favor.causal))
            d_k = self.attn_cfg.d_k
            for i in range(spec.blocks):
                for j in range(spec.heads):
                    self.params[f"block{i}.attn.q{j}"] = _glorot(rng, d, d_k)
                    self.params[f"block{i}.attn.k{j}"] = _glorot(rng, d, d_k)
                    self.params[f"block{i}.attn.v{j}"] = _glorot(rng, d, d_k)
                self.params[f"block{i}.attn.o"] = _glorot(rng, spec.heads * d_k, d)
                self.params[f"block{i}.ln1.g"] = Tensor(np.ones((1, d)), requires_grad=True)
                self.params[f"block{i}.ln1.b"] = Tensor(np.zeros((1, d)), requires_grad=True)
                d_ff = 4 * d
                self.params[f"block{i}.ffn.w1"] = _glorot(rng, d, d_ff)
                self.params[f"block{i}.ffn.b1"] = Tensor(np.zeros((1, d_ff)), requires_grad=True)
                self.params[f"block{i}.ffn.w2"] = _glorot(rng, d_ff, d)
                self.params[f"block{i}.ffn.b2"] = Tensor(np.zeros((1, d)), requires_grad=True)
                self.params[f"block{i}.ln2.g"] = Tensor(np.ones((1, d)), requires_grad=True)
                self.params[f"block{i}.ln2.b"] = Tensor(np.zeros((1, d)), requires_grad=True)
        if spec.uses_favor:
            self._draw_feature_maps()

        if spec.uses_bilstm:
            width_in = d
            hidden = spec.bilstm_hidden
            for layer in (1, 2):
                for direction in ("fwd", "bwd"):
                    w = init_lstm_weights(width_in, hidden, rng)
                    base = f"bilstm{layer}.{direction}"
                    for name, t in (("w_f", w.w_f), ("w_i", w.w_i), ("w_c", w.w_c),
                                    ("w_o", w.w_o), ("b_f", w.b_f), ("b_i", w.b_i),
                                    ("b_c", w.b_c), ("b_o", w.b_o)):
                        self.params[f"{base}.{name}"] = t
                width_in = 2 * hidden
            head_in = 2 * hidden
        else:
            head_in = d

        widths = [head_in, *spec.fc_widths]
        for k, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            self.params[f"fc{k}.w"] = _glorot(rng, fan_in, fan_out)
            self.params[f"fc{k}.b"] = Tensor(np.zeros((1, fan_out)), requires_grad=True)

    # -- structure helpers ---------------------------------------------------

    def _draw_feature_maps(self) -> None:
        """One map per (block, head); seeds derived from the favor seed and
        the redraw generation so redraws stay reproducible."""
        spec = self.spec
        ss = np.random.SeedSequence([spec.favor.seed, self.favor_generation])
        seeds = ss.generate_state(spec.blocks * spec.heads, dtype=np.uint64)
        self.feature_maps = []
        idx = 0
        for _ in range(spec.blocks):
            row = []
            for _ in range(spec.heads):
                cfg = FavorConfig(r=spec.favor.r, d_k=spec.favor.d_k,
                                  seed=int(seeds[idx]), causal=spec.favor.causal)
                row.append(draw_features(cfg))
                idx += 1
            self.feature_maps.append(row)

    def redraw_features(self) -> None:
        self.favor_generation += 1
        self._draw_feature_maps()

    def set_favor_generation(self, generation: int) -> None:
        self.favor_generation = generation
        if self.spec.uses_favor:
            self._draw_feature_maps()

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            arr = state[name]
            if arr.shape != t.data.shape:
                raise ConfigError(f"parameter '{name}' shape {arr.shape} != {t.data.shape}")
            t.data = np.ascontiguousarray(arr, dtype=np.float64)

    def _attn_weights(self, block: int) -> AttentionWeights:
        p = self.params
        h = self.spec.heads
        return AttentionWeights(
            w_q=[p[f"block{block}.attn.q{j}"] for j in range(h)],
            w_k=[p[f"block{block}.attn.k{j}"] for j in range(h)],
            w_v=[p[f"block{block}.attn.v{j}"] for j in range(h)],
            w_o=p[f"block{block}.attn.o"],
        )

    def _lstm_weights(self, layer: int, direction: str) -> LstmWeights:
        base = f"bilstm{layer}.{direction}"
        p = self.params
        return LstmWeights(p[f"{base}.w_f"], p[f"{base}.w_i"], p[f"{base}.w_c"],
                           p[f"{base}.w_o"], p[f"{base}.b_f"], p[f"{base}.b_i"],
                           p[f"{base}.b_c"], p[f"{base}.b_o"])

    # -- forward pass ----------------------------------------------------------

    def _dropout(self, x: Tensor, rng) -> Tensor:
        p = self.spec.dropout
        if rng is None or p <= 0.0:
            return x
        mask = (rng.random(x.shape) >= p) / (1.0 - p)
        return T.mul(x, Tensor(mask))

    def _layer_norm(self, x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
        n = x.shape[1]
        mean = T.scale(T.rowsum(x), 1.0 / n)
        centered = T.add_rowwise(x, -mean)
        var = T.scale(T.rowsum(T.mul(centered, centered)), 1.0 / n)
        inv = T.recip(T.sqrt(T.add(var, LAYER_NORM_EPS)))
        return T.add_colwise(T.scale_colwise(T.scale_rowwise(centered, inv), gain), bias)

    def _attention_sublayer(self, x: Tensor, batch: int, block: int) -> Tensor:
        spec = self.spec
        length = spec.window
        w = self._attn_weights(block)
        if not spec.uses_favor:
            parts = [multi_head(T.slice_rows(x, s * length, (s + 1) * length),
                                w, self.attn_cfg)
                     for s in range(batch)]
            return T.concat(parts, axis=0) if batch > 1 else parts[0]
        kernel = favor_unidirectional if spec.favor.causal else favor_bidirectional
        # project on the stacked rows once per head, then attend per sample
        per_head_qkv = []
        for j in range(spec.heads):
            per_head_qkv.append((T.matmul(x, w.w_q[j]), T.matmul(x, w.w_k[j]),
                                 T.matmul(x, w.w_v[j])))
        parts = []
        for s in range(batch):
            lo, hi = s * length, (s + 1) * length
            heads = []
            for j, (q, k, v) in enumerate(per_head_qkv):
                heads.append(kernel(T.slice_rows(q, lo, hi), T.slice_rows(k, lo, hi),
                                    T.slice_rows(v, lo, hi), self.feature_maps[block][j]))
            parts.append(T.concat(heads, axis=1) if len(heads) > 1 else heads[0])
        stacked = T.concat(parts, axis=0) if batch > 1 else parts[0]
        return T.matmul(stacked, w.w_o)

    def _encoder_block(self, x: Tensor, batch: int, block: int, rng) -> Tensor:
        p = self.params
        a = self._dropout(self._attention_sublayer(x, batch, block), rng)
        x = self._layer_norm(T.add(x, a), p[f"block{block}.ln1.g"], p[f"block{block}.ln1.b"])
        hidden = T.relu(T.add_colwise(T.matmul(x, p[f"block{block}.ffn.w1"]),
                                      p[f"block{block}.ffn.b1"]))
        f = T.add_colwise(T.matmul(hidden, p[f"block{block}.ffn.w2"]),
                          p[f"block{block}.ffn.b2"])
        f = self._dropout(f, rng)
        return self._layer_norm(T.add(x, f), p[f"block{block}.ln2.g"], p[f"block{block}.ln2.b"])

    def forward_batch(self, windows: np.ndarray, train: bool = False, rng=None) -> Tensor:
        """(B, L, F) feature windows -> (B, 1) normalized predictions."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3:
            raise ConfigError(f"expected (B, L, F) windows, got shape {windows.shape}")
        batch, length, n_feat = windows.shape
        spec = self.spec
        if length != spec.window or n_feat != spec.n_features:
            raise ConfigError(
                f"window shape ({length}, {n_feat}) != spec ({spec.window}, {spec.n_features})")
        drop_rng = rng if train else None

        x = Tensor(windows.reshape(batch * length, n_feat))
        x = T.add_colwise(T.matmul(x, self.params["embed.w"]), self.params["embed.b"])
        if spec.uses_attention:
            x = T.add(x, Tensor(np.tile(self.positional, (batch, 1))))
            for i in range(spec.blocks):
                x = self._encoder_block(x, batch, i, drop_rng)

        if spec.uses_bilstm:
            steps = [T.take_rows(x, np.arange(batch) * length + t) for t in range(length)]
            for layer in (1, 2):
                fwd, bwd = bilstm_forward_steps(steps, self._lstm_weights(layer, "fwd"),
                                                self._lstm_weights(layer, "bwd"))
                steps = [self._dropout(T.concat([f, b], axis=1), drop_rng)
                         for f, b in zip(fwd, bwd)]
            rep = steps[-1]
        else:
            rep = T.take_rows(x, np.arange(batch) * length + (length - 1))

        n_fc = len(self.spec.fc_widths)
        h = rep
        for k in range(n_fc):
            h = T.add_colwise(T.matmul(h, self.params[f"fc{k}.w"]), self.params[f"fc{k}.b"])
            if k < n_fc - 1:
                h = T.relu(h)
        return h

    def predict(self, window: np.ndarray) -> float:
        """One (L, F) window -> normalized next-close prediction."""
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 2:
            raise ConfigError(f"expected an (L, F) window, got shape {window.shape}")
        return self.forward_batch(window[None], train=False).item()


def build(spec: ModelSpec) -> Model:
    """Deterministic construction from (spec, seed)."""
    return Model(spec)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainHyperparams:
    epochs: int = 50
    batch: int = 32
    lr: float = 1e-3
    grad_clip: float = 1.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.lr < 0 or self.grad_clip < 0:
            raise ConfigError("hyperparameters must be nonnegative (batch >= 1)")


@dataclass
class TrainReport:
    train_losses: list
    val_losses: list
    best_epoch: int
    metrics: MetricSet | None
    seed: int
    parameter_count: int
    favor_generation: int = 0

    def to_dict(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "best_epoch": self.best_epoch,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "seed": self.seed,
            "parameter_count": self.parameter_count,
            "favor_generation": self.favor_generation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Adam:
    """Adaptive-moment updates with bias correction."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _clip_gradients(grads: dict[str, np.ndarray], clip: float) -> None:
    if clip <= 0:
        return
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > clip:
        factor = clip / total
        for name in grads:
            grads[name] = grads[name] * factor


def _batch_loss(model: Model, windows, targets, train, rng) -> Tensor:
    preds = model.forward_batch(windows, train=train, rng=rng)
    target_t = Tensor(np.asarray(targets, dtype=np.float64).reshape(-1, 1))
    diff = T.sub(preds, target_t)
    return T.scale(T.tsum(T.mul(diff, diff)), 1.0 / len(targets))


def _eval_loss(model: Model, windows, targets, batch: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(windows), batch):
        hi = min(lo + batch, len(windows))
        preds = model.forward_batch(windows[lo:hi], train=False).data[:, 0]
        total += float(np.sum((preds - targets[lo:hi]) ** 2))
        count += hi - lo
    return total / count


def train(model: Model, dataset: Dataset, hp: TrainHyperparams) -> TrainReport:
    """Minimize MSE on the train split; retain the best-validation weights."""
    train_w, train_y = dataset.windows_for("train")
    val_w, val_y = dataset.windows_for("validation")
    if len(train_w) == 0:
        raise DataError("empty training split")
    spec = model.spec
    ss = np.random.SeedSequence([spec.seed, 0xF0CA5])
    shuffle_rng = np.random.default_rng(ss.spawn(1)[0])
    dropout_rng = np.random.default_rng(ss.spawn(1)[0])

    optimizer = _Adam(model.params, hp.lr)
    redraw_every = spec.favor.redraw_interval if spec.uses_favor else None
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_epoch = 0
    best_val = math.inf
    best_state = model.state_arrays()
    step = 0

    for epoch in range(hp.epochs):
        order = shuffle_rng.permutation(len(train_w))
        epoch_loss = 0.0
        for lo in range(0, len(order), hp.batch):
            idx = order[lo:lo + hp.batch]
            if redraw_every and step > 0 and step % redraw_every == 0:
                model.redraw_features()
            try:
                with GradTape() as tape:
                    for p in model.params.values():
                        tape.watch(p)
                    loss = _batch_loss(model, train_w[idx], train_y[idx], True, dropout_rng)
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise FiniteError("non-finite loss")
                tape.backward(loss)
            except FiniteError as exc:
                raise DivergenceError(
                    f"diverged at epoch {epoch}, step {step}: {exc}") from None
            grads = {name: p.grad for name, p in model.params.items()}
            _clip_gradients(grads, hp.grad_clip)
            optimizer.step(grads)
            epoch_loss += loss_value * len(idx)
            step += 1
        train_losses.append(epoch_loss / len(order))

        if len(val_w):
            val_loss = _eval_loss(model, val_w, val_y, hp.batch)
        else:
            val_loss = train_losses[-1]
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = model.state_arrays()

    if hp.epochs > 0:
        model.load_state_arrays(best_state)

    metrics = None
    split = "validation" if len(val_w) else "train"
    try:
        pred = predict_series(model, dataset, split)
        metrics = evaluate_metrics(pred.actual, pred.predicted)
    except DataError:
        pass  # degenerate splits (too short or constant) carry no metrics
    return TrainReport(train_losses, val_losses, best_epoch, metrics,
                       spec.seed, model.parameter_count(), model.favor_generation)


@dataclass
class PredictionSeries:
    timestamps: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray


def predict_series(model: Model, dataset: Dataset, split: str,
                   batch: int = 64) -> PredictionSeries:
    """One-step-ahead predictions over a split, denormalized to price scale."""
    r = dataset.split.named()[split]
    if len(r) == 0:
        raise DataError(f"empty split '{split}'")
    windows = dataset.windows[r.start:r.stop]
    preds = np.empty(len(windows))
    for lo in range(0, len(windows), batch):
        hi = min(lo + batch, len(windows))
        preds[lo:hi] = model.forward_batch(windows[lo:hi], train=False).data[:, 0]
    return PredictionSeries(
        timestamps=dataset.target_times[r.start:r.stop].copy(),
        actual=dataset.raw_targets[r.start:r.stop].copy(),
        predicted=dataset.norm.denormalize_target(preds),
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FFCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: Model, norm: ColumnStats, path) -> None:
    """Binary layout: magic, version, header length, JSON header, flat
    little-endian float64 parameter buffers in header order."""
    header = {
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "seed": model.spec.seed,
        "favor_generation": model.favor_generation,
        "norm": norm.to_dict(),
        "params": [{"name": name, "shape": list(t.data.shape)}
                   for name, t in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for t in model.params.values():
            fh.write(t.data.astype("<f8", copy=False).tobytes())


def load_checkpoint(path) -> tuple[Model, ColumnStats]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint (magic {magic!r})")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        model = build(ModelSpec.from_dict(header["spec"]))
        model.set_favor_generation(header.get("favor_generation", 0))
        state = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ConfigError(f"{path}: truncated parameter buffer")
            state[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if set(state) != set(model.params):
            raise ConfigError(f"{path}: parameter names do not match the architecture")
        model.load_state_arrays(state)
    return model, ColumnStats.from_dict(header["norm"])
