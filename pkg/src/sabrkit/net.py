"""Dense feed-forward networks for smile correction, implemented directly
on numpy: forward pass, batch normalization, backpropagation, Adam, a
reduce-on-plateau schedule and best-weights early stopping.

Four architectures share one body (hidden sizes 64, 64, 32, each hidden
layer followed by batch norm and ReLU, scalar output):

    ndn       raw inputs,            predicts the vol directly
    geonn     raw + geometry inputs, predicts the vol directly
    resnn     raw inputs,            predicts sigma_mc/sigma_hagan - 1
    georesnn  raw + geometry inputs, predicts sigma_mc/sigma_hagan - 1

Residual architectures return sigma_hagan * (1 + output) from
:func:`predict_vol`, so an untrained zero network reproduces the closed
form exactly.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, Diverged, NonFinite, ShapeMismatch
from .geometry import features
from .hagan import SabrPoint, hagan_vol

__all__ = [
    "ARCHS",
    "AdamState",
    "BatchNorm",
    "DenseLayer",
    "ModelBundle",
    "PlateauScheduler",
    "TrainConfig",
    "adam_step",
    "design_matrix",
    "forward",
    "init_bundle",
    "load_model",
    "loss",
    "predict_from_rows",
    "predict_vol",
    "predict_vols",
    "save_model",
    "train",
]

RAW_FEATURES = ("T", "F0", "K", "alpha", "beta", "rho", "nu")
GEOM_FEATURES = ("q", "sigma_min", "d_h", "sigma0")
HIDDEN_SIZES = (64, 64, 32)

TARGET_MODES = ("direct", "residual_ratio")

# arch name -> (target mode, uses geometry features)
ARCHS = {
    "ndn": ("direct", False),
    "geonn": ("direct", True),
    "resnn": ("residual_ratio", False),
    "georesnn": ("residual_ratio", True),
}


@dataclass
class TrainConfig:
    lr0: float = 4e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 128
    epochs: int = 100
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    improve_rtol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr0 <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("lr0, batch_size and epochs must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.weight_decay != 0.0:
            raise ConfigError("weight decay is not part of the training protocol")


@dataclass
class BatchNorm:
    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass
class DenseLayer:
    w: np.ndarray
    b: np.ndarray
    bn: BatchNorm | None = None


@dataclass
class ModelBundle:
    arch: str
    target_mode: str
    feature_names: tuple[str, ...]
    layers: list[DenseLayer]
    x_mean: np.ndarray
    x_std: np.ndarray
    hagan_bracket: str = "numerator"
    manifest: dict = field(default_factory=dict)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].w.shape[0]] + [lay.w.shape[1] for lay in self.layers]


def feature_names_for(arch: str) -> tuple[str, ...]:
    target_mode, use_geometry = _arch_spec(arch)
    return RAW_FEATURES + GEOM_FEATURES if use_geometry else RAW_FEATURES


def _arch_spec(arch: str) -> tuple[str, bool]:
    try:
        return ARCHS[arch]
    except KeyError:
        raise ConfigError(f"unknown arch {arch!r}; expected one of {sorted(ARCHS)}") from None


def init_bundle(
    arch: str,
    seed: int = 0,
    hidden_sizes: Sequence[int] = HIDDEN_SIZES,
    hagan_bracket: str = "numerator",
) -> ModelBundle:
    """Fresh bundle with He-uniform weights, zero biases and identity
    batch-norm and standardization."""
    target_mode, use_geometry = _arch_spec(arch)
    names = RAW_FEATURES + GEOM_FEATURES if use_geometry else RAW_FEATURES
    sizes = [len(names), *hidden_sizes, 1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        bn = None
        if i < len(sizes) - 2:
            bn = BatchNorm(
                scale=np.ones(fan_out),
                shift=np.zeros(fan_out),
                running_mean=np.zeros(fan_out),
                running_var=np.ones(fan_out),
            )
        layers.append(DenseLayer(w=w, b=b, bn=bn))
    return ModelBundle(
        arch=arch,
        target_mode=target_mode,
        feature_names=names,
        layers=layers,
        x_mean=np.zeros(len(names)),
        x_std=np.ones(len(names)),
        hagan_bracket=hagan_bracket,
        manifest={"init_seed": seed},
    )


def forward(bundle: ModelBundle, x: np.ndarray, training: bool = False):
    """Network output for a batch of raw (unstandardized) feature rows.

    Returns ``(outputs, caches)``; the caches hold the intermediates needed
    by :func:`backward` and are None-free only in training mode. Training
    mode normalizes with batch statistics and updates the running ones.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatch(f"expected a (batch, features) matrix, got {x.shape!r}")
    if x.shape[1] != len(bundle.feature_names):
        raise ShapeMismatch(
            f"arch {bundle.arch!r} expects {len(bundle.feature_names)} features, "
            f"got {x.shape[1]}"
        )
    a = (x - bundle.x_mean) / bundle.x_std
    caches = []
    for layer in bundle.layers[:-1]:
        z = a @ layer.w + layer.b
        bn = layer.bn
        if training:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            n = z.shape[0]
            unbiased = var * n / (n - 1) if n > 1 else var
            bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mu
            bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased
        else:
            mu = bn.running_mean
            var = bn.running_var
        inv_std = 1.0 / np.sqrt(var + bn.eps)
        z_hat = (z - mu) * inv_std
        pre_act = bn.scale * z_hat + bn.shift
        out = np.maximum(pre_act, 0.0)
        caches.append({"x": a, "z_hat": z_hat, "inv_std": inv_std, "mask": pre_act > 0.0})
        a = out
    last = bundle.layers[-1]
    y = (a @ last.w + last.b)[:, 0]
    caches.append({"x": a})
    return y, caches


def backward(bundle: ModelBundle, caches: list, d_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar objective wrt every trainable array.

    ``d_out`` is the objective's gradient per output row. The returned list
    matches :func:`trainable_params` element by element.
    """
    grads: list[np.ndarray] = []
    last = bundle.layers[-1]
    cache = caches[-1]
    d_z = d_out[:, None]
    grads_last = [cache["x"].T @ d_z, d_z.sum(axis=0)]
    d_a = d_z @ last.w.T
    per_layer = [grads_last]
    for layer, cache in zip(reversed(bundle.layers[:-1]), reversed(caches[:-1])):
        bn = layer.bn
        d_pre = d_a * cache["mask"]
        d_scale = (d_pre * cache["z_hat"]).sum(axis=0)
        d_shift = d_pre.sum(axis=0)
        d_zhat = d_pre * bn.scale
        n = d_zhat.shape[0]
        d_z = (cache["inv_std"] / n) * (
            n * d_zhat
            - d_zhat.sum(axis=0)
            - cache["z_hat"] * (d_zhat * cache["z_hat"]).sum(axis=0)
        )
        per_layer.append([cache["x"].T @ d_z, d_z.sum(axis=0), d_scale, d_shift])
        d_a = d_z @ layer.w.T
    for layer_grads in reversed(per_layer):
        grads.extend(layer_grads)
    return grads


def trainable_params(bundle: ModelBundle) -> list[np.ndarray]:
    """Flat parameter list in the order used by :func:`backward`."""
    params: list[np.ndarray] = []
    for layer in bundle.layers:
        params.extend([layer.w, layer.b])
        if layer.bn is not None:
            params.extend([layer.bn.scale, layer.bn.shift])
    return params


def targets(samples, target_mode: str) -> np.ndarray:
    """Training targets for a list of dataset rows."""
    if target_mode == "direct":
        return np.array([s.sigma_mc for s in samples])
    if target_mode == "residual_ratio":
        hag = np.array([s.sigma_hagan for s in samples])
        if np.any(hag <= 0.0):
            raise ConfigError("residual targets need sigma_hagan > 0 on every row")
        mc = np.array([s.sigma_mc for s in samples])
        return mc / hag - 1.0
    raise ConfigError(f"target_mode must be one of {TARGET_MODES}, got {target_mode!r}")


def loss(predictions: np.ndarray, samples, target_mode: str) -> float:
    """Mean squared error against the mode's targets."""
    predictions = np.asarray(predictions, dtype=float)
    y = targets(samples, target_mode)
    if predictions.shape != y.shape:
        raise ShapeMismatch(f"{predictions.shape!r} predictions vs {y.shape!r} targets")
    value = float(np.mean((predictions - y) ** 2))
    if not math.isfinite(value):
        raise NonFinite("loss overflowed")
    return value


def design_matrix(samples, arch: str) -> np.ndarray:
    """Raw feature matrix for dataset rows (stored geometry columns reused)."""
    _, use_geometry = _arch_spec(arch)
    rows = np.empty((len(samples), 11 if use_geometry else 7))
    for i, s in enumerate(samples):
        p = s.point
        rows[i, :7] = (p.T, p.F0, p.K, p.alpha, p.beta, p.rho, p.nu)
        if use_geometry:
            f = s.feats
            rows[i, 7:] = (f.q, f.sigma_min, f.d_h, f.sigma0)
    return rows


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    beta1: float
    beta2: float
    eps: float
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], cfg: TrainConfig) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
        )


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray], lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    correct1 = 1.0 - state.beta1**state.t
    correct2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise NonFinite("non-finite gradient")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
    return state


@dataclass
class PlateauScheduler:
    """Halve-on-plateau learning-rate schedule.

    An epoch improves when its validation loss beats the best seen by a
    relative margin; after ``patience`` consecutive non-improving epochs
    the rate is multiplied by ``factor`` and the counter restarts.
    """

    lr: float
    factor: float = 0.5
    patience: int = 5
    rel_threshold: float = 1e-6
    best: float | None = None
    bad_epochs: int = 0

    def step(self, val_loss: float) -> float:
        if self.best is None or val_loss < self.best * (1.0 - self.rel_threshold):
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def _snapshot_weights(bundle: ModelBundle) -> list[DenseLayer]:
    return copy.deepcopy(bundle.layers)


def train(
    bundle: ModelBundle,
    train_samples,
    val_samples,
    cfg: TrainConfig,
) -> tuple[ModelBundle, list[EpochRecord]]:
    """Fit the bundle; returns it carrying the best-validation weights.

    Standardization is fitted on the training split only. Batches are
    reshuffled each epoch from a dedicated seeded generator and the last
    partial batch is kept, so runs are reproducible given the config seed.
    """
    if not train_samples or not val_samples:
        raise ConfigError("train and validation splits must be non-empty")
    x_train = design_matrix(train_samples, bundle.arch)
    y_train = targets(train_samples, bundle.target_mode)
    x_val = design_matrix(val_samples, bundle.arch)
    y_val = targets(val_samples, bundle.target_mode)

    bundle.x_mean = x_train.mean(axis=0)
    # Constant features (single-tenor toy sets) keep a unit scale.
    bundle.x_std = np.maximum(x_train.std(axis=0), 1e-12)

    params = trainable_params(bundle)
    adam = AdamState.for_params(params, cfg)
    scheduler = PlateauScheduler(
        lr=cfg.lr0, factor=cfg.plateau_factor, patience=cfg.plateau_patience,
        rel_threshold=cfg.improve_rtol,
    )
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))

    history: list[EpochRecord] = []
    best_val = math.inf
    best_epoch = 0
    best_layers = _snapshot_weights(bundle)
    n = len(train_samples)
    lr = cfg.lr0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred, caches = forward(bundle, x_train[idx], training=True)
            err = pred - y_train[idx]
            sq_sum += float(err @ err)
            grads = backward(bundle, caches, 2.0 * err / err.size)
            adam_step(adam, params, grads, lr)
        train_loss = sq_sum / n
        val_pred, _ = forward(bundle, x_val, training=False)
        # Overflow to inf is the divergence signal, not a numerics bug.
        with np.errstate(over="ignore"):
            val_loss = float(np.mean((val_pred - y_val) ** 2))
        if not math.isfinite(val_loss):
            raise Diverged(f"validation loss became {val_loss!r} at epoch {epoch}")
        lr = scheduler.step(val_loss)
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss,
                                   val_loss=val_loss, lr=lr))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_layers = _snapshot_weights(bundle)

    bundle.layers = best_layers
    bundle.manifest.update({
        "train_seed": cfg.seed,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "epochs_run": cfg.epochs,
        "lr0": cfg.lr0,
        "batch_size": cfg.batch_size,
        "train_rows": len(train_samples),
        "val_rows": len(val_samples),
    })
    return bundle, history


def _feature_rows(bundle: ModelBundle, points: Sequence[SabrPoint]) -> np.ndarray:
    use_geometry = len(bundle.feature_names) == 11
    rows = np.empty((len(points), len(bundle.feature_names)))
    for i, p in enumerate(points):
        rows[i, :7] = (p.T, p.F0, p.K, p.alpha, p.beta, p.rho, p.nu)
        if use_geometry:
            f = features(p)
            rows[i, 7:] = (f.q, f.sigma_min, f.d_h, f.sigma0)
    return rows


def predict_vols(bundle: ModelBundle, points: Sequence[SabrPoint]) -> np.ndarray:
    """Corrected implied vols for a batch of pricing configurations.

    Residual modes return sigma_hagan * (1 + network output); direct modes
    return the raw output. Geometry features are computed here for the
    architectures that use them.
    """
    x = _feature_rows(bundle, points)
    out, _ = forward(bundle, x, training=False)
    if bundle.target_mode == "residual_ratio":
        hag = np.array([hagan_vol(p, bundle.hagan_bracket) for p in points])
        return hag * (1.0 + out)
    return out


def predict_vol(bundle: ModelBundle, p: SabrPoint) -> float:
    return float(predict_vols(bundle, [p])[0])


def predict_from_rows(bundle: ModelBundle, samples) -> np.ndarray:
    """Vol predictions for dataset rows, reusing their stored feature columns."""
    x = design_matrix(samples, bundle.arch)
    out, _ = forward(bundle, x, training=False)
    if bundle.target_mode == "residual_ratio":
        hag = np.array([s.sigma_hagan for s in samples])
        return hag * (1.0 + out)
    return out


def save_model(bundle: ModelBundle, path) -> None:
    """Serialize a bundle to JSON with full float precision."""
    payload = {
        "format": "sabrkit-model-v1",
        "arch": bundle.arch,
        "target_mode": bundle.target_mode,
        "feature_names": list(bundle.feature_names),
        "layer_sizes": bundle.layer_sizes,
        "hagan_bracket": bundle.hagan_bracket,
        "x_mean": bundle.x_mean.tolist(),
        "x_std": bundle.x_std.tolist(),
        "layers": [
            {
                "w": layer.w.tolist(),
                "b": layer.b.tolist(),
                "bn": None if layer.bn is None else {
                    "scale": layer.bn.scale.tolist(),
                    "shift": layer.bn.shift.tolist(),
                    "running_mean": layer.bn.running_mean.tolist(),
                    "running_var": layer.bn.running_var.tolist(),
                    "momentum": layer.bn.momentum,
                    "eps": layer.bn.eps,
                },
            }
            for layer in bundle.layers
        ],
        "manifest": bundle.manifest,
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "sabrkit-model-v1":
        raise ConfigError(f"unrecognized model file format in {path!r}")
    layers = []
    for item in payload["layers"]:
        bn = None
        if item["bn"] is not None:
            raw = item["bn"]
            bn = BatchNorm(
                scale=np.array(raw["scale"]),
                shift=np.array(raw["shift"]),
                running_mean=np.array(raw["running_mean"]),
                running_var=np.array(raw["running_var"]),
                momentum=raw["momentum"],
                eps=raw["eps"],
            )
        layers.append(DenseLayer(w=np.array(item["w"]), b=np.array(item["b"]), bn=bn))
    return ModelBundle(
        arch=payload["arch"],
        target_mode=payload["target_mode"],
        feature_names=tuple(payload["feature_names"]),
        layers=layers,
        x_mean=np.array(payload["x_mean"]),
        x_std=np.array(payload["x_std"]),
        hagan_bracket=payload["hagan_bracket"],
        manifest=payload["manifest"],
    )
