"""Deep belief network regressor: stacked RBMs with a sigmoid output unit.

Layers are pre-trained greedily with contrastive divergence, then the whole
network is fine-tuned on mean squared error with L-BFGS.
"""

from __future__ import annotations

import base64
import dataclasses
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .features.normalize import FeatureVector, NormalizationBounds, feature_names

log = logging.getLogger(__name__)

MAGIC = b"DECOYQA-DBN\n"
FORMAT_VERSION = 1
GRADIENT_TOLERANCE = 1e-7
_OPEN = (np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


class DivergenceError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


class ModelChecksumError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class FeatureSetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DbnHyperparams:
    n1: int = 20
    n2: int = 10
    learning_rate: float = 1e-4
    weight_cost: float = 0.007
    finetune_weight_cost: float = 0.0
    momentum_start: float = 0.5
    momentum_end: float = 0.9
    momentum_switch_epoch: int = 5
    cd_k: int = 1
    pretrain_epochs: int = 100
    finetune_max_iters: int = 500
    batch_size: int = 64
    lbfgs_memory: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("hidden layer sizes must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_cost < 0 or self.finetune_weight_cost < 0:
            raise ValueError("weight costs must be >= 0")
        for m in (self.momentum_start, self.momentum_end):
            if not 0 <= m < 1:
                raise ValueError("momentum must lie in [0, 1)")
        if self.cd_k < 1:
            raise ValueError("cd_k must be >= 1")
        if self.pretrain_epochs < 0 or self.finetune_max_iters < 0:
            raise ValueError("epoch and iteration counts must be >= 0")
        if self.batch_size < 1 or self.lbfgs_memory < 1:
            raise ValueError("batch_size and lbfgs_memory must be >= 1")

    def momentum(self, epoch: int) -> float:
        return self.momentum_start if epoch < self.momentum_switch_epoch else self.momentum_end


@dataclass
class RbmLayer:
    weights: np.ndarray  # (n_visible, n_hidden)
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    @classmethod
    def initialize(cls, n_visible: int, n_hidden: int, rng: np.random.Generator,
                   scale: float = 0.1) -> "RbmLayer":
        return cls(rng.normal(0.0, scale, size=(n_visible, n_hidden)),
                   np.zeros(n_visible), np.zeros(n_hidden))

    def hidden_probs(self, v: np.ndarray) -> np.ndarray:
        return expit(v @ self.weights + self.hidden_bias)

    def visible_probs(self, h: np.ndarray) -> np.ndarray:
        return expit(h @ self.weights.T + self.visible_bias)

    def reconstruction_error(self, v: np.ndarray) -> float:
        """Mean squared error of the mean-field reconstruction v -> h -> v."""
        return float(np.mean((v - self.visible_probs(self.hidden_probs(v))) ** 2))

    def copy(self) -> "RbmLayer":
        return RbmLayer(self.weights.copy(), self.visible_bias.copy(), self.hidden_bias.copy())


@dataclass
class RbmVelocity:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    @classmethod
    def zeros_like(cls, layer: RbmLayer) -> "RbmVelocity":
        return cls(np.zeros_like(layer.weights), np.zeros_like(layer.visible_bias),
                   np.zeros_like(layer.hidden_bias))


def cd_gradient(layer: RbmLayer, batch: np.ndarray, k: int, rng: np.random.Generator):
    """CD-k estimate of the log-likelihood gradient, averaged over ``batch``.

    Visible units carry probabilities (inputs in [0, 1] act as Bernoulli
    means); only the hidden states driving the Gibbs chain are sampled.
    Returns ``(d_weights, d_visible_bias, d_hidden_bias)``.
    """
    v0 = batch
    ph0 = layer.hidden_probs(v0)
    ph = ph0
    for _ in range(k):
        h = (rng.random(ph.shape) < ph).astype(float)
        pv = layer.visible_probs(h)
        ph = layer.hidden_probs(pv)
    m = len(v0)
    dw = (v0.T @ ph0 - pv.T @ ph) / m
    return dw, (v0 - pv).mean(axis=0), (ph0 - ph).mean(axis=0)


def rbm_cd_update(layer: RbmLayer, batch: np.ndarray, hp: DbnHyperparams,
                  velocity: Optional[RbmVelocity], rng: np.random.Generator,
                  momentum: Optional[float] = None) -> tuple[RbmLayer, RbmVelocity]:
    """One momentum step of contrastive divergence; returns new layer and velocity."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or len(batch) == 0:
        raise ValueError("batch must be a non-empty 2-D array")
    if batch.shape[1] != layer.weights.shape[0]:
        raise ValueError(f"batch width {batch.shape[1]} != visible size {layer.weights.shape[0]}")
    nu = hp.momentum_start if momentum is None else momentum
    velocity = velocity or RbmVelocity.zeros_like(layer)
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite results checked below
        dw, dbv, dbh = cd_gradient(layer, batch, hp.cd_k, rng)
        dw = dw - hp.weight_cost * layer.weights
        vel = RbmVelocity(nu * velocity.weights + hp.learning_rate * dw,
                          nu * velocity.visible_bias + hp.learning_rate * dbv,
                          nu * velocity.hidden_bias + hp.learning_rate * dbh)
        new = RbmLayer(layer.weights + vel.weights, layer.visible_bias + vel.visible_bias,
                       layer.hidden_bias + vel.hidden_bias)
    if not (np.all(np.isfinite(new.weights)) and np.all(np.isfinite(new.visible_bias))
            and np.all(np.isfinite(new.hidden_bias))):
        raise DivergenceError("divergence: non-finite RBM parameters after CD update")
    return new, vel


def _train_rbm(data: np.ndarray, n_hidden: int, hp: DbnHyperparams,
               rng: np.random.Generator) -> RbmLayer:
    layer = RbmLayer.initialize(data.shape[1], n_hidden, rng)
    velocity = RbmVelocity.zeros_like(layer)
    for epoch in range(hp.pretrain_epochs):
        nu = hp.momentum(epoch)
        order = rng.permutation(len(data))
        for start in range(0, len(data), hp.batch_size):
            batch = data[order[start:start + hp.batch_size]]
            layer, velocity = rbm_cd_update(layer, batch, hp, velocity, rng, momentum=nu)
    return layer


def pretrain(features: np.ndarray, hp: DbnHyperparams) -> list[RbmLayer]:
    """Greedy layer-wise CD training of the two hidden layers."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("features must be a non-empty 2-D array")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("features must lie in [0, 1]")
    rng = np.random.default_rng(hp.seed)
    first = _train_rbm(x, hp.n1, hp, rng)
    second = _train_rbm(first.hidden_probs(x), hp.n2, hp, rng)
    return [first, second]


# ---------------------------------------------------------------------------
# supervised network


def forward(params: Sequence[tuple[np.ndarray, np.ndarray]], x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer (input first, output last) with sigmoid units."""
    acts = [x]
    for w, b in params:
        acts.append(expit(acts[-1] @ w + b))
    return acts


def finetune_objective(params: Sequence[tuple[np.ndarray, np.ndarray]], x: np.ndarray,
                       y: np.ndarray, weight_cost: float):
    """Mean squared error plus ``weight_cost * |W|^2 / 2`` over weights (not biases).

    Returns ``(loss, grads)`` where ``grads`` mirrors ``params``.
    """
    acts = forward(params, x)
    out = acts[-1][:, 0]
    resid = out - y
    loss = float(np.mean(resid ** 2))
    loss += 0.5 * weight_cost * sum(float(np.sum(w * w)) for w, _ in params)

    delta = (2.0 / len(y)) * resid[:, None] * acts[-1] * (1.0 - acts[-1])
    grads = []
    for layer in range(len(params) - 1, -1, -1):
        w, _ = params[layer]
        grads.append((acts[layer].T @ delta + weight_cost * w, delta.sum(axis=0)))
        if layer:
            a = acts[layer]
            delta = (delta @ w.T) * a * (1.0 - a)
    return loss, grads[::-1]


def _pack(params) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in params])


def _unpack(theta: np.ndarray, shapes) -> list[tuple[np.ndarray, np.ndarray]]:
    out, pos = [], 0
    for n_in, n_out in shapes:
        w = theta[pos:pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        out.append((w, b))
    return out


@dataclass
class DbnModel:
    layers: list[RbmLayer]
    output_weights: np.ndarray  # (n2,)
    output_bias: float
    feature_set: str
    bounds: NormalizationBounds
    hyperparams: DbnHyperparams
    metadata: dict = field(default_factory=dict)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return feature_names(self.feature_set)

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        p = [(layer.weights, layer.hidden_bias) for layer in self.layers]
        p.append((self.output_weights.reshape(-1, 1), np.array([self.output_bias])))
        return p

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.feature_names):
            raise FeatureSetMismatch(
                f"expected {len(self.feature_names)} feature columns, got "
                f"{x.shape[1] if x.ndim == 2 else x.shape}"
            )
        return np.clip(forward(self.params(), x)[-1][:, 0], *_OPEN)


def fine_tune(layers: list[RbmLayer], features: np.ndarray, labels: np.ndarray,
              hp: DbnHyperparams, *, feature_set: str = "selected9",
              bounds: Optional[NormalizationBounds] = None) -> DbnModel:
    """Optimize all weights and hidden biases end to end with L-BFGS."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(x) != len(y):
        raise ValueError(f"{len(x)} feature rows but {len(y)} labels")
    head_rng = np.random.default_rng([hp.seed, 1])
    params = [(layer.weights.copy(), layer.hidden_bias.copy()) for layer in layers]
    params.append((head_rng.normal(0.0, 0.01, size=(layers[-1].weights.shape[1], 1)), np.zeros(1)))
    shapes = [w.shape for w, _ in params]

    best = {"f": np.inf, "theta": _pack(params)}

    def fun(theta):
        loss, grads = finetune_objective(_unpack(theta, shapes), x, y, hp.finetune_weight_cost)
        if loss < best["f"]:
            best["f"], best["theta"] = loss, theta.copy()
        return loss, _pack(grads)

    warning = ""
    iterations = 0
    if hp.finetune_max_iters > 0:
        res = minimize(fun, best["theta"], jac=True, method="L-BFGS-B",
                       options={"maxiter": hp.finetune_max_iters, "maxcor": hp.lbfgs_memory,
                                "gtol": GRADIENT_TOLERANCE, "ftol": 0.0})
        iterations = int(res.nit)
        if not res.success and res.nit < hp.finetune_max_iters:
            warning = str(res.message)
            log.warning("fine-tuning stopped early: %s", warning)
    tuned = _unpack(best["theta"], shapes)

    new_layers = [RbmLayer(w.copy(), old.visible_bias.copy(), b.copy())
                  for (w, b), old in zip(tuned[:-1], layers)]
    head_w, head_b = tuned[-1]
    model = DbnModel(new_layers, head_w[:, 0].copy(), float(head_b[0]), feature_set,
                     bounds or NormalizationBounds(), hp)
    pred = model.predict_matrix(x)
    err = np.abs(pred - y)
    model.metadata = {
        "pretrain_epochs": hp.pretrain_epochs,
        "finetune_iterations": iterations,
        "final_objective": float(best["f"]),
        "train_mae": float(err.mean()) if len(err) else 0.0,
        "train_max_abs_error": float(err.max()) if len(err) else 0.0,
        "n_train": int(len(y)),
        "seed": hp.seed,
        "warning": warning,
    }
    return model


def train_dbn(features: np.ndarray, labels: np.ndarray, hp: DbnHyperparams, *,
              feature_set: str = "selected9",
              bounds: Optional[NormalizationBounds] = None) -> DbnModel:
    return fine_tune(pretrain(features, hp), features, labels, hp,
                     feature_set=feature_set, bounds=bounds)


def predict(model: DbnModel, fv: FeatureVector) -> float:
    """Quality score in (0, 1) for one feature vector."""
    expected = model.feature_names
    got = tuple(fv.values)
    if fv.feature_set != model.feature_set or got != expected:
        missing = [n for n in expected if n not in fv.values]
        extra = [n for n in got if n not in expected]
        raise FeatureSetMismatch(
            f"feature set mismatch (model {model.feature_set}, input {fv.feature_set}); "
            f"missing: {missing or 'none'}; extra: {extra or 'none'}"
        )
    return float(model.predict_matrix(fv.as_array()[None, :])[0])


# ---------------------------------------------------------------------------
# persistence


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(float).reshape(d["shape"])


def model_bytes(model: DbnModel) -> bytes:
    payload = {
        "feature_set": model.feature_set,
        "features": list(model.feature_names),
        "bounds": model.bounds.to_dict(),
        "hyperparams": dataclasses.asdict(model.hyperparams),
        "layers": [{"weights": _encode(layer.weights), "visible_bias": _encode(layer.visible_bias),
                    "hidden_bias": _encode(layer.hidden_bias)} for layer in model.layers],
        "output_weights": _encode(model.output_weights),
        "output_bias": _encode(np.array([model.output_bias])),
        "metadata": model.metadata,
    }
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = struct.pack("<IQ", FORMAT_VERSION, len(body))
    return MAGIC + head + body + hashlib.sha256(head + body).digest()


def model_from_bytes(blob: bytes) -> DbnModel:
    if not blob.startswith(MAGIC):
        raise ModelFileError("not a model file (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + 12:
        raise ModelChecksumError("checksum failure: file truncated")
    version, length = struct.unpack_from("<IQ", blob, pos)
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {version} (this build reads {FORMAT_VERSION})"
        )
    head = blob[pos:pos + 12]
    body = blob[pos + 12:pos + 12 + length]
    digest = blob[pos + 12 + length:]
    if len(body) != length or digest != hashlib.sha256(head + body).digest():
        raise ModelChecksumError("checksum failure: model file is truncated or corrupted")
    payload = json.loads(body.decode("utf-8"))
    layers = [RbmLayer(_decode(p["weights"]), _decode(p["visible_bias"]), _decode(p["hidden_bias"]))
              for p in payload["layers"]]
    return DbnModel(
        layers=layers,
        output_weights=_decode(payload["output_weights"]),
        output_bias=float(_decode(payload["output_bias"])[0]),
        feature_set=payload["feature_set"],
        bounds=NormalizationBounds.from_dict(payload["bounds"]),
        hyperparams=DbnHyperparams(**payload["hyperparams"]),
        metadata=payload["metadata"],
    )


def save_model(model: DbnModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def load_model(path) -> DbnModel:
    return model_from_bytes(Path(path).read_bytes())
