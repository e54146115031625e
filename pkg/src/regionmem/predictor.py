"""Feature-to-region confidence model and its confidence fusion state.

A single-hidden-layer MLP with independent sigmoid outputs (confidences do
not sum to 1, so several visually similar regions can all score high),
trained by plain mini-batch gradient descent on a binary focal loss with
one-hot targets. Fusion across time is an exponential moving average over
the per-region confidences.

A trained model is immutable in practice: training returns a new model and
forward passes are pure, so sharing across threads is safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

MODEL_MAGIC = b"RGNP"
MODEL_VERSION = 1


@dataclass
class PredictorModel:
    """Two-layer perceptron: d_in -> hidden (relu) -> n_regions (sigmoid)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int = 0

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_regions(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.w1.copy(), self.b1.copy(),
                              self.w2.copy(), self.b2.copy(), self.seed)

    @classmethod
    def initialize(cls, d_in: int, n_regions: int, hidden: int = 64,
                   seed: int = 0) -> "PredictorModel":
        """He-scaled random init, deterministic in the seed."""
        if d_in < 1 or n_regions < 1 or hidden < 1:
            raise ConfigError("model dimensions must be positive")
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(hidden, d_in))
        w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(n_regions, hidden))
        return cls(w1, np.zeros(hidden), w2, np.zeros(n_regions), seed)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 2.0
    step_size: float = 0.1
    epochs: int = 100
    batch: int = 32
    seed: int = 0
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError("clamp_eps must lie in (0, 0.5)")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model: PredictorModel, feature) -> np.ndarray:
    """Per-region confidences in (0,1) for one feature vector."""
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (model.d_in,):
        raise DataError(f"feature shape {f.shape} does not match d_in={model.d_in}")
    h = np.maximum(model.w1 @ f + model.b1, 0.0)
    return _sigmoid(model.w2 @ h + model.b2)


def forward_batch(model: PredictorModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d_in:
        raise DataError(f"feature batch shape {x.shape} does not match d_in={model.d_in}")
    h = np.maximum(x @ model.w1.T + model.b1, 0.0)
    return _sigmoid(h @ model.w2.T + model.b2)


def focal_loss(confidences, target: int, gamma: float, clamp_eps: float = 1e-7) -> float:
    """Binary focal loss against a one-hot target, summed over regions."""
    s = np.clip(np.asarray(confidences, dtype=np.float64), clamp_eps, 1.0 - clamp_eps)
    if not 0 <= target < s.shape[0]:
        raise DataError(f"target region {target} out of range for {s.shape[0]} regions")
    t = np.zeros(s.shape[0])
    t[target] = 1.0
    pos = -((1.0 - s) ** gamma) * np.log(s)
    neg = -(s ** gamma) * np.log(1.0 - s)
    return float(np.sum(t * pos + (1.0 - t) * neg))


def _batch_loss_grads(model: PredictorModel, x: np.ndarray, targets: np.ndarray,
                      gamma: float, eps: float):
    """Mean focal loss over a batch and its gradients w.r.t. all parameters."""
    n = x.shape[0]
    z1 = x @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    s_raw = _sigmoid(a1 @ model.w2.T + model.b2)
    s = np.clip(s_raw, eps, 1.0 - eps)
    inside = (s_raw > eps) & (s_raw < 1.0 - eps)

    t = np.zeros_like(s)
    t[np.arange(n), targets] = 1.0

    loss = float(np.mean(np.sum(
        -t * ((1.0 - s) ** gamma) * np.log(s)
        - (1.0 - t) * (s ** gamma) * np.log(1.0 - s), axis=1)))

    # dL/ds for the one-hot focal loss; the gamma term vanishes at gamma=0.
    if gamma == 0.0:
        dls = -t / s + (1.0 - t) / (1.0 - s)
    else:
        d_pos = gamma * ((1.0 - s) ** (gamma - 1.0)) * np.log(s) - ((1.0 - s) ** gamma) / s
        d_neg = -gamma * (s ** (gamma - 1.0)) * np.log(1.0 - s) + (s ** gamma) / (1.0 - s)
        dls = t * d_pos + (1.0 - t) * d_neg

    g2 = dls * inside * s_raw * (1.0 - s_raw) / n
    dw2 = g2.T @ a1
    db2 = g2.sum(axis=0)
    da1 = g2 @ model.w2
    g1 = da1 * (z1 > 0.0)
    dw1 = g1.T @ x
    db1 = g1.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def train(model: PredictorModel, dataset, config: TrainConfig):
    """Mini-batch gradient descent on the mean focal loss.

    dataset: sequence of (feature, region id) pairs. Returns a trained copy
    of the model and the per-epoch mean loss history (length = epochs).
    Deterministic given config.seed (shuffling) and the input model.
    """
    if len(dataset) == 0:
        raise DataError("empty training dataset")
    x = np.asarray([np.asarray(f, dtype=np.float64) for f, _ in dataset])
    y = np.asarray([r for _, r in dataset], dtype=np.int64)
    if x.shape[1] != model.d_in:
        raise DataError(f"dataset feature dim {x.shape[1]} != model d_in {model.d_in}")
    if y.min() < 0 or y.max() >= model.n_regions:
        raise DataError(f"region label out of range [0, {model.n_regions})")

    out = model.copy()
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    history: list[float] = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch):
            idx = perm[start:start + config.batch]
            loss, (dw1, db1, dw2, db2) = _batch_loss_grads(
                out, x[idx], y[idx], config.gamma, config.clamp_eps)
            epoch_loss += loss * len(idx)
            out.w1 -= config.step_size * dw1
            out.b1 -= config.step_size * db1
            out.w2 -= config.step_size * dw2
            out.b2 -= config.step_size * db2
        history.append(epoch_loss / n)
    return out, history


class EmaState:
    """Exponential moving average over per-region confidences.

    A region's first observation copies the confidence directly instead of
    decaying from zero; regions appearing later grow the vector under the
    same rule.
    """

    def __init__(self, alpha: float, n_regions: int = 0):
        if not 0.0 < alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        self.alpha = alpha
        self.p = np.zeros(n_regions, dtype=np.float64)
        self.initialized = np.zeros(n_regions, dtype=bool)

    def __len__(self) -> int:
        return self.p.shape[0]


def ema_update(state: EmaState, o_t) -> np.ndarray:
    """Fuse one observation vector into the state; returns the updated p."""
    o = np.asarray(o_t, dtype=np.float64)
    if o.ndim != 1:
        raise DataError(f"observation must be 1-D, got shape {o.shape}")
    if o.shape[0] < len(state):
        raise DataError(
            f"observation length {o.shape[0]} shorter than state length {len(state)}")
    if o.size and (o.min() < 0.0 or o.max() > 1.0):
        raise DataError("observation components must lie in [0, 1]")
    if o.shape[0] > len(state):
        grow = o.shape[0] - len(state)
        state.p = np.concatenate([state.p, np.zeros(grow)])
        state.initialized = np.concatenate([state.initialized, np.zeros(grow, dtype=bool)])
    init = state.initialized
    state.p = np.where(init, state.alpha * o + (1.0 - state.alpha) * state.p, o)
    state.initialized = np.ones_like(init)
    return state.p.copy()


def top_k(p, k: int) -> list[int]:
    """Region ids with the k highest probabilities, descending, ties by lower id."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    probs = np.asarray(p, dtype=np.float64)
    # Stable argsort keeps equal probabilities in index order and stays in C
    # for per-update calls on maps with thousands of regions.
    order = np.argsort(-probs, kind="stable")
    return order[:min(k, probs.shape[0])].tolist()


def save_model(model: PredictorModel, path):
    """Versioned binary dump: magic, version, dims, then float32 LE parameters."""
    header = struct.pack("<4sHIII", MODEL_MAGIC, MODEL_VERSION,
                         model.d_in, model.hidden, model.n_regions)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (model.w1, model.b1, model.w2, model.b2):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> PredictorModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < struct.calcsize("<4sHIII"):
        raise DataError("model file truncated")
    magic, version, d_in, hidden, n_regions = struct.unpack_from("<4sHIII", blob)
    if magic != MODEL_MAGIC:
        raise DataError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    offset = struct.calcsize("<4sHIII")
    shapes = [(hidden, d_in), (hidden,), (n_regions, hidden), (n_regions,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if offset + count * 4 > len(blob):
            raise DataError("model file truncated")
        raw = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays.append(raw.astype(np.float64).reshape(shape))
        offset += count * 4
    return PredictorModel(*arrays)
