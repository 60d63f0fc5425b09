"""Windowing, optimizers, the training loop and finite-difference gradient checks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from imuplace.errors import TrainingDivergedError, ValidationError
from imuplace.neuralseq.layers import mse_loss
from imuplace.neuralseq.model import (
    FROZEN_PARAMS,
    Checkpoint,
    init_params,
    model_forward,
    to_tensors,
)
from imuplace.neuralseq.tensor import Tensor, no_grad

log = logging.getLogger(__name__)

PADDED_FRAMES = 2


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. There is deliberately no regularization option."""

    epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 16
    window_len: int = 120
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.window_len < 3:
            raise ValidationError("window_len must be >= 3")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        return asdict(self)


def make_windows(features, targets, window_len, padded=PADDED_FRAMES):
    """Cut one sequence into training windows.

    The trailing ``padded`` frames (acceleration padding) are dropped. The rest
    is split into consecutive chunks of ``window_len``; a shorter final chunk
    is kept so that every usable frame appears in exactly one window.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.shape[0] != targets.shape[0]:
        raise ValidationError(
            f"feature/target length mismatch: {features.shape[0]} vs {targets.shape[0]}")
    usable = features.shape[0] - padded
    if usable < 1:
        raise ValidationError(f"sequence of {features.shape[0]} frames has no usable frames")
    out = []
    for lo in range(0, usable, window_len):
        hi = min(lo + window_len, usable)
        out.append((features[lo:hi], targets[lo:hi]))
    return out


def _length_groups(windows):
    groups = {}
    for i, (f, _) in enumerate(windows):
        groups.setdefault(f.shape[0], []).append(i)
    return [groups[k] for k in sorted(groups)]


def _stack(windows, idx):
    x = np.stack([windows[i][0] for i in idx])
    y = np.stack([windows[i][1] for i in idx])
    return x, y


def predict_windows(spec, params, windows, batch_size=64):
    """Raw model outputs for each window, in input order."""
    preds = [None] * len(windows)
    with no_grad():
        for group in _length_groups(windows):
            for lo in range(0, len(group), batch_size):
                idx = group[lo:lo + batch_size]
                x, _ = _stack(windows, idx)
                out = model_forward(spec, params, x).data
                for k, i in enumerate(idx):
                    preds[i] = out[k]
    return preds


def dataset_mse(spec, params, windows, batch_size=64):
    """Mean squared error over every target element of every window."""
    preds = predict_windows(spec, params, windows, batch_size)
    sse = sum(float(((p - w[1]) ** 2).sum()) for p, w in zip(preds, windows))
    count = sum(w[1].size for w in windows)
    return sse / count


def feature_stats(windows):
    frames = np.concatenate([w[0] for w in windows], axis=0)
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr=1e-2):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.lr * p.grad


def train(spec, cfg, windows, progress=None):
    """Fit a model to ``(features, targets)`` windows by minimizing MSE.

    Returns a :class:`Checkpoint` whose ``final_train_loss`` is the MSE over all
    training windows under the final parameters, and whose ``history`` holds
    the per-epoch mean batch loss.
    """
    if not windows:
        raise ValidationError("training set is empty")
    for f, y in windows:
        if f.shape[-1] != spec.input_dim:
            raise ValidationError(
                f"input width {f.shape[-1]} does not match model input width {spec.input_dim}")
        if f.shape[0] > cfg.window_len:
            raise ValidationError(f"window of {f.shape[0]} frames exceeds window_len")

    mean, std = feature_stats(windows)
    params = to_tensors(init_params(spec, mean, std))
    trainable = {k: p for k, p in params.items() if k not in FROZEN_PARAMS}
    opt = (Adam(trainable, cfg.learning_rate) if cfg.optimizer == "adam"
           else SGD(trainable, cfg.learning_rate))
    rng = np.random.default_rng(cfg.seed)
    groups = _length_groups(windows)

    history = []
    step = 0
    for epoch in range(cfg.epochs):
        batches = []
        for group in groups:
            order = [group[i] for i in rng.permutation(len(group))]
            batches += [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        batches = [batches[i] for i in rng.permutation(len(batches))]
        total, count = 0.0, 0
        for idx in batches:
            x, y = _stack(windows, idx)
            for p in trainable.values():
                p.zero_grad()
            loss = mse_loss(model_forward(spec, params, Tensor(x)), Tensor(y))
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(step, value)
            loss.backward()
            opt.step()
            step += 1
            total += value * y.size
            count += y.size
        history.append(total / count)
        if progress is not None:
            progress(epoch, history[-1])
        log.debug("epoch %d: loss %.6g", epoch, history[-1])

    final = {k: p.data.copy() for k, p in params.items()}
    final_loss = dataset_mse(spec, final, windows)
    if not np.isfinite(final_loss):
        raise TrainingDivergedError(step, final_loss)
    return Checkpoint(spec, final, trained_epochs=cfg.epochs,
                      final_train_loss=final_loss, history=history,
                      train_config=cfg.to_dict())


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: dict

    def passed(self, tol):
        return self.max_rel_err < tol


def gradient_check(fn, inputs, eps=1e-5, seed=0, floor=1e-5):
    """Compare reverse-mode gradients of ``fn`` with central finite differences.

    ``fn`` maps a dict of :class:`Tensor` to a Tensor of any shape; it is
    reduced to a scalar by a fixed random projection. Relative error per entry
    is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` absorbs finite-difference
    roundoff on entries whose true gradient is zero.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    tensors = {k: Tensor(v, requires_grad=True) for k, v in inputs.items()}
    out = fn(tensors)
    proj = np.random.default_rng(seed).standard_normal(out.shape)
    (out * proj).sum().backward()

    def scalar(vals):
        with no_grad():
            return float((fn({k: Tensor(v) for k, v in vals.items()}).data * proj).sum())

    per_input = {}
    for name, value in inputs.items():
        analytic = tensors[name].grad
        if analytic is None:
            analytic = np.zeros_like(value)
        numeric = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = scalar(inputs)
            flat[i] = orig - eps
            down = scalar(inputs)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        per_input[name] = float((np.abs(analytic - numeric) / denom).max()) if value.size else 0.0
    return GradCheckReport(max(per_input.values(), default=0.0), per_input)
