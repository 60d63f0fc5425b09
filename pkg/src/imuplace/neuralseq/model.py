"""Model specifications, parameter layout, forward pass and checkpoints."""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from imuplace.errors import ValidationError
from imuplace.fileio import atomic_write_text
from imuplace.neuralseq.layers import (
    bilstm_forward,
    encoder_layer,
    linear,
    positional_encoding,
)
from imuplace.neuralseq.tensor import Tensor, as_tensor

OUTPUT_DIM = 24 * 9
VARIANTS = ("birnn", "transformer")
CKPT_VERSION = 1

_FULL_SIZE_DEFAULTS = {
    "birnn": {"hidden": 1024, "layers": 2, "heads": 1},
    "transformer": {"hidden": 512, "layers": 6, "heads": 4},
}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a pose regressor.

    ``hidden``/``layers``/``heads`` left as ``None`` take the full-size
    defaults (1024-wide 2-layer biRNN, 512-wide 6-layer 4-head transformer).
    ``sensors`` optionally records which joints feed the input columns.
    """

    variant: str
    n_sensors: int
    hidden: int | None = None
    layers: int | None = None
    heads: int | None = None
    ff_dim: int | None = None
    seed: int = 0
    sensors: tuple | None = None
    output_dim: int = OUTPUT_DIM

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for key, value in _FULL_SIZE_DEFAULTS[self.variant].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        if self.variant == "transformer" and self.ff_dim is None:
            object.__setattr__(self, "ff_dim", 4 * self.hidden)
        if self.sensors is not None:
            object.__setattr__(self, "sensors", tuple(int(s) for s in self.sensors))
            if len(self.sensors) != self.n_sensors:
                raise ValidationError("sensors length must equal n_sensors")
        if self.n_sensors < 1 or self.hidden < 1 or self.layers < 1:
            raise ValidationError("n_sensors, hidden and layers must be positive")
        if self.output_dim != OUTPUT_DIM:
            raise ValidationError(f"output_dim is fixed at {OUTPUT_DIM}")
        if self.variant == "transformer":
            if self.hidden % self.heads:
                raise ValidationError(
                    f"hidden {self.hidden} not divisible by heads {self.heads}")
            if self.hidden % 2:
                raise ValidationError("transformer width must be even for positional encoding")

    @property
    def input_dim(self):
        return self.n_sensors * 12

    def to_dict(self):
        d = asdict(self)
        if d["sensors"] is not None:
            d["sensors"] = list(d["sensors"])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def desk_spec(variant, n_sensors=24, seed=0, sensors=None, **kw):
    """Small configuration that trains in seconds on one CPU core."""
    defaults = {"hidden": 64, "layers": 2}
    if variant == "transformer":
        defaults["heads"] = 4
    defaults.update(kw)
    return ModelSpec(variant, n_sensors, seed=seed, sensors=sensors, **defaults)


def param_shapes(spec):
    """Ordered ``name -> shape`` map of every parameter the architecture declares."""
    shapes = {
        "input.mean": (spec.input_dim,),
        "input.std": (spec.input_dim,),
        "embed.W": (spec.input_dim, spec.hidden),
        "embed.b": (spec.hidden,),
    }
    h = spec.hidden
    if spec.variant == "birnn":
        for layer in range(spec.layers):
            in_dim = h if layer == 0 else 2 * h
            for direction in ("fwd", "bwd"):
                p = f"lstm.l{layer}.{direction}"
                shapes[f"{p}.W_ih"] = (in_dim, 4 * h)
                shapes[f"{p}.W_hh"] = (h, 4 * h)
                shapes[f"{p}.b"] = (4 * h,)
        shapes["head.W"] = (2 * h, OUTPUT_DIM)
    else:
        for layer in range(spec.layers):
            p = f"enc.{layer}"
            for m in "qkvo":
                shapes[f"{p}.attn.W{m}"] = (h, h)
                shapes[f"{p}.attn.b{m}"] = (h,)
            shapes[f"{p}.ln1.g"] = (h,)
            shapes[f"{p}.ln1.b"] = (h,)
            shapes[f"{p}.ff.W1"] = (h, spec.ff_dim)
            shapes[f"{p}.ff.b1"] = (spec.ff_dim,)
            shapes[f"{p}.ff.W2"] = (spec.ff_dim, h)
            shapes[f"{p}.ff.b2"] = (h,)
            shapes[f"{p}.ln2.g"] = (h,)
            shapes[f"{p}.ln2.b"] = (h,)
        shapes["head.W"] = (h, OUTPUT_DIM)
    shapes["head.b"] = (OUTPUT_DIM,)
    return shapes


FROZEN_PARAMS = ("input.mean", "input.std")


def init_params(spec, input_mean=None, input_std=None):
    """Seeded initialization.

    Weight matrices are uniform in ``+-1/sqrt(fan_in)``, biases zero except the
    LSTM forget gate (+1), layer-norm gains one. ``input.mean``/``input.std``
    hold the fixed input standardization and are never trained.
    """
    rng = np.random.default_rng(spec.seed)
    params = {}
    for name, shape in param_shapes(spec).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "input.mean":
            value = np.zeros(shape) if input_mean is None else np.asarray(input_mean, float)
        elif name == "input.std":
            value = np.ones(shape) if input_std is None else np.asarray(input_std, float)
        elif len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[0])
            value = rng.uniform(-bound, bound, size=shape)
        elif leaf == "g":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
            if name.startswith("lstm.") and leaf == "b":
                h = shape[0] // 4
                value[h:2 * h] = 1.0
        if value.shape != tuple(shape):
            raise ValidationError(f"{name}: expected shape {shape}, got {value.shape}")
        params[name] = value
    return params


def to_tensors(params, trainable=True):
    return {
        k: Tensor(v, requires_grad=trainable and k not in FROZEN_PARAMS, name=k)
        for k, v in params.items()
    }


def model_forward(spec, params, x):
    """Map IMU features ``(T, N*12)`` or ``(B, T, N*12)`` to raw outputs of width 216."""
    x = as_tensor(x)
    if x.shape[-1] != spec.input_dim:
        raise ValidationError(
            f"input width {x.shape[-1]} does not match model input width {spec.input_dim}")
    params = {k: as_tensor(v) for k, v in params.items()}
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    x = (x - params["input.mean"]) / params["input.std"]
    h = linear(x, params["embed.W"], params["embed.b"])
    if spec.variant == "birnn":
        h = bilstm_forward(h, params, "lstm", spec.layers)
    else:
        h = h + positional_encoding(h.shape[1], spec.hidden)
        for layer in range(spec.layers):
            h = encoder_layer(h, params, f"enc.{layer}", spec.heads)
    out = linear(h, params["head.W"], params["head.b"])
    return out.reshape(*out.shape[1:]) if squeeze else out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    spec: ModelSpec
    params: dict
    trained_epochs: int = 0
    final_train_loss: float = float("nan")
    history: list = field(default_factory=list)
    train_config: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.spec)
        if set(self.params) != set(expected):
            extra = sorted(set(self.params) - set(expected))
            missing = sorted(set(expected) - set(self.params))
            raise ValidationError(f"parameter names mismatch: extra {extra}, missing {missing}")
        for name, shape in expected.items():
            if np.shape(self.params[name]) != shape:
                raise ValidationError(
                    f"{name}: shape {np.shape(self.params[name])} != expected {shape}")

    def forward(self, x):
        return model_forward(self.spec, self.params, x).data


def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8",
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d):
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d.get("dtype", "<f8")).reshape(d["shape"]).astype(np.float64)


def checkpoint_to_json(ckpt):
    obj = {
        "ckpt_version": CKPT_VERSION,
        "spec": ckpt.spec.to_dict(),
        "trained_epochs": ckpt.trained_epochs,
        "final_train_loss": ckpt.final_train_loss,
        "history": list(ckpt.history),
        "train_config": dict(ckpt.train_config),
        "params": {k: _encode_array(v) for k, v in ckpt.params.items()},
    }
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def checkpoint_from_json(text):
    obj = json.loads(text)
    if obj.get("ckpt_version") != CKPT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {obj.get('ckpt_version')!r}")
    return Checkpoint(
        spec=ModelSpec.from_dict(obj["spec"]),
        params={k: _decode_array(v) for k, v in obj["params"].items()},
        trained_epochs=obj["trained_epochs"],
        final_train_loss=obj["final_train_loss"],
        history=obj.get("history", []),
        train_config=obj.get("train_config", {}),
    )


def save_checkpoint(path, ckpt):
    atomic_write_text(Path(path), checkpoint_to_json(ckpt))


def load_checkpoint(path):
    return checkpoint_from_json(Path(path).read_text())
