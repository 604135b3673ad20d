"""Losses, a row-sparse Adam optimizer, the epoch loop and run configuration."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kg import KnowledgeGraph
from .models import Gradients, Model, MODEL_KINDS
from .sampling import NegativeSampler, SAMPLER_KINDS

__all__ = [
    "margin_loss",
    "sigmoid_loss",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "ConfigError",
    "PRESETS",
    "parse_config",
    "resolve_config",
    "train_epoch",
    "batch_loss_and_grads",
]


# ---------------------------------------------------------------------------
# Losses


def margin_loss(pos_scores, neg_scores, margin: float):
    """Hinge loss ``sum(max(0, margin - pos + neg))`` and its gradients.

    Gradients are zero at the kink.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ValueError("positive and negative scores must have equal lengths")
    arg = margin - pos + neg
    active = arg > 0
    loss = float(arg[active].sum())
    return loss, -active.astype(np.float64), active.astype(np.float64)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid_loss(scores, labels):
    """Logistic loss ``sum(log(1 + exp(-y * s)))`` for labels ``y`` in {+1, -1}."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal lengths")
    z = -y * s
    loss = float(np.logaddexp(0.0, z).sum())
    return loss, -y * _sigmoid(z)


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )

    @classmethod
    def for_model(cls, model: Model, **kwargs) -> "AdamState":
        return cls.for_params(model.params, **kwargs)


def adam_step(model, state: AdamState, grads: Gradients, lr: float, l2: float = 0.0) -> None:
    """One Adam update restricted to the parameter rows present in ``grads``.

    The L2 term is added to the gradient of the touched rows only
    (``g + l2 * theta``); untouched rows and their moments stay as they are.
    """
    params = model.params
    if params.keys() != state.m.keys() or any(
        params[k].shape != state.m[k].shape for k in params
    ):
        raise ValueError("optimizer state does not match the model parameter layout")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, (idx, g) in grads.rows.items():
        theta = params[name]
        rows = theta[idx]
        if l2:
            g = g + l2 * rows
        m = b1 * state.m[name][idx] + (1.0 - b1) * g
        v = b2 * state.v[name][idx] + (1.0 - b2) * (g * g)
        state.m[name][idx] = m
        state.v[name][idx] = v
        theta[idx] = rows - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# Configuration


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class TrainConfig:
    model: str = "TransE"
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    n_batches: int = 10
    d: int = 100
    d_r: int = 100
    loss: str = "margin"
    margin: float | None = 1.0
    lr: float = 0.01
    l2: float = 1e-5
    n_epochs: int = 100
    sampler: str = "bernoulli"
    seed: int = 0
    eval_every: int = 0
    k_values: tuple[int, ...] = (1, 3, 10)
    preset: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError("model", f"unknown model {self.model!r}")
        if self.loss not in ("margin", "sigmoid"):
            raise ConfigError("loss", f"expected 'margin' or 'sigmoid', got {self.loss!r}")
        if self.loss == "margin" and (self.margin is None or self.margin < 0):
            raise ConfigError("margin", "margin loss needs a nonnegative margin")
        if self.loss == "sigmoid" and self.margin is not None:
            raise ConfigError("margin", "margin is only meaningful with the margin loss")
        if self.sampler not in SAMPLER_KINDS:
            raise ConfigError("sampler", f"unknown sampler {self.sampler!r}")
        for key in ("n_batches", "d", "d_r", "n_epochs"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be a positive integer")
        for key in ("lr", "l2"):
            value = getattr(self, key)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(key, "must be a finite nonnegative number")
        if self.eval_every < 0:
            raise ConfigError("eval_every", "must be >= 0")
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError("k_values", "must list positive integers")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["k_values"] = list(self.k_values)
        return out


# Hidden dimension 50 applies to TransR as well as TransD (assumption).
PRESETS: dict[str, Callable[[str], dict]] = {
    "paper-table1": lambda kind: {
        "d": 100,
        "d_r": 50 if kind in ("TransR", "TransD") else 100,
        "n_batches": 20 if kind == "RESCAL" else 10,
        "loss": "margin" if kind.startswith("Trans") else "sigmoid",
        "margin": 1.0 if kind.startswith("Trans") else None,
        "lr": 0.01,
        "l2": 1e-5,
        "sampler": "bernoulli",
    },
}

_INT_KEYS = {"n_batches", "d", "d_r", "n_epochs", "seed", "eval_every"}
_FLOAT_KEYS = {"margin", "lr", "l2"}
_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


def parse_config(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, "unknown configuration key")
        raw[key] = value
    return raw


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return None if value.lower() in ("", "none") else float(value)
        if key == "k_values":
            return tuple(int(k) for k in value.replace(",", " ").split())
    except ValueError:
        raise ConfigError(key, f"cannot parse {value!r}") from None
    if key in ("valid", "test", "preset", "out_dir", "train") and value.lower() in ("", "none"):
        return None
    return value


def resolve_config(raw: dict, overrides: dict | None = None) -> TrainConfig:
    """Build a :class:`TrainConfig` from parsed keys.

    Precedence, lowest first: built-in defaults, the named preset (for the
    chosen model), the file keys, then ``overrides``.
    """
    merged = dict(raw)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in merged:
        if key not in _KEYS:
            raise ConfigError(key, "unknown configuration key")
    values = {k: _convert(k, v) for k, v in merged.items()}
    kind = values.get("model", TrainConfig.model)
    preset = values.get("preset")
    base = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}")
        base = PRESETS[preset](kind)
    base.update(values)
    if "d_r" not in values:
        cls = MODEL_KINDS.get(kind)
        # the hidden dimension only exists for TransR / TransD
        if cls is None or not cls.separate_rel_dim or "d_r" not in base:
            base["d_r"] = base.get("d", TrainConfig.d)
    if base.get("loss") == "sigmoid" and "margin" not in values:
        base["margin"] = None
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# Training loop


def batch_loss_and_grads(model: Model, pos: np.ndarray, neg: np.ndarray, config: TrainConfig):
    """Loss of one batch and the gradient of that loss w.r.t. the parameters."""
    both = np.concatenate([pos, neg], axis=0)
    scores = model.score_batch(both)
    n = len(pos)
    if config.loss == "margin":
        loss, d_pos, d_neg = margin_loss(scores[:n], scores[n:], config.margin)
        upstream = np.concatenate([d_pos, d_neg])
    else:
        labels = np.concatenate([np.ones(n), -np.ones(len(neg))])
        loss, upstream = sigmoid_loss(scores, labels)
    return loss, model.grad_batch(both, upstream)


def train_epoch(
    model: Model,
    train_kg: KnowledgeGraph,
    sampler: NegativeSampler,
    config: TrainConfig,
    adam_state: AdamState,
    rng: np.random.Generator | None = None,
) -> float:
    """Run one epoch and return the summed loss over its batches.

    Facts are shuffled with ``rng`` (a fresh generator seeded with
    ``config.seed`` when omitted) and cut into ``config.n_batches``
    contiguous chunks.
    """
    n = train_kg.n_facts
    if n == 0:
        raise ValueError("empty training graph")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    triples = train_kg.triples[rng.permutation(n)]
    size = -(-n // config.n_batches)
    total = 0.0
    for start in range(0, n, size):
        pos = triples[start : start + size]
        neg = sampler.corrupt_batch(pos)
        loss, grads = batch_loss_and_grads(model, pos, neg, config)
        adam_step(model, adam_state, grads, config.lr, config.l2)
        model.normalize_parameters()
        total += loss
    return total
