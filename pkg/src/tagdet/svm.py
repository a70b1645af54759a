"""Linear SVMs trained with a seeded Pegasos-style subgradient schedule.

The bias is learned as the weight of a constant augmented feature, so it is
regularized together with the weights.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

MODEL_FORMAT_VERSION = 1


class MissingTrainingDataWarning(UserWarning):
    """A class had no positives or no negatives, so no model was trained for it."""


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 200
    batch_size: int = 64
    mining_rounds: int = 3
    mining_batch: Optional[int] = None  # None: number of current positives
    seed: int = 7

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.mining_rounds < 0:
            raise ValueError("epochs >= 1, batch_size >= 1, mining_rounds >= 0 required")
        if self.mining_batch is not None and self.mining_batch < 1:
            raise ValueError("mining_batch must be >= 1")


@dataclass(frozen=True)
class LinearModel:
    class_id: int
    weights: tuple[float, ...]
    bias: float

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.weights)
        if not all(np.isfinite(weights)) or not np.isfinite(self.bias):
            raise ValueError(f"class {self.class_id}: model parameters must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", float(self.bias))

    def decision(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ np.asarray(self.weights) + self.bias


def hinge_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """``lam/2 * |w|^2 + mean(max(0, 1 - y * <w, x>))`` on bias-augmented ``X``."""
    margins = y * (X @ w)
    return float(0.5 * lam * (w @ w) + np.mean(np.maximum(0.0, 1.0 - margins)))


def _augment(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def pegasos(
    X: np.ndarray,
    y: np.ndarray,
    config: SvmConfig,
    rng: np.random.Generator,
    init: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, float]:
    """Mini-batch Pegasos on bias-augmented data.

    Returns the iterate with the lowest objective seen at epoch boundaries
    (``init`` included as a candidate) together with that objective.
    """
    n, dim = X.shape
    radius = 1.0 / np.sqrt(config.lam)
    w = np.zeros(dim) if init is None else np.array(init, dtype=np.float64)
    best_w, best_obj = w.copy(), hinge_objective(w, X, y, config.lam)
    t = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for b0 in range(0, n, config.batch_size):
            idx = perm[b0:b0 + config.batch_size]
            t += 1
            eta = 1.0 / (config.lam * t)
            xb, yb = X[idx], y[idx]
            viol = yb * (xb @ w) < 1.0
            w = (1.0 - eta * config.lam) * w
            if np.any(viol):
                w = w + (eta / idx.size) * (yb[viol] @ xb[viol])
            norm = np.sqrt(w @ w)
            if norm > radius:
                w = w * (radius / norm)
        obj = hinge_objective(w, X, y, config.lam)
        if obj < best_obj:
            best_w, best_obj = w.copy(), obj
    return best_w, best_obj


@dataclass
class MiningTrace:
    """Objective on the working set at each round boundary."""

    objectives: list[float]
    previous_model_objectives: list[float]
    working_set_sizes: list[int]


def train_with_mining(
    X: np.ndarray,
    y: np.ndarray,
    config: SvmConfig,
    class_id: int = 0,
    trace: Optional[MiningTrace] = None,
) -> LinearModel:
    """Train one linear SVM with hard negative mining.

    Starts from all positives plus an equally sized seeded random subset of
    negatives; each mining round adds the highest-scoring unused negatives
    and retrains from the current model.
    """
    X = _augment(X)
    y = np.asarray(y, dtype=np.float64)
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y <= 0)
    if pos.size == 0 or neg.size == 0:
        raise ValueError(f"class {class_id}: need at least one positive and one negative")
    rng = np.random.default_rng([config.seed, class_id])

    chosen = np.sort(rng.choice(neg, size=min(pos.size, neg.size), replace=False))
    remaining = np.setdiff1d(neg, chosen)
    working = np.concatenate([pos, chosen])
    w = None
    for rnd in range(config.mining_rounds + 1):
        if rnd > 0:
            if remaining.size == 0:
                break
            m = config.mining_batch or pos.size
            scores = X[remaining] @ w
            # stable: ties resolved by lower sample index
            top = np.argsort(-scores, kind="stable")[:m]
            working = np.concatenate([working, remaining[top]])
            remaining = np.delete(remaining, top)
        Xw, yw = X[working], y[working]
        prev_obj = None if w is None else hinge_objective(w, Xw, yw, config.lam)
        w, obj = pegasos(Xw, yw, config, rng, init=w)
        if trace is not None:
            trace.objectives.append(obj)
            trace.previous_model_objectives.append(np.nan if prev_obj is None else prev_obj)
            trace.working_set_sizes.append(int(working.size))
    return LinearModel(class_id, tuple(w[:-1]), float(w[-1]))


def train_completeness_filters(
    features: Mapping[int, tuple[np.ndarray, np.ndarray]],
    config: SvmConfig = SvmConfig(),
) -> list[LinearModel]:
    """One model per class from ``{class_id: (X, labels)}`` with labels in {+1, -1}.

    Classes lacking positives or negatives are skipped with a
    :class:`MissingTrainingDataWarning`.
    """
    models = []
    for class_id in sorted(features):
        X, y = features[class_id]
        y = np.asarray(y)
        if not np.any(y > 0) or not np.any(y <= 0):
            warnings.warn(
                f"class {class_id}: {int(np.sum(y > 0))} positives / {int(np.sum(y <= 0))} negatives; "
                "no model trained",
                MissingTrainingDataWarning,
                stacklevel=2,
            )
            continue
        models.append(train_with_mining(X, y, config, class_id=class_id))
    return models


class ModelBundle(NamedTuple):
    models: list[LinearModel]
    num_classes: int
    kind: str


def models_to_json(models: Sequence[LinearModel], num_classes: int, kind: str = "completeness") -> str:
    """Versioned JSON document; floats use ``repr`` so they round-trip exactly."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "kind": kind,
        "K": int(num_classes),
        "models": [
            {"class_id": m.class_id, "weights": list(m.weights), "bias": m.bias}
            for m in sorted(models, key=lambda m: m.class_id)
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def models_from_json(text: str) -> ModelBundle:
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {doc.get('version') if isinstance(doc, dict) else None!r}")
    try:
        models = [LinearModel(int(m["class_id"]), tuple(m["weights"]), m["bias"]) for m in doc["models"]]
        return ModelBundle(models, int(doc["K"]), str(doc.get("kind", "completeness")))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model file: {exc}") from None
