"""Logistic regression on embeddings, trained by mini-batch SGD.

Labels are 0/1.  The update for a batch ``B`` is::

    theta += step * mean_{(e, y) in B} (y - sigmoid(theta . e + nu)) * e
    nu    += step * mean_{(e, y) in B} (y - sigmoid(theta . e + nu))

Sparse blocks of an :class:`~hdhash.core.EmbeddingBatch` only touch their
active coordinates.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from hdhash.core import DimensionMismatch, Embedding, EmbeddingBatch, HDError

log = logging.getLogger(__name__)

DEFAULT_STEP_SIZE = 0.05
DEFAULT_BATCH_SIZE = 256
GRAD_CLIP = 1e3


@dataclass
class Model:
    theta: np.ndarray
    intercept: float = 0.0
    step_size: float = DEFAULT_STEP_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    updates: int = 0
    weight_decay: float = 0.0
    clip: float = GRAD_CLIP

    @classmethod
    def zeros(cls, dim: int, **kwargs) -> "Model":
        return cls(np.zeros(dim), **kwargs)

    @property
    def dim(self) -> int:
        return self.theta.size

    def copy(self) -> "Model":
        return Model(self.theta.copy(), self.intercept, self.step_size, self.batch_size, self.updates, self.weight_decay, self.clip)


def sigmoid(z):
    """Logistic sigmoid; stable for large ``|z|``."""
    return expit(z)


def _as_batch(batch) -> EmbeddingBatch:
    if isinstance(batch, EmbeddingBatch):
        return batch
    return EmbeddingBatch.from_embeddings(list(batch))


def logits(m: Model, batch) -> np.ndarray:
    b = _as_batch(batch)
    if b.dim != m.dim:
        raise DimensionMismatch(f"embedding dim {b.dim} != model dim {m.dim}")
    return b.dot(m.theta) + m.intercept


def predict_prob(m: Model, e: Embedding) -> float:
    return float(sigmoid(logits(m, [e])[0]))


def predict_batch(m: Model, batch) -> np.ndarray:
    return sigmoid(logits(m, batch))


def log_loss_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood, computed as ``log(1 + e^z) - y z``."""
    z = np.asarray(z, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - np.asarray(y) * z))


def log_loss(m: Model, batch, y) -> float:
    return log_loss_from_logits(logits(m, batch), np.asarray(y, dtype=np.float64))


def log_loss_grad(theta: np.ndarray, nu: float, E: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of the mean log loss w.r.t. ``(theta, nu)`` for dense rows ``E``."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    r = sigmoid(E @ theta + nu) - y
    return r @ E / y.size, float(np.mean(r))


def sgd_step(m: Model, batch, y) -> Model:
    """One SGD update on ``batch`` with 0/1 labels ``y``, in place; returns ``m``."""
    _update(m, _as_batch(batch), np.asarray(y, dtype=np.float64))
    return m


def _update(m: Model, b: EmbeddingBatch, y: np.ndarray) -> np.ndarray:
    """Apply one step and return the pre-update logits."""
    if b.n_rows == 0:
        raise HDError("empty batch")
    if y.size != b.n_rows:
        raise DimensionMismatch("labels and batch disagree on length")
    z = logits(m, b)
    coefs = (y - sigmoid(z)) / b.n_rows
    idx, vals = b.scatter(coefs)
    g_nu = float(np.sum(coefs))
    norm = math.sqrt(float(np.dot(vals, vals)) + g_nu * g_nu)
    if norm > m.clip:
        vals = vals * (m.clip / norm)
        g_nu *= m.clip / norm
    if m.weight_decay:
        m.theta *= 1.0 - m.step_size * m.weight_decay
    # scatter() returns each index once.
    m.theta[idx] += m.step_size * vals
    m.intercept += m.step_size * g_nu
    m.updates += 1
    return z


def auc(scores, labels) -> float:
    """Area under the ROC curve in Mann-Whitney form, ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise HDError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def separating_params(pos_embs, neg_embs, alpha=None, beta=None) -> tuple[np.ndarray, float]:
    """Separator from convex combinations of the two classes' embeddings.

    ``theta = phi(p) - phi(q)`` and ``nu = -(|phi(p)|^2 - |phi(q)|^2) / 2``
    with ``phi(p) = sum alpha_i phi(x_i)`` and ``phi(q) = sum beta_i phi(x'_i)``.
    """
    P = _stack(pos_embs)
    Q = _stack(neg_embs)
    alpha = np.full(P.shape[0], 1.0 / P.shape[0]) if alpha is None else np.asarray(alpha, dtype=np.float64)
    beta = np.full(Q.shape[0], 1.0 / Q.shape[0]) if beta is None else np.asarray(beta, dtype=np.float64)
    for name, w in (("alpha", alpha), ("beta", beta)):
        if np.any(w < 0):
            raise HDError(f"{name} weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise HDError(f"{name} weights must sum to 1, got {w.sum()!r}")
    phi_p = alpha @ P
    phi_q = beta @ Q
    theta = phi_p - phi_q
    nu = -0.5 * (phi_p @ phi_p - phi_q @ phi_q)
    return theta, float(nu)


def _stack(embs) -> np.ndarray:
    if isinstance(embs, np.ndarray):
        return np.atleast_2d(embs).astype(np.float64)
    return np.stack([np.asarray(e.to_dense().values, dtype=np.float64) for e in embs])


@dataclass(frozen=True)
class TrainProtocol:
    validate_every: int = 300_000
    patience: int = 3
    max_records: int | None = None


class EarlyStopping:
    """Raise ``stop`` after ``patience`` consecutive validations without a new best."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.bad_rounds = 0
        self.rounds = 0

    @property
    def stop(self) -> bool:
        return self.bad_rounds >= self.patience

    def update(self, loss: float) -> bool:
        self.rounds += 1
        if loss < self.best:
            self.best = loss
            self.bad_rounds = 0
        else:
            self.bad_rounds += 1
        return self.stop


@dataclass
class TrainResult:
    model: Model
    metrics: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    records_seen: int = 0


Batches = Iterable[tuple[EmbeddingBatch, np.ndarray]]


def evaluate(m: Model, batches: Batches) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Return (mean log loss, AUC or nan, scores, labels) over ``batches``."""
    zs, ys = [], []
    for b, y in batches:
        zs.append(logits(m, b))
        ys.append(np.asarray(y))
    if not zs:
        return math.nan, math.nan, np.zeros(0), np.zeros(0)
    z = np.concatenate(zs)
    y = np.concatenate(ys).astype(np.float64)
    loss = log_loss_from_logits(z, y)
    both = 0 < y.sum() < y.size
    return loss, (auc(z, y) if both else math.nan), sigmoid(z), y


def run_training(
    protocol: TrainProtocol,
    model: Model,
    train: Batches,
    validation: Callable[[], Batches],
    on_metrics: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Stream ``train`` through :func:`sgd_step`, validating on a cadence.

    ``validation`` is called once per round and must return a fresh iterable
    over the validation batches.  Training stops when the stream ends, when
    ``max_records`` is reached, or after ``patience`` non-improving rounds.
    """
    result = TrainResult(model)
    stopper = EarlyStopping(protocol.patience)
    next_val = protocol.validate_every
    window_loss, window_n = 0.0, 0

    def validate():
        nonlocal window_loss, window_n
        val_loss, val_auc, _, _ = evaluate(model, validation())
        rec = {
            "round": stopper.rounds + 1,
            "records": result.records_seen,
            "updates": model.updates,
            "train_loss": window_loss / window_n if window_n else math.nan,
            "val_loss": val_loss,
            "val_auc": val_auc,
        }
        stopper.update(val_loss)
        rec["best_val_loss"] = stopper.best
        result.metrics.append(rec)
        if on_metrics is not None:
            on_metrics(rec)
        window_loss, window_n = 0.0, 0
        return stopper.stop

    for batch, y in train:
        y = np.asarray(y, dtype=np.float64)
        z = _update(model, batch, y)
        window_loss += log_loss_from_logits(z, y) * len(y)
        window_n += len(y)
        result.records_seen += len(y)
        if result.records_seen >= next_val:
            next_val += protocol.validate_every
            if validate():
                result.stopped_early = True
                break
        if protocol.max_records is not None and result.records_seen >= protocol.max_records:
            break

    if not result.metrics:
        warnings.warn("training stream ended before the first validation round", RuntimeWarning, stacklevel=2)
        if result.records_seen:
            validate()
    return result


def accuracy(m: Model, batches: Batches) -> float:
    correct = total = 0
    for b, y in batches:
        pred = logits(m, b) >= 0
        correct += int(np.sum(pred == (np.asarray(y) == 1)))
        total += len(y)
    return correct / total if total else math.nan
