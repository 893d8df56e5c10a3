"""Training loop: joint three-head loss, BPTT, Adam, early stopping.

The loss is cross-entropy on the main head plus weighted cross-entropy on
the alignment and motivation heads; all three backpropagate through the
shared pooled vector and both LSTM directions. Minibatches are bucketed
by sequence length so no padding or masking is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from profilebench.errors import ConfigInvalid, EmptySplit, NonFiniteLoss, ZeroFrequency
from profilebench.features import SequenceSample
from profilebench.hashing import mix_seed
from profilebench.models.checkpoint import (
    POOL_ATTENTION,
    POOL_LAST,
    POOL_MULTI,
    Checkpoint,
)
from profilebench.models.lstm import (
    attention_pool_backward_batch,
    attention_pool_batch,
    bilstm_backward_batch,
    bilstm_forward_batch,
    last_state_pool_backward_batch,
    last_state_pool_batch,
    multi_pool_backward_batch,
    multi_pool_batch,
)
from profilebench.taxonomy import LabelSpace, LabelSpaceKind, map_label


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    lambda_align: float = 0.5
    lambda_motiv: float = 0.5
    clip_norm: float = 5.0
    dropout: float = 0.2
    patience: int = 8
    hidden: int = 64
    attention_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigInvalid(f"learning rate must be positive: {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigInvalid("batch_size and epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ConfigInvalid(f"clip norm must be positive: {self.clip_norm}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigInvalid(f"dropout must lie in [0, 1): {self.dropout}")
        if self.patience < 0:
            raise ConfigInvalid(f"patience must be >= 0: {self.patience}")
        if self.hidden < 1 or self.attention_size < 1:
            raise ConfigInvalid("hidden and attention_size must be >= 1")


def forward_batch(
    X: np.ndarray, ckpt: Checkpoint, dropout_mask: np.ndarray | None = None
) -> tuple[dict[str, np.ndarray], dict]:
    """Forward pass over a (B, T, D) batch; returns per-head logits + cache."""
    p = ckpt.params
    states, lstm_cache = bilstm_forward_batch(
        X, (p["fwd_W"], p["fwd_R"], p["fwd_b"]), (p["bwd_W"], p["bwd_R"], p["bwd_b"])
    )
    if ckpt.pooling == POOL_MULTI:
        pooled, pool_cache = multi_pool_batch(states)
    elif ckpt.pooling == POOL_ATTENTION:
        pooled, pool_cache = attention_pool_batch(states, p["attn_proj"], p["attn_ctx"])
    else:
        pooled = last_state_pool_batch(states, ckpt.hidden)
        pool_cache = None
    if dropout_mask is not None:
        pooled = pooled * dropout_mask
    logits = {
        "profile": pooled @ p["head_profile_W"].T + p["head_profile_b"],
        "align": pooled @ p["head_align_W"].T + p["head_align_b"],
        "motiv": pooled @ p["head_motiv_W"].T + p["head_motiv_b"],
    }
    cache = {
        "states": states,
        "lstm": lstm_cache,
        "pool": pool_cache,
        "pooled": pooled,
        "X": X,
    }
    return logits, cache


def forward_sample(sample: SequenceSample, ckpt: Checkpoint) -> dict[str, np.ndarray]:
    logits, _ = forward_batch(np.asarray(sample.matrix)[None], ckpt)
    return {k: v[0] for k, v in logits.items()}


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _ce_and_grad(logits: np.ndarray, y: np.ndarray, weight: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits."""
    B = logits.shape[0]
    lsm = log_softmax(logits)
    loss = -lsm[np.arange(B), y].mean() * weight
    grad = softmax(logits)
    grad[np.arange(B), y] -= 1.0
    grad *= weight / B
    return float(loss), grad


def loss_fn(
    logits: dict[str, np.ndarray],
    y_profile: np.ndarray,
    y_align: np.ndarray,
    y_motiv: np.ndarray,
    lambda_align: float,
    lambda_motiv: float,
) -> float:
    lp, _ = _ce_and_grad(logits["profile"], y_profile, 1.0)
    la, _ = _ce_and_grad(logits["align"], y_align, lambda_align)
    lm, _ = _ce_and_grad(logits["motiv"], y_motiv, lambda_motiv)
    return lp + la + lm


@dataclass
class Batch:
    X: np.ndarray  # (B, T, D)
    y_profile: np.ndarray
    y_align: np.ndarray
    y_motiv: np.ndarray


def compute_gradients(
    batch: Batch, ckpt: Checkpoint, config: TrainConfig, dropout_mask: np.ndarray | None
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradients for every parameter in the checkpoint."""
    p = ckpt.params
    logits, cache = forward_batch(batch.X, ckpt, dropout_mask)
    loss_p, dlp = _ce_and_grad(logits["profile"], batch.y_profile, 1.0)
    loss_a, dla = _ce_and_grad(logits["align"], batch.y_align, config.lambda_align)
    loss_m, dlm = _ce_and_grad(logits["motiv"], batch.y_motiv, config.lambda_motiv)
    loss = loss_p + loss_a + loss_m

    pooled = cache["pooled"]
    grads: dict[str, np.ndarray] = {
        "head_profile_W": dlp.T @ pooled,
        "head_profile_b": dlp.sum(axis=0),
        "head_align_W": dla.T @ pooled,
        "head_align_b": dla.sum(axis=0),
        "head_motiv_W": dlm.T @ pooled,
        "head_motiv_b": dlm.sum(axis=0),
    }
    dpooled = dlp @ p["head_profile_W"] + dla @ p["head_align_W"] + dlm @ p["head_motiv_W"]
    if dropout_mask is not None:
        dpooled = dpooled * dropout_mask

    states = cache["states"]
    if ckpt.pooling == POOL_MULTI:
        dstates = multi_pool_backward_batch(cache["pool"], states.shape, dpooled)
    elif ckpt.pooling == POOL_ATTENTION:
        dstates, dproj, dctx = attention_pool_backward_batch(
            cache["pool"], states, p["attn_proj"], p["attn_ctx"], dpooled
        )
        grads["attn_proj"] = dproj
        grads["attn_ctx"] = dctx
    else:
        dstates = last_state_pool_backward_batch(states.shape, ckpt.hidden, dpooled)

    grads.update(
        bilstm_backward_batch(batch.X, cache["lstm"], p["fwd_R"], p["bwd_R"], dstates)
    )
    return loss, grads


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > clip_norm and total > 0:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale
    return total


def adam_update(ckpt: Checkpoint, grads: dict[str, np.ndarray], config: TrainConfig) -> None:
    ckpt.adam_step += 1
    t = ckpt.adam_step
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, g in grads.items():
        g = g.astype(ckpt.params[name].dtype, copy=False)
        m = ckpt.adam_m[name]
        v = ckpt.adam_v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        ckpt.params[name] -= config.learning_rate * (m / bias1) / (
            np.sqrt(v / bias2) + eps
        )


def dropout_mask_for_step(
    shape: tuple, rate: float, seed: int, global_step: int, dtype
) -> np.ndarray | None:
    """Inverted-dropout mask, seeded per optimizer step."""
    if rate <= 0:
        return None
    rng = np.random.Generator(np.random.PCG64(mix_seed(seed, "dropout", global_step)))
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / (1.0 - rate)


def train_step(
    batch: Batch, ckpt: Checkpoint, config: TrainConfig, global_step: int
) -> float:
    """One optimizer step in place; returns the batch loss."""
    config.validate()
    readout = ckpt.params["head_profile_W"].shape[1]
    mask = dropout_mask_for_step(
        (batch.X.shape[0], readout), config.dropout, config.seed, global_step,
        ckpt.params["fwd_W"].dtype,
    )
    loss, grads = compute_gradients(batch, ckpt, config, mask)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss diverged at step {global_step}: {loss}")
    norm = clip_gradients(grads, config.clip_norm)
    # saturated activations can keep the loss finite while gradients blow up
    if not np.isfinite(norm):
        raise NonFiniteLoss(f"gradient norm diverged at step {global_step}: {norm}")
    adam_update(ckpt, grads, config)
    return loss


# --- dataset plumbing for the epoch loop -----------------------------------


def space_labels(
    samples: Sequence[SequenceSample], space: LabelSpace
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y_main = np.array([map_label(s.profile, space) for s in samples], dtype=np.int64)
    align_space = LabelSpace(LabelSpaceKind.ALIGNMENT9)
    motiv_space = LabelSpace(LabelSpaceKind.MOTIVATION4)
    y_align = np.array([map_label(s.profile, align_space) for s in samples], dtype=np.int64)
    y_motiv = np.array([map_label(s.profile, motiv_space) for s in samples], dtype=np.int64)
    return y_main, y_align, y_motiv


class _Bucketed:
    """Samples stacked per sequence length, so batches need no padding."""

    def __init__(self, samples: Sequence[SequenceSample], space: LabelSpace, dtype=np.float32):
        y_main, y_align, y_motiv = space_labels(samples, space)
        by_t: dict[int, list[int]] = {}
        for idx, s in enumerate(samples):
            by_t.setdefault(s.matrix.shape[0], []).append(idx)
        self.groups: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for t in sorted(by_t):
            idxs = np.array(by_t[t])
            X = np.stack([np.asarray(samples[i].matrix, dtype=dtype) for i in idxs])
            self.groups.append((X, y_main[idxs], y_align[idxs], y_motiv[idxs]))
        self.n = len(samples)

    def batches(self, batch_size: int, rng: np.random.Generator | None) -> list[Batch]:
        out = []
        for X, y_main, y_align, y_motiv in self.groups:
            order = rng.permutation(len(X)) if rng is not None else np.arange(len(X))
            for s in range(0, len(X), batch_size):
                sel = order[s : s + batch_size]
                out.append(Batch(X[sel], y_main[sel], y_align[sel], y_motiv[sel]))
        if rng is not None and len(out) > 1:
            order = rng.permutation(len(out))
            out = [out[i] for i in order]
        return out


def predict_main(bucketed: _Bucketed, ckpt: Checkpoint, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """(predictions, labels) for the main head over all samples."""
    preds, labels = [], []
    for batch in bucketed.batches(batch_size, None):
        logits, _ = forward_batch(batch.X, ckpt)
        preds.append(logits["profile"].argmax(axis=1))
        labels.append(batch.y_profile)
    return np.concatenate(preds), np.concatenate(labels)


def train(
    train_samples: Sequence[SequenceSample],
    val_samples: Sequence[SequenceSample],
    space: LabelSpace,
    ckpt: Checkpoint,
    config: TrainConfig,
) -> tuple[Checkpoint, list[dict]]:
    """Epoch loop with early stopping on validation main-head accuracy.

    Returns the checkpoint from the best validation epoch and the history.
    """
    config.validate()
    if not train_samples:
        raise EmptySplit("training split is empty")
    if not val_samples:
        raise EmptySplit("validation split is empty")
    dtype = ckpt.params["fwd_W"].dtype
    train_data = _Bucketed(train_samples, space, dtype)
    val_data = _Bucketed(val_samples, space, dtype)

    best = ckpt.copy()
    best_acc = -1.0
    bad_epochs = 0
    history: list[dict] = []
    global_step = 0
    for epoch in range(config.epochs):
        rng = np.random.Generator(np.random.PCG64(mix_seed(config.seed, "epoch", epoch)))
        losses = []
        for batch in train_data.batches(config.batch_size, rng):
            losses.append(train_step(batch, ckpt, config, global_step))
            global_step += 1
        preds, labels = predict_main(val_data, ckpt)
        val_acc = float((preds == labels).mean())
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_accuracy": val_acc,
            }
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best = ckpt.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                break
    best.history = history
    return best, history


def neutral_correction(
    alignment_logits: np.ndarray,
    predicted_freqs: np.ndarray,
    prior_freqs: np.ndarray,
    eta: float = 1.0,
) -> np.ndarray:
    """Subtract eta * ln(predicted/prior) from each class logit.

    Damps classes the model over-predicts relative to the target prior;
    predicted and prior frequencies must both be strictly positive.
    """
    predicted = np.asarray(predicted_freqs, dtype=float)
    prior = np.asarray(prior_freqs, dtype=float)
    if predicted.shape != prior.shape or predicted.shape[-1] != alignment_logits.shape[-1]:
        raise ConfigInvalid("frequency vectors must match the logit dimension")
    if (predicted <= 0).any() or (prior <= 0).any():
        raise ZeroFrequency("frequencies must be strictly positive")
    return alignment_logits - eta * np.log(predicted / prior)
