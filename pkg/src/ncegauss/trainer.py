"""Adam training of encoders on streams of augmented pairs.

Minimizes the empirical InfoNCE loss (optionally plus the entropy/norm
regularizer) over mini-batches drawn from a synthetic dataset, with a
held-out evaluation split and periodic loss/diagnostics records.  Every
random draw is keyed by (seed, epoch, step), so runs are bit-reproducible
and training can resume from a checkpoint without drift.
"""

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ._util import derive_rng
from .encoder import (Encoder, backward, forward, grad_through_normalization_batch)
from .gaussdiag import DiagnosticsReport, coordinate_report
from .objective import (LossParams, LossReport, entropy_gradient, infonce_grad,
                        regularized_objective)
from .synthdata import AugmentationChannel, Dataset, augment_pair

ADAM_EPS = 1e-8
TRAIN_FRACTION = 0.8
_PERM_KEY = 0x5E
_AUG_KEY = 0xA6
_EVAL_KEY = 0xE7A1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last evaluated encoder."""

    def __init__(self, message, encoder=None, epoch=None):
        super().__init__(message)
        self.encoder = encoder
        self.epoch = epoch


@dataclass
class TrainConfig:
    lr: float = 1e-3
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 150
    tau: float = 0.1
    beta: float = 0.0
    lam: float = 1.0
    seed: int = 0
    eval_every: int = 25

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (InfoNCE needs negatives)")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def loss_params(self) -> LossParams:
        return LossParams(tau=self.tau, beta=self.beta, lam=self.lam)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


@dataclass
class EvalRecord:
    epoch: int
    loss: LossReport
    diagnostics: DiagnosticsReport

    def to_json(self) -> str:
        return json.dumps({
            "epoch": self.epoch,
            "loss": json.loads(self.loss.to_json()),
            "diagnostics": self.diagnostics.to_dict(),
        })


@dataclass
class TrainHistory:
    records: List[EvalRecord] = field(default_factory=list)
    adam_state: Optional[AdamState] = None  # populated by train() for resume

    def append(self, record: EvalRecord):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be monotonically increasing")
        self.records.append(record)

    def final(self) -> EvalRecord:
        return self.records[-1]

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """Standard Adam with bias correction and decoupled weight decay.

    Returns (new_params, new_state); inputs are not mutated.
    """
    b1, b2 = config.adam_betas
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    t = state.t + 1
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p = p * (1.0 - config.lr * config.weight_decay)
        p = p - config.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p)
    return new_p, AdamState(m=new_m, v=new_v, t=t)


def split_indices(n: int):
    """Deterministic 80/20 train/eval split by row position."""
    n_train = int(round(TRAIN_FRACTION * n))
    n_train = min(max(n_train, 1), n - 1) if n > 1 else n
    return np.arange(n_train), np.arange(n_train, n)


def train(dataset: Dataset, channel: AugmentationChannel, encoder: Encoder,
          config: TrainConfig, start_epoch: int = 0,
          adam_state: Optional[AdamState] = None,
          history: Optional[TrainHistory] = None):
    """Run Adam on mini-batches of augmented pairs; returns (encoder, history).

    The encoder is updated in place.  Evaluation runs on the held-out
    split at epoch 0, every `eval_every` epochs, and at the final epoch.
    Passing start_epoch/adam_state resumes a checkpointed run and
    reproduces the uninterrupted run bit-exactly.
    """
    train_ids, eval_ids = split_indices(dataset.n)
    params = encoder.parameters()
    state = adam_state if adam_state is not None else AdamState.zeros_like(params)
    history = history if history is not None else TrainHistory()
    n_batches = len(train_ids) // config.batch_size

    if start_epoch == 0:
        history.append(_evaluate(dataset, channel, encoder, config, eval_ids, epoch=0))
    last_good = [p.copy() for p in params]
    last_good_epoch = start_epoch

    for epoch in range(start_epoch + 1, config.epochs + 1):
        perm = derive_rng(config.seed, _PERM_KEY, epoch).permutation(train_ids)
        for step in range(n_batches):
            ids = perm[step * config.batch_size:(step + 1) * config.batch_size]
            seed = np.random.SeedSequence(entropy=config.seed,
                                          spawn_key=(_AUG_KEY, epoch, step))
            loss_val, grads = _batch_gradients(dataset, channel, encoder, config, ids, seed)
            if not np.isfinite(loss_val):
                encoder.set_parameters(last_good)
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} step {step}",
                    encoder=encoder, epoch=last_good_epoch)
            params, state = adam_step(params, grads, state, config)
            encoder.set_parameters(params)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            history.append(_evaluate(dataset, channel, encoder, config, eval_ids, epoch))
            last_good = [p.copy() for p in params]
            last_good_epoch = epoch
    history.adam_state = state
    return encoder, history


def _batch_gradients(dataset, channel, encoder, config, ids, seed):
    """Loss value and summed parameter gradients for one mini-batch."""
    pair = augment_pair(dataset, channel, ids, seed)
    emb_a = forward(encoder, pair.view_a)
    emb_b = forward(encoder, pair.view_b)
    u, v = emb_a.normalized, emb_b.normalized
    n = u.shape[0]

    logits = (u @ v.T) / config.tau
    mx = logits.max(axis=1, keepdims=True)
    p = np.exp(logits - mx)
    denom = p.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(denom[:, 0]) + mx[:, 0] - np.diag(logits)))
    p /= denom
    d_logits = p
    d_logits[np.arange(n), np.arange(n)] -= 1.0
    d_logits /= n
    g_u = d_logits @ v / config.tau
    g_v = d_logits.T @ u / config.tau

    g_raw_a = grad_through_normalization_batch(emb_a.raw, g_u)
    g_raw_b = grad_through_normalization_batch(emb_b.raw, g_v)

    if config.beta > 0:
        z = np.vstack([emb_a.raw, emb_b.raw])
        h_val, dh = entropy_gradient(z)
        m = z.shape[0]
        dz = config.beta * (-dh + config.lam * 2.0 * z / m)
        g_raw_a += dz[:n]
        g_raw_b += dz[n:]
        msn = float(np.mean(np.sum(z * z, axis=1)))
        loss += config.beta * (-h_val + config.lam * msn)

    grads_a = backward(encoder, pair.view_a, g_raw_a, hidden_pre=emb_a.hidden_pre)
    grads_b = backward(encoder, pair.view_b, g_raw_b, hidden_pre=emb_b.hidden_pre)
    return loss, [ga + gb for ga, gb in zip(grads_a, grads_b)]


def _evaluate(dataset, channel, encoder, config, eval_ids, epoch) -> EvalRecord:
    emb = forward(encoder, dataset.samples[eval_ids])
    seed = np.random.SeedSequence(entropy=config.seed, spawn_key=(_EVAL_KEY,))
    pair = augment_pair(dataset, channel, eval_ids, seed)
    u = forward(encoder, pair.view_a).normalized
    v = forward(encoder, pair.view_b).normalized
    loss = regularized_objective(u, v, emb.raw, config.loss_params())
    diag = coordinate_report(emb.raw, emb.normalized, pairs=(u, v))
    return EvalRecord(epoch=epoch, loss=loss, diagnostics=diag)
