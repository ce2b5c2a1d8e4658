"""Permutation-invariant training objective, metrics, and the train loop.

The loss is masked MSE between predicted and true per-frame unit direction
vectors, minimized over track permutations per clip. Evaluation reuses the
PIT assignment, converts tracks to azimuths, and scores mean absolute error
plus thresholded accuracy (a clip counts only if every speaker is within the
threshold).
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

from .features import StftConfig, features_from_waveform, read_wav
from .numerics import AdamState, Rng, Tensor, adam_step, no_grad
from .numerics.checkpoint import save_tensors
from .numerics.tensor import concat, narrow, sum_
from .scenegen import load_labels
from .stateformer import StateformerConfig, StateformerModel


class NanLossError(RuntimeError):
    """Training loss became non-finite."""


class EmptyDatasetError(ValueError):
    pass


# -- PIT loss ------------------------------------------------------------


def _pairwise_costs(pred, target, mask):
    """cost[i][j]: masked squared error of pred track i against target slot j."""
    t, s, _ = target.shape
    costs = []
    for i in range(s):
        pred_i = narrow(pred, (slice(None), slice(i, i + 1), slice(None)))
        row = []
        for j in range(s):
            diff = pred_i - Tensor(target[:, j : j + 1, :])
            w = Tensor(mask[:, j : j + 1, None].astype(np.float64))
            row.append(sum_(diff * diff * w))
        costs.append(row)
    return costs


def pit_mse_loss(pred, target, mask):
    """Minimum masked MSE over track permutations.

    pred: Tensor (T, S, 3); target: array (T, S, 3); mask: bool array (T, S).
    Returns (loss Tensor, best permutation tuple); the permutation maps
    target slot j to pred track perm[j]. Inactive slots are excluded from
    the mean. Raises if no slot is active.
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    t, s, _ = pred.shape
    if target.shape != (t, s, 3) or mask.shape != (t, s):
        raise ValueError(
            f"pit_mse_loss: pred {pred.shape}, target {target.shape}, mask {mask.shape}"
        )
    n_active = int(mask.sum())
    if n_active == 0:
        raise ValueError("pit_mse_loss: no active source frames")
    costs = _pairwise_costs(pred, target, mask)
    best = None
    best_val = None
    for perm in itertools.permutations(range(s)):
        total = costs[perm[0]][0]
        for j in range(1, s):
            total = total + costs[perm[j]][j]
        val = total.item()
        if best_val is None or val < best_val:
            best_val = val
            best = (perm, total)
    perm, total = best
    return total * (1.0 / (3.0 * n_active)), perm


# -- metrics ---------------------------------------------------------------


def cartesian_to_azimuth(v):
    """atan2(y, x) in degrees over the last axis; range (-180, 180]."""
    v = np.asarray(v, dtype=np.float64)
    x, y = v[..., 0], v[..., 1]
    if np.any((x == 0.0) & (y == 0.0)):
        raise ValueError("azimuth undefined for zero horizontal component")
    return np.degrees(np.arctan2(y, x))


def mae_metric(est, truth):
    """Mean over clips of the per-clip mean absolute azimuth error (degrees).

    est, truth: lists of per-clip azimuth arrays, matched after PIT alignment;
    entries may be (S,) or (T, S). No angular wraparound is applied (training
    azimuths live in [0, 180])."""
    if not est:
        raise ValueError("empty evaluation set")
    if len(est) != len(truth):
        raise ValueError("est/truth clip counts differ")
    per_clip = []
    for e, g in zip(est, truth):
        e, g = np.asarray(e, dtype=np.float64), np.asarray(g, dtype=np.float64)
        if e.shape != g.shape:
            raise ValueError(f"clip shapes differ: {e.shape} vs {g.shape}")
        per_clip.append(float(np.abs(e - g).mean()))
    return float(np.mean(per_clip))


def accuracy_metric(errors, threshold_deg):
    """Percent of clips whose every speaker error is <= threshold."""
    if threshold_deg <= 0:
        raise ValueError("threshold must be positive")
    if not errors:
        raise ValueError("empty evaluation set")
    correct = sum(1 for e in errors if float(np.max(e)) <= threshold_deg)
    return 100.0 * correct / len(errors)


@dataclass
class EvalReport:
    mae: float
    acc: dict  # threshold (deg) -> percent
    val_loss: float
    per_clip_errors: list

    def to_dict(self):
        return {
            "mae_deg": self.mae,
            "acc": {str(k): v for k, v in self.acc.items()},
            "val_loss": self.val_loss,
            "per_clip_errors": [[float(x) for x in e] for e in self.per_clip_errors],
        }


# -- dataset ----------------------------------------------------------------


class ClipDataset:
    """Manifest-backed clips: features on demand, labels padded to max_sources."""

    def __init__(self, records, root, max_sources=2, cfg: StftConfig = StftConfig()):
        if not records:
            raise EmptyDatasetError("dataset manifest resolved to zero clips")
        self.records = records
        self.root = root
        self.max_sources = max_sources
        self.cfg = cfg

    def __len__(self):
        return len(self.records)

    def load(self, i):
        rec = self.records[i]
        _, wav = read_wav(os.path.join(self.root, rec["wav"]))
        feats = features_from_waveform(wav, self.cfg)
        labels, mask = load_labels(os.path.join(self.root, rec["labels"]))
        t, s, _ = labels.shape
        if s < self.max_sources:
            pad = self.max_sources - s
            labels = np.concatenate([labels, np.zeros((t, pad, 3))], axis=1)
            mask = np.concatenate([mask, np.zeros((t, pad), dtype=bool)], axis=1)
        return feats, labels, mask


def crop_frames(feats, labels, mask, crop, rng: Rng):
    """Random contiguous frame window (features are already full-utterance
    normalized, so cropping afterwards keeps train/eval statistics aligned)."""
    t = feats.shape[2]
    if crop is None or crop >= t:
        return feats, labels, mask
    t0 = int(rng.integers(0, t - crop + 1))
    return feats[:, :, t0 : t0 + crop], labels[t0 : t0 + crop], mask[t0 : t0 + crop]


# -- evaluation ---------------------------------------------------------------


def evaluate(model: StateformerModel, dataset: ClipDataset) -> EvalReport:
    """PIT-aligned azimuth scoring over a dataset."""
    was_training = model.training
    model.eval()
    errors = []
    losses = []
    with no_grad():
        for i in range(len(dataset)):
            feats, labels, mask = dataset.load(i)
            pred = model(feats)
            loss, perm = pit_mse_loss(pred, labels, mask)
            losses.append(loss.item())
            clip_err = []
            for j in range(labels.shape[1]):
                active = mask[:, j]
                if not active.any():
                    continue
                est_az = cartesian_to_azimuth(pred.data[active, perm[j], :])
                true_az = cartesian_to_azimuth(labels[active, j, :])
                clip_err.append(float(np.abs(est_az - true_az).mean()))
            errors.append(np.array(clip_err))
    model.train(was_training)
    mae = float(np.mean([e.mean() for e in errors]))
    acc = {lam: accuracy_metric(errors, lam) for lam in (5, 10, 15)}
    return EvalReport(mae=mae, acc=acc, val_loss=float(np.mean(losses)),
                      per_clip_errors=[list(e) for e in errors])


# -- training loop -------------------------------------------------------------


@dataclass
class TrainConfig:
    lr0: float = 0.001
    decay: float = 0.8
    patience: int = 3
    min_delta: float = 1e-4
    epochs: int = 80
    batch: int = 8
    seed: int = 0
    crop: int | None = 128  # training-time frame window; None trains full clips


HISTORY_HEADER = "epoch\ttrain_loss\tval_loss\tlr\tval_mae_deg"


def format_history_row(epoch, train_loss, val_loss, lr, val_mae):
    return f"{epoch}\t{train_loss:.10g}\t{val_loss:.10g}\t{lr:.10g}\t{val_mae:.10g}"


def train_loop(model: StateformerModel, train_set: ClipDataset, val_set: ClipDataset,
               cfg: TrainConfig, out_dir, log=print):
    """Seeded shuffled epochs, PIT loss, Adam, plateau LR decay, best checkpoint.

    Returns the history as a list of row strings (also written to history.tsv,
    with the best-validation model in model.ckpt).
    """
    os.makedirs(out_dir, exist_ok=True)
    state = AdamState(lr=cfg.lr0)
    rng = Rng(cfg.seed).child("train")
    named = model.named_parameters()
    history = [HISTORY_HEADER]
    best_val = None
    streak = 0
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = np.arange(len(train_set))
        epoch_rng = rng.child(f"epoch{epoch}")
        epoch_rng.shuffle(order)
        crop_rng = epoch_rng.child("crop")
        epoch_losses = []
        for start in range(0, len(order), cfg.batch):
            batch = order[start : start + cfg.batch]
            model.zero_grad()
            total = None
            for i in batch:
                feats, labels, mask = train_set.load(int(i))
                feats, labels, mask = crop_frames(feats, labels, mask, cfg.crop, crop_rng)
                loss, _ = pit_mse_loss(model(feats), labels, mask)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            value = total.item()
            if not np.isfinite(value):
                raise NanLossError(f"non-finite training loss at epoch {epoch}")
            total.backward()
            adam_step(named, state)
            epoch_losses.append(value)
        report = evaluate(model, val_set)
        train_loss = float(np.mean(epoch_losses))
        row = format_history_row(epoch, train_loss, report.val_loss, state.lr, report.mae)
        history.append(row)
        log(row)
        if best_val is None or report.val_loss < best_val - cfg.min_delta:
            best_val = report.val_loss
            streak = 0
            save_checkpoint(ckpt_path, model, seed=cfg.seed, epoch=epoch,
                            val_loss=report.val_loss)
        else:
            streak += 1
            if streak >= cfg.patience:
                state.lr *= cfg.decay
                streak = 0
    with open(os.path.join(out_dir, "history.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(history) + "\n")
    return history


def save_checkpoint(path, model: StateformerModel, **meta):
    save_tensors(
        path,
        model.state_dict(),
        meta={"model_config": model.cfg.to_text(), **{k: v for k, v in meta.items()}},
    )


def load_checkpoint(path):
    """Rebuild a model from a self-describing checkpoint."""
    from .numerics.checkpoint import load_tensors
    from .stateformer import build_model

    tensors, meta = load_tensors(path)
    cfg = StateformerConfig.from_text(meta["model_config"])
    model = build_model(cfg, seed=int(meta.get("seed", 0)))
    model.load_state_dict(tensors)
    return model, meta
