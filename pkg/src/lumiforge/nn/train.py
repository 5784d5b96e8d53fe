"""Training loop: Adam on a masked MSE over the predicted residual.

The regression target is hr - bicubic(lr), so the loss never pays for what
interpolation already gets right. Pairs are augmented on the fly (channel
permutation + integer shear); the shear's edge-clamped columns drop out of
the loss through the mask. Everything is driven by one seeded Generator,
so a rerun with the same seed reproduces the loss curve bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ShapeError, TrainingDiverged
from ..scenes import TrainingPair, augment
from .network import Model, pad_to_min, upsample_base
from .tensor import Tensor, backward, crop2d, mul, scale, sub, sum_all


def masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared error over mask-selected pixels (all channels).

    target is (B, C, H, W); mask is (B, 1, H, W) in {0,1} and broadcasts
    over channels. Constant w.r.t. the tape; only pred carries gradient.
    """
    count = float(mask.sum()) * pred.data.shape[1]
    if count == 0:
        raise ShapeError("loss mask selects no pixels")
    diff = sub(pred, Tensor(target))
    sq = mul(diff, diff)
    return scale(sum_all(mul(sq, Tensor(mask))), 1.0 / count)


class Adam:
    """Standard Adam with bias correction; state keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, store, lr: float):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name in store.names():
            p = store[name]
            if p.grad is None:
                continue
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augment: bool = True
    log_every: int = 100
    divergence_dump: Path | None = None

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ShapeError("steps and batch_size must be positive")
        if self.lr < 0:
            raise ShapeError("learning rate must be non-negative")


@dataclass
class TrainLog:
    losses: list[tuple[int, float]] = field(default_factory=list)

    def to_csv(self, path: Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"])
            w.writerows(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1][1] if self.losses else float("nan")


def _prepare_item(pair: TrainingPair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(bicubic base, residual target, loss mask) for one pair, HR-sized."""
    base, base_mask = upsample_base(pair.lr)
    hr = np.asarray(pair.hr.data, dtype=np.float64)
    target = hr - base
    mask = pair.hr.valid_mask()
    if base_mask is not None:
        mask = mask & base_mask
    return base, target, mask


def train(model: Model, pairs: list[TrainingPair], cfg: TrainConfig) -> TrainLog:
    """Optimize model parameters in place; returns the loss log.

    Divergence (non-finite loss) dumps a checkpoint of the current state to
    cfg.divergence_dump, if set, and raises TrainingDiverged.
    """
    from .checkpoint import save_checkpoint  # local import, cycle with loaders

    if not pairs:
        raise ShapeError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.beta1, cfg.beta2, cfg.eps)
    log = TrainLog()
    dt = model.store.dtype
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, len(pairs), size=cfg.batch_size)
        bases, targets, masks = [], [], []
        for k in idx:
            pair = pairs[int(k)]
            if cfg.augment:
                pair = augment(pair, rng)
            base, target, mask = _prepare_item(pair)
            bases.append(base)
            targets.append(target.transpose(2, 0, 1))
            masks.append(mask[None])
        x = np.stack(bases).transpose(0, 3, 1, 2).astype(dt)
        H, W = x.shape[2], x.shape[3]
        x = pad_to_min(x, model.spec.min_input)
        target_b = np.stack(targets).astype(dt)
        mask_b = np.stack(masks).astype(dt)

        model.store.zero_grads()
        res = model.forward(Tensor(x))
        if res.data.shape[2] != H or res.data.shape[3] != W:
            res = crop2d(res, H, W)
        loss = masked_mse(res, target_b, mask_b)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            dump = cfg.divergence_dump
            if dump is not None:
                save_checkpoint(Path(dump), model)
            raise TrainingDiverged(
                f"non-finite loss at step {step}", dump_path=dump
            )
        backward(loss)
        opt.step(model.store, cfg.lr)
        model.step += 1
        if step % cfg.log_every == 0 or step == 1 or step == cfg.steps:
            log.losses.append((step, loss_val))
    return log
