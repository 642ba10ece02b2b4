"""SGD training with the KTD-CE loss, evaluation and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import ktdce
from ..errors import DataFormatError, NumericError, TrainingError
from ..ktdce import LossConfig, LossValue, OffsetMatrix
from ..metrics import MetricsReport, PredictionBatch, compute_report
from ..permlab import KtdMatrix, build_ktd_matrix
from .config import ModelConfig
from .model import ShotOrderTransformer

CHECKPOINT_VERSION = 1


def lr_schedule(epoch: int, base_lr: float = 0.01, total_epochs: int = 30) -> float:
    """Divide by 10 at epochs 15 and 25 of 30, milestones scaled to ``total_epochs``."""
    first = round(15 * total_epochs / 30)
    second = round(25 * total_epochs / 30)
    if epoch < first:
        return base_lr
    if epoch < second:
        return base_lr / 10
    return base_lr / 100


@dataclass
class OptimConfig:
    lr: float = 0.01
    momentum: float = 0.5
    weight_decay: float = 5e-4


@dataclass
class TrainState:
    model: ShotOrderTransformer
    offset: torch.nn.Parameter
    optimizer: torch.optim.SGD
    loss_config: LossConfig = field(default_factory=LossConfig)
    optim_config: OptimConfig = field(default_factory=OptimConfig)
    epoch: int = 0
    step: int = 0

    @classmethod
    def create(cls, model_config: ModelConfig, loss_config: LossConfig = LossConfig(),
               optim_config: OptimConfig = OptimConfig(), dtype=torch.float32) -> TrainState:
        model = ShotOrderTransformer(model_config).to(dtype)
        n = model_config.num_classes
        offset = torch.nn.Parameter(torch.zeros(n, n, dtype=torch.float64))
        opt = torch.optim.SGD(
            [
                {"params": list(model.parameters()), "weight_decay": optim_config.weight_decay},
                # the offset matrix has its own L1 term instead of weight decay
                {"params": [offset], "weight_decay": 0.0},
            ],
            lr=optim_config.lr,
            momentum=optim_config.momentum,
        )
        return cls(model, offset, opt, loss_config, optim_config)

    @property
    def offset_matrix(self) -> OffsetMatrix:
        return OffsetMatrix(self.model.config.k, self.offset.detach().numpy().copy())


def train_step(state: TrainState, frames, cine, truths, K: KtdMatrix, lr: float) -> LossValue:
    state.model.train()
    cfg = state.loss_config
    O = state.offset.detach().numpy()
    try:
        logits = state.model(frames, cine)
        z = logits.detach().double().numpy()
        value = ktdce.ktdce_loss(z, truths, K, O, cfg)
    except NumericError as e:
        raise TrainingError(str(e), state.step) from None
    if not math.isfinite(value.total):
        raise TrainingError("non-finite loss", state.step)
    g_logits = ktdce.grad_logits(z, truths, K, O, cfg)
    g_offset = ktdce.grad_offset(z, truths, K, O, cfg)

    state.optimizer.zero_grad(set_to_none=False)
    logits.backward(torch.from_numpy(g_logits).to(logits.dtype))
    state.offset.grad = torch.from_numpy(g_offset)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.step += 1
    return value


def predict_logits(model, frames, cine, batch_size=64) -> np.ndarray:
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(frames), batch_size):
            c = None
            if cine is not None:
                cats, genre = cine
                c = ([x[i:i + batch_size] for x in cats], genre[i:i + batch_size])
            out.append(model(frames[i:i + batch_size], c).double().numpy())
    return np.concatenate(out)


def evaluate(model, samples, bank, seed=0, batch_size=64, top_k=3) -> MetricsReport:
    """Deterministic (test-mode sampling) metrics over ``samples``."""
    from ..dataforge.loader import build_batch

    config = model.config
    K = build_ktd_matrix(config.k)
    logits, truths = [], []
    dtype = next(model.parameters()).dtype
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        frames, cine, labels, _ = build_batch(chunk, bank, config, "test", seed, 0,
                                              range(i, i + len(chunk)), dtype=dtype)
        logits.append(predict_logits(model, frames, cine, batch_size))
        truths.append(labels)
    batch = PredictionBatch(np.concatenate(logits), np.concatenate(truths), config.k)
    return compute_report(batch, K, min(top_k, batch.n_classes))


def fit(state: TrainState, train_samples, bank, epochs: int = 30, batch_size: int = 16,
        seed: int = 0, val_samples=None, log=None, checkpoint_path=None, augment=True,
        checkpoint_extra: dict | None = None) -> list[dict]:
    """Run epochs ``state.epoch .. epochs-1``; returns one log record per epoch."""
    from ..dataforge.loader import build_batch

    config = state.model.config
    K = build_ktd_matrix(config.k)
    dtype = next(state.model.parameters()).dtype
    records = []
    prev_lr = None
    while state.epoch < epochs:
        epoch = state.epoch
        lr = lr_schedule(epoch, state.optim_config.lr, epochs)
        order = np.random.default_rng(seed + 7919 * epoch).permutation(len(train_samples))
        sums = np.zeros(4)
        n_seen = 0
        for b in range(0, len(order), batch_size):
            idx = order[b:b + batch_size]
            chunk = [train_samples[i] for i in idx]
            frames, cine, truths, _ = build_batch(chunk, bank, config, "train", seed, epoch, idx,
                                                  augment=augment, dtype=dtype)
            v = train_step(state, frames, cine, truths, K, lr)
            sums += len(idx) * np.array([v.total, v.ce_part, v.ktd_part, v.l1_part])
            n_seen += len(idx)
        state.epoch += 1
        mean = sums / max(n_seen, 1)
        rec = {
            "epoch": epoch,
            "lr": lr,
            "lr_changed": prev_lr is not None and lr != prev_lr,
            "loss": float(mean[0]),
            "ce": float(mean[1]),
            "ktd": float(mean[2]),
            "l1": float(mean[3]),
            "offset_norm": float(state.offset.detach().abs().sum()),
        }
        prev_lr = lr
        if val_samples:
            rec["val"] = evaluate(state.model, val_samples, bank, seed).to_dict()
        records.append(rec)
        if log is not None:
            log(rec)
        if checkpoint_path is not None:
            save_checkpoint(state, checkpoint_path, extra={"seed": seed, **(checkpoint_extra or {})})
    return records


# -- checkpoints ---------------------------------------------------------

def save_checkpoint(state: TrainState, path, extra: dict | None = None):
    """npz container: named parameter blobs, momentum buffers, offset matrix and a JSON header."""
    blobs = {}
    for name, p in state.model.state_dict().items():
        blobs[f"param/{name}"] = p.detach().cpu().numpy()
    blobs["offset"] = state.offset.detach().numpy()
    params = list(state.model.parameters()) + [state.offset]
    names = [n for n, _ in state.model.named_parameters()] + ["__offset__"]
    for name, p in zip(names, params):
        buf = state.optimizer.state.get(p, {}).get("momentum_buffer")
        if buf is not None:
            blobs[f"momentum/{name}"] = buf.detach().cpu().numpy()
    blobs["rng/torch"] = torch.random.get_rng_state().numpy()
    header = {
        "version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "step": state.step,
        "dtype": str(next(state.model.parameters()).dtype).replace("torch.", ""),
        "model_config": state.model.config.to_dict(),
        "loss_config": asdict(state.loss_config),
        "optim_config": asdict(state.optim_config),
        "extra": extra or {},
    }
    blobs["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **blobs)
    tmp.replace(path)


def read_checkpoint_header(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data["header"]).decode())


def load_checkpoint(path) -> TrainState:
    try:
        data = np.load(path)
    except (OSError, ValueError) as e:
        raise DataFormatError(f"cannot read checkpoint: {e}", path) from None
    with data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise DataFormatError(f"unsupported checkpoint version {header.get('version')}", path)
        dtype = getattr(torch, header["dtype"])
        state = TrainState.create(
            ModelConfig.from_dict(header["model_config"]),
            LossConfig(**header["loss_config"]),
            OptimConfig(**header["optim_config"]),
            dtype=dtype,
        )
        sd = {name[len("param/"):]: torch.from_numpy(data[name].copy())
              for name in data.files if name.startswith("param/")}
        state.model.load_state_dict(sd)
        with torch.no_grad():
            state.offset.copy_(torch.from_numpy(data["offset"].copy()))
        params = dict(state.model.named_parameters())
        params["__offset__"] = state.offset
        for name in data.files:
            if name.startswith("momentum/"):
                p = params[name[len("momentum/"):]]
                state.optimizer.state[p]["momentum_buffer"] = torch.from_numpy(data[name].copy())
        state.epoch = header["epoch"]
        state.step = header["step"]
        state.extra = header.get("extra", {})
    return state
