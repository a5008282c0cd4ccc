"""Training loop, evaluation, checkpoints, gradient checking and ablation wiring."""

from __future__ import annotations

import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
import torch

from .config import ABLATIONS, TrainConfig
from .corpus import CorpusStore
from .encoder import Vocabulary
from .metrics import evaluate_rankings
from .model import DTYPES, CrossPathModel, PreparedBag, named_groups, prepare_store

log = logging.getLogger(__name__)

CKPT_MAGIC = b"CRSRCKPT"
CKPT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, msg, bag_id=None):
        super().__init__(msg)
        self.bag_id = bag_id


def apply_ablation(cfg: TrainConfig, *names: str) -> TrainConfig:
    """Switch off components by short name: IC, BR, CP, TH."""
    kw = {}
    for n in names:
        key = n.upper().lstrip("-")
        if key not in ABLATIONS:
            raise ValueError(f"unknown ablation {n!r}")
        kw[ABLATIONS[key]] = True
    return cfg.replace(**kw)


def warmup_linear(step: float, total: int, warmup_steps: int) -> float:
    """Multiplier rising linearly to 1 at ``warmup_steps`` then falling linearly to 0 at ``total``."""
    if warmup_steps > 0 and step <= warmup_steps:
        return step / warmup_steps
    if total <= warmup_steps:
        return 1.0
    return max(0.0, (total - step) / (total - warmup_steps))


def schedule(cfg: TrainConfig, total_steps: int):
    warm = min(total_steps, max(1, round(cfg.warmup * total_steps))) if cfg.warmup > 0 else 0
    # optimizer step k runs at schedule point k + 1 so the first update is non-zero
    return lambda k: warmup_linear(min(k + 1, total_steps), total_steps, warm), warm


def build_model(vocab: Vocabulary, n_relations: int, cfg: TrainConfig) -> CrossPathModel:
    torch.manual_seed(cfg.seed)
    return CrossPathModel(len(vocab), n_relations, cfg)


def _bag_grad(model, pb: PreparedBag, params, scale: float):
    out = model(pb)
    loss = model.loss(out, pb)
    grads = torch.autograd.grad(loss * scale, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    return float(loss.detach()), grads


@torch.no_grad()
def run_inference(model: CrossPathModel, bags: list[PreparedBag], relations) -> tuple[dict, dict]:
    """Ranking scores and predicted relation sets per bag."""
    model.eval()
    scores, preds = {}, {}
    for pb in bags:
        if not pb.paths:
            scores[pb.bag_id] = np.full(len(relations), -1e30)
            preds[pb.bag_id] = set()
            continue
        out = model(pb)
        scores[pb.bag_id] = model.ranking_scores(out).double().numpy()
        preds[pb.bag_id] = model.predict(out, relations)
    model.train()
    return scores, preds


def evaluate(model: CrossPathModel, bags: list[PreparedBag], relations, p_at=(500, 1000), average_p=False) -> dict:
    scores, preds = run_inference(model, bags, relations)
    gold = {pb.bag_id: set(pb.labels) for pb in bags}
    return evaluate_rankings(scores, preds, gold, relations, p_at, average_p)


@dataclass
class TrainResult:
    model: CrossPathModel
    history: list[dict]
    step_losses: list[float] = field(default_factory=list)


def train(train_bags: list[PreparedBag], vocab: Vocabulary, relations, cfg: TrainConfig,
          dev_bags: list[PreparedBag] | None = None, eval_every: int = 1, p_at=(500, 1000),
          stop=None) -> TrainResult:
    """Train from scratch; deterministic for a fixed seed at any worker count.

    ``stop`` is called with each epoch record and ends training early when it returns true.
    """
    torch.set_num_threads(1)
    model = build_model(vocab, len(relations), cfg)
    params = [p for _, p in named_groups(model)]
    usable = [pb for pb in train_bags if pb.paths]
    if len(usable) < len(train_bags):
        log.warning("%d bags without usable paths skipped", len(train_bags) - len(usable))
    if not usable:
        raise TrainingError("no trainable bags")

    steps_per_epoch = math.ceil(len(usable) / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    lr_mult, _ = schedule(cfg, total)
    opt = torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lr_mult)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    history, step_losses = [], []
    try:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(usable))
            epoch_loss = 0.0
            for b in range(steps_per_epoch):
                batch = [usable[k] for k in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
                scale = 1.0 / len(batch)
                work = (lambda pb: _bag_grad(model, pb, params, scale))
                results = list(pool.map(work, batch)) if pool else [work(pb) for pb in batch]
                for pb, (loss, _) in zip(batch, results):
                    if not math.isfinite(loss):
                        raise TrainingError(f"non-finite loss on bag {pb.bag_id}", pb.bag_id)
                # fixed reduction order: bag index within the batch
                for i, p in enumerate(params):
                    g = results[0][1][i].clone()
                    for _, grads in results[1:]:
                        g += grads[i]
                    p.grad = g
                if cfg.clip > 0:
                    torch.nn.utils.clip_grad_norm_(params, cfg.clip)
                opt.step()
                sched.step()
                opt.zero_grad(set_to_none=True)
                batch_loss = sum(l for l, _ in results) / len(batch)
                step_losses.append(batch_loss)
                epoch_loss += batch_loss * len(batch)

            rec = {"epoch": epoch + 1, "loss": epoch_loss / len(usable),
                   "lr": sched.get_last_lr()[0], "loss_mode": cfg.loss_mode, "theta": cfg.theta}
            if (epoch + 1) % eval_every == 0 or epoch + 1 == cfg.epochs:
                target = dev_bags if dev_bags is not None else usable
                rec["dev" if dev_bags is not None else "train"] = evaluate(model, target, relations, p_at)
            history.append(rec)
            log.info("epoch %d loss %.5f", epoch + 1, rec["loss"])
            if stop is not None and stop(rec):
                break
    finally:
        if pool:
            pool.shutdown()
    return TrainResult(model, history, step_losses)


def prepare_and_train(store: CorpusStore, cfg: TrainConfig, dev_store: CorpusStore | None = None,
                      embeddings=None, **kw) -> tuple[TrainResult, Vocabulary]:
    vocab = Vocabulary.from_store(store)
    train_bags = prepare_store(store, vocab, cfg, embeddings)
    dev_bags = prepare_store(dev_store, vocab, cfg) if dev_store is not None else None
    return train(train_bags, vocab, store.schema.relations, cfg, dev_bags, **kw), vocab


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, model: CrossPathModel, vocab: Vocabulary, relations, history=()) -> None:
    named = named_groups(model)
    header = {
        "config": model.cfg.to_dict(),
        "shapes": [[n, list(p.shape)] for n, p in named],
        "dtype": model.cfg.dtype,
        "vocab": vocab.itos,
        "relations": list(relations),
        "history": list(history),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    flat = torch.cat([p.detach().reshape(-1) for _, p in named]).numpy()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQ", CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(flat.astype(flat.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path):
    """Returns (model, vocab, relations, history)."""
    with open(path, "rb") as fh:
        if fh.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint")
        version, n = struct.unpack("<IQ", fh.read(12))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(n).decode("utf-8"))
        raw = fh.read()
    cfg_keys = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in header["config"].items() if k in cfg_keys})
    vocab = Vocabulary(header["vocab"][len(Vocabulary().itos):])
    model = CrossPathModel(len(vocab), len(header["relations"]), cfg)
    np_dtype = np.dtype(header["dtype"]).newbyteorder("<")
    flat = torch.from_numpy(np.frombuffer(raw, dtype=np_dtype).astype(np.dtype(header["dtype"])).copy())
    named = named_groups(model)
    if [[nm, list(p.shape)] for nm, p in named] != header["shapes"]:
        raise ValueError(f"{path}: shape table does not match model")
    offset = 0
    with torch.no_grad():
        for _, p in named:
            k = p.numel()
            p.copy_(flat[offset:offset + k].reshape(p.shape).to(DTYPES[cfg.dtype]))
            offset += k
    return model, vocab, header["relations"], header["history"]


# ---------------------------------------------------------------- gradient check

def grad_check(model: CrossPathModel, pb: PreparedBag, step: float = 1e-5, groups=None,
               floor: float = 1e-6) -> dict[str, float]:
    """Worst relative error between autograd and central differences, per parameter tensor.

    The error of a tensor is max|analytic - numeric| divided by the largest
    gradient magnitude in that tensor, so entries with vanishing gradients do
    not blow up the ratio. Tensors whose true gradient is identically zero
    (the key bias, which softmax cannot see) are measured against ``floor``
    instead, since finite differences only return rounding noise there.
    """
    named = named_groups(model)
    if any(p.dtype != torch.float64 for _, p in named):
        raise ValueError("gradient check requires float64 parameters")
    if groups is not None:
        named = [(n, p) for n, p in named if any(n.startswith(g) for g in groups)]
    params = [p for _, p in named]

    def loss_value():
        return model.loss(model(pb), pb)

    analytic = torch.autograd.grad(loss_value(), params, allow_unused=True)
    report = {}
    with torch.no_grad():
        for (name, p), a in zip(named, analytic):
            a = torch.zeros_like(p) if a is None else a
            num = torch.zeros_like(p)
            flat = p.view(-1)
            nflat = num.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                fp = loss_value().item()
                flat[i] = orig - step
                fm = loss_value().item()
                flat[i] = orig
                nflat[i] = (fp - fm) / (2 * step)
            scale = max(a.abs().max().item(), num.abs().max().item(), floor)
            report[name] = (a - num).abs().max().item() / scale
    return report
