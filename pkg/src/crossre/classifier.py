"""Relation scoring head, bag aggregation, thresholding and the training losses."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

LOSS_MODES = ("corrected", "literal")


@dataclass(frozen=True)
class LossConfig:
    theta: float = 0.0
    mode: str = "corrected"

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise ValueError(f"loss mode must be one of {LOSS_MODES}")


class Classifier(nn.Module):
    def __init__(self, d: int, n_out: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or d
        self.fc1 = nn.Linear(d, hidden)
        self.fc2 = nn.Linear(hidden, n_out)

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.relu(self.fc1(r)))


def aggregate_bag(per_path) -> torch.Tensor:
    per_path = list(per_path)
    if not per_path:
        raise ValueError("no usable paths")
    return torch.stack(per_path).max(dim=0).values


def predict(bag_logits, theta: float, relations) -> set[str]:
    return {r for r, v in zip(relations, bag_logits.tolist()) if v > theta}


def predict_single(bag_logits, relations) -> set[str]:
    """Argmax prediction over relations + a trailing N/A slot."""
    k = int(torch.argmax(bag_logits))
    return set() if k == len(relations) else {relations[k]}


def threshold_loss(bag_logits: torch.Tensor, pos_mask: torch.Tensor, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Multi-label global-threshold loss; every non-positive class is negative."""
    pos_mask = pos_mask.to(torch.bool)
    theta = bag_logits.new_tensor([cfg.theta])
    neg = torch.cat([theta, bag_logits[~pos_mask]])
    pos = bag_logits[pos_mask]
    pos = -pos if cfg.mode == "corrected" else pos
    pos = torch.cat([-theta, pos])
    return torch.logsumexp(neg, 0) + torch.logsumexp(pos, 0)


def cross_entropy_loss(bag_logits: torch.Tensor, label_ids: list[int]) -> torch.Tensor:
    """Softmax cross-entropy over relations + N/A (last slot), averaged over gold labels."""
    logp = torch.log_softmax(bag_logits, dim=0)
    targets = label_ids or [bag_logits.shape[0] - 1]
    return -logp[targets].mean()
