"""Bag-level relation matrix over path-scoped entity nodes and self-attention on its flat view."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch
from torch import nn

log = logging.getLogger(__name__)

ROLES = ("head", "tail", "bridge")


@dataclass
class EntityNode:
    path: int
    role: str
    entity_id: str
    rep: torch.Tensor


@dataclass
class RelationMatrix:
    nodes: list[EntityNode]
    flat: torch.Tensor  # |E|^2 x d, row-major over (u, v)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def grid(self) -> torch.Tensor:
        n = self.n_nodes
        return self.flat.reshape(n, n, -1)

    def cell(self, u: int, v: int) -> torch.Tensor:
        return self.flat[u * self.n_nodes + v]

    def with_flat(self, flat: torch.Tensor) -> "RelationMatrix":
        return RelationMatrix(self.nodes, flat)

    def target_index(self) -> list[tuple[int, int, int]]:
        """(path, head node, tail node) for every path that has both."""
        heads, tails = {}, {}
        for k, node in enumerate(self.nodes):
            if node.role == "head":
                heads[node.path] = k
            elif node.role == "tail":
                tails[node.path] = k
        out = []
        for p in sorted(set(heads) | set(tails)):
            if p in heads and p in tails:
                out.append((p, heads[p], tails[p]))
            else:
                log.warning("path %d lacks a head or tail node; omitted", p)
        return out


class RelationProjector(nn.Module):
    """r_uv = relu(W_r relu(W_u e_u + W_v e_v)), no bias terms."""

    def __init__(self, d: int):
        super().__init__()
        self.W_u = nn.Linear(d, d, bias=False)
        self.W_v = nn.Linear(d, d, bias=False)
        self.W_r = nn.Linear(d, d, bias=False)

    def pair(self, e_u: torch.Tensor, e_v: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.W_r(torch.relu(self.W_u(e_u) + self.W_v(e_v))))

    def forward(self, reps: torch.Tensor) -> torch.Tensor:
        n, d = reps.shape
        pre = self.W_u(reps).unsqueeze(1) + self.W_v(reps).unsqueeze(0)  # n x n x d
        return torch.relu(self.W_r(torch.relu(pre))).reshape(n * n, d)


def relation_rep(e_u, e_v, projector: RelationProjector) -> torch.Tensor:
    return projector.pair(e_u, e_v)


def build_relation_matrix(nodes: list[EntityNode], projector: RelationProjector) -> RelationMatrix:
    reps = torch.stack([n.rep for n in nodes])
    return RelationMatrix(nodes, projector(reps))


def node_count(bridges_per_path, with_bridges: bool = True) -> int:
    return sum(2 + (b if with_bridges else 0) for b in bridges_per_path)


def inner_path_mask(nodes: list[EntityNode]) -> torch.Tensor:
    """Boolean |E|^2 x |E|^2 mask letting a cell attend only within its own path.

    Cells pairing nodes of two different paths attend only to themselves.
    """
    path = torch.tensor([n.path for n in nodes])
    n = len(nodes)
    pu = path.repeat_interleave(n)
    pv = path.repeat(n)
    group = torch.where(pu == pv, pu, torch.full_like(pu, -1))
    allowed = (group.unsqueeze(1) == group.unsqueeze(0)) & (group.unsqueeze(1) >= 0)
    allowed |= torch.eye(n * n, dtype=torch.bool)
    return allowed


class SelfAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError("d must be divisible by the head count")
        self.heads, self.dh = heads, d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.out = nn.Linear(d, d)

    def scores(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        n = x.shape[0]
        q = self.q(x).reshape(n, self.heads, self.dh).transpose(0, 1)
        k = self.k(x).reshape(n, self.heads, self.dh).transpose(0, 1)
        s = q @ k.transpose(1, 2) / math.sqrt(self.dh)  # heads x n x n
        if mask is not None:
            s = s.masked_fill(~mask, float("-inf"))
        return torch.softmax(s, dim=-1)

    def forward(self, x, mask=None, return_weights=False):
        n = x.shape[0]
        w = self.scores(x, mask)
        v = self.v(x).reshape(n, self.heads, self.dh).transpose(0, 1)
        y = (w @ v).transpose(0, 1).reshape(n, -1)
        y = self.out(y)
        return (y, w) if return_weights else y


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, d: int, heads: int, ffn_mult: int = 4):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = SelfAttention(d, heads)
        self.ln2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, ffn_mult * d), nn.GELU(), nn.Linear(ffn_mult * d, d))

    def forward(self, x, mask=None, return_weights=False):
        a, w = self.attn(self.ln1(x), mask, return_weights=True)
        x = x + a
        x = x + self.ffn(self.ln2(x))
        return (x, w) if return_weights else x


def default_heads(d: int) -> int:
    h = max(1, d // 16)
    while d % h:
        h -= 1
    return h


class AttentionStack(nn.Module):
    def __init__(self, d: int, layers: int = 3, heads: int | None = None, ffn_mult: int = 4):
        super().__init__()
        if layers < 1:
            raise ValueError("need at least one attention layer")
        heads = heads or default_heads(d)
        self.blocks = nn.ModuleList([Block(d, heads, ffn_mult) for _ in range(layers)])
        self.ln_f = nn.LayerNorm(d)

    def forward(self, flat: torch.Tensor, mask=None, return_weights=False):
        weights = []
        for blk in self.blocks:
            flat, w = blk(flat, mask, return_weights=True)
            weights.append(w)
        flat = self.ln_f(flat)
        return (flat, weights) if return_weights else flat


def attention_stack(m: RelationMatrix, stack: AttentionStack, mask=None) -> RelationMatrix:
    return m.with_flat(stack(m.flat, mask))


def extract_target_relations(m: RelationMatrix) -> list[torch.Tensor]:
    n = m.n_nodes
    return [m.flat[h * n + t] for _, h, t in m.target_index()]


def node_labels(nodes: list[EntityNode]) -> list[str]:
    """Coordinates like h(1), t(1), b(1)(2) with 1-based path and bridge numbering."""
    out, bridge_no = [], {}
    for node in nodes:
        p = node.path + 1
        if node.role == "head":
            out.append(f"h({p})")
        elif node.role == "tail":
            out.append(f"t({p})")
        else:
            bridge_no[p] = bridge_no.get(p, 0) + 1
            out.append(f"b({p})({bridge_no[p]})")
    return out
