"""Input construction for bags and the end-to-end cross-path relation model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch
from torch import nn

from .classifier import (
    Classifier, aggregate_bag, cross_entropy_loss, predict, predict_single, threshold_loss,
)
from .config import TrainConfig
from .corpus import Bag, CorpusStore, compute_bridge_entities
from .encoder import Encoder, MarkedSequence, Vocabulary, entity_node_rep, mark_entities, pool_mention
from .entity_filter import score_path_bridges
from .relation_attention import (
    AttentionStack, EntityNode, RelationMatrix, RelationProjector, build_relation_matrix,
    extract_target_relations, inner_path_mask,
)
from .semantic_filter import (
    EmbeddingSimilarity, FilteredContext, TfidfSimilarity, build_context, derive_seed, snippet_context,
)

log = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class PreparedPath:
    index: int  # position in the original bag
    token_ids: torch.Tensor
    nodes: list[tuple[str, str, list[tuple[int, int]]]]  # (role, entity_id, spans)
    context: FilteredContext | None = None


@dataclass
class PreparedBag:
    bag_id: str
    paths: list[PreparedPath]
    labels: frozenset[str]
    label_ids: list[int]
    pos_mask: torch.Tensor

    @property
    def n_nodes(self) -> int:
        return sum(len(p.nodes) for p in self.paths)


def make_similarity(store: CorpusStore, cfg, embeddings_path=None):
    if embeddings_path:
        return EmbeddingSimilarity.from_jsonl(embeddings_path)
    if cfg.similarity != "tfidf":
        raise ValueError(f"unknown similarity provider {cfg.similarity!r}")
    return TfidfSimilarity(store)


def path_context(bag: Bag, i: int, store: CorpusStore, cfg: TrainConfig, sim) -> FilteredContext:
    path = bag.paths[i]
    if cfg.no_ic:
        return snippet_context(path, bag, store, cfg.snippet_window, cfg.max_tokens)
    return build_context(path, bag, store, cfg.filter_config(), sim,
                         derive_seed(cfg.seed, bag.bag_id, i), cfg.max_tokens)


def prepare_path(bag: Bag, i: int, ctx: FilteredContext, store: CorpusStore, vocab: Vocabulary,
                 cfg: TrainConfig) -> PreparedPath | None:
    head, tail = bag.head_entity_id, bag.tail_entity_id
    path = bag.paths[i]
    bridges = compute_bridge_entities(path, store, head, tail)

    def role_of(e):
        if e == head:
            return "head"
        if e == tail:
            return "tail"
        return "bridge" if e in bridges else "other"

    marked: MarkedSequence = mark_entities(ctx, store, role_of if cfg.role_markers else None)

    def spans(e):
        return [(s.start, s.end) for s in marked.spans_of(e)]

    if not spans(head) or not spans(tail):
        log.warning("bag %s path %d: target mention lost in context; path skipped", bag.bag_id, i)
        return None
    nodes = [("head", head, spans(head)), ("tail", tail, spans(tail))]
    if not cfg.no_br:
        scores = score_path_bridges(path, bag, store, cfg.filter_config())
        alive = [e for e in bridges if spans(e)]
        alive.sort(key=lambda e: (-scores[e].total, e))
        nodes += [("bridge", e, spans(e)) for e in sorted(alive[: cfg.max_bridges])]
    ids = torch.tensor(vocab.ids(marked.tokens), dtype=torch.long)
    return PreparedPath(i, ids, nodes, ctx)


def prepare_bag(bag: Bag, store: CorpusStore, vocab: Vocabulary, cfg: TrainConfig, sim) -> PreparedBag:
    relations = store.schema.relations
    paths = []
    for i in range(min(len(bag.paths), cfg.max_paths)):
        ctx = path_context(bag, i, store, cfg, sim)
        pp = prepare_path(bag, i, ctx, store, vocab, cfg)
        if pp is not None:
            paths.append(pp)
    label_ids = sorted(relations.index(r) for r in bag.labels)
    mask = torch.zeros(len(relations), dtype=torch.bool)
    mask[label_ids] = True
    return PreparedBag(bag.bag_id, paths, bag.labels, label_ids, mask)


def prepare_store(store: CorpusStore, vocab: Vocabulary, cfg: TrainConfig, embeddings_path=None):
    sim = None if cfg.no_ic else make_similarity(store, cfg, embeddings_path)
    return [prepare_bag(b, store, vocab, cfg, sim) for b in store.bags]


@dataclass
class BagOutput:
    path_logits: torch.Tensor
    bag_logits: torch.Tensor
    matrix: RelationMatrix
    attention: list[torch.Tensor] = field(default_factory=list)


class CrossPathModel(nn.Module):
    def __init__(self, vocab_size: int, n_relations: int, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.n_relations = n_relations
        self.encoder = Encoder(vocab_size, cfg.d, cfg.window)
        self.relation = RelationProjector(cfg.d)
        self.attention = AttentionStack(cfg.d, cfg.layers, cfg.heads or None, cfg.ffn_mult)
        self.classifier = Classifier(cfg.d, n_relations + (1 if cfg.no_th else 0))
        self.to(DTYPES[cfg.dtype])

    def entity_nodes(self, pb: PreparedBag) -> list[EntityNode]:
        nodes = []
        for k, pp in enumerate(pb.paths):
            reps = self.encoder(pp.token_ids)
            for role, ent, spans in pp.nodes:
                rep = entity_node_rep(pool_mention(reps, s, e) for s, e in spans)
                nodes.append(EntityNode(k, role, ent, rep))
        return nodes

    def forward(self, pb: PreparedBag, return_attention: bool = False) -> BagOutput:
        if not pb.paths:
            raise ValueError(f"bag {pb.bag_id}: no usable paths")
        nodes = self.entity_nodes(pb)
        m = build_relation_matrix(nodes, self.relation)
        mask = inner_path_mask(nodes) if self.cfg.no_cp else None
        flat, weights = self.attention(m.flat, mask, return_weights=True)
        m = m.with_flat(flat)
        path_logits = self.classifier(torch.stack(extract_target_relations(m)))
        bag_logits = aggregate_bag(path_logits)
        return BagOutput(path_logits, bag_logits, m, weights if return_attention else [])

    def loss(self, out: BagOutput, pb: PreparedBag) -> torch.Tensor:
        if self.cfg.no_th:
            return cross_entropy_loss(out.bag_logits, pb.label_ids)
        return threshold_loss(out.bag_logits, pb.pos_mask, self.cfg.loss_config())

    def predict(self, out: BagOutput, relations) -> set[str]:
        if self.cfg.no_th:
            return predict_single(out.bag_logits, relations)
        return predict(out.bag_logits, self.cfg.theta, relations)

    def ranking_scores(self, out: BagOutput) -> torch.Tensor:
        """Per-relation scores used for ranked metrics (N/A slot dropped)."""
        if self.cfg.no_th:
            return torch.log_softmax(out.bag_logits, 0)[: self.n_relations]
        return out.bag_logits


# ---------------------------------------------------------------- flat view

def named_groups(model: nn.Module) -> list[tuple[str, torch.Tensor]]:
    return [(n, p) for n, p in model.named_parameters()]


def flat_params(model: nn.Module) -> torch.Tensor:
    return torch.nn.utils.parameters_to_vector(model.parameters()).detach().clone()


def set_flat_params(model: nn.Module, vec: torch.Tensor) -> None:
    torch.nn.utils.vector_to_parameters(vec, model.parameters())


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
