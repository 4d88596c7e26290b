"""The end-to-end link predictor: two graph encoders plus the decoder.

Given a KG and a masked query, the predictor builds (or is handed) the
relation and entity foundation graphs, encodes each conditioned on the
query's visible relations and entities, assembles the fact sequence and
scores every entity of the vocabulary.  Parameters attach only to
interaction types, layer maps and bias types, never to vocabulary items,
so the same weights score any graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import autodiff as ad
from . import decoder as dec
from . import encoder as enc
from .autodiff import ParamStore, Value
from .errors import ConfigError, VocabularyError
from .foundation import (EntInteraction, FoundationGraph, InteractionConfig,
                         RelInteraction, build_entity_graph, build_relation_graph, preset)
from .model import Hkg, QueryFact

PARALLEL = "parallel"
RELATION_DRIVEN = "relation-driven"  # relation states gate the entity messages

STRUCTURES = (PARALLEL, RELATION_DRIVEN)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs shared by training, evaluation and prediction."""

    width: int = 32
    encoder_depth: int = 4
    head_count: int = 4
    decoder_depth: int = 2
    interactions: InteractionConfig = field(default_factory=InteractionConfig)
    structure: str = PARALLEL
    encoder_residual: bool = False
    encoder_layer_norm: bool = False
    zero_other_bias: bool = False

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.structure!r}; "
                              f"expected one of {STRUCTURES}")
        for name in ("width", "encoder_depth", "head_count", "decoder_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict[str, str]:
        return {
            "width": str(self.width),
            "encoder_depth": str(self.encoder_depth),
            "head_count": str(self.head_count),
            "decoder_depth": str(self.decoder_depth),
            "relation_set": ",".join(sorted(t.value for t in self.interactions.relation_set)),
            "entity_set": ",".join(sorted(t.value for t in self.interactions.entity_set)),
            "structure": self.structure,
            "encoder_residual": str(self.encoder_residual),
            "encoder_layer_norm": str(self.encoder_layer_norm),
            "zero_other_bias": str(self.zero_other_bias),
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "ModelConfig":
        from .foundation import EntInteraction, RelInteraction
        rel = frozenset(t for t in RelInteraction if t.value in d["relation_set"].split(","))
        ent = frozenset(t for t in EntInteraction if t.value in d["entity_set"].split(","))
        return cls(
            width=int(d["width"]),
            encoder_depth=int(d["encoder_depth"]),
            head_count=int(d["head_count"]),
            decoder_depth=int(d["decoder_depth"]),
            interactions=InteractionConfig(rel, ent),
            structure=d["structure"],
            encoder_residual=d["encoder_residual"] == "True",
            encoder_layer_norm=d["encoder_layer_norm"] == "True",
            zero_other_bias=d["zero_other_bias"] == "True",
        )


def config_for_ablation(name: str) -> ModelConfig:
    """Map an ablation name to a model configuration.

    Interaction presets keep the parallel-encoder structure; the
    ``ultra-alike`` name selects the rewired structure where encoded
    relation states gate the entity-graph messages.
    """
    if name.lower().replace("_", "-") == "ultra-alike":
        return ModelConfig(structure=RELATION_DRIVEN)
    return ModelConfig(interactions=preset(name))


@dataclass
class GraphPair:
    relation_graph: FoundationGraph
    entity_graph: FoundationGraph


class LinkPredictor:
    """Scores masked-entity queries against any hyper-relational KG."""

    def __init__(self, cfg: ModelConfig, store: ParamStore, rel_params, ent_params,
                 dec_params):
        self.cfg = cfg
        self.store = store
        self.rel_params = rel_params
        self.ent_params = ent_params
        self.dec_params = dec_params

    @classmethod
    def build(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> "LinkPredictor":
        """Fresh parameters, deterministically initialized from ``seed``."""
        rng = np.random.default_rng(seed)
        store = ParamStore()
        rel_alphabet = tuple(t for t in RelInteraction if t in cfg.interactions.relation_set)
        ent_alphabet = tuple(t for t in EntInteraction if t in cfg.interactions.entity_set)
        rel_params = enc.init_encoder_params(
            store, "rel_encoder", rel_alphabet, cfg.encoder_depth, cfg.width, rng,
            dtype=dtype, residual=cfg.encoder_residual, layer_norm=cfg.encoder_layer_norm)
        ent_params = enc.init_encoder_params(
            store, "ent_encoder", ent_alphabet, cfg.encoder_depth, cfg.width, rng,
            dtype=dtype, residual=cfg.encoder_residual, layer_norm=cfg.encoder_layer_norm,
            typed_messages=(cfg.structure == PARALLEL))
        dec_params = dec.init_decoder_params(
            store, "decoder", cfg.width, cfg.head_count, cfg.decoder_depth, rng,
            dtype=dtype, zero_other_bias=cfg.zero_other_bias)
        return cls(cfg, store, rel_params, ent_params, dec_params)

    @classmethod
    def from_store(cls, cfg: ModelConfig, store: ParamStore) -> "LinkPredictor":
        """Rebind loaded parameters; names must match :meth:`build`'s layout."""
        fresh = cls.build(cfg, seed=0)
        for name, value in fresh.store.items():
            if name not in store:
                raise ConfigError(f"checkpoint is missing parameter {name!r}")
            if store[name].shape != value.shape:
                raise ConfigError(f"checkpoint parameter {name!r} has shape "
                                  f"{store[name].shape}, expected {value.shape}")
            value.data = store[name].data
        return fresh

    def build_graphs(self, kg: Hkg, exclude: Iterable[int] | None = None) -> GraphPair:
        annotated = self.cfg.structure == RELATION_DRIVEN
        return GraphPair(
            relation_graph=build_relation_graph(kg, self.cfg.interactions, exclude),
            entity_graph=build_entity_graph(kg, self.cfg.interactions, exclude,
                                            with_fact_relations=annotated),
        )

    def _query_nodes(self, kg: Hkg, query: QueryFact) -> tuple[set[int], set[int]]:
        rel_nodes: set[int] = set()
        for r in query.base.relations():
            idx = kg.relation_index.get(r)
            if idx is None:
                raise VocabularyError(f"relation {r!r} not in the graph vocabulary")
            rel_nodes.add(idx)
        ent_nodes: set[int] = set()
        for e in query.unmasked_entities():
            idx = kg.entity_index.get(e)
            if idx is None:
                raise VocabularyError(f"entity {e!r} not in the graph vocabulary")
            ent_nodes.add(idx)
        return rel_nodes, ent_nodes

    def query_logits(self, kg: Hkg, query: QueryFact, graphs: GraphPair) -> Value:
        """Unnormalized scores over all entities of ``kg``, one tape."""
        rel_nodes, ent_nodes = self._query_nodes(kg, query)
        rel_states = enc.encode(graphs.relation_graph, rel_nodes, self.rel_params)
        if self.cfg.structure == PARALLEL:
            ent_states = enc.encode(graphs.entity_graph, ent_nodes, self.ent_params)
        else:
            ent_states = enc.encode_with_edge_states(graphs.entity_graph, ent_nodes,
                                                     self.ent_params, rel_states)
        seq, layout = dec.assemble_sequence(query, kg, rel_states, ent_states,
                                            self.dec_params)
        decoded = dec.decode(seq, layout, self.dec_params)
        x_m = dec.mask_vector(decoded, layout)
        return dec.entity_logits(x_m, ent_states, self.dec_params.out_bias)

    # Scoring-model protocol used by the evaluator.
    def prepare(self, kg: Hkg):
        return (kg, self.build_graphs(kg))

    def entity_scores(self, ctx, query: QueryFact) -> np.ndarray:
        kg, graphs = ctx
        probs = ad.rowwise_softmax(self.query_logits(kg, query, graphs))
        return probs.data[0].copy()
