"""Masked training over the training graph.

Every query is scored against the full entity vocabulary and optimized with
cross-entropy; nothing in this module corrupts facts or samples negatives,
and the per-step candidate-set sizes are recorded so that property can be
asserted from the outside.

By default the leakage guard is on: while encoding a query, the query's own
source fact is excluded from both foundation graphs, so the encoders cannot
read the answer off edges the fact itself induced.  Graph builds are cached
per excluded fact, which changes nothing semantically.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ParamStore, clip_global_norm
from .errors import ConfigError, DataError
from .evaluation import bundle_known_facts, evaluate
from .foundation import preset
from .io import DatasetBundle
from .model import Hkg, QueryFact, queries_from_facts
from .predictor import PARALLEL, GraphPair, LinkPredictor, ModelConfig


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    step_size: float = 1e-3
    seed: int = 0
    interactions: str = "default"
    encoder_depth: int = 4
    width: int = 32
    head_count: int = 4
    decoder_depth: int = 2
    checkpoint_every: int = 10
    leakage_guard: bool = True
    structure: str = PARALLEL
    grad_clip: float = 1.0

    def __post_init__(self):
        for name in ("batch_size", "step_size", "encoder_depth", "width",
                     "head_count", "decoder_depth", "checkpoint_every", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        preset(self.interactions)  # fail early on unknown names

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            width=self.width,
            encoder_depth=self.encoder_depth,
            head_count=self.head_count,
            decoder_depth=self.decoder_depth,
            interactions=preset(self.interactions),
            structure=self.structure,
        )

    def to_dict(self) -> dict[str, str]:
        return {
            "epochs": str(self.epochs),
            "batch_size": str(self.batch_size),
            "step_size": repr(self.step_size),
            "seed": str(self.seed),
            "interactions": self.interactions,
            "encoder_depth": str(self.encoder_depth),
            "width": str(self.width),
            "head_count": str(self.head_count),
            "decoder_depth": str(self.decoder_depth),
            "checkpoint_every": str(self.checkpoint_every),
            "leakage_guard": str(self.leakage_guard),
            "structure": self.structure,
            "grad_clip": repr(self.grad_clip),
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "TrainConfig":
        return cls(
            epochs=int(d["epochs"]),
            batch_size=int(d["batch_size"]),
            step_size=float(d["step_size"]),
            seed=int(d["seed"]),
            interactions=d["interactions"],
            encoder_depth=int(d["encoder_depth"]),
            width=int(d["width"]),
            head_count=int(d["head_count"]),
            decoder_depth=int(d["decoder_depth"]),
            checkpoint_every=int(d["checkpoint_every"]),
            leakage_guard=d["leakage_guard"] == "True",
            structure=d["structure"],
            grad_clip=float(d["grad_clip"]),
        )


@dataclass
class TrainStats:
    """Side channel for invariants: every loss and candidate-set size seen."""

    epoch_losses: list[float] = field(default_factory=list)
    valid_mrr: list[float] = field(default_factory=list)
    candidate_counts: list[int] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


class _GraphCache:
    """Foundation-graph pairs per excluded fact index, bounded in size."""

    def __init__(self, predictor: LinkPredictor, kg: Hkg, limit: int = 512):
        self.predictor = predictor
        self.kg = kg
        self.limit = limit
        self._cache: dict[int | None, GraphPair] = {}

    def get(self, exclude: int | None) -> GraphPair:
        if exclude not in self._cache:
            if len(self._cache) >= self.limit:
                self._cache.pop(next(iter(self._cache)))
            excl = None if exclude is None else (exclude,)
            self._cache[exclude] = self.predictor.build_graphs(self.kg, excl)
        return self._cache[exclude]


def query_loss(predictor: LinkPredictor, kg: Hkg, query: QueryFact,
               graphs: GraphPair, stats: TrainStats | None = None):
    """Cross-entropy of the answer against all entities of ``kg``."""
    answer_idx = kg.entity_index.get(query.answer)
    if answer_idx is None:
        raise DataError(f"query answer {query.answer!r} missing from the vocabulary")
    logits = predictor.query_logits(kg, query, graphs)
    if stats is not None:
        stats.candidate_counts.append(logits.shape[1])
    return ad.cross_entropy(logits, answer_idx)


def train_step(predictor: LinkPredictor, batch: Sequence[QueryFact], kg_train: Hkg,
               optimizer: Adam, cfg: TrainConfig, cache: _GraphCache,
               source_facts: Sequence[int | None] | None = None,
               stats: TrainStats | None = None) -> float:
    """One optimizer step on the mean loss of a query batch.

    ``source_facts`` names each query's source fact index so the leakage
    guard can exclude it from the graphs used to encode that query.
    """
    if source_facts is None:
        source_facts = [None] * len(batch)
    losses = []
    for query, src in zip(batch, source_facts):
        exclude = src if cfg.leakage_guard else None
        graphs = cache.get(exclude)
        losses.append(query_loss(predictor, kg_train, query, graphs, stats))
    total = losses[0] if len(losses) == 1 else ad.add(losses[0], losses[1])
    for extra in losses[2:]:
        total = ad.add(total, extra)
    loss = ad.mul(total, ad.as_value(np.asarray(1.0 / len(losses), dtype=total.data.dtype)))
    predictor.store.zero_grads()
    ad.backward(loss)
    clip_global_norm(predictor.store.values(), cfg.grad_clip)
    optimizer.step()
    value = float(loss.data[0, 0])
    if stats is not None:
        stats.step_losses.append(value)
    return value


@dataclass
class Checkpoint:
    """A parameter snapshot plus everything needed to rebuild and resume."""

    model_config: ModelConfig
    train_config: TrainConfig
    store: ParamStore
    epoch: int
    loss_history: list[float]
    valid_history: list[float]

    def predictor(self) -> LinkPredictor:
        return LinkPredictor.from_store(self.model_config, self.store)

    def save(self, path: str | Path) -> None:
        """Write the binary parameter file and its metadata sidecar."""
        path = Path(path)
        self.store.save(path)
        lines = ["[model]"]
        lines += [f"{k} = {v}" for k, v in self.model_config.to_dict().items()]
        lines.append("[train]")
        lines += [f"{k} = {v}" for k, v in self.train_config.to_dict().items()]
        lines.append("[state]")
        lines.append(f"epoch = {self.epoch}")
        lines.append("[history]")
        for i, loss in enumerate(self.loss_history):
            mrr = self.valid_history[i] if i < len(self.valid_history) else float("nan")
            lines.append(f"{i}\t{loss:.6f}\t{mrr:.6f}")
        Path(str(path) + ".meta").write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        store = ParamStore.load(path)
        sections: dict[str, dict[str, str]] = {"model": {}, "train": {}, "state": {}}
        history: list[tuple[float, float]] = []
        current = None
        for line in Path(str(path) + ".meta").read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                continue
            if current == "history":
                _, loss, mrr = line.split("\t")
                history.append((float(loss), float(mrr)))
            elif current in sections and " = " in line:
                k, v = line.split(" = ", 1)
                sections[current][k] = v
        return cls(
            model_config=ModelConfig.from_dict(sections["model"]),
            train_config=TrainConfig.from_dict(sections["train"]),
            store=store,
            epoch=int(sections["state"].get("epoch", 0)),
            loss_history=[h[0] for h in history],
            valid_history=[h[1] for h in history],
        )


def fit(bundle: DatasetBundle, cfg: TrainConfig, out_dir: str | Path | None = None,
        log: Callable[[str], None] | None = None,
        stats: TrainStats | None = None,
        stop_when: Callable[[int, float, float], bool] | None = None) -> Checkpoint:
    """Train on the bundle's training graph; keep the best-valid snapshot.

    Queries are regenerated and reshuffled every epoch under the configured
    seed, so two runs with identical inputs produce bit-identical parameter
    trajectories.  ``stop_when(epoch, loss, valid_mrr)`` may end training
    early; the returned checkpoint is the best-valid one when validation
    queries exist, otherwise the final state.
    """
    stats = stats if stats is not None else TrainStats()
    model_cfg = cfg.model_config()
    predictor = LinkPredictor.build(model_cfg, seed=cfg.seed)
    optimizer = Adam(predictor.store.values(), lr=cfg.step_size)
    rng = np.random.default_rng(cfg.seed)
    kg = bundle.train
    queries: list[QueryFact] = []
    source_of: list[int] = []
    for fi, fact in enumerate(kg.facts):
        for q in queries_from_facts([fact]):
            queries.append(q)
            source_of.append(fi)
    if not queries:
        raise DataError("training graph has no facts to derive queries from")
    valid_queries = queries_from_facts(bundle.valid)
    known = bundle_known_facts(bundle)
    cache = _GraphCache(predictor, kg)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(model_cfg, cfg, _copy_store(predictor.store), epoch,
                          list(stats.epoch_losses), list(stats.valid_mrr))

    best: Checkpoint | None = None
    best_mrr = -1.0
    epochs_run = 0
    started = time.monotonic()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(queries))
        epoch_loss = 0.0
        steps = 0
        for start in range(0, len(order), cfg.batch_size):
            picked = order[start:start + cfg.batch_size]
            batch = [queries[i] for i in picked]
            sources = [source_of[i] for i in picked]
            epoch_loss += train_step(predictor, batch, kg, optimizer, cfg, cache,
                                     sources, stats)
            steps += 1
        epoch_loss /= max(steps, 1)
        stats.epoch_losses.append(epoch_loss)
        epochs_run = epoch + 1
        valid_mrr = float("nan")
        if valid_queries:
            valid_mrr = evaluate(predictor, bundle.inference, valid_queries, known).mrr_all
            stats.valid_mrr.append(valid_mrr)
            if valid_mrr > best_mrr:
                best_mrr = valid_mrr
                best = snapshot(epochs_run)
        if log is not None:
            log(f"epoch {epochs_run}/{cfg.epochs} loss={epoch_loss:.4f} "
                f"valid_mrr={valid_mrr:.4f} elapsed={time.monotonic() - started:.1f}s")
        if out is not None and epochs_run % cfg.checkpoint_every == 0:
            snapshot(epochs_run).save(out / f"ckpt_epoch{epochs_run:04d}.bin")
        if stop_when is not None and stop_when(epochs_run, epoch_loss, valid_mrr):
            break
    final = snapshot(epochs_run)
    if out is not None:
        final.save(out / "ckpt_final.bin")
        (best or final).save(out / "ckpt_best.bin")
    return best or final


def _copy_store(store: ParamStore) -> ParamStore:
    return ParamStore.from_bytes(store.to_bytes())


def config_hash(pairs: dict[str, str]) -> str:
    text = "\n".join(f"{k} = {v}" for k, v in sorted(pairs.items()))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
