"""Hybrid scoring: structural signal, score fusion, matrix, top-k filtering."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .context import DEFAULT_VERBALIZATION_BUDGET, ContextSet, verbalize
from .embed import EmbeddingProvider, embed_texts, fused_embedding, semantic_score
from .graph import ClassDescriptor, Iri


@dataclass(frozen=True)
class Config:
    """Pipeline hyper-parameters with the published defaults."""

    alpha: float = 0.3  # label vs rich embedding trade-off
    beta: float = 0.7  # semantic vs structural trade-off
    similarity_threshold: float = 0.90  # candidate filter on the hybrid score
    theta_jw: float = 0.9  # lexical-boost trigger
    hops: int = 5  # context expansion depth
    k: int = 3  # candidates kept per source
    verbalization_budget: int = DEFAULT_VERBALIZATION_BUDGET

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "similarity_threshold", "theta_jw"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in known})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def structural_signal(ps: set[str] | frozenset[str], pt: set[str] | frozenset[str]) -> float:
    """Jaccard similarity of two property-name sets; 0 when both are empty."""
    if not ps and not pt:
        return 0.0
    return len(ps & pt) / len(ps | pt)


def hybrid_score(sem: float, structural: float, beta: float) -> float:
    """Convex combination of the semantic and structural signals."""
    return beta * sem + (1.0 - beta) * structural


@dataclass(frozen=True)
class SimilarityMatrix:
    sources: tuple[ClassDescriptor, ...]
    targets: tuple[ClassDescriptor, ...]
    scores: np.ndarray
    semantic_part: np.ndarray
    structural_part: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.sources), len(self.targets))


@dataclass(frozen=True)
class Candidate:
    source: Iri
    target: Iri
    semantic: float
    structural: float
    hybrid: float
    rank: int = 0


def build_similarity_matrix(
    sources: list[tuple[ClassDescriptor, ContextSet]],
    targets: list[tuple[ClassDescriptor, ContextSet]],
    cfg: Config,
    provider: EmbeddingProvider,
) -> SimilarityMatrix:
    """Score every source-target class pair.

    Embeddings are computed once per class (label text and rich text), never
    per pair; a provider failure aborts before any matrix is materialized.
    """
    if not sources or not targets:
        raise ValueError("similarity matrix needs at least one source and one target")

    def class_vectors(entries: list[tuple[ClassDescriptor, ContextSet]]) -> list[np.ndarray]:
        texts: list[str] = []
        for descriptor, ctx in entries:
            texts.append(descriptor.label)
            texts.append(verbalize(descriptor, ctx, cfg.verbalization_budget))
        raw = embed_texts(provider, texts)
        return [
            fused_embedding(raw[2 * i], raw[2 * i + 1], cfg.alpha)
            for i in range(len(entries))
        ]

    src_vecs = class_vectors(sources)
    tgt_vecs = class_vectors(targets)
    src_props = [d.property_names() for d, _ in sources]
    tgt_props = [d.property_names() for d, _ in targets]

    n, m = len(sources), len(targets)
    semantic = np.zeros((n, m), dtype=np.float64)
    structural = np.zeros((n, m), dtype=np.float64)
    for i, (src_desc, _) in enumerate(sources):
        for j, (tgt_desc, _) in enumerate(targets):
            semantic[i, j] = semantic_score(
                src_vecs[i], tgt_vecs[j], src_desc.label, tgt_desc.label, cfg.theta_jw
            )
            structural[i, j] = structural_signal(src_props[i], tgt_props[j])
    scores = cfg.beta * semantic + (1.0 - cfg.beta) * structural
    return SimilarityMatrix(
        sources=tuple(d for d, _ in sources),
        targets=tuple(d for d, _ in targets),
        scores=scores,
        semantic_part=semantic,
        structural_part=structural,
    )


def top_k_filtered(
    matrix: SimilarityMatrix, k: int, theta: float
) -> dict[Iri, list[Candidate]]:
    """Per source: the k best targets, then drop those under the threshold.

    Ties break on the target IRI (ascending) so runs are reproducible.  Every
    source appears in the result, possibly with an empty list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    result: dict[Iri, list[Candidate]] = {}
    for i, src in enumerate(matrix.sources):
        order = sorted(
            range(len(matrix.targets)),
            key=lambda j: (-matrix.scores[i, j], matrix.targets[j].iri.value),
        )
        kept = [
            Candidate(
                source=src.iri,
                target=matrix.targets[j].iri,
                semantic=float(matrix.semantic_part[i, j]),
                structural=float(matrix.structural_part[i, j]),
                hybrid=float(matrix.scores[i, j]),
            )
            for j in order[:k]
            if matrix.scores[i, j] >= theta
        ]
        result[src.iri] = [
            Candidate(
                source=c.source,
                target=c.target,
                semantic=c.semantic,
                structural=c.structural,
                hybrid=c.hybrid,
                rank=rank,
            )
            for rank, c in enumerate(kept, start=1)
        ]
    return result


MATRIX_TSV_HEADER = "source\ttarget\tsemantic\tstructural\thybrid"


def matrix_to_tsv(matrix: SimilarityMatrix) -> str:
    """Row-major TSV dump with full-precision floats (debugging oracle)."""
    lines = [MATRIX_TSV_HEADER]
    for i, src in enumerate(matrix.sources):
        for j, tgt in enumerate(matrix.targets):
            lines.append(
                f"{src.iri.value}\t{tgt.iri.value}\t"
                f"{float(matrix.semantic_part[i, j])!r}\t"
                f"{float(matrix.structural_part[i, j])!r}\t"
                f"{float(matrix.scores[i, j])!r}"
            )
    return "\n".join(lines) + "\n"
