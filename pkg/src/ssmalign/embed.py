"""Embedding providers, string similarity, and the boosted semantic score.

Class similarity fuses a label embedding with a rich-context embedding and is
lexically boosted: when two labels are nearly identical by Jaro-Winkler, the
semantic score is floored at 0.95.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
DEFAULT_SEED = 42
DEFAULT_BATCH_SIZE = 64
JW_BOOST_FLOOR = 0.95


class ProviderError(RuntimeError):
    """A provider returned an unusable response or configuration is invalid."""


class ProviderTransportError(ProviderError):
    """Network-level failure; the only error class that is retried."""


# --------------------------------------------------------------------------
# String similarity
# --------------------------------------------------------------------------


def jaro_winkler(a: str, b: str) -> float:
    """Jaro similarity with the Winkler prefix bonus (max prefix 4, scale
    0.1), case-insensitive after trimming.  Two empty strings compare as 1."""
    s1 = a.strip().lower()
    s2 = b.strip().lower()
    if not s1 and not s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    len1, len2 = len(s1), len(s2)
    window = max(len1, len2) // 2 - 1
    matched1 = [False] * len1
    matched2 = [False] * len2
    matches = 0
    for i in range(len1):
        lo = max(0, i - window)
        hi = min(i + window + 1, len2)
        for j in range(lo, hi):
            if matched2[j] or s1[i] != s2[j]:
                continue
            matched1[i] = matched2[j] = True
            matches += 1
            break
    if matches == 0:
        return 0.0
    transpositions = 0
    j = 0
    for i in range(len1):
        if not matched1[i]:
            continue
        while not matched2[j]:
            j += 1
        if s1[i] != s2[j]:
            transpositions += 1
        j += 1
    transpositions //= 2
    jaro = (
        matches / len1 + matches / len2 + (matches - transpositions) / matches
    ) / 3.0
    prefix = 0
    for c1, c2 in zip(s1[:4], s2[:4]):
        if c1 != c2:
            break
        prefix += 1
    return jaro + 0.1 * prefix * (1.0 - jaro)


# --------------------------------------------------------------------------
# Vectors
# --------------------------------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def deterministic_embed(text: str, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Seeded hashing bag-of-words vector, unit length.

    Each lowercase token is hashed to a bucket and a sign; empty text maps to
    the first basis vector so downstream cosine math never sees a zero
    vector.
    """
    if dim < 8:
        raise ValueError("embedding dimension must be >= 8")
    vec = np.zeros(dim, dtype=np.float64)
    key = seed.to_bytes(8, "little", signed=True)
    tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
    for token in tokens:
        digest = hashlib.blake2b(token.encode("utf-8"), key=key, digest_size=8).digest()
        h = int.from_bytes(digest, "little")
        bucket = (h >> 1) % dim
        sign = 1.0 if h & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


def fused_embedding(label_vec: np.ndarray, rich_vec: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination alpha*label + (1-alpha)*rich, re-normalized."""
    if label_vec.shape != rich_vec.shape:
        raise ValueError(
            f"dimension mismatch: {label_vec.shape} vs {rich_vec.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    fused = alpha * label_vec + (1.0 - alpha) * rich_vec
    norm = float(np.linalg.norm(fused))
    if norm < 1e-12:
        raise ProviderError(
            "fused embedding collapsed to zero (degenerate provider output)"
        )
    return fused / norm


def semantic_score(
    vs: np.ndarray,
    vt: np.ndarray,
    label_s: str,
    label_t: str,
    theta_jw: float = 0.9,
) -> float:
    """Clamped cosine similarity of the fused vectors, floored at 0.95 when
    the labels are lexically near-identical."""
    if vs.shape != vt.shape:
        raise ValueError(f"dimension mismatch: {vs.shape} vs {vt.shape}")
    base = float(np.clip(np.dot(vs, vt), 0.0, 1.0))
    if jaro_winkler(label_s, label_t) > theta_jw:
        return max(base, JW_BOOST_FLOOR)
    return base


# --------------------------------------------------------------------------
# Providers
# --------------------------------------------------------------------------


class EmbeddingProvider:
    """Interface: maps batches of texts to equal-dimension unit vectors."""

    model_id: str
    dim: int

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class HashEmbeddingProvider(EmbeddingProvider):
    """Offline, fully deterministic provider used for tests and mock runs."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        self.dim = dim
        self.seed = seed
        self.model_id = f"hash-{dim}-{seed}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [deterministic_embed(t, self.dim, self.seed) for t in texts]


class HttpEmbeddingProvider(EmbeddingProvider):
    """Remote provider speaking ``POST {"model", "input"} ->
    {"data": [{"embedding": [...]}]}``; credentials come from SSM_EMBED_KEY."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        timeout: float = 30.0,
        max_retries: int = 2,
        api_key_env: str = "SSM_EMBED_KEY",
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.dim = dim
        self.timeout = timeout
        self.max_retries = max_retries
        self.api_key = os.environ.get(api_key_env, "")

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        payload = {"model": self.model_id, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(
                    self.base_url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code >= 500:
                last_error = ProviderTransportError(
                    f"embedding endpoint returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"embedding endpoint returned {response.status_code}: "
                    f"{response.text[:200]}"
                )
            try:
                data = response.json()["data"]
                vectors = [
                    np.asarray(item["embedding"], dtype=np.float64) for item in data
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed embedding response: {exc}") from None
            if len(vectors) != len(texts):
                raise ProviderError(
                    f"embedding endpoint returned {len(vectors)} vectors "
                    f"for {len(texts)} inputs"
                )
            out = []
            for vec in vectors:
                norm = float(np.linalg.norm(vec))
                out.append(vec / norm if norm > 0 else vec)
            return out
        raise ProviderTransportError(
            f"embedding endpoint unreachable after {self.max_retries + 1} attempts: "
            f"{last_error}"
        )


def _text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class CachingEmbeddingProvider(EmbeddingProvider):
    """Wraps any provider with an in-memory + optional on-disk cache keyed by
    (model id, exact text)."""

    def __init__(self, inner: EmbeddingProvider, cache_path: str | None = None):
        self.inner = inner
        self.model_id = inner.model_id
        self.dim = inner.dim
        self.cache_path = cache_path
        self._lock = threading.Lock()
        self._memory: dict[str, np.ndarray] = {}
        if cache_path and os.path.exists(cache_path):
            self._load(cache_path)

    def _load(self, path: str) -> None:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("skipping corrupt cache line in %s", path)
                    continue
                if record.get("model") != self.model_id:
                    continue
                self._memory[record["text_hash"]] = np.asarray(
                    record["vector"], dtype=np.float64
                )

    def _persist(self, text_hash: str, vector: np.ndarray) -> None:
        if not self.cache_path:
            return
        record = {
            "model": self.model_id,
            "text_hash": text_hash,
            "vector": [float(x) for x in vector],
        }
        with open(self.cache_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record) + "\n")

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        with self._lock:
            hashes = [_text_hash(t) for t in texts]
            missing = [
                (i, t) for i, (t, h) in enumerate(zip(texts, hashes))
                if h not in self._memory
            ]
            if missing:
                fresh = self.inner.embed_batch([t for _, t in missing])
                for (i, _), vec in zip(missing, fresh):
                    self._memory[hashes[i]] = vec
                    self._persist(hashes[i], vec)
            return [self._memory[h].copy() for h in hashes]


def embed_texts(
    provider: EmbeddingProvider, texts: list[str], batch_size: int = DEFAULT_BATCH_SIZE
) -> list[np.ndarray]:
    """Batch helper; preserves input order across batches."""
    vectors: list[np.ndarray] = []
    for start in range(0, len(texts), batch_size):
        vectors.extend(provider.embed_batch(texts[start : start + batch_size]))
    return vectors
