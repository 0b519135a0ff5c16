"""LLM validation of top-k candidates into SKOS relations.

Each source with surviving candidates gets exactly one provider call; the
response is parsed against a mandated grammar with a tolerant fallback.  A
deterministic rule-based mock provider keeps the whole pipeline testable
offline.
"""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .embed import ProviderError, ProviderTransportError
from .graph import SKOS_NS, Iri
from .match import Candidate, Config

logger = logging.getLogger(__name__)

DEFAULT_PARALLELISM = 4


class RelationKind(Enum):
    EXACT_MATCH = "exactMatch"
    CLOSE_MATCH = "closeMatch"
    BROAD_MATCH = "broadMatch"
    NONE = "none"

    @property
    def skos_iri(self) -> str | None:
        if self is RelationKind.NONE:
            return None
        return SKOS_NS + self.value


_RELATION_BY_KEYWORD = {
    "exactmatch": RelationKind.EXACT_MATCH,
    "closematch": RelationKind.CLOSE_MATCH,
    "broadmatch": RelationKind.BROAD_MATCH,
}


@dataclass(frozen=True)
class ValidatedMatch:
    source: Iri
    target: Iri | None
    relation: RelationKind
    confidence: float
    justification: str
    provider_id: str
    status: str  # aligned | rejected | no-candidates | provider-error


class LlmProvider:
    """Interface: one prompt in, one completion string out."""

    model_id: str

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


RESPONSE_GRAMMAR = (
    "DECISION: <candidate number or NONE>; "
    "RELATION: <exactMatch|closeMatch|broadMatch>; "
    "REASON: <one sentence>"
)

_PROMPT_HEADER = """\
You are aligning a class from a source model with classes from a target ontology.

Source class:
{source}

Candidates:
{candidates}

Relation definitions:
- exactMatch: the two classes denote the same concept.
- closeMatch: the two classes are highly similar but not interchangeable.
- broadMatch: the source class is narrower than the target class.

Select the best candidate for the source class, or NONE if no candidate fits.
Answer on a single line, exactly in this form:
{grammar}
"""


def build_prompt(
    src_verbalization: str, candidates: list[tuple[str, float]]
) -> str:
    """Deterministic validation prompt for one source and its candidates."""
    if not candidates:
        raise ValueError("cannot build a validation prompt without candidates")
    numbered = "\n".join(
        f"{idx}. (score {score:.4f}) {text}"
        for idx, (text, score) in enumerate(candidates, start=1)
    )
    return _PROMPT_HEADER.format(
        source=src_verbalization, candidates=numbered, grammar=RESPONSE_GRAMMAR
    )


_DECISION_RE = re.compile(r"DECISION\s*:\s*(NONE|\d+)", re.IGNORECASE)
_RELATION_RE = re.compile(
    r"RELATION\s*:\s*(exact\s*match|close\s*match|broad\s*match)", re.IGNORECASE
)
_FALLBACK_RELATION_RE = re.compile(
    r"\b(exact|close|broad)[\s_-]*match\b", re.IGNORECASE
)
_FALLBACK_INDEX_RE = re.compile(r"\b(?:candidate\s*)?(\d{1,3})\b")
_NONE_RE = re.compile(r"\bNONE\b", re.IGNORECASE)


def _normalize_relation(raw: str) -> RelationKind | None:
    return _RELATION_BY_KEYWORD.get(re.sub(r"[\s_-]", "", raw).lower())


def parse_response(text: str, n_candidates: int) -> tuple[int | None, RelationKind]:
    """Recover (choice, relation) from a completion.

    The mandated grammar is tried first; the fallback scans for NONE or a
    standalone candidate index next to a relation keyword.  Anything else is
    (None, none) with a logged diagnostic.
    """
    decision = _DECISION_RE.search(text)
    if decision:
        token = decision.group(1).upper()
        if token == "NONE":
            return None, RelationKind.NONE
        index = int(token)
        relation_match = _RELATION_RE.search(text)
        relation = _normalize_relation(relation_match.group(1)) if relation_match else None
        if 1 <= index <= n_candidates and relation is not None:
            return index, relation
        if not 1 <= index <= n_candidates:
            logger.warning(
                "validator chose candidate %d of %d; treating as unparseable",
                index,
                n_candidates,
            )
            return None, RelationKind.NONE
    if _NONE_RE.search(text):
        return None, RelationKind.NONE
    relation_match = _FALLBACK_RELATION_RE.search(text)
    index_match = _FALLBACK_INDEX_RE.search(text)
    if relation_match and index_match:
        index = int(index_match.group(1))
        relation = _normalize_relation(relation_match.group(0))
        if 1 <= index <= n_candidates and relation is not None:
            return index, relation
    logger.warning("unparseable validator response: %r", text[:120])
    return None, RelationKind.NONE


def normalize_label(label: str) -> str:
    """Case-, underscore- and whitespace-insensitive comparison form."""
    return re.sub(r"[\s_]+", "", label.strip().lower())


def mock_validate(
    source_label: str,
    candidates: list[tuple[str, float]],
    similarity_threshold: float,
) -> tuple[int | None, RelationKind]:
    """Deterministic stand-in for the LLM decision.

    Rules, in order: equal normalized labels on the top candidate win as an
    exact match; a top hybrid score >= 0.95 is an exact match; >= the
    configured threshold is a close match; otherwise NONE.
    """
    if not candidates:
        return None, RelationKind.NONE
    top_label, top_score = candidates[0]
    if normalize_label(top_label) == normalize_label(source_label):
        return 1, RelationKind.EXACT_MATCH
    if top_score >= 0.95:
        return 1, RelationKind.EXACT_MATCH
    if top_score >= similarity_threshold:
        return 1, RelationKind.CLOSE_MATCH
    return None, RelationKind.NONE


_PROMPT_SOURCE_RE = re.compile(r"Source class:\n(.*?)\n\nCandidates:", re.DOTALL)
_PROMPT_CANDIDATE_RE = re.compile(r"^(\d+)\. \(score ([0-9.]+)\) (.*)$", re.MULTILINE)
_CLASS_LABEL_RE = re.compile(r"Class ([^.]*)\.")


def _label_from_verbalization(text: str) -> str:
    found = _CLASS_LABEL_RE.search(text)
    return found.group(1) if found else text.strip()


class MockLlmProvider(LlmProvider):
    """Applies :func:`mock_validate` to the labels and scores it reads back
    out of the prompt, and answers in the mandated grammar."""

    def __init__(self, similarity_threshold: float = 0.90):
        self.model_id = "mock"
        self.similarity_threshold = similarity_threshold

    def complete(self, prompt: str) -> str:
        source_match = _PROMPT_SOURCE_RE.search(prompt)
        source_label = _label_from_verbalization(source_match.group(1)) if source_match else ""
        candidates = [
            (_label_from_verbalization(text), float(score))
            for _, score, text in _PROMPT_CANDIDATE_RE.findall(prompt)
        ]
        choice, relation = mock_validate(source_label, candidates, self.similarity_threshold)
        if choice is None:
            return "DECISION: NONE; RELATION: closeMatch; REASON: No candidate is similar enough."
        reasons = {
            RelationKind.EXACT_MATCH: "Top candidate denotes the same concept.",
            RelationKind.CLOSE_MATCH: "Top candidate is highly similar.",
        }
        return (
            f"DECISION: {choice}; RELATION: {relation.value}; "
            f"REASON: {reasons.get(relation, 'Selected by rule.')}"
        )


class HttpLlmProvider(LlmProvider):
    """Chat-completion style endpoint: ``POST {"model", "messages"}`` returns
    the first choice's message content.  Credentials come from SSM_LLM_KEY."""

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout: float = 60.0,
        max_retries: int = 2,
        api_key_env: str = "SSM_LLM_KEY",
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.api_key = os.environ.get(api_key_env, "")

    def complete(self, prompt: str) -> str:
        import requests

        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(
                    self.base_url, json=payload, headers=headers, timeout=self.timeout
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                logger.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code >= 500:
                last_error = ProviderTransportError(
                    f"LLM endpoint returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"LLM endpoint returned {response.status_code}: {response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed LLM response: {exc}") from None
        raise ProviderTransportError(
            f"LLM endpoint unreachable after {self.max_retries + 1} attempts: {last_error}"
        )


def validate_candidates(
    candidates: dict[Iri, list[Candidate]],
    source_texts: Mapping[Iri, str],
    target_texts: Mapping[Iri, str],
    provider: LlmProvider,
    cfg: Config,
    parallelism: int = DEFAULT_PARALLELISM,
) -> list[ValidatedMatch]:
    """Run one validation call per source with candidates.

    Provider failures mark only the affected source; results come back in
    source-IRI order regardless of completion order.
    """

    def validate_one(source: Iri, cands: list[Candidate]) -> ValidatedMatch:
        if not cands:
            return ValidatedMatch(
                source=source,
                target=None,
                relation=RelationKind.NONE,
                confidence=0.0,
                justification="no candidate reached the similarity threshold",
                provider_id=provider.model_id,
                status="no-candidates",
            )
        prompt = build_prompt(
            source_texts[source],
            [(target_texts[c.target], c.hybrid) for c in cands],
        )
        try:
            response = provider.complete(prompt)
        except ProviderError as exc:
            logger.error("validation failed for %s: %s", source.value, exc)
            return ValidatedMatch(
                source=source,
                target=None,
                relation=RelationKind.NONE,
                confidence=0.0,
                justification=f"provider error: {exc}",
                provider_id=provider.model_id,
                status="provider-error",
            )
        choice, relation = parse_response(response, len(cands))
        if choice is None or relation is RelationKind.NONE:
            return ValidatedMatch(
                source=source,
                target=None,
                relation=RelationKind.NONE,
                confidence=0.0,
                justification=_reason_from(response),
                provider_id=provider.model_id,
                status="rejected",
            )
        chosen = cands[choice - 1]
        return ValidatedMatch(
            source=source,
            target=chosen.target,
            relation=relation,
            confidence=chosen.hybrid,
            justification=_reason_from(response),
            provider_id=provider.model_id,
            status="aligned",
        )

    ordered = sorted(candidates.items(), key=lambda kv: kv[0].value)
    if not ordered:
        return []
    workers = max(1, min(parallelism, len(ordered)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda kv: validate_one(*kv), ordered))
    return results


_REASON_RE = re.compile(r"REASON\s*:\s*(.+)", re.IGNORECASE)


def _reason_from(response: str) -> str:
    found = _REASON_RE.search(response)
    return found.group(1).strip() if found else response.strip()[:200]


def exact_matches(matches: list[ValidatedMatch]) -> list[ValidatedMatch]:
    """The final alignment: strict equivalences only."""
    return [m for m in matches if m.relation is RelationKind.EXACT_MATCH]
