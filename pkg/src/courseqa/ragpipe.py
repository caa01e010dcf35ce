"""Retrieve, assemble a prompt, generate, and log the turn.

The generator is pluggable: a deterministic stub (answers with the first
sentence of the top retrieved chunk) keeps every pipeline path testable
offline, and a remote HTTP generator speaks a minimal JSON protocol.
"""

from __future__ import annotations

import json
import os
import re
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from .corpus import DocumentChunk
from .embedding import EmbeddingProviderConfig, embed_text
from .vectorstore import VectorIndex

ENV_GEN_ENDPOINT = "QA_GEN_ENDPOINT"

NO_CONTEXT_SENTINEL = "(no context retrieved)"
NO_CONTEXT_ANSWER = "NO CONTEXT"

DEFAULT_PREAMBLE = (
    "Answer the question using only the context below. "
    "If the context is insufficient, say so."
)
DEFAULT_TEMPLATE_BODY = "Context:\n{context}\n\nQuestion: {question}\nAnswer:"
DEFAULT_CONTEXT_SEPARATOR = "\n---\n"


class TemplateError(Exception):
    """A prompt template is missing or repeating a placeholder."""


class GenerationError(Exception):
    """The generator backend failed after retries."""

    def __init__(self, message: str, endpoint: str | None = None, status: int | None = None):
        super().__init__(message)
        self.endpoint = endpoint
        self.status = status
        self.retryable = True


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt shape: an optional preamble plus a body with two placeholders."""

    template: str = DEFAULT_TEMPLATE_BODY
    context_separator: str = DEFAULT_CONTEXT_SEPARATOR
    instruction_preamble: str = DEFAULT_PREAMBLE

    def __post_init__(self):
        for placeholder in ("{context}", "{question}"):
            count = self.template.count(placeholder)
            if count != 1:
                raise TemplateError(
                    f"template must contain {placeholder} exactly once, found {count}"
                )


def build_prompt(template: PromptTemplate, contexts: list[str], question: str) -> str:
    """Join contexts with the separator and substitute both placeholders.

    No retrieved context substitutes a fixed sentinel line so the generator
    can tell the difference between an empty corpus and an empty question.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    context_block = template.context_separator.join(contexts) if contexts else NO_CONTEXT_SENTINEL
    filled = re.sub(
        r"\{context\}|\{question\}",
        lambda m: context_block if m.group(0) == "{context}" else question,
        template.template,
    )
    if template.instruction_preamble:
        return f"{template.instruction_preamble}\n\n{filled}"
    return filled


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.2
    repetition_penalty: float = 1.1
    max_new_tokens: int = 300
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.repetition_penalty < 1:
            raise ValueError("repetition_penalty must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "deterministic_stub"
    endpoint: str | None = None
    model_name: str | None = None
    params: GenerationParams = field(default_factory=GenerationParams)
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5

    def __post_init__(self):
        if self.kind not in ("deterministic_stub", "remote_http"):
            raise ValueError(f"unknown generator kind: {self.kind!r}")

    def resolved_endpoint(self) -> str | None:
        return os.environ.get(ENV_GEN_ENDPOINT) or self.endpoint

    def generator_id(self) -> str:
        if self.kind == "deterministic_stub":
            return "stub"
        return f"remote:{self.model_name or self.resolved_endpoint() or 'unconfigured'}"


_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def _first_sentence(text: str) -> str:
    match = _SENTENCE_END.search(text)
    if match:
        return text[: match.end()].strip()
    return text.strip()


def _truncate_tokens(text: str, max_tokens: int) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def _stub_reply(prompt: str, contexts: list[str] | None) -> str:
    if contexts:
        return _first_sentence(contexts[0])
    return NO_CONTEXT_ANSWER


def _remote_generate(config: GeneratorConfig, prompt: str) -> str:
    endpoint = config.resolved_endpoint()
    if not endpoint:
        raise GenerationError("remote_http generator requires an endpoint")
    body = {
        "model": config.model_name or "",
        "prompt": prompt,
        "temperature": config.params.temperature,
        "repetition_penalty": config.params.repetition_penalty,
        "max_tokens": config.params.max_new_tokens,
        "stop": list(config.params.stop_sequences),
    }
    last_error = "generation failed"
    last_status = None
    for attempt in range(config.retries + 1):
        if attempt > 0 and config.backoff > 0:
            time.sleep(config.backoff * (2 ** (attempt - 1)))
        try:
            resp = requests.post(endpoint, json=body, timeout=config.timeout)
        except requests.RequestException as exc:
            last_error, last_status = f"generation request failed: {exc}", None
            continue
        if resp.status_code != 200:
            last_error, last_status = (
                f"generation endpoint returned HTTP {resp.status_code}",
                resp.status_code,
            )
            continue
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError) as exc:
            last_error, last_status = f"malformed generation response: {exc}", resp.status_code
            continue
        if not isinstance(text, str):
            last_error = "generation response field 'text' is not a string"
            continue
        return text
    raise GenerationError(last_error, endpoint=endpoint, status=last_status)


def generate(config: GeneratorConfig, prompt: str, contexts: list[str] | None = None) -> str:
    """Produce an answer for the prompt, truncated to max_new_tokens words."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if config.kind == "deterministic_stub":
        text = _stub_reply(prompt, contexts)
    else:
        text = _remote_generate(config, prompt)
    return _truncate_tokens(text, config.params.max_new_tokens)


# ---------------------------------------------------------------------------
# Transcripts


def _utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


@dataclass(frozen=True)
class RetrievedChunk:
    chunk_id: str
    score: float
    rank: int
    text: str


@dataclass(frozen=True)
class ChatTurn:
    """Everything needed to replay or audit one question."""

    turn_id: str
    timestamp: str
    question: str
    retrieved: tuple[RetrievedChunk, ...]
    prompt: str
    answer: str
    generator_id: str
    latency_ms: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "timestamp": self.timestamp,
            "question": self.question,
            "retrieved": [
                {"chunk_id": r.chunk_id, "score": r.score, "rank": r.rank, "text": r.text}
                for r in self.retrieved
            ],
            "prompt": self.prompt,
            "answer": self.answer,
            "generator_id": self.generator_id,
            "latency_ms": self.latency_ms,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChatTurn":
        return cls(
            turn_id=obj["turn_id"],
            timestamp=obj["timestamp"],
            question=obj["question"],
            retrieved=tuple(
                RetrievedChunk(
                    chunk_id=r["chunk_id"], score=r["score"], rank=r["rank"], text=r["text"]
                )
                for r in obj.get("retrieved", [])
            ),
            prompt=obj["prompt"],
            answer=obj["answer"],
            generator_id=obj["generator_id"],
            latency_ms=obj["latency_ms"],
            error=obj.get("error"),
        )


class TranscriptStore:
    """Append-only JSONL log of chat turns."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, turn: ChatTurn) -> None:
        line = json.dumps(turn.to_dict(), ensure_ascii=False) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._write(line)
        except OSError:
            # One retry covers transient contention; a second failure is real.
            time.sleep(0.05)
            self._write(line)

    def _write(self, line: str) -> None:
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line)

    def export(self, since: str | None = None) -> list[ChatTurn]:
        if not self.path.exists():
            return []
        turns = []
        with open(self.path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                turn = ChatTurn.from_dict(json.loads(line))
                if since is None or turn.timestamp > since:
                    turns.append(turn)
        return turns

    def count(self) -> int:
        return len(self.export())


class ChunkStore:
    """chunk_id -> chunk sidecar so prompts can quote indexed text."""

    def __init__(self):
        self._chunks: dict[str, DocumentChunk] = {}

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._chunks

    def put(self, chunk: DocumentChunk) -> None:
        self._chunks[chunk.id] = chunk

    def get(self, chunk_id: str) -> DocumentChunk:
        return self._chunks[chunk_id]

    def get_text(self, chunk_id: str) -> str:
        return self._chunks[chunk_id].text

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            for chunk in self._chunks.values():
                handle.write(
                    json.dumps(
                        {
                            "id": chunk.id,
                            "source_id": chunk.source_id,
                            "seq_no": chunk.seq_no,
                            "text": chunk.text,
                            "start": chunk.start,
                            "end": chunk.end,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "ChunkStore":
        store = cls()
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                store.put(
                    DocumentChunk(
                        id=obj["id"],
                        source_id=obj["source_id"],
                        seq_no=obj["seq_no"],
                        text=obj["text"],
                        start=obj["start"],
                        end=obj["end"],
                    )
                )
        return store


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class RagPipeline:
    """Wires the index, chunk texts, embedder, template, and generator."""

    index: VectorIndex
    chunks: ChunkStore
    embedder: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    template: PromptTemplate = field(default_factory=PromptTemplate)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    transcript: TranscriptStore | None = None
    k: int = 5

    def ask(self, question: str, k: int | None = None) -> ChatTurn:
        """Answer one question; generator failures are recorded, not raised.

        Embedding failures propagate (no turn is logged for them); a failed
        generation still logs a turn carrying the retrieval results and the
        error text.
        """
        if not question.strip():
            raise ValueError("question must be non-empty")
        top_k = self.k if k is None else k
        if top_k < 1:
            raise ValueError("k must be >= 1")
        started = time.monotonic()
        query = embed_text(question, self.embedder)
        hits = self.index.search_topk(query, top_k) if len(self.index) else []
        retrieved = tuple(
            RetrievedChunk(
                chunk_id=hit.chunk_id,
                score=hit.score,
                rank=hit.rank,
                text=self.chunks.get_text(hit.chunk_id),
            )
            for hit in hits
        )
        contexts = [chunk.text for chunk in retrieved]
        prompt = build_prompt(self.template, contexts, question)
        answer = ""
        error = None
        try:
            answer = generate(self.generator, prompt, contexts)
        except GenerationError as exc:
            error = str(exc)
        turn = ChatTurn(
            turn_id=uuid.uuid4().hex,
            timestamp=_utc_now_rfc3339(),
            question=question,
            retrieved=retrieved,
            prompt=prompt,
            answer=answer,
            generator_id=self.generator.generator_id(),
            latency_ms=int((time.monotonic() - started) * 1000),
            error=error,
        )
        if self.transcript is not None:
            self.transcript.append(turn)
        return turn
