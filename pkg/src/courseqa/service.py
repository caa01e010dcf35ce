"""HTTP facade: ingest, ask, transcripts, evaluation, and health."""

from __future__ import annotations

import base64
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import requests
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import AliasChoices, BaseModel, Field

from .corpus import (
    ChunkingConfig,
    CorpusError,
    chunk_text,
    flatten_for_embedding,
    parse_catalog,
    parse_qa_dataset,
)
from .embedding import (
    EmbeddingConfigError,
    EmbeddingProviderConfig,
    RemoteEmbeddingError,
    embed_text,
)
from .evalmetrics import EvalConfig, evaluate_corpus, report_to_json
from .ragpipe import (
    ChunkStore,
    GeneratorConfig,
    PromptTemplate,
    RagPipeline,
    TranscriptStore,
)
from .vectorstore import VectorIndex

ENV_BIND = "QA_BIND"
ENV_INDEX_PATH = "QA_INDEX_PATH"
ENV_TRANSCRIPT_PATH = "QA_TRANSCRIPT_PATH"

PROBE_TIMEOUT = 2.0


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    index_path: Path = Path("qa_index.bin")
    transcript_path: Path = Path("transcripts.jsonl")
    template_path: Path | None = None
    embedder: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    k: int = 5
    quantized_index: bool = False
    cors_origins: tuple[str, ...] = ("*",)
    ui_dir: Path | None = None

    def __post_init__(self):
        self.index_path = Path(self.index_path)
        self.transcript_path = Path(self.transcript_path)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.index_path == self.transcript_path:
            raise ValueError("index and transcript paths must be distinct")

    @property
    def chunk_store_path(self) -> Path:
        return self.index_path.with_name(self.index_path.name + ".chunks.jsonl")


def load_template_file(path: str | Path) -> PromptTemplate:
    """A template file is the complete prompt body; no preamble is added."""
    body = Path(path).read_text(encoding="utf-8")
    return PromptTemplate(template=body, instruction_preamble="")


def _probe(endpoint: str | None) -> bool:
    if not endpoint:
        return False
    try:
        requests.get(endpoint, timeout=PROBE_TIMEOUT)
        return True
    except requests.Timeout:
        return False
    except requests.RequestException as exc:
        # A refused or erroring HTTP response still proves reachability;
        # only transport-level failures (DNS, connect, TLS) count as down.
        return isinstance(exc, requests.HTTPError)


class IngestRequest(BaseModel):
    kind: str
    format: str | None = None
    payload_base64: str | None = None
    path: str | None = None
    source: str | None = None


class AskRequest(BaseModel):
    question: str = ""
    k: int | None = None
    template_id: str | None = None


class EvalPairIn(BaseModel):
    candidate: str
    reference: str


class TranscriptRefIn(BaseModel):
    turn_id: str
    reference: str


class EvaluateRequest(BaseModel):
    pairs: list[EvalPairIn] | None = None
    transcript_refs: list[TranscriptRefIn] | None = Field(
        default=None,
        validation_alias=AliasChoices("transcript_refs", "transcript_refs_with_references"),
    )
    mode: str = "corpus"


_DEFAULT_FORMATS = {"qa": "jsonl", "catalog": "csv", "text": "text"}


def create_app(config: ServiceConfig) -> FastAPI:
    if config.index_path.exists():
        index = VectorIndex.load(config.index_path)
    else:
        index = VectorIndex(
            dim=config.embedder.dim, metric="cosine", quantized=config.quantized_index
        )
    if config.chunk_store_path.exists():
        chunks = ChunkStore.load(config.chunk_store_path)
    else:
        chunks = ChunkStore()
    templates = {"default": PromptTemplate()}
    if config.template_path is not None:
        templates["default"] = load_template_file(config.template_path)
    transcript = TranscriptStore(config.transcript_path)
    pipeline = RagPipeline(
        index=index,
        chunks=chunks,
        embedder=config.embedder,
        template=templates["default"],
        generator=config.generator,
        transcript=transcript,
        k=config.k,
    )
    ingest_lock = threading.Lock()

    app = FastAPI(title="courseqa", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _chunks_for_ingest(req: IngestRequest, raw: bytes):
        fmt = req.format or _DEFAULT_FORMATS.get(req.kind)
        if req.kind == "qa":
            if fmt not in ("jsonl", "json_array"):
                raise CorpusError(f"unsupported qa format: {fmt!r}")
            pairs = parse_qa_dataset(raw, format=fmt, source=req.source or "ds")
            out = []
            for pair in pairs:
                out.extend(chunk_text(flatten_for_embedding(pair), config.chunking, pair.id))
            return out
        if req.kind == "catalog":
            if fmt not in ("csv", "json_array"):
                raise CorpusError(f"unsupported catalog format: {fmt!r}")
            records = parse_catalog(raw, format=fmt)
            prefix = req.source or "catalog"
            out = []
            for ordinal, record in enumerate(records):
                out.extend(
                    chunk_text(
                        flatten_for_embedding(record), config.chunking, f"{prefix}:{ordinal}"
                    )
                )
            return out
        if req.kind == "text":
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"input is not valid UTF-8: {exc}") from exc
            return chunk_text(text, config.chunking, req.source or "text")
        raise CorpusError(f"unknown ingest kind: {req.kind!r}")

    @app.post("/v1/ingest")
    def ingest(req: IngestRequest):
        if (req.payload_base64 is None) == (req.path is None):
            raise HTTPException(400, "provide exactly one of payload_base64 or path")
        if req.payload_base64 is not None:
            try:
                raw = base64.b64decode(req.payload_base64, validate=True)
            except (ValueError, TypeError) as exc:
                raise HTTPException(400, f"invalid base64 payload: {exc}") from exc
        else:
            try:
                raw = Path(req.path).read_bytes()
            except OSError as exc:
                raise HTTPException(400, f"cannot read {req.path!r}: {exc}") from exc
        try:
            new_chunks = _chunks_for_ingest(req, raw)
        except CorpusError as exc:
            raise HTTPException(400, str(exc)) from exc
        with ingest_lock:
            clashes = [c.id for c in new_chunks if c.id in index]
            if clashes:
                raise HTTPException(409, f"chunk ids already indexed: {clashes[:5]}")
            try:
                vectors = [embed_text(chunk.text, config.embedder) for chunk in new_chunks]
            except RemoteEmbeddingError as exc:
                raise HTTPException(503, str(exc)) from exc
            except EmbeddingConfigError as exc:
                raise HTTPException(400, str(exc)) from exc
            for chunk, vector in zip(new_chunks, vectors):
                index.add(chunk.id, vector)
                chunks.put(chunk)
            index.save(config.index_path)
            chunks.save(config.chunk_store_path)
        return {"chunks_added": len(new_chunks)}

    @app.post("/v1/ask")
    def ask(req: AskRequest):
        if not req.question.strip():
            raise HTTPException(422, "question must be non-empty")
        if req.k is not None and req.k < 1:
            raise HTTPException(422, "k must be >= 1")
        template_id = req.template_id or "default"
        if template_id not in templates:
            raise HTTPException(400, f"unknown template_id: {template_id!r}")
        try:
            turn = pipeline.ask(req.question, k=req.k)
        except RemoteEmbeddingError as exc:
            raise HTTPException(503, str(exc)) from exc
        if turn.error is not None:
            # Generation failed; the retrieval results are still useful.
            return JSONResponse(status_code=502, content=turn.to_dict())
        return turn.to_dict()

    @app.get("/v1/transcripts")
    def transcripts(since: str | None = Query(default=None)):
        if since is not None:
            try:
                _parse_rfc3339(since)
            except ValueError as exc:
                raise HTTPException(400, f"invalid since timestamp: {exc}") from exc
        turns = transcript.export()
        if since is not None:
            cutoff = _parse_rfc3339(since)
            turns = [t for t in turns if _parse_rfc3339(t.timestamp) > cutoff]
        return [t.to_dict() for t in turns]

    @app.post("/v1/evaluate")
    def evaluate(req: EvaluateRequest):
        if req.pairs is not None:
            pairs = [(p.candidate, p.reference) for p in req.pairs]
        elif req.transcript_refs is not None:
            by_id = {t.turn_id: t for t in transcript.export()}
            pairs = []
            for ref in req.transcript_refs:
                if ref.turn_id not in by_id:
                    raise HTTPException(404, f"unknown turn_id: {ref.turn_id!r}")
                pairs.append((by_id[ref.turn_id].answer, ref.reference))
        else:
            raise HTTPException(400, "provide pairs or transcript_refs")
        if not pairs:
            raise HTTPException(400, "at least one pair is required")
        try:
            eval_config = EvalConfig(mode=req.mode, embedder=config.embedder)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        report = evaluate_corpus(pairs, eval_config)
        return Response(content=report_to_json(report), media_type="application/json")

    @app.get("/health")
    def health():
        # Degraded-mode policy: a down component is reported as such but the
        # service itself stays "ok" because retrieval keeps working.
        if config.embedder.kind == "deterministic_local":
            embedder_ok = True
        else:
            embedder_ok = _probe(config.embedder.resolved_endpoint())
        if config.generator.kind == "deterministic_stub":
            generator_ok = True
        else:
            generator_ok = _probe(config.generator.resolved_endpoint())
        return {
            "status": "ok",
            "index_size": len(index),
            "embedder": "ok" if embedder_ok else "down",
            "generator": "ok" if generator_ok else "down",
        }

    if config.ui_dir is not None and Path(config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    app.state.pipeline = pipeline
    app.state.config = config
    return app


def _parse_rfc3339(stamp: str) -> datetime:
    return datetime.fromisoformat(stamp.replace("Z", "+00:00"))
