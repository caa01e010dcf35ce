"""Command-line front end: ingest, index-info, ask, chat, eval, serve.

Settings resolve in precedence order: explicit flags, then the --config
file (``key = value`` lines), then environment variables, then defaults.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .corpus import ChunkingConfig, CorpusError, chunk_text, flatten_for_embedding, parse_catalog, parse_qa_dataset
from .embedding import EmbeddingError, EmbeddingProviderConfig, embed_text
from .evalmetrics import EvalConfig, evaluate_corpus, report_to_csv, report_to_json
from .ragpipe import (
    ChunkStore,
    GenerationError,
    GeneratorConfig,
    PromptTemplate,
    RagPipeline,
    TranscriptStore,
)
from .vectorstore import VectorIndex, VectorStoreError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_ENV_BY_KEY = {
    "index": "QA_INDEX_PATH",
    "transcript": "QA_TRANSCRIPT_PATH",
    "embed_endpoint": "QA_EMBED_ENDPOINT",
    "gen_endpoint": "QA_GEN_ENDPOINT",
    "bind": "QA_BIND",
}

_DEFAULTS = {
    "index": "qa_index.bin",
    "transcript": "transcripts.jsonl",
    "k": "5",
    "seed": "0",
    "dim": "768",
    "mode": "corpus",
    "bind": "127.0.0.1:8080",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config_file(path: str) -> dict[str, str]:
    settings = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        settings[key.strip()] = value.strip()
    return settings


@dataclass
class Settings:
    index: Path
    transcript: Path
    k: int
    seed: int
    dim: int
    mode: str
    bind: str
    template: Path | None
    embed_endpoint: str | None
    gen_endpoint: str | None

    @property
    def chunk_store_path(self) -> Path:
        return self.index.with_name(self.index.name + ".chunks.jsonl")


def _resolve_settings(args: argparse.Namespace) -> Settings:
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(key: str) -> str | None:
        flag = getattr(args, key, None)
        if flag is not None:
            return str(flag)
        if key in file_cfg:
            return file_cfg[key]
        env_name = _ENV_BY_KEY.get(key)
        if env_name and os.environ.get(env_name):
            return os.environ[env_name]
        return _DEFAULTS.get(key)

    def pick_int(key: str) -> int:
        raw = pick(key)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise UsageError(f"{key} must be an integer, got {raw!r}") from None

    mode = pick("mode")
    if mode not in ("corpus", "sentence"):
        raise UsageError(f"mode must be 'corpus' or 'sentence', got {mode!r}")
    template = pick("template")
    settings = Settings(
        index=Path(pick("index")),
        transcript=Path(pick("transcript")),
        k=pick_int("k"),
        seed=pick_int("seed"),
        dim=pick_int("dim"),
        mode=mode,
        bind=pick("bind"),
        template=Path(template) if template else None,
        embed_endpoint=pick("embed_endpoint"),
        gen_endpoint=pick("gen_endpoint"),
    )
    # The provider configs consult these env vars directly and let them beat
    # the endpoint field; re-export the resolved values so flag > file > env
    # still holds end to end.
    for key in ("embed_endpoint", "gen_endpoint"):
        value = getattr(settings, key)
        if value:
            os.environ[_ENV_BY_KEY[key]] = value
        else:
            os.environ.pop(_ENV_BY_KEY[key], None)
    return settings


def _embedder(settings: Settings) -> EmbeddingProviderConfig:
    if settings.embed_endpoint:
        return EmbeddingProviderConfig(
            kind="remote_http", dim=settings.dim, endpoint=settings.embed_endpoint
        )
    return EmbeddingProviderConfig(dim=settings.dim, seed=settings.seed)


def _generator(settings: Settings) -> GeneratorConfig:
    if settings.gen_endpoint:
        return GeneratorConfig(kind="remote_http", endpoint=settings.gen_endpoint)
    return GeneratorConfig()


def _template(settings: Settings) -> PromptTemplate:
    if settings.template is None:
        return PromptTemplate()
    from .service import load_template_file

    return load_template_file(settings.template)


def _load_index(settings: Settings, create: bool = False) -> tuple[VectorIndex, ChunkStore]:
    if settings.index.exists():
        index = VectorIndex.load(settings.index)
        if settings.chunk_store_path.exists():
            chunks = ChunkStore.load(settings.chunk_store_path)
        else:
            chunks = ChunkStore()
        return index, chunks
    if not create:
        raise VectorStoreError(f"index not found: {settings.index}")
    return VectorIndex(dim=settings.dim, metric="cosine"), ChunkStore()


def _pipeline(settings: Settings, create_index: bool = False) -> RagPipeline:
    index, chunks = _load_index(settings, create=create_index)
    return RagPipeline(
        index=index,
        chunks=chunks,
        embedder=_embedder(settings),
        template=_template(settings),
        generator=_generator(settings),
        transcript=TranscriptStore(settings.transcript),
        k=settings.k,
    )


def _print_turn(turn) -> None:
    print(turn.answer)
    for chunk in turn.retrieved:
        print(f"[{chunk.rank}] {chunk.chunk_id} (score={chunk.score:.4f})")


def _cmd_ingest(args) -> int:
    settings = _resolve_settings(args)
    try:
        raw = Path(args.file).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read input file: {exc}") from exc
    chunking = ChunkingConfig()
    if args.kind == "qa":
        fmt = args.format or "jsonl"
        pairs = parse_qa_dataset(raw, format=fmt, source=args.source or "ds")
        new_chunks = []
        for pair in pairs:
            new_chunks.extend(chunk_text(flatten_for_embedding(pair), chunking, pair.id))
    elif args.kind == "catalog":
        fmt = args.format or "csv"
        records = parse_catalog(raw, format=fmt)
        prefix = args.source or "catalog"
        new_chunks = []
        for ordinal, record in enumerate(records):
            new_chunks.extend(
                chunk_text(flatten_for_embedding(record), chunking, f"{prefix}:{ordinal}")
            )
    elif args.kind == "text":
        new_chunks = chunk_text(raw.decode("utf-8"), chunking, args.source or "text")
    else:
        raise UsageError(f"unknown kind: {args.kind!r}")

    index, chunks = _load_index(settings, create=True)
    embedder = _embedder(settings)
    clashes = [c.id for c in new_chunks if c.id in index]
    if clashes:
        raise VectorStoreError(f"chunk ids already indexed: {clashes[:5]}")
    for chunk in new_chunks:
        index.add(chunk.id, embed_text(chunk.text, embedder))
        chunks.put(chunk)
    index.save(settings.index)
    chunks.save(settings.chunk_store_path)
    print(f"chunks_added: {len(new_chunks)}")
    return EXIT_OK


def _cmd_index_info(args) -> int:
    settings = _resolve_settings(args)
    index, _ = _load_index(settings)
    print(f"path: {settings.index}")
    print(f"size: {len(index)}")
    print(f"dim: {index.dim}")
    print(f"metric: {index.metric}")
    print(f"quantized: {str(index.quantized).lower()}")
    return EXIT_OK


def _cmd_ask(args) -> int:
    settings = _resolve_settings(args)
    question = args.q or args.question
    if not question or not question.strip():
        raise UsageError("provide a question (positional or --q)")
    pipeline = _pipeline(settings, create_index=True)
    turn = pipeline.ask(question)
    if turn.error is not None:
        print(f"error: {turn.error}", file=sys.stderr)
        for chunk in turn.retrieved:
            print(f"[{chunk.rank}] {chunk.chunk_id} (score={chunk.score:.4f})", file=sys.stderr)
        return EXIT_RUNTIME
    _print_turn(turn)
    return EXIT_OK


def _cmd_chat(args) -> int:
    settings = _resolve_settings(args)
    pipeline = _pipeline(settings, create_index=True)
    print("Interactive chat; empty line or Ctrl-D exits.")
    while True:
        try:
            question = input("> ").strip()
        except EOFError:
            print()
            return EXIT_OK
        if not question:
            return EXIT_OK
        turn = pipeline.ask(question)
        if turn.error is not None:
            print(f"error: {turn.error}", file=sys.stderr)
            continue
        _print_turn(turn)


def _load_eval_pairs(path: str) -> list[tuple[str, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read pairs file: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            # UI session exports carry candidate + question only; those parse
            # fine and score against an empty reference until one is added.
            pairs.append((str(obj["candidate"]), str(obj.get("reference", ""))))
        except (ValueError, KeyError) as exc:
            raise CorpusError(f"{path}:{lineno}: expected candidate/reference object: {exc}") from exc
    if not pairs:
        raise CorpusError(f"{path}: no pairs found")
    return pairs


def _cmd_eval(args) -> int:
    settings = _resolve_settings(args)
    pairs = _load_eval_pairs(args.pairs)
    config = EvalConfig(mode=settings.mode, embedder=_embedder(settings))
    report = evaluate_corpus(pairs, config)
    rendered = report_to_json(report)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    if args.csv:
        Path(args.csv).write_text(report_to_csv(report), encoding="utf-8")
    return EXIT_OK


def _cmd_serve(args) -> int:
    settings = _resolve_settings(args)
    import uvicorn

    from .service import ServiceConfig, create_app

    host, _, port_text = settings.bind.partition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise UsageError(f"bind must be host:port, got {settings.bind!r}") from None
    config = ServiceConfig(
        host=host or "127.0.0.1",
        port=port,
        index_path=settings.index,
        transcript_path=settings.transcript,
        template_path=settings.template,
        embedder=_embedder(settings),
        generator=_generator(settings),
        k=settings.k,
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="courseqa", description="Course Q&A retrieval and evaluation")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--index", help="vector index path")
    common.add_argument("--transcript", help="transcript JSONL path")
    common.add_argument("--k", type=int, help="retrieval depth")
    common.add_argument("--template", help="prompt template file")
    common.add_argument("--embed-endpoint", dest="embed_endpoint", help="remote embedder URL")
    common.add_argument("--gen-endpoint", dest="gen_endpoint", help="remote generator URL")
    common.add_argument("--seed", type=int, help="local embedder seed")
    common.add_argument("--dim", type=int, help="embedding dimension")
    common.add_argument("--mode", help="evaluation mode: corpus or sentence")

    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", parents=[common], help="parse, chunk, embed, and index")
    p_ingest.add_argument("--file", required=True, help="input file")
    p_ingest.add_argument("--kind", default="qa", choices=["qa", "catalog", "text"])
    p_ingest.add_argument("--format", help="qa: jsonl|json_array, catalog: csv|json_array")
    p_ingest.add_argument("--source", help="source id prefix for generated chunk ids")
    p_ingest.set_defaults(func=_cmd_ingest)

    p_info = sub.add_parser("index-info", parents=[common], help="print index stats")
    p_info.set_defaults(func=_cmd_index_info)

    p_ask = sub.add_parser("ask", parents=[common], help="answer one question")
    p_ask.add_argument("question", nargs="?", help="the question text")
    p_ask.add_argument("--q", dest="q", help="the question text (alternative to positional)")
    p_ask.set_defaults(func=_cmd_ask)

    p_chat = sub.add_parser("chat", parents=[common], help="interactive question loop")
    p_chat.set_defaults(func=_cmd_chat)

    p_eval = sub.add_parser("eval", parents=[common], help="score candidate/reference pairs")
    p_eval.add_argument("--pairs", required=True, help="JSONL with candidate/reference fields")
    p_eval.add_argument("--out", help="write the JSON report here instead of stdout")
    p_eval.add_argument("--csv", help="also write a metric,value CSV here")
    p_eval.set_defaults(func=_cmd_eval)

    p_serve = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p_serve.add_argument("--bind", help="host:port (default 127.0.0.1:8080)")
    p_serve.add_argument("--ui-dir", dest="ui_dir", help="static chat UI directory")
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, VectorStoreError, EmbeddingError, GenerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
