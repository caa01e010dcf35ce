"""Q&A and course-catalog parsing plus character-window chunking."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum


class CorpusError(Exception):
    """Base class for corpus parsing and chunking failures."""


class RecordError(CorpusError):
    """A specific record failed validation; carries its position."""

    def __init__(self, message: str, ordinal: int, byte_offset: int | None = None):
        location = f"record {ordinal}"
        if byte_offset is not None:
            location += f" (byte offset {byte_offset})"
        super().__init__(f"{location}: {message}")
        self.ordinal = ordinal
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class QAPair:
    """One question/answer training or retrieval item."""

    id: str
    question: str
    answer: str
    course_id: str | None = None
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise CorpusError("QAPair id must be non-empty")
        if not self.question.strip():
            raise CorpusError("question must be non-empty after trimming")
        if not self.answer.strip():
            raise CorpusError("answer must be non-empty after trimming")
        object.__setattr__(self, "tags", tuple(self.tags))


class CourseType(Enum):
    CERTIFICATION = "Certification"
    PROFESSIONAL = "Professional"
    GENERAL = "General"


_COURSE_TYPE_ALIASES = {
    "certification": CourseType.CERTIFICATION,
    "certification course": CourseType.CERTIFICATION,
    "professional": CourseType.PROFESSIONAL,
    "professional course": CourseType.PROFESSIONAL,
    "general": CourseType.GENERAL,
    "general course": CourseType.GENERAL,
}


def parse_course_type(raw: str) -> CourseType:
    """Case-insensitive course type lookup; tolerates a trailing 'course'."""
    key = " ".join(raw.lower().split())
    try:
        return _COURSE_TYPE_ALIASES[key]
    except KeyError:
        expected = ", ".join(sorted({t.value for t in CourseType}))
        raise CorpusError(f"unknown course type {raw!r}; expected one of: {expected}") from None


@dataclass(frozen=True)
class CourseRecord:
    """One row of the course catalog."""

    technical_direction: str
    course_name: str
    version: str
    course_type: CourseType
    languages: tuple[str, ...]

    def __post_init__(self):
        if not self.course_name.strip():
            raise CorpusError("course_name must be non-empty")
        # Deduplicate while preserving first-seen order.
        object.__setattr__(self, "languages", tuple(dict.fromkeys(self.languages)))


@dataclass(frozen=True)
class DocumentChunk:
    """A contiguous character slice of a source document."""

    id: str
    source_id: str
    seq_no: int
    text: str
    start: int
    end: int

    def __post_init__(self):
        if self.seq_no < 0:
            raise CorpusError("seq_no must be >= 0")
        if self.end - self.start != len(self.text):
            raise CorpusError(
                f"char range [{self.start}, {self.end}) does not match text length {len(self.text)}"
            )


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 200
    overlap: int = 0
    boundary_mode: str = "hard"

    def __post_init__(self):
        if self.chunk_size < 1:
            raise CorpusError("chunk_size must be >= 1")
        if not 0 <= self.overlap < self.chunk_size:
            raise CorpusError("overlap must satisfy 0 <= overlap < chunk_size")
        if self.boundary_mode not in ("hard", "word_preserving"):
            raise CorpusError(f"unknown boundary_mode: {self.boundary_mode!r}")


def _decode_utf8(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"input is not valid UTF-8: {exc}") from exc


def _require_str(obj: dict, key: str, ordinal: int, byte_offset: int | None) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value.strip():
        raise RecordError(f"missing or empty field {key!r}", ordinal, byte_offset)
    return value.strip()


def _qa_from_obj(obj, ordinal: int, source: str, byte_offset: int | None) -> QAPair:
    if not isinstance(obj, dict):
        raise RecordError("record must be a JSON object", ordinal, byte_offset)
    question = _require_str(obj, "question", ordinal, byte_offset)
    answer = _require_str(obj, "answer", ordinal, byte_offset)
    pair_id = obj.get("id")
    if pair_id is None:
        pair_id = f"{source}:{ordinal}"
    elif not isinstance(pair_id, str) or not pair_id:
        raise RecordError("id must be a non-empty string when present", ordinal, byte_offset)
    course_id = obj.get("course_id")
    if course_id is not None and not isinstance(course_id, str):
        raise RecordError("course_id must be a string when present", ordinal, byte_offset)
    tags = obj.get("tags", [])
    if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
        raise RecordError("tags must be a list of strings", ordinal, byte_offset)
    return QAPair(id=pair_id, question=question, answer=answer, course_id=course_id, tags=tuple(tags))


def parse_qa_dataset(raw: bytes, format: str = "jsonl", source: str = "ds") -> list[QAPair]:
    """Parse Q&A records from JSONL or a JSON array.

    Records without an explicit id get ``<source>:<ordinal>`` with a 0-based
    ordinal counting non-blank records. Duplicate ids are an error.
    """
    if format not in ("jsonl", "json_array"):
        raise CorpusError(f"unknown qa format: {format!r}")
    pairs: list[QAPair] = []
    seen_ids: set[str] = set()

    def _add(pair: QAPair, ordinal: int, byte_offset: int | None):
        if pair.id in seen_ids:
            raise RecordError(f"duplicate id {pair.id!r}", ordinal, byte_offset)
        seen_ids.add(pair.id)
        pairs.append(pair)

    if format == "jsonl":
        offset = 0
        ordinal = 0
        for line in raw.split(b"\n"):
            line_offset = offset
            offset += len(line) + 1
            text = _decode_utf8(line).strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", ordinal, line_offset) from exc
            _add(_qa_from_obj(obj, ordinal, source, line_offset), ordinal, line_offset)
            ordinal += 1
    else:
        try:
            data = json.loads(_decode_utf8(raw))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON array: {exc.msg} at position {exc.pos}") from exc
        if not isinstance(data, list):
            raise CorpusError("json_array input must be a top-level JSON array")
        for ordinal, obj in enumerate(data):
            _add(_qa_from_obj(obj, ordinal, source, None), ordinal, None)
    return pairs


def dump_qa_jsonl(pairs: list[QAPair]) -> bytes:
    """Serialize pairs so that a reparse reproduces them exactly."""
    lines = []
    for pair in pairs:
        obj: dict = {"id": pair.id, "question": pair.question, "answer": pair.answer}
        if pair.course_id is not None:
            obj["course_id"] = pair.course_id
        if pair.tags:
            obj["tags"] = list(pair.tags)
        lines.append(json.dumps(obj, ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


_CATALOG_FIELDS = ("technical_direction", "course_name", "version", "course_type", "languages")


def _split_languages(value) -> tuple[str, ...]:
    if isinstance(value, list):
        items = [str(v).strip() for v in value]
    else:
        items = [part.strip() for part in str(value).split(",")]
    return tuple(item for item in items if item)


def _course_from_fields(fields: dict, ordinal: int) -> CourseRecord:
    try:
        return CourseRecord(
            technical_direction=str(fields["technical_direction"]).strip(),
            course_name=str(fields["course_name"]).strip(),
            version=str(fields["version"]).strip(),
            course_type=parse_course_type(str(fields["course_type"])),
            languages=_split_languages(fields["languages"]),
        )
    except CorpusError as exc:
        raise RecordError(str(exc), ordinal) from exc


def parse_catalog(raw: bytes, format: str = "csv") -> list[CourseRecord]:
    """Parse catalog rows from CSV (header required) or a JSON array."""
    if format not in ("csv", "json_array"):
        raise CorpusError(f"unknown catalog format: {format!r}")
    if format == "csv":
        reader = csv.reader(io.StringIO(_decode_utf8(raw)))
        rows = [row for row in reader if row]
        if not rows:
            return []
        header = [cell.strip().lower() for cell in rows[0]]
        if sorted(header) != sorted(_CATALOG_FIELDS):
            raise CorpusError(
                f"catalog header must name exactly {', '.join(_CATALOG_FIELDS)}; got {rows[0]!r}"
            )
        records = []
        for ordinal, row in enumerate(rows[1:]):
            if len(row) != len(header):
                raise RecordError(f"expected {len(header)} columns, got {len(row)}", ordinal)
            records.append(_course_from_fields(dict(zip(header, row)), ordinal))
        return records

    data = json.loads(_decode_utf8(raw))
    if not isinstance(data, list):
        raise CorpusError("json_array input must be a top-level JSON array")
    records = []
    for ordinal, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise RecordError("record must be a JSON object", ordinal)
        fields = {str(k).strip().lower(): v for k, v in obj.items()}
        missing = [name for name in _CATALOG_FIELDS if name not in fields]
        if missing:
            raise RecordError(f"missing fields: {', '.join(missing)}", ordinal)
        records.append(_course_from_fields(fields, ordinal))
    return records


def _retreat_to_whitespace(text: str, start: int, end: int) -> int:
    """Pull a tentative boundary back to just after the last whitespace.

    Only applies when the cut would land mid-word; if the chunk contains no
    whitespace the hard boundary stands so progress is always made.
    """
    if text[end - 1].isspace() or text[end].isspace():
        return end
    for i in range(end - 1, start, -1):
        if text[i - 1].isspace():
            return i
    return end


def chunk_text(text: str, config: ChunkingConfig, source_id: str = "text") -> list[DocumentChunk]:
    """Slide a character window of chunk_size with the configured overlap.

    Chunks are emitted in order, jointly cover [0, len(text)), and each one
    is non-empty and at most chunk_size characters long.
    """
    n = len(text)
    if n == 0:
        return []
    chunks: list[DocumentChunk] = []
    start = 0
    seq_no = 0
    while True:
        end = min(start + config.chunk_size, n)
        if config.boundary_mode == "word_preserving" and end < n:
            end = _retreat_to_whitespace(text, start, end)
        chunks.append(
            DocumentChunk(
                id=f"{source_id}:{seq_no}",
                source_id=source_id,
                seq_no=seq_no,
                text=text[start:end],
                start=start,
                end=end,
            )
        )
        if end >= n:
            return chunks
        # The lower bound start + 1 guarantees progress even when overlap
        # would otherwise replay an entire shortened chunk.
        start = max(end - config.overlap, start + 1)
        seq_no += 1


def flatten_for_embedding(item: QAPair | CourseRecord) -> str:
    """Render an item as the canonical single text used for embedding."""
    if isinstance(item, QAPair):
        return f"Q: {item.question}\nA: {item.answer}"
    if isinstance(item, CourseRecord):
        return (
            f"{item.course_name} ({item.version}, {item.course_type.value}): "
            f"direction {item.technical_direction}; languages: {', '.join(item.languages)}"
        )
    raise TypeError(f"cannot flatten {type(item).__name__}")
