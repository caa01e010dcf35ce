import json
import os
from pathlib import Path

import pytest

from courseqa.embedding import EmbeddingProviderConfig

FIXTURES = Path(__file__).parent / "fixtures"

QA_ENV_NAMES = (
    "QA_INDEX_PATH",
    "QA_TRANSCRIPT_PATH",
    "QA_EMBED_ENDPOINT",
    "QA_GEN_ENDPOINT",
    "QA_BIND",
)


@pytest.fixture(autouse=True)
def _qa_env_isolation():
    """Start every test without QA_* vars and undo any leaks afterwards."""
    saved = {name: os.environ.pop(name, None) for name in QA_ENV_NAMES}
    yield
    for name, value in saved.items():
        if value is None:
            os.environ.pop(name, None)
        else:
            os.environ[name] = value


@pytest.fixture
def local_cfg():
    return EmbeddingProviderConfig()


@pytest.fixture(scope="session")
def eval_pairs_20():
    pairs = []
    with open(FIXTURES / "eval_pairs_20.jsonl", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                obj = json.loads(line)
                pairs.append((obj["candidate"], obj["reference"]))
    assert len(pairs) == 20
    return pairs


def qa_jsonl(n: int, prefix: str = "topic") -> bytes:
    """Deterministic small Q&A corpus used across pipeline tests."""
    lines = []
    for i in range(n):
        lines.append(
            json.dumps(
                {
                    "question": f"What does {prefix} {i} explain?",
                    "answer": f"It explains {prefix} {i} with worked examples. Labs follow.",
                }
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")
