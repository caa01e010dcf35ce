"""Knowledge-grounded course Q&A: ingestion, retrieval, generation, evaluation."""

__version__ = "0.1.0"
