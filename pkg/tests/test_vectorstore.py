import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courseqa.embedding import EmbeddingVector, QuantizedVector
from courseqa.vectorstore import (
    DimensionMismatchError,
    DuplicateChunkIdError,
    IndexFormatError,
    SearchHit,
    VectorIndex,
    VectorStoreError,
)
from oracles import o_search


def _vec(*values):
    return EmbeddingVector(np.array(values, dtype=np.float32))


def _random_index(rng, n, dim, metric="cosine", quantized=False, zero_every=0):
    index = VectorIndex(dim=dim, metric=metric, quantized=quantized)
    for i in range(n):
        if zero_every and i % zero_every == 0:
            values = np.zeros(dim, dtype=np.float32)
        else:
            values = rng.standard_normal(dim).astype(np.float32)
        index.add(f"c{i:04d}", EmbeddingVector(values))
    return index


class TestAdd:
    def test_add_to_empty(self):
        index = VectorIndex(dim=3)
        index.add("a", _vec(1.0, 0.0, 0.0))
        assert len(index) == 1
        assert "a" in index
        assert index.chunk_ids() == ["a"]

    def test_duplicate_id_rejected(self):
        index = VectorIndex(dim=2)
        index.add("a", _vec(1.0, 0.0))
        with pytest.raises(DuplicateChunkIdError):
            index.add("a", _vec(0.0, 1.0))

    def test_dim_mismatch_rejected(self):
        index = VectorIndex(dim=2)
        with pytest.raises(DimensionMismatchError):
            index.add("a", _vec(1.0, 0.0, 0.0))

    def test_empty_id_rejected(self):
        index = VectorIndex(dim=2)
        with pytest.raises(VectorStoreError):
            index.add("", _vec(1.0, 0.0))

    def test_quantized_index_stores_codes(self):
        index = VectorIndex(dim=2, quantized=True)
        index.add("a", _vec(0.5, -1.0))
        ((_, payload),) = index.entries()
        assert isinstance(payload, QuantizedVector)
        assert payload.codes.tolist() == [64, -127]

    def test_quantized_index_keeps_zero_vector_raw(self):
        index = VectorIndex(dim=2, quantized=True)
        index.add("z", _vec(0.0, 0.0))
        ((_, payload),) = index.entries()
        assert isinstance(payload, EmbeddingVector)

    def test_bad_constructor_args(self):
        with pytest.raises(VectorStoreError):
            VectorIndex(dim=0)
        with pytest.raises(VectorStoreError):
            VectorIndex(dim=2, metric="euclidean")


class TestSearch:
    def test_exact_match_ranks_first(self):
        index = VectorIndex(dim=2)
        index.add("north", _vec(0.0, 1.0))
        index.add("east", _vec(1.0, 0.0))
        hits = index.search_topk(_vec(1.0, 0.0), k=2)
        assert hits[0].chunk_id == "east"
        assert math.isclose(hits[0].score, 1.0, abs_tol=1e-6)
        assert [h.rank for h in hits] == [1, 2]

    def test_k_larger_than_size_returns_all(self):
        index = VectorIndex(dim=2)
        index.add("a", _vec(1.0, 0.0))
        index.add("b", _vec(0.0, 1.0))
        assert len(index.search_topk(_vec(1.0, 1.0), k=10)) == 2

    def test_empty_index_returns_empty(self):
        assert VectorIndex(dim=2).search_topk(_vec(1.0, 0.0), k=5) == []

    def test_k_must_be_positive(self):
        with pytest.raises(VectorStoreError):
            VectorIndex(dim=2).search_topk(_vec(1.0, 0.0), k=0)

    def test_query_dim_checked(self):
        index = VectorIndex(dim=2)
        index.add("a", _vec(1.0, 0.0))
        with pytest.raises(DimensionMismatchError):
            index.search_topk(_vec(1.0, 0.0, 0.0), k=1)

    def test_ties_broken_by_ascending_chunk_id(self):
        index = VectorIndex(dim=2)
        for cid in ("zeta", "alpha", "mid"):
            index.add(cid, _vec(1.0, 0.0))
        hits = index.search_topk(_vec(2.0, 0.0), k=3)
        assert [h.chunk_id for h in hits] == ["alpha", "mid", "zeta"]
        assert [h.rank for h in hits] == [1, 2, 3]

    def test_zero_norm_entry_scores_zero_under_cosine(self):
        index = VectorIndex(dim=2)
        index.add("zero", _vec(0.0, 0.0))
        index.add("anti", _vec(-1.0, 0.0))
        hits = index.search_topk(_vec(1.0, 0.0), k=2)
        assert [h.chunk_id for h in hits] == ["zero", "anti"]
        assert hits[0].score == 0.0

    def test_zero_query_scores_all_zero_under_cosine(self):
        index = VectorIndex(dim=2)
        index.add("b", _vec(1.0, 0.0))
        index.add("a", _vec(0.0, 1.0))
        hits = index.search_topk(_vec(0.0, 0.0), k=2)
        assert [h.chunk_id for h in hits] == ["a", "b"]
        assert [h.score for h in hits] == [0.0, 0.0]

    def test_dot_metric_uses_magnitude(self):
        index = VectorIndex(dim=2, metric="dot")
        index.add("long", _vec(3.0, 0.0))
        index.add("short", _vec(1.0, 0.0))
        hits = index.search_topk(_vec(1.0, 0.0), k=2)
        assert [h.chunk_id for h in hits] == ["long", "short"]
        assert hits[0].score == pytest.approx(3.0)

    def test_cosine_scores_clamped(self):
        rng = np.random.default_rng(3)
        index = _random_index(rng, 50, 8)
        for _ in range(20):
            hits = index.search_topk(EmbeddingVector(rng.standard_normal(8).astype(np.float32)), k=50)
            assert all(-1.0 <= h.score <= 1.0 for h in hits)

    @pytest.mark.parametrize("metric", ["cosine", "dot"])
    def test_matches_brute_force_oracle(self, metric):
        rng = np.random.default_rng(11)
        index = _random_index(rng, 120, 12, metric=metric, zero_every=17)
        entries = [(cid, [float(x) for x in pay.values]) for cid, pay in index.entries()]
        for _ in range(25):
            query = rng.standard_normal(12).astype(np.float32)
            hits = index.search_topk(EmbeddingVector(query), k=5)
            expected = o_search(entries, [float(x) for x in query], metric=metric, k=5)
            assert [h.chunk_id for h in hits] == [e["chunk_id"] for e in expected]
            assert [h.rank for h in hits] == [e["rank"] for e in expected]
            for hit, exp in zip(hits, expected):
                assert math.isclose(hit.score, exp["score"], abs_tol=1e-9)

    def test_search_results_stable_after_save_load(self, tmp_path):
        rng = np.random.default_rng(5)
        index = _random_index(rng, 100, 10)
        query = EmbeddingVector(rng.standard_normal(10).astype(np.float32))
        before = index.search_topk(query, k=7)
        path = tmp_path / "idx.bin"
        index.save(path)
        after = VectorIndex.load(path).search_topk(query, k=7)
        assert before == after


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        index = VectorIndex(dim=4, metric="dot")
        path = tmp_path / "empty.bin"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert (loaded.dim, loaded.metric, loaded.quantized, len(loaded)) == (4, "dot", False, 0)

    def test_raw_payload_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        index = _random_index(rng, 30, 6)
        path = tmp_path / "idx.bin"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert loaded.chunk_ids() == index.chunk_ids()
        for (cid_a, pay_a), (cid_b, pay_b) in zip(index.entries(), loaded.entries()):
            assert cid_a == cid_b
            assert pay_a.values.tobytes() == pay_b.values.tobytes()

    def test_quantized_payload_bit_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        index = _random_index(rng, 25, 6, quantized=True, zero_every=9)
        path = tmp_path / "idx.bin"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert loaded.quantized
        for (_, pay_a), (_, pay_b) in zip(index.entries(), loaded.entries()):
            assert type(pay_a) is type(pay_b)
            if isinstance(pay_a, QuantizedVector):
                assert pay_a.codes.tobytes() == pay_b.codes.tobytes()
                assert np.float32(pay_a.quant_constant) == np.float32(pay_b.quant_constant)
            else:
                assert pay_a.values.tobytes() == pay_b.values.tobytes()

    def test_unicode_chunk_ids(self, tmp_path):
        index = VectorIndex(dim=2)
        index.add("课程:0", _vec(1.0, 0.0))
        path = tmp_path / "idx.bin"
        index.save(path)
        assert VectorIndex.load(path).chunk_ids() == ["课程:0"]

    def test_save_replaces_existing_file_atomically(self, tmp_path):
        path = tmp_path / "idx.bin"
        a = VectorIndex(dim=2)
        a.add("a", _vec(1.0, 0.0))
        a.save(path)
        b = VectorIndex(dim=2)
        b.add("b", _vec(0.0, 1.0))
        b.save(path)
        assert VectorIndex.load(path).chunk_ids() == ["b"]
        assert [p.name for p in tmp_path.iterdir()] == ["idx.bin"]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(IndexFormatError, match="magic"):
            VectorIndex.load(path)

    def test_bad_version(self, tmp_path):
        blob = bytearray(_blob(VectorIndex(dim=2)))
        struct.pack_into("<H", blob, 4, 9)
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(blob))
        with pytest.raises(IndexFormatError, match="version"):
            VectorIndex.load(path)

    def test_bad_metric_code(self, tmp_path):
        blob = bytearray(_blob(VectorIndex(dim=2)))
        blob[6] = 7
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(blob))
        with pytest.raises(IndexFormatError, match="metric"):
            VectorIndex.load(path)

    def test_bad_quant_flag(self, tmp_path):
        blob = bytearray(_blob(VectorIndex(dim=2)))
        blob[7] = 2
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(blob))
        with pytest.raises(IndexFormatError, match="flag"):
            VectorIndex.load(path)

    def test_raw_marker_invalid_in_unquantized_index(self, tmp_path):
        index = VectorIndex(dim=1)
        index.add("a", _vec(1.0))
        blob = bytearray(_blob(index))
        # Flip the payload marker that follows the 2-byte id length + 1-byte id.
        blob[20 + 2 + 1] = 1
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(blob))
        with pytest.raises(IndexFormatError, match="marker"):
            VectorIndex.load(path)

    def test_nonpositive_constant_rejected_on_load(self, tmp_path):
        index = VectorIndex(dim=1, quantized=True)
        index.add("a", _vec(2.0))
        blob = bytearray(_blob(index))
        struct.pack_into("<f", blob, 20 + 2 + 1 + 1, -1.0)
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(blob))
        with pytest.raises(IndexFormatError):
            VectorIndex.load(path)

    def test_duplicate_ids_rejected_on_load(self, tmp_path):
        index = VectorIndex(dim=1)
        index.add("a", _vec(1.0))
        single = _blob(index)
        header, entry = single[:20], single[20:]
        doubled = bytearray(header) + entry + entry
        struct.pack_into("<Q", doubled, 12, 2)
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(doubled))
        with pytest.raises(IndexFormatError, match="duplicate"):
            VectorIndex.load(path)

    def test_every_strict_prefix_is_a_truncation_error(self, tmp_path):
        index = VectorIndex(dim=3, quantized=True)
        index.add("a", _vec(1.0, 2.0, 3.0))
        index.add("b", _vec(0.0, 0.0, 0.0))
        blob = _blob(index)
        path = tmp_path / "cut.bin"
        for cut in range(len(blob)):
            path.write_bytes(blob[:cut])
            with pytest.raises(IndexFormatError) as excinfo:
                VectorIndex.load(path)
            assert excinfo.value.byte_offset is not None
            assert excinfo.value.byte_offset <= cut

    def test_trailing_bytes_rejected(self, tmp_path):
        index = VectorIndex(dim=2)
        index.add("a", _vec(1.0, 0.0))
        path = tmp_path / "pad.bin"
        path.write_bytes(_blob(index) + b"\x00")
        with pytest.raises(IndexFormatError, match="trailing"):
            VectorIndex.load(path)

    @given(
        rows=st.lists(
            st.tuples(
                st.text(min_size=1, max_size=8),
                st.lists(
                    st.floats(min_value=-100, max_value=100, allow_nan=False, width=32),
                    min_size=3,
                    max_size=3,
                ),
            ),
            max_size=8,
            unique_by=lambda item: item[0],
        ),
        quantized=st.booleans(),
    )
    @settings(max_examples=60)
    def test_round_trip_property(self, tmp_path_factory, rows, quantized):
        index = VectorIndex(dim=3, quantized=quantized)
        for cid, values in rows:
            index.add(cid, EmbeddingVector(np.array(values, dtype=np.float32)))
        path = tmp_path_factory.mktemp("rt") / "idx.bin"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert loaded.chunk_ids() == index.chunk_ids()
        assert (loaded.dim, loaded.metric, loaded.quantized) == (
            index.dim,
            index.metric,
            index.quantized,
        )
        for (_, pay_a), (_, pay_b) in zip(index.entries(), loaded.entries()):
            if isinstance(pay_a, QuantizedVector):
                assert pay_a.codes.tobytes() == pay_b.codes.tobytes()
                assert np.float32(pay_a.quant_constant) == np.float32(pay_b.quant_constant)
            else:
                assert pay_a.values.tobytes() == pay_b.values.tobytes()


def _blob(index):
    return index._serialize()


class TestSearchHit:
    def test_is_value_object(self):
        assert SearchHit("a", 0.5, 1) == SearchHit("a", 0.5, 1)
