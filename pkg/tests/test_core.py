import numpy as np
import pytest

from latebench import (
    Corpus,
    TokenMatrix,
    exact_search,
    maxsim_score,
    pool_fixed,
    validate_matrix,
)
from latebench.errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyMatrix,
    NonFinite,
    NotNormalized,
)

from conftest import basis_matrix, random_unit_matrix
from oracles import chunk_mean_pool, triple_loop_maxsim


def test_validate_accepts_unit_basis_vector():
    validate_matrix(basis_matrix([0], dim=4))


def test_validate_rejects_unnormalized_row():
    m = TokenMatrix(np.array([[1.0, 1.0, 0.0, 0.0]], dtype=np.float32))
    with pytest.raises(NotNormalized) as exc:
        validate_matrix(m)
    assert exc.value.row == 0
    assert exc.value.norm == pytest.approx(2 ** 0.5, abs=1e-6)


def test_validate_rejects_empty_matrix():
    m = TokenMatrix(np.zeros((0, 128), dtype=np.float32))
    with pytest.raises(EmptyMatrix):
        validate_matrix(m)


def test_validate_rejects_nan_with_position():
    data = np.eye(3, dtype=np.float32)
    data[1, 2] = np.nan
    with pytest.raises(NonFinite) as exc:
        validate_matrix(TokenMatrix(data))
    assert (exc.value.row, exc.value.col) == (1, 2)


def test_maxsim_identical_unit_vectors():
    e1 = basis_matrix([0], dim=4)
    assert maxsim_score(e1, e1) == pytest.approx(1.0)


def test_maxsim_orthogonal_rows_sum():
    q = basis_matrix([0, 1], dim=4)
    d = basis_matrix([0], dim=4)
    assert maxsim_score(q, d) == pytest.approx(1.0)


def test_maxsim_both_query_rows_matched():
    q = basis_matrix([0, 1], dim=4)
    d = basis_matrix([0, 1, 2], dim=4)
    assert maxsim_score(q, d) == pytest.approx(2.0)


def test_maxsim_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        maxsim_score(basis_matrix([0], dim=4), basis_matrix([0], dim=8))


def test_maxsim_agrees_with_triple_loop_oracle():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        q = random_unit_matrix(rng, 5, 16)
        d = random_unit_matrix(rng, 8, 16)
        assert maxsim_score(q, d) == pytest.approx(
            triple_loop_maxsim(q.data, d.data), abs=1e-5
        )


def test_maxsim_bounded_by_query_rows():
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = random_unit_matrix(rng, 7, 12)
        d = random_unit_matrix(rng, 9, 12)
        assert maxsim_score(q, d) <= 7 + 1e-6


def test_maxsim_equals_rows_iff_every_query_row_present():
    q = basis_matrix([0, 1, 2], dim=8)
    d = basis_matrix([2, 1, 0, 3], dim=8)
    assert maxsim_score(q, d) == pytest.approx(3.0)


def test_maxsim_monotone_in_doc_rows():
    rng = np.random.default_rng(2)
    q = random_unit_matrix(rng, 4, 16)
    d = random_unit_matrix(rng, 6, 16)
    extended = TokenMatrix(np.vstack([d.data, random_unit_matrix(rng, 3, 16).data]))
    assert maxsim_score(q, extended) >= maxsim_score(q, d) - 1e-7


def test_maxsim_appending_query_row_never_decreases_on_nonneg_dots():
    q = basis_matrix([0, 1], dim=8)
    longer = basis_matrix([0, 1, 2], dim=8)
    d = basis_matrix([0, 2], dim=8)
    assert maxsim_score(longer, d) >= maxsim_score(q, d)


def test_exact_search_scores_and_orders(basis_corpus):
    result = exact_search(basis_corpus, basis_matrix([0], dim=8), 2)
    assert [(h.doc_id, h.score) for h in result.hits] == [("A", 1.0), ("B", 0.0)]


def test_exact_search_ties_break_by_doc_id():
    docs = {
        "zeta": basis_matrix([0], dim=4),
        "alpha": basis_matrix([0], dim=4),
    }
    corpus = Corpus.build(docs)
    result = exact_search(corpus, basis_matrix([0], dim=4), 2)
    assert result.doc_ids() == ("alpha", "zeta")


def test_exact_search_invariant_under_permutation():
    rng = np.random.default_rng(3)
    mats = {f"d{i}": random_unit_matrix(rng, 5, 16) for i in range(20)}
    query = random_unit_matrix(rng, 4, 16)
    forward = exact_search(Corpus.build(mats), query, 10)
    shuffled = dict(reversed(list(mats.items())))
    backward = exact_search(Corpus.build(shuffled), query, 10)
    assert forward == backward


def test_exact_search_rejects_empty_and_mismatched(basis_corpus):
    with pytest.raises(DimensionMismatch):
        exact_search(basis_corpus, basis_matrix([0], dim=4), 1)
    with pytest.raises(EmptyCorpus):
        Corpus.build({})


def test_exact_search_threaded_matches_serial(basis_corpus, monkeypatch):
    rng = np.random.default_rng(9)
    mats = {f"d{i}": random_unit_matrix(rng, 5, 16) for i in range(40)}
    corpus = Corpus.build(mats)
    query = random_unit_matrix(rng, 4, 16)
    serial = exact_search(corpus, query, 10)
    monkeypatch.setenv("LATEBENCH_THREADS", "4")
    threaded = exact_search(corpus, query, 10)
    assert serial == threaded


def test_pool_identity_when_rows_equal_C():
    rng = np.random.default_rng(4)
    doc = random_unit_matrix(rng, 32, 16)
    pooled = pool_fixed(doc, 32)
    assert np.array_equal(pooled.data, doc.data)


def test_pool_constant_rows_give_constant_slots():
    doc = TokenMatrix(np.tile(basis_matrix([0], dim=8).data, (5, 1)))
    for C in (1, 3, 8):
        pooled = pool_fixed(doc, C)
        assert pooled.rows == C
        assert np.array_equal(pooled.data, np.tile(doc.data[:1], (C, 1)))


def test_pool_matches_chunk_mean_oracle():
    rng = np.random.default_rng(5)
    doc = random_unit_matrix(rng, 64, 16)
    pooled = pool_fixed(doc, 32)
    expected = chunk_mean_pool(doc.data, 32)
    assert pooled.data == pytest.approx(expected, abs=1e-6)


def test_pool_uneven_chunks_match_oracle():
    rng = np.random.default_rng(6)
    doc = random_unit_matrix(rng, 23, 8)
    pooled = pool_fixed(doc, 7)
    expected = chunk_mean_pool(doc.data, 7)
    assert pooled.data == pytest.approx(expected, abs=1e-6)


def test_pool_cycles_short_docs():
    doc = basis_matrix([0, 1, 2], dim=8)
    pooled = pool_fixed(doc, 5)
    expected = chunk_mean_pool(doc.data, 5)
    assert pooled.rows == 5
    assert pooled.data == pytest.approx(expected, abs=1e-6)


def test_pool_output_always_valid_unit_rows():
    rng = np.random.default_rng(7)
    for rows in (1, 5, 31, 33, 70):
        doc = random_unit_matrix(rng, rows, 12)
        pooled = pool_fixed(doc, 32)
        assert pooled.rows == 32
        validate_matrix(pooled)
