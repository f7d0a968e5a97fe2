"""Diagnostic drivers: centroid coverage, query truncation, parameter grids,
and backend agreement.

Each driver is a pure orchestration of read-only searches plus the metric
suite, and each has a tabular form whose columns mirror the corresponding
experiment write-up (truncation rows carry MRR@10 / Recall@1000 / nDCG@10,
grid rows add the fixed ndocs, and so on).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Corpus, RankedList, TokenMatrix, exact_search
from .errors import EmptyIndex, EmptyLengths, NoSharedQueries
from .ivf import IvfIndex, ivf_search
from .metrics import MetricSpec, evaluate_run
from .plaid import PlaidIndex, plaid_search
from .trec import Qrels, RunFile

logger = logging.getLogger(__name__)

SearchFn = Callable[[TokenMatrix, int, str], RankedList]

TABLE_SPECS = (MetricSpec("mrr", 10), MetricSpec("recall", 1000), MetricSpec("ndcg", 10))


def exact_searcher(corpus: Corpus) -> SearchFn:
    def search(query: TokenMatrix, k: int, query_id: str = "") -> RankedList:
        return exact_search(corpus, query, k, query_id=query_id)

    return search


def ivf_searcher(index: IvfIndex, nprobe=None, per_token_candidates=None) -> SearchFn:
    def search(query: TokenMatrix, k: int, query_id: str = "") -> RankedList:
        return ivf_search(index, query, k, nprobe, per_token_candidates, query_id=query_id)

    return search


def plaid_searcher(index: PlaidIndex, ncells=None, threshold=None, ndocs=None) -> SearchFn:
    def search(query: TokenMatrix, k: int, query_id: str = "") -> RankedList:
        return plaid_search(index, query, k, ncells, threshold, ndocs, query_id=query_id)

    return search


def run_queries(
    search: SearchFn, queries: Mapping[str, TokenMatrix], k: int, tag: str = "latebench"
) -> RunFile:
    lists = [search(matrix, k, qid) for qid, matrix in queries.items()]
    return RunFile.from_ranked_lists(lists, tag=tag)


@dataclass(frozen=True)
class CoverageReport:
    per_doc: tuple[tuple[str, int, int], ...]  # (doc id, rows, unique centroids)
    mean_unique: float
    median_unique: float
    mean_rows: float
    coverage_fraction: float
    sample_size: int

    def rows(self) -> list[list[str]]:
        out = [["doc_id", "rows", "unique_centroids", "fraction"]]
        for doc_id, rows, unique in self.per_doc:
            out.append([doc_id, str(rows), str(unique), f"{unique / rows:.6f}"])
        out.append(["mean", f"{self.mean_rows:.4f}", f"{self.mean_unique:.4f}",
                    f"{self.coverage_fraction:.6f}"])
        out.append(["median", "-", f"{self.median_unique:.1f}", "-"])
        return out


def centroid_coverage(index: PlaidIndex, sample: int = 5000, seed: int = 0) -> CoverageReport:
    """Unique-centroid footprint over a seeded document sample."""
    if index.doc_count == 0:
        raise EmptyIndex("index holds no documents")
    if sample < 1:
        raise ValueError("sample must be >= 1")
    if sample > index.doc_count:
        logger.warning(
            "coverage sample %d exceeds doc count %d; clamping", sample, index.doc_count
        )
        sample = index.doc_count
    rng = np.random.default_rng(seed)
    ordinals = np.sort(rng.choice(index.doc_count, size=sample, replace=False))
    per_doc = []
    uniques = []
    rows_list = []
    for ordinal in ordinals.tolist():
        rows = index.doc_rows(ordinal)
        unique = int(len(index.unique_codes[ordinal]))
        per_doc.append((index.doc_ids[ordinal], rows, unique))
        uniques.append(unique)
        rows_list.append(rows)
    mean_unique = float(np.mean(uniques))
    mean_rows = float(np.mean(rows_list))
    return CoverageReport(
        per_doc=tuple(per_doc),
        mean_unique=mean_unique,
        median_unique=float(np.median(uniques)),
        mean_rows=mean_rows,
        coverage_fraction=mean_unique / mean_rows,
        sample_size=sample,
    )


@dataclass(frozen=True)
class AblationRow:
    length: int
    mrr_at_10: float
    recall_at_1000: float
    ndcg_at_10: float


@dataclass(frozen=True)
class AblationTable:
    rows: tuple[AblationRow, ...]

    def table(self) -> list[list[str]]:
        out = [["length", "MRR@10", "Recall@1000", "nDCG@10"]]
        for row in self.rows:
            out.append([str(row.length), f"{row.mrr_at_10:.6f}",
                        f"{row.recall_at_1000:.6f}", f"{row.ndcg_at_10:.6f}"])
        return out


def _table_metrics(run: RunFile, qrels: Qrels) -> tuple[float, float, float]:
    reports = evaluate_run(run, qrels, TABLE_SPECS)
    return (
        reports["MRR@10"].aggregate,
        reports["Recall@1000"].aggregate,
        reports["nDCG@10"].aggregate,
    )


def truncation_ablation(
    queries: Mapping[str, TokenMatrix],
    search: SearchFn,
    lengths: Sequence[int],
    k: int,
    qrels: Qrels,
) -> AblationTable:
    """Evaluate the backend on row-prefix truncated queries, one row per length.

    Truncation operates on token-vector prefixes: external embeddings arrive
    pre-tokenized, so a word budget maps onto the first N rows.
    """
    if not lengths:
        raise EmptyLengths("at least one truncation length is required")
    if list(lengths) != sorted(set(lengths)):
        raise ValueError("lengths must be strictly increasing")
    if min(lengths) < 1:
        raise ValueError("lengths must be >= 1")
    rows = []
    for length in lengths:
        truncated = {qid: matrix.truncated(length) for qid, matrix in queries.items()}
        run = run_queries(search, truncated, k)
        mrr, recall, ndcg = _table_metrics(run, qrels)
        rows.append(AblationRow(length=length, mrr_at_10=mrr,
                                recall_at_1000=recall, ndcg_at_10=ndcg))
    return AblationTable(rows=tuple(rows))


@dataclass(frozen=True)
class GridCell:
    ncells: int
    threshold: float
    mrr_at_10: float
    recall_at_1000: float
    ndcg_at_10: float


@dataclass(frozen=True)
class GridResult:
    ndocs: int
    cells: tuple[GridCell, ...]

    def table(self) -> list[list[str]]:
        out = [["threshold", "ncells", "ndocs", "MRR@10", "Recall@1000", "nDCG@10"]]
        for cell in self.cells:
            out.append([f"{cell.threshold:g}", str(cell.ncells), str(self.ndocs),
                        f"{cell.mrr_at_10:.6f}", f"{cell.recall_at_1000:.6f}",
                        f"{cell.ndcg_at_10:.6f}"])
        return out


def grid_search(
    index: PlaidIndex,
    queries: Mapping[str, TokenMatrix],
    qrels: Qrels,
    ncells_set: Sequence[int],
    threshold_set: Sequence[float],
    ndocs: int,
    k: int,
) -> GridResult:
    """Evaluate every (ncells, threshold) pair at a fixed ndocs."""
    if not ncells_set or not threshold_set:
        raise ValueError("ncells_set and threshold_set must be non-empty")
    cells = []
    for threshold in sorted(threshold_set):
        for ncells in sorted(ncells_set):
            search = plaid_searcher(index, ncells=ncells, threshold=threshold, ndocs=ndocs)
            run = run_queries(search, queries, k)
            mrr, recall, ndcg = _table_metrics(run, qrels)
            cells.append(GridCell(ncells=ncells, threshold=threshold, mrr_at_10=mrr,
                                  recall_at_1000=recall, ndcg_at_10=ndcg))
    return GridResult(ndocs=ndocs, cells=tuple(cells))


@dataclass(frozen=True)
class AgreementReport:
    per_query_overlap: Mapping[str, float]
    mean_overlap: float
    metric_deltas: Mapping[str, float]  # label -> aggregate(A) - aggregate(B)

    def table(self) -> list[list[str]]:
        out = [["query_id", "jaccard_overlap"]]
        for qid in sorted(self.per_query_overlap):
            out.append([qid, f"{self.per_query_overlap[qid]:.6f}"])
        out.append(["mean", f"{self.mean_overlap:.6f}"])
        for label, delta in self.metric_deltas.items():
            out.append([f"delta[{label}]", f"{delta:.6f}"])
        return out


def compare_runs(run_a: RunFile, run_b: RunFile, qrels: Qrels, k: int) -> AgreementReport:
    """Top-k Jaccard overlap per shared query plus aggregate metric deltas."""
    shared = sorted(set(run_a.query_ids()) & set(run_b.query_ids()))
    if not shared:
        raise NoSharedQueries("the two runs have no query ids in common")
    overlaps = {}
    for qid in shared:
        top_a = set(run_a.top_ids(qid, k))
        top_b = set(run_b.top_ids(qid, k))
        union = top_a | top_b
        overlaps[qid] = len(top_a & top_b) / len(union) if union else 1.0
    reports_a = evaluate_run(run_a, qrels, TABLE_SPECS)
    reports_b = evaluate_run(run_b, qrels, TABLE_SPECS)
    deltas = {
        label: reports_a[label].aggregate - reports_b[label].aggregate
        for label in reports_a
    }
    return AgreementReport(
        per_query_overlap=overlaps,
        mean_overlap=float(np.mean(list(overlaps.values()))),
        metric_deltas=deltas,
    )
