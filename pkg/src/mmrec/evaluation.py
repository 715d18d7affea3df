"""Recommendation-quality metrics: Top-1, Recall@k, MRR@k, with breakdowns.

A recommendation counts only on an exact, case-sensitive string match with
the ground truth. MRR is cutoff-bounded: a hit below rank k contributes 0 at
cutoff k. Reports slice the run by element kind, by context size and by how
often the ground truth occurred in the training corpus.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .sampling import TestSample, KINDS

REPORT_FORMAT_VERSION = "report-v1"

DEFAULT_KS = (1, 5, 10, 20)
DEFAULT_CONTEXT_EDGES = (1, 11, 21, 31, 41, 51)
DEFAULT_OCCURRENCE_EDGES = (0, 1, 2, 11)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredRecord:
    sample: TestSample
    candidates: tuple[str, ...]
    rank: int | None  # 1-based; None when the ground truth never appears

    @classmethod
    def from_candidates(cls, sample: TestSample, candidates) -> "ScoredRecord":
        texts = tuple(candidates)
        rank = None
        for i, text in enumerate(texts):
            if text == sample.ground_truth:
                rank = i + 1
                break
        return cls(sample=sample, candidates=texts, rank=rank)


def recall_at_k(run, k: int) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    run = list(run)
    if not run:
        raise EvaluationError("empty run")
    hits = sum(1 for r in run if r.rank is not None and r.rank <= k)
    return hits / len(run)


def mrr_at_k(run, k: int) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    run = list(run)
    if not run:
        raise EvaluationError("empty run")
    total = sum(1.0 / r.rank for r in run if r.rank is not None and r.rank <= k)
    return total / len(run)


# ---------------------------------------------------------------------------
# Report structure
# ---------------------------------------------------------------------------


@dataclass
class MetricBlock:
    count: int
    top1: float | None
    recall_at: dict[int, float]
    mrr_at: dict[int, float]

    @classmethod
    def from_run(cls, run, ks) -> "MetricBlock":
        run = list(run)
        if not run:
            return cls(count=0, top1=None, recall_at={}, mrr_at={})
        recall = {k: recall_at_k(run, k) for k in ks}
        mrr = {k: mrr_at_k(run, k) for k in ks}
        return cls(count=len(run), top1=recall_at_k(run, 1), recall_at=recall, mrr_at=mrr)

    def to_json_obj(self) -> dict:
        return {
            "count": self.count,
            "top1": self.top1,
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "mrr_at": {str(k): v for k, v in self.mrr_at.items()},
        }

    @classmethod
    def from_json_obj(cls, d: dict) -> "MetricBlock":
        return cls(
            count=d["count"],
            top1=d["top1"],
            recall_at={int(k): v for k, v in d["recall_at"].items()},
            mrr_at={int(k): v for k, v in d["mrr_at"].items()},
        )


@dataclass
class BinSlice:
    label: str
    lo: int
    hi: int | None  # None for an unbounded final bin
    metrics: MetricBlock
    per_kind: dict[str, MetricBlock]

    def to_json_obj(self) -> dict:
        return {
            "label": self.label,
            "lo": self.lo,
            "hi": self.hi,
            "metrics": self.metrics.to_json_obj(),
            "per_kind": {k: v.to_json_obj() for k, v in self.per_kind.items()},
        }

    @classmethod
    def from_json_obj(cls, d: dict) -> "BinSlice":
        return cls(
            label=d["label"],
            lo=d["lo"],
            hi=d["hi"],
            metrics=MetricBlock.from_json_obj(d["metrics"]),
            per_kind={k: MetricBlock.from_json_obj(v) for k, v in d["per_kind"].items()},
        )


@dataclass
class EvalReport:
    ks: list[int]
    overall: MetricBlock
    per_kind: dict[str, MetricBlock]
    context_bins: list[BinSlice] = field(default_factory=list)
    occurrence_bins: list[BinSlice] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "version": REPORT_FORMAT_VERSION,
            "ks": list(self.ks),
            "overall": self.overall.to_json_obj(),
            "per_kind": {k: v.to_json_obj() for k, v in self.per_kind.items()},
            "context_bins": [b.to_json_obj() for b in self.context_bins],
            "occurrence_bins": [b.to_json_obj() for b in self.occurrence_bins],
        }

    @classmethod
    def from_json_obj(cls, d: dict) -> "EvalReport":
        if d.get("version") != REPORT_FORMAT_VERSION:
            raise EvaluationError(f"unsupported report version {d.get('version')!r}")
        return cls(
            ks=list(d["ks"]),
            overall=MetricBlock.from_json_obj(d["overall"]),
            per_kind={k: MetricBlock.from_json_obj(v) for k, v in d["per_kind"].items()},
            context_bins=[BinSlice.from_json_obj(b) for b in d["context_bins"]],
            occurrence_bins=[BinSlice.from_json_obj(b) for b in d["occurrence_bins"]],
        )


def _make_bins(edges) -> list[tuple[str, int, int | None]]:
    edges = list(edges)
    if edges != sorted(edges) or len(set(edges)) != len(edges):
        raise EvaluationError("bin edges must be strictly increasing")
    if not edges:
        raise EvaluationError("at least one bin edge required")
    bins = []
    for lo, nxt in zip(edges, edges[1:]):
        bins.append((f"[{lo},{nxt - 1}]", lo, nxt - 1))
    bins.append((f"[{edges[-1]},inf)", edges[-1], None))
    return bins


def _bin_run(run, value_of, edges, ks) -> list[BinSlice]:
    bins = _make_bins(edges)
    grouped: dict[str, list] = {label: [] for label, _, _ in bins}
    overflow = []
    for record in run:
        v = value_of(record)
        placed = False
        for label, lo, hi in bins:
            if v >= lo and (hi is None or v <= hi):
                grouped[label].append(record)
                placed = True
                break
        if not placed:
            overflow.append(record)
    slices = [
        BinSlice(
            label=label,
            lo=lo,
            hi=hi,
            metrics=MetricBlock.from_run(grouped[label], ks),
            per_kind={
                kind: MetricBlock.from_run(
                    [r for r in grouped[label] if r.sample.kind == kind], ks
                )
                for kind in KINDS
            },
        )
        for label, lo, hi in bins
    ]
    if overflow:
        slices.append(
            BinSlice(
                label="other",
                lo=-(2**31),
                hi=bins[0][1] - 1,
                metrics=MetricBlock.from_run(overflow, ks),
                per_kind={
                    kind: MetricBlock.from_run(
                        [r for r in overflow if r.sample.kind == kind], ks
                    )
                    for kind in KINDS
                },
            )
        )
    return slices


def bin_by_context(run, edges=DEFAULT_CONTEXT_EDGES, ks=DEFAULT_KS) -> list[BinSlice]:
    """Slice a run by the number of elements available in each context."""
    return _bin_run(list(run), lambda r: r.sample.context_size, edges, ks)


def bin_by_occurrence(run, train_freq_table: dict, edges=DEFAULT_OCCURRENCE_EDGES,
                      ks=DEFAULT_KS) -> list[BinSlice]:
    """Slice a run by how often each ground truth occurred in training.

    Occurrences are counted over all element kinds of the training corpus.
    """
    totals: dict[str, int] = {}
    for kind_counts in train_freq_table.values():
        for ident, n in kind_counts.items():
            totals[ident] = totals.get(ident, 0) + n
    return _bin_run(
        list(run), lambda r: totals.get(r.sample.ground_truth, 0), edges, ks
    )


def build_report(run, ks=DEFAULT_KS, context_edges=DEFAULT_CONTEXT_EDGES,
                 occurrence_edges=DEFAULT_OCCURRENCE_EDGES,
                 train_freq_table: dict | None = None) -> EvalReport:
    run = list(run)
    if not run:
        raise EvaluationError("empty run")
    ks = sorted(set(ks))
    report = EvalReport(
        ks=list(ks),
        overall=MetricBlock.from_run(run, ks),
        per_kind={
            kind: MetricBlock.from_run([r for r in run if r.sample.kind == kind], ks)
            for kind in KINDS
        },
        context_bins=bin_by_context(run, context_edges, ks),
    )
    if train_freq_table is not None:
        report.occurrence_bins = bin_by_occurrence(run, train_freq_table, occurrence_edges, ks)
    return report


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _csv_rows(report: EvalReport):
    def block_rows(kind: str, bin_label: str, block: MetricBlock):
        def val(x):
            return "NA" if x is None or block.count == 0 else repr(x)

        yield ("top1", kind, bin_label, 1, val(block.top1))
        for k in report.ks:
            yield ("recall", kind, bin_label, k, val(block.recall_at.get(k)))
        for k in report.ks:
            yield ("mrr", kind, bin_label, k, val(block.mrr_at.get(k)))

    yield from block_rows("all", "all", report.overall)
    for kind, block in report.per_kind.items():
        yield from block_rows(kind, "all", block)
    for prefix, bins in (("context", report.context_bins),
                         ("occurrence", report.occurrence_bins)):
        for b in bins:
            label = f"{prefix}:{b.label}"
            yield from block_rows("all", label, b.metrics)
            for kind, block in b.per_kind.items():
                yield from block_rows(kind, label, block)


def emit_report(report: EvalReport, json_path) -> tuple[str, str]:
    """Write the JSON report and its CSV flattening; returns both paths."""
    json_path = str(json_path)
    csv_path = json_path[: -len(".json")] + ".csv" if json_path.endswith(".json") \
        else json_path + ".csv"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.to_json_obj(), f, indent=2)
        f.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "kind", "bin", "k", "value"])
        for row in _csv_rows(report):
            writer.writerow(row)
    return json_path, csv_path


def load_report(json_path) -> EvalReport:
    with open(json_path, encoding="utf-8") as f:
        return EvalReport.from_json_obj(json.load(f))
