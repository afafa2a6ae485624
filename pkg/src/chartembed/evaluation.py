"""Retrieval index, context metrics, and the ablation harness.

Every chart of a corpus is embedded in inference mode and indexed by id.
For each anchor, the single nearest chart within the same dataset decides
three checks: co-occurrence (same visualization), top-2 (same visualization
and position gap <= 2), and top-3 (gap <= 3). The ablation harness retrains
the model under documented switch sets and evaluates each variant on a
shared corpus.
"""

from __future__ import annotations

import logging
import time
import tracemalloc
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, build_samples
from .encoder import EncoderConfig, EncoderParams, encode_chart, forward_batch, init_params
from .facts import StoryRef
from .learning import HyperParams, train
from .semantics import VectorStore

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    """Raised for unknown anchors, empty indexes, and scope errors."""


@dataclass(frozen=True)
class IndexEntry:
    chart_id: str
    vector: np.ndarray
    story: StoryRef
    dataset_id: str


class EmbeddingIndex:
    """Immutable chart_id -> (vector, story position, dataset) mapping."""

    def __init__(self, entries: Sequence[IndexEntry]):
        self._entries: dict[str, IndexEntry] = {}
        dim = None
        for entry in entries:
            if entry.chart_id in self._entries:
                raise EvaluationError(f"duplicate chart id {entry.chart_id!r}")
            if dim is None:
                dim = entry.vector.shape[0]
            elif entry.vector.shape[0] != dim:
                raise EvaluationError(
                    f"vector dimension mismatch: {entry.vector.shape[0]} vs {dim}"
                )
            self._entries[entry.chart_id] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, chart_id: str) -> bool:
        return chart_id in self._entries

    def __getitem__(self, chart_id: str) -> IndexEntry:
        return self._entries[chart_id]

    @property
    def dimension(self) -> int:
        if not self._entries:
            raise EvaluationError("empty index has no dimension")
        return next(iter(self._entries.values())).vector.shape[0]

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def entries(self) -> list[IndexEntry]:
        return [self._entries[i] for i in self.ids()]


def build_index(corpus: Corpus, params: EncoderParams, store: VectorStore) -> EmbeddingIndex:
    """Embed every chart of the corpus in inference mode."""
    refs = []
    for vis in corpus.visualizations:
        for position, (chart_id, fact) in enumerate(vis.charts):
            refs.append((chart_id, vis.id, position, vis.dataset_id, fact))
    if not refs:
        return EmbeddingIndex([])
    encoded = [encode_chart(fact, store, params.config) for *_, fact in refs]
    schemas = np.stack([e.schema for e in encoded])
    sems = np.stack([e.semantics for e in encoded])
    vectors, _ = forward_batch(schemas, sems, params, train=False)
    return EmbeddingIndex(
        [
            IndexEntry(
                chart_id=chart_id,
                vector=vectors[i],
                story=StoryRef(story_id=vis_id, position=position),
                dataset_id=dataset_id,
            )
            for i, (chart_id, vis_id, position, dataset_id, _) in enumerate(refs)
        ]
    )


def nearest(
    index: EmbeddingIndex,
    anchor: str,
    scope: str = "same-dataset",
    k: int = 1,
) -> list[tuple[str, float]]:
    """Ranked (chart_id, distance) list, ascending; ties break on chart id.

    Scope "same-dataset" restricts candidates to the anchor's dataset;
    "all" considers every other chart. The anchor itself is excluded.
    """
    if scope not in ("same-dataset", "all"):
        raise EvaluationError(f"unknown scope {scope!r}")
    if anchor not in index:
        raise EvaluationError(f"unknown anchor {anchor!r}")
    if k < 1:
        raise EvaluationError("k must be >= 1")
    anchor_entry = index[anchor]
    candidates = [
        e
        for e in index.entries()
        if e.chart_id != anchor
        and (scope == "all" or e.dataset_id == anchor_entry.dataset_id)
    ]
    if not candidates:
        raise EvaluationError(f"no candidates for anchor {anchor!r} in scope {scope}")
    ranked = sorted(
        (
            (float(np.linalg.norm(anchor_entry.vector - e.vector)), e.chart_id)
            for e in candidates
        ),
    )
    return [(chart_id, dist) for dist, chart_id in ranked[:k]]


@dataclass(frozen=True)
class AnchorDetail:
    anchor: str
    retrieved: Optional[str]
    distance: Optional[float]
    same_story: bool
    gap: Optional[int]
    top2: bool
    top3: bool
    cooccurrence: bool
    excluded: bool


@dataclass(frozen=True)
class MetricsReport:
    top2: float
    top3: float
    cooccurrence: float
    n_anchors: int
    n_excluded: int
    gap2: int
    gap3: int
    details: tuple[AnchorDetail, ...]


def compute_metrics(index: EmbeddingIndex, gap2: int = 2, gap3: int = 3) -> MetricsReport:
    """Score every anchor by its nearest same-dataset chart.

    Anchors without a same-dataset candidate cannot be scored; they are
    excluded from the denominators and reported in the detail rows.
    """
    if len(index) == 0:
        raise EvaluationError("empty index")
    details: list[AnchorDetail] = []
    hits2 = hits3 = hits_co = scored = 0
    for anchor_id in index.ids():
        try:
            (retrieved_id, distance), = nearest(index, anchor_id, "same-dataset", 1)
        except EvaluationError:
            details.append(
                AnchorDetail(
                    anchor=anchor_id, retrieved=None, distance=None, same_story=False,
                    gap=None, top2=False, top3=False, cooccurrence=False, excluded=True,
                )
            )
            continue
        anchor = index[anchor_id]
        retrieved = index[retrieved_id]
        same_story = anchor.story.story_id == retrieved.story.story_id
        gap = abs(anchor.story.position - retrieved.story.position) if same_story else None
        top2 = same_story and gap <= gap2
        top3 = same_story and gap <= gap3
        scored += 1
        hits2 += top2
        hits3 += top3
        hits_co += same_story
        details.append(
            AnchorDetail(
                anchor=anchor_id, retrieved=retrieved_id, distance=distance,
                same_story=same_story, gap=gap, top2=top2, top3=top3,
                cooccurrence=same_story, excluded=False,
            )
        )
    if scored == 0:
        raise EvaluationError("no scorable anchors (every dataset has one chart)")
    return MetricsReport(
        top2=hits2 / scored,
        top3=hits3 / scored,
        cooccurrence=hits_co / scored,
        n_anchors=scored,
        n_excluded=len(index) - scored,
        gap2=gap2,
        gap3=gap3,
        details=tuple(details),
    )


ABLATION_VARIANTS = (
    "full",
    "no-linear-interpolation",
    "no-classification",
    "no-fact-schema",
    "no-fact-semantics",
    "no-word-pooling",
    "words-avg-pooling",
    "word-max-pooling",
    "words-max-pooling",
    "no-pos",
    "no-fc",
)

# Variants differing from the full model by exactly one switch; the
# words-max variant flips both the pooling scope and the operator.
SINGLE_SWITCH_VARIANTS = tuple(
    v for v in ABLATION_VARIANTS if v not in ("full", "words-max-pooling")
)


def variant_switches(variant: str, base: EncoderConfig) -> tuple[EncoderConfig, tuple[bool, bool]]:
    """Map a variant name to its (encoder config, loss mask) switch set."""
    if variant == "full":
        return base, (True, True)
    if variant == "no-linear-interpolation":
        return base, (False, True)
    if variant == "no-classification":
        return base, (True, False)
    if variant == "no-fact-schema":
        return replace(base, zero_schema=True), (True, True)
    if variant == "no-fact-semantics":
        return replace(base, zero_semantics=True), (True, True)
    if variant == "no-word-pooling":
        return replace(base, semantic_mode="none"), (True, True)
    if variant == "words-avg-pooling":
        return replace(base, semantic_mode="words-average"), (True, True)
    if variant == "word-max-pooling":
        return replace(base, semantic_mode="word-max"), (True, True)
    if variant == "words-max-pooling":
        return replace(base, semantic_mode="words-max"), (True, True)
    if variant == "no-pos":
        return replace(base, use_locations=False), (True, True)
    if variant == "no-fc":
        return replace(base, use_fc=False), (True, True)
    raise EvaluationError(f"unknown ablation variant {variant!r}")


@dataclass(frozen=True)
class AblationResult:
    variant: str
    metrics: Optional[MetricsReport]
    wall_ms: float
    peak_bytes: int
    final_l1: Optional[float]
    final_l2: Optional[float]
    error: Optional[str] = None


def run_ablation(
    train_corpus: Corpus,
    eval_corpus: Corpus,
    store: VectorStore,
    hyper: HyperParams,
    variants: Sequence[str],
    seed: int,
    negatives_per_window: int = 1,
    policy: str = "same-dataset-first",
    base_config: Optional[EncoderConfig] = None,
) -> list[AblationResult]:
    """Train and evaluate each variant from the same seed and corpus.

    A failing variant is flagged and the rest continue.
    """
    if not variants:
        raise EvaluationError("no variants requested")
    for variant in variants:
        if variant not in ABLATION_VARIANTS:
            raise EvaluationError(f"unknown ablation variant {variant!r}")
    base = base_config or EncoderConfig(dropout=hyper.dropout)
    results: list[AblationResult] = []
    for variant in variants:
        started = time.perf_counter()
        tracemalloc.start()
        try:
            config, loss_mask = variant_switches(variant, base)
            sample_set = build_samples(
                train_corpus, store, negatives_per_window, policy, seed, config
            )
            params = init_params(seed, config)
            params, history = train(sample_set, hyper, params, loss_mask)
            index = build_index(eval_corpus, params, store)
            metrics = compute_metrics(index)
            final = history[-1] if history else None
            results.append(
                AblationResult(
                    variant=variant,
                    metrics=metrics,
                    wall_ms=(time.perf_counter() - started) * 1000.0,
                    peak_bytes=tracemalloc.get_traced_memory()[1],
                    final_l1=final.l1 if final and loss_mask[0] else None,
                    final_l2=final.l2 if final and loss_mask[1] else None,
                )
            )
            log.info(
                "variant %s: top2=%.3f top3=%.3f cooc=%.3f",
                variant, metrics.top2, metrics.top3, metrics.cooccurrence,
            )
        except Exception as exc:  # noqa: BLE001 - variant failures are data
            results.append(
                AblationResult(
                    variant=variant,
                    metrics=None,
                    wall_ms=(time.perf_counter() - started) * 1000.0,
                    peak_bytes=tracemalloc.get_traced_memory()[1],
                    final_l1=None,
                    final_l2=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
            log.warning("variant %s failed: %s", variant, exc)
        finally:
            tracemalloc.stop()
    return results


def ablation_csv(results: Sequence[AblationResult]) -> str:
    """CSV with one row per successful variant."""
    lines = ["variant,top2,top3,cooccurrence,wall_ms,peak_bytes"]
    for row in results:
        if row.metrics is None:
            continue
        lines.append(
            f"{row.variant},{row.metrics.top2:.6f},{row.metrics.top3:.6f},"
            f"{row.metrics.cooccurrence:.6f},{row.wall_ms:.1f},{row.peak_bytes}"
        )
    return "\n".join(lines) + "\n"


def render_ablation_table(results: Sequence[AblationResult]) -> str:
    """Aligned text table; masked loss columns render as an em-free dash."""
    headers = ("variant", "top2", "top3", "cooc", "l1", "l2", "wall_ms", "status")
    rows = []
    for row in results:
        if row.metrics is None:
            rows.append((row.variant, "-", "-", "-", "-", "-", f"{row.wall_ms:.0f}", row.error or "failed"))
            continue
        rows.append(
            (
                row.variant,
                f"{row.metrics.top2:.3f}",
                f"{row.metrics.top3:.3f}",
                f"{row.metrics.cooccurrence:.3f}",
                "-" if row.final_l1 is None else f"{row.final_l1:.3f}",
                "-" if row.final_l2 is None else f"{row.final_l2:.3f}",
                f"{row.wall_ms:.0f}",
                "ok",
            )
        )
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i]) for i in range(len(headers))]
    out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for r in rows:
        out.append("  ".join(str(r[i]).ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(out) + "\n"


def render_metrics(report: MetricsReport) -> str:
    return (
        f"anchors scored  {report.n_anchors}\n"
        f"anchors skipped {report.n_excluded}\n"
        f"top-2 accuracy  {report.top2:.4f}  (gap <= {report.gap2})\n"
        f"top-3 accuracy  {report.top3:.4f}  (gap <= {report.gap3})\n"
        f"co-occurrence   {report.cooccurrence:.4f}\n"
    )


def metrics_json(report: MetricsReport) -> dict:
    return {
        "top2": report.top2,
        "top3": report.top3,
        "cooccurrence": report.cooccurrence,
        "n_anchors": report.n_anchors,
        "n_excluded": report.n_excluded,
        "gap2": report.gap2,
        "gap3": report.gap3,
        "details": [
            {
                "anchor": d.anchor,
                "retrieved": d.retrieved,
                "distance": d.distance,
                "same_story": d.same_story,
                "gap": d.gap,
                "top2": d.top2,
                "top3": d.top3,
                "cooccurrence": d.cooccurrence,
                "excluded": d.excluded,
            }
            for d in report.details
        ],
    }


def save_index(index: EmbeddingIndex, path: str) -> None:
    """Write the index as TSV with 17-significant-digit floats (lossless)."""
    with open(path, "w", encoding="utf-8") as fh:
        dim = index.dimension if len(index) else 0
        header = ["chart_id", "story_id", "position", "dataset_id"]
        header += [f"v{i + 1}" for i in range(dim)]
        fh.write("\t".join(header) + "\n")
        for entry in index.entries():
            row = [
                entry.chart_id,
                entry.story.story_id,
                str(entry.story.position),
                entry.dataset_id,
            ]
            row += [format(x, ".17g") for x in entry.vector]
            fh.write("\t".join(row) + "\n")


def load_index(path: str) -> EmbeddingIndex:
    entries: list[IndexEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:4] != ["chart_id", "story_id", "position", "dataset_id"]:
            raise EvaluationError(f"{path}: not an embedding index file")
        dim = len(header) - 4
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4 + dim:
                raise EvaluationError(f"{path}:{lineno}: expected {4 + dim} fields")
            entries.append(
                IndexEntry(
                    chart_id=parts[0],
                    vector=np.array([float(x) for x in parts[4:]], dtype=np.float64),
                    story=StoryRef(story_id=parts[1], position=int(parts[2])),
                    dataset_id=parts[3],
                )
            )
    return EmbeddingIndex(entries)
