"""Orchestration: full, baseline, and ablated runs over one product.

The full mode chains extraction into comparison per review inside a bounded
worker pool, joins once for the single grouping call, then assembles the
report deterministically. With R productive reviews and a cold cache that
is R extraction calls, R comparison calls, and one grouping call: 2R + 1.
The baseline mode spends exactly one call on the whole product; the ablated
mode spends R extraction calls plus one direct report call.

Scheduling never leaks into results: per-review outcomes are collected in
dataset order regardless of completion order, so report bytes are identical
for any worker count. A review that fails permanently becomes a failed
unit; the rest of the product still reports.
"""

from __future__ import annotations

import enum
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .cache import DiskResponseCache
from .comparison import build_comparison_prompt, parse_comparison_response
from .domain import (
    CallStats,
    CategoryAssignment,
    ComparedAttribute,
    ExtractedAttribute,
    OTHER_CATEGORY,
    ProductRecord,
    Review,
    StructuredReport,
)
from .errors import (
    ExhaustedRetriesError,
    GatewayError,
    MalformedOutputError,
)
from .extraction import build_extraction_prompt, parse_extraction_response
from .gateway import (
    ApiCredential,
    ChatBackend,
    ChatRequest,
    ResponseFormat,
    RetryPolicy,
    complete_parsed,
    lookup_or_call,
)
from .grouping import build_grouping_prompt, collect_unique_keys, parse_grouping_response
from .prompt_library import DEFAULT_PROMPT_VERSION, render_prompt
from .structuring import build_report, merge_insights, parse_report_sections

__all__ = [
    "PipelineMode",
    "PipelineConfig",
    "PipelineResult",
    "StatsRecorder",
    "run_full",
    "run_baseline",
    "run_ablated",
    "run_product",
    "build_baseline_prompt",
    "build_ablated_prompt",
    "build_run_manifest",
    "lookup_or_call",
]

REPORT_SCHEMA = (
    '{"sections": [{"status": "<Missing|Contradictory|Partially-matching|Matching>", '
    '"categories": [{"category": "<label>", "insights": [{"attribute": "<name>", '
    '"values": ["<value>"], "evidence": ["<review id>"], '
    '"justifications": ["<quote or reasoning>"]}]}]}]}'
)


class PipelineMode(str, enum.Enum):
    FULL = "full"
    BASELINE = "baseline"
    ABLATED = "ablated"


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Everything a run needs except the credential, which never lives here."""

    extraction_model: str = "gemini-2.0-flash"
    comparison_model: str = "gemini-2.0-flash"
    grouping_model: str = "gemini-2.0-flash-lite"
    workers: int = 8
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    cache_dir: Path | None = None
    prompt_version: str = DEFAULT_PROMPT_VERSION
    mode: PipelineMode = PipelineMode.FULL
    extraction_temperature: float = 0.0
    comparison_temperature: float = 0.0
    grouping_temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        if not isinstance(self.mode, PipelineMode):
            object.__setattr__(self, "mode", PipelineMode(self.mode))

    def to_dict(self) -> dict[str, Any]:
        return {
            "extraction_model": self.extraction_model,
            "comparison_model": self.comparison_model,
            "grouping_model": self.grouping_model,
            "workers": self.workers,
            "retry": self.retry.to_dict(),
            "cache_dir": str(self.cache_dir) if self.cache_dir else None,
            "prompt_version": self.prompt_version,
            "mode": self.mode.value,
            "extraction_temperature": self.extraction_temperature,
            "comparison_temperature": self.comparison_temperature,
            "grouping_temperature": self.grouping_temperature,
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "PipelineConfig":
        defaults = cls()
        retry = payload.get("retry")
        cache_dir = payload.get("cache_dir")
        return cls(
            extraction_model=str(payload.get("extraction_model", defaults.extraction_model)),
            comparison_model=str(payload.get("comparison_model", defaults.comparison_model)),
            grouping_model=str(payload.get("grouping_model", defaults.grouping_model)),
            workers=int(payload.get("workers", defaults.workers)),
            retry=RetryPolicy.from_dict(retry) if isinstance(retry, Mapping) else defaults.retry,
            cache_dir=Path(cache_dir) if cache_dir else None,
            prompt_version=str(payload.get("prompt_version", defaults.prompt_version)),
            mode=PipelineMode(payload.get("mode", defaults.mode.value)),
            extraction_temperature=float(payload.get("extraction_temperature", 0.0)),
            comparison_temperature=float(payload.get("comparison_temperature", 0.0)),
            grouping_temperature=float(payload.get("grouping_temperature", 0.0)),
        )


class StatsRecorder:
    """Thread-safe accumulator behind the immutable CallStats snapshot."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._extraction = 0
        self._comparison = 0
        self._grouping = 0
        self._cache_hits = 0
        self._retries = 0

    def record_extraction(self) -> None:
        with self._lock:
            self._extraction += 1

    def record_comparison(self) -> None:
        with self._lock:
            self._comparison += 1

    def record_grouping(self) -> None:
        with self._lock:
            self._grouping += 1

    def record_cache_hit(self) -> None:
        with self._lock:
            self._cache_hits += 1

    def record_retry(self) -> None:
        with self._lock:
            self._retries += 1

    def snapshot(self) -> CallStats:
        with self._lock:
            return CallStats(
                extraction_calls=self._extraction,
                comparison_calls=self._comparison,
                grouping_calls=self._grouping,
                cache_hits=self._cache_hits,
                retries=self._retries,
            )


@dataclass(frozen=True, slots=True)
class PipelineResult:
    """A product run: the report, which reviews failed, what went sideways,
    and the per-review extractions (kept for the evaluation harness)."""

    report: StructuredReport
    failed_units: tuple[str, ...] = ()
    diagnostics: tuple[str, ...] = ()
    extractions: Mapping[str, tuple[ExtractedAttribute, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "failed_units", tuple(self.failed_units))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        object.__setattr__(
            self,
            "extractions",
            {rid: tuple(attrs) for rid, attrs in dict(self.extractions).items()},
        )


@dataclass(slots=True)
class _Runtime:
    gateway: ChatBackend
    credential: ApiCredential | None
    policy: RetryPolicy
    cache: DiskResponseCache | None
    stats: StatsRecorder


@dataclass(slots=True)
class _ReviewOutcome:
    review_id: str
    attributes: tuple[ExtractedAttribute, ...] = ()
    compared: tuple[ComparedAttribute, ...] = ()
    diagnostics: tuple[str, ...] = ()
    failed_stage: str | None = None
    extracted_ok: bool = False


def _make_runtime(
    config: PipelineConfig,
    gateway: ChatBackend,
    credential: ApiCredential | None,
    cache: DiskResponseCache | None,
) -> _Runtime:
    if cache is None and config.cache_dir is not None:
        cache = DiskResponseCache(config.cache_dir)
    return _Runtime(
        gateway=gateway,
        credential=credential,
        policy=config.retry,
        cache=cache,
        stats=StatsRecorder(),
    )


_STEP_FAILURES = (ExhaustedRetriesError, GatewayError, MalformedOutputError)


def _extract_and_compare(
    review: Review, product: ProductRecord, config: PipelineConfig, runtime: _Runtime
) -> _ReviewOutcome:
    """The chained per-review task: extraction feeds comparison directly."""
    notes: list[str] = []
    extraction_request = build_extraction_prompt(
        review,
        product.title,
        model=config.extraction_model,
        temperature=config.extraction_temperature,
        prompt_version=config.prompt_version,
    )
    try:
        attributes = complete_parsed(
            extraction_request,
            lambda text, _scratch: parse_extraction_response(text, review.review_id),
            gateway=runtime.gateway,
            credential=runtime.credential,
            policy=runtime.policy,
            cache=runtime.cache,
            stats=runtime.stats,
            diagnostics=notes,
        )
    except _STEP_FAILURES as exc:
        notes.append(f"review {review.review_id}: extraction failed permanently: {exc}")
        return _ReviewOutcome(review.review_id, diagnostics=tuple(notes), failed_stage="extraction")
    runtime.stats.record_extraction()
    if not attributes:
        return _ReviewOutcome(
            review.review_id, attributes=(), compared=(), diagnostics=tuple(notes), extracted_ok=True
        )
    comparison_request = build_comparison_prompt(
        attributes,
        product.seller_description,
        model=config.comparison_model,
        temperature=config.comparison_temperature,
        prompt_version=config.prompt_version,
    )
    try:
        compared = complete_parsed(
            comparison_request,
            lambda text, scratch: parse_comparison_response(text, attributes, diagnostics=scratch),
            gateway=runtime.gateway,
            credential=runtime.credential,
            policy=runtime.policy,
            cache=runtime.cache,
            stats=runtime.stats,
            diagnostics=notes,
        )
    except _STEP_FAILURES as exc:
        notes.append(f"review {review.review_id}: comparison failed permanently: {exc}")
        return _ReviewOutcome(
            review.review_id,
            attributes=tuple(attributes),
            diagnostics=tuple(notes),
            failed_stage="comparison",
            extracted_ok=True,
        )
    runtime.stats.record_comparison()
    return _ReviewOutcome(
        review.review_id,
        attributes=tuple(attributes),
        compared=tuple(compared),
        diagnostics=tuple(notes),
        extracted_ok=True,
    )


def _extract_only(
    review: Review, product: ProductRecord, config: PipelineConfig, runtime: _Runtime
) -> _ReviewOutcome:
    notes: list[str] = []
    request = build_extraction_prompt(
        review,
        product.title,
        model=config.extraction_model,
        temperature=config.extraction_temperature,
        prompt_version=config.prompt_version,
    )
    try:
        attributes = complete_parsed(
            request,
            lambda text, _scratch: parse_extraction_response(text, review.review_id),
            gateway=runtime.gateway,
            credential=runtime.credential,
            policy=runtime.policy,
            cache=runtime.cache,
            stats=runtime.stats,
            diagnostics=notes,
        )
    except _STEP_FAILURES as exc:
        notes.append(f"review {review.review_id}: extraction failed permanently: {exc}")
        return _ReviewOutcome(review.review_id, diagnostics=tuple(notes), failed_stage="extraction")
    runtime.stats.record_extraction()
    return _ReviewOutcome(
        review.review_id, attributes=tuple(attributes), diagnostics=tuple(notes), extracted_ok=True
    )


def _map_reviews(product, config, runtime, task) -> list[_ReviewOutcome]:
    """Run the per-review task with at most ``config.workers`` in flight,
    collecting outcomes in dataset order whatever the completion order."""
    reviews = product.reviews
    if not reviews:
        return []
    if config.workers == 1 or len(reviews) == 1:
        return [task(review, product, config, runtime) for review in reviews]
    with ThreadPoolExecutor(max_workers=min(config.workers, len(reviews))) as pool:
        futures = [pool.submit(task, review, product, config, runtime) for review in reviews]
        return [future.result() for future in futures]


def _assign_categories(
    compared: list[ComparedAttribute], config: PipelineConfig, runtime: _Runtime
) -> tuple[CategoryAssignment, list[str]]:
    keys = collect_unique_keys(compared)
    if not keys:
        return CategoryAssignment(), []
    notes: list[str] = []
    request = build_grouping_prompt(
        keys,
        model=config.grouping_model,
        temperature=config.grouping_temperature,
        prompt_version=config.prompt_version,
    )
    runtime.stats.record_grouping()
    try:
        assignment = complete_parsed(
            request,
            lambda text, scratch: parse_grouping_response(text, keys, diagnostics=scratch),
            gateway=runtime.gateway,
            credential=runtime.credential,
            policy=runtime.policy,
            cache=runtime.cache,
            stats=runtime.stats,
            diagnostics=notes,
        )
    except _STEP_FAILURES as exc:
        notes.append(
            f"grouping failed permanently; every attribute assigned {OTHER_CATEGORY!r}: {exc}"
        )
        assignment = CategoryAssignment(mapping={key: OTHER_CATEGORY for key in keys})
    return assignment, notes


def _empty_report(product: ProductRecord, stats: CallStats) -> StructuredReport:
    return build_report([], CategoryAssignment(), product_id=product.product_id, stats=stats)


def run_full(
    product: ProductRecord,
    config: PipelineConfig,
    gateway: ChatBackend,
    *,
    credential: ApiCredential | None = None,
    cache: DiskResponseCache | None = None,
) -> PipelineResult:
    """The multi-step pipeline: per-review extract and compare, one grouping
    call, deterministic structuring."""
    runtime = _make_runtime(config, gateway, credential, cache)
    outcomes = _map_reviews(product, config, runtime, _extract_and_compare)

    diagnostics: list[str] = []
    failed: list[str] = []
    compared: list[ComparedAttribute] = []
    extractions: dict[str, tuple[ExtractedAttribute, ...]] = {}
    for outcome in outcomes:
        diagnostics.extend(outcome.diagnostics)
        if outcome.extracted_ok:
            extractions[outcome.review_id] = outcome.attributes
        if outcome.failed_stage is not None:
            failed.append(outcome.review_id)
            continue
        compared.extend(outcome.compared)

    assignment, grouping_notes = _assign_categories(compared, config, runtime)
    diagnostics.extend(grouping_notes)

    report = build_report(
        merge_insights(compared),
        assignment,
        product_id=product.product_id,
        stats=runtime.stats.snapshot(),
    )
    return PipelineResult(
        report=report,
        failed_units=tuple(failed),
        diagnostics=tuple(diagnostics),
        extractions=extractions,
    )


def build_baseline_prompt(
    product: ProductRecord,
    *,
    model: str,
    temperature: float = 0.0,
    prompt_version: str = DEFAULT_PROMPT_VERSION,
) -> ChatRequest:
    """One prompt holding the description and every review, asking for the
    finished report in a single step."""
    reviews_block = "\n".join(
        f"[{review.review_id}] {review.text}" for review in product.reviews
    )
    system_prompt, user_prompt = render_prompt(
        "baseline_report",
        prompt_version=prompt_version,
        title=product.title,
        seller_description=product.seller_description,
        reviews_block=reviews_block,
        schema=REPORT_SCHEMA,
    )
    return ChatRequest(
        model=model,
        system_prompt=system_prompt,
        user_prompt=user_prompt,
        temperature=temperature,
        response_format=ResponseFormat.JSON_OBJECT,
    )


def build_ablated_prompt(
    product: ProductRecord,
    attributes: list[ExtractedAttribute],
    *,
    model: str,
    temperature: float = 0.0,
    prompt_version: str = DEFAULT_PROMPT_VERSION,
) -> ChatRequest:
    """Direct report prompt over pre-extracted attributes, skipping the
    dedicated comparison and grouping calls."""
    attributes_json = json.dumps(
        [
            {"attribute": attr.key, "value": attr.value, "review_id": attr.review_id}
            for attr in attributes
        ],
        ensure_ascii=False,
        indent=2,
    )
    system_prompt, user_prompt = render_prompt(
        "ablated_report",
        prompt_version=prompt_version,
        title=product.title,
        seller_description=product.seller_description,
        attributes_json=attributes_json,
        schema=REPORT_SCHEMA,
    )
    return ChatRequest(
        model=model,
        system_prompt=system_prompt,
        user_prompt=user_prompt,
        temperature=temperature,
        response_format=ResponseFormat.JSON_OBJECT,
    )


def _direct_report(
    request: ChatRequest,
    product: ProductRecord,
    runtime: _Runtime,
) -> tuple[StructuredReport | None, list[str], bool]:
    """Resolve a whole-report request. Returns (report, notes, unit_failed).

    Unparseable output after retries degrades to an empty report with a
    diagnostic; transport-level exhaustion marks the unit failed.
    """
    notes: list[str] = []
    runtime.stats.record_grouping()  # the direct report call is the run's "+1"
    try:
        insights, assignment = complete_parsed(
            request,
            lambda text, scratch: parse_report_sections(
                text, product.review_ids, diagnostics=scratch
            ),
            gateway=runtime.gateway,
            credential=runtime.credential,
            policy=runtime.policy,
            cache=runtime.cache,
            stats=runtime.stats,
            diagnostics=notes,
        )
    except _STEP_FAILURES as exc:
        malformed = isinstance(exc, MalformedOutputError) or (
            isinstance(exc, ExhaustedRetriesError)
            and isinstance(exc.last_error, MalformedOutputError)
        )
        if malformed:
            notes.append(f"report payload unusable after retries; emitting empty report: {exc}")
            return None, notes, False
        notes.append(f"direct report call failed permanently: {exc}")
        return None, notes, True
    report = build_report(
        insights, assignment, product_id=product.product_id, stats=runtime.stats.snapshot()
    )
    return report, notes, False


def run_baseline(
    product: ProductRecord,
    config: PipelineConfig,
    gateway: ChatBackend,
    *,
    credential: ApiCredential | None = None,
    cache: DiskResponseCache | None = None,
) -> PipelineResult:
    """Single-call mode: the whole product in one prompt, one response."""
    runtime = _make_runtime(config, gateway, credential, cache)
    if not product.reviews:
        return PipelineResult(report=_empty_report(product, runtime.stats.snapshot()))
    request = build_baseline_prompt(
        product,
        model=config.comparison_model,
        temperature=config.comparison_temperature,
        prompt_version=config.prompt_version,
    )
    report, notes, unit_failed = _direct_report(request, product, runtime)
    failed = tuple(product.review_ids) if unit_failed else ()
    if report is None:
        report = _empty_report(product, runtime.stats.snapshot())
    return PipelineResult(report=report, failed_units=failed, diagnostics=tuple(notes))


def run_ablated(
    product: ProductRecord,
    config: PipelineConfig,
    gateway: ChatBackend,
    *,
    credential: ApiCredential | None = None,
    cache: DiskResponseCache | None = None,
) -> PipelineResult:
    """Extraction plus one direct report call; no per-review comparison and
    no dedicated grouping call."""
    runtime = _make_runtime(config, gateway, credential, cache)
    outcomes = _map_reviews(product, config, runtime, _extract_only)

    diagnostics: list[str] = []
    failed: list[str] = []
    attributes: list[ExtractedAttribute] = []
    extractions: dict[str, tuple[ExtractedAttribute, ...]] = {}
    for outcome in outcomes:
        diagnostics.extend(outcome.diagnostics)
        if outcome.failed_stage is not None:
            failed.append(outcome.review_id)
            continue
        extractions[outcome.review_id] = outcome.attributes
        attributes.extend(outcome.attributes)

    if not attributes:
        return PipelineResult(
            report=_empty_report(product, runtime.stats.snapshot()),
            failed_units=tuple(failed),
            diagnostics=tuple(diagnostics),
            extractions=extractions,
        )

    request = build_ablated_prompt(
        product,
        attributes,
        model=config.comparison_model,
        temperature=config.comparison_temperature,
        prompt_version=config.prompt_version,
    )
    report, notes, unit_failed = _direct_report(request, product, runtime)
    diagnostics.extend(notes)
    if unit_failed:
        # The terminal call covered every review, so the whole product failed.
        failed = list(product.review_ids)
    if report is None:
        report = _empty_report(product, runtime.stats.snapshot())
    return PipelineResult(
        report=report,
        failed_units=tuple(failed),
        diagnostics=tuple(diagnostics),
        extractions=extractions,
    )


def run_product(
    product: ProductRecord,
    config: PipelineConfig,
    gateway: ChatBackend,
    *,
    credential: ApiCredential | None = None,
    cache: DiskResponseCache | None = None,
) -> PipelineResult:
    """Dispatch on the configured mode."""
    runner = {
        PipelineMode.FULL: run_full,
        PipelineMode.BASELINE: run_baseline,
        PipelineMode.ABLATED: run_ablated,
    }[config.mode]
    return runner(product, config, gateway, credential=credential, cache=cache)


def build_run_manifest(
    product: ProductRecord,
    config: PipelineConfig,
    result: PipelineResult,
    *,
    backend_label: str,
) -> dict[str, Any]:
    """The run manifest: mode, config echo (a credential never lives in the
    config, so nothing secret can leak here), call stats, failures."""
    return {
        "product_id": product.product_id,
        "title": product.title,
        "category": product.category,
        "mode": config.mode.value,
        "backend": backend_label,
        "config": config.to_dict(),
        "call_stats": result.report.call_stats.to_dict(),
        "failed_units": list(result.failed_units),
        "diagnostics": list(result.diagnostics),
    }
