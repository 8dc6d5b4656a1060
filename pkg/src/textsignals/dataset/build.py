"""Assemble a :class:`SignalsDataset` from a config and data sources."""
from __future__ import annotations

import datetime as dt
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .. import __version__
from ..core import Feed, Signal, TimeSeries, align, tick_range
from ..sources.http import HttpClient, SourceError
from ..sources.news import LocalCorpusSource, NewsQuery, NewsSource, fetch_stories
from ..sources.pageviews import PAGEVIEWS_BASE_URL, PageviewsClient
from ..sources.sparql import EntityRecord, run_sparql
from .config import DatasetConfig, SparqlEntities
from .model import SignalsDataset

log = logging.getLogger(__name__)

FEED_NAME = "stories"


class BuildError(RuntimeError):
    pass


@dataclass
class Sources:
    news: NewsSource
    pageviews: PageviewsClient | None = None
    http: HttpClient = field(default_factory=HttpClient)


def sources_from_config(config: DatasetConfig, http: HttpClient | None = None) -> Sources:
    http = http or HttpClient()
    if config.news_source.get("type") != "local":
        raise BuildError(f"unsupported news source {config.news_source.get('type')!r}")
    pageviews = None
    if "wikimedia_pageviews" in config.targets:
        pv = config.pageviews
        pageviews = PageviewsClient(
            http,
            base_url=pv.get("base_url", PAGEVIEWS_BASE_URL),
            access=pv.get("access", "all-access"),
            agent=pv.get("agent", "user"),
        )
    return Sources(LocalCorpusSource(config.news_source["path"]), pageviews, http)


def resolve_entities(config: DatasetConfig, http: HttpClient | None = None) -> list[EntityRecord]:
    ents = config.entities
    if isinstance(ents, SparqlEntities):
        query = ents.query_path.read_text(encoding="utf-8")
        records = run_sparql(ents.endpoint, query, http=http, qid_var=ents.qid_var,
                             label_var=ents.label_var, article_var=ents.article_var)
    elif isinstance(ents, tuple):
        records = list(ents)
    else:
        with open(ents, encoding="utf-8") as fh:
            records = [EntityRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    seen: dict[str, EntityRecord] = {}
    for rec in records:
        seen.setdefault(rec.qid, rec)
    return list(seen.values())


def _build_signal(entity: EntityRecord, config: DatasetConfig, sources: Sources, strict: bool
                  ) -> tuple[Signal, list[str]]:
    warnings: list[str] = []
    ticks = tick_range(config.start, config.end)
    buckets = {}
    volume = []
    for tick in ticks:
        if config.stories_per_day > 0:
            query = NewsQuery(entity, tick, config.stories_per_day)
            buckets[tick] = fetch_stories(sources.news, query, seed=config.seed)
        else:
            buckets[tick] = []
        # volume counts the full matching pool, not the stored sample
        volume.append(float(sources.news.count(entity, tick)))

    params = {"entity_ids": entity.qid}
    if entity.wikipedia_title:
        params["wikipedia_title"] = entity.wikipedia_title
    signal = Signal(entity.qid, entity.label, params)
    if "news_volume" in config.targets:
        signal.add_series(TimeSeries("news_volume", config.start, volume))
    if "wikimedia_pageviews" in config.targets:
        signal.add_series(_pageviews(entity, config, sources, strict, warnings))
    signal.add_feed(Feed(FEED_NAME, buckets))
    return align(signal), warnings


def _pageviews(entity: EntityRecord, config: DatasetConfig, sources: Sources, strict: bool,
               warnings: list[str]) -> TimeSeries:
    zeros = TimeSeries("wikimedia_pageviews", config.start, [0.0] * (config.end - config.start).days)
    project = config.pageviews.get("project", "en.wikipedia")
    if not entity.wikipedia_title:
        warnings.append(f"{entity.qid}: no Wikipedia title; wikimedia_pageviews zero-filled")
        if sources.pageviews is not None:
            sources.pageviews.gap_log.setdefault((project, entity.qid), []).extend(tick_range(config.start, config.end))
        return zeros
    if sources.pageviews is None:
        raise BuildError("wikimedia_pageviews requested but no pageviews client configured")
    try:
        return sources.pageviews.fetch(project, entity.wikipedia_title, config.start, config.end)
    except SourceError as exc:
        if strict:
            raise
        warnings.append(f"{entity.qid}: pageviews fetch failed ({exc}); zero-filled")
        return zeros


def build_dataset(config: DatasetConfig, sources: Sources | None = None, *, jobs: int = 4,
                  strict: bool = False, built_at: str | None = None,
                  entities: list[EntityRecord] | None = None) -> SignalsDataset:
    """Build one aligned signal per resolved entity over ``[config.start, config.end)``.

    Per-entity fetch failures become warnings in ``metadata["warnings"]``
    unless ``strict`` is set, in which case the first one is raised.
    """
    sources = sources or sources_from_config(config)
    if entities is None:
        entities = resolve_entities(config, sources.http)
    if not entities:
        raise BuildError("entity resolution returned no entities")
    entities = sorted(entities, key=lambda e: e.qid)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda e: _build_signal(e, config, sources, strict), entities))

    signals = {}
    warnings: list[str] = []
    for entity, (signal, signal_warnings) in zip(entities, results):
        signals[entity.qid] = signal
        warnings.extend(signal_warnings)
    for w in warnings:
        log.warning(w)

    if built_at is None:
        built_at = dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")
    metadata = {
        "name": config.name,
        "start": config.start.isoformat(),
        "end": config.end.isoformat(),
        "built_at": built_at,
        "tool_version": __version__,
        "stories_per_day": config.stories_per_day,
        "seed": config.seed,
        "targets": list(config.targets),
        "warnings": warnings,
    }
    return SignalsDataset(metadata, signals)
