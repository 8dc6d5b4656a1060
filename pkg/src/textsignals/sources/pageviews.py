"""Wikimedia per-article daily pageviews.

Endpoint template (Wikimedia REST API, both dates inclusive, ``YYYYMMDD``)::

    {base_url}/per-article/{project}/{access}/{agent}/{article}/daily/{start}/{end}

with ``base_url = https://wikimedia.org/api/rest_v1/metrics/pageviews``.
"""
from __future__ import annotations

import datetime as dt
import logging
from urllib.parse import quote

from ..core import ONE_DAY, TickLike, TimeSeries, tick_range, to_tick
from .http import DecodeError, HttpClient

log = logging.getLogger(__name__)

PAGEVIEWS_BASE_URL = "https://wikimedia.org/api/rest_v1/metrics/pageviews"


def pageviews_url(project: str, article_title: str, start: dt.date, end_inclusive: dt.date,
                  access: str = "all-access", agent: str = "user", base_url: str = PAGEVIEWS_BASE_URL) -> str:
    article = quote(article_title.strip().replace(" ", "_"), safe="")
    return (
        f"{base_url.rstrip('/')}/per-article/{project}/{access}/{agent}/{article}/daily/"
        f"{start:%Y%m%d}/{end_inclusive:%Y%m%d}"
    )


def _item_day(item: dict) -> dt.date:
    stamp = str(item["timestamp"])
    return dt.date(int(stamp[0:4]), int(stamp[4:6]), int(stamp[6:8]))


def parse_pageviews(payload, start: dt.date, end: dt.date, name: str = "wikimedia_pageviews"
                    ) -> tuple[TimeSeries, list[dt.date]]:
    """Turn an API payload into a contiguous series over ``[start, end)``.

    Days missing from the payload become 0 and are returned as gaps.
    """
    try:
        items = payload["items"]
        views = {}
        for item in items:
            day = _item_day(item)
            views[day] = views.get(day, 0) + int(item["views"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed pageviews payload: {exc!r}") from exc
    ticks = tick_range(start, end)
    gaps = [t for t in ticks if t not in views]
    return TimeSeries(name, start, [float(views.get(t, 0)) for t in ticks]), gaps


class PageviewsClient:
    def __init__(self, http: HttpClient | None = None, base_url: str = PAGEVIEWS_BASE_URL,
                 access: str = "all-access", agent: str = "user"):
        self.http = http or HttpClient()
        self.base_url = base_url
        self.access = access
        self.agent = agent
        # (project, title) -> zero-filled days
        self.gap_log: dict[tuple[str, str], list[dt.date]] = {}

    def fetch(self, project: str, article_title: str, start: TickLike, end: TickLike,
              name: str = "wikimedia_pageviews") -> TimeSeries:
        start, end = to_tick(start), to_tick(end)
        if start >= end:
            raise ValueError(f"start {start} must be before end {end}")
        url = pageviews_url(project, article_title, start, end - ONE_DAY, self.access, self.agent, self.base_url)
        response = self.http.get(url, headers={"Accept": "application/json"})
        ts, gaps = parse_pageviews(response.json(), start, end, name)
        if gaps:
            log.info("%s/%s: %d day(s) without pageview data filled with 0", project, article_title, len(gaps))
            self.gap_log.setdefault((project, article_title), []).extend(gaps)
        return ts


def fetch_pageviews(project: str, article_title: str, start: TickLike, end: TickLike,
                    client: PageviewsClient | None = None) -> TimeSeries:
    return (client or PageviewsClient()).fetch(project, article_title, start, end)
