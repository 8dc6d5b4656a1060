from .http import (
    DecodeError,
    HostThrottle,
    HttpClient,
    HttpResponse,
    HttpStatusError,
    NotFound,
    RetryPolicy,
    SourceError,
    TransportError,
    with_retry,
)
from .news import LocalCorpusSource, NewsQuery, NewsSource, fetch_stories
from .pageviews import PageviewsClient, fetch_pageviews, parse_pageviews, pageviews_url
from .sparql import EntityRecord, parse_sparql_results, run_sparql

__all__ = [
    "DecodeError", "EntityRecord", "HostThrottle", "HttpClient", "HttpResponse", "HttpStatusError",
    "LocalCorpusSource", "NewsQuery", "NewsSource", "NotFound", "PageviewsClient", "RetryPolicy",
    "SourceError", "TransportError", "fetch_pageviews", "fetch_stories", "pageviews_url",
    "parse_pageviews", "parse_sparql_results", "run_sparql", "with_retry",
]
