import datetime as dt
import json

import pytest
import requests

from conftest import FIXTURES, FakeTransport, make_client, ok_json
from textsignals.core import tick_range
from textsignals.sources import (
    DecodeError,
    EntityRecord,
    HostThrottle,
    HttpClient,
    HttpResponse,
    HttpStatusError,
    LocalCorpusSource,
    NewsQuery,
    NotFound,
    PageviewsClient,
    RetryPolicy,
    TransportError,
    fetch_stories,
    pageviews_url,
    parse_sparql_results,
    run_sparql,
    with_retry,
)

D = dt.date


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# retry


class Counter:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def __call__(self):
        self.calls += 1
        item = self.outcomes[min(self.calls, len(self.outcomes)) - 1]
        if isinstance(item, BaseException):
            raise item
        return HttpResponse(item)


FAST = RetryPolicy(max_attempts=3, base_delay=1.0, max_delay=5.0, jitter_fraction=0.0)


def test_retry_succeeds_on_third_attempt():
    req = Counter([503, requests.ConnectionError("boom"), 200])
    sleeps = []
    resp = with_retry(FAST, req, sleep=sleeps.append)
    assert resp.status_code == 200
    assert req.calls == 3
    assert sleeps == [1.0, 2.0]


def test_no_retry_on_400():
    req = Counter([400, 200])
    with pytest.raises(HttpStatusError) as info:
        with_retry(FAST, req, sleep=lambda s: None)
    assert info.value.status_code == 400
    assert req.calls == 1


def test_404_is_not_found():
    req = Counter([404])
    with pytest.raises(NotFound):
        with_retry(FAST, req, sleep=lambda s: None)
    assert req.calls == 1


def test_single_attempt_policy():
    req = Counter([500])
    with pytest.raises(TransportError) as info:
        with_retry(RetryPolicy(max_attempts=1), req, sleep=lambda s: None)
    assert req.calls == 1
    assert info.value.attempts == 1


@pytest.mark.parametrize("failures", [0, 1, 2, 3, 6])
@pytest.mark.parametrize("max_attempts", [1, 2, 4])
def test_request_count_is_min_of_success_and_budget(failures, max_attempts):
    req = Counter([429] * failures + [200])
    policy = RetryPolicy(max_attempts=max_attempts, base_delay=0.01, jitter_fraction=0.0)
    try:
        with_retry(policy, req, sleep=lambda s: None)
    except TransportError as exc:
        assert exc.attempts == max_attempts
    assert req.calls == min(failures + 1, max_attempts)


def test_retry_after_header_wins():
    calls = []

    def req():
        calls.append(1)
        if len(calls) == 1:
            return HttpResponse(429, headers={"Retry-After": "7"})
        return HttpResponse(200)

    sleeps = []
    with_retry(FAST, req, sleep=sleeps.append)
    assert sleeps == [7.0]


def test_backoff_capped_with_bounded_jitter():
    policy = RetryPolicy(max_attempts=10, base_delay=1.0, max_delay=8.0, jitter_fraction=0.25)
    import random

    rng = random.Random(0)
    for k in range(8):
        base = min(8.0, 2.0 ** k)
        d = policy.delay(k, rng)
        assert base * 0.75 <= d <= base * 1.25


def test_retry_policy_validation():
    with pytest.raises(ValueError):
        RetryPolicy(max_attempts=0)
    with pytest.raises(ValueError):
        RetryPolicy(jitter_fraction=1.5)


def test_throttle_spaces_requests():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(round(s, 6))
        now[0] += s

    throttle = HostThrottle(max_in_flight=4, min_interval=0.1, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        throttle.run("example.org", lambda: HttpResponse(200))
    assert slept == [0.1, 0.1]
    throttle.run("other.org", lambda: HttpResponse(200))
    assert slept == [0.1, 0.1]


def test_client_caches_success(tmp_path):
    transport = FakeTransport([ok_json({"a": 1})])
    client = make_client(transport, cache_dir=tmp_path)
    assert client.get("https://x.org/a", params={"q": "1"}).json() == {"a": 1}
    assert client.get("https://x.org/a", params={"q": "1"}).json() == {"a": 1}
    assert len(transport.calls) == 1
    client.get("https://x.org/a", params={"q": "2"})
    assert len(transport.calls) == 2


def test_client_does_not_cache_errors(tmp_path):
    transport = FakeTransport([HttpResponse(400), ok_json({})])
    client = make_client(transport, cache_dir=tmp_path)
    with pytest.raises(HttpStatusError):
        client.get("https://x.org/a")
    client.get("https://x.org/a")
    assert len(transport.calls) == 2


# ---------------------------------------------------------------------------
# pageviews


def test_pageviews_url_template():
    url = pageviews_url("en.wikipedia", "Apple Inc.", D(2023, 1, 1), D(2023, 1, 3))
    assert url == ("https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article/en.wikipedia/"
                   "all-access/user/Apple_Inc./daily/20230101/20230103")
    assert "AC%2FDC" in pageviews_url("en.wikipedia", "AC/DC", D(2023, 1, 1), D(2023, 1, 1))


def test_pageviews_fixture_three_days():
    transport = FakeTransport([ok_json(load_fixture("pageviews_3days.json"))])
    client = PageviewsClient(make_client(transport))
    ts = client.fetch("en.wikipedia", "Twitter", "2023-01-01", "2023-01-04")
    assert ts.ticks == tick_range("2023-01-01", "2023-01-04")
    # values read by hand from the recorded payload
    assert ts.values.tolist() == [41234.0, 39876.0, 52011.0]
    assert transport.calls[0]["url"].endswith("/Twitter/daily/20230101/20230103")
    assert client.gap_log == {}


def test_pageviews_gap_zero_filled_and_logged():
    transport = FakeTransport([ok_json(load_fixture("pageviews_gap.json"))])
    client = PageviewsClient(make_client(transport))
    ts = client.fetch("en.wikipedia", "Karen Bass", "2023-01-01", "2023-01-04")
    assert ts.values.tolist() == [812.0, 0.0, 977.0]
    assert client.gap_log == {("en.wikipedia", "Karen Bass"): [D(2023, 1, 2)]}


def test_pageviews_bad_range():
    client = PageviewsClient(make_client(FakeTransport([ok_json({})])))
    with pytest.raises(ValueError):
        client.fetch("en.wikipedia", "X", "2023-01-02", "2023-01-02")


def test_pageviews_not_found():
    client = PageviewsClient(make_client(FakeTransport([HttpResponse(404)])))
    with pytest.raises(NotFound):
        client.fetch("en.wikipedia", "No_such_page", "2023-01-01", "2023-01-03")


def test_pageviews_malformed():
    client = PageviewsClient(make_client(FakeTransport([ok_json({"items": [{"timestamp": "2023010100"}]})])))
    with pytest.raises(DecodeError):
        client.fetch("en.wikipedia", "X", "2023-01-01", "2023-01-03")
    client = PageviewsClient(make_client(FakeTransport([HttpResponse(200, b"<html>")])))
    with pytest.raises(DecodeError):
        client.fetch("en.wikipedia", "X", "2023-01-01", "2023-01-03")


def test_pageviews_transport_exhausted():
    transport = FakeTransport([HttpResponse(503)])
    client = PageviewsClient(make_client(transport, max_attempts=3))
    with pytest.raises(TransportError):
        client.fetch("en.wikipedia", "X", "2023-01-01", "2023-01-03")
    assert len(transport.calls) == 3


def test_pageviews_over_real_http(http_server):
    path = "/per-article/en.wikipedia/all-access/user/Twitter/daily/20230101/20230103"
    http_server.route(path, load_fixture("pageviews_3days.json"))
    http = HttpClient(RetryPolicy(max_attempts=2, base_delay=0.01), cache_dir=None,
                      throttle=HostThrottle(min_interval=0.0))
    client = PageviewsClient(http, base_url=http_server.url)
    ts = client.fetch("en.wikipedia", "Twitter", "2023-01-01", "2023-01-04")
    assert ts.values.tolist() == [41234.0, 39876.0, 52011.0]


# ---------------------------------------------------------------------------
# SPARQL


def test_sparql_fixture_parse():
    records = parse_sparql_results(load_fixture("sparql_nasdaq.json"))
    assert records == [
        EntityRecord("Q312", "Apple Inc.", "Apple Inc."),
        EntityRecord("Q2283", "Microsoft", "Microsoft"),
    ]


def test_sparql_dedup_keeps_first():
    records = parse_sparql_results(load_fixture("sparql_duplicates.json"))
    assert records == [EntityRecord("Q918", "Twitter", None)]


def test_sparql_empty_results():
    assert parse_sparql_results({"head": {"vars": ["item"]}, "results": {"bindings": []}}) == []


@pytest.mark.parametrize("payload", [{}, {"results": {}}, {"results": {"bindings": [{"x": {"value": "1"}}]}},
                                     {"results": {"bindings": [{"item": {"value": "http://x/Pnope"}}]}}])
def test_sparql_decode_errors(payload):
    with pytest.raises(DecodeError):
        parse_sparql_results(payload)


def test_sparql_custom_binding_names():
    payload = {"results": {"bindings": [{"e": {"value": "http://www.wikidata.org/entity/Q5"},
                                         "name": {"value": "human"}}]}}
    assert parse_sparql_results(payload, qid_var="e", label_var="name") == [EntityRecord("Q5", "human")]


def test_run_sparql_sends_accept_header():
    transport = FakeTransport([ok_json(load_fixture("sparql_nasdaq.json"))])
    records = run_sparql("https://query.example/sparql", "SELECT ?item WHERE {}", http=make_client(transport))
    assert len(records) == 2
    call = transport.calls[0]
    assert call["method"] == "GET"
    assert call["headers"]["Accept"] == "application/sparql-results+json"
    assert call["params"] == {"query": "SELECT ?item WHERE {}"}


def test_run_sparql_long_query_posts():
    transport = FakeTransport([ok_json({"results": {"bindings": []}})])
    run_sparql("https://query.example/sparql", "#" * 5000, http=make_client(transport))
    assert transport.calls[0]["method"] == "POST"


def test_run_sparql_errors():
    with pytest.raises(DecodeError):
        run_sparql("https://q/sparql", "Q", http=make_client(FakeTransport([HttpResponse(200, b"not json")])))
    with pytest.raises(TransportError):
        run_sparql("https://q/sparql", "Q", http=make_client(FakeTransport([HttpResponse(502)])))


def test_run_sparql_endpoint_from_env(monkeypatch):
    monkeypatch.setenv("SPARQL_ENDPOINT", "https://env.example/sparql")
    transport = FakeTransport([ok_json({"results": {"bindings": []}})])
    run_sparql(None, "Q", http=make_client(transport))
    assert transport.calls[0]["url"] == "https://env.example/sparql"


def test_entity_record_validation():
    with pytest.raises(ValueError):
        EntityRecord("P31", "instance of")


# ---------------------------------------------------------------------------
# local corpus


def _grep_count(qid, day):
    n = 0
    with open(FIXTURES / "corpus.jsonl", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if qid in rec["entity_ids"] and rec["published_at"].startswith(day):
                n += 1
    return n


@pytest.fixture(scope="module")
def corpus():
    return LocalCorpusSource(FIXTURES / "corpus.jsonl")


TWITTER = EntityRecord("Q918", "Twitter")


def test_corpus_count_matches_scan(corpus):
    for day in ("2023-01-01", "2023-01-13", "2023-01-21", "2023-01-06"):
        assert corpus.count(TWITTER, D.fromisoformat(day)) == _grep_count("Q918", day)


def test_sample_caps_at_limit_and_is_reproducible(corpus):
    day = D(2023, 1, 13)
    assert corpus.count(TWITTER, day) == 35
    q = NewsQuery(TWITTER, day, 20)
    a = fetch_stories(corpus, q, seed=1)
    b = fetch_stories(corpus, q, seed=1)
    c = fetch_stories(corpus, q, seed=2)
    pool_ids = {d.id for d in corpus.pool(TWITTER, day)}
    assert len(a) == 20
    assert len({d.id for d in a}) == 20
    assert {d.id for d in a} <= pool_ids
    assert [d.id for d in a] == [d.id for d in b]
    assert {d.id for d in a} != {d.id for d in c}
    assert all(d.tick == day for d in a)


def test_sample_returns_all_when_pool_small(corpus):
    day = D(2023, 1, 1)
    n = _grep_count("Q918", "2023-01-01")
    assert n < 20
    assert len(fetch_stories(corpus, NewsQuery(TWITTER, day), seed=0)) == n


def test_unknown_entity_empty(corpus):
    assert fetch_stories(corpus, NewsQuery(EntityRecord("Q42", "Douglas Adams"), D(2023, 1, 5)), seed=0) == []


def test_news_query_limit_validation():
    with pytest.raises(ValueError):
        NewsQuery(TWITTER, D(2023, 1, 1), 0)
