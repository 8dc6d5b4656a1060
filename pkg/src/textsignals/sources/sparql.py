"""Entity bootstrapping from a SPARQL endpoint (Wikidata Query Service by default)."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from urllib.parse import unquote, urlsplit

from .http import DecodeError, HttpClient

WIKIDATA_SPARQL = "https://query.wikidata.org/sparql"
SPARQL_ACCEPT = "application/sparql-results+json"
QID_RE = re.compile(r"^Q[0-9]+$")

# GET query strings beyond this length are sent as POST instead
_MAX_GET_QUERY = 2000


@dataclass(frozen=True)
class EntityRecord:
    qid: str
    label: str
    wikipedia_title: str | None = None

    def __post_init__(self):
        if not QID_RE.match(self.qid):
            raise ValueError(f"not a Wikidata QID: {self.qid!r}")

    def to_dict(self) -> dict:
        return {"qid": self.qid, "label": self.label, "wikipedia_title": self.wikipedia_title}

    @classmethod
    def from_dict(cls, d: dict) -> EntityRecord:
        return cls(d["qid"], d.get("label") or d["qid"], d.get("wikipedia_title"))


def default_endpoint() -> str:
    return os.environ.get("SPARQL_ENDPOINT", WIKIDATA_SPARQL)


def qid_from_iri(iri: str) -> str:
    tail = iri.rstrip("/").rsplit("/", 1)[-1]
    if not QID_RE.match(tail):
        raise DecodeError(f"binding value {iri!r} is not an entity IRI")
    return tail


def title_from_article_iri(iri: str) -> str:
    """``https://en.wikipedia.org/wiki/Ada_Lovelace`` -> ``Ada Lovelace``."""
    path = urlsplit(iri).path
    if "/wiki/" in path:
        path = path.split("/wiki/", 1)[1]
    else:
        path = path.rsplit("/", 1)[-1]
    return unquote(path).replace("_", " ")


def parse_sparql_results(payload, qid_var: str = "item", label_var: str = "itemLabel",
                         article_var: str = "article") -> list[EntityRecord]:
    """Parse SPARQL 1.1 JSON results, keeping the first row per QID."""
    try:
        bindings = payload["results"]["bindings"]
    except (KeyError, TypeError) as exc:
        raise DecodeError("SPARQL payload has no results.bindings") from exc
    if not isinstance(bindings, list):
        raise DecodeError("results.bindings is not a list")
    records: dict[str, EntityRecord] = {}
    for row in bindings:
        if not isinstance(row, dict) or qid_var not in row:
            raise DecodeError(f"binding row lacks variable ?{qid_var}")
        try:
            qid = qid_from_iri(row[qid_var]["value"])
            label = row[label_var]["value"] if label_var in row else qid
            title = title_from_article_iri(row[article_var]["value"]) if article_var in row else None
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed binding row: {row!r}") from exc
        if qid not in records:
            records[qid] = EntityRecord(qid, label, title)
    return list(records.values())


def run_sparql(endpoint_url: str | None, query_text: str, *, http: HttpClient | None = None,
               qid_var: str = "item", label_var: str = "itemLabel", article_var: str = "article"
               ) -> list[EntityRecord]:
    http = http or HttpClient()
    endpoint_url = endpoint_url or default_endpoint()
    headers = {"Accept": SPARQL_ACCEPT}
    if len(query_text) > _MAX_GET_QUERY:
        response = http.post(endpoint_url, data={"query": query_text}, headers=headers)
    else:
        response = http.get(endpoint_url, params={"query": query_text}, headers=headers)
    return parse_sparql_results(response.json(), qid_var, label_var, article_var)
