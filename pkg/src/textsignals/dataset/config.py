"""YAML build configuration, validated against ``data/config.schema.json``."""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from ..core import to_tick
from ..sources.news import DEFAULT_STORIES_PER_DAY
from ..sources.sparql import EntityRecord

TARGETS = ("news_volume", "wikimedia_pageviews")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid dataset config:\n" + "\n".join(f"  - {p}" for p in problems))


def config_schema() -> dict:
    text = resources.files("textsignals").joinpath("data/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class SparqlEntities:
    query_path: Path
    endpoint: str | None = None
    qid_var: str = "item"
    label_var: str = "itemLabel"
    article_var: str = "article"


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    start: dt.date
    end: dt.date
    entities: tuple[EntityRecord, ...] | SparqlEntities | Path
    news_source: dict
    targets: tuple[str, ...]
    output: Path
    stories_per_day: int = DEFAULT_STORIES_PER_DAY
    pageviews: dict = field(default_factory=dict)
    seed: int = 0


def _stringify_dates(node):
    # YAML turns bare 2020-01-01 into a date object
    if isinstance(node, dict):
        return {k: _stringify_dates(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_stringify_dates(v) for v in node]
    if isinstance(node, (dt.date, dt.datetime)):
        return node.isoformat()[:10]
    return node


def _path_of(error: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def parse_config(yaml_text: str, base_dir: str | Path | None = None) -> DatasetConfig:
    """Parse and validate a config; relative paths resolve against ``base_dir``.

    Every schema violation is reported in one :class:`ConfigError`.
    """
    try:
        raw = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML syntax error: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    raw = _stringify_dates(raw)

    validator = jsonschema.Draft202012Validator(config_schema())
    problems = []
    for error in sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        if error.validator == "additionalProperties":
            extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
            problems.extend(f"{_path_of(error)}: unknown key {k!r}" for k in extra)
        else:
            problems.append(f"{_path_of(error)}: {error.message}")
    start = end = None
    for key in ("start", "end"):
        if isinstance(raw.get(key), str):
            try:
                value = dt.date.fromisoformat(raw[key])
            except ValueError:
                problems.append(f"{key}: not a calendar date: {raw[key]!r}")
                continue
            if key == "start":
                start = value
            else:
                end = value
    if start and end and start >= end:
        problems.append(f"start: {start} must be before end {end}")
    if problems:
        raise ConfigError(sorted(set(problems), key=problems.index))

    base = Path(base_dir) if base_dir is not None else Path.cwd()
    resolve = lambda p: p if Path(p).is_absolute() else base / p  # noqa: E731

    ents = raw["entities"]
    if isinstance(ents, list):
        entities = tuple(
            EntityRecord(e, e) if isinstance(e, str)
            else EntityRecord(e["qid"], e.get("label") or e["qid"], e.get("wikipedia_title"))
            for e in ents
        )
    elif "sparql" in ents:
        entities = SparqlEntities(
            Path(resolve(ents["sparql"])), ents.get("endpoint"),
            ents.get("qid_var", "item"), ents.get("label_var", "itemLabel"), ents.get("article_var", "article"),
        )
    else:
        entities = Path(resolve(ents["file"]))

    news = dict(raw["news_source"])
    news["path"] = str(resolve(news["path"]))
    return DatasetConfig(
        name=raw["name"],
        start=to_tick(raw["start"]),
        end=to_tick(raw["end"]),
        entities=entities,
        news_source=news,
        targets=tuple(raw["targets"]),
        output=Path(resolve(raw["output"])),
        stories_per_day=raw.get("stories_per_day", DEFAULT_STORIES_PER_DAY),
        pageviews={"project": "en.wikipedia", **raw.get("pageviews", {})},
        seed=raw.get("seed", 0),
    )


def load_config(path: str | Path) -> DatasetConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
