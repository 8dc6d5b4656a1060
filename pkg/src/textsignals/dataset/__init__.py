from .archive import ArchiveError, ArchiveVersionError, cached_load, load_dataset, save_dataset
from .build import BuildError, Sources, build_dataset, resolve_entities, sources_from_config
from .config import ConfigError, DatasetConfig, SparqlEntities, load_config, parse_config
from .model import SignalsDataset

__all__ = [
    "ArchiveError", "ArchiveVersionError", "BuildError", "ConfigError", "DatasetConfig", "SignalsDataset",
    "Sources", "SparqlEntities", "build_dataset", "cached_load", "load_config", "load_dataset",
    "parse_config", "resolve_entities", "save_dataset", "sources_from_config",
]
