"""Declarative experiment configuration (YAML, versioned by schema_version)."""
from __future__ import annotations

import yaml

from .controller import SearchSpace, ShapingConfig
from .bob import BobConfig
from .design_space import ActionCatalog, ContextSpec, LayerTemplate
from .oracle import SyntheticOracle, SyntheticTaskSpec, SynthStatsModel, TabularOracle

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version {version!r}, this build "
                          f"reads {CONFIG_SCHEMA_VERSION}")
    return doc


def require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"missing required config key {key!r}")
    return doc[key]


def build_catalog(doc: dict) -> ActionCatalog:
    cat = require(doc, "catalog")
    actions = tuple(LayerTemplate(**a) for a in require(cat, "actions"))
    return ActionCatalog(actions, max_depth=require(cat, "max_depth"))


def _context_from(d: dict) -> ContextSpec:
    d = dict(d)
    if "task" in d:
        d["task"] = tuple(d["task"])
    return ContextSpec(**d)


def build_context(doc: dict) -> ContextSpec:
    return _context_from(require(doc, "context"))


def build_contexts(doc: dict) -> list[ContextSpec]:
    return [_context_from(c) for c in require(doc, "contexts")]


def build_space(doc: dict) -> SearchSpace:
    return SearchSpace(build_catalog(doc), build_context(doc),
                       tuple(doc.get("input_shape", (3, 16, 16))))


def build_shaping(doc: dict) -> ShapingConfig:
    cfg = dict(require(doc, "shaping"))
    for key in ("epsilon0", "budgets", "hidden"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    return ShapingConfig(**cfg)


def build_predictor_cfg(doc: dict) -> BobConfig:
    cfg = dict(doc.get("predictor", {}))
    cfg.pop("stats_path", None)
    cfg.pop("test_fraction", None)
    cfg.pop("oversample_factor", None)
    return BobConfig(**cfg)


def build_oracle(doc: dict):
    spec = require(doc, "oracle")
    kind = require(spec, "kind")
    if kind == "synthetic":
        return SyntheticOracle(SyntheticTaskSpec(
            base_utility=tuple(require(spec, "base_utility")),
            diminishing=spec.get("diminishing", 0.9),
            interaction_bonus=tuple(tuple(b) for b in
                                    spec.get("interaction_bonus", ())),
            noise_sigma=spec.get("noise_sigma", 0.0),
            accuracy_cap=spec.get("accuracy_cap", 1.0),
            min_depth=spec.get("min_depth", 0),
            seed=spec.get("seed", 0)))
    if kind == "tabular":
        return TabularOracle(require(spec, "path"))
    raise ConfigError(f"unknown oracle kind {kind!r}")


def build_synth_stats_model(doc: dict) -> SynthStatsModel:
    spec = dict(doc.get("synth_stats_model", {}))
    for key in ("latency_coeffs", "memory_coeffs", "context_multipliers"):
        if key in spec:
            spec[key] = tuple(spec[key])
    return SynthStatsModel(**spec)
