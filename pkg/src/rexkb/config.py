"""Loading of the declarative configuration.

Shipped defaults live in ``rexkb/data``:

* ``meta_model.json`` — allowed link triples, role matrix, per-type section
  templates and suggestion priors. Read once at startup, immutable after.
* ``stopwords_fr.txt`` — one stopword per line, UTF-8.

Key names of every file are documented in the README.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from .errors import InvalidRequest, IoFailure
from .kb_core import (
    AccessAction,
    AccessPolicy,
    ElementType,
    LinkType,
    MetaModel,
    MetaModelSchema,
    Role,
)

PathLike = Union[str, Path]

META_MODEL_VERSION = 1


def _default_path(name: str):
    return resources.files("rexkb").joinpath("data").joinpath(name)


def _read_text(path: Optional[PathLike], default_name: str) -> str:
    try:
        if path is None:
            return _default_path(default_name).read_text(encoding="utf-8")
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config file: {exc}")


def load_stopwords(path: Optional[PathLike] = None) -> frozenset[str]:
    text = _read_text(path, "stopwords_fr.txt")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip()
    )


def _parse_types(value) -> frozenset[ElementType]:
    if value == "*":
        return frozenset(ElementType)
    return frozenset(ElementType(v) for v in value)


def load_meta_model(path: Optional[PathLike] = None) -> MetaModel:
    """Parse and validate the meta-model config into immutable structures."""
    raw = _read_text(path, "meta_model.json")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise IoFailure(f"meta-model config is not valid JSON: {exc}")
    try:
        version = int(data.get("v", 1))
        if version > META_MODEL_VERSION:
            raise InvalidRequest(
                f"meta-model config version {version} is newer than supported "
                f"{META_MODEL_VERSION}"
            )
        triples = frozenset(
            (
                ElementType(entry["source"]),
                LinkType(entry["link_type"]),
                ElementType(entry["target"]),
            )
            for entry in data["link_schema"]
        )
        matrix = {
            Role(role): {
                AccessAction(action): _parse_types(types)
                for action, types in actions.items()
            }
            for role, actions in data["role_matrix"].items()
        }
        templates = {
            ElementType(et): tuple(names)
            for et, names in data["section_templates"].items()
        }
        priors = {
            (
                ElementType(entry["source"]),
                LinkType(entry["link_type"]),
                ElementType(entry["target"]),
            ): float(entry["prior"])
            for entry in data.get("type_priors", [])
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed meta-model config: {exc!r}")
    missing = [et.value for et in ElementType if et not in templates]
    if missing:
        raise InvalidRequest(f"section_templates missing element types: {missing}")
    for triple, prior in priors.items():
        if not 0.0 <= prior <= 1.0:
            raise InvalidRequest(
                f"type prior for {tuple(t.value for t in triple)} must lie in "
                f"[0, 1], got {prior}"
            )
    return MetaModel(
        schema=MetaModelSchema(triples),
        policy=AccessPolicy(matrix),
        templates=templates,
        priors=priors,
        version=version,
    )


@dataclass(frozen=True)
class ActorSpec:
    id: str
    name: str
    role: Role


def load_tokens(path: PathLike) -> dict[str, ActorSpec]:
    """Token file: {"tokens": {"<bearer token>": {"id", "name", "role"}}}."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return {
            token: ActorSpec(
                id=spec["id"], name=spec.get("name", spec["id"]), role=Role(spec["role"])
            )
            for token, spec in data["tokens"].items()
        }
    except OSError as exc:
        raise IoFailure(f"cannot read token file: {exc}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InvalidRequest(f"malformed token file: {exc!r}")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8431
    data_dir: Optional[str] = None
    token_file: Optional[str] = None
    schema_file: Optional[str] = None
    stopword_file: Optional[str] = None
    weights: tuple[float, float, float] = (0.6, 0.3, 0.1)


def load_service_config(path: PathLike) -> ServiceConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read service config: {exc}")
    except json.JSONDecodeError as exc:
        raise InvalidRequest(f"service config is not valid JSON: {exc}")
    weights = data.get("weights", {})
    if isinstance(weights, Mapping):
        triple = (
            float(weights.get("text", 0.6)),
            float(weights.get("tag", 0.3)),
            float(weights.get("prior", 0.1)),
        )
    else:
        triple = tuple(float(w) for w in weights)  # type: ignore[assignment]
    return ServiceConfig(
        host=data.get("host", "127.0.0.1"),
        port=int(data.get("port", 8431)),
        data_dir=data.get("data_dir"),
        token_file=data.get("token_file"),
        schema_file=data.get("schema_file"),
        stopword_file=data.get("stopword_file"),
        weights=triple,  # type: ignore[arg-type]
    )
