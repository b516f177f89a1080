"""Run configuration: one YAML (or JSON) document, overridable from the CLI.

Example::

    paths:
      events: events.jsonl
      firms: firms.json
      filings: filings
      out: out
    agent:
      agent_kind: scripted_mock
      script: {ACME: [HOLD, EXIT_NOW]}
    exit_definition: threshold
    horizon: 12
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import yaml

from .agents.client import DEFAULT_API_KEY_ENV
from .agents.policies import AgentConfig
from .errors import InputError
from .evaluation import EXIT_DEFINITIONS, MatrixAxes

PATH_KEYS = ("events", "firms", "ownership", "filings", "templates", "cache", "out")


@dataclass(frozen=True)
class Paths:
    events: Path | None = None
    firms: Path | None = None
    ownership: Path | None = None
    filings: Path | None = None
    templates: Path | None = None
    cache: Path | None = None
    out: Path = Path("out")

    @property
    def ownership_csv(self) -> Path:
        """Explicit ownership input, else the one ``extract`` wrote into the output dir."""
        return self.ownership if self.ownership is not None else self.out / "ownership.csv"

    @property
    def cache_dir(self) -> Path:
        return self.cache if self.cache is not None else self.out / "cache"


@dataclass(frozen=True)
class LLMEndpoint:
    base_url: str = "http://localhost:8000/v1"
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    requests_per_second: float | None = None


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    agent: AgentConfig = field(default_factory=AgentConfig)
    endpoint: LLMEndpoint = field(default_factory=LLMEndpoint)
    exit_definition: str = "threshold"
    horizon: int = 60
    threshold_pct: float = 5.0
    materiality_pct: float = 1.0
    volatility_filter: bool = False
    censored_policy: str = "evaluate"
    max_in_flight: int = 4
    seed: int = 0
    reputation: Mapping[str, str] = field(default_factory=dict)
    matrix: Mapping[str, Any] | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 < self.threshold_pct < 100:
            raise ValueError("threshold_pct must lie strictly between 0 and 100")
        if self.exit_definition not in EXIT_DEFINITIONS:
            raise ValueError(f"exit_definition must be one of {EXIT_DEFINITIONS}")
        if self.censored_policy not in ("evaluate", "exclude"):
            raise ValueError("censored_policy must be 'evaluate' or 'exclude'")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def matrix_axes(self) -> MatrixAxes | None:
        if not self.matrix:
            return None
        return MatrixAxes.single_point(self, **self.matrix)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _plain(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


def _deep_update(base: Mapping, extra: Mapping) -> dict:
    """Merge ``extra`` into ``base``; ``None`` values in ``extra`` mean "not given"."""
    out = dict(base)
    for k, v in extra.items():
        if v is None:
            continue
        if isinstance(v, Mapping):
            merged = _deep_update(out.get(k) or {}, v)
            if merged or k in out:
                out[k] = merged
        else:
            out[k] = v
    return out


def build_config(doc: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    """Turn a parsed config document into a :class:`RunConfig`.

    Relative paths resolve against ``base_dir`` (the config file's folder).
    """
    doc = dict(doc)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    raw_paths = doc.pop("paths", {}) or {}
    bad = set(raw_paths) - set(PATH_KEYS)
    if bad:
        raise InputError(f"unknown path keys: {', '.join(sorted(bad))}")
    paths = {}
    for k, v in raw_paths.items():
        if v is None:
            continue
        p = Path(v)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        paths[k] = p
    try:
        agent = AgentConfig(**_agent_kwargs(doc.pop("agent", {}) or {}))
        endpoint = LLMEndpoint(**(doc.pop("endpoint", {}) or {}))
        return RunConfig(paths=Paths(**paths), agent=agent, endpoint=endpoint, **doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config: {exc}") from None


def _agent_kwargs(raw: Mapping[str, Any]) -> dict:
    kwargs = dict(raw)
    if "theory_ids" in kwargs and kwargs["theory_ids"] is not None:
        kwargs["theory_ids"] = tuple(kwargs["theory_ids"])
    if "hazard_curve" in kwargs:
        kwargs["hazard_curve"] = tuple(tuple(p) for p in kwargs["hazard_curve"])
    if isinstance(kwargs.get("script"), list):
        kwargs["script"] = tuple(kwargs["script"])
    return kwargs


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a config file (optional) and apply nested ``overrides`` on top."""
    doc: dict = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise InputError(f"{path}: {exc}") from None
        if not isinstance(doc, Mapping):
            raise InputError(f"{path}: top level must be a mapping")
        base_dir = path.parent
    if overrides:
        # CLI-supplied paths are relative to the working directory, not the config file
        cli_paths = {k: Path(v).resolve() for k, v in (overrides.get("paths") or {}).items() if v is not None}
        doc = _deep_update(doc, {k: v for k, v in overrides.items() if k != "paths"})
        if cli_paths:
            doc["paths"] = {**(doc.get("paths") or {}), **{k: str(v) for k, v in cli_paths.items()}}
    return build_config(doc, base_dir)
