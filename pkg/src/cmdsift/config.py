"""Line-oriented configuration: section headers plus key = value pairs.

Unknown sections and keys are rejected; all defaults match the module-level
defaults so an empty config is a working config. parse -> emit -> parse is
the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from cmdsift.classifier import ClassifierConfig
from cmdsift.core import DetectionScenario
from cmdsift.service import ServiceConfig
from cmdsift.vectorize import VectorizerConfig


class ConfigError(ValueError):
    """Unknown key/section or a value that does not parse."""


@dataclass
class BackendConfig:
    kind: str = "mock"  # mock | http
    seed: int = 0
    url: str = ""
    model: str = ""
    auth_env: str = "CMDSIFT_BACKEND_TOKEN"

    def build(self):
        from cmdsift.synthgen import HttpBackend, MockBackend

        if self.kind == "mock":
            return MockBackend(seed=self.seed)
        if self.kind == "http":
            if not self.url or not self.model:
                raise ConfigError("http backend requires url and model")
            return HttpBackend(url=self.url, model=self.model, auth_env=self.auth_env)
        raise ConfigError(f"unknown backend kind {self.kind!r}")


@dataclass
class Config:
    scenarios: dict[str, DetectionScenario] = field(default_factory=dict)
    vectorizer: VectorizerConfig = field(default_factory=VectorizerConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)


_SCALAR_SECTIONS = {
    "vectorizer": {
        "ngram_min": int,
        "ngram_max": int,
        "dimensions": int,
        "hash_seed": int,
        "normalize": str,
    },
    "classifier": {
        "hidden_units": int,
        "dropout_rate": float,
        "learning_rate": float,
        "epochs": int,
        "batch_size": int,
        "l2_penalty": float,
        "rng_seed": int,
    },
    "service": {
        "dedup_window_hours": float,
        "history_span_days": float,
        "retrain_daily": bool,
        "warm_start": bool,
        "freeze_layers": int,
    },
    "backend": {"kind": str, "seed": int, "url": str, "model": str, "auth_env": str},
}
_SCENARIO_KEYS = {
    "rule_file": str,
    "budget_n": int,
    "decay_horizon_days": float,
    "feedback_ratio": float,
}


def _parse_bool(value: str) -> bool:
    if value.lower() in ("true", "yes", "1"):
        return True
    if value.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"bad boolean {value!r}")


def parse_config(text: str) -> Config:
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current_name = line[1:-1].strip()
            if current_name in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current_name}]")
            known = current_name in _SCALAR_SECTIONS or current_name.startswith("scenario ")
            if not known:
                raise ConfigError(f"line {lineno}: unknown section [{current_name}]")
            current = sections.setdefault(current_name, {})
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = key.strip(), value.strip()
        schema = (
            _SCENARIO_KEYS
            if current_name.startswith("scenario ")
            else _SCALAR_SECTIONS[current_name]
        )
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current_name}]")
        current[key] = value

    config = Config()
    for name, kv in sections.items():
        if name.startswith("scenario "):
            sid = name[len("scenario ") :].strip()
            if "rule_file" not in kv:
                raise ConfigError(f"scenario {sid!r} missing rule_file")
            kwargs: dict = {"scenario_id": sid, "rule_file": kv["rule_file"]}
            for key, cast in _SCENARIO_KEYS.items():
                if key in kv and key != "rule_file":
                    kwargs[key] = cast(kv[key])
            try:
                config.scenarios[sid] = DetectionScenario(**kwargs)
            except ValueError as exc:
                raise ConfigError(f"scenario {sid!r}: {exc}") from exc
            continue
        schema = _SCALAR_SECTIONS[name]
        typed: dict = {}
        for key, value in kv.items():
            cast = schema[key]
            try:
                typed[key] = _parse_bool(value) if cast is bool else cast(value)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
        try:
            if name == "vectorizer":
                config.vectorizer = VectorizerConfig(**typed)
            elif name == "classifier":
                config.classifier = ClassifierConfig(**typed)
            elif name == "service":
                config.service = ServiceConfig(**typed)
            elif name == "backend":
                config.backend = BackendConfig(**typed)
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    return config


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: Config) -> str:
    lines: list[str] = []
    for sid in sorted(config.scenarios):
        sc = config.scenarios[sid]
        lines += [
            f"[scenario {sid}]",
            f"rule_file = {sc.rule_file}",
            f"budget_n = {sc.budget_n}",
            f"decay_horizon_days = {_fmt(sc.decay_horizon_days)}",
            f"feedback_ratio = {_fmt(sc.feedback_ratio)}",
            "",
        ]
    for section, obj in (
        ("vectorizer", config.vectorizer),
        ("classifier", config.classifier),
        ("service", config.service),
        ("backend", config.backend),
    ):
        lines.append(f"[{section}]")
        for key in _SCALAR_SECTIONS[section]:
            lines.append(f"{key} = {_fmt(getattr(obj, key))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"))
