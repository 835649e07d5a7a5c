"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

from dataclasses import dataclass

from .exceptions import InputError, ParseError

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "parse_config", "load_config"]


class ConfigError(InputError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("none", "off", "") else float(text)


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# key -> (parser, default); a default of None on a path key means "required when used"
SCHEMA = {
    "model.kind": (_choice("gcn", "gin", "appnp", "gcnii"), "gcn"),
    "model.layers": (int, 2),
    "model.hidden": (int, 16),
    "model.dropout": (float, 0.5),
    "model.alpha": (float, 0.1),
    "model.beta": (float, 0.5),
    "model.gin_eps": (float, 0.0),
    "model.dtype": (_choice("float32", "float64"), "float32"),
    "train.lr": (float, 0.01),
    "train.epochs": (int, 200),
    "train.parts": (int, 1),
    "train.method": (_choice("gas", "full"), "gas"),
    "train.partitioner": (_choice("cluster", "random"), "cluster"),
    "train.prefetch": (_bool, False),
    "train.warmup": (_choice("none", "full-batch"), "none"),
    "train.track_staleness": (_bool, True),
    "reg.l2": (float, 5e-4),
    "reg.lipschitz_weight": (float, 0.0),
    "reg.delta": (float, 0.1),
    "clip.max_norm": (_opt_float, None),
    "seed": (int, 0),
    "paths.data": (str, None),
    "paths.out": (str, None),
    "paths.partition": (str, None),
    "paths.history": (str, None),
    "verify.cases": (int, 100),
    "verify.layers": (str, "2,3"),
    "verify.kind": (_choice("gcn", "gin", "appnp", "mean"), "gcn"),
    "bench.parts": (int, 8),
    "bench.size": (int, 500),
    "bench.intra_deg": (int, 60),
    "bench.inter_nodes": (int, 200),
    "bench.inter_deg": (int, 60),
    "bench.hidden": (int, 64),
    "bench.layers": (int, 3),
    "bench.epochs": (int, 3),
}


@dataclass
class ExperimentConfig:
    values: dict
    explicit: set

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key}")
        return self.values[key]

    def require(self, *keys) -> None:
        for key in keys:
            if self.values.get(key) is None:
                raise ConfigError(f"missing config key {key}")


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    explicit = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key}")
        if key in explicit:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {key}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", path, lineno) from None
        explicit.add(key)
    return ExperimentConfig(values, explicit)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
