"""Shared settings read from a ``key = value`` file; command-line flags win."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields, replace

CONFIG_ENV = "CRITHEIGHTS_CONFIG"
CACHE_ENV = "CRITHEIGHTS_CACHE"


@dataclass(frozen=True)
class Config:
    tol: float = 1e-10
    max_iterations: int = 10_000
    tree_resolution: int = 256
    refinement_limit: int = 3
    angle_grid: int = 64
    cache_dir: str = os.path.join(os.path.expanduser("~"), ".cache", "critheights")
    precision: str = "double"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.precision not in ("double", "mp"):
            raise ValueError("precision must be 'double' or 'mp'")

    def updated(self, **kw) -> "Config":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def check_cache(self) -> str:
        os.makedirs(self.cache_dir, exist_ok=True)
        if not os.access(self.cache_dir, os.W_OK):
            raise PermissionError(f"cache directory {self.cache_dir} is not writable")
        return self.cache_dir


def parse(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string("[config]\n" + text)
    return dict(cp["config"])


def load_config(path: str | None = None) -> Config:
    path = path or os.environ.get(CONFIG_ENV)
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            raw = parse(fh.read())
        types = {f.name: f.type for f in fields(Config)}
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            t = types[key]
            values[key] = float(val) if t == "float" else int(val) if t == "int" else val
    cfg = Config(**values)
    if os.environ.get(CACHE_ENV):
        cfg = cfg.updated(cache_dir=os.environ[CACHE_ENV])
    return cfg
