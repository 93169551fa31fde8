"""``key=value`` run configuration with range-checked values."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .kdtree import CYCLE_MEDIAN, MAX_VARIANCE_MEDIAN


@dataclass
class RunConfig:
    seed: int = 42
    page_size: int = 4096
    cache_pages: int = 64
    leaf_capacity: int = 0  # 0: fill pages to the R-tree fanout
    sample_size: int = 1000
    memory_budget: int = 64 * 1024 * 1024
    htm_level: int = 5
    kd_leaf_points: int = 16
    kd_leaf_extent: float = 0.0
    kd_rule: str = CYCLE_MEDIAN
    birch_threshold: float = 0.5
    birch_branching: int = 50
    birch_k: int = 3
    cure_k: int = 2
    cure_c: int = 10
    cure_alpha: float = 0.3
    cure_sample: int = 1000
    clique_xi: int = 10
    clique_tau: float = 0.02
    svc_q: float = 1.0
    svc_C: float = 1.0
    svc_tol: float = 1e-6
    svc_max_iter: int = 100_000
    svc_m: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.seed >= 0, "seed must be >= 0"),
            (self.page_size >= 64, "page_size must be >= 64"),
            (self.cache_pages >= 1, "cache_pages must be >= 1"),
            (self.leaf_capacity == 0 or self.leaf_capacity >= 2, "leaf_capacity must be 0 or >= 2"),
            (self.sample_size >= 1, "sample_size must be >= 1"),
            (self.memory_budget >= self.page_size, "memory_budget must be >= page_size"),
            (0 <= self.htm_level <= 20, "htm_level must be in [0, 20]"),
            (self.kd_leaf_points >= 1, "kd_leaf_points must be >= 1"),
            (self.kd_leaf_extent >= 0, "kd_leaf_extent must be >= 0"),
            (self.kd_rule in (CYCLE_MEDIAN, MAX_VARIANCE_MEDIAN), f"kd_rule must be {CYCLE_MEDIAN} "
                                                                  f"or {MAX_VARIANCE_MEDIAN}"),
            (self.birch_threshold >= 0, "birch_threshold must be >= 0"),
            (self.birch_branching >= 2, "birch_branching must be >= 2"),
            (self.birch_k >= 1, "birch_k must be >= 1"),
            (self.cure_k >= 1, "cure_k must be >= 1"),
            (self.cure_c >= 1, "cure_c must be >= 1"),
            (0 <= self.cure_alpha <= 1, "cure_alpha must be in [0, 1]"),
            (self.cure_sample >= 1, "cure_sample must be >= 1"),
            (self.clique_xi >= 1, "clique_xi must be >= 1"),
            (0 < self.clique_tau < 1, "clique_tau must be in (0, 1)"),
            (self.svc_q > 0, "svc_q must be > 0"),
            (self.svc_C > 0, "svc_C must be > 0"),
            (self.svc_tol > 0, "svc_tol must be > 0"),
            (self.svc_max_iter >= 1, "svc_max_iter must be >= 1"),
            (self.svc_m >= 1, "svc_m must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            conv = {"int": int, "float": float, "str": str}[types[key]]
            try:
                values[key] = conv(val)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: {key}={val!r} is not a valid {types[key]}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(), str(path))
