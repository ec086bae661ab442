"""Experiment configuration: a sectioned ``key = value`` text format.

Grammar (one construct per line)::

    # comment            blank lines and lines starting with '#' or ';' are ignored
    [section]            starts a section
    key = value          assigns within the current section

Lists are comma separated. Unknown sections or keys are errors that carry the
offending line number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dynamics import ALGORITHMS, NOISE_KINDS

MIRRORS = ("entropy", "euclidean")
METRICS = (
    "rnccv_state",
    "rnccv_ergodic",
    "rnccv_ergodic_unweighted",
    "cvio_max",
    "avg_loss",
    "avg_loss_ergodic",
    "loss_time_average",
    "price_norm",
    "distance",
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


@dataclass
class GameSection:
    N: int = 50
    D: int = 20
    seed: int = 1
    C_scale: float = 4.0
    c: float = 0.0


@dataclass
class ConstraintSection:
    R: int | None = None  # defaults to D
    A_scale: float = 4.0
    d: float = 10.5


@dataclass
class ScheduleSection:
    gamma0: float = 0.5
    p: float = 0.5
    alpha: float = 5.0


@dataclass
class NoiseSection:
    kind: str = "gaussian"
    sigma: float = 0.0


@dataclass
class RunSection:
    algorithms: list[str] = field(default_factory=lambda: ["maarp", "anarchy"])
    iters: int = 100_000
    samples: int = 1
    record_every: int | None = None  # 10 for iters >= 1e4, else 1
    master_seed: int = 0
    mirror_map: list[str] = field(default_factory=lambda: ["entropy"])
    workers: int = 1


@dataclass
class OutputSection:
    directory: str = "out"
    emit: list[str] = field(default_factory=lambda: ["rnccv_state", "rnccv_ergodic"])
    oracle: str | None = None


@dataclass
class ExperimentConfig:
    game: GameSection = field(default_factory=GameSection)
    constraints: ConstraintSection = field(default_factory=ConstraintSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def R(self) -> int:
        return self.game.D if self.constraints.R is None else self.constraints.R

    @property
    def record_every(self) -> int:
        if self.run.record_every is not None:
            return self.run.record_every
        return 10 if self.run.iters >= 10_000 else 1

    def to_dict(self, execution: bool = True) -> dict:
        """Resolved settings. With ``execution=False`` the fields that cannot
        affect output bytes (worker count, output directory) are dropped."""
        d = dataclasses.asdict(self)
        d["constraints"]["R"] = self.R
        d["run"]["record_every"] = self.record_every
        if not execution:
            del d["run"]["workers"], d["output"]["directory"]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(execution=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self) -> "ExperimentConfig":
        g, r = self.game, self.run
        if g.N < 1 or g.D < 1:
            raise ConfigError("game.N and game.D must be >= 1")
        if self.R != g.D:
            raise ConfigError(f"constraints.R must equal game.D (A_i = A_scale * I), got R={self.R}, D={g.D}")
        if not self.schedule.gamma0 > 0 or not 0 < self.schedule.p <= 1 or self.schedule.alpha < 0:
            raise ConfigError("schedule needs gamma0 > 0, p in (0, 1], alpha >= 0")
        if self.noise.kind not in NOISE_KINDS:
            raise ConfigError(f"noise.kind must be one of {NOISE_KINDS}, got {self.noise.kind!r}")
        if self.noise.sigma < 0:
            raise ConfigError("noise.sigma must be >= 0")
        for a in r.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        for m in r.mirror_map:
            if m not in MIRRORS:
                raise ConfigError(f"unknown mirror map {m!r}; choose from {MIRRORS}")
        if not r.algorithms or not r.mirror_map:
            raise ConfigError("run.algorithms and run.mirror_map must not be empty")
        if r.iters < 1 or r.samples < 1 or r.workers < 1:
            raise ConfigError("run.iters, run.samples and run.workers must be >= 1")
        if r.record_every is not None and r.record_every < 1:
            raise ConfigError("run.record_every must be >= 1")
        for m in self.output.emit:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}; choose from {METRICS}")
        if "distance" in self.output.emit and not self.output.oracle:
            raise ConfigError("metric 'distance' needs output.oracle")
        return self


def _coerce(raw: str, typ, key: str, line: int, source):
    typ = str(typ)
    try:
        if "list" in typ:
            return [s.strip() for s in raw.split(",") if s.strip()]
        if "int" in typ and "float" not in typ:
            if raw.lower() in ("none", ""):
                if "None" in typ:
                    return None
                raise ValueError
            try:
                return int(raw)
            except ValueError:
                v = float(raw)  # allow 1e5
                if not v.is_integer():
                    raise
                return int(v)
        if "float" in typ:
            return float(raw)
        if raw.lower() in ("none", "") and "None" in typ:
            return None
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}", line, source) from None


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    sections = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    current = None
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError(f"malformed section header {s!r}", lineno, source)
            name = s[1:-1].strip()
            if name not in sections:
                raise ConfigError(f"unknown section [{name}]", lineno, source)
            current = name
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", lineno, source)
        if current is None:
            raise ConfigError("assignment outside of any section", lineno, source)
        key, raw = (t.strip() for t in s.split("=", 1))
        raw = raw.split(" #", 1)[0].strip()
        sec = getattr(cfg, current)
        fields = {f.name: f for f in dataclasses.fields(sec)}
        if key not in fields:
            raise ConfigError(f"unknown key {current}.{key}", lineno, source)
        if (current, key) in seen:
            raise ConfigError(f"duplicate key {current}.{key}", lineno, source)
        seen.add((current, key))
        setattr(sec, key, _coerce(raw, fields[key].type, f"{current}.{key}", lineno, source))
    try:
        return cfg.validate()
    except ConfigError as e:
        raise ConfigError(f"{source + ': ' if source else ''}{e}") from None


def preset_names() -> list[str]:
    root = resources.files("maarp") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_path(name: str) -> Path:
    return Path(str(resources.files("maarp") / "presets" / f"{name}.cfg"))


def parse_config(path) -> ExperimentConfig:
    """Parse a config file; a bare preset name (e.g. ``fig1``) is resolved to
    the shipped preset of that name."""
    p = Path(path)
    if not p.exists() and str(path) in preset_names():
        p = preset_path(str(path))
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(), source=str(path))
