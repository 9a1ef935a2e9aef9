"""Experiment configuration: a flat ``key = value`` file with typed fields."""

import configparser
import hashlib
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .channel import PROAKIS_C

EQUALIZERS = ("mmse-exact", "mmse-timeavg", "lms", "fixed-partition", "ctw")
FILTER_KINDS = ("lms", "rls")
_SECTION = "experiment"


@dataclass
class ExperimentConfig:
    """Parameters of a simulation run.

    List-valued fields are written comma-separated in config files, e.g.
    ``snr_db = 6, 8, 10``.
    """

    taps: tuple = PROAKIS_C
    snr_db: tuple = (6.0, 8.0, 10.0)
    n_train: int = 1024
    n_data: int = 5120
    mu: float = 1e-3
    depth: int = 2
    n_regions: int = 4
    n_iter: int = 5
    trials: int = 10
    seed: int = 2024
    n1: int = 9
    n2: int = 5
    equalizers: tuple = ("lms", "ctw")
    filter_kind: str = "lms"
    c: float = 0.5
    weight_stride: int = 64
    exit_ia: tuple = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    exit_symbols: int = 100_000
    filter_snr_db: float = 10.0
    regret_lengths: tuple = (100, 1000, 5000)
    regret_seeds: int = 10
    n_jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.taps:
            raise ValueError("taps must not be empty")
        for name in ("n_train", "n_data", "n_iter", "trials", "weight_stride", "exit_symbols", "regret_seeds", "n_jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_data % 2 or self.n_data < 6:
            raise ValueError("n_data must be even and at least 6 (two tail steps)")
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("n1 and n2 must be non-negative")
        if self.depth < 0 or self.depth > 6:
            raise ValueError("depth must lie in 0..6")
        k = self.n_regions
        if k < 1 or k & (k - 1):
            raise ValueError("n_regions must be a power of two")
        if self.mu <= 0 or self.c <= 0:
            raise ValueError("mu and c must be positive")
        unknown = set(self.equalizers) - set(EQUALIZERS)
        if unknown:
            raise ValueError(f"unknown equalizers {sorted(unknown)}; choose from {EQUALIZERS}")
        if self.filter_kind not in FILTER_KINDS:
            raise ValueError(f"filter_kind must be one of {FILTER_KINDS}")
        if any(not 0.0 <= v <= 1.0 for v in self.exit_ia):
            raise ValueError("exit_ia values must lie in [0, 1]")

    @property
    def n_total(self):
        return self.n_train + self.n_data

    def fingerprint(self):
        """Short stable hash of every field, written to the run metadata."""
        text = ";".join(f"{k}={format_value(v)}" for k, v in sorted(self.to_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig(**d)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _scalar_type(name):
    default = _FIELDS[name].default
    return type(default[0]) if isinstance(default, tuple) and default else type(default)


def parse_value(name, text):
    """Convert the text of ``name`` to its field type."""
    if name not in _FIELDS:
        raise KeyError(name)
    text = text.strip()
    kind = _scalar_type(name)
    if isinstance(_FIELDS[name].default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(kind(float(t)) if kind is int else kind(t) for t in items)
    if kind is int:
        value = float(text)
        if value != int(value):
            raise ValueError(f"{name} must be an integer, got {text!r}")
        return int(value)
    return kind(text)


def format_value(value):
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_pairs(pairs):
    """Typed ``{field: value}`` from ``{key: text}``; unknown keys are an error."""
    out = {}
    for key, text in pairs.items():
        name = key.strip().replace("-", "_")
        if name not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        try:
            out[name] = parse_value(name, text)
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {exc}") from exc
    return out


def read_config_file(path):
    """Read a ``key = value`` file (``#`` comments, optional ``[experiment]`` header)."""
    text = Path(path).read_text()
    if not re.search(r"^\s*\[", text, re.MULTILINE):
        text = f"[{_SECTION}]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(text)
    if not parser.has_section(_SECTION):
        raise ValueError(f"config file needs an [{_SECTION}] section")
    return dict(parser.items(_SECTION))


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` ({key: text})."""
    values = {}
    if path is not None:
        values.update(parse_pairs(read_config_file(path)))
    if overrides:
        values.update(parse_pairs(overrides))
    return ExperimentConfig(**values)


def dump_config(config):
    """``key = value`` text that :func:`load_config` reads back to an equal config."""
    return "\n".join(f"{k} = {format_value(v)}" for k, v in config.to_dict().items()) + "\n"
