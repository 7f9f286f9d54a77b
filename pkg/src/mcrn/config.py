"""Experiment configuration and its ``key = value`` file format."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from enum import Enum

from .datasim import DomainSpec
from .losses import LossConfig, LossScope, SynthesisConfig, SynthesisMethod
from .memory import NegativeStrategy, PositiveStrategy, SelectionStrategy


class Representation(str, Enum):
    MULTI = "multi"
    UNI = "uni"


def _f(section: str, default, **kw):
    return field(default=default, metadata={"section": section}, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    source_identities: int = _f("data", 10)
    source_samples: int = _f("data", 30)
    target_identities: int = _f("data", 10)
    target_samples: int = _f("data", 40)
    input_dim: int = _f("data", 16)
    spread: float = _f("data", 0.25)
    noise: float = _f("data", 0.15)
    target_shift: float = _f("data", 0.3)
    target_distortion: float = _f("data", 0.3)
    n_views: int = _f("data", 3)
    view_strength: float = _f("data", 0.3)
    jitter: float = _f("data", 0.1)
    # model
    hidden: tuple = _f("model", (64, 64))
    feature_dim: int = _f("model", 32)
    # memory
    k: int = _f("memory", 4)
    momentum: float = _f("memory", 0.2)
    representation: Representation = _f("memory", Representation.MULTI)
    positive: PositiveStrategy = _f("memory", PositiveStrategy.MODERATE)
    negative: NegativeStrategy = _f("memory", NegativeStrategy.MEAN)
    # loss
    tau: float = _f("loss", 0.05)
    scope: LossScope = _f("loss", LossScope.DSCL)
    synthesis: SynthesisMethod = _f("loss", SynthesisMethod.SONI)
    alpha: float = _f("loss", 0.03)
    beta_low: float = _f("loss", 0.2)
    beta_high: float = _f("loss", 0.5)
    shared_beta: bool = _f("loss", False)
    # clustering
    eps: float = _f("cluster", 0.15)
    min_pts: int = _f("cluster", 10)
    merge_pairs: int = _f("cluster", 0)
    split_classes: int = _f("cluster", 0)
    source_merge_pairs: int = _f("cluster", 0)
    source_split_classes: int = _f("cluster", 0)
    # training
    epochs: int = _f("train", 50)
    iterations: int = _f("train", 0)  # 0: ceil(clustered target samples / (P * K))
    p: int = _f("train", 4)
    lr: float = _f("train", 0.00035)
    lr_step: int = _f("train", 20)
    lr_gamma: float = _f("train", 0.1)
    weight_decay: float = _f("train", 0.0005)
    adam_beta1: float = _f("train", 0.9)
    adam_beta2: float = _f("train", 0.999)
    adam_eps: float = _f("train", 1e-8)
    seed: int = _f("train", 0)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(f.default, Enum):
                object.__setattr__(self, f.name, type(f.default)(value))
            elif f.name == "hidden":
                object.__setattr__(self, f.name, tuple(int(h) for h in value))
        if self.k < 1 or self.p < 1:
            raise ValueError("k and p must be >= 1")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.epochs < 0 or self.iterations < 0:
            raise ValueError("epochs and iterations must be non-negative")

    @property
    def n_centroids(self) -> int:
        """Centroids per class; the uni-centroid baseline always uses one."""
        return 1 if self.representation is Representation.UNI else self.k

    @property
    def selection(self) -> SelectionStrategy:
        if self.representation is Representation.UNI:
            return SelectionStrategy(PositiveStrategy.MODERATE, self.negative)
        return SelectionStrategy(self.positive, self.negative)

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(
            tau=self.tau,
            scope=self.scope,
            selection=self.selection,
            synthesis=SynthesisConfig(self.synthesis, self.alpha, (self.beta_low, self.beta_high), self.shared_beta),
        )

    @property
    def encoder_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.feature_dim]

    def domain_specs(self) -> tuple[DomainSpec, DomainSpec]:
        common = dict(dim=self.input_dim, spread=self.spread, noise=self.noise, seed=self.seed,
                      n_views=self.n_views, view_strength=self.view_strength)
        src = DomainSpec(self.source_identities, self.source_samples, **common)
        tgt = DomainSpec(self.target_identities, self.target_samples, shift=self.target_shift,
                         distortion=self.target_distortion, **common)
        return src, tgt

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    # --- text form --------------------------------------------------------

    def to_text(self) -> str:
        sections: dict[str, list[str]] = {}
        for f in fields(self):
            sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {_format(getattr(self, f.name))}")
        out = io.StringIO()
        for name, lines in sections.items():
            out.write(f"[{name}]\n" + "\n".join(lines) + "\n\n")
        return out.getvalue()

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_text().encode()).digest()

    def hash(self) -> str:
        return self.digest().hex()


def _format(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse(f, raw: str):
    raw = raw.strip()
    default = f.default
    if isinstance(default, Enum):
        return type(default)(raw.lower())
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{f.name}: not a boolean: {raw!r}")
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``[section]`` / ``key = value`` text; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    known = {f.name: f for f in fields(ExperimentConfig)}
    sections = {f.metadata["section"] for f in known.values()}
    changes = {}
    for section in parser.sections():
        if section not in sections:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            f = known.get(key)
            if f is None or f.metadata["section"] != section:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            changes[key] = _parse(f, raw)
    return replace(base or ExperimentConfig(), **changes)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
