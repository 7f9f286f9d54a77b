"""Synthetic two-domain identity data and PK batch sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import Domain, PseudoDataset


@dataclass(frozen=True)
class DomainSpec:
    n_identities: int = 10
    samples_per_identity: int = 30
    dim: int = 16
    spread: float = 1.0  # std of identity centres
    noise: float = 0.25  # intra-identity std
    shift: float = 0.0  # norm of the additive domain offset
    distortion: float = 0.0  # strength of the linear distortion I + distortion * G
    seed: int = 0
    n_views: int = 1  # camera-like nuisance modes shared by all identities
    view_strength: float = 0.0  # norm of each view offset

    def __post_init__(self):
        if self.n_identities < 1 or self.samples_per_identity < 1 or self.dim < 1 or self.n_views < 1:
            raise ValueError("counts must be >= 1")
        if self.noise < 0 or self.spread < 0:
            raise ValueError("noise and spread must be non-negative")


@dataclass
class RawDataset:
    domain: Domain
    x: np.ndarray  # (N, D)
    identities: np.ndarray  # hidden true ids

    def __len__(self) -> int:
        return len(self.identities)


def _centres(n: int, dim: int, spread: float, rng: np.random.Generator) -> np.ndarray:
    """Identity centres of norm ``spread * sqrt(dim)``; mutually orthogonal when ``n <= dim``."""
    g = rng.normal(size=(dim, max(n, 1)))
    if n <= dim:
        q, r = np.linalg.qr(g)
        directions = (q * np.sign(np.diag(r))).T[:n]
    else:
        directions = g.T / np.linalg.norm(g.T, axis=1, keepdims=True)
    return spread * np.sqrt(dim) * directions


def _draw_domain(spec: DomainSpec, domain: Domain, rng: np.random.Generator) -> RawDataset:
    centres = _centres(spec.n_identities, spec.dim, spec.spread, rng)
    views = rng.normal(size=(spec.n_views, spec.dim))
    views *= spec.view_strength / np.linalg.norm(views, axis=1, keepdims=True)
    ids = np.repeat(np.arange(spec.n_identities), spec.samples_per_identity)
    view_of = rng.integers(spec.n_views, size=len(ids))
    x = centres[ids] + views[view_of] + rng.normal(0.0, 1.0, size=(len(ids), spec.dim)) * spec.noise
    if spec.distortion:
        x = x @ (np.eye(spec.dim) + spec.distortion * rng.normal(0.0, 1.0 / np.sqrt(spec.dim), size=(spec.dim, spec.dim)))
    if spec.shift:
        offset = rng.normal(size=spec.dim)
        x = x + spec.shift * offset / np.linalg.norm(offset)
    return RawDataset(domain, x, ids)


def generate_domains(source_spec: DomainSpec, target_spec: DomainSpec, rng: np.random.Generator | None = None):
    """Draw the labelled source set and the unlabelled target set.

    Each domain uses its own stream seeded from its spec, so the data do not
    depend on anything else the caller does with ``rng``; when ``rng`` is
    given it only perturbs the seeds.
    """
    salt = 0 if rng is None else int(rng.integers(2**31))
    src = _draw_domain(source_spec, Domain.SOURCE, np.random.default_rng([source_spec.seed, salt, 0]))
    tgt = _draw_domain(target_spec, Domain.TARGET, np.random.default_rng([target_spec.seed, salt, 1]))
    return src, tgt


def augment(x, rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Gaussian jitter in input space (stands in for image augmentation)."""
    x = np.asarray(x, dtype=np.float64)
    if sigma < 0:
        raise ValueError("jitter sigma must be non-negative")
    if sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, sigma, size=x.shape)


@dataclass
class HalfBatch:
    positions: np.ndarray  # positions into the PseudoDataset, grouped by class
    labels: np.ndarray
    classes: np.ndarray  # the P sampled classes, in sampling order
    k: int

    def __len__(self) -> int:
        return len(self.positions)

    def class_block(self, i: int) -> slice:
        return slice(i * self.k, (i + 1) * self.k)


@dataclass
class MiniBatch:
    source: HalfBatch
    target: HalfBatch


def pk_sample(dataset: PseudoDataset, p: int, k: int, rng: np.random.Generator) -> HalfBatch:
    """P classes without replacement, K samples each.

    Samples are drawn without replacement when the class is large enough and
    with replacement otherwise.
    """
    if p < 1 or k < 1:
        raise ValueError("P and K must be >= 1")
    if dataset.n_classes < p:
        raise ValueError(f"need at least {p} classes, dataset has {dataset.n_classes}")
    order = np.argsort(dataset.labels, kind="stable")
    bounds = np.searchsorted(dataset.labels[order], np.arange(dataset.n_classes + 1))
    classes = rng.choice(dataset.n_classes, size=p, replace=False)
    positions = []
    for cls in classes:
        members = order[bounds[cls] : bounds[cls + 1]]
        positions.append(rng.choice(members, size=k, replace=len(members) < k))
    positions = np.concatenate(positions)
    return HalfBatch(positions, dataset.labels[positions], classes, k)


def evaluation_split(identities, seed: int, query_fraction: float = 0.25):
    """Per identity, a seeded hash of the sample index picks ~25% queries.

    Returns boolean masks ``(query, gallery)``; every identity keeps at
    least one query and one gallery item when it has two or more samples.
    """
    identities = np.asarray(identities)
    idx = np.arange(len(identities), dtype=np.uint64)
    # splitmix64 finalizer
    with np.errstate(over="ignore"):
        z = idx + np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    query = np.zeros(len(identities), dtype=bool)
    for ident in np.unique(identities):
        members = np.flatnonzero(identities == ident)
        if len(members) < 2:
            continue
        ranked = members[np.lexsort((members, z[members]))]
        n_q = min(max(1, int(round(query_fraction * len(members)))), len(members) - 1)
        query[ranked[:n_q]] = True
    return query, ~query


def save_flat(path, *datasets: RawDataset) -> None:
    """One sample per line: ``domain,true_id,x_1,...,x_D``."""
    with open(path, "w") as fh:
        for ds in datasets:
            for ident, row in zip(ds.identities, ds.x):
                fh.write(",".join([ds.domain.value, str(int(ident))] + [repr(float(v)) for v in row]) + "\n")


def load_flat(path) -> dict[Domain, RawDataset]:
    rows: dict[Domain, tuple[list, list]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected domain, id and at least one value")
        domain = Domain(parts[0].strip())
        ids, xs = rows.setdefault(domain, ([], []))
        ids.append(int(parts[1]))
        xs.append([float(v) for v in parts[2:]])
    out = {}
    for domain, (ids, xs) in rows.items():
        if len({len(x) for x in xs}) != 1:
            raise ValueError(f"{path}: {domain.value} rows have differing dimensions")
        out[domain] = RawDataset(domain, np.asarray(xs, dtype=np.float64), np.asarray(ids, dtype=np.int64))
    return out
