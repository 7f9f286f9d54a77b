"""Multi-centroid memory: K centroids per class for both domains."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .assignment import match_queries_to_centroids
from .clustering import Domain, PseudoDataset
from .numerics import l2_normalize, l2_normalize_rows, mean_vector


class PositiveStrategy(str, Enum):
    MODERATE = "moderate"
    MOST = "most"
    LEAST = "least"


class NegativeStrategy(str, Enum):
    MEAN = "mean"
    ALL = "all"


class Scope(str, Enum):
    SAME_DOMAIN = "same_domain"
    BOTH_DOMAINS = "both_domains"


@dataclass(frozen=True)
class SelectionStrategy:
    positive: PositiveStrategy = PositiveStrategy.MODERATE
    negative: NegativeStrategy = NegativeStrategy.MEAN

    def __post_init__(self):
        object.__setattr__(self, "positive", PositiveStrategy(self.positive))
        object.__setattr__(self, "negative", NegativeStrategy(self.negative))


def positive_rank(k: int, strategy: PositiveStrategy) -> int:
    """1-based rank, in ascending similarity, of the centroid a strategy picks."""
    strategy = PositiveStrategy(strategy)
    if strategy is PositiveStrategy.LEAST:
        return 1
    if strategy is PositiveStrategy.MOST:
        return k
    return math.ceil(k / 2)


class CentroidBank:
    """``M = K * (n_s + n_t)`` unit-norm centroids stored as one ``(M, C)`` array.

    Source classes occupy the first ``K * n_s`` rows; within a domain the
    row of ``(class, slot)`` is ``class * K + slot``.
    """

    def __init__(self, k: int, n_source: int, n_target: int, dim: int, rows=None):
        if k < 1:
            raise ValueError("K must be >= 1")
        if n_source < 0 or n_target < 0:
            raise ValueError("class counts must be non-negative")
        self.k = int(k)
        self.n_source = int(n_source)
        self.n_target = int(n_target)
        self.dim = int(dim)
        m = self.k * (self.n_source + self.n_target)
        if rows is None:
            self.rows = np.zeros((m, self.dim), dtype=np.float64)
        else:
            rows = np.array(rows, dtype=np.float64)
            if rows.shape != (m, self.dim):
                raise ValueError(f"expected rows of shape {(m, self.dim)}, got {rows.shape}")
            self.rows = rows
        self._means: dict[Domain, np.ndarray] = {}

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def n_classes(self, domain: Domain) -> int:
        return self.n_source if Domain(domain) is Domain.SOURCE else self.n_target

    def offset(self, domain: Domain) -> int:
        return 0 if Domain(domain) is Domain.SOURCE else self.k * self.n_source

    def row_index(self, domain: Domain, cls: int, slot: int) -> int:
        if not 0 <= cls < self.n_classes(domain):
            raise IndexError(f"{Domain(domain).value} class {cls} out of range")
        if not 0 <= slot < self.k:
            raise IndexError(f"slot {slot} out of range for K={self.k}")
        return self.offset(domain) + cls * self.k + slot

    def domain_rows(self, domain: Domain) -> np.ndarray:
        """``(n_classes, K, C)`` view of one domain's centroids."""
        start = self.offset(domain)
        n = self.n_classes(domain)
        return self.rows[start : start + n * self.k].reshape(n, self.k, self.dim)

    def class_centroids(self, domain: Domain, cls: int) -> np.ndarray:
        start = self.row_index(domain, cls, 0)
        return self.rows[start : start + self.k]

    def mean_centroids(self, domain: Domain) -> np.ndarray:
        """Normalized mean of each class's K centroids, ``(n_classes, C)``."""
        domain = Domain(domain)
        cached = self._means.get(domain)
        if cached is None:
            blocks = self.domain_rows(domain)
            total = np.zeros((blocks.shape[0], self.dim))
            for slot in range(self.k):
                total += blocks[:, slot]
            cached = l2_normalize_rows(total / self.k) if len(total) else total
            self._means[domain] = cached
        return cached

    def set_class(self, domain: Domain, cls: int, centroids) -> None:
        start = self.row_index(domain, cls, 0)
        self.rows[start : start + self.k] = centroids
        self._means.pop(Domain(domain), None)

    def snapshot(self) -> "CentroidBank":
        return CentroidBank(self.k, self.n_source, self.n_target, self.dim, self.rows)

    def copy(self) -> "CentroidBank":
        return self.snapshot()


def init_bank(source: PseudoDataset, target: PseudoDataset, k: int, source_features, target_features) -> CentroidBank:
    """Fill every slot of every class with the normalized class-mean feature.

    ``*_features`` are indexed by the datasets' ``indices``.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("both datasets must be nonempty")
    source_features = np.asarray(source_features, dtype=np.float64)
    target_features = np.asarray(target_features, dtype=np.float64)
    dim = source_features.shape[1]
    bank = CentroidBank(k, source.n_classes, target.n_classes, dim)
    for dataset, feats in ((source, source_features), (target, target_features)):
        order = np.argsort(dataset.labels, kind="stable")
        bounds = np.searchsorted(dataset.labels[order], np.arange(dataset.n_classes + 1))
        for cls in range(dataset.n_classes):
            members = np.sort(dataset.indices[order[bounds[cls] : bounds[cls + 1]]])
            if len(members) == 0:
                raise ValueError(f"{dataset.domain.value} class {cls} has no samples")
            centre = mean_vector(feats[members])
            bank.set_class(dataset.domain, cls, np.tile(centre, (k, 1)))
    return bank


def update_class(bank: CentroidBank, domain: Domain, cls: int, queries, m: float) -> list[int]:
    """EMA update of one class after Hungarian matching of its K queries.

    Each matched centroid becomes ``normalize(m * c + (1 - m) * q)``.
    Returns the permutation (query i -> slot sigma[i]).
    """
    if not 0.0 <= m <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[0] != bank.k:
        raise ValueError(f"expected {bank.k} queries for the class, got {q.shape[0]}")
    current = bank.class_centroids(domain, cls).copy()
    sigma = match_queries_to_centroids(q, current)
    updated = current.copy()
    for i, slot in enumerate(sigma):
        updated[slot] = l2_normalize(m * current[slot] + (1.0 - m) * q[i])
    bank.set_class(domain, cls, updated)
    return sigma


def ranked_slots(bank: CentroidBank, query, domain: Domain, cls: int) -> list[int]:
    """Slots of a class in ascending similarity to ``query``; ties by slot."""
    sims = bank.class_centroids(domain, cls) @ np.asarray(query, dtype=np.float64)
    return sorted(range(bank.k), key=lambda s: (sims[s], s))


def select_positive_slot(bank: CentroidBank, query, domain: Domain, cls: int, strategy=PositiveStrategy.MODERATE) -> int:
    order = ranked_slots(bank, query, domain, cls)
    return order[positive_rank(bank.k, strategy) - 1]


def select_positive(bank: CentroidBank, query, domain: Domain, cls: int, strategy=PositiveStrategy.MODERATE) -> np.ndarray:
    """The positive centroid ``c+`` for a query of class ``cls``."""
    slot = select_positive_slot(bank, query, domain, cls, strategy)
    return bank.class_centroids(domain, cls)[slot].copy()


def select_negatives(
    bank: CentroidBank,
    domain: Domain,
    positive_class: int,
    strategy=NegativeStrategy.MEAN,
    scope=Scope.SAME_DOMAIN,
) -> tuple[np.ndarray, list[tuple[str, int, int]]]:
    """Negative vectors for a query whose positive class is ``positive_class``.

    Returns ``(vectors, ids)`` where ``ids[i] = (domain, class, slot)`` and
    slot is ``-1`` for a mean centroid. The positive class never appears.
    An empty ``(0, C)`` array comes back when the scope has no other class.
    """
    domain = Domain(domain)
    strategy = NegativeStrategy(strategy)
    scope = Scope(scope)
    if not 0 <= positive_class < bank.n_classes(domain):
        raise IndexError(f"{domain.value} class {positive_class} out of range")
    domains =[domain] if scope is Scope.SAME_DOMAIN else [Domain.SOURCE, Domain.TARGET]

    parts = []
    ids: list[tuple[str, int, int]] = []
    for d in domains:
        n = bank.n_classes(d)
        classes = [c for c in range(n) if not (d is domain and c == positive_class)]
        if not classes:
            continue
        if strategy is NegativeStrategy.MEAN:
            parts.append(bank.mean_centroids(d)[classes])
            ids.extend((d.value, c, -1) for c in classes)
        else:
            parts.append(bank.domain_rows(d)[classes].reshape(-1, bank.dim))
            ids.extend((d.value, c, s) for c in classes for s in range(bank.k))
    if not parts:
        return np.empty((0, bank.dim)), ids
    return np.concatenate(parts, axis=0), ids
