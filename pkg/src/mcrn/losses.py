"""Contrastive objectives against the centroid bank, with analytic query gradients.

All losses share one kernel, :func:`info_nce`. Centroids and synthetic
negatives are constants here; only the query receives a gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clustering import Domain
from .memory import (
    CentroidBank,
    NegativeStrategy,
    PositiveStrategy,
    Scope,
    SelectionStrategy,
    select_negatives,
    select_positive_slot,
)
from .numerics import l2_normalize_rows

log = logging.getLogger(__name__)


class LossScope(str, Enum):
    UCL = "ucl"  # negatives from both domains
    DSCL = "dscl"  # negatives from the query's own domain only


class SynthesisMethod(str, Enum):
    SONI = "soni"
    QNNI = "qnni"
    RNNI = "rnni"
    NONE = "none"


@dataclass
class LossReport:
    value: float
    grad: np.ndarray
    participants: list = field(default_factory=list)
    degenerate: bool = False  # no negatives at all; value and grad are 0

    @property
    def n_terms(self) -> int:
        return len(self.participants)


@dataclass(frozen=True)
class SynthesisConfig:
    method: SynthesisMethod = SynthesisMethod.SONI
    alpha: float = 0.03
    beta_range: tuple[float, float] = (0.2, 0.5)
    shared_beta: bool = False  # one beta per call instead of one per synthetic

    def __post_init__(self):
        object.__setattr__(self, "method", SynthesisMethod(self.method))
        lo, hi = self.beta_range
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"invalid beta range {self.beta_range}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.05
    scope: LossScope = LossScope.DSCL
    selection: SelectionStrategy = SelectionStrategy()
    synthesis: SynthesisConfig = SynthesisConfig()

    def __post_init__(self):
        object.__setattr__(self, "scope", LossScope(self.scope))
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class Synthesis:
    """Synthetic negatives plus the bookkeeping needed to audit them."""

    vectors: np.ndarray
    parents: list = field(default_factory=list)  # (anchor id, partner id)
    parent_labels: list = field(default_factory=list)  # (anchor class, partner class)
    betas: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vectors)


def info_nce(q, positive, negatives, tau: float, participants=None) -> LossReport:
    """``-log softmax`` of the positive among ``[positive] + negatives`` at temperature ``tau``.

    The gradient with respect to ``q`` is ``(sum_j p_j v_j - c+) / tau``.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    q = np.asarray(q, dtype=np.float64)
    pos = np.asarray(positive, dtype=np.float64)
    neg = np.asarray(negatives, dtype=np.float64).reshape(-1, q.shape[0])
    if participants is None:
        participants = ["positive"] + [("negative", i) for i in range(len(neg))]
    if len(neg) == 0:
        return LossReport(0.0, np.zeros_like(q), participants, degenerate=True)

    cand = np.vstack([pos[None, :], neg])
    logits = (cand @ q) / tau
    top = logits.max()
    w = np.exp(logits - top)
    z = w.sum()
    value = float(math.log(z) + top - logits[0])
    p = w / z
    grad = (p @ cand - pos) / tau
    return LossReport(max(value, 0.0), grad, participants)


def _positive(bank, q, domain, cls, selection):
    slot = select_positive_slot(bank, q, domain, cls, selection.positive)
    return bank.class_centroids(domain, cls)[slot], (Domain(domain).value, cls, slot)


def contrastive_loss(q, bank: CentroidBank, domain, cls: int, tau: float, scope: Scope,
                     selection: SelectionStrategy = SelectionStrategy(), synths=None) -> LossReport:
    pos, pos_id = _positive(bank, q, domain, cls, selection)
    negs, neg_ids = select_negatives(bank, domain, cls, selection.negative, scope)
    ids = [pos_id] + neg_ids
    if synths is not None and len(synths):
        extra = np.asarray(synths.vectors if isinstance(synths, Synthesis) else synths, dtype=np.float64)
        negs = np.vstack([negs, extra])
        ids += [("synthetic", i) for i in range(len(extra))]
    return info_nce(q, pos, negs, tau, ids)


def ucl_loss(q, bank, domain, cls, tau, selection: SelectionStrategy = SelectionStrategy(), synths=None) -> LossReport:
    """Unified contrastive loss: one positive, negatives from both domains."""
    return contrastive_loss(q, bank, domain, cls, tau, Scope.BOTH_DOMAINS, selection, synths)


def dscl_loss(q, bank, domain, cls, tau, selection: SelectionStrategy = SelectionStrategy()) -> LossReport:
    """Domain-specific contrastive loss: negatives from the query's domain only."""
    return contrastive_loss(q, bank, domain, cls, tau, Scope.SAME_DOMAIN, selection)


def dscl_star_loss(q, bank, cls, synths, tau, selection: SelectionStrategy = SelectionStrategy()) -> LossReport:
    """Target-domain DSCL with synthetic negatives appended to the denominator."""
    return contrastive_loss(q, bank, Domain.TARGET, cls, tau, Scope.SAME_DOMAIN, selection, synths)


# --- synthetic hard negatives ---------------------------------------------


def n_anchors(alpha: float, n_classes: int, pool_size: int) -> int:
    """``max(1, floor(alpha * n_classes))`` clamped to the pool; 0 when alpha is 0."""
    if alpha <= 0 or pool_size == 0:
        return 0
    # the 1e-9 absorbs products such as 0.07 * 100 = 7.000000000000001 / 0.29 * 100 = 28.999999999999996
    return min(max(1, math.floor(alpha * n_classes + 1e-9)), pool_size)


def _negative_pool(bank: CentroidBank, domain, positive_class: int):
    blocks = bank.domain_rows(domain)
    classes = [c for c in range(blocks.shape[0]) if c != positive_class]
    if not classes:
        return np.empty((0, bank.dim)), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    rows = blocks[classes].reshape(-1, bank.dim)
    labels = np.repeat(classes, bank.k)
    ids = np.array([bank.row_index(domain, c, s) for c in classes for s in range(bank.k)], dtype=np.int64)
    return rows, labels, ids


def _top(sims: np.ndarray, count: int) -> np.ndarray:
    # descending similarity, ties by position
    return np.lexsort((np.arange(len(sims)), -sims))[:count]


def _draw_betas(rng, count, beta_range, shared):
    lo, hi = beta_range
    if count == 0:
        return np.empty(0)
    if shared:
        return np.full(count, rng.uniform(lo, hi))
    return rng.uniform(lo, hi, size=count)


def _mix(a: np.ndarray, b: np.ndarray, betas: np.ndarray) -> np.ndarray:
    return l2_normalize_rows(betas[:, None] * a + (1.0 - betas[:, None]) * b)


def hard_negative_set(c_plus, bank: CentroidBank, positive_class: int, alpha: float, domain=Domain.TARGET):
    """Top ``gamma`` individual centroids of other classes, nearest to ``c_plus``.

    Returns ``(vectors, labels, row ids)`` ordered by decreasing similarity.
    """
    rows, labels, ids = _negative_pool(bank, domain, positive_class)
    gamma = n_anchors(alpha, bank.n_classes(domain), len(rows))
    if gamma == 0:
        return rows[:0], labels[:0], ids[:0]
    pick = _top(rows @ np.asarray(c_plus, dtype=np.float64), gamma)
    return rows[pick], labels[pick], ids[pick]


def soni_synthesize(c_plus, bank: CentroidBank, positive_class: int, alpha: float, rng,
                    beta_range=(0.2, 0.5), shared_beta: bool = False, domain=Domain.TARGET) -> Synthesis:
    """Second-order nearest interpolation.

    For each hard negative ``h`` near ``c_plus``, find its nearest neighbour
    ``h~`` among the hard negatives that carries a different label and emit
    ``normalize(beta * h + (1 - beta) * h~)``. Anchors whose hard-negative
    set is single-labelled are skipped.
    """
    h, labels, ids = hard_negative_set(c_plus, bank, positive_class, alpha, domain)
    anchors, partners = [], []
    if len(h) >= 2:
        sims = h @ h.T
        for i in range(len(h)):
            other = np.flatnonzero(labels != labels[i])
            if len(other) == 0:
                continue
            j = other[_top(sims[i, other], 1)[0]]
            anchors.append(i)
            partners.append(int(j))
    betas = _draw_betas(rng, len(anchors), beta_range, shared_beta)
    if not anchors:
        return Synthesis(np.empty((0, bank.dim)))
    a = np.asarray(anchors)
    b = np.asarray(partners)
    return Synthesis(
        _mix(h[a], h[b], betas),
        [(int(ids[i]), int(ids[j])) for i, j in zip(a, b)],
        [(int(labels[i]), int(labels[j])) for i, j in zip(a, b)],
        [float(x) for x in betas],
    )


def qnni_synthesize(q, c_plus, bank: CentroidBank, positive_class: int, alpha: float, rng,
                    beta_range=(0.2, 0.5), shared_beta: bool = False, domain=Domain.TARGET) -> Synthesis:
    """Query / nearest-negative interpolation: ``gamma`` mixes of ``q`` with its nearest negative centroid."""
    rows, labels, ids = _negative_pool(bank, domain, positive_class)
    gamma = n_anchors(alpha, bank.n_classes(domain), len(rows))
    if gamma == 0:
        return Synthesis(np.empty((0, bank.dim)))
    q = np.asarray(q, dtype=np.float64)
    j = int(_top(rows @ q, 1)[0])
    betas = _draw_betas(rng, gamma, beta_range, shared_beta)
    anchor = np.tile(q, (gamma, 1))
    partner = np.tile(rows[j], (gamma, 1))
    return Synthesis(
        _mix(anchor, partner, betas),
        [("query", int(ids[j]))] * gamma,
        [(positive_class, int(labels[j]))] * gamma,
        [float(x) for x in betas],
    )


def rnni_synthesize(q, c_plus, bank: CentroidBank, positive_class: int, alpha: float, rng,
                    beta_range=(0.2, 0.5), shared_beta: bool = False, domain=Domain.TARGET) -> Synthesis:
    """Random pairs from the hard-negative set: ``gamma`` mixes of two distinct members."""
    h, labels, ids = hard_negative_set(c_plus, bank, positive_class, alpha, domain)
    if len(h) < 2:
        return Synthesis(np.empty((0, bank.dim)))
    pairs = [rng.choice(len(h), size=2, replace=False) for _ in range(len(h))]
    betas = _draw_betas(rng, len(pairs), beta_range, shared_beta)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    return Synthesis(
        _mix(h[a], h[b], betas),
        [(int(ids[i]), int(ids[j])) for i, j in zip(a, b)],
        [(int(labels[i]), int(labels[j])) for i, j in zip(a, b)],
        [float(x) for x in betas],
    )


def synthesize(q, c_plus, bank, positive_class, config: SynthesisConfig, rng) -> Synthesis:
    method = config.method
    if method is SynthesisMethod.NONE:
        return Synthesis(np.empty((0, bank.dim)))
    kwargs = dict(beta_range=config.beta_range, shared_beta=config.shared_beta)
    if method is SynthesisMethod.SONI:
        return soni_synthesize(c_plus, bank, positive_class, config.alpha, rng, **kwargs)
    if method is SynthesisMethod.QNNI:
        return qnni_synthesize(q, c_plus, bank, positive_class, config.alpha, rng, **kwargs)
    return rnni_synthesize(q, c_plus, bank, positive_class, config.alpha, rng, **kwargs)


# --- batch objective --------------------------------------------------------


@dataclass
class BatchLoss:
    value: float
    source_grads: np.ndarray
    target_grads: np.ndarray
    source_reports: list
    target_reports: list
    n_synthetic: int = 0


def query_loss(q, bank, domain, cls, config: LossConfig, rng=None) -> LossReport:
    """Loss of one query under ``config``; target queries get synthetic negatives."""
    domain = Domain(domain)
    scope = Scope.BOTH_DOMAINS if config.scope is LossScope.UCL else Scope.SAME_DOMAIN
    synths = None
    if domain is Domain.TARGET and config.synthesis.method is not SynthesisMethod.NONE:
        slot = select_positive_slot(bank, q, domain, cls, config.selection.positive)
        c_plus = bank.class_centroids(domain, cls)[slot]
        synths = synthesize(q, c_plus, bank, cls, config.synthesis, rng)
    return contrastive_loss(q, bank, domain, cls, config.tau, scope, config.selection, synths)


def total_loss(source_q, source_labels, target_q, target_labels, bank: CentroidBank,
               config: LossConfig, rng=None) -> BatchLoss:
    """Mean source-query loss plus mean target-query loss.

    Gradients are per query and already carry the ``1/n`` factor of the mean.
    """
    sides = []
    for domain, qs, labels in ((Domain.SOURCE, source_q, source_labels), (Domain.TARGET, target_q, target_labels)):
        qs = np.asarray(qs, dtype=np.float64).reshape(-1, bank.dim)
        n = len(qs)
        if n == 0:
            log.warning("no %s queries in the batch; that term contributes 0", domain.value)
            sides.append((0.0, qs.copy(), []))
            continue
        reports = [query_loss(q, bank, domain, int(c), config, rng) for q, c in zip(qs, labels)]
        value = math.fsum(r.value for r in reports) / n
        grads = np.vstack([r.grad for r in reports]) / n
        sides.append((value, grads, reports))
    (vs, gs, rs), (vt, gt, rt) = sides
    n_syn = sum(sum(1 for p in r.participants if isinstance(p, tuple) and p[0] == "synthetic") for r in rt)
    return BatchLoss(vs + vt, gs, gt, rs, rt, n_syn)
