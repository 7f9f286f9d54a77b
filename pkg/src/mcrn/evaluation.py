"""Retrieval metrics (mAP, CMC), cluster purity and inter-domain distance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .clustering import NOISE, ClusterLabeling, PseudoDataset
from .numerics import mean_vector

log = logging.getLogger(__name__)


@dataclass
class RetrievalProtocol:
    query_features: np.ndarray
    query_ids: np.ndarray
    gallery_features: np.ndarray
    gallery_ids: np.ndarray
    query_keys: np.ndarray | None = None  # record ids; a gallery item with the same key is excluded
    gallery_keys: np.ndarray | None = None


def average_precision(relevant_sorted: np.ndarray) -> float:
    """AP of a ranked 0/1 relevance vector: mean precision at each hit (correctly rounded sum)."""
    hits = np.flatnonzero(relevant_sorted)
    if len(hits) == 0:
        return 0.0
    precision = [(i + 1) / (int(pos) + 1) for i, pos in enumerate(hits)]
    return math.fsum(precision) / len(precision)


def map_cmc(protocol: RetrievalProtocol, max_rank: int = 10) -> tuple[float, np.ndarray]:
    """Mean average precision and CMC at ranks ``1..max_rank``.

    Gallery items are ranked by descending cosine similarity, ties broken by
    gallery index. Queries whose identity is absent from the gallery are
    skipped.
    """
    qf = np.asarray(protocol.query_features, dtype=np.float64)
    gf = np.asarray(protocol.gallery_features, dtype=np.float64)
    qids = np.asarray(protocol.query_ids)
    gids = np.asarray(protocol.gallery_ids)
    if len(qf) == 0 or len(gf) == 0:
        raise ValueError("query and gallery must be nonempty")
    sims = qf @ gf.T
    gallery_index = np.arange(len(gf))
    aps = []
    cmc = np.zeros(max_rank)
    skipped = 0
    for i in range(len(qf)):
        keep = np.ones(len(gf), dtype=bool)
        if protocol.query_keys is not None and protocol.gallery_keys is not None:
            keep = np.asarray(protocol.gallery_keys) != protocol.query_keys[i]
        order = np.lexsort((gallery_index, -sims[i]))
        order = order[keep[order]]
        relevant = gids[order] == qids[i]
        if not relevant.any():
            skipped += 1
            continue
        aps.append(average_precision(relevant))
        first = int(np.argmax(relevant))
        if first < max_rank:
            cmc[first:] += 1
    if skipped:
        log.warning("%d queries have no matching gallery identity and were skipped", skipped)
    if not aps:
        raise ValueError("no query has a relevant gallery item")
    return math.fsum(aps) / len(aps), cmc / len(aps)


def domain_distance(source_features, target_features) -> float:
    """Cosine distance between the normalized mean features of two domains."""
    src = mean_vector(np.asarray(source_features, dtype=np.float64))
    tgt = mean_vector(np.asarray(target_features, dtype=np.float64))
    return float(1.0 - np.dot(src, tgt))


def cluster_purity(labels, identities) -> float:
    """Sum over clusters of the majority-identity count over clustered samples.

    ``labels`` may be a :class:`PseudoDataset` (identities taken from it), a
    :class:`ClusterLabeling`, or an array; noise entries are ignored.
    """
    if isinstance(labels, PseudoDataset):
        identities = labels.identities if identities is None else identities
        labels = labels.labels
    elif isinstance(labels, ClusterLabeling):
        labels = labels.assignment
    labels = np.asarray(labels)
    identities = np.asarray(identities)
    if len(labels) != len(identities):
        raise ValueError("one identity per label is required")
    clustered = labels != NOISE
    labels, identities = labels[clustered], identities[clustered]
    if len(labels) == 0:
        raise ValueError("no clustered samples")
    total = 0
    for cls in np.unique(labels):
        _, counts = np.unique(identities[labels == cls], return_counts=True)
        total += counts.max()
    return float(total / len(labels))
