"""Pseudo-labelling of target features: DBSCAN, noise removal, label corruption."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

NOISE = -1


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class DegenerateClusteringError(RuntimeError):
    """Every sample was labelled noise, so there is nothing to train on."""


@dataclass
class ClusterLabeling:
    assignment: np.ndarray  # cluster id per sample, NOISE for outliers
    n_clusters: int

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.assignment == NOISE))

    @property
    def noise_fraction(self) -> float:
        n = len(self.assignment)
        return self.n_noise / n if n else 0.0


@dataclass
class PseudoDataset:
    """Clustered (or ground-truth labelled) samples of one domain.

    ``indices`` point back into the raw dataset the features came from;
    ``identities`` are the hidden true ids and are only read by evaluation.
    """

    domain: Domain
    indices: np.ndarray
    labels: np.ndarray
    identities: np.ndarray
    n_classes: int = field(init=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.identities = np.asarray(self.identities, dtype=np.int64)
        if not (len(self.indices) == len(self.labels) == len(self.identities)):
            raise ValueError("indices, labels and identities must have equal length")
        if np.any(self.labels < 0):
            raise ValueError("pseudo dataset cannot contain noise labels")
        self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(np.unique(self.labels)) != self.n_classes:
            raise ValueError("labels must be contiguous 0..n_classes-1")

    def __len__(self) -> int:
        return len(self.labels)

    def members(self, label: int) -> np.ndarray:
        """Positions (into this dataset) of the samples carrying ``label``."""
        return np.flatnonzero(self.labels == label)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def cosine_distance_matrix(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    return 1.0 - x @ x.T


def dbscan(features, eps: float = 0.5, min_pts: int = 4) -> ClusterLabeling:
    """DBSCAN with cosine distance (``1 - dot``) on unit-norm features.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Points are scanned in ascending index order; a border
    point joins the first cluster that reaches it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0] if x.ndim == 2 else 0
    if n == 0:
        return ClusterLabeling(np.empty(0, dtype=np.int64), 0)

    within = cosine_distance_matrix(x) <= eps
    neighbors = [np.flatnonzero(row) for row in within]
    is_core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for start in range(n):
        if labels[start] != NOISE or not is_core[start]:
            continue
        labels[start] = cluster
        queue = deque([start])
        while queue:
            p = queue.popleft()
            if not is_core[p]:
                continue
            for nb in neighbors[p]:
                if labels[nb] == NOISE:
                    labels[nb] = cluster
                    queue.append(nb)
        cluster += 1
    return ClusterLabeling(labels, cluster)


def relabel_contiguous(labels) -> np.ndarray:
    """Map labels to 0..n-1 in order of first appearance of their sorted ids."""
    labels = np.asarray(labels, dtype=np.int64)
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.astype(np.int64)


def build_pseudo_dataset(labeling: ClusterLabeling, domain: Domain, identities, indices=None) -> PseudoDataset:
    """Drop noise samples and relabel the remaining clusters contiguously."""
    assignment = np.asarray(labeling.assignment, dtype=np.int64)
    identities = np.asarray(identities, dtype=np.int64)
    if len(identities) != len(assignment):
        raise ValueError("one identity per clustered sample is required")
    if indices is None:
        indices = np.arange(len(assignment))
    indices = np.asarray(indices, dtype=np.int64)
    keep = assignment != NOISE
    if not np.any(keep):
        raise DegenerateClusteringError("all samples were labelled noise")
    return PseudoDataset(domain, indices[keep], relabel_contiguous(assignment[keep]), identities[keep])


def labelled_dataset(labels, domain: Domain, identities=None, indices=None) -> PseudoDataset:
    """Wrap ground-truth labels (source domain) as a :class:`PseudoDataset`."""
    labels = np.asarray(labels, dtype=np.int64)
    if identities is None:
        identities = labels
    if indices is None:
        indices = np.arange(len(labels))
    return PseudoDataset(domain, indices, relabel_contiguous(labels), identities)


def corrupt_clusters(dataset: PseudoDataset, merge_pairs: int, split_classes: int, rng: np.random.Generator) -> PseudoDataset:
    """Inject controlled label noise.

    ``merge_pairs`` disjoint class pairs are fused into single labels, then
    ``split_classes`` of the untouched classes are cut into two halves (the
    first ``ceil(size/2)`` members by position keep the old label). Both
    choices are uniform without replacement.
    """
    if merge_pairs < 0 or split_classes < 0:
        raise ValueError("corruption counts must be non-negative")
    n = dataset.n_classes
    if 2 * merge_pairs + split_classes > n:
        raise ValueError(
            f"cannot merge {merge_pairs} pairs and split {split_classes} classes out of {n}"
        )
    if merge_pairs == 0 and split_classes == 0:
        return PseudoDataset(dataset.domain, dataset.indices.copy(), dataset.labels.copy(), dataset.identities.copy())

    labels = dataset.labels.copy()
    chosen = rng.permutation(n)
    merged = chosen[: 2 * merge_pairs]
    to_split = chosen[2 * merge_pairs : 2 * merge_pairs + split_classes]

    for k in range(merge_pairs):
        keep, absorb = sorted((int(merged[2 * k]), int(merged[2 * k + 1])))
        labels[dataset.labels == absorb] = keep

    next_label = n
    for cls in sorted(int(c) for c in to_split):
        members = np.flatnonzero(dataset.labels == cls)
        if len(members) < 2:
            raise ValueError(f"class {cls} has {len(members)} sample(s) and cannot be split")
        half = (len(members) + 1) // 2
        labels[members[half:]] = next_label
        next_label += 1

    return PseudoDataset(dataset.domain, dataset.indices.copy(), relabel_contiguous(labels), dataset.identities.copy())
