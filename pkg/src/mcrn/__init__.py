"""Multi-centroid memory contrastive training for unsupervised domain adaptation."""

__version__ = "0.1.0"
