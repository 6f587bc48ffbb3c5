"""Contrastive learning with synthetic hard negatives, sampling and debiasing."""

from importlib import metadata

__version__ = metadata.version(__name__)
