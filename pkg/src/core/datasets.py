"""
Dataset containers and the permutation-based train/calibration/test split
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, EmptyPartition

logger = logging.getLogger(__name__)

ROLES = ('full', 'train', 'calibration', 'test')
FOLD_ROLES = ('train', 'calibration', 'test')


@dataclass(frozen=True)
class Sample:
    """One feature-response pair, optionally tagged with a group"""

    features: np.ndarray
    target: Optional[float] = None
    label: Optional[int] = None
    group: Optional[str] = None

    @property
    def response(self):
        return self.target if self.target is not None else self.label


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented sample container

    Exactly one of `targets` (regression) or `labels` (classification) is set.
    `source_index` remembers each row's position in the dataset it was cut from.
    """

    features: np.ndarray
    targets: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None
    role: str = 'full'
    source_index: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or features.shape[1] < 1:
            raise DataError(f"Features must be a 2-D array with d >= 1, got shape {features.shape}")
        n = features.shape[0]
        if n == 0:
            raise DataError("Dataset must contain at least one sample")
        if (self.targets is None) == (self.labels is None):
            raise DataError("Exactly one of targets or labels must be given")
        if self.role not in ROLES:
            raise DataError(f"Unknown dataset role '{self.role}'")

        object.__setattr__(self, 'features', features)
        if self.targets is not None:
            targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
            self._check_length(targets, n, 'targets')
            object.__setattr__(self, 'targets', targets)
        else:
            labels = np.asarray(self.labels)
            if labels.size and (labels.min() < 0 or not np.all(labels == np.round(labels))):
                raise DataError("Labels must be nonnegative integers")
            labels = labels.astype(np.int64).reshape(-1)
            self._check_length(labels, n, 'labels')
            object.__setattr__(self, 'labels', labels)
        if self.groups is not None:
            groups = np.asarray(self.groups).astype(str).reshape(-1)
            self._check_length(groups, n, 'groups')
            object.__setattr__(self, 'groups', groups)
        if self.source_index is None:
            object.__setattr__(self, 'source_index', np.arange(n))
        else:
            index = np.asarray(self.source_index, dtype=np.int64).reshape(-1)
            self._check_length(index, n, 'source_index')
            object.__setattr__(self, 'source_index', index)

    @staticmethod
    def _check_length(column, n, name):
        if column.shape[0] != n:
            raise DataError(f"Column '{name}' has {column.shape[0]} rows, features have {n}")

    def __len__(self):
        return self.features.shape[0]

    def __repr__(self):
        return f"<Dataset(role={self.role}, n={len(self)}, d={self.dim}, task={self.task})>"

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def task(self):
        return 'regression' if self.targets is not None else 'classification'

    @property
    def responses(self):
        return self.targets if self.targets is not None else self.labels

    @property
    def has_groups(self):
        return self.groups is not None

    def sample(self, i):
        return Sample(
            features=self.features[i],
            target=float(self.targets[i]) if self.targets is not None else None,
            label=int(self.labels[i]) if self.labels is not None else None,
            group=str(self.groups[i]) if self.groups is not None else None,
        )

    def samples(self):
        for i in range(len(self)):
            yield self.sample(i)

    def subset(self, indices, role=None):
        """Rows at `indices`, keeping their provenance in source_index"""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            targets=self.targets[indices] if self.targets is not None else None,
            labels=self.labels[indices] if self.labels is not None else None,
            groups=self.groups[indices] if self.groups is not None else None,
            role=role or self.role,
            source_index=self.source_index[indices],
        )

    def concat(self, other):
        """Row-wise union of two homogeneous datasets"""
        if self.task != other.task or self.dim != other.dim:
            raise DataError("Cannot concatenate datasets of different task or dimension")
        if self.has_groups != other.has_groups:
            raise DataError("Group tags must be present in both datasets or in neither")
        return Dataset(
            features=np.vstack([self.features, other.features]),
            targets=np.concatenate([self.targets, other.targets]) if self.targets is not None else None,
            labels=np.concatenate([self.labels, other.labels]) if self.labels is not None else None,
            groups=np.concatenate([self.groups, other.groups]) if self.groups is not None else None,
            role=self.role,
            source_index=np.concatenate([self.source_index, other.source_index]),
        )


def fold_sizes(n, fractions):
    """Largest-remainder apportionment of n samples over the given fractions"""
    raw = [n * f for f in fractions]
    sizes = [math.floor(r) for r in raw]
    leftover = n - sum(sizes)
    # ties go to the earlier fold
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def split_dataset(data, fractions, rng):
    """Randomly split `data` into (train, calibration, test) folds"""
    if len(fractions) != 3:
        raise DataError(f"Expected three split fractions, got {len(fractions)}")
    if any(not f > 0 for f in fractions):
        raise DataError(f"Split fractions must be positive, got {tuple(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"Split fractions must sum to 1, got {sum(fractions)}")
    n = len(data)
    if n < 3:
        raise EmptyPartition(f"Cannot split {n} samples into three non-empty folds")

    sizes = fold_sizes(n, fractions)
    for role, size in zip(FOLD_ROLES, sizes):
        if size == 0:
            raise EmptyPartition(f"Fold '{role}' would receive 0 of {n} samples")

    permutation = np.argsort(rng.uniforms(n), kind='stable')
    cuts = np.cumsum(sizes)[:-1]
    folds = np.split(permutation, cuts)
    logger.info(f"Split {n} samples into folds of sizes {sizes[0]}/{sizes[1]}/{sizes[2]}")
    return tuple(data.subset(idx, role) for idx, role in zip(folds, FOLD_ROLES))
