"""
CSV dataset ingestion and export

Format: header row; feature columns f0..f{d-1}, then `target` (regression)
or `label` (classification), then an optional `group` column. UTF-8, '.' decimals.
"""

import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd

from src.core.datasets import Dataset
from src.core.errors import DataError

logger = logging.getLogger(__name__)

FEATURE_PATTERN = re.compile(r'^f(\d+)$')


def _feature_columns(columns):
    indexed = {}
    for column in columns:
        match = FEATURE_PATTERN.match(column)
        if match:
            indexed[int(match.group(1))] = column
    if not indexed:
        raise DataError("CSV has no feature columns (expected f0, f1, ...)")
    d = len(indexed)
    if sorted(indexed) != list(range(d)):
        raise DataError(f"Feature columns must be f0..f{d - 1} without gaps, got {sorted(indexed.values())}")
    return [indexed[j] for j in range(d)]


def load_dataset_csv(path):
    """
    Load a dataset from a CSV file in the core format.

    Raises:
        DataError: if the file is missing, unreadable, or violates the schema
    """
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"File not found: {file_path}")

    try:
        df = pd.read_csv(file_path, encoding='utf-8', float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Failed to read {file_path}: {e}") from e

    features = _feature_columns(df.columns)
    has_target, has_label = 'target' in df.columns, 'label' in df.columns
    if has_target == has_label:
        raise DataError(f"{file_path}: exactly one of 'target' or 'label' columns is required")
    response = 'target' if has_target else 'label'
    known = set(features) | {response, 'group'}
    extra = [c for c in df.columns if c not in known]
    if extra:
        raise DataError(f"{file_path}: unexpected columns {extra}")
    if len(df) == 0:
        raise DataError(f"{file_path}: no data rows")

    numeric = df[features + [response]]
    if numeric.isna().any().any():
        raise DataError(f"{file_path}: missing values are not supported")
    try:
        values = numeric.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DataError(f"{file_path}: non-numeric feature or response value ({e})") from e

    groups = None
    if 'group' in df.columns:
        if df['group'].isna().any():
            raise DataError(f"{file_path}: group tags must be present on every row or absent")
        groups = df['group'].astype(str).to_numpy()

    data = Dataset(
        features=values[:, :-1],
        targets=values[:, -1] if has_target else None,
        labels=values[:, -1] if has_label else None,
        groups=groups,
    )
    logger.info(f"Loaded {len(data)} samples (d={data.dim}, {data.task}) from {file_path}")
    return data


def dataset_frame(data):
    frame = pd.DataFrame(data.features, columns=[f"f{j}" for j in range(data.dim)])
    if data.task == 'regression':
        frame['target'] = data.targets
    else:
        frame['label'] = data.labels
    if data.has_groups:
        frame['group'] = data.groups
    return frame


def write_dataset_csv(data, path):
    """Write `data` in the core CSV format to a path or an open text stream"""
    frame = dataset_frame(data)
    if hasattr(path, 'write'):
        frame.to_csv(path, index=False, float_format='%.17g')
        return
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(file_path, index=False, float_format='%.17g', encoding='utf-8')
    logger.info(f"Wrote {len(data)} samples to {file_path}")
