"""
Report writers: CSV tables (pandas), JSON reports and length-curve CSVs

Outputs carry no timestamps, so identical runs give byte-identical files.
A path of '-' streams to standard output.
"""

import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from src.evaluation.metrics import CSV_COLUMNS

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6f'
STDOUT = '-'


def json_safe(value):
    """Recursively turn numpy scalars into Python ones and non-finite floats into strings"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [json_safe(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if hasattr(value, 'value') and not isinstance(value, (int, float, str)):
        value = value.value
    if isinstance(value, float) and not math.isfinite(value):
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def write_frame(frame, target):
    if target == STDOUT:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    logger.info(f"Wrote {len(frame)} rows to {path}")


def write_json(payload, target):
    text = json.dumps(json_safe(payload), indent=2, sort_keys=True)
    if target == STDOUT:
        sys.stdout.write(text + '\n')
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text + '\n')
    logger.info(f"Saved report to {path}")


def _csv_target(cfg):
    """Configured CSV path; stdout when no output at all is configured"""
    if cfg.output.csv:
        return cfg.output.csv
    if not cfg.output.json_path and not cfg.output.curve:
        return STDOUT
    return None


def _config_payload(cfg):
    return cfg.model_dump(mode='json', by_alias=True)


# ========== EXPERIMENT ==========

def reports_frame(reports):
    return pd.DataFrame([r.csv_row() for r in reports], columns=CSV_COLUMNS)


def write_experiment_outputs(cfg, reports):
    target = _csv_target(cfg)
    if target:
        write_frame(reports_frame(reports), target)
    if cfg.output.json_path:
        write_json({'config': _config_payload(cfg), 'reports': [r.to_dict() for r in reports]}, cfg.output.json_path)


# ========== AUDIT ==========

def write_audit_outputs(cfg, table):
    from .runner import AUDIT_COLUMNS

    target = _csv_target(cfg)
    if target:
        write_frame(pd.DataFrame(table, columns=AUDIT_COLUMNS), target)
    if cfg.output.json_path:
        write_json({'config': _config_payload(cfg), 'audit': table}, cfg.output.json_path)


# ========== ABLATION ==========

def ablation_frame(results):
    rows = []
    for bias, report in results:
        row = report.csv_row()
        row['bias'] = bias
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_COLUMNS + ['bias'])


def write_ablation_outputs(cfg, results):
    target = _csv_target(cfg)
    if target:
        write_frame(ablation_frame(results), target)
    if cfg.output.json_path:
        payload = {
            'config': _config_payload(cfg),
            'reports': [dict(report.to_dict(), bias=bias) for bias, report in results],
        }
        write_json(payload, cfg.output.json_path)


# ========== THEORY ==========

VERDICT_COLUMNS = ['checker', 'alpha', 'verdict', 'detail']


def verdicts_frame(rows):
    flat = [dict(row, detail=json.dumps(json_safe(row['detail']), sort_keys=True)) for row in rows]
    return pd.DataFrame(flat, columns=VERDICT_COLUMNS)


def write_curve(curve, target):
    write_frame(curve.to_frame(), target)


def write_theory_outputs(cfg, report, curve):
    from .runner import theory_verdict_rows

    target = _csv_target(cfg)
    if target:
        write_frame(verdicts_frame(theory_verdict_rows(report)), target)
    if cfg.output.curve:
        write_curve(curve, cfg.output.curve)
    if cfg.output.json_path:
        payload = dict(report, config=_config_payload(cfg), curve_points=curve.to_frame().to_dict(orient='list'))
        write_json(payload, cfg.output.json_path)
