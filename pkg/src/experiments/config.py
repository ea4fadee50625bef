"""
Experiment configuration

Flat `key=value` text with dotted sections (`data.kind=mixture`, `pt.mode=two_level`),
`#` comments and comma-separated lists, or JSON when the file starts with `{`.
Both forms are validated by the pydantic ExperimentConfig schema.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

METHODS = ('vcp', 'pt', 'pt_two_level', 'cqr', 'pt_cqr', 'localized')
PT_METHODS = ('pt', 'pt_two_level', 'pt_cqr', 'localized')
CQR_METHODS = ('cqr', 'pt_cqr')


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


def _as_list(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [value]


class DataConfig(Section):
    kind: Literal['mixture', 'gaussian', 'logistic', 'csv'] = 'mixture'
    n: int = Field(8000, ge=3)
    d: int = Field(2, ge=1)
    beta: Optional[List[float]] = None
    mu: float = Field(20.0, ge=0)
    sigma: float = Field(1.0, gt=0)
    k: int = Field(4, ge=2)
    n_groups: Optional[int] = Field(None, ge=2)
    path: Optional[str] = None

    @field_validator('beta', mode='before')
    @classmethod
    def wrap_scalar(cls, value):
        return _as_list(value)

    @model_validator(mode='after')
    def check_source(self):
        if self.kind == 'csv' and not self.path:
            raise ValueError("data.kind=csv needs data.path")
        if self.beta is not None and len(self.beta) != self.d:
            raise ValueError(f"beta has {len(self.beta)} entries, expected d={self.d}")
        return self


class SplitConfig(Section):
    train: float = Field(0.125, gt=0, lt=1)
    calib: float = Field(0.25, gt=0, lt=1)
    test: float = Field(0.625, gt=0, lt=1)

    @model_validator(mode='after')
    def check_sum(self):
        total = self.train + self.calib + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        return self

    @property
    def fractions(self):
        return (self.train, self.calib, self.test)


class ModelConfig(Section):
    bias: float = 0.0
    steps: int = Field(2000, ge=1)
    lr: float = Field(0.05, gt=0)
    class_range: Optional[List[int]] = None

    @field_validator('class_range', mode='before')
    @classmethod
    def wrap_scalar(cls, value):
        return _as_list(value)

    @field_validator('class_range')
    @classmethod
    def check_range(cls, value):
        if value is not None and (len(value) != 2 or not 0 <= value[0] < value[1]):
            raise ValueError("class_range must be two indices lo,hi with 0 <= lo < hi")
        return value


class PTSection(Section):
    mode: Literal['null', 'two_level'] = 'null'
    alpha1: float = Field(0.9, gt=0, lt=1)


class OutputConfig(Section):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    csv: Optional[str] = None
    json_path: Optional[str] = Field(None, alias='json')
    curve: Optional[str] = None
    db: bool = False


class TheoryConfig(Section):
    grid_start: float = Field(0.50, gt=0, lt=1)
    grid_stop: float = Field(0.995, gt=0, lt=1)
    grid_step: float = Field(0.01, gt=0, lt=1)
    h: float = Field(0.01, gt=0, lt=0.5)
    p_grid: Optional[List[float]] = None
    u_grid: Optional[List[float]] = None
    probe_points: int = Field(1, ge=1)

    @field_validator('p_grid', 'u_grid', mode='before')
    @classmethod
    def wrap_scalar(cls, value):
        return _as_list(value)

    @model_validator(mode='after')
    def check_grid(self):
        if self.grid_start >= self.grid_stop:
            raise ValueError("theory.grid_start must be below theory.grid_stop")
        return self


class AblationConfig(Section):
    biases: List[float] = [0.0, 5.0, 10.0, 20.0]

    @field_validator('biases', mode='before')
    @classmethod
    def wrap_scalar(cls, value):
        return _as_list(value)


class ExperimentConfig(Section):
    """Full experiment description: data, split, model, methods, levels and outputs"""

    data: DataConfig = DataConfig()
    split: SplitConfig = SplitConfig()
    model: ModelConfig = ModelConfig()
    score: Literal['abs_residual', 'cqr', 'softmax', 'normalized'] = 'abs_residual'
    methods: List[str] = ['vcp', 'pt']
    alphas: List[float] = [0.1]
    ps: List[float] = [0.96]
    pt: PTSection = PTSection()
    trials: int = Field(5, ge=1)
    repeats: int = Field(100, ge=2)
    stability_points: int = Field(200, ge=0)
    seed: int = Field(0, ge=0, lt=2 ** 63)
    output: OutputConfig = OutputConfig()
    theory: TheoryConfig = TheoryConfig()
    ablation: AblationConfig = AblationConfig()

    @model_validator(mode='before')
    @classmethod
    def accept_pt_p(cls, values):
        """`pt.p` is an alias of the top-level `ps` list"""
        if isinstance(values, dict) and isinstance(values.get('pt'), dict) and 'p' in values['pt']:
            values = dict(values)
            section = dict(values['pt'])
            if 'ps' in values:
                raise ValueError("give keep probabilities as either ps or pt.p, not both")
            values['ps'] = section.pop('p')
            values['pt'] = section
        return values

    @field_validator('methods', 'alphas', 'ps', mode='before')
    @classmethod
    def wrap_scalar(cls, value):
        return _as_list(value)

    @field_validator('methods')
    @classmethod
    def check_methods(cls, value):
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown} (expected a subset of {', '.join(METHODS)})")
        if not value:
            raise ValueError("at least one method is required")
        return list(dict.fromkeys(value))

    @field_validator('alphas')
    @classmethod
    def check_alphas(cls, value):
        if not value or any(not 0.0 < a < 1.0 for a in value):
            raise ValueError(f"every alpha must lie in (0, 1), got {value}")
        return value

    @field_validator('ps')
    @classmethod
    def check_ps(cls, value):
        if any(not 0.0 < p <= 1.0 for p in value):
            raise ValueError(f"every p must lie in (0, 1], got {value}")
        return value

    @model_validator(mode='after')
    def check_consistency(self):
        classification = self.data.kind == 'logistic'
        if self.data.kind != 'csv' and classification != (self.score == 'softmax'):
            raise ValueError("the softmax score goes with data.kind=logistic and only with it")
        if classification and any(m in CQR_METHODS or m == 'localized' for m in self.methods):
            raise ValueError("cqr, pt_cqr and localized methods need regression data")
        if self.score == 'cqr' and any(m in ('vcp', 'pt', 'pt_two_level', 'localized') for m in self.methods):
            raise ValueError("with score=cqr use methods cqr / pt_cqr")
        if 'localized' in self.methods and self.score != 'abs_residual':
            raise ValueError("the localized method is built on score=abs_residual")
        if self.uses_pt:
            if not self.ps:
                raise ValueError("PT methods need at least one p in ps")
            for alpha in self.alphas:
                for p in self.ps:
                    if not (1.0 - alpha) < p <= 1.0:
                        raise ValueError(f"p={p} must lie in (1 - alpha, 1] = ({1.0 - alpha:.6g}, 1] for alpha={alpha}")
                    if 'pt_two_level' in self.methods:
                        alpha2 = (alpha - (1.0 - p) * self.pt.alpha1) / p
                        if not 0.0 < alpha2 < 1.0:
                            raise ValueError(f"pt.alpha1={self.pt.alpha1} leaves alpha2={alpha2:.6g} outside (0, 1) at alpha={alpha}, p={p}")
        return self

    @property
    def uses_pt(self):
        return any(m in PT_METHODS for m in self.methods)


# ========== PARSING ==========

def parse_config_text(text):
    """Nested dict from flat key=value text, or from JSON when the text starts with '{'"""
    if text.lstrip().startswith('{'):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON config: {e}") from e

    nested = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if ',' in value:
            value = [item.strip() for item in value.split(',') if item.strip()]

        node = nested
        parts = key.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: '{part}' is both a value and a section", field=key)
        if parts[-1] in node:
            raise ConfigError(f"line {lineno}: duplicate key", field=key)
        node[parts[-1]] = value
    return nested


def build_config(values):
    """Validate a nested dict; pydantic errors become ConfigError with the dotted field path"""
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        error = e.errors()[0]
        field = '.'.join(str(part) for part in error['loc']) or None
        message = error['msg']
        if error['type'] == 'extra_forbidden':
            message = "unknown configuration key"
        raise ConfigError(message, field=field) from e


def load_config(path):
    """Read and validate a config file; returns (ExperimentConfig, sha256 digest of the bytes)"""
    file_path = Path(path)
    try:
        raw = file_path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read config {file_path}: {e.strerror or e}") from e
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ConfigError(f"config {file_path} is not UTF-8: {e}") from e
    cfg = build_config(parse_config_text(text))
    logger.info(f"Loaded config {file_path}")
    return cfg, hashlib.sha256(raw).hexdigest()


def default_config():
    cfg = ExperimentConfig()
    digest = hashlib.sha256(cfg.model_dump_json().encode('utf-8')).hexdigest()
    return cfg, digest


def with_overrides(cfg, seed=None, csv=None, db=None):
    """Copy of `cfg` with CLI overrides applied (and re-validated)"""
    values = cfg.model_dump()
    if seed is not None:
        values['seed'] = seed
    if csv is not None:
        values['output']['csv'] = csv
    if db is not None:
        values['output']['db'] = db
    return build_config(values)
