"""
Experiment pipeline: generate -> split -> fit -> calibrate -> wrap -> evaluate

Every trial owns the stream RngStream(mix(seed, t)); inside a trial, data,
split, evaluation and stability draws come from fixed child streams, so every
emitted number is a pure function of the configuration.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.conformal.pt import PTConfig, PTMode, PTPredictor, LocalizedPredictor, calibrate_localized
from src.conformal.scores import ScoreFn, ScoreKind
from src.conformal.vcp import calibrate
from src.core.datasets import Dataset, split_dataset
from src.core.errors import ConfigError, GridTooCoarse, InfiniteMeasure
from src.core.rng import RngStream, mix
from src.core.types import Level, Verdict
from src.data.csv_io import load_dataset_csv
from src.data.synth import SynthSpec, generate
from src.evaluation.metrics import (
    aggregate_reports,
    evaluate,
    stability_profile,
    subgroup_miscoverage_curve,
    conditional_coverage_condition,
)
from src.predictors.linear import (
    fit_linear_mean,
    fit_linear_quantile,
    fit_logistic,
    inject_bias,
    predict_batch,
)
from src.theory.length import (
    build_length_curve,
    check_first_order,
    check_general_condition,
    check_local_concavity,
    check_secant,
    default_level_grid,
    gaussian_failure_case,
    general_condition_table,
)

logger = logging.getLogger(__name__)

DATA_STREAM = 0
SPLIT_STREAM = 1
EVAL_STREAM = 2
STABILITY_STREAM = 3
LOCALIZED_STREAM = 4

METHOD_ORDER = ('vcp', 'pt', 'pt_two_level', 'cqr', 'pt_cqr', 'localized')
SCALE_FLOOR_FRACTION = 0.05


def trial_seed(base_seed, t):
    return mix(base_seed, t)


# ========== DATA ==========

def synth_spec(cfg):
    data = cfg.data
    return SynthSpec(
        kind=data.kind,
        n=data.n,
        d=data.d,
        beta=tuple(data.beta) if data.beta else None,
        mu=data.mu,
        sigma=data.sigma,
        k=data.k,
        n_groups=data.n_groups,
        seed=cfg.seed,
    )


def load_source(cfg):
    """The CSV dataset for data.kind=csv (read once per run), else None"""
    if cfg.data.kind != 'csv':
        return None
    data = load_dataset_csv(cfg.data.path)
    expected = 'classification' if cfg.score == 'softmax' else 'regression'
    if data.task != expected:
        raise ConfigError(f"score={cfg.score} needs {expected} data, {cfg.data.path} holds {data.task} data", field='score')
    if data.task == 'classification' and any(m in ('cqr', 'pt_cqr', 'localized') for m in cfg.methods):
        raise ConfigError("cqr, pt_cqr and localized methods need regression data", field='methods')
    return data


# ========== TRIAL STATE ==========

@dataclass
class Trial:
    """Folds, fitted models and calibrated predictors of one trial"""

    index: int
    rng: RngStream
    train: object
    calib: object
    test: object
    base: object = None
    cqr: dict = field(default_factory=dict)
    localized: dict = field(default_factory=dict)


def _fit_base(cfg, train, calib, bias):
    """Main calibrated predictor for the vcp / pt family, or None for CQR-only runs"""
    kind = ScoreKind(cfg.score)
    if kind == ScoreKind.CQR:
        return None
    if kind == ScoreKind.SOFTMAX:
        model = fit_logistic(train, n_classes=cfg.data.k if cfg.data.kind == 'logistic' else None)
        class_range = tuple(cfg.model.class_range) if cfg.model.class_range else None
        model = inject_bias(model, bias, class_range=class_range)
        return calibrate(model, ScoreFn(kind), calib)

    model = inject_bias(fit_linear_mean(train), bias)
    if kind == ScoreKind.NORMALIZED:
        residuals = np.abs(train.targets - predict_batch(model, train.features))
        scale_model = fit_linear_mean(Dataset(features=train.features, targets=residuals, role='train'))
        floor = SCALE_FLOOR_FRACTION * float(residuals.mean())
        return calibrate(model, ScoreFn(kind, scale_model=scale_model, floor=floor), calib)
    return calibrate(model, ScoreFn(kind), calib)


def prepare_trial(cfg, t, source=None, bias=None):
    """Split, fit and calibrate everything trial t needs"""
    bias = cfg.model.bias if bias is None else bias
    rng = RngStream(trial_seed(cfg.seed, t))
    data = source if source is not None else generate(synth_spec(cfg), rng.child(DATA_STREAM))
    train, calib, test = split_dataset(data, cfg.split.fractions, rng.child(SPLIT_STREAM))
    trial = Trial(index=t, rng=rng, train=train, calib=calib, test=test)

    if cfg.score != 'cqr':
        trial.base = _fit_base(cfg, train, calib, bias)

    if any(m in ('cqr', 'pt_cqr') for m in cfg.methods) or cfg.score == 'cqr':
        for alpha in cfg.alphas:
            model = fit_linear_quantile(train, alpha / 2.0, 1.0 - alpha / 2.0, steps=cfg.model.steps, lr=cfg.model.lr)
            trial.cqr[alpha] = calibrate(inject_bias(model, bias), ScoreFn(ScoreKind.CQR), calib)

    if 'localized' in cfg.methods:
        for j, p in enumerate(cfg.ps):
            trial.localized[p] = calibrate_localized(trial.base, p, rng.child(LOCALIZED_STREAM).child(j))
    return trial


# ========== METHODS ==========

@dataclass(frozen=True)
class MethodSpec:
    method: str
    alpha: float
    p: float = None
    alpha_index: int = 0
    p_index: int = 0


def method_specs(cfg):
    """Every (method, alpha, p) combination of the config, in report order"""
    specs = []
    for method in sorted(cfg.methods, key=METHOD_ORDER.index):
        for ai, alpha in enumerate(cfg.alphas):
            if method in ('vcp', 'cqr'):
                specs.append(MethodSpec(method, alpha, None, ai, 0))
            else:
                for pj, p in enumerate(cfg.ps):
                    specs.append(MethodSpec(method, alpha, p, ai, pj))
    return specs


def build_predictor(cfg, trial, spec):
    base = trial.base
    if spec.method in ('cqr', 'pt_cqr'):
        base = trial.cqr[spec.alpha]
    if spec.method in ('vcp', 'cqr'):
        return base
    if spec.method == 'localized':
        return trial.localized[spec.p]
    mode = PTMode.TWO_LEVEL if spec.method == 'pt_two_level' else PTMode.NULL_SET
    return PTPredictor(base=base, config=PTConfig(p=spec.p, target_alpha=spec.alpha, mode=mode, alpha1=cfg.pt.alpha1))


def branch_lengths(predictor, test, level):
    """Mean measure of the meaningful and the vacuous branch, or None for deterministic predictors"""
    if isinstance(predictor, PTPredictor):
        meaningful = [predictor.meaningful_set(x).measure for x in test.features]
        if predictor.config.mode == PTMode.TWO_LEVEL:
            vacuous = [predictor.base.predict(x, Level(predictor.config.alpha1)).measure for x in test.features]
        else:
            vacuous = [0.0]
        return float(np.mean(meaningful)), float(np.mean(vacuous))
    if isinstance(predictor, LocalizedPredictor):
        threshold = predictor.threshold(level)
        return 2.0 * threshold, 0.0
    return None


def _eval_stream(trial, stream, spec):
    return trial.rng.child(stream).child(spec.alpha_index).child(spec.p_index)


def stability_points(cfg, test):
    count = min(cfg.stability_points, len(test))
    return test.subset(np.arange(count)) if count else None


def measure_stability(cfg, trial, spec, predictor, level):
    """(mean, se) of the per-point measure variance on the stability subset"""
    points = stability_points(cfg, trial.test)
    if points is None:
        return math.nan, math.nan
    try:
        variances = stability_profile(predictor, points, level, cfg.repeats, _eval_stream(trial, STABILITY_STREAM, spec))
    except InfiniteMeasure as e:
        logger.warning(f"{spec.method} alpha={spec.alpha} p={spec.p}: {e}")
        return math.inf, math.inf
    se = float(variances.std(ddof=1) / math.sqrt(variances.size)) if variances.size > 1 else 0.0
    return float(variances.mean()), se


def evaluate_trial(cfg, trial):
    """One AuditReport per method spec for this trial"""
    reports = []
    for spec in method_specs(cfg):
        level = Level(spec.alpha)
        predictor = build_predictor(cfg, trial, spec)
        report = evaluate(predictor, trial.test, level, _eval_stream(trial, EVAL_STREAM, spec),
                          method=spec.method, p=spec.p)
        report.interval_stability, report.stability_se = measure_stability(cfg, trial, spec, predictor, level)
        report.seed = cfg.seed
        reports.append(report)
    return reports


# ========== ENTRY POINTS ==========

def run_trials(cfg, bias=None):
    """Per-trial reports, grouped by method spec"""
    source = load_source(cfg)
    specs = method_specs(cfg)
    per_spec = [[] for _ in specs]
    for t in range(cfg.trials):
        logger.info(f"Trial {t + 1}/{cfg.trials} (seed {trial_seed(cfg.seed, t)})")
        trial = prepare_trial(cfg, t, source=source, bias=bias)
        for i, report in enumerate(evaluate_trial(cfg, trial)):
            per_spec[i].append(report)
    return specs, per_spec


def run_experiment(cfg, write=True):
    """Aggregate reports across trials, one per method x alpha x p"""
    _, per_spec = run_trials(cfg)
    reports = [aggregate_reports(trials, seed=cfg.seed) for trials in per_spec]
    for report in reports:
        logger.info(f"{report.method} alpha={report.alpha} p={report.p}: coverage {report.coverage:.4f}, "
                    f"mean length {report.mean_length:.4f}")
    if write:
        from .report import write_experiment_outputs
        write_experiment_outputs(cfg, reports)
    return reports


AUDIT_COLUMNS = [
    'method', 'alpha', 'p', 'interval_stability', 'stability_se', 'meaningful_length',
    'vacuous_length', 'closed_form', 'repeats', 'n_points', 'trials', 'seed',
]


def run_audit(cfg, write=True):
    """Interval stability per method with the measured branch lengths and the closed form"""
    source = load_source(cfg)
    specs = method_specs(cfg)
    rows = [[] for _ in specs]
    for t in range(cfg.trials):
        trial = prepare_trial(cfg, t, source=source)
        points = stability_points(cfg, trial.test)
        if points is None:
            points = trial.test
        for i, spec in enumerate(specs):
            level = Level(spec.alpha)
            predictor = build_predictor(cfg, trial, spec)
            stability, se = measure_stability(cfg, trial, spec, predictor, level)
            branches = branch_lengths(predictor, points, level)
            if branches is None:
                meaningful, vacuous, closed = math.nan, math.nan, 0.0
            else:
                meaningful, vacuous = branches
                closed = spec.p * (1.0 - spec.p) * (meaningful - vacuous) ** 2
            rows[i].append((stability, se, meaningful, vacuous, closed))

    table = []
    for spec, trials in zip(specs, rows):
        values = np.array(trials, dtype=np.float64)
        if len(trials) > 1 and np.all(np.isfinite(values[:, 0])):
            stability = float(values[:, 0].mean())
            se = float(values[:, 0].std(ddof=1) / math.sqrt(len(trials)))
        else:
            stability, se = float(values[0, 0]), float(values[0, 1])
        table.append({
            'method': spec.method,
            'alpha': spec.alpha,
            'p': spec.p,
            'interval_stability': stability,
            'stability_se': se,
            'meaningful_length': float(values[:, 2].mean()),
            'vacuous_length': float(values[:, 3].mean()),
            'closed_form': float(values[:, 4].mean()),
            'repeats': cfg.repeats,
            'n_points': len(points),
            'trials': cfg.trials,
            'seed': cfg.seed,
        })
        logger.info(f"{spec.method} alpha={spec.alpha} p={spec.p}: stability {stability:.4f} "
                    f"(closed form {table[-1]['closed_form']:.4f})")
    if write:
        from .report import write_audit_outputs
        write_audit_outputs(cfg, table)
    return table


def run_ablation(cfg, write=True):
    """run_experiment over every misspecification bias in ablation.biases"""
    results = []
    for bias in cfg.ablation.biases:
        logger.info(f"Ablation bias {bias}")
        _, per_spec = run_trials(cfg, bias=bias)
        for trials in per_spec:
            results.append((bias, aggregate_reports(trials, seed=cfg.seed)))
    if write:
        from .report import write_ablation_outputs
        write_ablation_outputs(cfg, results)
    return results


# ========== THEORY ==========

def default_p_grid(alpha, stop):
    """p = (1 - alpha) + 0.005, + 0.015, ... kept while (1 - alpha)/p stays on the curve grid"""
    grid = np.round(1.0 - alpha + 0.005 + 0.01 * np.arange(100), 10)
    return [float(p) for p in grid if p < 1.0 and (1.0 - alpha) / p <= stop + 1e-12]


def default_u_grid(alpha, stop):
    grid = np.round(1.0 - alpha + 0.01 * np.arange(1, 100), 10)
    return [float(u) for u in grid if u < 1.0 and u <= stop + 1e-12]


def _theory_predictor(cfg, trial):
    if cfg.score == 'cqr':
        return trial.cqr[cfg.alphas[0]]
    return trial.base


def run_theory(cfg, write=True):
    """Length curve of the first trial's base predictor and every sufficient-condition verdict"""
    theory = cfg.theory
    trial = prepare_trial(cfg, 0, source=load_source(cfg))
    cp = _theory_predictor(cfg, trial)
    grid = default_level_grid(theory.grid_start, theory.grid_stop, theory.grid_step)
    probe = trial.test.subset(np.arange(min(theory.probe_points, len(trial.test))))
    curve = build_length_curve(cp, grid, probe)

    sections = []
    for alpha in cfg.alphas:
        p_grid = theory.p_grid or default_p_grid(alpha, grid[-1])
        p_grid = [p for p in p_grid if (1.0 - alpha) < p <= 1.0]
        u_grid = theory.u_grid or default_u_grid(alpha, grid[-1])
        u_grid = [u for u in u_grid if (1.0 - alpha) < u < 1.0]

        best_p = check_general_condition(curve, alpha, p_grid)
        first = check_first_order(curve, alpha, theory.h)
        secant = check_secant(curve, alpha, u_grid)
        concave = check_local_concavity(curve, alpha)
        section = {
            'alpha': alpha,
            'general': {
                'verdict': (Verdict.HOLDS if best_p is not None else Verdict.FAILS).value,
                'best_p': best_p,
                'table': general_condition_table(curve, alpha, p_grid),
            },
            'first_order': first.to_dict(),
            'secant': {
                'verdict': (Verdict.HOLDS if secant is not None else Verdict.FAILS).value,
                'u': secant[0] if secant else None,
                'p': secant[1] if secant else None,
            },
            'local_concavity': {
                'verdict': (Verdict.HOLDS if concave else Verdict.FAILS).value,
                'implies_first_order': (not concave) or first.verdict == Verdict.HOLDS,
            },
        }
        if cfg.data.kind == 'gaussian':
            section['failure_case'] = [
                dict(zip(('p', 'vcp_length', 'pt_length'), (p,) + gaussian_failure_case(alpha, p, cfg.data.sigma)))
                for p in p_grid if p < 1.0
            ]
        if trial.test.has_groups and cfg.score != 'softmax':
            section['conditional'] = conditional_verdicts(cp, trial.test, alpha, [p for p in cfg.ps if (1.0 - alpha) < p < 1.0])
        sections.append(section)
        logger.info(f"alpha={alpha}: general best p={best_p}, first order {first.verdict.value}, "
                    f"secant {section['secant']['verdict']}, concave {concave}")

    report = {'curve': curve.provenance, 'n_calib': cp.n, 'seed': cfg.seed, 'alphas': sections}
    if write:
        from .report import write_theory_outputs
        write_theory_outputs(cfg, report, curve)
    return report, curve


def conditional_verdicts(cp, test, alpha, ps):
    """Subgroup-coverage condition for every group tag of the test fold"""
    rows = []
    for group in sorted(set(test.groups.tolist())):
        curve = subgroup_miscoverage_curve(cp, test, test.groups == group)
        for p in ps:
            try:
                verdict = conditional_coverage_condition(curve, alpha, p)
            except GridTooCoarse as e:
                logger.warning(f"group {group}, p={p}: {e}")
                continue
            rows.append({'group': group, 'p': p, 'verdict': verdict.value})
    return rows


def theory_verdict_rows(report):
    """Flat (checker, alpha, verdict, detail) rows for CSV output and the run ledger"""
    rows = []
    for section in report['alphas']:
        alpha = section['alpha']
        rows.append({'checker': 'general', 'alpha': alpha, 'verdict': section['general']['verdict'],
                     'detail': {'best_p': section['general']['best_p']}})
        first = section['first_order']
        rows.append({'checker': 'first_order', 'alpha': alpha, 'verdict': first['verdict'],
                     'detail': {'lhs': first['lhs'], 'rhs': first['rhs']}})
        rows.append({'checker': 'secant', 'alpha': alpha, 'verdict': section['secant']['verdict'],
                     'detail': {'u': section['secant']['u'], 'p': section['secant']['p']}})
        rows.append({'checker': 'local_concavity', 'alpha': alpha, 'verdict': section['local_concavity']['verdict'],
                     'detail': {'implies_first_order': section['local_concavity']['implies_first_order']}})
        for row in section.get('failure_case', []):
            verdict = Verdict.FAILS if row['pt_length'] > row['vcp_length'] else Verdict.HOLDS
            rows.append({'checker': 'gaussian_failure_case', 'alpha': alpha, 'verdict': verdict.value, 'detail': row})
        for row in section.get('conditional', []):
            rows.append({'checker': f"conditional_coverage[{row['group']}]", 'alpha': alpha,
                         'verdict': row['verdict'], 'detail': {'p': row['p']}})
    return rows
