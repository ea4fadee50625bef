"""
End-to-end tests for the experiment, audit, ablation and theory pipelines
"""

import json
import math

import numpy as np
import pytest

from src.core.errors import ConfigError
from src.core.types import Level
from src.evaluation.metrics import aggregate_reports, evaluate
from src.experiments.config import build_config
from src.experiments.report import json_safe
from src.theory.length import gaussian_failure_case
from src.experiments.runner import (
    build_predictor,
    default_p_grid,
    default_u_grid,
    method_specs,
    prepare_trial,
    run_ablation,
    run_audit,
    run_experiment,
    run_theory,
    run_trials,
    theory_verdict_rows,
    trial_seed,
)


def config(**values):
    values.setdefault('trials', 1)
    values.setdefault('stability_points', 20)
    values.setdefault('repeats', 20)
    return build_config(values)


def by_method(reports):
    return {(r.method, r.p): r for r in reports}


@pytest.fixture(scope='module')
def mixture_reports():
    cfg = config(methods=['vcp', 'pt'], alphas=[0.1], ps=[0.96], stability_points=50, repeats=50)
    return by_method(run_experiment(cfg, write=False))


# ========== EXPERIMENT ==========

@pytest.fixture(scope='module')
def mixture_trials():
    cfg = config(methods=['vcp', 'pt'], alphas=[0.1], ps=[0.96, 0.98], trials=5, stability_points=0)
    specs, per_spec = run_trials(cfg)
    return {(spec.method, spec.p): trials for spec, trials in zip(specs, per_spec)}


def test_mixture_coverage_over_five_trials(mixture_trials):
    for key, trials in mixture_trials.items():
        assert len(trials) == 5
        assert trials[0].n_test == 5000
        assert 0.885 <= aggregate_reports(trials).coverage <= 0.925, key


def test_pt_shortens_sets_under_mixture_noise(mixture_trials):
    vcp, pt = mixture_trials[('vcp', None)], mixture_trials[('pt', 0.96)]
    shorter = sum(p.mean_length < v.mean_length for p, v in zip(pt, vcp))
    assert shorter >= 4
    # full widths 2(mu + z_q) at q = 0.9 and q = 0.9 / 0.96
    assert aggregate_reports(vcp).mean_length == pytest.approx(42.56, rel=0.05)
    assert aggregate_reports(pt).mean_length == pytest.approx(41.35, rel=0.05)
    assert aggregate_reports(pt).mean_length < aggregate_reports(vcp).mean_length


def test_stability_of_mixture_run(mixture_reports):
    assert mixture_reports[('vcp', None)].interval_stability == 0.0
    assert mixture_reports[('pt', 0.96)].interval_stability > 0.0


def test_pt_lengthens_sets_under_gaussian_noise():
    cfg = config(data={'kind': 'gaussian'}, methods=['vcp', 'pt'], ps=[0.96], stability_points=0)
    reports = by_method(run_experiment(cfg, write=False))
    assert reports[('pt', 0.96)].mean_length > reports[('vcp', None)].mean_length
    assert math.isnan(reports[('vcp', None)].interval_stability)


@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.2])
def test_gaussian_sweep_never_favours_pt(alpha):
    sweep = [p for p in np.round(np.arange(0.905, 0.996, 0.01), 3).tolist() if p > 1.0 - alpha]
    cfg = config(data={'kind': 'gaussian', 'n': 10000}, split={'train': 0.05, 'calib': 0.75, 'test': 0.2},
                 methods=['vcp', 'pt'], alphas=[alpha], ps=sweep, trials=4, stability_points=0)
    reports = by_method(run_experiment(cfg, write=False))
    vcp = reports[('vcp', None)]
    assert vcp.n_test == 2000
    for p in sweep:
        analytic_vcp, analytic_pt = gaussian_failure_case(alpha, p)
        assert analytic_pt > analytic_vcp
        assert reports[('pt', p)].mean_length > vcp.mean_length, p


def test_unmeasured_stability_stays_nan_across_trials():
    cfg = config(data={'n': 2000}, methods=['vcp', 'pt'], ps=[0.96], trials=2, stability_points=0)
    for report in run_experiment(cfg, write=False):
        assert math.isnan(report.interval_stability)
        assert math.isnan(report.stability_se)


def test_identical_configs_write_identical_files(tmp_path):
    csv_path, json_path = tmp_path / 'out.csv', tmp_path / 'out.json'
    outputs = []
    for _ in range(2):
        cfg = config(data={'n': 2000}, methods=['vcp', 'pt', 'pt_two_level'], ps=[0.95, 1.0], trials=2,
                     output={'csv': str(csv_path), 'json': str(json_path)})
        run_experiment(cfg)
        outputs.append((csv_path.read_bytes(), json_path.read_bytes()))
    assert outputs[0] == outputs[1]


def test_csv_has_one_row_per_combination(tmp_path):
    path = tmp_path / 'out.csv'
    cfg = config(data={'n': 2000}, methods=['pt', 'vcp'], alphas=[0.1, 0.2], ps=[0.95, 0.97], output={'csv': str(path)})
    run_experiment(cfg)
    lines = path.read_text().splitlines()
    assert lines[0].split(',')[:4] == ['method', 'alpha', 'p', 'coverage']
    # vcp once per alpha, pt once per alpha and p
    assert len(lines) == 1 + 2 + 4
    assert lines[1].startswith('vcp,')


def test_json_report_is_valid(tmp_path):
    path = tmp_path / 'out.json'
    run_experiment(config(data={'n': 2000}, output={'json': str(path)}))
    payload = json.loads(path.read_text())
    assert payload['config']['output']['json'] == str(path)
    assert {r['method'] for r in payload['reports']} == {'vcp', 'pt'}
    assert 'mean_half_length' in payload['reports'][0]


def test_seed_changes_results():
    first = run_experiment(config(data={'n': 2000}, seed=1, stability_points=0), write=False)
    second = run_experiment(config(data={'n': 2000}, seed=2, stability_points=0), write=False)
    assert first[0].coverage != second[0].coverage or first[0].mean_length != second[0].mean_length


def test_trial_seeds_are_distinct():
    seeds = {trial_seed(0, t) for t in range(100)}
    assert len(seeds) == 100


def test_two_level_keeps_coverage():
    cfg = config(methods=['pt_two_level'], ps=[0.95], pt={'mode': 'two_level', 'alpha1': 0.9}, stability_points=0)
    (report,) = run_experiment(cfg, write=False)
    assert abs(report.coverage - 0.9) < 0.03
    assert report.null_fraction == 0.0


def test_cqr_methods():
    cfg = config(data={'n': 4000}, score='cqr', methods=['cqr', 'pt_cqr'], ps=[0.96], model={'steps': 300},
                 stability_points=0)
    reports = by_method(run_experiment(cfg, write=False))
    assert abs(reports[('cqr', None)].coverage - 0.9) < 0.04
    assert abs(reports[('pt_cqr', 0.96)].coverage - 0.9) < 0.04


def test_normalized_score():
    cfg = config(data={'n': 4000}, score='normalized', methods=['vcp'], stability_points=0)
    (report,) = run_experiment(cfg, write=False)
    assert abs(report.coverage - 0.9) < 0.04


def test_classification_run():
    cfg = config(data={'kind': 'logistic', 'n': 4000, 'k': 3}, score='softmax', methods=['vcp', 'pt'], ps=[0.96],
                 stability_points=10)
    reports = by_method(run_experiment(cfg, write=False))
    vcp, pt = reports[('vcp', None)], reports[('pt', 0.96)]
    assert vcp.coverage >= 0.86
    assert abs(pt.coverage - 0.9) < 0.04
    assert 0.0 < vcp.mean_length <= 3.0


def test_localized_shares_coins_with_pt():
    cfg = config(data={'n': 4000}, methods=['pt', 'localized'], ps=[0.95], stability_points=0)
    trial = prepare_trial(cfg, 0)
    specs = {spec.method: spec for spec in method_specs(cfg)}
    level = Level(0.1)
    results = {}
    for method, spec in specs.items():
        stream = trial.rng.child(2).child(spec.alpha_index).child(spec.p_index)
        results[method] = evaluate(build_predictor(cfg, trial, spec), trial.test, level, stream)
    assert results['pt'].null_fraction == results['localized'].null_fraction
    assert results['localized'].mean_length == pytest.approx(results['pt'].mean_length, rel=0.05)


def test_pt_with_p_one_reproduces_vcp_per_point():
    cfg = config(data={'n': 2000}, methods=['vcp', 'pt'], ps=[1.0], stability_points=0)
    trial = prepare_trial(cfg, 0)
    vcp_spec, pt_spec = method_specs(cfg)
    vcp, pt = build_predictor(cfg, trial, vcp_spec), build_predictor(cfg, trial, pt_spec)
    level = Level(0.1)
    root = trial.rng.child(2)
    for i, x in enumerate(trial.test.features[:200]):
        assert pt.predict(x, level, root.child(i)) == vcp.predict(x, level)


def test_csv_source(fixture_csv):
    cfg = config(data={'kind': 'csv', 'path': fixture_csv}, methods=['vcp', 'pt'], ps=[0.96], trials=2)
    reports = run_experiment(cfg, write=False)
    assert [r.method for r in reports] == ['vcp', 'pt']
    assert reports[0].n_test == 312
    assert reports[0].trials == 2
    assert set(reports[0].group_coverage) == {'g0', 'g1', 'g2', 'g3'}


def test_csv_source_task_mismatch(fixture_csv):
    cfg = config(data={'kind': 'csv', 'path': fixture_csv}, score='softmax', methods=['vcp'])
    with pytest.raises(ConfigError):
        run_experiment(cfg, write=False)


# ========== AUDIT ==========

def test_audit_matches_closed_form():
    cfg = config(methods=['vcp', 'pt'], ps=[0.96], stability_points=100, repeats=200)
    rows = {row['method']: row for row in run_audit(cfg, write=False)}
    vcp, pt = rows['vcp'], rows['pt']
    assert vcp['interval_stability'] == 0.0
    assert vcp['closed_form'] == 0.0
    assert math.isnan(vcp['meaningful_length'])
    assert pt['vacuous_length'] == 0.0
    assert pt['closed_form'] == pytest.approx(0.96 * 0.04 * pt['meaningful_length'] ** 2)
    assert pt['interval_stability'] == pytest.approx(pt['closed_form'], rel=0.15)
    assert pt['n_points'] == 100


def test_audit_two_level_branches():
    cfg = config(methods=['pt_two_level'], ps=[0.95], pt={'mode': 'two_level', 'alpha1': 0.9})
    (row,) = run_audit(cfg, write=False)
    assert 0.0 < row['vacuous_length'] < row['meaningful_length']


# ========== ABLATION ==========

def test_bias_inflates_lengths_but_not_coverage():
    cfg = config(methods=['vcp'], ablation={'biases': [0.0, 20.0]}, stability_points=0)
    results = run_ablation(cfg, write=False)
    assert [bias for bias, _ in results] == [0.0, 20.0]
    unbiased, biased = results[0][1], results[1][1]
    assert biased.mean_length > 1.5 * unbiased.mean_length
    assert abs(biased.coverage - 0.9) < 0.03


def test_ablation_csv_has_bias_column(tmp_path):
    path = tmp_path / 'ablation.csv'
    cfg = config(data={'n': 2000}, methods=['vcp'], ablation={'biases': [0.0, 5.0]}, output={'csv': str(path)})
    run_ablation(cfg)
    lines = path.read_text().splitlines()
    assert lines[0].endswith(',bias')
    assert len(lines) == 3


# ========== THEORY ==========

def test_theory_on_mixture():
    report, curve = run_theory(config(alphas=[0.1]), write=False)
    (section,) = report['alphas']
    assert section['general']['verdict'] == 'holds'
    assert section['first_order']['verdict'] == 'holds'
    assert section['secant']['verdict'] == 'holds'
    assert section['local_concavity']['implies_first_order']
    assert 'failure_case' not in section
    assert curve.levels[-1] == 0.995


def test_theory_on_gaussian():
    cfg = config(data={'kind': 'gaussian'}, alphas=[0.1], theory={'p_grid': [0.92, 0.95]})
    report, _ = run_theory(cfg, write=False)
    (section,) = report['alphas']
    assert section['general']['verdict'] == 'fails'
    assert section['first_order']['verdict'] == 'fails'
    assert [row['p'] for row in section['failure_case']] == [0.92, 0.95]
    assert all(row['pt_length'] > row['vcp_length'] for row in section['failure_case'])
    checkers = [row['checker'] for row in theory_verdict_rows(report)]
    assert checkers.count('gaussian_failure_case') == 2


def test_theory_conditional_verdicts():
    cfg = config(data={'n_groups': 2}, alphas=[0.1], ps=[0.96])
    report, _ = run_theory(cfg, write=False)
    verdicts = report['alphas'][0]['conditional']
    assert [row['group'] for row in verdicts] == ['g0', 'g1']
    assert all(row['verdict'] in ('improves', 'no-guarantee') for row in verdicts)


def test_theory_writes_curve_and_verdicts(tmp_path):
    out = {'csv': str(tmp_path / 'verdicts.csv'), 'curve': str(tmp_path / 'curve.csv'), 'json': str(tmp_path / 'theory.json')}
    run_theory(config(data={'n': 2000}, output=out))
    assert (tmp_path / 'curve.csv').read_text().splitlines()[0] == 'level,length'
    assert (tmp_path / 'verdicts.csv').read_text().splitlines()[0] == 'checker,alpha,verdict,detail'
    payload = json.loads((tmp_path / 'theory.json').read_text())
    assert payload['alphas'][0]['alpha'] == 0.1


def test_default_grids():
    p_grid = default_p_grid(0.1, 0.995)
    assert p_grid[0] == 0.905
    assert all(0.9 < p < 1.0 for p in p_grid)
    assert all(0.9 / p <= 0.995 + 1e-12 for p in p_grid)
    u_grid = default_u_grid(0.1, 0.995)
    assert u_grid[0] == 0.91
    assert u_grid[-1] == 0.99


# ========== JSON ==========

def test_json_safe_spells_out_non_finite_values():
    payload = json_safe({'a': math.inf, 'b': [np.float64('nan'), -math.inf], 'c': np.int64(3), 4: (1.5,)})
    assert payload == {'a': 'inf', 'b': ['nan', '-inf'], 'c': 3, '4': [1.5]}
    json.dumps(payload, allow_nan=False)
