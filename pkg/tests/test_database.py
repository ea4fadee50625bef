"""
Tests for the SQLite run ledger
"""

import json
import math

import pytest

from src.evaluation.metrics import AuditReport
from src.models.crud import (
    add_method_results,
    add_verdicts,
    create_run,
    delete_run,
    get_recent_runs,
    get_run,
    get_run_results,
    get_run_summary,
    get_run_verdicts,
)
from src.models.database import CheckerVerdict, Database, MethodResult, get_db


@pytest.fixture
def session():
    db = get_db('sqlite:///:memory:')
    session = db.get_session()
    yield session
    session.close()
    db.close()


def sample_reports():
    return [
        AuditReport(method='vcp', alpha=0.1, coverage=0.901, coverage_se=0.004, mean_length=42.6,
                    interval_stability=0.0, n_test=5000, trials=5),
        AuditReport(method='pt', alpha=0.1, p=0.96, coverage=0.899, coverage_se=0.004, mean_length=math.inf,
                    interval_stability=math.nan, n_test=5000, trials=5),
    ]


def test_create_and_get_run(session):
    run = create_run(session, command='experiment', config_digest='ab' * 32, seed=7, trials=5, data_kind='mixture')
    assert run.id is not None
    fetched = get_run(session, run.id)
    assert fetched.seed == 7
    assert fetched.to_dict()['created_at'] is not None
    assert repr(fetched) == f"<ExperimentRun(id={run.id}, command=experiment, seed=7)>"


def test_method_results_store_non_finite_as_null(session):
    run = create_run(session, command='experiment', config_digest='0' * 64, seed=0)
    assert add_method_results(session, run.id, sample_reports()) == 2
    vcp, pt = get_run_results(session, run.id)
    assert vcp.mean_length == pytest.approx(42.6)
    assert vcp.p is None
    assert pt.mean_length is None
    assert pt.interval_stability is None
    assert [r.method for r in get_run_results(session, run.id, method='pt')] == ['pt']


def test_ablation_bias_column(session):
    run = create_run(session, command='ablation', config_digest='0' * 64, seed=0)
    add_method_results(session, run.id, sample_reports()[:1], bias=10.0)
    (result,) = get_run_results(session, run.id)
    assert result.bias == 10.0


def test_verdicts_round_trip_detail(session):
    run = create_run(session, command='theory', config_digest='0' * 64, seed=0)
    add_verdicts(session, run.id, [
        {'checker': 'general', 'alpha': 0.1, 'verdict': 'holds', 'detail': {'best_p': 0.925}},
        {'checker': 'secant', 'alpha': 0.1, 'verdict': 'fails'},
    ])
    first, second = get_run_verdicts(session, run.id)
    assert json.loads(first.detail) == {'best_p': 0.925}
    assert second.detail is None


def test_recent_runs_newest_first(session):
    for command in ('experiment', 'theory', 'experiment'):
        create_run(session, command=command, config_digest='0' * 64, seed=1)
    runs = get_recent_runs(session)
    assert [r.id for r in runs] == sorted((r.id for r in runs), reverse=True)
    assert len(get_recent_runs(session, command='experiment')) == 2
    assert len(get_recent_runs(session, limit=1)) == 1


def test_summary_and_cascading_delete(session):
    run = create_run(session, command='experiment', config_digest='0' * 64, seed=3)
    add_method_results(session, run.id, sample_reports())
    add_verdicts(session, run.id, [{'checker': 'general', 'alpha': 0.1, 'verdict': 'holds'}])
    summary = get_run_summary(session, run.id)
    assert summary['result_count'] == 2
    assert summary['methods'] == ['pt', 'vcp']
    assert summary['verdict_count'] == 1

    assert delete_run(session, run.id)
    assert get_run(session, run.id) is None
    assert session.query(MethodResult).count() == 0
    assert session.query(CheckerVerdict).count() == 0
    assert not delete_run(session, run.id)
    assert get_run_summary(session, run.id) is None


def test_file_database_creates_its_directory(tmp_path):
    path = tmp_path / 'nested' / 'runs.db'
    db = Database(f"sqlite:///{path}")
    db.create_tables()
    session = db.get_session()
    create_run(session, command='audit', config_digest='0' * 64, seed=0)
    session.close()
    db.close()
    assert path.exists()


def test_drop_tables_clears_the_ledger():
    db = get_db('sqlite:///:memory:')
    session = db.get_session()
    create_run(session, command='experiment', config_digest='0' * 64, seed=0)
    session.close()

    db.drop_tables()
    db.create_tables()
    session = db.get_session()
    assert get_recent_runs(session) == []
    session.close()
    db.close()
