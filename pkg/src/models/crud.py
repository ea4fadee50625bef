"""
CRUD operations for the run ledger
"""

import json
import math
from sqlalchemy.orm import Session
from .database import ExperimentRun, MethodResult, CheckerVerdict


def _finite_or_none(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


# ========== RUN CRUD ==========

def create_run(
    db: Session,
    command: str,
    config_digest: str,
    seed: int,
    trials: int = 1,
    data_kind: str = None,
    notes: str = None
) -> ExperimentRun:
    """Create a new run record"""
    run = ExperimentRun(
        command=command,
        config_digest=config_digest,
        seed=seed,
        trials=trials,
        data_kind=data_kind,
        notes=notes
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def get_run(db: Session, run_id: int) -> ExperimentRun:
    """Get a run by ID"""
    return db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()


def get_recent_runs(db: Session, command: str = None, limit: int = 20) -> list[ExperimentRun]:
    """Most recent runs first, optionally filtered by command"""
    query = db.query(ExperimentRun)
    if command:
        query = query.filter(ExperimentRun.command == command)
    return query.order_by(ExperimentRun.id.desc()).limit(limit).all()


def delete_run(db: Session, run_id: int) -> bool:
    """Delete a run together with its results and verdicts"""
    run = get_run(db, run_id)
    if not run:
        return False

    db.delete(run)
    db.commit()
    return True


# ========== RESULT CRUD ==========

def add_method_results(db: Session, run_id: int, reports: list, bias: float = None) -> int:
    """Store aggregated AuditReports of a run; infinite statistics are stored as NULL"""
    count = 0
    for report in reports:
        result = MethodResult(
            run_id=run_id,
            method=report.method,
            alpha=report.alpha,
            p=report.p,
            bias=getattr(report, 'bias', bias),
            coverage=report.coverage,
            coverage_se=_finite_or_none(report.coverage_se),
            mean_length=_finite_or_none(report.mean_length),
            length_se=_finite_or_none(report.length_se),
            min_group_coverage=_finite_or_none(report.min_group_coverage),
            interval_stability=_finite_or_none(report.interval_stability),
            stability_se=_finite_or_none(report.stability_se),
            n_test=report.n_test,
            trials=report.trials
        )
        db.add(result)
        count += 1
    db.commit()
    return count


def get_run_results(db: Session, run_id: int, method: str = None) -> list[MethodResult]:
    """Get stored results of a run, optionally for one method"""
    query = db.query(MethodResult).filter(MethodResult.run_id == run_id)
    if method:
        query = query.filter(MethodResult.method == method)
    return query.order_by(MethodResult.id).all()


# ========== VERDICT CRUD ==========

def add_verdicts(db: Session, run_id: int, verdicts: list[dict]) -> int:
    """Store checker verdicts; each dict needs checker, alpha, verdict and may carry detail"""
    for item in verdicts:
        detail = item.get('detail')
        db.add(CheckerVerdict(
            run_id=run_id,
            checker=item['checker'],
            alpha=item['alpha'],
            verdict=str(item['verdict']),
            detail=json.dumps(detail, sort_keys=True, default=str) if detail is not None else None
        ))
    db.commit()
    return len(verdicts)


def get_run_verdicts(db: Session, run_id: int) -> list[CheckerVerdict]:
    return db.query(CheckerVerdict).filter(CheckerVerdict.run_id == run_id).order_by(CheckerVerdict.id).all()


# ========== BATCH OPERATIONS ==========

def get_run_summary(db: Session, run_id: int) -> dict:
    """Get run record with its results and verdicts"""
    run = get_run(db, run_id)
    if not run:
        return None

    results = get_run_results(db, run_id)
    verdicts = get_run_verdicts(db, run_id)

    return {
        'run': run.to_dict(),
        'result_count': len(results),
        'methods': sorted({r.method for r in results}),
        'results': [r.to_dict() for r in results],
        'verdict_count': len(verdicts),
        'verdicts': [v.to_dict() for v in verdicts]
    }
