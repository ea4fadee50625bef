"""
Run ledger models
Using SQLAlchemy ORM with SQLite: one row per CLI run, its aggregated method
results and its theory-checker verdicts
"""

from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, Text, ForeignKey
from sqlalchemy.orm import declarative_base, relationship, sessionmaker
from sqlalchemy.engine import make_url
from datetime import datetime
import logging
import os

from src.utils.settings import get_settings

logger = logging.getLogger(__name__)

# Create base class for models
Base = declarative_base()


class ExperimentRun(Base):
    """One invocation of experiment / audit / theory / ablation"""
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String(20), nullable=False)
    config_digest = Column(String(64), nullable=False)
    seed = Column(Integer, nullable=False)
    trials = Column(Integer, default=1)
    data_kind = Column(String(20), nullable=True)
    notes = Column(Text, nullable=True)

    created_at = Column(DateTime, default=datetime.utcnow)

    results = relationship('MethodResult', back_populates='run', cascade='all, delete-orphan')
    verdicts = relationship('CheckerVerdict', back_populates='run', cascade='all, delete-orphan')

    def __repr__(self):
        return f"<ExperimentRun(id={self.id}, command={self.command}, seed={self.seed})>"

    def to_dict(self):
        return {
            'id': self.id,
            'command': self.command,
            'config_digest': self.config_digest,
            'seed': self.seed,
            'trials': self.trials,
            'data_kind': self.data_kind,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }


class MethodResult(Base):
    """Aggregated AuditReport of one method at one (alpha, p)"""
    __tablename__ = 'method_results'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False)

    method = Column(String(20), nullable=False)
    alpha = Column(Float, nullable=False)
    p = Column(Float, nullable=True)
    bias = Column(Float, nullable=True)

    # Coverage and length
    coverage = Column(Float, nullable=False)
    coverage_se = Column(Float, nullable=True)
    mean_length = Column(Float, nullable=True)
    length_se = Column(Float, nullable=True)
    min_group_coverage = Column(Float, nullable=True)

    # Stability
    interval_stability = Column(Float, nullable=True)
    stability_se = Column(Float, nullable=True)

    n_test = Column(Integer, nullable=False)
    trials = Column(Integer, nullable=False)

    run = relationship('ExperimentRun', back_populates='results')

    def __repr__(self):
        return f"<MethodResult(run={self.run_id}, method={self.method}, alpha={self.alpha}, p={self.p})>"

    def to_dict(self):
        return {
            'method': self.method,
            'alpha': self.alpha,
            'p': self.p,
            'bias': self.bias,
            'coverage': self.coverage,
            'mean_length': self.mean_length,
            'min_group_coverage': self.min_group_coverage,
            'interval_stability': self.interval_stability,
            'n_test': self.n_test,
            'trials': self.trials
        }


class CheckerVerdict(Base):
    """Verdict of one length / coverage condition checker"""
    __tablename__ = 'checker_verdicts'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False)

    checker = Column(String(40), nullable=False)
    alpha = Column(Float, nullable=False)
    verdict = Column(String(20), nullable=False)
    detail = Column(Text, nullable=True)

    run = relationship('ExperimentRun', back_populates='verdicts')

    def __repr__(self):
        return f"<CheckerVerdict(checker={self.checker}, alpha={self.alpha}, verdict={self.verdict})>"

    def to_dict(self):
        return {
            'checker': self.checker,
            'alpha': self.alpha,
            'verdict': self.verdict,
            'detail': self.detail
        }


# Database connection and session management
class Database:
    """Database manager"""

    def __init__(self, db_url=None):
        if db_url is None:
            db_url = get_settings().db_url

        url = make_url(db_url)
        if url.drivername.startswith('sqlite') and url.database not in (None, '', ':memory:'):
            directory = os.path.dirname(url.database)
            if directory:
                os.makedirs(directory, exist_ok=True)

        self.engine = create_engine(db_url, echo=False)
        self.SessionLocal = sessionmaker(bind=self.engine)

    def create_tables(self):
        """Create all tables"""
        Base.metadata.create_all(self.engine)
        logger.debug("Run ledger tables ready")

    def drop_tables(self):
        """Drop all tables (use carefully!)"""
        Base.metadata.drop_all(self.engine)
        logger.warning("All run ledger tables dropped")

    def get_session(self):
        """Get a new database session"""
        return self.SessionLocal()

    def close(self):
        """Close database connection"""
        self.engine.dispose()


def get_db(db_url=None):
    """Get database instance with tables created"""
    db = Database(db_url)
    db.create_tables()
    return db
