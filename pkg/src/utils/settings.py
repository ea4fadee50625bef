"""
Process settings read from the environment / .env file
"""

import os
from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_DIR = 'logs'
DEFAULT_LOG_LEVEL = 'INFO'
DEFAULT_DB_URL = 'sqlite:///data/runs.db'


class Settings:
    """Log location, log level and run-ledger URL"""

    def __init__(self):
        self.log_dir = os.getenv("CONFORMAL_LOG_DIR", DEFAULT_LOG_DIR)
        self.log_level = os.getenv("CONFORMAL_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
        self.db_url = os.getenv("CONFORMAL_DB_URL", DEFAULT_DB_URL)

    def __repr__(self):
        return f"<Settings(log_dir={self.log_dir}, log_level={self.log_level}, db_url={self.db_url})>"


def get_settings():
    return Settings()
