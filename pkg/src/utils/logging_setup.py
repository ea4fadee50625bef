"""
Logging configuration for command-line runs
The library modules only create named loggers; handlers are installed here.
"""

import logging
import os
import sys

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE = 'experiments.log'


def setup_logging(level='INFO', log_dir='logs', log_file=LOG_FILE):
    """File handler under `log_dir` plus a stderr stream handler (stdout stays free for CSV)"""
    os.makedirs(log_dir, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(log_dir, log_file), encoding='utf-8'),
            logging.StreamHandler(sys.stderr)
        ],
        force=True
    )
    return logging.getLogger('src')
