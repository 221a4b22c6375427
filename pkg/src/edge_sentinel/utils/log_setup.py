"""
Logging setup for the command-line entry points
"""

import logging
import os

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def setup_logging(level: str = None) -> None:
    level = level or os.environ.get('EDGE_SENTINEL_LOG_LEVEL', 'INFO')
    root = logging.getLogger('edge_sentinel')
    root.setLevel(level.upper())
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
