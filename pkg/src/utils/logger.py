"""
Logging utility for gwgames
Provides structured logging for analytic and simulation runs
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pythonjsonlogger import jsonlogger
from src.config import Config


class GamesLogger:
    """Custom logger for tree-game analyses"""

    _loggers: Dict[str, logging.Logger] = {}

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        """Get or create a logger instance"""

        if name in cls._loggers:
            return cls._loggers[name]

        logger = logging.getLogger(f"gwgames.{name}")
        logger.setLevel(getattr(logging, Config.LOG_LEVEL.upper()))
        logger.propagate = False

        if Config.LOG_FILE:
            log_dir = Path(Config.LOG_FILE).parent
            log_dir.mkdir(parents=True, exist_ok=True)

            # File handler with JSON formatting
            file_handler = logging.FileHandler(Config.LOG_FILE)
            json_formatter = jsonlogger.JsonFormatter(
                '%(timestamp)s %(name)s %(levelname)s %(message)s',
                timestamp=True
            )
            file_handler.setFormatter(json_formatter)
            logger.addHandler(file_handler)

        # Console handler on stderr; stdout is reserved for reports
        console_handler = logging.StreamHandler()
        console_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        console_handler.setFormatter(console_formatter)
        logger.addHandler(console_handler)

        cls._loggers[name] = logger

        return logger

    @classmethod
    def log_computation(cls, kind: str, descriptor: str, result: Dict[str, Any]):
        """Log one analytic evaluation"""
        logger = cls.get_logger('computations')
        logger.debug(
            f"Computed {kind} for {descriptor}",
            extra={'kind': kind, 'descriptor': descriptor, 'result': result}
        )

    @classmethod
    def log_simulation(cls, descriptor: str, summary: Dict[str, Any]):
        """Log a completed Monte Carlo run"""
        logger = cls.get_logger('simulations')
        logger.info(
            f"Monte Carlo finished for {descriptor}",
            extra={'descriptor': descriptor, 'summary': summary}
        )

    @classmethod
    def log_error(cls, component: str, error: Exception, context: Optional[dict] = None):
        """Log errors with context"""
        logger = cls.get_logger('errors')
        logger.error(
            f"Error in {component}: {str(error)}",
            extra={
                'component': component,
                'error_type': type(error).__name__,
                'error_message': str(error),
                'context': context or {}
            },
            exc_info=True
        )
