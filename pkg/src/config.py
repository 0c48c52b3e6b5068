"""
Configuration Management for gwgames
Loads environment variables and numerical defaults for all analyses
"""

import os
from pathlib import Path
from typing import Dict, Any

import yaml
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Central configuration class for tree-game analyses"""

    # Logging Configuration
    LOG_LEVEL: str = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE: str = os.getenv('LOG_FILE', 'logs/gwgames.log')

    # Fixed-point computation
    FP_TOL: float = float(os.getenv('GWGAMES_FP_TOL', '1e-12'))
    FP_MAX_ITER: int = int(os.getenv('GWGAMES_FP_MAX_ITER', '1000000'))
    GRID_RESOLUTION: int = int(os.getenv('GWGAMES_GRID_RESOLUTION', '10000'))

    # Iteration is abandoned for bracketing once the contraction ratio stays above
    # STALL_RATIO for STALL_WINDOW consecutive steps
    STALL_RATIO: float = 0.999
    STALL_WINDOW: int = 50

    # Phase transition scanning
    POSITIVITY_THRESHOLD: float = float(os.getenv('GWGAMES_POSITIVITY_THRESHOLD', '1e-9'))
    CLASSIFICATION_THRESHOLD: float = float(os.getenv('GWGAMES_CLASSIFICATION_THRESHOLD', '1e-4'))
    BISECTION_TOL: float = float(os.getenv('GWGAMES_BISECTION_TOL', '1e-10'))
    PRESCAN_POINTS: int = int(os.getenv('GWGAMES_PRESCAN_POINTS', '1000'))
    CLASSIFY_DELTAS: list = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]

    # Monte Carlo
    NODE_BUDGET: int = int(os.getenv('GWGAMES_NODE_BUDGET', '10000000'))
    DEFAULT_SEED: int = int(os.getenv('GWGAMES_SEED', '0'))
    THREADS: int = int(os.getenv('GWGAMES_THREADS', '1'))

    # Game lengths
    SERIES_MAX_TERMS: int = int(os.getenv('GWGAMES_SERIES_MAX_TERMS', '10000'))
    DIVERGENCE_RATIO: float = 1.0 - 1e-6
    DIVERGENCE_WINDOW: int = 100

    # Output
    FLOAT_DIGITS: int = int(os.getenv('GWGAMES_FLOAT_DIGITS', '12'))

    @classmethod
    def validate(cls) -> bool:
        """Validate that numeric settings are usable"""
        if cls.FP_TOL <= 0 or cls.BISECTION_TOL <= 0 or cls.POSITIVITY_THRESHOLD <= 0:
            raise ValueError("Tolerances must be positive")
        if cls.GRID_RESOLUTION < 2:
            raise ValueError("GWGAMES_GRID_RESOLUTION must be at least 2")
        if cls.THREADS < 1:
            raise ValueError("GWGAMES_THREADS must be at least 1")
        if cls.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError(f"Unknown LOG_LEVEL: {cls.LOG_LEVEL}")
        return True

    @classmethod
    def get_config_dict(cls) -> Dict[str, Any]:
        """Return configuration as dictionary for logging and report echoing"""
        return {
            'fp_tol': cls.FP_TOL,
            'fp_max_iter': cls.FP_MAX_ITER,
            'grid_resolution': cls.GRID_RESOLUTION,
            'positivity_threshold': cls.POSITIVITY_THRESHOLD,
            'classification_threshold': cls.CLASSIFICATION_THRESHOLD,
            'bisection_tol': cls.BISECTION_TOL,
            'prescan_points': cls.PRESCAN_POINTS,
            'node_budget': cls.NODE_BUDGET,
            'series_max_terms': cls.SERIES_MAX_TERMS,
        }

    @classmethod
    def load_run_file(cls, path: str) -> Dict[str, Any]:
        """
        Load a YAML run file whose keys provide defaults for a CLI run

        Args:
            path: Path to the YAML file

        Returns:
            Mapping of option name to value
        """
        with open(Path(path), 'r', encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ValueError(f"Run file {path} is not valid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ValueError(f"Run file {path} must contain a mapping")
        return {str(k).replace('-', '_'): v for k, v in data.items()}


# Validate configuration on import
Config.validate()
