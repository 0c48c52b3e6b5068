"""
Output Handler
Formats analysis reports as JSON or CSV and writes them to stdout or a file
"""

import dataclasses
import json
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from src.config import Config
from src.utils.logger import GamesLogger


class OutputHandler:
    """Handles formatting and emission of reports"""

    def __init__(self, digits: Optional[int] = None):
        self.logger = GamesLogger.get_logger('output_handler')
        self.digits = Config.FLOAT_DIGITS if digits is None else digits
        self.logger.debug(f"OutputHandler initialized with {self.digits} significant digits")

    def _round(self, value: float) -> Optional[float]:
        if not math.isfinite(value):
            return None
        return float(f"{value:.{self.digits}g}")

    def normalize(self, obj: Any) -> Any:
        """
        Convert a report into plain JSON types

        Args:
            obj: Nested dicts, lists, dataclasses, enums, numpy values or DataFrames

        Returns:
            Equivalent structure of dict/list/str/int/float/bool/None with rounded floats
        """
        if isinstance(obj, Enum):
            return obj.value
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: self.normalize(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                    if not f.name.startswith('_')}
        if isinstance(obj, pd.DataFrame):
            return [self.normalize(row) for row in obj.to_dict(orient='records')]
        if isinstance(obj, dict):
            return {str(self.normalize(k)): self.normalize(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self.normalize(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return [self.normalize(v) for v in obj.tolist()]
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, (int, np.integer)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            return self._round(float(obj))
        return obj

    def format_json(self, report: Any) -> str:
        """Pretty JSON with 12 significant digits"""
        return json.dumps(self.normalize(report), indent=2) + "\n"

    def format_csv(self, table: pd.DataFrame) -> str:
        """CSV without index, floats printed with 12 significant digits"""
        return table.to_csv(index=False, float_format=f"%.{self.digits}g", lineterminator="\n")

    def emit(self, text: str, output_path: Optional[str] = None):
        """
        Write a formatted report

        Args:
            text: Report body
            output_path: File to write; stdout when None
        """
        if output_path:
            path = Path(output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding='utf-8')
            self.logger.info(f"Saved report to {path}")
        else:
            sys.stdout.write(text)
            sys.stdout.flush()

    def write_json(self, report: Any, output_path: Optional[str] = None):
        self.emit(self.format_json(report), output_path)

    def write_csv(self, table: pd.DataFrame, output_path: Optional[str] = None):
        self.emit(self.format_csv(table), output_path)
