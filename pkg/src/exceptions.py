"""
Error types for gwgames
Library code raises these; the CLI maps them onto exit codes
"""

from typing import Any, Optional, Tuple


class GWGamesError(Exception):
    """Base class for all computational errors"""


class UsageError(GWGamesError, ValueError):
    """Malformed command-line input or run file"""


class DistributionError(GWGamesError, ValueError):
    """Invalid offspring distribution, family parameter or literal"""


class FixedPointError(GWGamesError):
    """Fixed-point computation failed; the iteration trace is attached"""

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace


class TreeTooLargeError(GWGamesError):
    """Sampled tree exceeded the node budget"""

    def __init__(self, budget: int, depth_reached: int):
        super().__init__(f"tree too large: more than {budget} nodes by depth {depth_reached}")
        self.budget = budget
        self.depth_reached = depth_reached


class MonotonicityError(GWGamesError):
    """Order-parameter predicate switches more than once on the scanned range"""

    def __init__(self, message: str, subinterval: Tuple[float, float]):
        super().__init__(message)
        self.subinterval = subinterval


class DrawPositiveError(GWGamesError):
    """Operation requires a draw-free distribution"""
