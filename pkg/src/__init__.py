"""Source package for gwgames: games on Galton-Watson trees"""

__version__ = "1.0.0"
__author__ = "gwgames developers"
