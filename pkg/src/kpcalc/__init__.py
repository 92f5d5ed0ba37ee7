"""Truncated odd-class symbol calculus, h-deformed KP flows and circle FIO factorizations."""

from .coeffring import MatTrigPoly

__all__ = ["MatTrigPoly"]
__version__ = "0.1.0"
