"""Fair decision trees learned by mixed-integer optimization."""

__version__ = "0.1.0"
