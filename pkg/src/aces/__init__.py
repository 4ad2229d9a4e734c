"""Active contextual entropy search for contextual policy search."""

__version__ = "0.1.0"
