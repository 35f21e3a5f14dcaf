"""Teacher-to-student synthetic training data pipeline."""

__version__ = "0.1.0"
