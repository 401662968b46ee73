"""Algorithm selection for implicit-feedback recommender systems."""

__version__ = "0.1.0"
