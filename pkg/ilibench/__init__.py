"""ilibench - Iterative Label Improvement on noisy and partially labelled data."""

__version__ = "0.1.0"
