"""Strong L1/L2 regularization for feed-forward networks trained with momentum SGD."""

__version__ = "0.1.0"
