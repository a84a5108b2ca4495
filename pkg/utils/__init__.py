"""
Shared helpers.
"""
from .numeric import normalize_rows, is_distribution, sample_categorical_rows

__all__ = ['normalize_rows', 'is_distribution', 'sample_categorical_rows']
