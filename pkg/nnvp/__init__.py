"""Venn prediction with neural network taxonomies."""
__version__ = "0.1.0"
