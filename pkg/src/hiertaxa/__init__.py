"""Hierarchical classification and evaluation over taxonomic label paths."""
from .taxonomy import Taxonomy, load_fixture, parse_taxonomy

__version__ = "0.1.0"

__all__ = ["Taxonomy", "load_fixture", "parse_taxonomy", "__version__"]
