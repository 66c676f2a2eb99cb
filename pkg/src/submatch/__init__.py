"""Subgraph matching: exact induced-subgraph enumeration and a learned
attention matcher with adaptive edge deletion, trained on numpy."""

__version__ = "0.1.0"

from .estimator import AEDNetMatcher, ExactMatcher
from .exact import MatchResult, brute_force_mappings, enumerate_mappings
from .graph import GraphError, LabeledGraph, MatchPair
from .io import DataFormatError, load_tudataset, read_pairs, write_pairs

__all__ = [
    "AEDNetMatcher",
    "DataFormatError",
    "ExactMatcher",
    "GraphError",
    "LabeledGraph",
    "MatchPair",
    "MatchResult",
    "brute_force_mappings",
    "enumerate_mappings",
    "load_tudataset",
    "read_pairs",
    "write_pairs",
]
