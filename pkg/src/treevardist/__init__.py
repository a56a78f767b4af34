"""Variational distance between pattern distributions of symmetric models on trees."""

__version__ = "0.1.0"

from .tree import NewickError, Tree, TreeError, parse_newick, write_newick  # noqa: E402
from .models import ModelError, TransitionMechanism  # noqa: E402
from .patterns import exact_distribution, simulate_sites  # noqa: E402
from .vardist import empirical_gap, vardist_exact, vardist_mc  # noqa: E402
from .discriminator import close_pairs, vardist_lower_bound  # noqa: E402

__all__ = [
    "ModelError", "NewickError", "TransitionMechanism", "Tree", "TreeError", "close_pairs",
    "empirical_gap", "exact_distribution", "parse_newick", "simulate_sites",
    "vardist_exact", "vardist_lower_bound", "vardist_mc", "write_newick",
]
