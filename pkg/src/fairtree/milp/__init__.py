"""Mixed-integer model container and the tree-learning formulation."""

from .build import (CLASSICAL, LINEAR_BRANCHING, LINEAR_LEAFING, TREE_CLASSES, BuildConfig,
                    BuildError, ExtractionError, NotRepresentable, TreeMilp,
                    assignment_from_tree, build, canonical_tree, default_epsilon, extract_tree,
                    solution_leaves, solution_predictions)
from .model import MilpModel, ModelError

__all__ = [
    "CLASSICAL", "LINEAR_BRANCHING", "LINEAR_LEAFING", "TREE_CLASSES", "BuildConfig",
    "BuildError", "ExtractionError", "NotRepresentable", "TreeMilp", "assignment_from_tree",
    "build", "canonical_tree", "default_epsilon", "extract_tree", "solution_leaves",
    "solution_predictions", "MilpModel", "ModelError",
]
