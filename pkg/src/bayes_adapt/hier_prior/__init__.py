from .tree import (
    HIER_TARGETS,
    EmbeddingView,
    HierarchicalObjective,
    HierConfig,
    SenoneTree,
    adapt_hier,
    build_tree,
    hier_penalty,
    hier_row_gradient,
    load_tree,
    save_tree,
    theta_gradient,
    update_theta,
)

__all__ = [
    "HIER_TARGETS", "EmbeddingView", "HierarchicalObjective", "HierConfig", "SenoneTree",
    "adapt_hier", "build_tree", "hier_penalty", "hier_row_gradient", "load_tree", "save_tree",
    "theta_gradient", "update_theta",
]
