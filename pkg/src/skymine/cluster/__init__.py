"""Scalable clustering: BIRCH, CURE and CLIQUE."""

from .birch import CfTree, ClusteringFeature, birch, birch_global, cf_centroid, cf_merge, cf_radius
from .clique import (
    GridUnit,
    clique,
    clique_dense_units,
    clique_identify_clusters,
    clique_labels,
    clique_minimal_description,
)
from .cure import CureCluster, cure, cure_cluster, draw_sample, label_points

__all__ = [
    "ClusteringFeature", "CfTree", "cf_merge", "cf_centroid", "cf_radius", "birch", "birch_global",
    "CureCluster", "cure", "cure_cluster", "draw_sample", "label_points",
    "GridUnit", "clique", "clique_dense_units", "clique_identify_clusters",
    "clique_minimal_description", "clique_labels",
]
