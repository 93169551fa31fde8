"""Disk-paged R-tree."""

from .mbb import MBB, box_distance, mbb_contains_point, mbb_intersects, mbb_union, min_dist
from .tree import AuditReport, Node, RTree, fanout, quadratic_split

__all__ = [
    "MBB", "mbb_union", "mbb_intersects", "mbb_contains_point", "min_dist", "box_distance",
    "RTree", "Node", "AuditReport", "fanout", "quadratic_split",
]
