"""Intersector backends: closest-hit and shadow-ray queries against triangle meshes."""

from avatar_fields.oracle.intersect.base import Hits, Intersector, ray_triangle
from avatar_fields.oracle.intersect.brute import BruteForceIntersector
from avatar_fields.oracle.intersect.bvh import BvhIntersector

__all__ = ["BruteForceIntersector", "BvhIntersector", "Hits", "Intersector", "ray_triangle"]

REGISTRY: dict[str, type[Intersector]] = {
    "brute": BruteForceIntersector,
    "bvh": BvhIntersector,
}


def get_intersector(name: str) -> type[Intersector]:
    """Return intersector class for the given name. Raises KeyError if unknown."""
    if name not in REGISTRY:
        raise KeyError(f"Unknown intersector: {name}. Available: {list(REGISTRY)}")
    return REGISTRY[name]
