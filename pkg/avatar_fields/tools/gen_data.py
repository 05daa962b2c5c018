"""
gen-data tool: render the synthetic capsule-person dataset. Independent, atomic.
"""

from pathlib import Path

from avatar_fields.models import DatasetResult, RunConfig
from avatar_fields.oracle.dataset import gen_dataset
from avatar_fields.oracle.intersect import REGISTRY


def run(config: RunConfig, out_dir: Path, backend: str = "bvh", progress: bool = True) -> DatasetResult:
    """Generate the dataset under out_dir. Raises ValueError on an unknown backend."""
    if backend not in REGISTRY:
        raise ValueError(f"Unknown intersector: {backend}. Available: {list(REGISTRY)}")
    return gen_dataset(config, out_dir, backend=backend, progress=progress)
