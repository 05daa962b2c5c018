"""Procedural light probes for dataset generation and relighting ground truth."""

import numpy as np

from avatar_fields.core import rng_for
from avatar_fields.models import ProbeRecipe
from avatar_fields.render.probe import LightProbe, probe_geometry

KEY_LIGHT_WIDTH = 0.05
SMOOTH_LOBES = 4


def key_direction(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.sin(el), np.cos(el) * np.sin(az)])


def make_probe(recipe: ProbeRecipe, height: int, width: int) -> LightProbe:
    """
    uniform: constant radiance; smooth_random: a few broad random lobes normalized to mean
    `intensity`; key_light: a narrow lobe plus an ambient floor. Texels are rounded to
    float32 so a probe written to disk and read back is identical.
    """
    dirs, _ = probe_geometry(height, width)
    color = np.array(recipe.color) if recipe.channels == 3 else np.ones(1)
    if recipe.kind == "uniform":
        tex = np.ones((height, width, 1)) * recipe.intensity * color
    elif recipe.kind == "key_light":
        cos = dirs @ key_direction(recipe.azimuth_deg, recipe.elevation_deg)
        lobe = np.exp((cos - 1.0) / KEY_LIGHT_WIDTH)
        tex = (recipe.ambient + recipe.intensity * lobe)[..., None] * color
    else:
        rng = rng_for(recipe.seed, 7)
        chans = []
        for _ in range(recipe.channels):
            axes = rng.normal(size=(SMOOTH_LOBES, 3))
            axes /= np.linalg.norm(axes, axis=1, keepdims=True)
            gains = rng.uniform(0.2, 1.0, SMOOTH_LOBES)
            field = 0.25 + np.einsum("k,hwk->hw", gains, np.maximum(dirs @ axes.T, 0.0) ** 2)
            chans.append(field / field.mean())
        tex = np.stack(chans, axis=-1) * recipe.intensity * color
    return LightProbe(tex.astype(np.float32).astype(np.float64))
