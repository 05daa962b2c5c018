"""PSNR and SSIM on float images in [0, 1], optionally restricted to a crop box."""

import math

import numpy as np
from skimage.metrics import structural_similarity

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5

Box = tuple[int, int, int, int]


def mask_box(mask: np.ndarray) -> Box | None:
    """(row0, row1, col0, col1) half-open bounding box of a mask; None when empty."""
    rows = np.flatnonzero(np.asarray(mask).any(axis=1))
    cols = np.flatnonzero(np.asarray(mask).any(axis=0))
    if rows.size == 0:
        return None
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def _crop(img: np.ndarray, box: Box | None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if box is None:
        return img
    r0, r1, c0, c1 = box
    return img[r0:r1, c0:c1]


def psnr(a: np.ndarray, b: np.ndarray, box: Box | None = None) -> float:
    """10 log10(1 / MSE) over the crop; identical crops report PSNR_CAP."""
    a, b = _crop(a, box), _crop(b, box)
    if a.shape != b.shape:
        raise ValueError(f"Image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray, box: Box | None = None) -> float:
    """
    Gaussian-weighted SSIM (11 x 11, sigma 1.5, data range 1) averaged over valid
    windows, per channel, then over channels. Crops smaller than the window use the
    largest odd window the crop allows.
    """
    a, b = _crop(a, box), _crop(b, box)
    if a.shape != b.shape:
        raise ValueError(f"Image shapes differ: {a.shape} vs {b.shape}")
    size = min(SSIM_WINDOW, a.shape[0], a.shape[1])
    if size % 2 == 0:
        size -= 1
    return float(
        structural_similarity(
            a,
            b,
            win_size=max(size, 1),
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            data_range=1.0,
            channel_axis=-1,
        )
    )
