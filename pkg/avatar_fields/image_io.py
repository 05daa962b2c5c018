"""
Image files: 8-bit sRGB PNG (pillow) and the raw float format.

Raw float layout: b"NFIMG1\\n", ASCII "W H C\\n", then W*H*C little-endian float32 values,
row-major (rows top to bottom, channels interleaved). Probes use the same format.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from avatar_fields.core import DatasetError

NFIMG_MAGIC = b"NFIMG1\n"


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def _as_hwc(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise ValueError(f"Expected an H x W x C image, got shape {image.shape}")
    return image


def write_nfimg(path: str | Path, image: np.ndarray) -> None:
    image = _as_hwc(image)
    h, w, c = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(NFIMG_MAGIC)
        f.write(f"{w} {h} {c}\n".encode("ascii"))
        f.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def read_nfimg(path: str | Path) -> np.ndarray:
    """H x W x C float32 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"Cannot read {path}: {e}") from e
    if not data.startswith(NFIMG_MAGIC):
        raise DatasetError(f"{path} is not a raw float image (bad magic)")
    rest = data[len(NFIMG_MAGIC) :]
    end = rest.find(b"\n")
    try:
        w, h, c = (int(v) for v in rest[:end].decode("ascii").split())
    except ValueError as e:
        raise DatasetError(f"{path} has a malformed header") from e
    payload = rest[end + 1 :]
    if len(payload) != 4 * w * h * c:
        raise DatasetError(f"{path} payload has {len(payload)} bytes, expected {4 * w * h * c}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)


def quantize(image: np.ndarray, srgb: bool = True) -> np.ndarray:
    image = _as_hwc(image).astype(np.float64)
    if srgb:
        image = linear_to_srgb(image)
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | Path, image: np.ndarray, srgb: bool = True) -> None:
    """Write linear float RGB (or gray) as 8-bit PNG; srgb applies the transfer curve."""
    q = quantize(image, srgb)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q[:, :, 0] if q.shape[2] == 1 else q[:, :, :3]).save(path)


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)).save(path)


def read_png(path: str | Path, gray: bool = False) -> np.ndarray:
    """8-bit PNG as uint8 (H, W) when gray else (H, W, 3)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L" if gray else "RGB"))
    except OSError as e:
        raise DatasetError(f"Cannot read {path}: {e}") from e


def read_mask(path: str | Path, threshold: int = 128) -> np.ndarray:
    return read_png(path, gray=True) >= threshold
