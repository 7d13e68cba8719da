"""8-bit RGB image and mask file I/O (Pillow-backed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import StylemarkError
from .geometry import BinaryMask


def load_image(path: str | Path) -> np.ndarray:
    """Load an image as (H, W, 3) uint8 RGB."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise StylemarkError(f"cannot load image {path}: {e}") from e


def save_image(image: np.ndarray, path: str | Path) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(path)


def load_mask(path: str | Path) -> BinaryMask:
    """Load an 8-bit single-channel mask; nonzero means set."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise StylemarkError(f"cannot load mask {path}: {e}") from e
    return BinaryMask(width=arr.shape[1], height=arr.shape[0], bits=arr > 0)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)
