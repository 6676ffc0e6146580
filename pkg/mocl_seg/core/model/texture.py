"""
Handcrafted texture feature: standardized Gaussian high-pass of the grayscale image.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage import color

from mocl_seg.core.errors import ModelConfigError


def extract_texture_features(image: np.ndarray, sigma: float = 2.0) -> np.ndarray:
    """
    H x W x 1 float64 map: gray - gaussian(gray, sigma), standardized over the image.

    A constant (zero-variance) residual gives all zeros.

    Raises:
        ModelConfigError: sigma <= 0
    """
    if sigma <= 0:
        raise ModelConfigError(f"texture sigma must be > 0, got {sigma}")
    gray = color.rgb2gray(image) if image.ndim == 3 else image.astype(np.float64)
    gray = np.asarray(gray, dtype=np.float64)
    residual = gray - ndimage.gaussian_filter(gray, sigma=sigma, mode="reflect")
    residual -= residual.mean()
    std = float(residual.std())
    if std <= 1e-12:
        return np.zeros((*gray.shape, 1), dtype=np.float64)
    return (residual / std)[..., None]
