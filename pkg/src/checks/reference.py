"""
Direct-formula reference implementations the loss and metric code is checked against.
"""

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def bce_reference(pred: Sequence[float], target: Sequence[float], eps: float = 1e-7) -> float:
    total = 0.0
    for p, t in zip(pred, target):
        p = min(max(float(p), eps), 1.0 - eps)
        total += -(t * math.log(p) + (1 - t) * math.log(1.0 - p))
    return total / len(pred)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    k = np.arange(size) - size // 2
    g = np.exp(-(k * k) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim_reference(x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    """SSIM with an explicit 2-D window over every full window position, averaged over channels."""
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    w = gaussian_window(size, sigma)
    scores = []
    for c in range(x.shape[2]):
        wx = sliding_window_view(x[..., c], (size, size))
        wy = sliding_window_view(y[..., c], (size, size))
        mx = np.einsum("ijkl,kl->ij", wx, w)
        my = np.einsum("ijkl,kl->ij", wy, w)
        vx = np.einsum("ijkl,kl->ij", (wx - mx[..., None, None]) ** 2, w)
        vy = np.einsum("ijkl,kl->ij", (wy - my[..., None, None]) ** 2, w)
        cov = np.einsum("ijkl,kl->ij", (wx - mx[..., None, None]) * (wy - my[..., None, None]), w)
        s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        scores.append(s.mean())
    return float(np.mean(scores))


def l1_reference(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.abs(x - y).sum() / x.size)


def psnr_reference(x: np.ndarray, y: np.ndarray) -> float:
    mse = float(((x - y) ** 2).sum() / x.size)
    return 10.0 * math.log10(1.0 / mse)
