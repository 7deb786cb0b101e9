"""Image losses with their gradients.

Each function returns ``(value, gradient)`` where the gradient has the shape of
the rendered input.
"""

from __future__ import annotations

import warnings

import numpy as np


class LossWarning(RuntimeWarning):
    """Degenerate loss input (empty foreground, non-unit normals)."""


def loss_rgb(rendered, reference, mask) -> tuple[float, np.ndarray]:
    """Mean over ``mask`` pixels of the channel-summed absolute color difference."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if rendered.shape != reference.shape or rendered.shape[:-1] != mask.shape:
        raise ValueError(f"shape mismatch: {rendered.shape}, {reference.shape}, mask {mask.shape}")
    grad = np.zeros_like(rendered)
    n = int(mask.sum())
    if n == 0:
        warnings.warn("loss_rgb: empty foreground, loss set to 0", LossWarning, stacklevel=2)
        return 0.0, grad
    diff = rendered[mask] - reference[mask]
    grad[mask] = np.sign(diff) / n
    return float(np.abs(diff).sum() / n), grad


def loss_mask(coverage, target) -> tuple[float, np.ndarray]:
    """``1 - sum(min(c, m)) / sum(max(c, m))``.

    Where ``c == m`` the min/max switch is split evenly between the two sides.
    """
    c = np.asarray(coverage, dtype=np.float64)
    m = np.asarray(target, dtype=np.float64)
    if c.shape != m.shape:
        raise ValueError(f"shape mismatch: {c.shape} vs {m.shape}")
    inter = np.minimum(c, m).sum()
    union = np.maximum(c, m).sum()
    if union <= 0:
        warnings.warn("loss_mask: empty union, loss set to 0", LossWarning, stacklevel=2)
        return 0.0, np.zeros_like(c)
    d_inter = np.where(c < m, 1.0, np.where(c > m, 0.0, 0.5))
    d_union = 1.0 - d_inter
    grad = -(d_inter * union - inter * d_union) / union ** 2
    return float(1.0 - inter / union), grad


def loss_normal(rendered, target, mask) -> tuple[float, np.ndarray]:
    """Mean over ``mask`` pixels of the component-summed absolute normal difference."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if rendered.shape != target.shape or rendered.shape[:-1] != mask.shape:
        raise ValueError(f"shape mismatch: {rendered.shape}, {target.shape}, mask {mask.shape}")
    grad = np.zeros_like(rendered)
    n = int(mask.sum())
    if n == 0:
        warnings.warn("loss_normal: empty foreground, loss set to 0", LossWarning, stacklevel=2)
        return 0.0, grad
    t = target[mask]
    norm = np.linalg.norm(t, axis=1)
    if np.any(np.abs(norm - 1.0) > 1e-3):
        warnings.warn("loss_normal: renormalizing non-unit target normals", LossWarning, stacklevel=2)
        t = t / np.where(norm > 0, norm, 1.0)[:, None]
    diff = rendered[mask] - t
    grad[mask] = np.sign(diff) / n
    return float(np.abs(diff).sum() / n), grad
