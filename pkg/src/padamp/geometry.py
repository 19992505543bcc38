"""Tangent-space projection, cosine similarity, and the projection trigger.

The trigger compares cos(theta, g) against delta * eta_t / sqrt(dim(theta));
a small cosine means the gradient is nearly orthogonal to the weight vector,
which is the signature of a scale-invariant group, and only then is the
update direction projected onto the tangent space of theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProjectionDecision",
    "cosine_similarity",
    "project_tangent",
    "projection_condition",
]


@dataclass(frozen=True)
class ProjectionDecision:
    trigger_value: float
    threshold: float
    projected: bool


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """|a . b| / (||a|| ||b||); 0 if either vector is zero.

    The absolute value makes anti-parallel vectors score 1, so the trigger
    treats radial and anti-radial gradients the same.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    # Rounding can push the quotient a hair above 1 for parallel vectors.
    return float(min(abs(float(a @ b)) / (na * nb), 1.0))


def project_tangent(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Remove from x its component along theta: x - <theta_hat, x> theta_hat."""
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if theta.shape != x.shape:
        raise ValueError(f"shape mismatch: {theta.shape} vs {x.shape}")
    norm = np.linalg.norm(theta)
    if norm == 0.0:
        raise ValueError("cannot project onto tangent space of zero vector")
    theta_hat = theta / norm
    return x - float(theta_hat @ x) * theta_hat


def projection_condition(
    theta: np.ndarray, grad: np.ndarray, delta: float, eta_t: float
) -> ProjectionDecision:
    """Decide whether the step for this group gets projected.

    Projected iff cos(theta, grad) < delta * eta_t / sqrt(dim(theta)), strict,
    so a trigger value exactly at the threshold is not projected. A zero
    parameter vector has no radial direction and is never projected.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise ValueError(f"shape mismatch: {theta.shape} vs {grad.shape}")
    if theta.size < 1:
        raise ValueError("empty parameter vector")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if eta_t <= 0:
        raise ValueError(f"eta_t must be positive, got {eta_t}")
    threshold = float(delta * eta_t / np.sqrt(theta.size))
    if np.linalg.norm(theta) == 0.0:
        return ProjectionDecision(trigger_value=0.0, threshold=threshold, projected=False)
    cos = cosine_similarity(theta, grad)
    return ProjectionDecision(trigger_value=cos, threshold=threshold,
                              projected=bool(cos < threshold))
