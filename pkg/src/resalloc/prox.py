"""Exact prox step for the composite term ``-C * min_k p_k``.

The step reduces to finding a "center price": the level at which a water
line poured over the predicted prices ``p_tilde`` holds exactly ``gamma``
units of volume. The volume function is piecewise linear in the level, so
sorting the breakpoints gives the root in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = ["WaterFillResult", "water_fill", "composite_step", "vector_prox"]

CENTER_ZERO = "center-zero"
CENTER_POSITIVE = "center-positive"


@dataclass(frozen=True)
class WaterFillResult:
    p_center: float
    p_out: np.ndarray
    branch: str


def _center_level(p_tilde: np.ndarray, gamma: float) -> float:
    s = np.sort(p_tilde)
    k = np.arange(1, s.size + 1)
    level = (gamma + np.cumsum(s)) / k
    # largest k whose candidate level lies above the k-th breakpoint
    active = np.nonzero(s < level)[0]
    return float(level[active[-1]])


def water_fill(p_tilde, gamma: float) -> WaterFillResult:
    """Minimise ``gamma*max_k(-p_k) + 0.5*||p - p_tilde||^2`` over ``p >= 0``.

    Parameters
    ----------
    p_tilde : array_like
        Predicted prices, any sign.
    gamma : float
        Positive weight of the composite term (``C / L`` in the composite
        method, ``C * alpha`` in the accelerated one).

    Returns
    -------
    WaterFillResult
        ``p_out[k] = max(p_center, p_tilde[k])``. When the negative parts of
        ``p_tilde`` already absorb ``gamma`` the center price is zero;
        otherwise it is the unique positive root of
        ``sum_k (p_center - p_tilde[k])_+ = gamma``.
    """
    p_tilde = np.asarray(p_tilde, dtype=float)
    gamma = float(gamma)
    if p_tilde.ndim != 1 or p_tilde.size == 0:
        raise InvalidInputError("p_tilde must be a nonempty vector")
    if not np.isfinite(gamma) or gamma <= 0:
        raise InvalidInputError(f"gamma must be positive and finite, got {gamma!r}")
    if not np.all(np.isfinite(p_tilde)):
        raise InvalidInputError("p_tilde must be finite")

    if np.sum(np.maximum(-p_tilde, 0.0)) >= gamma:
        return WaterFillResult(0.0, np.maximum(p_tilde, 0.0), CENTER_ZERO)
    center = _center_level(p_tilde, gamma)
    return WaterFillResult(center, np.maximum(p_tilde, center), CENTER_POSITIVE)


def purchase_shares(p_tilde: np.ndarray, result: WaterFillResult, gamma: float) -> np.ndarray:
    """Center's purchase shares implied by a water-fill solution.

    Shares are ``(p_center - p_tilde_k)_+ / gamma``, which sum to one on the
    positive branch. On the zero branch the raw shares sum to at least one
    and are rescaled onto the simplex.
    """
    raw = np.maximum(result.p_center - p_tilde, 0.0) / gamma
    if result.branch == CENTER_ZERO:
        total = raw.sum()
        if total > 0:
            raw = raw / total
    return raw


def composite_step(instance, p_t, x_t, step_scale: float):
    """One prox-gradient step on the dual.

    Forms ``p_tilde = p_t - step_scale * x_t`` and water-fills it with
    ``gamma = C * step_scale``. Returns the new prices and the purchase
    shares ``lambda``.
    """
    p_t = np.asarray(p_t, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    if p_t.shape != x_t.shape:
        raise InvalidInputError("prices and volumes must have the same shape")
    if np.any(p_t < 0):
        raise InvalidInputError("prices must be nonnegative")
    step_scale = float(step_scale)
    if not np.isfinite(step_scale) or step_scale <= 0:
        raise InvalidInputError("step_scale must be positive")
    p_tilde = p_t - step_scale * x_t
    gamma = instance.C * step_scale
    res = water_fill(p_tilde, gamma)
    return res.p_out, purchase_shares(p_tilde, res, gamma)


def vector_prox(p_tilde, gammas) -> np.ndarray:
    """Row-wise water fill of an ``(m, n)`` matrix of predicted prices."""
    P = np.asarray(p_tilde, dtype=float)
    gammas = np.asarray(gammas, dtype=float).reshape(-1)
    if P.ndim != 2 or P.shape[0] != gammas.size:
        raise InvalidInputError(
            f"need one gamma per product row, got {gammas.size} for shape {P.shape}"
        )
    out = np.empty_like(P)
    for j in range(P.shape[0]):
        out[j] = water_fill(P[j], gammas[j]).p_out
    return out
