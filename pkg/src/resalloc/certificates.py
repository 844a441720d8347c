"""A-priori constants, convergence bounds and run certificates.

The bounds are unconditional for compliant starting points, so a failed
certificate means a bug rather than a hard instance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .model import QuadraticCost, dual_value_matrix

__all__ = [
    "Certificate",
    "p_max_bound",
    "radius",
    "theorem1_requirements",
    "theorem2_bounds",
    "theorem3_bounds",
    "theorem2_iterations",
    "theorem3_iterations",
    "vector_theorem_bounds",
    "acceleration_crossover",
    "equilibrium",
    "equilibrium_price",
    "measure",
]


def p_max_bound(instance) -> float:
    """Upper bound on every optimal dual price.

    Scalar: ``(n/C) * (sum_k f_k(2C/n) - sum_k f_k(0))``. Vector: the same with
    ``min_j c_j`` in the denominator and producer plans ``2c/n``.
    """
    n = instance.n
    if instance.kind == "scalar":
        C = instance.C
        xbar = 2.0 * C / n
        top = sum(c.evaluate(xbar) for c in instance.costs)
        bottom = sum(c.evaluate(0.0) for c in instance.costs)
        return float(n / C * (top - bottom))
    xbar = 2.0 * instance.c / n
    zero = np.zeros(instance.m)
    top = sum(k.evaluate(xbar) for k in instance.costs)
    bottom = sum(k.evaluate(zero) for k in instance.costs)
    return float(n / float(instance.c.min()) * (top - bottom))


def radius(instance, pmax: Optional[float] = None) -> float:
    """``R = 3 * p_max * sqrt(n)``; iterates stay within ``2R`` of the origin."""
    if pmax is None:
        pmax = p_max_bound(instance)
    return 3.0 * pmax * math.sqrt(instance.n)


def theorem1_requirements(instance, eps: float) -> dict:
    """Stepsize, iteration count and infeasibility tolerance for the subgradient method."""
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    n, C = instance.n, instance.C
    pmax = p_max_bound(instance)
    N = math.ceil(164.0 * (C * n * pmax) ** 2 / eps**2)
    tol = eps / (3.0 * pmax) if pmax > 0 else math.inf
    return {"h": eps / (n * C * C), "N": max(N, 1), "infeas_tol": tol}


def _check_N(N) -> int:
    if int(N) != N or N < 1:
        raise InvalidInputError(f"N must be a positive integer, got {N!r}")
    return int(N)


def _composite_bounds(n, mu, pmax, N):
    return {
        "gap_bound": 82.0 * pmax**2 * n**2 / (N * mu),
        "infeas_bound": 82.0 * pmax * n**2 / (3.0 * N * mu),
    }


def _accelerated_bounds(n, mu, pmax, N):
    d = (N + 1) ** 2 * mu
    R = 3.0 * pmax * math.sqrt(n)
    return {
        "gap_bound": 148.0 * n**2 * pmax**2 / d,
        "infeas_bound": 148.0 * n**2 * pmax / (5.0 * d),
        # as printed in the theorem statement, kept for comparison only
        "infeas_bound_printed": 148.0 * n**2 * R * pmax / (5.0 * d),
    }


def theorem2_bounds(instance, N: int) -> dict:
    """Composite method: gap ``82 p_max^2 n^2 / (N mu)``, infeasibility ``82 p_max n^2 / (3 N mu)``."""
    N = _check_N(N)
    return _composite_bounds(instance.n, instance.mu, p_max_bound(instance), N)


def theorem3_bounds(instance, N: int) -> dict:
    """Accelerated method: gap ``148 n^2 p_max^2 / ((N+1)^2 mu)``.

    The infeasibility bound ``148 n^2 p_max / (5 (N+1)^2 mu)`` follows from
    ``37 R sqrt(n) / (15 A_N)`` and ``A_N >= (N+1)^2 / (4 L)``.
    """
    N = _check_N(N)
    return _accelerated_bounds(instance.n, instance.mu, p_max_bound(instance), N)


def vector_theorem_bounds(instance, N: int, method: str) -> dict:
    """Scalar bounds scaled by ``m``, with the vector-case ``p_max``."""
    N = _check_N(N)
    pmax = p_max_bound(instance)
    if method == "composite":
        b = _composite_bounds(instance.n, instance.mu, pmax, N)
    elif method == "accelerated":
        b = _accelerated_bounds(instance.n, instance.mu, pmax, N)
    else:
        raise InvalidInputError(f"no vector bound for method {method!r}")
    return {k: v * instance.m for k, v in b.items()}


def bounds_for(instance, N: int, method: str) -> dict:
    if instance.kind == "vector":
        return vector_theorem_bounds(instance, N, method)
    if method == "composite":
        return theorem2_bounds(instance, N)
    if method == "accelerated":
        return theorem3_bounds(instance, N)
    raise InvalidInputError(f"no N-based bound for method {method!r}")


def theorem2_iterations(instance, eps: float) -> int:
    """Smallest N whose composite gap bound is at most ``eps``."""
    pmax = p_max_bound(instance)
    N = max(1, math.ceil(82.0 * pmax**2 * instance.n**2 * instance.m / (eps * instance.mu)))
    while N > 1 and bounds_for(instance, N - 1, "composite")["gap_bound"] <= eps:
        N -= 1
    while bounds_for(instance, N, "composite")["gap_bound"] > eps:
        N += 1
    return N


def theorem3_iterations(instance, eps: float) -> int:
    """Smallest N whose accelerated gap bound is at most ``eps``."""
    pmax = p_max_bound(instance)
    root = math.sqrt(148.0 * instance.n**2 * pmax**2 * instance.m / (eps * instance.mu))
    N = max(1, math.ceil(root - 1.0))
    while N > 1 and bounds_for(instance, N - 1, "accelerated")["gap_bound"] <= eps:
        N -= 1
    while bounds_for(instance, N, "accelerated")["gap_bound"] > eps:
        N += 1
    return N


def acceleration_crossover(limit: int = 10**6) -> Optional[int]:
    """First N where the accelerated gap constant beats the composite one.

    Compares ``148/(N+1)^2`` with ``82/N``; instance factors cancel.
    """
    for N in range(1, limit + 1):
        if 148.0 / (N + 1) ** 2 < 82.0 / N:
            return N
    return None


# --- exact equilibrium -------------------------------------------------------


def _quadratic_clearing_price(alpha: np.ndarray, mu: np.ndarray, C: float) -> float:
    # sum_k max(0, (p - alpha_k)/mu_k) = C, piecewise linear in p
    order = np.argsort(alpha)
    a, w = alpha[order], 1.0 / mu[order]
    slope = np.cumsum(w)
    offset = np.cumsum(w * a)
    p = (C + offset) / slope
    nxt = np.append(a[1:], np.inf)
    k = int(np.nonzero(p <= nxt)[0][0])
    return float(p[k])


def equilibrium_price(costs, C: float) -> float:
    """Common price ``p`` at which total supply ``sum_k x_k(p)`` equals ``C``."""
    if all(type(c) is QuadraticCost for c in costs):
        alpha = np.array([c.alpha for c in costs])
        mu = np.array([c.mu for c in costs])
        return _quadratic_clearing_price(alpha, mu, C)

    def supply(p):
        return sum(c.best_response(p) for c in costs)

    lo = max(0.0, min(c.derivative(0.0) for c in costs))
    hi = max(1.0, lo + 1.0)
    while supply(hi) < C:
        hi = 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if supply(mid) < C:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def equilibrium(instance):
    """Primal-dual optimum ``(p_star, x_star, f_star)``.

    At the optimum every producer faces the same market-clearing price, so
    the dual solution is that price repeated and the primal plan is the
    best response to it. Vector instances must be separable and are solved
    per product.
    """
    if instance.kind == "scalar":
        price = equilibrium_price(instance.costs, instance.C)
        p_star = np.full(instance.n, price)
        x_star = instance.responses(p_star)
        return p_star, x_star, instance.total_cost(x_star)
    P = np.empty((instance.m, instance.n))
    for j in range(instance.m):
        P[j] = equilibrium_price(instance.product(j).costs, float(instance.c[j]))
    X = instance.responses_matrix(P)
    return P, X, instance.total_cost_matrix(X)


# --- certificates ------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    method: str
    kind: str
    N: int
    n: int
    m: int
    mu: float
    L: float
    p_max: float
    R: float
    bound_gap: float
    bound_infeas: float
    measured_gap: float
    measured_infeas: float
    measured_suboptimality: float
    pass_gap: bool
    pass_infeas: bool
    certified: bool
    degenerate: bool
    eps: Optional[float] = None
    bound_infeas_printed: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.pass_gap and self.pass_infeas

    @property
    def violated(self) -> bool:
        """True when a proven bound fails on a run the bound applies to."""
        return self.certified and not self.passed

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def measure(instance, run) -> Certificate:
    """Compare a finished run against the matching theorem bounds.

    The measured gap is ``f(x^N) + phi(dual point)``. For the subgradient
    method the guarantee is on ``f(x^N) - f(x*)``, which is what its gap
    flag checks; ``f(x*)`` comes from :func:`equilibrium`.
    """
    if run.N < 1 or not run.history:
        raise InvalidInputError("certificate needs a run with at least one iteration")
    if run.kind != instance.kind:
        raise InvalidInputError(f"run is for a {run.kind} instance, got {instance.kind}")
    X = instance.view(run.x_avg)
    D = instance.view(run.dual_point)
    if X.shape != (instance.m, instance.n):
        raise InvalidInputError("run does not match instance dimensions")
    f_avg = instance.total_cost_matrix(X)
    gap = f_avg + dual_value_matrix(instance, D)
    infeas = float(np.sum(np.maximum(instance.demands - X.sum(axis=1), 0.0)))
    _, _, f_star = equilibrium(instance) if (instance.kind == "scalar" or instance.separable) else (None, None, math.nan)
    subopt = f_avg - f_star

    pmax = p_max_bound(instance)
    printed = None
    if run.method == "subgradient":
        if instance.kind != "scalar":
            raise InvalidInputError("subgradient certificate is defined for scalar instances")
        req = theorem1_requirements(instance, run.eps)
        bound_gap, bound_infeas = run.eps, req["infeas_tol"]
        pass_gap = subopt <= bound_gap
        certified = not run.capped
    else:
        b = bounds_for(instance, run.N, run.method)
        bound_gap, bound_infeas = b["gap_bound"], b["infeas_bound"]
        printed = b.get("infeas_bound_printed")
        pass_gap = gap <= bound_gap
        # bounds assume the default Lipschitz constant
        certified = math.isclose(run.L, instance.L, rel_tol=1e-12)
    return Certificate(
        method=run.method, kind=instance.kind, N=run.N, n=instance.n, m=instance.m,
        mu=instance.mu, L=run.L, p_max=pmax, R=radius(instance, pmax),
        bound_gap=float(bound_gap), bound_infeas=float(bound_infeas),
        measured_gap=float(gap), measured_infeas=infeas,
        measured_suboptimality=float(subopt),
        pass_gap=bool(pass_gap), pass_infeas=bool(infeas <= bound_infeas),
        certified=bool(certified), degenerate=pmax <= 0, eps=run.eps,
        bound_infeas_printed=printed,
    )
