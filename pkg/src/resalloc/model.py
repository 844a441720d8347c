"""Problem instances, producer best responses and the dual objective.

Prices are stored product-major: a scalar instance uses a length-``n``
vector, a vector instance an ``(m, n)`` matrix whose row ``j`` holds every
producer's price for product ``j``. Internally every instance also exposes
the ``(m, n)`` view (``m == 1`` for scalar instances) that the solvers use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedInstanceError

__all__ = [
    "CostFunction",
    "QuadraticCost",
    "CallableCost",
    "SeparableCost",
    "JointCost",
    "ScalarInstance",
    "VectorInstance",
    "best_response",
    "best_response_vector",
    "dual_value",
    "primal_value",
    "validate",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
]

VALIDATION_SAMPLES = 64


def _check_price(p: float) -> float:
    p = float(p)
    if not math.isfinite(p):
        raise InvalidInputError(f"price must be finite, got {p!r}")
    if p < 0:
        raise InvalidInputError(f"price must be nonnegative, got {p!r}")
    return p


class CostFunction:
    """A producer's increasing, strongly convex cost of production.

    Subclasses provide ``evaluate``, ``derivative`` and ``modulus``. The
    default :meth:`best_response` solves ``derivative(x) = p`` by bisection,
    which is valid because the derivative is strictly increasing.
    """

    modulus: float

    def evaluate(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def best_response(self, p: float) -> float:
        p = _check_price(p)
        if p <= self.derivative(0.0):
            return 0.0
        hi = 1.0
        while self.derivative(hi) < p:
            hi *= 2.0
            if not math.isfinite(hi):
                raise InvalidInputError("best response bracket diverged")
        lo = 0.0
        width = 1e-12 * max(1.0, hi)
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.derivative(mid) < p:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadraticCost(CostFunction):
    """``f(x) = alpha*x + (mu/2)*x**2`` with a closed-form best response."""

    alpha: float
    mu: float

    @property
    def modulus(self) -> float:
        return self.mu

    def evaluate(self, x):
        return self.alpha * x + 0.5 * self.mu * x * x

    def derivative(self, x):
        return self.alpha + self.mu * x

    def best_response(self, p: float) -> float:
        p = _check_price(p)
        if p <= self.alpha:
            return 0.0
        return (p - self.alpha) / self.mu


@dataclass(frozen=True)
class CallableCost(CostFunction):
    """Cost given by user callables; best response falls back to bisection."""

    f: Callable[[float], float]
    df: Callable[[float], float]
    mu: float
    name: str = "callable"

    @property
    def modulus(self) -> float:
        return self.mu

    def evaluate(self, x):
        return self.f(x)

    def derivative(self, x):
        return self.df(x)


@dataclass(frozen=True)
class SeparableCost:
    """Joint cost ``sum_j f_j(x_j)`` of one producer over ``m`` products."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def modulus(self) -> float:
        return min(c.modulus for c in self.parts)

    def evaluate(self, x) -> float:
        return float(sum(c.evaluate(float(xj)) for c, xj in zip(self.parts, x)))

    def best_response(self, p_col) -> np.ndarray:
        return np.array([c.best_response(pj) for c, pj in zip(self.parts, p_col)])


@dataclass(frozen=True)
class JointCost:
    """Non-separable joint cost; usable only with a best-response oracle."""

    f: Callable[[np.ndarray], float]
    mu: float
    oracle: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def modulus(self) -> float:
        return self.mu

    def evaluate(self, x) -> float:
        return float(self.f(np.asarray(x, dtype=float)))

    def best_response(self, p_col) -> np.ndarray:
        if self.oracle is None:
            raise UnsupportedInstanceError(
                "non-separable cost requires a user-supplied best-response oracle"
            )
        return np.asarray(self.oracle(np.asarray(p_col, dtype=float)), dtype=float)


def _quadratic_arrays(costs: Sequence[CostFunction]):
    if costs and all(type(c) is QuadraticCost for c in costs):
        alpha = np.array([c.alpha for c in costs], dtype=float)
        mu = np.array([c.mu for c in costs], dtype=float)
        return alpha, mu
    return None


@dataclass(frozen=True, eq=False)
class ScalarInstance:
    """One product, ``n`` producers, demand ``C``."""

    costs: tuple
    C: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "C", float(self.C))
        object.__setattr__(self, "_quad", _quadratic_arrays(self.costs))

    kind = "scalar"

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def m(self) -> int:
        return 1

    @property
    def mu(self) -> float:
        return min(c.modulus for c in self.costs)

    @property
    def L(self) -> float:
        return self.n / self.mu

    @property
    def demands(self) -> np.ndarray:
        return np.array([self.C])

    def responses(self, p) -> np.ndarray:
        """Best responses ``x_k(p_k)`` for a price vector of length ``n``."""
        p = np.asarray(p, dtype=float)
        if self._quad is not None:
            alpha, mu = self._quad
            return np.maximum(0.0, (p - alpha) / mu)
        return np.array([c.best_response(pk) for c, pk in zip(self.costs, p)])

    def total_cost(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self._quad is not None:
            alpha, mu = self._quad
            return float(np.sum(alpha * x + 0.5 * mu * x * x))
        return float(sum(c.evaluate(float(xk)) for c, xk in zip(self.costs, x)))

    # (1, n) views used by the solver engine
    def responses_matrix(self, P: np.ndarray) -> np.ndarray:
        return self.responses(P[0])[None, :]

    def total_cost_matrix(self, X: np.ndarray) -> float:
        return self.total_cost(X[0])

    def view(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise InvalidInputError(f"expected price vector of length {self.n}, got shape {p.shape}")
        return p[None, :].copy()

    def unview(self, P: np.ndarray) -> np.ndarray:
        return np.array(P[0], dtype=float)


@dataclass(frozen=True, eq=False)
class VectorInstance:
    """``m`` products, ``n`` producers, demand vector ``c``.

    ``costs`` holds one joint cost per producer (``SeparableCost`` or
    ``JointCost``). Use :meth:`from_matrix` to build the separable default
    from a producer-major matrix of scalar costs.
    """

    costs: tuple
    c: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        quad = None
        if self.costs and all(isinstance(k, SeparableCost) for k in self.costs):
            parts = [list(k.parts) for k in self.costs]
            if all(len(row) == self.m for row in parts):
                flat = [cj for row in parts for cj in row]
                q = _quadratic_arrays(flat)
                if q is not None:
                    # producer-major flat -> (m, n)
                    quad = tuple(a.reshape(self.n, self.m).T.copy() for a in q)
        object.__setattr__(self, "_quad", quad)

    kind = "vector"

    @classmethod
    def from_matrix(cls, costs: Sequence[Sequence[CostFunction]], c, meta=None):
        """Separable instance from ``costs[k][j]`` (producer ``k``, product ``j``)."""
        return cls(tuple(SeparableCost(tuple(row)) for row in costs), c, dict(meta or {}))

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def m(self) -> int:
        return int(self.c.size)

    @property
    def mu(self) -> float:
        return min(k.modulus for k in self.costs)

    @property
    def L(self) -> float:
        return self.n / self.mu

    @property
    def demands(self) -> np.ndarray:
        return self.c.copy()

    @property
    def separable(self) -> bool:
        return all(isinstance(k, SeparableCost) for k in self.costs)

    def product(self, j: int) -> ScalarInstance:
        """Scalar instance for product ``j`` (separable instances only)."""
        if not self.separable:
            raise UnsupportedInstanceError("product decomposition needs separable costs")
        return ScalarInstance(tuple(k.parts[j] for k in self.costs), float(self.c[j]))

    def responses_matrix(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if self._quad is not None:
            alpha, mu = self._quad
            return np.maximum(0.0, (P - alpha) / mu)
        cols = [np.asarray(k.best_response(P[:, i]), dtype=float) for i, k in enumerate(self.costs)]
        return np.stack(cols, axis=1)

    def total_cost_matrix(self, X: np.ndarray) -> float:
        X = np.asarray(X, dtype=float)
        if self._quad is not None:
            alpha, mu = self._quad
            return float(np.sum(alpha * X + 0.5 * mu * X * X))
        return float(sum(k.evaluate(X[:, i]) for i, k in enumerate(self.costs)))

    def view(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape != (self.m, self.n):
            raise InvalidInputError(f"expected price matrix of shape {(self.m, self.n)}, got {P.shape}")
        return P.copy()

    def unview(self, P: np.ndarray) -> np.ndarray:
        return np.array(P, dtype=float)


def best_response(cost: CostFunction, p: float) -> float:
    """Profit-maximising volume ``argmax_{x >= 0} p*x - f(x)``."""
    return cost.best_response(p)


def best_response_vector(instance: VectorInstance, k: int, p_col) -> np.ndarray:
    """Best response of producer ``k`` to its column of product prices."""
    p_col = np.asarray(p_col, dtype=float)
    if p_col.shape != (instance.m,):
        raise InvalidInputError(f"expected {instance.m} prices, got shape {p_col.shape}")
    if not np.all(np.isfinite(p_col)) or np.any(p_col < 0):
        raise InvalidInputError("prices must be finite and nonnegative")
    return instance.costs[k].best_response(p_col)


def _as_price_matrix(instance, p) -> np.ndarray:
    P = instance.view(p)
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("prices must be finite")
    if np.any(P < 0):
        raise InvalidInputError("prices must be nonnegative")
    return P


def dual_value_matrix(instance, P: np.ndarray, X: np.ndarray | None = None) -> float:
    """Dual objective on the ``(m, n)`` view; ``X`` may carry precomputed responses."""
    if X is None:
        X = instance.responses_matrix(P)
    psi = float(np.sum(P * X)) - instance.total_cost_matrix(X)
    return psi - float(np.dot(instance.demands, P.min(axis=1)))


def dual_value(instance, p) -> float:
    """``phi(p) = sum_k [p_k x_k(p_k) - f_k(x_k(p_k))] - C*min_k p_k``.

    For vector instances ``p`` is the ``(m, n)`` price matrix and the last
    term becomes ``sum_j c_j * min_k p_jk``.
    """
    return dual_value_matrix(instance, _as_price_matrix(instance, p))


def primal_value(instance, x) -> float:
    """Total production cost ``sum_k f_k(x_k)``."""
    X = np.asarray(x, dtype=float)
    expected = (instance.n,) if instance.kind == "scalar" else (instance.m, instance.n)
    if X.shape != expected:
        raise InvalidInputError(f"expected volumes of shape {expected}, got {X.shape}")
    if np.any(X < 0):
        raise InvalidInputError("volumes must be nonnegative")
    if instance.kind == "scalar":
        return instance.total_cost(X)
    return instance.total_cost_matrix(X)


def _sample_points(upper: float) -> np.ndarray:
    upper = upper if math.isfinite(upper) and upper > 0 else 1.0
    return np.concatenate(([0.0], np.geomspace(upper * 1e-6, upper, VALIDATION_SAMPLES - 1)))


def _eval_many(fn, xs: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(xs), dtype=float)
        if out.shape == xs.shape:
            return out
    except Exception:
        pass
    return np.array([float(fn(float(x))) for x in xs])


def _check_cost(cost: CostFunction, upper: float, label: str) -> list[str]:
    problems = []
    mod = cost.modulus
    if not (isinstance(mod, (int, float)) and math.isfinite(mod)) or mod <= 0:
        problems.append(f"{label}: modulus must be positive")
        mod = 0.0
    if isinstance(cost, QuadraticCost):
        if not (math.isfinite(cost.alpha) and math.isfinite(cost.mu)):
            return problems + [f"{label}: parameters must be finite"]
        if cost.alpha < 0:
            problems.append(f"{label}: linear coefficient must be nonnegative")
    xs = _sample_points(upper)
    try:
        d = _eval_many(cost.derivative, xs)
        f = _eval_many(cost.evaluate, xs)
    except Exception as exc:  # user callables may fail arbitrarily
        return problems + [f"{label}: cost evaluation failed ({exc})"]
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(f))):
        return problems + [f"{label}: cost is not finite on the sampled range"]
    dd, dx = np.diff(d), np.diff(xs)
    if np.any(dd < -1e-12):
        problems.append(f"{label}: derivative must be non-decreasing")
    if mod > 0 and np.any(dd < mod * dx - 1e-9):
        problems.append(f"{label}: derivative grows slower than the modulus")
    if np.any(np.diff(f) < -1e-12 * np.maximum(1.0, np.abs(f[:-1]))):
        problems.append(f"{label}: cost must be increasing")
    return problems


def validate(instance) -> list[str]:
    """Check the structural assumptions by sampling; never raises.

    Returns a list of human-readable violations, empty for a valid instance.
    """
    problems: list[str] = []
    if instance.n < 1:
        return ["at least one producer is required"]
    if instance.kind == "scalar":
        C = instance.C
        if not math.isfinite(C) or C <= 0:
            problems.append("demand must be positive")
            C = 1.0
        upper = 4.0 * C / instance.n
        for k, cost in enumerate(instance.costs):
            problems += _check_cost(cost, upper, f"producer {k}")
        return problems

    c = instance.c
    if c.size < 1:
        problems.append("at least one product is required")
        return problems
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        problems.append("demand must be positive for every product")
    for k, joint in enumerate(instance.costs):
        if isinstance(joint, SeparableCost):
            if joint.m != instance.m:
                problems.append(f"producer {k}: expected {instance.m} product costs, got {joint.m}")
                continue
            for j, cost in enumerate(joint.parts):
                cj = c[j] if math.isfinite(c[j]) and c[j] > 0 else 1.0
                problems += _check_cost(cost, 4.0 * cj / instance.n, f"producer {k} product {j}")
        else:
            mod = joint.modulus
            if not math.isfinite(mod) or mod <= 0:
                problems.append(f"producer {k}: modulus must be positive")
    return problems


# --- JSON ------------------------------------------------------------------


def _cost_to_dict(cost) -> dict:
    if type(cost) is not QuadraticCost:
        raise UnsupportedInstanceError("only quadratic costs are serialisable")
    return {"type": "quadratic", "alpha": cost.alpha, "mu": cost.mu}


def _cost_from_dict(d: dict) -> QuadraticCost:
    if d.get("type") != "quadratic":
        raise InvalidInputError(f"unknown cost type {d.get('type')!r}")
    try:
        return QuadraticCost(float(d["alpha"]), float(d["mu"]))
    except KeyError as exc:
        raise InvalidInputError(f"cost is missing field {exc}") from None


def instance_to_dict(instance) -> dict:
    if instance.kind == "scalar":
        out: dict[str, Any] = {
            "kind": "scalar",
            "C": instance.C,
            "costs": [_cost_to_dict(c) for c in instance.costs],
        }
    else:
        if not instance.separable:
            raise UnsupportedInstanceError("only separable vector instances are serialisable")
        out = {
            "kind": "vector",
            "m": instance.m,
            "c": [float(v) for v in instance.c],
            "costs": [[_cost_to_dict(cj) for cj in k.parts] for k in instance.costs],
        }
    if instance.meta:
        out["meta"] = instance.meta
    return out


def instance_from_dict(d: dict):
    kind = d.get("kind")
    meta = dict(d.get("meta") or {})
    try:
        if kind == "scalar":
            return ScalarInstance(tuple(_cost_from_dict(c) for c in d["costs"]), float(d["C"]), meta)
        if kind == "vector":
            m = int(d["m"])
            c = [float(v) for v in d["c"]]
            rows = [[_cost_from_dict(cj) for cj in row] for row in d["costs"]]
            if len(c) != m or any(len(row) != m for row in rows):
                raise InvalidInputError("vector instance dimensions disagree with m")
            return VectorInstance.from_matrix(rows, c, meta)
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed instance: {exc}") from None
    raise InvalidInputError(f"unknown instance kind {kind!r}")


def dumps_instance(instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def save_instance(instance, path) -> None:
    Path(path).write_text(dumps_instance(instance))


def load_instance(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(data)
