"""Dual first-order methods with primal reconstruction by averaging.

All three methods run on the ``(m, n)`` price view of an instance (``m = 1``
for scalar instances), so the scalar and vector variants share one code
path. The composite term ``-sum_j c_j min_k p_jk`` separates over products,
hence every prox step is a row-wise water fill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .model import dual_value_matrix, validate
from .prox import water_fill

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "AcceleratedState",
    "RunResult",
    "subgradient_lambda",
    "subgradient_solve",
    "composite_solve",
    "accelerated_solve",
    "composite_solve_vector",
    "accelerated_solve_vector",
    "alpha_sequence",
    "next_alpha",
    "default_cadence",
    "solve",
]

METHODS = ("subgradient", "composite", "accelerated")
DEFAULT_MAX_ITERATIONS = 10**7


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters shared by all methods.

    ``iterations`` is required for the composite and accelerated methods.
    The subgradient method takes ``eps`` and derives its stepsize and
    iteration count from it; ``iterations`` then acts as a user cap.
    """

    method: str = "composite"
    iterations: Optional[int] = None
    eps: Optional[float] = None
    p0: Optional[np.ndarray] = None
    L_override: Optional[float] = None
    record_cadence: Optional[int] = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    step_override: Optional[float] = None


@dataclass(frozen=True)
class IterationRecord:
    """Snapshot after iteration ``t``.

    ``p`` and ``x`` are the query prices and their best responses; for the
    accelerated method that is the mixed point ``p^t``. ``p_avg`` is the
    dual certificate point (running average for subgradient/composite,
    ``w^t`` for accelerated) and ``x_avg`` the reconstructed primal plan.
    """

    t: int
    p: np.ndarray
    x: np.ndarray
    dual_value: float
    p_avg: np.ndarray
    x_avg: np.ndarray
    dual_value_avg: float
    duality_gap: float
    infeasibility: float


@dataclass(frozen=True)
class AcceleratedState:
    y: np.ndarray
    w: np.ndarray
    p: np.ndarray
    A: float
    alpha: float
    x_avg: np.ndarray


@dataclass(frozen=True)
class RunResult:
    method: str
    kind: str
    N: int
    L: float
    p0: np.ndarray
    p_last: np.ndarray
    dual_point: np.ndarray
    x_avg: np.ndarray
    history: tuple
    max_row_norm: float
    eps: Optional[float] = None
    step: Optional[float] = None
    theorem_N: Optional[int] = None
    capped: bool = False
    state: Optional[AcceleratedState] = None
    alphas: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final(self) -> IterationRecord:
        return self.history[-1]

    @property
    def duality_gap(self) -> float:
        return self.final.duality_gap

    @property
    def infeasibility(self) -> float:
        return self.final.infeasibility

    def series(self, name: str) -> np.ndarray:
        """Per-record metric: ``dual_value``, ``duality_gap`` or ``infeasibility``.

        The dual-value series tracks each method's own price estimate:
        ``phi(p^t)`` for subgradient and composite, ``phi(w^t)`` for the
        accelerated method.
        """
        if name == "dual_value" and self.method == "accelerated":
            name = "dual_value_avg"
        return np.array([getattr(r, name) for r in self.history])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.t for r in self.history], dtype=int)


def default_cadence(N: int) -> int:
    return 1 if N <= 10**4 else math.ceil(N / 10**4)


def subgradient_lambda(p, tol: Optional[float] = None) -> np.ndarray:
    """Uniform purchase shares over the (tolerance-)cheapest producers."""
    p = np.asarray(p, dtype=float)
    pmin = float(p.min())
    if tol is None:
        tol = 1e-9 * max(1.0, pmin)
    mask = p <= pmin + tol
    return mask / mask.sum()


def next_alpha(A: float, L: float) -> float:
    """Largest root of ``L*a**2 - a - A = 0``, polished by one Newton step."""
    a = (1.0 + math.sqrt(1.0 + 4.0 * L * A)) / (2.0 * L)
    r = L * a * a - a - A
    return a - r / (2.0 * L * a - 1.0)


def alpha_sequence(L: float, N: int):
    """Step weights ``alpha_0..alpha_N`` and their partial sums ``A_0..A_N``."""
    alphas = np.zeros(N + 1)
    As = np.zeros(N + 1)
    A = 0.0
    for t in range(N):
        a = next_alpha(A, L)
        A = A + a
        alphas[t + 1] = a
        As[t + 1] = A
    return alphas, As


# --- engine ------------------------------------------------------------------


class _Recorder:
    def __init__(self, instance, N: int, cadence: int):
        self.instance = instance
        self.N = N
        self.cadence = cadence
        self.records: list[IterationRecord] = []
        self.demands = instance.demands

    def due(self, t: int) -> bool:
        return t % self.cadence == 0 or t == self.N

    def add(self, t, P, X, phi, P_avg, X_avg, X_at_avg=None):
        inst = self.instance
        phi_avg = dual_value_matrix(inst, P_avg, X_at_avg)
        gap = inst.total_cost_matrix(X_avg) + phi_avg
        infeas = float(np.sum(np.maximum(self.demands - X_avg.sum(axis=1), 0.0)))
        self.records.append(
            IterationRecord(
                t=t,
                p=inst.unview(P),
                x=inst.unview(X),
                dual_value=phi,
                p_avg=inst.unview(P_avg),
                x_avg=inst.unview(X_avg),
                dual_value_avg=phi_avg,
                duality_gap=gap,
                infeasibility=infeas,
            )
        )


def _prox_rows(P_tilde: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    out = np.empty_like(P_tilde)
    for j in range(P_tilde.shape[0]):
        out[j] = water_fill(P_tilde[j], gammas[j]).p_out
    return out


def _row_norm(P: np.ndarray) -> float:
    return float(np.max(np.sqrt(np.sum(P * P, axis=1))))


def _prepare(instance, config: SolverConfig, method: str):
    from .certificates import p_max_bound

    problems = validate(instance)
    if problems:
        raise InvalidInputError("invalid instance: " + "; ".join(problems))
    L = instance.L if config.L_override is None else float(config.L_override)
    if not math.isfinite(L) or L <= 0:
        raise InvalidInputError("Lipschitz constant must be positive")
    if config.p0 is None:
        P0 = np.zeros((instance.m, instance.n))
    else:
        p0 = np.asarray(config.p0, dtype=float)
        if p0.ndim == 0:
            p0 = np.full((instance.n,) if instance.kind == "scalar" else (instance.m, instance.n), float(p0))
        P0 = instance.view(p0)
    pmax = p_max_bound(instance)
    if not np.all(np.isfinite(P0)) or np.any(P0 < 0) or np.any(P0 > pmax):
        raise InvalidInputError(f"starting prices must lie in [0, p_max] = [0, {pmax:g}]")
    return L, P0


def _check_iterations(N) -> int:
    if N is None:
        raise InvalidInputError("number of iterations is required")
    if int(N) != N or N < 1:
        raise InvalidInputError(f"iterations must be a positive integer, got {N!r}")
    return int(N)


def _run_subgradient(instance, config: SolverConfig) -> RunResult:
    from .certificates import theorem1_requirements

    L, P0 = _prepare(instance, config, "subgradient")
    eps = config.eps
    if eps is None or not math.isfinite(eps) or eps <= 0:
        raise InvalidInputError("subgradient method requires eps > 0")
    req = theorem1_requirements(instance, eps)
    h = req["h"] if config.step_override is None else float(config.step_override)
    theorem_N = req["N"]
    N = theorem_N
    capped = False
    if config.iterations is not None:
        N = _check_iterations(config.iterations)
    if N > config.max_iterations:
        N, capped = int(config.max_iterations), True
    capped = capped or N < theorem_N

    cadence = config.record_cadence or default_cadence(N)
    rec = _Recorder(instance, N, cadence)
    c = instance.demands[:, None]
    P = P0.copy()
    X = instance.responses_matrix(P)
    sumP = np.zeros_like(P)
    sumX = np.zeros_like(P)
    max_norm = _row_norm(P)
    for t in range(N):
        sumX += X
        lam = np.stack([subgradient_lambda(row) for row in P])
        P = np.maximum(P - h * (X - c * lam), 0.0)
        X = instance.responses_matrix(P)
        sumP += P
        max_norm = max(max_norm, _row_norm(P))
        if rec.due(t + 1):
            rec.add(t + 1, P, X, dual_value_matrix(instance, P, X), sumP / (t + 1), sumX / (t + 1))
    return RunResult(
        method="subgradient", kind=instance.kind, N=N, L=L, p0=instance.unview(P0),
        p_last=instance.unview(P), dual_point=instance.unview(sumP / N),
        x_avg=instance.unview(sumX / N), history=tuple(rec.records), max_row_norm=max_norm,
        eps=float(eps), step=h, theorem_N=theorem_N, capped=capped,
    )


def _run_composite(instance, config: SolverConfig) -> RunResult:
    L, P0 = _prepare(instance, config, "composite")
    N = _check_iterations(config.iterations)
    cadence = config.record_cadence or default_cadence(N)
    rec = _Recorder(instance, N, cadence)
    gammas = instance.demands / L
    P = P0.copy()
    X = instance.responses_matrix(P)
    sumP = np.zeros_like(P)
    sumX = np.zeros_like(P)
    max_norm = _row_norm(P)
    for t in range(N):
        sumX += X
        P = _prox_rows(P - X / L, gammas)
        X = instance.responses_matrix(P)
        sumP += P
        max_norm = max(max_norm, _row_norm(P))
        if rec.due(t + 1):
            rec.add(t + 1, P, X, dual_value_matrix(instance, P, X), sumP / (t + 1), sumX / (t + 1))
    return RunResult(
        method="composite", kind=instance.kind, N=N, L=L, p0=instance.unview(P0),
        p_last=instance.unview(P), dual_point=instance.unview(sumP / N),
        x_avg=instance.unview(sumX / N), history=tuple(rec.records), max_row_norm=max_norm,
        step=1.0 / L,
    )


def _run_accelerated(instance, config: SolverConfig) -> RunResult:
    L, P0 = _prepare(instance, config, "accelerated")
    N = _check_iterations(config.iterations)
    cadence = config.record_cadence or default_cadence(N)
    rec = _Recorder(instance, N, cadence)
    c = instance.demands
    Y = P0.copy()
    W = P0.copy()
    P = P0.copy()
    X_avg = np.zeros_like(P0)
    A = 0.0
    a = 0.0
    alphas = np.zeros(N + 1)
    max_norm = _row_norm(P0)
    for t in range(N):
        a = next_alpha(A, L)
        A_next = A + a
        P = (a * Y + A * W) / A_next
        X = instance.responses_matrix(P)
        Y = _prox_rows(Y - a * X, c * a)
        W = (a * Y + A * W) / A_next
        X_avg = (a * X + A * X_avg) / A_next
        A = A_next
        alphas[t + 1] = a
        max_norm = max(max_norm, _row_norm(P), _row_norm(Y), _row_norm(W))
        if rec.due(t + 1):
            rec.add(t + 1, P, X, dual_value_matrix(instance, P, X), W, X_avg)
    state = AcceleratedState(
        y=instance.unview(Y), w=instance.unview(W), p=instance.unview(P), A=A, alpha=a,
        x_avg=instance.unview(X_avg),
    )
    return RunResult(
        method="accelerated", kind=instance.kind, N=N, L=L, p0=instance.unview(P0),
        p_last=instance.unview(P), dual_point=instance.unview(W),
        x_avg=instance.unview(X_avg), history=tuple(rec.records), max_row_norm=max_norm,
        state=state, alphas=alphas,
    )


_RUNNERS = {
    "subgradient": _run_subgradient,
    "composite": _run_composite,
    "accelerated": _run_accelerated,
}


def _require(instance, kind: str):
    if instance.kind != kind:
        raise InvalidInputError(f"expected a {kind} instance, got {instance.kind}")


def subgradient_solve(instance, config: SolverConfig) -> RunResult:
    """Projected subgradient method with stepsize ``eps / (n C^2)``.

    Runs the theorem iteration count ``ceil(164 (C n p_max)^2 / eps^2)``
    unless ``config.iterations`` or ``config.max_iterations`` caps it; a
    capped run has ``capped=True`` and carries no accuracy guarantee.
    """
    _require(instance, "scalar")
    return _run_subgradient(instance, config)


def composite_solve(instance, config: SolverConfig) -> RunResult:
    """Composite gradient method with the exact water-fill prox step."""
    _require(instance, "scalar")
    return _run_composite(instance, config)


def accelerated_solve(instance, config: SolverConfig) -> RunResult:
    """Accelerated composite gradient method; dual certificate point is ``w^N``."""
    _require(instance, "scalar")
    return _run_accelerated(instance, config)


def composite_solve_vector(instance, config: SolverConfig) -> RunResult:
    _require(instance, "vector")
    return _run_composite(instance, config)


def accelerated_solve_vector(instance, config: SolverConfig) -> RunResult:
    _require(instance, "vector")
    return _run_accelerated(instance, config)


def solve(instance, config: SolverConfig) -> RunResult:
    """Dispatch on ``config.method``."""
    if config.method not in _RUNNERS:
        raise InvalidInputError(f"unknown method {config.method!r}; choose from {METHODS}")
    if config.method == "subgradient":
        _require(instance, "scalar")
    return _RUNNERS[config.method](instance, config)
