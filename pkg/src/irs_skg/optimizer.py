"""Probing-time allocation: sequential convex programming and an exhaustive grid baseline.

Decision variables are T = (t_d, t_s).  The problem is

    max R_s(T)  s.t.  t_d + t_s <= t_p / 2,  rho_a(T) <= rho_max,  rho_b(T) <= rho_max

where rho_a, rho_b are the round-to-round correlations of the direct-subtracted
samples at Alice and Bob.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .rate import InvalidCovarianceError, skg_rate
from .scenario import ProbePlan, ScenarioConfig
from .statistics import Regime, temporal_correlation


class InfeasibleProblemError(RuntimeError):
    pass


class DerivativeError(ValueError):
    pass


@dataclass(frozen=True)
class OptProblem:
    scenario: ScenarioConfig
    regime: Regime = Regime.EPS
    t_p: float = 100.0
    rho_max: float = 0.1
    max_iter: int = 20
    cross_pairing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime.parse(self.regime))
        if not 0 < self.rho_max < 1:
            raise ValueError(f"correlation cap must lie in (0, 1), got {self.rho_max}")
        if self.t_p <= 0:
            raise ValueError("t_p must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


class Evaluation(NamedTuple):
    rate: float
    rho_a: float
    rho_b: float
    budget_ok: bool

    def feasible(self, rho_max: float) -> bool:
        return self.budget_ok and self.rho_a <= rho_max and self.rho_b <= rho_max


def evaluate(problem: OptProblem, t_d: float, t_s: float) -> Evaluation:
    """Exact rate and both correlation constraints at (t_d, t_s); budget is only flagged."""
    plan = ProbePlan(problem.t_p, t_d, t_s)
    cp = problem.cross_pairing
    try:
        rate = skg_rate(problem.scenario, plan, problem.regime, cp).total
    except InvalidCovarianceError:
        rate = float("nan")
    rho_a = temporal_correlation(problem.scenario, plan, problem.regime, False, "a", cp).value
    rho_b = temporal_correlation(problem.scenario, plan, problem.regime, False, "b", cp).value
    return Evaluation(rate, rho_a, rho_b, t_d + t_s <= problem.t_p / 2.0)


def objective(problem: OptProblem, t_d: float, t_s: float, feasible_only: bool = False) -> float:
    """R_s in bits per pilot symbol; 0 outside the exact feasible set when ``feasible_only``."""
    if t_d <= 0 or t_s <= 0:
        return 0.0
    if feasible_only:
        if t_d + t_s > problem.t_p / 2.0:
            return 0.0
        plan = ProbePlan(problem.t_p, t_d, t_s)
        for node in ("a", "b"):
            rho = temporal_correlation(problem.scenario, plan, problem.regime, False, node, problem.cross_pairing)
            if rho.value > problem.rho_max:
                return 0.0
    return skg_rate(problem.scenario, ProbePlan(problem.t_p, t_d, t_s), problem.regime, problem.cross_pairing).total


def numerical_derivatives(
    f: Callable[[np.ndarray], float], T, rel_step: float = 1e-4
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and symmetrized Hessian of a function of two variables by central differences.

    ``f`` may return a vector of values (several functions sharing one
    stencil); the gradient then has shape (k, 2) and the Hessian (k, 2, 2).
    If any stencil point is non-finite the step is halved once before giving up.
    """
    T = np.asarray(T, dtype=float)
    step = rel_step
    for _ in range(2):
        h = step * np.maximum(np.abs(T), np.finfo(float).tiny)
        pts = {}
        ok = True
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                try:
                    val = np.asarray(f(T + np.array([i * h[0], j * h[1]])), dtype=float)
                except ValueError:
                    val = np.array(np.nan)
                if not np.all(np.isfinite(val)):
                    ok = False
                    break
                pts[i, j] = val
            if not ok:
                break
        if ok:
            break
        step /= 2.0
    else:
        raise DerivativeError(f"function is not finite on the stencil around {T}")

    f0 = pts[0, 0]
    g = np.stack([(pts[1, 0] - pts[-1, 0]) / (2 * h[0]), (pts[0, 1] - pts[0, -1]) / (2 * h[1])], axis=-1)
    h00 = (pts[1, 0] - 2 * f0 + pts[-1, 0]) / h[0] ** 2
    h11 = (pts[0, 1] - 2 * f0 + pts[0, -1]) / h[1] ** 2
    h01 = (pts[1, 1] - pts[1, -1] - pts[-1, 1] + pts[-1, -1]) / (4 * h[0] * h[1])
    H = np.stack([np.stack([h00, h01], axis=-1), np.stack([h01, h11], axis=-1)], axis=-2)
    return f0, g, H


def project_psd(H: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix to a symmetric 2x2 in the Frobenius norm (negative eigenvalues set to 0)."""
    a, c = float(H[0, 0]), float(H[1, 1])
    b = 0.5 * float(H[0, 1] + H[1, 0])
    mid, rad = 0.5 * (a + c), math.hypot(0.5 * (a - c), b)
    hi, lo = mid + rad, mid - rad
    if lo >= 0.0:
        return np.array([[a, b], [b, c]])
    if hi <= 0.0:
        return np.zeros((2, 2))
    # eigenvector of the positive eigenvalue, from whichever row is better conditioned
    v = (b, hi - a) if abs(hi - a) >= abs(hi - c) else (hi - c, b)
    n2 = v[0] * v[0] + v[1] * v[1]
    if n2 == 0.0:
        v, n2 = ((1.0, 0.0) if a >= c else (0.0, 1.0)), 1.0
    return hi / n2 * np.array([[v[0] * v[0], v[0] * v[1]], [v[0] * v[1], v[1] * v[1]]])


def project_nsd(H: np.ndarray) -> np.ndarray:
    return -project_psd(-H)


class Iterate(NamedTuple):
    t_d: float
    t_s: float
    rate: float
    feasible: bool


@dataclass
class OptResult:
    t_d: float
    t_s: float
    rate: float
    converged: bool
    trace: list[Iterate] = field(default_factory=list)
    evaluations: int = 0
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.trace)


@dataclass(frozen=True)
class QuadModel:
    """value + g.(T - T0) + 1/2 (T - T0)^T H (T - T0), evaluated on arrays of points."""

    center: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray

    def __call__(self, td: np.ndarray, ts: np.ndarray) -> np.ndarray:
        dx = td - self.center[0]
        dy = ts - self.center[1]
        H = self.hess
        return (
            self.value
            + self.grad[0] * dx
            + self.grad[1] * dy
            + 0.5 * (H[0, 0] * dx * dx + 2.0 * H[0, 1] * dx * dy + H[1, 1] * dy * dy)
        )


class _Conic(NamedTuple):
    """r + a0 x + a1 y + 1/2 (b00 x^2 + 2 b01 x y + b11 y^2) <= 0, relative to the model center."""

    r: float
    a0: float
    a1: float
    b00: float = 0.0
    b01: float = 0.0
    b11: float = 0.0

    def at(self, x: float, y: float) -> float:
        return self.r + self.a0 * x + self.a1 * y + 0.5 * (self.b00 * x * x + 2.0 * self.b01 * x * y + self.b11 * y * y)

    @property
    def linear(self) -> bool:
        return self.b00 == 0.0 and self.b01 == 0.0 and self.b11 == 0.0


def _conic(m: QuadModel, cap: float) -> _Conic:
    H = m.hess
    return _Conic(m.value - cap, float(m.grad[0]), float(m.grad[1]), float(H[0, 0]), float(H[0, 1]), float(H[1, 1]))


def _quad_roots(c2: float, c1: float, c0: float) -> list[float]:
    """Real roots of c2 t^2 + c1 t + c0."""
    scale = max(abs(c2), abs(c1), abs(c0))
    if scale == 0.0:
        return []
    if abs(c2) <= 1e-14 * scale:
        return [] if c1 == 0.0 else [-c0 / c1]
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0.0:
        return []
    q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
    roots = [q / c2]
    if q != 0.0:
        roots.append(c0 / q)
    return roots


def _solve2(m00: float, m01: float, m10: float, m11: float, b0: float, b1: float):
    det = m00 * m11 - m01 * m10
    scale = abs(m00 * m11) + abs(m01 * m10)
    if scale == 0.0 or abs(det) <= 1e-13 * scale:
        return None
    return (m11 * b0 - m01 * b1) / det, (m00 * b1 - m10 * b0) / det


def _line(c: _Conic):
    """A point on a0 x + a1 y = -r and the unit direction of the line."""
    n2 = c.a0 * c.a0 + c.a1 * c.a1
    if n2 == 0.0:
        return None
    n = math.sqrt(n2)
    return -c.r * c.a0 / n2, -c.r * c.a1 / n2, -c.a1 / n, c.a0 / n


def _line_crossings(c: _Conic, line) -> list[tuple[float, float]]:
    x0, y0, wx, wy = line
    c2 = 0.5 * (c.b00 * wx * wx + 2.0 * c.b01 * wx * wy + c.b11 * wy * wy)
    gx = c.a0 + c.b00 * x0 + c.b01 * y0
    gy = c.a1 + c.b01 * x0 + c.b11 * y0
    c1 = gx * wx + gy * wy
    return [(x0 + t * wx, y0 + t * wy) for t in _quad_roots(c2, c1, c.at(x0, y0))]


def _boundary_max(obj: _Conic, c: _Conic):
    """Stationary point of the objective model on the curve c = 0.

    Solves (H - mu B) x = mu a - g for the multiplier mu > 0 at which the
    constraint is tight; along this path c decreases in mu.
    """

    def point(mu):
        return _solve2(
            obj.b00 - mu * c.b00, obj.b01 - mu * c.b01, obj.b01 - mu * c.b01, obj.b11 - mu * c.b11,
            mu * c.a0 - obj.a0, mu * c.a1 - obj.a1,
        )

    def phi(mu):
        x = point(mu)
        return math.nan if x is None else c.at(*x)

    base = math.hypot(obj.a0, obj.a1) / max(math.hypot(c.a0, c.a1), 1e-300)
    prev_mu, prev = 0.0, math.nan
    for k in range(-8, 9):
        mu = base * 10.0**k
        val = phi(mu)
        if prev > 0.0 >= val:
            try:
                return point(brentq(phi, prev_mu, mu, xtol=1e-14 * mu, rtol=1e-12))
            except ValueError:
                # the path crosses a singular multiplier inside the bracket
                return None
        prev_mu, prev = mu, val
    return None


def solve_model(
    objective_model: QuadModel,
    constraint_models: list[QuadModel],
    cap: float,
    budget: float,
    lower: np.ndarray,
    upper: np.ndarray,
) -> np.ndarray:
    """Maximize a concave quadratic over {t_d + t_s <= budget, models <= cap} within a box.

    With two variables the maximizer is the unconstrained stationary point, a
    stationary point along one constraint boundary or a corner where two
    boundaries cross, so every such candidate is generated and the best
    feasible one kept.  When none is feasible the point of least violation on
    a coarse grid is returned instead.
    """
    cx, cy = float(objective_model.center[0]), float(objective_model.center[1])
    lo = (float(lower[0]) - cx, float(lower[1]) - cy)
    hi = (float(upper[0]) - cx, float(upper[1]) - cy)
    obj = _conic(objective_model, 0.0)
    quads = [_conic(m, cap) for m in constraint_models]
    edges = [
        _Conic(lo[0], -1.0, 0.0), _Conic(-hi[0], 1.0, 0.0),
        _Conic(lo[1], 0.0, -1.0), _Conic(-hi[1], 0.0, 1.0),
    ]
    budget_c = _Conic(cx + cy - budget, 1.0, 1.0)
    linear = [c for c in quads if c.linear]
    curved = [c for c in quads if not c.linear]
    lines = [(c, _line(c)) for c in edges + [budget_c] + linear]
    lines = [(c, ln) for c, ln in lines if ln is not None]

    cands = [(0.0, 0.0), (lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])]
    if obj.b00 < 0.0 and obj.b00 * obj.b11 - obj.b01 * obj.b01 > 0.0:
        x = _solve2(obj.b00, obj.b01, obj.b01, obj.b11, -obj.a0, -obj.a1)
        if x is not None:
            cands.append(x)
    for _, (x0, y0, wx, wy) in lines:
        curv = obj.b00 * wx * wx + 2.0 * obj.b01 * wx * wy + obj.b11 * wy * wy
        if curv < 0.0:
            slope = (obj.a0 + obj.b00 * x0 + obj.b01 * y0) * wx + (obj.a1 + obj.b01 * x0 + obj.b11 * y0) * wy
            cands.append((x0 - slope / curv * wx, y0 - slope / curv * wy))
    for c in curved:
        x = _boundary_max(obj, c)
        if x is not None:
            cands.append(x)
        for _, ln in lines:
            cands.extend(_line_crossings(c, ln))
    for i in range(4, len(lines)):
        ci = lines[i][0]
        for j in range(i):
            cj = lines[j][0]
            x = _solve2(ci.a0, ci.a1, cj.a0, cj.a1, -ci.r, -cj.r)
            if x is not None:
                cands.append(x)

    best, best_val = None, -math.inf
    checks = [budget_c] + quads
    for x, y in cands:
        x = min(max(x, lo[0]), hi[0])
        y = min(max(y, lo[1]), hi[1])
        if budget_c.at(x, y) > 1e-12 * budget or any(c.at(x, y) > 1e-12 for c in quads):
            continue
        val = obj.at(x, y)
        if val > best_val:
            best, best_val = (x, y), val
    if best is None:
        best = _least_violation(checks, budget, lo, hi)
    return np.array([cx + best[0], cy + best[1]])


def _least_violation(checks: list[_Conic], budget: float, lo, hi, grid: int = 41) -> tuple[float, float]:
    X, Y = np.meshgrid(np.linspace(lo[0], hi[0], grid), np.linspace(lo[1], hi[1], grid), indexing="ij")
    viol = np.maximum(checks[0].at(X, Y) / budget, 0.0)
    for c in checks[1:]:
        viol = np.maximum(viol, c.at(X, Y))
    k = np.unravel_index(int(np.argmin(viol)), viol.shape)
    return float(X[k]), float(Y[k])


def scp_solve(
    problem: OptProblem,
    init: Optional[tuple[float, float]] = None,
    trust_radius: float = 0.1,
    rel_step: float = 1e-4,
    objective_curvature: str = "nsd",
    xtol: float = 1e-6,
) -> OptResult:
    """Sequential convex programming over (t_d, t_s).

    At every iterate the rate and both correlation constraints are replaced by
    second-order Taylor models.  The objective Hessian is projected onto the
    negative-semidefinite cone (``objective_curvature='psd'`` keeps the positive
    part instead) and the constraint Hessians onto the PSD cone.  The model is
    maximized inside a trust box of half-width at most ``trust_radius * t_p``.

    Every model solution is recorded as an iterate, with rate 0 when it breaks
    the exact constraints, and the best recorded iterate is returned.  A model
    solution becomes the next expansion point only if it improves on the
    current one (feasible before infeasible, then by rate, or by constraint
    violation while infeasible); otherwise the box is halved around the same
    point.  The loop stops once a step or the box falls below ``xtol * t_p``.
    """
    if objective_curvature not in ("nsd", "psd"):
        raise ValueError("objective_curvature must be 'nsd' or 'psd'")
    start = time.perf_counter()
    t_p = problem.t_p
    T = np.array(init if init is not None else (0.4 * t_p, 0.16 * t_p), dtype=float)
    floor = 1e-6 * t_p
    budget = t_p / 2.0
    if np.any(T <= 0) or not np.all(np.isfinite(T)):
        raise ValueError(f"initial point must be positive, got {tuple(T)}")
    T = np.minimum(T, budget)
    # the constraint model is solved against a slightly tightened cap so that
    # a converged boundary point also passes the exact check
    cap = problem.rho_max * (1.0 - 1e-9)
    max_radius = trust_radius * t_p
    evaluations = 0

    last: dict[tuple[float, float], Evaluation] = {}

    def exact(t_d: float, t_s: float) -> Evaluation:
        # the accepted trial point is the next stencil center; keep its evaluation
        nonlocal evaluations
        key = (t_d, t_s)
        if key not in last:
            evaluations += 1
            last.clear()
            last[key] = evaluate(problem, t_d, t_s)
        return last[key]

    def stacked(x):
        e = exact(float(x[0]), float(x[1]))
        return [e.rate, e.rho_a, e.rho_b]

    def merit(rate, rho_a, rho_b, t_d, t_s) -> tuple[int, float]:
        viol = max(rho_a - problem.rho_max, rho_b - problem.rho_max, (t_d + t_s - budget) / budget, 0.0)
        if not math.isfinite(rate):
            return (-1, 0.0)
        return (1, rate) if viol <= 0.0 else (0, -viol)

    trace: list[Iterate] = []
    converged = False
    radius = max_radius
    models = None
    for _ in range(problem.max_iter):
        if models is None:
            f0, g, H = numerical_derivatives(stacked, T, rel_step)
            h_obj = project_nsd(H[0]) if objective_curvature == "nsd" else project_psd(H[0])
            models = (
                QuadModel(T.copy(), float(f0[0]), g[0], h_obj),
                [QuadModel(T.copy(), float(f0[k]), g[k], project_psd(H[k])) for k in (1, 2)],
            )
            current = merit(float(f0[0]), float(f0[1]), float(f0[2]), T[0], T[1])
        lower = np.maximum(T - radius, floor)
        upper = np.maximum(np.minimum(T + radius, budget), lower)
        T_new = solve_model(models[0], models[1], cap, budget, lower, upper)

        e = exact(float(T_new[0]), float(T_new[1]))
        ok = e.feasible(problem.rho_max) and math.isfinite(e.rate)
        trace.append(Iterate(float(T_new[0]), float(T_new[1]), e.rate if ok else 0.0, bool(ok)))
        moved = float(np.max(np.abs(T_new - T)))
        if moved < xtol * t_p:
            converged = True
            break
        if merit(e.rate, e.rho_a, e.rho_b, T_new[0], T_new[1]) > current:
            T = T_new
            radius = max_radius
            models = None
        else:
            radius = 0.5 * moved
            if radius < xtol * t_p:
                converged = True
                break

    feasible = [it for it in trace if it.feasible]
    if not feasible:
        raise InfeasibleProblemError(
            f"no feasible iterate in {len(trace)} SCP iterations (rho_max={problem.rho_max})"
        )
    best = max(feasible, key=lambda it: it.rate)
    return OptResult(
        best.t_d, best.t_s, best.rate, converged, trace, evaluations, time.perf_counter() - start
    )


def exhaustive_search(problem: OptProblem, step: float = 1e-2) -> OptResult:
    """Scan t_d, t_s over (0, t_p/2] in steps of ``step * t_p`` and keep the best feasible point.

    Every grid point is evaluated in full (rate and both correlations) and the
    exact constraints are applied afterwards as a filter.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    start = time.perf_counter()
    t_p = problem.t_p
    n = int(math.floor(0.5 / step + 1e-9))
    if n < 1:
        raise InfeasibleProblemError(f"step {step} leaves no grid point in (0, t_p/2]")
    values = [(k + 1) * step * t_p for k in range(n)]
    best: Optional[Iterate] = None
    evaluations = 0
    for t_d in values:
        for t_s in values:
            e = evaluate(problem, t_d, t_s)
            evaluations += 1
            if not (e.feasible(problem.rho_max) and math.isfinite(e.rate)):
                continue
            if best is None or e.rate > best.rate:
                best = Iterate(t_d, t_s, e.rate, True)
    if best is None:
        raise InfeasibleProblemError("no feasible grid point")
    return OptResult(best.t_d, best.t_s, best.rate, True, [best], evaluations, time.perf_counter() - start)
