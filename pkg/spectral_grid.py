"""
Spectral Grid Oracle
Deterministic log-grid discretization of the growth-fragmentation operator
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.linalg import lu_factor, lu_solve

from config import GRID, MONTE_CARLO
from feynman_kac import sample_hitting
from pdmp_simulator import StoppingSpec


class GridResolutionError(ValueError):
    pass


class BufferConditionError(ValueError):
    def __init__(self, required_x_max, x_max):
        self.required_x_max = required_x_max
        super().__init__(f"step_semigroup needs x_max >= {required_x_max:.6g} "
                         f"(grid ends at {x_max:.6g}); widen domain.x_max")


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, residual_history):
        self.residual_history = residual_history
        super().__init__(message)


@dataclass
class GridOperator:
    """
    A_h = transport + gain - diag(K) on log-spaced nodes.
    Transport is upwind from the node above; gain rows are scaled so that
    A_h applied to f(x) = x gives c(x) at interior nodes.
    """
    spec: object
    grid: np.ndarray
    transport: np.ndarray
    gain: np.ndarray
    loss: np.ndarray
    settings: dict = field(default_factory=dict)
    kill_window: Optional[tuple] = None

    @property
    def n_nodes(self):
        return self.grid.size

    @property
    def q_c(self):
        return self.spec.q_c

    def killed_mask(self):
        if self.kill_window is None:
            return np.zeros(self.n_nodes, dtype=bool)
        a, b = self.kill_window
        return (self.grid < a) | (self.grid > b)

    def matrix(self):
        A = self.transport + self.gain - np.diag(self.loss)
        killed = self.killed_mask()
        if np.any(killed):
            A[killed, :] = 0.0
            A[killed, killed] = -self.q_c
        return A

    def with_kill_window(self, a, b):
        if not (self.grid[0] <= a < b <= self.grid[-1]):
            raise ValueError(f"kill window [{a}, {b}] not inside the grid "
                             f"[{self.grid[0]:g}, {self.grid[-1]:g}]")
        return replace(self, kill_window=(float(a), float(b)))

    def interior_mask(self):
        mask = ~self.killed_mask()
        mask[-1] = False
        return mask

    def identity_residual(self):
        """max relative |A_h x - c(x)| over interior nodes"""
        c = self.spec.growth.evaluate(self.grid)
        residual = self.matrix() @ self.grid - c
        interior = self.interior_mask()
        return float(np.max(np.abs(residual[interior]) / c[interior]))

    def gain_row_sums(self):
        return self.gain.sum(axis=1)

    def interpolate(self, values, x):
        return np.interp(np.log(x), np.log(self.grid), values)


def _trapezoid_weights(x):
    """W[i, j]: trapezoid weight of node j in ∫_0^{x_i}, the piece (0, x_0) as a rectangle"""
    n = x.size
    full = np.empty(n)
    full[0] = x[0] + 0.5 * (x[1] - x[0])
    full[1:-1] = 0.5 * (x[2:] - x[:-2])
    full[-1] = 0.0
    half = np.empty(n)
    half[0] = x[0]
    half[1:] = 0.5 * (x[1:] - x[:-1])
    weights = np.tril(np.tile(full, (n, 1)), k=-1)
    weights[np.arange(n), np.arange(n)] = half
    weights[1:, 0] = full[0]
    return weights


def build_operator(spec, grid_cfg=None):
    """Assemble A_h for a validated model on a log grid over the working domain"""
    settings = {**GRID, **(grid_cfg or {})}
    n = int(settings['nodes'])
    x = np.geomspace(spec.x_min, spec.x_max, n)
    c = spec.growth.evaluate(x)
    K = np.asarray(spec.kernel.total_rate(x), dtype=float) * np.ones(n)

    dx = np.diff(x)
    transport = np.zeros((n, n))
    idx = np.arange(n - 1)
    transport[idx, idx] = -c[:-1] / dx
    transport[idx, idx + 1] = c[:-1] / dx
    # zero inflow from above the last node
    transport[-1, -1] = -c[-1] / dx[-1]

    lower = np.tril(np.ones((n, n), dtype=bool))
    ys = np.where(lower, x[None, :], x[:, None])
    with np.errstate(divide='ignore', invalid='ignore'):
        density = np.asarray(spec.kernel.density(x[:, None], ys), dtype=float)
        if not np.all(np.isfinite(density[lower])):
            # integrable singularity at y = x: evaluate just below the diagonal
            near = np.where(lower, ys * (1.0 - 1e-6), x[:, None])
            density = np.where(np.isfinite(density), density,
                               spec.kernel.density(x[:, None], near))
    density = np.where(lower & np.isfinite(density), np.clip(density, 0.0, None), 0.0)

    min_nodes = int(settings['min_kernel_nodes'])
    support = ((density > 0) & np.tril(np.ones((n, n), dtype=bool), k=-1)).sum(axis=1)
    resolved = (K <= 0) | (support >= min_nodes)
    resolved[:min_nodes] = True
    if not np.all(resolved):
        worst = int(np.argmin(np.where(resolved, n, support)))
        raise GridResolutionError(f"kernel support under x={x[worst]:.4g} spans only "
                                  f"{support[worst]} nodes (< {min_nodes}); refine the grid")

    gain = _trapezoid_weights(x) * density
    moments = gain @ x
    scale = np.where(moments > 0, K * x / np.where(moments > 0, moments, 1.0), 0.0)
    gain *= scale[:, None]
    return GridOperator(spec, x, transport, gain, K, settings)


def _max_step(op, t):
    c = op.spec.growth.evaluate(op.grid)
    dx = np.diff(op.grid)
    transport_limit = float(np.min(np.append(dx, dx[-1]) / c))
    rate_limit = 1.0 / max(float(np.max(op.loss)), 1e-12)
    return op.settings['cfl'] * min(transport_limit, rate_limit, max(t, 1e-12))


def step_semigroup(op, f, t, check_buffer=True):
    """Method of lines dF/dt = A_h F with adaptive explicit RK45, F(0) = f on the grid"""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if check_buffer:
        support = f.support
        if support is None:
            raise BufferConditionError(math.inf, op.grid[-1])
        required = (support[1] * math.exp(op.spec.growth.sup_relative_rate() * t)
                    * op.settings['buffer_factor'])
        if op.grid[-1] < required:
            raise BufferConditionError(required, op.grid[-1])
    initial = np.asarray(f(op.grid), dtype=float)
    if t == 0:
        return initial
    A = op.matrix()
    solution = solve_ivp(lambda _, F: A @ F, (0.0, t), initial, method='RK45',
                         t_eval=[t], rtol=op.settings['rtol'], atol=op.settings['atol'],
                         max_step=_max_step(op, t))
    if not solution.success:
        raise RuntimeError(f"method of lines failed: {solution.message}")
    return solution.y[:, -1]


@dataclass
class RefinedSemigroup:
    points: np.ndarray
    values: np.ndarray
    fine: np.ndarray
    gap: np.ndarray
    scale: float
    nodes: int
    converged: bool

    def to_frame(self, t):
        return pd.DataFrame({'x': self.points, 't': float(t), 'value': self.values,
                             'fine': self.fine, 'gap': self.gap, 'nodes': self.nodes})


def refined_semigroup(spec, f, t, points, grid_cfg=None, budget=None, max_nodes=None):
    """
    T_t f at the given points on grids of doubling size, starting from
    grid_cfg["nodes"] and doubling at least once. Stops once two consecutive
    resolutions differ by at most budget × max|T_t f| (or max_nodes is
    reached) and returns the first-order Richardson value 2 F_2n - F_n.
    """
    settings = {**GRID, **(grid_cfg or {})}
    budget = settings['refine_budget'] if budget is None else budget
    max_nodes = int(settings['max_refined_nodes'] if max_nodes is None else max_nodes)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    nodes = int(settings['nodes'])
    op = build_operator(spec, {**settings, 'nodes': nodes})
    coarse = op.interpolate(step_semigroup(op, f, t), points)
    while True:
        nodes *= 2
        op = build_operator(spec, {**settings, 'nodes': nodes})
        full = step_semigroup(op, f, t)
        fine = op.interpolate(full, points)
        gap = np.abs(fine - coarse)
        scale = max(float(np.max(np.abs(full))), 1e-300)
        converged = bool(np.max(gap) <= budget * scale)
        if converged or 2 * nodes > max_nodes:
            break
        coarse = fine
    return RefinedSemigroup(points, 2.0 * fine - coarse, fine, gap, scale, nodes, converged)


@dataclass
class EigenResult:
    rho_ab: float
    eigenfunction: np.ndarray
    residual: float
    interval: tuple
    grid: np.ndarray
    iterations: int
    positive: bool

    def h_ab(self, x):
        """Weighted-process eigenfunction: grid eigenfunction / x, log-linear interpolation"""
        values = self.eigenfunction / self.grid
        return np.interp(np.log(x), np.log(self.grid), values)

    def to_frame(self):
        return pd.DataFrame({'x': self.grid, 'eigenfunction': self.eigenfunction,
                             'h_ab': self.eigenfunction / self.grid})


def killed_principal_eigenpair(op):
    """Power iteration on (q_c I - A_h)^{-1}; rho = q_c - 1/r for its top eigenvalue r"""
    if op.kill_window is None:
        raise ValueError("killed_principal_eigenpair needs an operator with a kill window")
    settings = op.settings
    q_c = op.q_c
    M = q_c * np.eye(op.n_nodes) - op.matrix()
    factors = lu_factor(M)
    inside = ~op.killed_mask()
    v = inside.astype(float)
    v /= np.max(v)
    r = 0.0
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, int(settings['max_power_iterations']) + 1):
        w = lu_solve(factors, v)
        r = float(np.max(np.abs(w)))
        w /= r
        change = float(np.max(np.abs(w - v)))
        v = w
        if iterations % 100 == 0:
            history.append(change)
        if change < settings['power_tolerance']:
            converged = True
            break
    residual = float(np.max(np.abs(M @ v - v / r)) / np.max(np.abs(v / r)))
    history.append(residual)
    if not converged and residual > settings['residual_tolerance']:
        raise EigenConvergenceError(f"power iteration on [{op.kill_window[0]:g}, "
                                    f"{op.kill_window[1]:g}] did not converge "
                                    f"(residual {residual:.3e})", history)
    v = np.where(inside, v, 0.0)
    positive = bool(np.all(v[inside][:-1] > 0)) if inside.sum() > 1 else bool(np.all(v[inside] > 0))
    return EigenResult(q_c - 1.0 / r, v, residual, op.kill_window, op.grid, iterations, positive)


def eigen_sweep(op, windows, workers=1):
    """rho_ab for every window, as a table {a, b, rho_ab, residual}"""
    def solve(window):
        result = killed_principal_eigenpair(op.with_kill_window(*window))
        return {'a': window[0], 'b': window[1], 'rho_ab': result.rho_ab,
                'residual': result.residual, 'iterations': result.iterations}

    if workers == 1:
        rows = [solve(window) for window in windows]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(solve, windows))
    return pd.DataFrame(rows)


def nested_sweep(op, a0, b0, factor=None, increment=None, max_steps=None):
    """
    Widen [a, b] geometrically until rho_ab grows by less than the increment
    or the window fills the grid. The last rho approximates sup over windows.
    """
    factor = factor or op.settings['sweep_factor']
    increment = increment or op.settings['sweep_increment']
    max_steps = max_steps or op.settings['max_sweep_steps']
    lo_limit, hi_limit = op.grid[1], op.grid[-2]
    a, b = max(a0, lo_limit), min(b0, hi_limit)
    rows = []
    previous = None
    for _ in range(max_steps):
        result = killed_principal_eigenpair(op.with_kill_window(a, b))
        rows.append({'a': a, 'b': b, 'rho_ab': result.rho_ab, 'residual': result.residual})
        if previous is not None and abs(result.rho_ab - previous) < increment:
            break
        if a <= lo_limit and b >= hi_limit:
            break
        previous = result.rho_ab
        a, b = max(a / factor, lo_limit), min(b * factor, hi_limit)
    return pd.DataFrame(rows)


def check_prop_P1(spec, eigen, x, y, n, rng, rho_shift=0.0, tolerance=None, workers=None):
    """
    Compare E_x[ℰ_{H(y)} e^{-rho H(y)}; H(y) < σ(a,b)] with h_ab(x)/h_ab(y).
    Passes when within 3 SE plus the relative interpolation tolerance.
    """
    tolerance = GRID['interpolation_tolerance'] if tolerance is None else tolerance
    a, b = eigen.interval
    if not (a < x < b and a < y < b):
        raise ValueError(f"x={x} and y={y} must lie inside ({a}, {b})")
    rho = eigen.rho_ab + rho_shift
    ratio = float(eigen.h_ab(x) / eigen.h_ab(y))
    if x == y:
        return {'passed': True, 'ratio': 1.0, 'mc_mean': 1.0, 'mc_se': 0.0, 'rho': rho,
                'x': x, 'y': y, 'note': 'degenerate ratio h/h'}
    stop = StoppingSpec(hit_target=y, lower_barrier=a, upper_exit=b)
    sample = sample_hitting(spec, x, y, stop, n, rng, q_probe=rho, workers=workers)
    estimate = sample.laplace(rho)
    k = MONTE_CARLO['significance']
    passed = (estimate.reliable
              and abs(estimate.mean - ratio) <= k * estimate.std_error + tolerance * ratio)
    return {'passed': bool(passed), 'ratio': ratio, 'mc_mean': estimate.mean,
            'mc_se': estimate.std_error, 'rho': rho, 'x': x, 'y': y,
            'censored_fraction': estimate.censored_fraction}
