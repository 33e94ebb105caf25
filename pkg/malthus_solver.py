"""
Malthus Solver
Malthus exponent, profile (h, ν), restricted exponents and empirical growth-rate fits
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from config import DEFAULT_SEED, MONTE_CARLO, PROFILE, SOLVER
from feynman_kac import MCEstimate, estimate_semigroup, sample_hitting
from pdmp_simulator import RngStream, StoppingSpec

# Path-index offset between independent estimates drawn from one master seed
STREAM_STRIDE = 2 ** 32


class BracketFailure(RuntimeError):
    def __init__(self, message, curve):
        self.curve = curve
        super().__init__(message)


class FitError(ValueError):
    pass


def _offset(rng, k):
    return rng.substream(rng.path_index + k * STREAM_STRIDE)


def _solver_settings(solver_cfg):
    settings = {**SOLVER, **(solver_cfg or {})}
    unknown = set(settings) - set(SOLVER)
    if unknown:
        raise ValueError(f"unknown solver settings: {sorted(unknown)}")
    return settings


def _default_range(spec, settings):
    if settings['q_range'] is not None:
        q_lo, q_hi = map(float, settings['q_range'])
    else:
        q_lo, q_hi = -(spec.q_c - 1.0), spec.q_c
    if not q_lo < q_hi:
        raise ValueError(f"empty q range [{q_lo}, {q_hi}]")
    return q_lo, q_hi


# ---------------------------------------------------------------------------
# Stochastic bisection
# ---------------------------------------------------------------------------

def stochastic_bisection(sample, q_lo, q_hi, solver_cfg=None, workers=None, verbose=False):
    """
    Root of q ↦ L̂(q) - 1 on the common-random-number sample.

    A midpoint moves an end only when its sign is 3-SE significant; an
    unreliable estimate above 1 counts as the explosive side. Otherwise the
    sample is promoted ×4 until n_max, after which the result is inconclusive.
    Returns (q_lo, q_hi, status, sample).
    """
    settings = _solver_settings(solver_cfg)
    k = MONTE_CARLO['significance']
    upper, lower = sample.laplace(q_hi), sample.laplace(q_lo)
    if upper.mean >= 1.0 or lower.mean <= 1.0:
        curve = sample.curve(np.linspace(q_lo, q_hi, settings['scan_points']))
        side = "above" if upper.mean >= 1.0 else "below"
        raise BracketFailure(f"L̂ stays {side} 1 across [{q_lo:.4g}, {q_hi:.4g}] "
                             f"(L̂(q_lo)={lower.mean:.4g}, L̂(q_hi)={upper.mean:.4g})", curve)

    status = 'pass'
    iterations = 0
    while q_hi - q_lo > settings['width'] and iterations < settings['max_iterations']:
        iterations += 1
        mid = 0.5 * (q_lo + q_hi)
        estimate = sample.laplace(mid)
        if estimate.mean + k * estimate.std_error < 1.0:
            q_hi = mid
        elif estimate.significant_above(1.0) or (not estimate.reliable and estimate.mean > 1.0):
            q_lo = mid
        elif len(sample.summaries) < settings['n_max']:
            n_next = min(len(sample.summaries) * settings['promotion_factor'], settings['n_max'])
            if verbose:
                print(f"   📊 q={mid:.5f}: L̂={estimate.mean:.4f} ± {estimate.std_error:.4f}, "
                      f"promoting to n={n_next}")
            sample = sample.extend(n_next, workers=workers)
        else:
            status = 'inconclusive'
            if verbose:
                print(f"   ⚠️  q={mid:.5f} not resolved at n={settings['n_max']}")
            break
        if verbose and q_hi - q_lo <= settings['width']:
            print(f"   ✅ bracket [{q_lo:.5f}, {q_hi:.5f}] after {iterations} steps")
    return q_lo, q_hi, status, sample


def _pilot_lambda(pilot, q_lo, q_hi):
    """Rough root of the pilot curve, used as the probe for the truncation horizon"""
    def excess(q):
        return pilot.laplace(q).mean - 1.0

    lo, hi = excess(q_lo), excess(q_hi)
    if not (math.isfinite(lo) and lo > 0 > hi):
        return None
    return brentq(excess, q_lo, q_hi, xtol=1e-3)


# ---------------------------------------------------------------------------
# Malthus exponent
# ---------------------------------------------------------------------------

@dataclass
class MalthusResult:
    lambda_hat: float
    bracket: tuple
    L_at_lambda: MCEstimate
    L_prime_at_lambda: MCEstimate
    condBW_pass: str
    anchor_x: float
    status: str
    n_paths: int
    t_max: float
    sample: Optional[object] = field(default=None, repr=False, compare=False)

    def laplace_at(self, q):
        return self.sample.laplace(q)

    def half_width(self):
        return 0.5 * (self.bracket[1] - self.bracket[0])

    def to_dict(self):
        return {
            'lambda_hat': self.lambda_hat,
            'bracket': list(self.bracket),
            'L_at_lambda': self.L_at_lambda.to_dict(),
            'L_prime_at_lambda': self.L_prime_at_lambda.to_dict(),
            'condBW_pass': self.condBW_pass,
            'anchor_x': self.anchor_x,
            'status': self.status,
            'n_paths': self.n_paths,
            't_max': self.t_max,
        }


def _condBW_verdict(L_at, L_prime):
    k = MONTE_CARLO['significance']
    if not (L_at.reliable and math.isfinite(L_at.mean)):
        return 'inconclusive'
    if abs(L_at.mean - 1.0) > k * L_at.std_error:
        return 'fail'
    if not (L_prime.reliable and math.isfinite(L_prime.mean)):
        return 'inconclusive'
    return 'pass'


def _solve_exponent(spec, start, stop, settings, rng, workers, verbose):
    q_lo, q_hi = _default_range(spec, settings)
    pilot_stop = stop.with_horizon(MONTE_CARLO['pilot_horizon'])
    pilot = sample_hitting(spec, start, start, pilot_stop, MONTE_CARLO['pilot_paths'], rng,
                           workers=workers)
    probe = _pilot_lambda(pilot, q_lo, q_hi)
    if verbose:
        print(f"   📊 pilot root: {probe if probe is None else round(probe, 4)}")
    sample = sample_hitting(spec, start, start, stop, settings['n_initial'], rng,
                            q_probe=probe, workers=workers, verbose=verbose)
    lo, hi, status, sample = stochastic_bisection(sample, q_lo, q_hi, settings,
                                                  workers=workers, verbose=verbose)
    lambda_hat = 0.5 * (lo + hi)
    L_at = sample.laplace(lambda_hat)
    L_prime = sample.laplace_derivative(lambda_hat)
    return MalthusResult(lambda_hat, (lo, hi), L_at, L_prime, _condBW_verdict(L_at, L_prime),
                         start, status, len(sample.summaries), sample.t_max, sample)


def solve_malthus(spec, x, solver_cfg=None, rng=None, workers=None, verbose=False):
    """λ̂ = root of L̂_{x,x}(q) = 1 by stochastic bisection on common random numbers"""
    settings = _solver_settings(solver_cfg)
    rng = rng or RngStream(DEFAULT_SEED)
    if verbose:
        print(f"🔍 Solving for the Malthus exponent of '{spec.name}' at x={x:g}")
    result = _solve_exponent(spec, x, StoppingSpec(hit_target=x), settings, rng, workers, verbose)
    if verbose:
        print(f"✅ λ̂ = {result.lambda_hat:.5f} in [{result.bracket[0]:.5f}, "
              f"{result.bracket[1]:.5f}] ({result.status}, condBW {result.condBW_pass})")
    return result


def check_condBW2(spec, x, lambda_hat, rng=None, n=None, ladder=None, workers=None, verbose=False):
    """
    L̂_{x,x}(λ̂ - δ) for a decreasing δ ladder. pass: some δ gives a reliable
    estimate whose truncation tail is negligible; fail: every δ is unreliable;
    inconclusive otherwise.
    """
    ladder = [d for d in (ladder or SOLVER['delta_ladder']) if d > 0]
    rng = rng or RngStream(DEFAULT_SEED)
    n = n or MONTE_CARLO['n_paths']
    sample = sample_hitting(spec, x, x, None, n, rng, q_probe=lambda_hat - min(ladder),
                            workers=workers)
    outcomes = []
    for delta in sorted(ladder, reverse=True):
        q = lambda_hat - delta
        estimate = sample.laplace(q)
        tail = sample.tail_ratio(q)
        finite = estimate.reliable and tail < 1.0
        outcomes.append((delta, estimate, tail, finite))
        if verbose:
            mark = "✅" if finite else "⚠️ "
            print(f"   {mark} δ={delta}: L̂={estimate.mean:.4g} ± {estimate.std_error:.3g}, "
                  f"tail/SE={tail:.3g}")
    if any(finite for *_, finite in outcomes):
        return 'pass'
    if all(not estimate.reliable for _, estimate, _, _ in outcomes):
        return 'fail'
    return 'inconclusive'


# ---------------------------------------------------------------------------
# Profile
# ---------------------------------------------------------------------------

@dataclass
class ProfileResult:
    x0: float
    lambda_hat: float
    table: pd.DataFrame = field(repr=False)
    normalization: float
    condBW_pass: str = 'unchecked'

    @property
    def reliable(self):
        """False when the Malthusian condition was not confirmed or points were flagged"""
        return self.condBW_pass in ('pass', 'unchecked') and not self.flagged

    @property
    def h_table(self):
        return self.table[['y', 'h', 'h_se']]

    @property
    def nu_density_table(self):
        return self.table[['y', 'nu_density', 'flagged']]

    @property
    def flagged(self):
        return self.table.loc[self.table['flagged'], 'y'].tolist()

    def h(self, x):
        return float(np.interp(np.log(x), np.log(self.table['y']), self.table['h']))

    def pairing(self, f):
        """⟨ν, f⟩ by the trapezoid rule over unflagged grid points"""
        usable = self.table[~self.table['flagged']]
        y = usable['y'].to_numpy()
        return float(trapezoid(usable['nu_density'].to_numpy() * f(y), y))


def compute_profile(spec, lambda_hat, x0=None, y_grid=None, rng=None, n=None, workers=None,
                    verbose=False, condBW_pass=None):
    """
    h(y) = y L̂_{y,x0}(λ̂) and dν/dy = 1/(h(y) c(y) |L̂'_{y,y}(λ̂)|) on y_grid,
    normalization = trapezoidal ⟨ν, h⟩ over unflagged points.

    lambda_hat may be a MalthusResult, whose condBW verdict is then used.
    A failed condition raises; an inconclusive one marks the result unreliable.
    """
    if isinstance(lambda_hat, MalthusResult):
        condBW_pass = condBW_pass or lambda_hat.condBW_pass
        lambda_hat = lambda_hat.lambda_hat
    if condBW_pass == 'fail':
        raise ValueError(f"profile needs L(λ) = 1 with a finite derivative; "
                         f"condBW failed at λ̂={lambda_hat:.4g}")
    if x0 is None:
        x0 = PROFILE['x0'] or math.sqrt(spec.x_min * spec.x_max)
    if y_grid is None:
        y_grid = np.geomspace(PROFILE['y_min'], PROFILE['y_max'], PROFILE['grid_points'])
    y_grid = np.asarray(y_grid, dtype=float)
    rng = rng or RngStream(DEFAULT_SEED)
    n = n or MONTE_CARLO['n_paths']
    rows = []
    for i, y in enumerate(y_grid):
        towards = sample_hitting(spec, float(y), x0, None, n, _offset(rng, 2 * i + 1),
                                 q_probe=lambda_hat, workers=workers)
        returns = sample_hitting(spec, float(y), float(y), None, n, _offset(rng, 2 * i + 2),
                                 q_probe=lambda_hat, workers=workers)
        L = towards.laplace(lambda_hat)
        L_prime = returns.laplace_derivative(lambda_hat)
        h = y * L.mean
        flagged = not (L_prime.reliable and L_prime.mean > 0 and h > 0)
        density = (1.0 / (h * float(spec.growth.evaluate(y)) * L_prime.mean)
                   if not flagged else math.nan)
        rows.append({'y': y, 'h': h, 'h_se': y * L.std_error, 'L_prime': L_prime.mean,
                     'L_prime_se': L_prime.std_error, 'nu_density': density, 'flagged': flagged})
        if verbose:
            note = "  ⚠️  flagged" if flagged else ""
            print(f"   📊 y={y:.4g}: h={h:.4g}, dν/dy={density:.4g}{note}")
    table = pd.DataFrame(rows)
    usable = table[~table['flagged']]
    normalization = (float(trapezoid(usable['nu_density'] * usable['h'], usable['y']))
                     if len(usable) > 1 else math.nan)
    return ProfileResult(float(x0), lambda_hat, table, normalization, condBW_pass or 'unchecked')


# ---------------------------------------------------------------------------
# Restricted exponents and consistency fits
# ---------------------------------------------------------------------------

RESTRICTED_MODES = ('lower_a', 'upper_b')


def restricted_exponent(spec, mode, a, b, solver_cfg=None, rng=None, workers=None, verbose=False):
    """
    lower_a (a, b'): root of Φ(q) = E_b'[e^{-qH(b')} ℰ; H(b') < σ(a, ∞)].
    upper_b (a', b''): root of Ψ(q) = E_a'[e^{-qH(a')} ℰ; H(a') < H(b'')].
    """
    if mode not in RESTRICTED_MODES:
        raise ValueError(f"mode must be one of {RESTRICTED_MODES}, got {mode!r}")
    if not 0 < a < b:
        raise ValueError(f"barriers must satisfy 0 < a < b, got ({a}, {b})")
    settings = _solver_settings(solver_cfg)
    rng = rng or RngStream(DEFAULT_SEED)
    if mode == 'lower_a':
        start, stop = b, StoppingSpec(hit_target=b, lower_barrier=a)
    else:
        start, stop = a, StoppingSpec(hit_target=a, upper_exit=b)
    if verbose:
        print(f"🔍 Restricted exponent {mode} on ({a:g}, {b:g})")
    return _solve_exponent(spec, start, stop, settings, rng, workers, verbose)


def fit_growth_rate(spec, x, f, t_grid, rng=None, n=None, workers=None):
    """Least-squares slope of ln T̂_t f(x) over the upper half of t_grid"""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if t_grid.size < 4:
        raise ValueError("fit_growth_rate needs at least 4 times")
    rng = rng or RngStream(DEFAULT_SEED)
    n = n or MONTE_CARLO['n_paths']
    window = t_grid[t_grid.size // 2:]
    estimates = [estimate_semigroup(spec, x, t, f, n, rng, workers=workers) for t in window]
    means = np.array([e.mean for e in estimates])
    if np.any(~(means > 0)):
        raise FitError(f"nonpositive semigroup estimates at t={window[~(means > 0)].tolist()}; "
                       "increase n or the time range")
    fit = stats.linregress(window, np.log(means))
    table = pd.DataFrame({'t': window, 'mean': means, 'se': [e.std_error for e in estimates]})
    return {'rho_hat': float(fit.slope), 'r_squared': float(fit.rvalue ** 2),
            'slope_se': float(fit.stderr), 'table': table}


def stabilization_check(spec, x, f, lambda_hat, times, rng=None, n=None, profile=None,
                        time_tolerance=0.1, profile_tolerance=0.15, workers=None):
    """
    e^{-λ̂t} T̂_t f(x) at two times must agree; with a profile the later value
    is also compared with h(x)⟨ν, f⟩.
    """
    if len(times) != 2:
        raise ValueError("stabilization_check compares exactly two times")
    rng = rng or RngStream(DEFAULT_SEED)
    n = n or MONTE_CARLO['n_paths']
    values = []
    for t in times:
        estimate = estimate_semigroup(spec, x, t, f, n, rng, workers=workers)
        values.append(math.exp(-lambda_hat * t) * estimate.mean)
    scale = max(abs(values[0]), abs(values[1]))
    drift = abs(values[1] - values[0]) / scale if scale > 0 else math.inf
    outcome = {'times': list(times), 'values': values, 'relative_change': drift,
               'stable': bool(drift <= time_tolerance)}
    if profile is not None:
        predicted = profile.h(x) * profile.pairing(f)
        gap = abs(values[1] - predicted) / abs(predicted) if predicted else math.inf
        outcome.update({'predicted': predicted, 'profile_gap': gap,
                        'matches_profile': bool(gap <= profile_tolerance)})
    return outcome
