"""
Convergence Criteria
Boundary growth-rate limits and Foster-type drift conditions for exponential convergence
"""

import math
from dataclasses import dataclass

import numpy as np

from config import CRITERIA, MONTE_CARLO
from growth_fragmentation_model import (LinearGrowth, PowerFragments, SelfSimilarKernel,
                                        TabulatedGrowth, _quad)

ENDS = ('zero', 'infinity')


@dataclass
class BoundaryLimit:
    """Window maxima of c(x)/x moving toward one end and their extrapolated limit"""
    end: str
    windows: list
    maxima: list
    limit: float
    inconclusive: bool

    @property
    def trend(self):
        steps = np.diff(self.maxima)
        if np.all(np.abs(steps) <= 1e-12 * max(1.0, abs(self.limit))):
            return 'flat'
        return 'decreasing' if np.all(steps <= 0) else 'increasing' if np.all(steps >= 0) else 'mixed'

    def to_dict(self):
        return {'end': self.end, 'windows': [list(w) for w in self.windows],
                'maxima': list(self.maxima), 'limit': self.limit, 'trend': self.trend,
                'inconclusive': self.inconclusive}


def boundary_limit(growth, end, x_ref, samples=None, levels=None, shrink=None):
    """
    limsup of c(x)/x at 0 (x_ref = x_min) or at infinity (x_ref = x_max).
    Window k is [x_ref s^-k, x_ref s^(1-k)] at zero and [x_ref s^(k-1), x_ref s^k]
    at infinity; maxima are extrapolated assuming a power series in the window scale.
    """
    if end not in ENDS:
        raise ValueError(f"end must be one of {ENDS}, got {end!r}")
    samples = samples or CRITERIA['window_samples']
    levels = levels or CRITERIA['window_levels']
    shrink = shrink or CRITERIA['shrink_factor']
    windows, maxima = [], []
    for k in range(levels):
        if end == 'zero':
            window = (x_ref * shrink ** -k, x_ref * shrink ** (1 - k))
        else:
            window = (x_ref * shrink ** (k - 1), x_ref * shrink ** k)
        x = np.geomspace(window[0], window[1], samples)
        windows.append(window)
        maxima.append(float(np.max(growth.relative_rate(x))))

    # repeated Richardson elimination with ratio `shrink`
    table = list(maxima)
    for order in range(1, levels):
        factor = shrink ** order
        table = [(factor * table[i + 1] - table[i]) / (factor - 1) for i in range(len(table) - 1)]
    limit = table[0]

    inconclusive = False
    if isinstance(growth, TabulatedGrowth):
        lo = min(w[0] for w in windows)
        hi = max(w[1] for w in windows)
        inconclusive = not growth.covers(lo, hi)
    return BoundaryLimit(end, windows, maxima, float(limit), inconclusive)


def _domain_infimum(spec, points=4096):
    x = np.geomspace(spec.x_min, spec.x_max, points)
    return float(np.min(spec.growth.relative_rate(x)))


def is_linear(spec, tolerance=1e-12):
    if isinstance(spec.growth, LinearGrowth):
        return True
    r = spec.growth.relative_rate(np.geomspace(spec.x_min, spec.x_max, 1024))
    return bool(np.max(r) - np.min(r) <= tolerance * max(1.0, float(np.max(r))))


def check_ccbis(spec, lambda_hat, half_width=0.0):
    """Both boundary limsups of c(x)/x strictly below λ̂ - 3 × half_width"""
    k = MONTE_CARLO['significance']
    at_zero = boundary_limit(spec.growth, 'zero', spec.x_min)
    at_inf = boundary_limit(spec.growth, 'infinity', spec.x_max)
    threshold = lambda_hat - k * half_width
    inconclusive = at_zero.inconclusive or at_inf.inconclusive
    passed = at_zero.limit < threshold and at_inf.limit < threshold
    return {'limsup_at_0': at_zero.limit, 'limsup_at_inf': at_inf.limit,
            'threshold': threshold, 'pass': bool(passed and not inconclusive),
            'inconclusive': inconclusive,
            'windows_at_0': at_zero.to_dict(), 'windows_at_inf': at_inf.to_dict()}


def check_ccter(spec, tolerance=None):
    """Limits of c(x)/x at both ends equal its infimum"""
    tolerance = tolerance or CRITERIA['ccter_tolerance']
    lim_zero = boundary_limit(spec.growth, 'zero', spec.x_min).limit
    lim_inf = boundary_limit(spec.growth, 'infinity', spec.x_max).limit
    domain_inf = _domain_infimum(spec)
    infimum = min(domain_inf, lim_zero, lim_inf)
    slack = tolerance * max(1.0, abs(infimum))
    passed = abs(lim_zero - infimum) <= slack and abs(lim_inf - infimum) <= slack
    return {'limit_at_0': lim_zero, 'limit_at_inf': lim_inf, 'domain_infimum': domain_inf,
            'infimum': infimum, 'pass': bool(passed), 'linear': is_linear(spec)}


# ---------------------------------------------------------------------------
# Foster-type drift of x^power
# ---------------------------------------------------------------------------

class DivergentIntegral(ValueError):
    pass


def _power_law_exponent(func, u1=1e-10, u2=1e-12):
    f1, f2 = abs(func(u1)), abs(func(u2))
    if f1 == 0 or f2 == 0:
        return math.inf
    return math.log(f2 / f1) / math.log(u2 / u1)


def _paneled_integral(func, panels, u_floor=1e-14):
    """∫_0^1 func on geometric panels above u_floor, power-law tail below it"""
    exponent = _power_law_exponent(func)
    if exponent <= -1.0 + 1e-6:
        raise DivergentIntegral(f"integrand behaves like u^{exponent:.3g} at 0")
    edges = np.geomspace(u_floor, 1.0, panels + 1)
    total = sum(_quad(func, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    if math.isfinite(exponent):
        total += func(u_floor) * u_floor / (exponent + 1.0)
    return total


def _checked_integral(func, panels=None):
    panels = panels or CRITERIA['foster_samples']
    coarse = _paneled_integral(func, panels)
    fine = _paneled_integral(func, 2 * panels)
    if abs(fine - coarse) > CRITERIA['quadrature_agreement'] * max(1.0, abs(fine)):
        raise DivergentIntegral(f"quadrature disagrees across resolutions ({coarse:.6g} vs {fine:.6g})")
    return fine


def self_similar_constant(kernel, power):
    """C(P) = ∫_0^1 (1 - u^P) u p(u) du"""
    fragments = kernel.fragments
    if isinstance(fragments, PowerFragments):
        shifted = fragments.alpha + 2.0
        if shifted + power <= 0:
            raise DivergentIntegral(f"∫ u^(1+{power}) p(u) du diverges for alpha={fragments.alpha}")
        return 1.0 - shifted / (shifted + power)
    return _checked_integral(lambda u: (1.0 - u ** power) * u * fragments.pdf(u))


def self_similar_foster_constants(kernel, r, q):
    """I_r = ∫(1 - u^r) u p du and J_q = ∫(u^-q - 1) u p du"""
    constants = {'I_r': self_similar_constant(kernel, r)}
    try:
        constants['J_q'] = -self_similar_constant(kernel, -q)
    except DivergentIntegral:
        constants['J_q'] = math.inf
    return constants


def foster_drift(spec, x, power, method='auto'):
    """
    P c(x) x^P + ∫_0^x (y^P - x^P) y k(x,y) dy, the drift of x^P scaled by x.
    method: 'self_similar', 'quadrature' or 'auto' (self-similar when available).
    """
    kernel = spec.kernel
    if method == 'auto':
        method = 'self_similar' if isinstance(kernel, SelfSimilarKernel) else 'quadrature'
    relative = float(spec.growth.relative_rate(x))
    if method == 'self_similar':
        if not isinstance(kernel, SelfSimilarKernel):
            raise ValueError("self-similar reduction needs a self-similar kernel")
        rate = float(kernel.total_rate(x))
        if rate == 0:
            return x ** (power + 1.0) * power * relative
        return x ** (power + 1.0) * (power * relative - rate * self_similar_constant(kernel, power))
    if method != 'quadrature':
        raise ValueError(f"unknown method {method!r}")
    # y = x u
    integral = _checked_integral(
        lambda u: (u ** power - 1.0) * u * float(kernel.density(x, x * u)) * x)
    return x ** (power + 1.0) * (power * relative + integral)


def check_foster(spec, r=None, q_neg=None, x_inf=None, x_0=None, samples=None, method='auto'):
    """
    Drift of x^r nonpositive on [x_inf, x_max] and drift of x^-q nonpositive on
    [x_min, x_0], at log-spaced sample points. A divergent small-fragment
    integral reports 'divergent'.
    """
    r = r or CRITERIA['foster_r']
    q_neg = q_neg or CRITERIA['foster_q']
    if not (r > 0 and q_neg > 0):
        raise ValueError("Foster exponents must be positive")
    x_inf = x_inf or CRITERIA['foster_x_inf'] or spec.x_max / 10.0
    x_0 = x_0 or CRITERIA['foster_x_0'] or spec.x_min * 10.0
    samples = samples or CRITERIA['foster_samples']

    upper = np.geomspace(x_inf, spec.x_max, samples)
    drifts_up = np.array([foster_drift(spec, x, r, method) for x in upper])
    mieux1 = bool(np.all(drifts_up <= 0))

    lower = np.geomspace(spec.x_min, x_0, samples)
    try:
        drifts_low = np.array([foster_drift(spec, x, -q_neg, method) for x in lower])
        mieux2 = bool(np.all(drifts_low <= 0))
        worst_low = float(np.max(drifts_low))
    except DivergentIntegral:
        mieux2, worst_low = 'divergent', math.inf

    outcome = {'r': r, 'q': q_neg, 'x_inf': x_inf, 'x_0': x_0,
               'mieux1_pass': mieux1, 'mieux2_pass': mieux2,
               'max_drift_upper': float(np.max(drifts_up)), 'max_drift_lower': worst_low}
    if isinstance(spec.kernel, SelfSimilarKernel):
        outcome.update(self_similar_foster_constants(spec.kernel, r, q_neg))
    return outcome


def recommend(spec, lambda_hat, half_width=0.0, status='pass', foster=None):
    """
    Direct boundary-rate verdict plus the composite condition
    (ccter, both Foster drifts, nonlinear growth).
    """
    if lambda_hat is None or status != 'pass' or not math.isfinite(lambda_hat):
        return {'verdict': 'inconclusive', 'reason': f"λ̂ status {status}"}
    ccbis = check_ccbis(spec, lambda_hat, half_width)
    ccter = check_ccter(spec)
    foster = foster or check_foster(spec)
    nonlinear = not ccter['linear']
    composite = bool(ccter['pass'] and foster['mieux1_pass'] is True
                     and foster['mieux2_pass'] is True and nonlinear)
    if not nonlinear:
        verdict = 'criterion inapplicable for linear growth'
    elif ccbis['inconclusive']:
        verdict = 'inconclusive'
    elif ccbis['pass'] or composite:
        verdict = 'exponential convergence predicted'
    else:
        verdict = 'no prediction'
    return {'verdict': verdict, 'lambda_hat': lambda_hat, 'ccbis': ccbis, 'ccter': ccter,
            'foster': foster, 'composite_pass': composite, 'nonlinear': nonlinear}
