"""
Growth-Fragmentation Model
Growth rates, fragmentation kernels, standing-assumption checks and flow primitives
"""

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize, stats
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from config import FLOW_CLOCK, QUADRATURE, VALIDATION


class DomainError(ValueError):
    """Mass or duration outside the domain of an operation"""


class ConfigError(ValueError):
    """Malformed or unknown configuration entry"""


class ModelValidationError(ValueError):
    """Raised by require_valid when a standing assumption fails"""

    def __init__(self, report):
        self.report = report
        names = ', '.join(check.name for check in report.failed_checks())
        super().__init__(f"model '{report.model_name}' failed checks: {names}")


class FlowOverflowWarning(UserWarning):
    pass


class IrreducibilityWarning(UserWarning):
    pass


def _quad(func, lower, upper, limit=None):
    value, _ = integrate.quad(func, lower, upper,
                              epsabs=QUADRATURE['epsabs'],
                              epsrel=QUADRATURE['epsrel'],
                              limit=limit or QUADRATURE['limit'])
    return value


def _fill(x, value):
    """Broadcast a constant to the shape of x (plain float for scalars)"""
    if np.ndim(x) == 0:
        return float(value)
    return np.full(np.shape(x), float(value))


# Names available inside configuration expressions
_EXPRESSION_SCOPE = {name: getattr(np, name) for name in (
    'exp', 'log', 'log1p', 'expm1', 'sqrt', 'power', 'abs', 'minimum',
    'maximum', 'where', 'tanh', 'sin', 'cos', 'pi')}


class Expression:
    """
    numpy expression string in fixed variable names, e.g. "2/x" in (x, y).
    Kept as source text so models stay picklable for worker processes.
    """

    def __init__(self, source, variables):
        self.source = str(source)
        self.variables = tuple(variables)
        self._code = self._compile()

    def _compile(self):
        try:
            return compile(self.source, '<expression>', 'eval')
        except SyntaxError as e:
            raise ConfigError(f"invalid expression '{self.source}': {e}")

    def __call__(self, *args):
        scope = dict(_EXPRESSION_SCOPE)
        scope.update(zip(self.variables, args))
        value = eval(self._code, {'__builtins__': {}}, scope)
        if np.ndim(args[0]) == 0 and np.ndim(value) == 0:
            return float(value)
        return np.broadcast_to(value, np.broadcast(*args).shape).astype(float)

    def __getstate__(self):
        return {'source': self.source, 'variables': self.variables}

    def __setstate__(self, state):
        self.source = state['source']
        self.variables = state['variables']
        self._code = self._compile()

    def __repr__(self):
        return f"Expression({self.source!r})"


# ---------------------------------------------------------------------------
# Growth rates
# ---------------------------------------------------------------------------

class GrowthRate:
    """Base class: subclasses provide relative_rate(x) = c(x)/x"""

    form = None
    closed_form = False

    def relative_rate(self, x):
        raise NotImplementedError

    def evaluate(self, x):
        return x * self.relative_rate(x)

    def is_bounded(self):
        return True

    def _sup_search_range(self):
        return 1e-8, 1e8

    def sup_relative_rate(self):
        """sup of c(x)/x over (0, ∞), dense log sampling plus a bounded refine"""
        if getattr(self, '_sup_cache', None) is not None:
            return self._sup_cache
        lo, hi = self._sup_search_range()
        grid = np.geomspace(lo, hi, 8193)
        values = self.relative_rate(grid)
        i = int(np.argmax(values))
        best = float(values[i])
        left = math.log(grid[max(i - 1, 0)])
        right = math.log(grid[min(i + 1, len(grid) - 1)])
        if right > left:
            res = optimize.minimize_scalar(lambda u: -float(self.relative_rate(math.exp(u))),
                                           bounds=(left, right), method='bounded',
                                           options={'xatol': 1e-12})
            best = max(best, -float(res.fun))
        self._sup_cache = best
        return best

    def to_config(self):
        raise NotImplementedError


class LinearGrowth(GrowthRate):
    """c(x) = a x, with closed-form flow"""

    form = 'linear'
    closed_form = True

    def __init__(self, a):
        self.a = float(a)

    def relative_rate(self, x):
        return _fill(x, self.a)

    def sup_relative_rate(self):
        return self.a

    def closed_travel_time(self, x, y):
        return math.log(y / x) / self.a

    def closed_advance(self, x, t):
        return x * math.exp(self.a * t)

    def to_config(self):
        return {'form': self.form, 'params': {'a': self.a}}


class RationalGrowth(GrowthRate):
    """
    c(x)/x = scale * P(x) / Q(x), coefficients in ascending powers.
    With sup_relative_rate the scale is chosen so that sup c/x equals it.
    """

    form = 'rational'

    def __init__(self, numerator, denominator=(1.0,), scale=1.0, sup_relative_rate=None):
        self.numerator = np.trim_zeros(np.asarray(numerator, dtype=float), 'b')
        self.denominator = np.trim_zeros(np.asarray(denominator, dtype=float), 'b')
        if self.numerator.size == 0 or self.denominator.size == 0:
            raise ConfigError("rational growth needs nonzero numerator and denominator")
        self.scale = 1.0
        self.target_sup = sup_relative_rate
        if sup_relative_rate is not None:
            self.scale = float(sup_relative_rate) / GrowthRate.sup_relative_rate(self)
            self._sup_cache = float(sup_relative_rate)
        else:
            self.scale = float(scale)

    def relative_rate(self, x):
        return self.scale * P.polyval(x, self.numerator) / P.polyval(x, self.denominator)

    def is_bounded(self):
        # degree at infinity and order of vanishing at zero
        def low(coefs):
            return int(np.flatnonzero(coefs)[0])
        return (len(self.numerator) <= len(self.denominator)
                and low(self.denominator) <= low(self.numerator))

    def to_config(self):
        params = {'numerator': self.numerator.tolist(),
                  'denominator': self.denominator.tolist()}
        if self.target_sup is not None:
            params['sup_relative_rate'] = self.target_sup
        else:
            params['scale'] = self.scale
        return {'form': self.form, 'params': params}


class TabulatedGrowth(GrowthRate):
    """Monotone cubic (PCHIP) table of c; c(x)/x frozen outside the table"""

    form = 'tabulated'

    def __init__(self, x, c):
        self.x = np.asarray(x, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if self.x.ndim != 1 or self.x.size < 2 or self.x.shape != self.c.shape:
            raise ConfigError("tabulated growth needs matching x and c arrays of length >= 2")
        if np.any(np.diff(self.x) <= 0) or self.x[0] <= 0:
            raise ConfigError("tabulated growth needs strictly increasing positive x")
        self._interp = PchipInterpolator(self.x, self.c, extrapolate=False)

    def relative_rate(self, x):
        clipped = np.clip(x, self.x[0], self.x[-1])
        value = self._interp(clipped) / clipped
        return float(value) if np.ndim(x) == 0 else value

    def _sup_search_range(self):
        return self.x[0], self.x[-1]

    def covers(self, lo, hi):
        return self.x[0] <= lo and self.x[-1] >= hi

    def to_config(self):
        return {'form': self.form, 'params': {'x': self.x.tolist(), 'c': self.c.tolist()}}


GROWTH_FORMS = {
    'linear': LinearGrowth,
    'rational': RationalGrowth,
    'tabulated': TabulatedGrowth,
}


# ---------------------------------------------------------------------------
# Flow primitives
# ---------------------------------------------------------------------------

class FlowClock:
    """
    Cached clock tau(u) = ∫ du / r(e^u) on a log-mass grid.

    Node values come from panel-wise adaptive quadrature; in between, cubic
    Hermite splines with the exact slopes 1/r (forward) and r (inverse).
    Inversion is polished by Newton steps on the forward spline so that
    travel time and flow map are inverse to rounding.
    """

    def __init__(self, growth, x_lo, x_hi, nodes=None):
        nodes = nodes or FLOW_CLOCK['nodes']
        u = np.linspace(math.log(x_lo), math.log(x_hi), nodes)
        rate = growth.relative_rate(np.exp(u))
        panels = [_quad(lambda s: 1.0 / float(growth.relative_rate(math.exp(s))), u[i], u[i + 1])
                  for i in range(nodes - 1)]
        tau = np.concatenate([[0.0], np.cumsum(panels)])
        self.u_lo, self.u_hi = float(u[0]), float(u[-1])
        self.tau_max = float(tau[-1])
        self.forward = CubicHermiteSpline(u, tau, 1.0 / rate)
        self.inverse = CubicHermiteSpline(tau, u, rate)

    def covers(self, x):
        return self.u_lo <= math.log(x) <= self.u_hi

    def tau(self, u):
        return float(self.forward(u))

    def invert(self, target):
        u = float(self.inverse(target))
        for _ in range(FLOW_CLOCK['newton_steps']):
            u -= (self.tau(u) - target) / float(self.forward(u, 1))
            u = min(max(u, self.u_lo), self.u_hi)
        return u


class Flow:
    """Deterministic motion dx/dt = c(x) for one model"""

    def __init__(self, growth, x_min, x_max):
        self.growth = growth
        self.x_min = x_min
        self.x_max = x_max
        self._clock = None

    @property
    def clock(self):
        if self._clock is None and not self.growth.closed_form:
            extension = FLOW_CLOCK['extension']
            self._clock = FlowClock(self.growth, self.x_min / extension, self.x_max * extension)
        return self._clock

    def prepare(self):
        """Build the clock eagerly (before models are shipped to workers)"""
        return self.clock

    def _quad_travel_time(self, x, y):
        growth = self.growth
        return _quad(lambda s: 1.0 / float(growth.relative_rate(math.exp(s))),
                     math.log(x), math.log(y))

    def travel_time(self, x, y):
        if x == y:
            return 0.0
        if self.growth.closed_form:
            return self.growth.closed_travel_time(x, y)
        clock = self.clock
        if clock.covers(x) and clock.covers(y):
            return clock.tau(math.log(y)) - clock.tau(math.log(x))
        return self._quad_travel_time(x, y)

    def advance(self, x, t):
        if t == 0:
            return x
        if self.growth.closed_form:
            return self.growth.closed_advance(x, t)
        clock = self.clock
        if clock.covers(x):
            target = clock.tau(math.log(x)) + t
            if target <= clock.tau_max:
                return math.exp(clock.invert(target))
        # outside the clock: bracket with the rate bound, x e^{Mt} is always far enough
        bound = self.growth.sup_relative_rate() * t
        upper = bound * 1.01 + 1e-12
        while self._quad_travel_time(x, x * math.exp(upper)) < t:
            upper *= 2.0
        v = optimize.brentq(lambda v: self._quad_travel_time(x, x * math.exp(v)) - t,
                            0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return x * math.exp(v)


# ---------------------------------------------------------------------------
# Fragmentation kernels
# ---------------------------------------------------------------------------

class ConstantRate:
    form = 'constant'

    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        return _fill(x, self.value)

    def to_config(self):
        return {'form': self.form, 'value': self.value}


class ExpressionRate:
    form = 'expression'

    def __init__(self, expression):
        self.expression = Expression(expression, ('x',))

    def __call__(self, x):
        return self.expression(x)

    def to_config(self):
        return {'form': self.form, 'expression': self.expression.source}


class PowerFragments:
    """p(u) = (alpha + 2) u^alpha; alpha = 0 is uniform binary splitting, p = 2"""

    form = 'power'

    def __init__(self, alpha=0.0):
        self.alpha = float(alpha)
        if self.alpha <= -2:
            raise ConfigError("power fragments need alpha > -2")

    def pdf(self, u):
        return (self.alpha + 2.0) * np.power(u, self.alpha)

    def sample(self, generator):
        # size-biased law u p(u) is Beta(alpha + 2, 1)
        return generator.beta(self.alpha + 2.0, 1.0)

    def to_config(self):
        return {'form': self.form, 'alpha': self.alpha}


class BetaFragments:
    """p(u) = Beta(a, b) density scaled by (a + b)/a so that ∫ p(u) u du = 1"""

    form = 'beta'

    def __init__(self, a, b):
        self.a = float(a)
        self.b = float(b)

    def pdf(self, u):
        return stats.beta.pdf(u, self.a, self.b) * (self.a + self.b) / self.a

    def sample(self, generator):
        return generator.beta(self.a + 1.0, self.b)

    def to_config(self):
        return {'form': self.form, 'a': self.a, 'b': self.b}


class ExpressionFragments:
    """User density p(u); sizes drawn by inverse CDF on a fine table"""

    form = 'expression'

    def __init__(self, expression, table_points=4097):
        self.expression = Expression(expression, ('u',))
        u = np.linspace(0.0, 1.0, table_points)
        u[0] = 1e-12
        weights = u * np.clip(self.expression(u), 0.0, None)
        cdf = integrate.cumulative_trapezoid(weights, u, initial=0.0)
        if cdf[-1] <= 0:
            raise ConfigError(f"fragment density '{expression}' has no mass on (0, 1)")
        self._u = u
        self._cdf = cdf / cdf[-1]

    def pdf(self, u):
        return self.expression(u)

    def sample(self, generator):
        return float(np.interp(generator.random(), self._cdf, self._u))

    def to_config(self):
        return {'form': self.form, 'expression': self.expression.source}


FRAGMENT_FORMS = {
    'power': PowerFragments,
    'beta': BetaFragments,
    'expression': ExpressionFragments,
}

RATE_FORMS = {
    'constant': ConstantRate,
    'expression': ExpressionRate,
}


class FragmentationKernel:
    """k(x, y) for 0 < y < x with total rate K and mass-weighted kernel k̄ = (y/x) k"""

    form = None

    def total_rate(self, x):
        raise NotImplementedError

    def density(self, x, y):
        raise NotImplementedError

    def mass_weighted(self, x, y):
        return (y / x) * self.density(x, y)

    def target_density(self, x, y):
        rate = self.total_rate(x)
        if rate == 0:
            return 0.0 * y
        return self.mass_weighted(x, y) / rate

    def conserved_rate(self, x):
        """∫_0^x (y/x) k(x, y) dy by adaptive quadrature"""
        return _quad(lambda y: float(self.mass_weighted(x, y)), 0.0, x)

    def constant_rate(self):
        """K when it does not depend on x, else None"""
        return None

    def sample_target(self, x, generator):
        raise NotImplementedError


class SelfSimilarKernel(FragmentationKernel):
    """k(x, y) = K(x) p(y/x) / x"""

    form = 'self_similar'

    def __init__(self, total_rate, fragments):
        self.rate = total_rate
        self.fragments = fragments

    def total_rate(self, x):
        return self.rate(x)

    def density(self, x, y):
        return self.rate(x) * self.fragments.pdf(y / x) / x

    def fragment_moment(self):
        """∫_0^1 p(u) u du (equals 1 for a conservative kernel)"""
        return _quad(lambda u: float(self.fragments.pdf(u)) * u, 0.0, 1.0)

    def conserved_rate(self, x):
        return self.rate(x) * self.fragment_moment()

    def constant_rate(self):
        if isinstance(self.rate, ConstantRate):
            return self.rate.value
        return None

    def sample_target(self, x, generator):
        return x * self.fragments.sample(generator)

    def to_config(self):
        return {'form': self.form,
                'params': {'total_rate': self.rate.to_config(),
                           'fragment': self.fragments.to_config()}}


class GeneralKernel(FragmentationKernel):
    """Density k(x, y) as an expression; K supplied or derived by quadrature"""

    form = 'general'

    def __init__(self, density, total_rate=None, table_points=1025):
        self.density_expression = Expression(density, ('x', 'y'))
        self.rate_expression = Expression(total_rate, ('x',)) if total_rate is not None else None
        self.table_points = int(table_points)

    def density(self, x, y):
        return self.density_expression(x, y)

    def total_rate(self, x):
        if self.rate_expression is not None:
            return self.rate_expression(x)
        if np.ndim(x) == 0:
            return self.conserved_rate(x)
        return np.array([self.conserved_rate(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def sample_target(self, x, generator):
        u = np.linspace(0.0, 1.0, self.table_points)
        u[0] = 1e-12
        weights = np.clip(u * self.density(x, x * u) * x, 0.0, None)
        cdf = integrate.cumulative_trapezoid(weights, u, initial=0.0)
        return x * float(np.interp(generator.random() * cdf[-1], cdf, u))

    def to_config(self):
        params = {'density': self.density_expression.source}
        if self.rate_expression is not None:
            params['total_rate'] = self.rate_expression.source
        return {'form': self.form, 'params': params}


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

class ModelSpec:
    """
    Growth rate, fragmentation kernel and working domain [x_min, x_max].
    The validated flag is set by validate_model only.
    """

    def __init__(self, growth, kernel, x_min, x_max, name='model'):
        if not (0 < x_min < x_max):
            raise DomainError(f"working domain needs 0 < x_min < x_max, got [{x_min}, {x_max}]")
        self.growth = growth
        self.kernel = kernel
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.name = name
        self.flow = Flow(growth, self.x_min, self.x_max)
        self._validated = False
        self._thinning_bound = None

    @property
    def working_domain(self):
        return self.x_min, self.x_max

    @property
    def is_validated(self):
        return self._validated

    def validation_grid(self, points=None):
        return np.geomspace(self.x_min, self.x_max, points or VALIDATION['grid_points'])

    def to_config(self):
        return {'name': self.name,
                'growth': self.growth.to_config(),
                'kernel': self.kernel.to_config(),
                'domain': {'x_min': self.x_min, 'x_max': self.x_max}}

    @property
    def model_hash(self):
        canonical = json.dumps(self.to_config(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @property
    def q_c(self):
        """1 + sup c(x)/x"""
        return 1.0 + self.growth.sup_relative_rate()

    def thinning_bound(self):
        """K̄: sup K on the extended validation grid times the safety factor"""
        if self._thinning_bound is None:
            extension = VALIDATION['bound_extension']
            grid = np.geomspace(self.x_min / extension, self.x_max * extension,
                                4 * VALIDATION['grid_points'])
            sup_rate = float(np.max(self.kernel.total_rate(grid)))
            self._thinning_bound = sup_rate * VALIDATION['thinning_safety_factor']
        return self._thinning_bound

    def rate_bound_growth(self, points=64):
        """
        Relative rise of sup K when sampling one more decade beyond each end of
        the extended grid. A bounded rate gives ~0; K(x) = x gives ~9.
        """
        extension = VALIDATION['bound_extension']
        lo, hi = self.x_min / extension, self.x_max * extension
        outer = np.concatenate([np.geomspace(lo / 10.0, lo, points),
                                np.geomspace(hi, 10.0 * hi, points)])
        inner_sup = self.thinning_bound() / VALIDATION['thinning_safety_factor']
        outer_sup = float(np.max(self.kernel.total_rate(outer)))
        if not np.isfinite(outer_sup):
            return math.inf
        return max(outer_sup - inner_sup, 0.0) / max(inner_sup, 1e-300)

    def __repr__(self):
        return (f"ModelSpec({self.name!r}, growth={self.growth.form}, kernel={self.kernel.form}, "
                f"domain=[{self.x_min:g}, {self.x_max:g}])")


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    message: str = ''
    advisory: bool = False


@dataclass
class ValidationReport:
    model_name: str
    checks: list = field(default_factory=list)

    @property
    def valid(self):
        return all(check.passed for check in self.checks if not check.advisory)

    def failed_checks(self):
        return [check for check in self.checks if not check.passed and not check.advisory]

    def check(self, name):
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_frame(self):
        return pd.DataFrame([vars(check) for check in self.checks])

    def to_dict(self):
        return {'model': self.model_name, 'valid': self.valid,
                'checks': [vars(check) for check in self.checks]}


def _check_growth(spec, grid):
    checks = []
    rates = spec.growth.relative_rate(grid)
    min_rate = float(np.min(rates))
    positive = bool(np.all(np.isfinite(rates)) and min_rate > 0)
    checks.append(CheckResult('growth_positive', positive, min_rate,
                              'min c(x)/x on the validation grid'))
    sup_rate = spec.growth.sup_relative_rate()
    bounded = bool(spec.growth.is_bounded() and np.isfinite(sup_rate))
    checks.append(CheckResult('growth_bounded', bounded, sup_rate, 'sup c(x)/x'))
    return checks


def _check_kernel(spec, grid):
    kernel = spec.kernel
    checks = []
    tolerance = VALIDATION['conservation_tolerance']
    if isinstance(kernel, SelfSimilarKernel):
        u = np.linspace(0.0, 1.0, 2049)[1:]
        pdf = kernel.fragments.pdf(u)
        nonnegative = bool(np.all(np.isfinite(pdf)) and np.all(pdf >= 0))
        checks.append(CheckResult('kernel_nonnegative', nonnegative, float(np.min(pdf)),
                                  'min p(u) on (0, 1]'))
        moment = kernel.fragment_moment()
        moment_residual = abs(moment - 1.0)
        checks.append(CheckResult('fragment_density', moment_residual < VALIDATION['fragment_tolerance'],
                                  moment_residual, '|∫ p(u) u du - 1|'))
        rates = kernel.total_rate(grid)
        # K(x) ∫ p(u) u du = K(x) exactly when the moment is one
        residual = moment_residual if np.any(rates > 0) else 0.0
    else:
        ys = np.outer(grid, np.linspace(0.0, 1.0, 65)[1:])
        values = kernel.density(grid[:, None], ys)
        nonnegative = bool(np.all(np.isfinite(values)) and np.all(values >= 0))
        checks.append(CheckResult('kernel_nonnegative', nonnegative, float(np.min(values)),
                                  'min k(x, y) on sampled pairs'))
        rates = np.asarray(kernel.total_rate(grid), dtype=float)
        conserved = np.array([kernel.conserved_rate(float(x)) for x in grid])
        scale = np.maximum(np.abs(rates), 1e-300)
        residual = float(np.max(np.abs(conserved - rates) / scale))
    checks.append(CheckResult('conservation', residual < tolerance, residual,
                              'max relative |∫ (y/x) k(x,y) dy - K(x)|'))
    bound = spec.thinning_bound()
    rise = spec.rate_bound_growth()
    bounded = bool(np.isfinite(bound) and np.all(np.asarray(rates) >= 0)
                   and rise <= VALIDATION['bound_growth_tolerance'])
    message = f'thinning bound K̄, sup K rises {rise:.3g} one decade further out'
    checks.append(CheckResult('total_rate_bounded', bounded, bound, message))
    return checks


def _check_irreducibility(spec, grid):
    """Advisory: from every sampled x some state at or above x can jump below x"""
    kernel = spec.kernel
    lookahead = VALIDATION['irreducibility_lookahead']
    fractions = np.array([0.1, 0.5, 0.9, 0.99])
    misses = 0
    for i, x in enumerate(grid):
        above = grid[i:i + lookahead + 1]
        reached = False
        for z in above:
            if kernel.total_rate(float(z)) <= 0:
                continue
            if np.any(kernel.mass_weighted(float(z), fractions * x) > 0):
                reached = True
                break
        if not reached:
            misses += 1
    passed = misses == 0
    message = 'kernel support reaches below every sampled x'
    if not passed:
        message = f'{misses} sampled points with no reachable mass below them'
        warnings.warn(f"irreducibility heuristic failed for model '{spec.name}': {message}",
                      IrreducibilityWarning)
    return CheckResult('irreducibility', passed, float(misses), message, advisory=True)


def validate_model(spec, verbose=False):
    """Check positivity/boundedness of c/x, conservation, bounded K and irreducibility"""
    grid = spec.validation_grid()
    report = ValidationReport(spec.name)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        report.checks.extend(_check_growth(spec, grid))
        report.checks.extend(_check_kernel(spec, grid))
        report.checks.append(_check_irreducibility(spec, grid))
    spec._validated = report.valid
    if verbose:
        for check in report.checks:
            mark = '✅' if check.passed else ('⚠️' if check.advisory else '❌')
            print(f"   {mark} {check.name}: {check.residual:.3e}  {check.message}")
    return report


def require_valid(spec, verbose=False):
    """Validate and raise ModelValidationError naming the failing checks"""
    report = validate_model(spec, verbose=verbose)
    if not report.valid:
        raise ModelValidationError(report)
    return spec


def _check_mass(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be a positive finite mass, got {value}")


def travel_time(spec, x, y):
    """s(x, y) = ∫_x^y dz / c(z)"""
    _check_mass('x', x)
    _check_mass('y', y)
    if y < x:
        raise DomainError(f"travel_time needs x <= y (flow is upward only), got x={x}, y={y}")
    return spec.flow.travel_time(x, y)


def flow_map(spec, x, t):
    """Position at time t of the flow started at x; clamped at x_max with a warning"""
    _check_mass('x', x)
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    y = spec.flow.advance(x, t)
    if y > spec.x_max:
        warnings.warn(f"flow from x={x:g} over t={t:g} reaches {y:.6g} beyond x_max={spec.x_max:g}; "
                      f"clamped", FlowOverflowWarning)
        return spec.x_max
    return y


def no_jump_probability(spec, x, y):
    """p(x, y) = exp(-∫_x^y K(z)/c(z) dz)"""
    _check_mass('x', x)
    _check_mass('y', y)
    if y < x:
        raise DomainError(f"no_jump_probability needs x <= y, got x={x}, y={y}")
    if x == y:
        return 1.0
    constant = spec.kernel.constant_rate()
    if constant is not None:
        if constant == 0:
            return 1.0
        return math.exp(-constant * spec.flow.travel_time(x, y))
    kernel, growth = spec.kernel, spec.growth
    exponent = _quad(lambda s: float(kernel.total_rate(math.exp(s)))
                     / float(growth.relative_rate(math.exp(s))),
                     math.log(x), math.log(y))
    return math.exp(-exponent)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _construct(cls, params, where):
    if not isinstance(params, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(params).__name__}")
    try:
        return cls(**params)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}")


def _split_form(node, where, allowed):
    if not isinstance(node, dict) or 'form' not in node:
        raise ConfigError(f"{where} needs a 'form' key")
    form = node['form']
    if form not in allowed:
        raise ConfigError(f"{where}.form '{form}' unknown; choose from {sorted(allowed)}")
    return form, {key: value for key, value in node.items() if key != 'form'}


def _build_growth(node):
    form, rest = _split_form(node, 'growth', GROWTH_FORMS)
    unknown = set(rest) - {'params'}
    if unknown:
        raise ConfigError(f"unknown keys in growth: {sorted(unknown)}")
    return _construct(GROWTH_FORMS[form], rest.get('params', {}), 'growth.params')


def _build_kernel(node):
    form, rest = _split_form(node, 'kernel', {'self_similar', 'general'})
    unknown = set(rest) - {'params'}
    if unknown:
        raise ConfigError(f"unknown keys in kernel: {sorted(unknown)}")
    params = dict(rest.get('params', {}))
    if form == 'general':
        return _construct(GeneralKernel, params, 'kernel.params')
    unknown = set(params) - {'total_rate', 'fragment'}
    if unknown:
        raise ConfigError(f"unknown keys in kernel.params: {sorted(unknown)}")
    rate_node = params.get('total_rate', 1.0)
    if isinstance(rate_node, (int, float)):
        rate = ConstantRate(rate_node)
    else:
        rate_form, rate_params = _split_form(rate_node, 'kernel.params.total_rate', RATE_FORMS)
        rate = _construct(RATE_FORMS[rate_form], rate_params, 'kernel.params.total_rate')
    fragment_form, fragment_params = _split_form(params.get('fragment', {'form': 'power'}),
                                                 'kernel.params.fragment', FRAGMENT_FORMS)
    fragments = _construct(FRAGMENT_FORMS[fragment_form], fragment_params,
                           'kernel.params.fragment')
    return SelfSimilarKernel(rate, fragments)


MODEL_KEYS = ('name', 'growth', 'kernel', 'domain')


def build_model(config):
    """ModelSpec from the model sections of a configuration tree"""
    for key in ('growth', 'kernel', 'domain'):
        if key not in config:
            raise ConfigError(f"model configuration lacks '{key}'")
    domain = config['domain']
    unknown = set(domain) - {'x_min', 'x_max'}
    if unknown:
        raise ConfigError(f"unknown keys in domain: {sorted(unknown)}")
    growth = _build_growth(config['growth'])
    kernel = _build_kernel(config['kernel'])
    return ModelSpec(growth, kernel, float(domain['x_min']), float(domain['x_max']),
                     name=config.get('name', 'model'))


def load_model_config(source):
    """Build a ModelSpec from a JSON file path or an already parsed dict"""
    if isinstance(source, dict):
        config = source
    else:
        with open(source) as f:
            config = json.load(f)
    extra = {key: value for key, value in config.items() if key in MODEL_KEYS}
    return build_model(extra)
