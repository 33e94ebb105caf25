"""
Feynman-Kac Estimators
Monte Carlo semigroup values, hitting-time Laplace transforms and tilted-process diagnostics
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from config import MONTE_CARLO
from growth_fragmentation_model import ConfigError, DomainError
from pdmp_simulator import RngStream, StopReason, StoppingSpec, simulate_batch


class ExtrapolationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MCEstimate:
    """Mean and standard error of one Monte Carlo functional with its seed provenance"""
    mean: float
    std_error: float
    n_paths: int
    censored_fraction: float
    seed: RngStream
    truncated_fraction: float = 0.0

    @property
    def relative_se(self):
        """inf for a zero or non-finite mean"""
        if self.mean == 0 or not math.isfinite(self.mean):
            return math.inf
        return self.std_error / abs(self.mean)

    @property
    def reliable(self):
        return (math.isfinite(self.mean)
                and self.relative_se <= MONTE_CARLO['unreliable_relative_se'])

    def significant_above(self, level, k=None):
        k = MONTE_CARLO['significance'] if k is None else k
        return self.reliable and self.mean - level > k * self.std_error

    def significant_below(self, level, k=None):
        k = MONTE_CARLO['significance'] if k is None else k
        return self.reliable and level - self.mean > k * self.std_error

    def to_dict(self):
        return {'mean': self.mean, 'se': self.std_error, 'n': self.n_paths,
                'censored_fraction': self.censored_fraction,
                'truncated_fraction': self.truncated_fraction,
                'reliable': self.reliable,
                'seed': self.seed.master_seed, 'first_path_index': self.seed.path_index}


def summarize(values, seed, censored_fraction=0.0, truncated_fraction=0.0):
    """MCEstimate with se = sample std / sqrt(n)"""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return MCEstimate(math.nan, math.inf, 0, censored_fraction, seed, truncated_fraction)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(mean, se, n, censored_fraction, seed, truncated_fraction)


@dataclass(frozen=True)
class TestFunction:
    """
    Test functions f for T_t f. Compactly supported except identity; the
    reciprocal helper wraps another function as f(x)/x.
    """
    __test__ = False  # not a pytest class

    form: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    base: Optional['TestFunction'] = None

    FORMS = ('indicator', 'tent', 'bump', 'identity', 'reciprocal')

    def __post_init__(self):
        if self.form not in self.FORMS:
            raise ConfigError(f"unknown test function form '{self.form}'")
        if self.form in ('indicator', 'tent', 'bump'):
            if self.lower is None or self.upper is None or not 0 < self.lower < self.upper:
                raise ConfigError(f"{self.form} needs 0 < lower < upper")
        if self.form == 'reciprocal' and self.base is None:
            raise ConfigError("reciprocal helper needs a base function")

    @classmethod
    def indicator(cls, lower, upper):
        return cls('indicator', lower, upper)

    @classmethod
    def tent(cls, lower, upper):
        return cls('tent', lower, upper)

    @classmethod
    def bump(cls, lower, upper):
        return cls('bump', lower, upper)

    @classmethod
    def identity(cls):
        return cls('identity')

    @classmethod
    def reciprocal(cls, base):
        return cls('reciprocal', base=base)

    @classmethod
    def from_config(cls, node):
        node = dict(node)
        form = node.pop('form', None)
        if form == 'reciprocal':
            return cls.reciprocal(cls.from_config(node.pop('base')))
        unknown = set(node) - {'lower', 'upper'}
        if unknown:
            raise ConfigError(f"unknown keys in test function: {sorted(unknown)}")
        return cls(form, node.get('lower'), node.get('upper'))

    @property
    def support(self):
        if self.form == 'identity':
            return None
        if self.form == 'reciprocal':
            return self.base.support
        return self.lower, self.upper

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == 'identity':
            value = x.copy()
        elif self.form == 'reciprocal':
            value = self.base(x) / x
        elif self.form == 'indicator':
            value = ((x >= self.lower) & (x <= self.upper)).astype(float)
        elif self.form == 'tent':
            middle = 0.5 * (self.lower + self.upper)
            half = 0.5 * (self.upper - self.lower)
            value = np.clip(1.0 - np.abs(x - middle) / half, 0.0, None)
        else:
            s = (2.0 * x - self.lower - self.upper) / (self.upper - self.lower)
            inside = np.abs(s) < 1
            value = np.zeros_like(x)
            value[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return float(value) if value.ndim == 0 else value

    def to_config(self):
        if self.form == 'reciprocal':
            return {'form': self.form, 'base': self.base.to_config()}
        if self.form == 'identity':
            return {'form': self.form}
        return {'form': self.form, 'lower': self.lower, 'upper': self.upper}


# ---------------------------------------------------------------------------
# Semigroup
# ---------------------------------------------------------------------------

def _horizon_values(batch):
    kept = batch[batch['stop_reason'] != StopReason.MAX_EVENTS.value]
    censored = 1.0 - len(kept) / len(batch) if len(batch) else 0.0
    return kept, censored


def estimate_semigroup(spec, x, t, f, n, rng, workers=None):
    """T_t f(x) = x E_x[ℰ_t f(X_t)/X_t]"""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return MCEstimate(float(f(x)), 0.0, int(n), 0.0, rng)
    batch = simulate_batch(spec, x, StoppingSpec(horizon=t), rng.master_seed, n,
                           start_index=rng.path_index, workers=workers)
    kept, censored = _horizon_values(batch)
    positions = kept['final_position'].to_numpy()
    values = x * np.exp(kept['log_weight'].to_numpy()) * f(positions) / positions
    return summarize(values, rng, censored_fraction=censored)


def semigroup_curve(spec, x, times, f, n, rng, workers=None):
    """T_t f(x) over several t on the same substreams (paths share prefixes)"""
    rows = []
    for t in times:
        estimate = estimate_semigroup(spec, x, t, f, n, rng, workers=workers)
        rows.append({'x': x, 't': t, **estimate.to_dict()})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Hitting-time Laplace transforms on common random numbers
# ---------------------------------------------------------------------------

@dataclass
class HittingSample:
    """
    Stored (hit, H, ln ℰ_H) per path. Any q is evaluated by reweighting the
    same paths, which keeps q ↦ L̂(q) monotone and convex path by path.
    """
    spec: object
    x: float
    y: float
    stop: StoppingSpec
    seed: RngStream
    summaries: pd.DataFrame = field(repr=False)

    @property
    def t_max(self):
        return self.stop.horizon

    def _kept(self):
        return self.summaries[self.summaries['stop_reason'] != StopReason.MAX_EVENTS.value]

    @property
    def n_paths(self):
        return len(self._kept())

    def _arrays(self):
        kept = self._kept()
        hit = (kept['stop_reason'] == StopReason.HIT_TARGET.value).to_numpy()
        return hit, kept['final_time'].to_numpy(), kept['log_weight'].to_numpy()

    @property
    def censored_fraction(self):
        hit, _, _ = self._arrays()
        return float(1.0 - hit.mean()) if hit.size else 0.0

    @property
    def truncated_fraction(self):
        kept = self._kept()
        if not len(kept):
            return 0.0
        truncated = (kept['stop_reason'] == StopReason.HORIZON.value).sum()
        excluded = len(self.summaries) - len(kept)
        return float((truncated + excluded) / len(self.summaries))

    def _weights(self, q):
        hit, H, log_weight = self._arrays()
        exponent = np.where(hit, -q * np.where(hit, H, 0.0) + np.where(hit, log_weight, 0.0), -np.inf)
        with np.errstate(over='ignore'):
            return hit, H, np.exp(np.minimum(exponent, 700.0))

    def laplace(self, q):
        """L̂(q): mean of e^{-qH} ℰ_H on hits, zero otherwise"""
        _, _, weights = self._weights(q)
        return summarize(weights, self.seed, self.censored_fraction, self.truncated_fraction)

    def laplace_derivative(self, q):
        """-L̂'(q): mean of H e^{-qH} ℰ_H on hits"""
        hit, H, weights = self._weights(q)
        values = np.where(hit, np.where(hit, H, 0.0) * weights, 0.0)
        return summarize(values, self.seed, self.censored_fraction, self.truncated_fraction)

    def tail_ratio(self, q):
        """Contribution of hits in the last tenth of the horizon, in units of SE"""
        if self.t_max is None or math.isinf(self.t_max):
            return 0.0
        hit, H, weights = self._weights(q)
        late = hit & (H >= (1.0 - MONTE_CARLO['tail_fraction']) * self.t_max)
        estimate = self.laplace(q)
        contribution = float(np.sum(weights[late]) / max(weights.size, 1))
        if estimate.std_error == 0:
            return 0.0 if contribution == 0 else math.inf
        return contribution / estimate.std_error

    def extend(self, n_total, workers=None):
        """Same paths plus new indices up to n_total (nested samples)"""
        have = len(self.summaries)
        if n_total <= have:
            return self
        extra = simulate_batch(self.spec, self.x, self.stop, self.seed.master_seed, n_total - have,
                               start_index=self.seed.path_index + have, workers=workers)
        summaries = pd.concat([self.summaries, extra], ignore_index=True)
        return replace(self, summaries=summaries)

    def curve(self, q_grid):
        rows = []
        for q in q_grid:
            estimate = self.laplace(q)
            rows.append({'x': self.x, 'y': self.y, 'q': q, 'mean': estimate.mean,
                         'se': estimate.std_error, 'n': estimate.n_paths,
                         'censored_fraction': estimate.censored_fraction,
                         'reliable': estimate.reliable, 'seed': self.seed.master_seed})
        return pd.DataFrame(rows)


def _hitting_stop(y, stop):
    if stop is None:
        return StoppingSpec(hit_target=y)
    if stop.hit_target is not None and stop.hit_target != y:
        raise DomainError(f"stop.hit_target={stop.hit_target} differs from y={y}")
    return replace(stop, hit_target=y)


def choose_horizon(spec, x, y, stop, q_probe, rng, n=None, workers=None, verbose=False):
    """
    Truncation horizon T_max: 10 × median pilot hitting time, doubled until the
    last tenth of the horizon contributes less than 0.1 SE (SE scaled to the
    final sample size n) at q_probe.
    """
    pilot_paths = MONTE_CARLO['pilot_paths']
    n = n or MONTE_CARLO['n_paths']
    pilot_stop = stop.with_horizon(MONTE_CARLO['pilot_horizon'])
    pilot = simulate_batch(spec, x, pilot_stop, rng.master_seed, pilot_paths,
                           start_index=rng.path_index, workers=workers)
    hits = pilot.loc[pilot['stop_reason'] == StopReason.HIT_TARGET.value, 'final_time']
    if len(hits):
        t_max = MONTE_CARLO['horizon_factor'] * float(np.median(hits))
    else:
        t_max = MONTE_CARLO['pilot_horizon']
    t_max = max(t_max, 1e-6)
    for doubling in range(MONTE_CARLO['max_doublings'] + 1):
        sample = HittingSample(spec, x, y, stop.with_horizon(t_max), rng,
                               simulate_batch(spec, x, stop.with_horizon(t_max), rng.master_seed,
                                              pilot_paths, start_index=rng.path_index,
                                              workers=workers))
        ratio = sample.tail_ratio(q_probe) * math.sqrt(n / pilot_paths)
        if verbose:
            print(f"   📊 T_max={t_max:.4g}: tail/SE={ratio:.3g}")
        if ratio < MONTE_CARLO['tail_se_ratio']:
            break
        if doubling < MONTE_CARLO['max_doublings']:
            t_max *= 2.0
    return t_max


def sample_hitting(spec, x, y, stop=None, n=None, rng=None, q_probe=None, workers=None,
                   verbose=False):
    """
    HittingSample for H(y) from x. Censoring clauses of stop are kept; without
    a horizon in stop the truncation horizon is chosen adaptively at q_probe.
    """
    n = n or MONTE_CARLO['n_paths']
    rng = rng or RngStream(0)
    stop = _hitting_stop(y, stop)
    if q_probe is None:
        q_probe = spec.growth.sup_relative_rate()
    if stop.horizon is None:
        stop = stop.with_horizon(choose_horizon(spec, x, y, stop, q_probe, rng, n=n,
                                                workers=workers, verbose=verbose))
    summaries = simulate_batch(spec, x, stop, rng.master_seed, n, start_index=rng.path_index,
                               workers=workers)
    return HittingSample(spec, x, y, stop, rng, summaries)


def estimate_laplace(spec, x, y, q, stop, n, rng, workers=None):
    """E_x[e^{-qH(y)} ℰ_{H(y)}; H(y) before censoring]"""
    return sample_hitting(spec, x, y, stop, n, rng, q_probe=q, workers=workers).laplace(q)


def estimate_laplace_derivative(spec, x, y, q, stop, n, rng, workers=None):
    """-L'(q) = E_x[H e^{-qH} ℰ_H; H before censoring]"""
    return sample_hitting(spec, x, y, stop, n, rng, q_probe=q, workers=workers).laplace_derivative(q)


def estimate_return_probability(spec, x, y, horizon, n, rng, stop=None, workers=None):
    """Empirical P_x(H(y) < horizon)"""
    stop = _hitting_stop(y, stop).with_horizon(horizon)
    batch = simulate_batch(spec, x, stop, rng.master_seed, n, start_index=rng.path_index,
                           workers=workers)
    hits = (batch['stop_reason'] == StopReason.HIT_TARGET.value).to_numpy().astype(float)
    return summarize(hits, rng)


# ---------------------------------------------------------------------------
# ℓ tables and tilted diagnostics
# ---------------------------------------------------------------------------

@dataclass
class LaplaceTable:
    """ℓ(z) = L_{z, anchor}(q) on a grid, interpolated linearly in log z"""
    anchor: float
    q: float
    x: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray

    def covers(self, z):
        z = np.asarray(z, dtype=float)
        return bool(np.all((z >= self.x[0]) & (z <= self.x[-1])))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if z.size and not self.covers(z):
            warnings.warn(f"ℓ table on [{self.x[0]:g}, {self.x[-1]:g}] extrapolated "
                          f"to [{z.min():.4g}, {z.max():.4g}]", ExtrapolationWarning)
        value = np.interp(np.log(z), np.log(self.x), self.values)
        return float(value) if value.ndim == 0 else value

    def to_frame(self):
        return pd.DataFrame({'x': self.x, 'ell': self.values, 'se': self.std_errors})


def tabulate_laplace(spec, anchor, q, grid, n, rng, stop=None, workers=None):
    """ℓ(·) = L_{·,anchor}(q) estimated at every grid point"""
    grid = np.asarray(grid, dtype=float)
    values, errors = [], []
    for z in grid:
        estimate = estimate_laplace(spec, float(z), anchor, q, stop, n, rng, workers=workers)
        values.append(estimate.mean)
        errors.append(estimate.std_error)
    return LaplaceTable(anchor, q, grid, np.array(values), np.array(errors))


def _horizon_batch(spec, x, t, n, rng, workers):
    batch = simulate_batch(spec, x, StoppingSpec(horizon=t), rng.master_seed, n,
                           start_index=rng.path_index, workers=workers)
    kept, censored = _horizon_values(batch)
    return kept['final_position'].to_numpy(), kept['log_weight'].to_numpy(), censored


def tilted_expectation(spec, x, t, f, lambda_hat, ell, n, rng, workers=None):
    """
    E_x[e^{-λt} ℓ(X_t) ℰ_t f(X_t)/(X_t ℓ(X_t))]/ℓ(x), identically
    e^{-λt} T_t f(x)/(x ℓ(x)).
    """
    positions, log_weight, censored = _horizon_batch(spec, x, t, n, rng, workers)
    f_values = f(positions)
    support = f_values != 0
    ell_values = np.ones_like(positions)
    if np.any(support):
        ell_values[support] = ell(positions[support])
    discount = math.exp(-lambda_hat * t)
    values = (discount * ell_values * np.exp(log_weight) * f_values
              / (positions * ell_values)) / ell(x)
    return summarize(values, rng, censored_fraction=censored)


def estimate_tilted_mass(spec, x, t, q, ell, n, rng, workers=None):
    """Survival functional E_x[e^{-qt} ℓ(X_t) ℰ_t]/ℓ(x)"""
    positions, log_weight, censored = _horizon_batch(spec, x, t, n, rng, workers)
    values = math.exp(-q * t) * ell(positions) * np.exp(log_weight) / ell(x)
    return summarize(values, rng, censored_fraction=censored)


def laplace_curve(sample, q_grid):
    """Rows {x, y, q, mean, se, n, censored_fraction, reliable, seed} for one HittingSample"""
    return sample.curve(q_grid)
