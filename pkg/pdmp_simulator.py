"""
PDMP Simulator
Exact simulation of the instrumental growth-fragmentation particle and its Feynman-Kac weight
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from config import PERFORMANCE, SIMULATION
from growth_fragmentation_model import DomainError


class ThinningBoundWarning(UserWarning):
    pass


class ModelNotValidatedError(RuntimeError):
    pass


class StopReason(str, Enum):
    HORIZON = 'horizon'
    HIT_TARGET = 'hit_target'
    EXITED_INTERVAL = 'exited_interval'
    MAX_EVENTS = 'max_events'


@dataclass(frozen=True)
class StoppingSpec:
    """
    Declarative stopping rule. hit_target detects H(y); lower_barrier a detects
    the first passage below a; upper_exit b detects the exit above b.
    """
    horizon: Optional[float] = None
    hit_target: Optional[float] = None
    lower_barrier: Optional[float] = None
    upper_exit: Optional[float] = None
    max_events: int = SIMULATION['max_events']

    def __post_init__(self):
        clauses = (self.horizon, self.hit_target, self.lower_barrier, self.upper_exit)
        if all(clause is None for clause in clauses):
            raise ValueError("StoppingSpec needs at least one stopping clause")
        if self.horizon is not None and not self.horizon >= 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        for name in ('hit_target', 'lower_barrier', 'upper_exit'):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be a positive mass, got {value}")
        if (self.lower_barrier is not None and self.upper_exit is not None
                and self.lower_barrier >= self.upper_exit):
            raise ValueError("lower_barrier must lie below upper_exit")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")

    def with_horizon(self, horizon):
        return replace(self, horizon=horizon)


@dataclass(frozen=True)
class RngStream:
    """Counter-based substream (Philox) keyed by (master_seed, path_index)"""
    master_seed: int
    path_index: int = 0

    def generator(self):
        sequence = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.path_index),))
        return np.random.Generator(np.random.Philox(sequence))

    def substream(self, path_index):
        return RngStream(self.master_seed, path_index)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    pre: float
    post: float


@dataclass
class Path:
    """Event log of one trajectory with its exact log weight"""
    start: float
    events: list
    final_time: float
    final_position: float
    log_weight: float
    stop_reason: StopReason
    seed: Optional[RngStream] = None
    residual_clock: Optional[float] = None  # time to the pending proposal at a horizon stop

    @property
    def n_jumps(self):
        return len(self.events)

    @property
    def weight(self):
        return math.exp(self.log_weight)

    def telescoping_log_weight(self):
        """ln(final/start) + Σ ln(pre/post)"""
        total = math.log(self.final_position / self.start)
        for event in self.events:
            total += math.log(event.pre / event.post)
        return total

    def position_at(self, t, spec):
        if t < 0 or t > self.final_time:
            raise DomainError(f"t={t} outside [0, {self.final_time}]")
        position, origin = self.start, 0.0
        for event in self.events:
            if t < event.time:
                break
            position, origin = event.post, event.time
        if t == self.final_time:
            return self.final_position
        return spec.flow.advance(position, t - origin)

    def log_weight_at(self, t, spec):
        total = math.log(self.position_at(t, spec) / self.start)
        for event in self.events:
            if event.time > t:
                break
            total += math.log(event.pre / event.post)
        return total

    def split(self, t, spec):
        """Head on [0, t] and tail θ_t (times shifted) of this path"""
        position = self.position_at(t, spec)
        head = Path(self.start, [e for e in self.events if e.time <= t], t, position,
                    self.log_weight_at(t, spec), StopReason.HORIZON, self.seed)
        tail_events = [JumpEvent(e.time - t, e.pre, e.post) for e in self.events if e.time > t]
        tail = Path(position, tail_events, self.final_time - t, self.final_position,
                    self.log_weight - head.log_weight, self.stop_reason, self.seed,
                    self.residual_clock)
        return head, tail

    def to_frame(self):
        return pd.DataFrame([(e.time, e.pre, e.post) for e in self.events],
                            columns=['t', 'pre', 'post'])


@dataclass(frozen=True)
class HittingOutcome:
    hit: bool
    H: float
    log_weight_at_H: float
    stop_reason: StopReason


def _require_validated(spec):
    if not spec.is_validated:
        raise ModelNotValidatedError(f"model '{spec.name}' must pass validate_model before simulation")


def simulate_path(spec, x0, stop, rng, generator=None, first_step=None):
    """
    Exact trajectory by thinning against K̄ along the deterministic flow.

    Levels are crossed only by upward flow, so a target y is hit inside a
    segment starting at p iff p <= y <= p'; time zero never counts as a hit.
    generator/first_step let a horizon-stopped path be resumed on the same
    substream (pass the returned Path.residual_clock as first_step).
    """
    _require_validated(spec)
    if not (x0 > 0 and math.isfinite(x0)):
        raise DomainError(f"x0 must be a positive mass, got {x0}")
    gen = generator if generator is not None else rng.generator()
    flow = spec.flow
    kernel = spec.kernel
    bound = spec.thinning_bound()
    horizon = math.inf if stop.horizon is None else stop.horizon
    target, lower, upper = stop.hit_target, stop.lower_barrier, stop.upper_exit

    def finish(time, position, log_w, reason, residual=None):
        return Path(x0, events, time, position, log_w, reason, rng, residual)

    events = []
    t, x, log_w = 0.0, x0, 0.0
    if (lower is not None and x0 < lower) or (upper is not None and x0 > upper):
        return finish(0.0, x0, 0.0, StopReason.EXITED_INTERVAL)
    at_origin = True
    proposals = 0
    pending = first_step
    while True:
        if pending is not None:
            step, pending = pending, None
        else:
            step = gen.exponential(1.0 / bound) if bound > 0 else math.inf
        segment_end = min(t + step, horizon)

        # earliest level reached by the flow inside this segment
        best_time, best_position, best_reason = math.inf, None, None
        if target is not None and (target > x or (target == x and not at_origin)):
            arrival = t + flow.travel_time(x, target)
            if arrival <= segment_end:
                best_time, best_position, best_reason = arrival, target, StopReason.HIT_TARGET
        if upper is not None and upper >= x:
            arrival = t + flow.travel_time(x, upper)
            if arrival <= segment_end and arrival < best_time:
                best_time, best_position, best_reason = arrival, upper, StopReason.EXITED_INTERVAL
        if best_reason is not None:
            return finish(best_time, best_position, log_w + math.log(best_position / x), best_reason)

        if t + step >= horizon:
            if math.isinf(horizon):
                # no jumps and no reachable level: the flow runs forever
                return finish(math.inf, math.inf, math.inf, StopReason.HORIZON)
            position = flow.advance(x, horizon - t)
            return finish(horizon, position, log_w + math.log(position / x), StopReason.HORIZON,
                          residual=t + step - horizon)

        position = flow.advance(x, step)
        log_w += math.log(position / x)
        t, x = t + step, position
        at_origin = False
        proposals += 1

        rate = kernel.total_rate(x)
        if rate > bound:
            warnings.warn(f"K({x:.4g})={rate:.4g} exceeds the thinning bound {bound:.4g}",
                          ThinningBoundWarning)
        if gen.random() * bound < rate:
            y = kernel.sample_target(x, gen)
            events.append(JumpEvent(t, x, y))
            x = y
            if lower is not None and x < lower:
                return finish(t, x, log_w, StopReason.EXITED_INTERVAL)
        if proposals >= stop.max_events:
            return finish(t, x, log_w, StopReason.MAX_EVENTS)


def hitting_functional(spec, x0, y, stop, rng):
    """H(y) and ln ℰ_{H(y)} when y is reached strictly before every censoring clause"""
    if stop.hit_target is None:
        stop = replace(stop, hit_target=y)
    elif stop.hit_target != y:
        raise DomainError(f"stop.hit_target={stop.hit_target} differs from y={y}")
    path = simulate_path(spec, x0, stop, rng)
    hit = path.stop_reason == StopReason.HIT_TARGET
    return HittingOutcome(hit, path.final_time if hit else math.inf,
                          path.log_weight if hit else -math.inf, path.stop_reason)


SUMMARY_COLUMNS = ['path_index', 'final_time', 'final_position', 'log_weight',
                   'stop_reason', 'n_jumps']


def _simulate_chunk(task):
    spec, x0, stop, master_seed, first, last = task
    rows = []
    for index in range(first, last):
        path = simulate_path(spec, x0, stop, RngStream(master_seed, index))
        rows.append((index, path.final_time, path.final_position, path.log_weight,
                     path.stop_reason.value, path.n_jumps))
    return rows


def simulate_batch(spec, x0, stop, master_seed, n, start_index=0, workers=None, chunk_size=None):
    """
    Path summaries for indices start_index .. start_index+n-1 as a DataFrame.
    Rows are ordered by path index, so results do not depend on workers.
    """
    _require_validated(spec)
    workers = workers or PERFORMANCE['workers']
    chunk_size = chunk_size or PERFORMANCE['chunk_size']
    spec.flow.prepare()
    spec.thinning_bound()
    bounds = list(range(start_index, start_index + n, chunk_size)) + [start_index + n]
    tasks = [(spec, x0, stop, master_seed, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers == 1 or len(tasks) <= 1:
        chunks = [_simulate_chunk(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_simulate_chunk, tasks))
    rows = [row for chunk in chunks for row in chunk]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def jump_count_poisson_test(counts, mean, alpha=0.01):
    """Chi-square goodness of fit of jump counts against Poisson(mean)"""
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    k_max = int(stats.poisson.ppf(1 - 1e-6, mean))
    edges = []
    k = 0
    # bins with expected count >= 5, tail pooled into the last bin
    while k <= k_max:
        lo = k
        expected = 0.0
        while k <= k_max and expected < 5:
            expected += n * stats.poisson.pmf(k, mean)
            k += 1
        edges.append((lo, k - 1))
    observed, expected = [], []
    for i, (lo, hi) in enumerate(edges):
        last = i == len(edges) - 1
        mask = (counts >= lo) if last else ((counts >= lo) & (counts <= hi))
        observed.append(int(mask.sum()))
        upper_mass = stats.poisson.sf(lo - 1, mean) if last else (
            stats.poisson.cdf(hi, mean) - stats.poisson.cdf(lo - 1, mean))
        expected.append(n * upper_mass)
    observed = np.array(observed, dtype=float)
    expected = np.array(expected)
    if len(observed) > 1 and expected[-1] < 5:
        observed[-2] += observed[-1]
        expected[-2] += expected[-1]
        observed, expected = observed[:-1], expected[:-1]
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = max(len(observed) - 1, 1)
    p_value = float(stats.chi2.sf(statistic, dof))
    return {'statistic': statistic, 'dof': dof, 'p_value': p_value, 'passed': p_value > alpha}
