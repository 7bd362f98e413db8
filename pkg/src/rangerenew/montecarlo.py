"""Replicated simulation of the distinct count.

Three samplers, all deterministic in ``(seed, replicas)``: replica ``r``
always reads stream ``r`` of the counter-based generator, so the values do
not depend on chunking or on the number of worker threads.

* ``simulate_direct``: ``R_n`` from ``n`` i.i.d. draws.
* ``simulate_poissonized``: ``R*_t`` as a sum of independent Bernoullis,
  with the far tail replaced by one Poisson count.
* ``simulate_coupled``: ``(R_n, R*_t)`` read off a single sample path.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from . import rng as _rng
from .laws import DiscreteLaw, FiniteLaw
from .series import certified_sum

DEFAULT_TV_BUDGET = 1e-6
CHUNK_VALUES = 1 << 22  # uniforms held in memory per chunk
MAX_HEAD_CUTOFF = 1 << 26
INVERSION_LIMIT = 30.0


class SimulationBudgetError(RuntimeError):
    """The requested simulation does not fit the memory budget."""


@dataclass
class SimBatch:
    law_spec: str
    method: str  # "direct" | "poissonized_bernoulli" | "coupled"
    n_or_t: float
    replicas: int
    master_seed: int
    values: np.ndarray  # (replicas,) or (replicas, 2) for coupled
    tv_budget: Optional[float] = None
    head_cutoff: Optional[int] = None
    tv_bound: Optional[float] = None
    tail_lambda: Optional[float] = None


@dataclass
class Summary:
    mean: float
    variance: float
    quantiles: dict
    sorted_values: np.ndarray = field(repr=False)


def worker_count() -> int:
    """Workers allowed by ``RANGERENEW_THREADS`` (default: all CPUs)."""
    env = os.environ.get("RANGERENEW_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"RANGERENEW_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"RANGERENEW_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _check_common(replicas, seed):
    if int(replicas) != replicas or replicas < 1:
        raise ValueError(f"replicas must be a positive integer, got {replicas!r}")
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be a 64-bit unsigned integer")


def _run_chunks(replicas: int, per_replica: int, fn, out: np.ndarray, workers: Optional[int]):
    """Call ``fn(lo, hi)`` over replica slices and store into ``out[lo:hi]``."""
    size = max(1, min(replicas, CHUNK_VALUES // max(per_replica, 1)))
    bounds = [(lo, min(lo + size, replicas)) for lo in range(0, replicas, size)]
    workers = worker_count() if workers is None else workers

    def task(b):
        out[b[0] : b[1]] = fn(*b)

    if workers <= 1 or len(bounds) == 1:
        for b in bounds:
            task(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(task, bounds))


# Poisson variates -----------------------------------------------------------


def _poisson_inversion(lam: float, u: np.ndarray) -> np.ndarray:
    """Inversion against a CDF table; the table runs until the remaining
    mass is below the 2**-53 resolution of the uniforms."""
    kmax = int(lam + 40.0 * math.sqrt(lam) + 60)
    k = np.arange(kmax + 1)
    logp = -lam + k * math.log(lam) - gammaln(k + 1) if lam > 0 else np.where(k == 0, 0.0, -np.inf)
    cdf = np.cumsum(np.exp(logp))
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, kmax).astype(np.int64)


def _poisson_ptrs(lam: float, master_seed: int, streams: np.ndarray, block: int, tag: int) -> np.ndarray:
    """Transformed rejection with squeeze (Hoermann, 1993), exact for lam >= 10.

    Attempt ``a`` of stream ``s`` reads counter ``(block, tag, a)``, so the
    result for a replica does not depend on which other replicas are drawn.
    """
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.empty(streams.size, dtype=np.int64)
    pending = np.arange(streams.size)
    attempt = 0
    while pending.size:
        lanes = _rng.block_uniforms(master_seed, streams[pending], block, tag, attempt)
        U = lanes[:, 0] - 0.5
        V = lanes[:, 1]
        us = 0.5 - np.abs(U)
        k = np.floor((2.0 * a / us + b) * U + lam + 0.43)
        quick = (us >= 0.07) & (V <= vr)
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(V) + math.log(inv_alpha) - np.log(a / (us * us) + b)
            rhs = -lam + k * loglam - gammaln(k + 1.0)
        slow = (k >= 0) & ~((us < 0.013) & (V > us)) & (lhs <= rhs)
        ok = quick | slow
        out[pending[ok]] = k[ok].astype(np.int64)
        pending = pending[~ok]
        attempt += 1
    return out


def poisson_variates(lam: float, master_seed: int, streams, tag: int, block: int = 0) -> np.ndarray:
    """One exact Poisson(lam) variate per stream."""
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"Poisson mean must be finite and >= 0, got {lam!r}")
    if lam == 0:
        return np.zeros(streams.size, dtype=np.int64)
    if lam < INVERSION_LIMIT:
        u = _rng.block_uniforms(master_seed, streams, block, tag)[:, 0]
        return _poisson_inversion(lam, u)
    return _poisson_ptrs(lam, master_seed, streams, block, tag)


# distinct counting ------------------------------------------------------------


def _distinct_rows(x: np.ndarray) -> np.ndarray:
    s = np.sort(x, axis=1)
    return 1 + np.count_nonzero(s[:, 1:] != s[:, :-1], axis=1)


def _count_below(pos: np.ndarray, cut: np.ndarray) -> np.ndarray:
    out = np.empty(cut.shape, dtype=np.int64)
    for r in range(pos.shape[0]):
        out[r] = np.searchsorted(pos[r], cut[r], side="left")
    return out


# direct -------------------------------------------------------------------------


def simulate_direct(law: DiscreteLaw, n: int, replicas: int, seed: int,
                    workers: Optional[int] = None) -> SimBatch:
    """``R_n`` for each replica from ``n`` exact draws of stream ``r``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n!r}")
    n = int(n)
    _check_common(replicas, seed)
    values = np.empty(replicas, dtype=np.int64)

    if n <= CHUNK_VALUES:
        def fn(lo, hi):
            x = law.draw(seed, np.arange(lo, hi), 0, n)
            return _distinct_rows(x)
    else:
        def fn(lo, hi):
            res = []
            for r in range(lo, hi):
                seen = np.empty(0)
                for start in range(0, n, CHUNK_VALUES):
                    m = min(CHUNK_VALUES, n - start)
                    seen = np.union1d(seen, law.draw(seed, [r], start, m)[0])
                res.append(seen.size)
            return np.array(res)

    _run_chunks(replicas, min(n, CHUNK_VALUES), fn, values, workers)
    return SimBatch(law.spec, "direct", float(n), int(replicas), int(seed), values)


# poissonized --------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonizedPlan:
    """How the index range is split for a given ``(law, t, tv_budget)``.

    ``i <= head``: one Bernoulli each.  ``head < i <= cutoff``: a Poisson
    number of points placed by the block's own law, counted by distinct
    index (exactly the same joint law as the Bernoullis).  ``i > cutoff``:
    a single Poisson(``tail_lambda``) count.
    """

    t: float
    head: int
    cutoff: int
    head_probs: np.ndarray
    block_rate: float
    block_cdf: np.ndarray
    tail_lambda: float
    tv_bound: float


def plan_poissonized(law: DiscreteLaw, t: float, tv_budget: float = DEFAULT_TV_BUDGET) -> PoissonizedPlan:
    if not (t > 0 and math.isfinite(t)):
        raise ValueError(f"t must be positive and finite, got {t!r}")
    if not (0 < tv_budget <= 1e-3):
        raise ValueError(f"tv_budget must lie in (0, 1e-3], got {tv_budget!r}")
    # smallest N with t^2 sum_{i>N} pi_i^2 >= sum_{i>N} p_i^2 <= tv_budget
    if isinstance(law, FiniteLaw):
        n = law.support_size
    else:
        hi = 1
        while t * t * law.tail_power_sum(hi, 2) > tv_budget:
            hi *= 2
            if hi > 2 * MAX_HEAD_CUTOFF:
                raise SimulationBudgetError(f"tv_budget={tv_budget} needs more than {MAX_HEAD_CUTOFF} head indices at t={t}")
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if t * t * law.tail_power_sum(mid, 2) > tv_budget:
                lo = mid
            else:
                hi = mid
        n = hi
    if n > MAX_HEAD_CUTOFF:
        raise SimulationBudgetError(f"tv_budget={tv_budget} needs {n} head indices at t={t}")
    tv = 0.0 if isinstance(law, FiniteLaw) else t * t * law.tail_power_sum(n, 2)

    p = law.pmf_range(1, n + 1)
    head = int(np.count_nonzero(t * p >= 1.0))
    head_probs = -np.expm1(-t * p[:head])
    block = p[head:]
    block_rate = t * math.fsum(block.tolist()) if block.size else 0.0
    cdf = np.cumsum(block)
    if cdf.size:
        cdf /= cdf[-1]
        cdf[-1] = 1.0
    if isinstance(law, FiniteLaw):
        tail_lambda = 0.0
    else:
        tail_lambda = certified_sum(law, lambda q: -np.expm1(-t * q), lip=t, scale=t,
                                    tol=1e-12, start=n + 1).value
    return PoissonizedPlan(float(t), head, n, head_probs, block_rate, cdf, max(tail_lambda, 0.0), tv)


def _poissonized_chunk(plan: PoissonizedPlan, seed: int, lo: int, hi: int) -> np.ndarray:
    streams = np.arange(lo, hi, dtype=np.uint64)
    count = np.zeros(hi - lo, dtype=np.int64)
    if plan.head:
        u = _rng.stream_uniforms(seed, streams, _rng.TAG_HEAD, 0, plan.head)
        count += np.count_nonzero(u < plan.head_probs, axis=1)
    if plan.block_rate > 0:
        k = poisson_variates(plan.block_rate, seed, streams, _rng.TAG_BLOCK_COUNT)
        total = int(k.sum())
        if total:
            owner = np.repeat(np.arange(hi - lo), k)
            # word j of the owner's TAG_BLOCK_INDEX stream for its j-th point
            j = np.arange(total) - np.repeat(np.cumsum(k) - k, k)
            u = _rng.block_uniforms(seed, streams[owner], j // 4, _rng.TAG_BLOCK_INDEX)
            u = u[np.arange(total), j % 4]
            idx = np.minimum(np.searchsorted(plan.block_cdf, u, side="right"), plan.block_cdf.size - 1)
            key = np.unique(owner * np.int64(plan.block_cdf.size) + idx)
            count += np.bincount(key // plan.block_cdf.size, minlength=hi - lo)
    if plan.tail_lambda > 0:
        count += poisson_variates(plan.tail_lambda, seed, streams, _rng.TAG_TAIL)
    return count


def simulate_poissonized(law: DiscreteLaw, t: float, replicas: int, seed: int,
                         tv_budget: float = DEFAULT_TV_BUDGET, workers: Optional[int] = None) -> SimBatch:
    """``R*_t = sum_i 1{N_t^(i) >= 1}`` as independent Bernoulli(1 - e^{-t pi_i}).

    Indices past the cutoff contribute a Poisson count with the same mean;
    ``tv_bound`` on the batch bounds the total-variation cost of that swap.
    """
    _check_common(replicas, seed)
    plan = plan_poissonized(law, t, tv_budget)
    values = np.empty(replicas, dtype=np.int64)
    per = plan.head + int(plan.block_rate + 5 * math.sqrt(plan.block_rate)) + 4
    _run_chunks(replicas, 4 * per, lambda lo, hi: _poissonized_chunk(plan, seed, lo, hi), values, workers)
    return SimBatch(law.spec, "poissonized_bernoulli", float(t), int(replicas), int(seed), values,
                    tv_budget=tv_budget, head_cutoff=plan.cutoff, tv_bound=plan.tv_bound,
                    tail_lambda=plan.tail_lambda)


# coupled --------------------------------------------------------------------------


def simulate_coupled(law: DiscreteLaw, t: float, replicas: int, seed: int,
                     workers: Optional[int] = None) -> SimBatch:
    """Pairs ``(R_{floor t}, R*_t)`` read off one path of i.i.d. draws.

    ``N_t`` comes from its own stream; the path is the ``TAG_XI`` stream used by
    ``simulate_direct``, so the first column equals ``simulate_direct(law,
    floor(t))`` replica by replica.
    """
    if not (t >= 1 and math.isfinite(t)):
        raise ValueError(f"coupled simulation needs t >= 1, got {t!r}")
    _check_common(replicas, seed)
    n = int(math.floor(t))
    values = np.empty((replicas, 2), dtype=np.int64)

    def fn(lo, hi):
        streams = np.arange(lo, hi, dtype=np.uint64)
        nt = poisson_variates(t, seed, streams, _rng.TAG_POISSON_NT)
        length = int(max(n, nt.max()))
        x = law.draw(seed, streams, 0, length)
        # R_m counts first occurrences before position m
        cut = np.stack([np.full(hi - lo, n), nt], axis=1)
        return _count_below(_first_positions(x), cut)

    per = int(t + 6 * math.sqrt(t)) + 1
    if per > 4 * CHUNK_VALUES:
        raise SimulationBudgetError(f"t={t} is too large for one coupled path in memory")
    _run_chunks(replicas, 2 * per, fn, values, workers)
    return SimBatch(law.spec, "coupled", float(t), int(replicas), int(seed), values)


def _first_positions(x: np.ndarray) -> np.ndarray:
    """Sorted positions of first occurrences per row; padded with the row length."""
    order = np.argsort(x, axis=1, kind="stable")
    s = np.take_along_axis(x, order, axis=1)
    first = np.ones(s.shape, dtype=bool)
    first[:, 1:] = s[:, 1:] != s[:, :-1]
    pos = np.where(first, order, x.shape[1])
    pos.sort(axis=1)
    return pos


# summaries -------------------------------------------------------------------------


def summarize(batch: SimBatch, column: int = -1) -> Summary:
    """Mean, unbiased variance and quantiles; coupled batches use ``column``."""
    v = np.asarray(batch.values)
    if v.ndim == 2:
        v = v[:, column]
    if v.size < 2:
        raise ValueError("summarize needs at least two replicas")
    x = v.astype(np.float64)
    s = np.sort(x)
    qs = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
    return Summary(
        mean=float(np.mean(x)),
        variance=float(np.var(x, ddof=1)),
        quantiles={q: float(np.quantile(s, q)) for q in qs},
        sorted_values=s,
    )
