"""Discrete power-law fitting with xmin selection and bootstrap goodness of fit.

The model is P(X = x) = x^-alpha / zeta(alpha, xmin) for x >= xmin. alpha is
the maximum-likelihood exponent for a given xmin; xmin minimises the KS
distance between the empirical and fitted tail distributions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial

import numpy as np
from scipy import optimize, special, stats

from . import _accel
from ._accel import njit
from ._parallel import child_rng, pmap

ALPHA_LO = 1.01
ALPHA_HI = 6.0
ALPHA_TOL = 1e-8
MIN_SAMPLES = 50
XMIN_QUANTILE = 0.90


class PowerLawError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    xmin: int
    n_tail: int
    ks_stat: float
    n: int

    @property
    def normalization(self) -> float:
        """C in P(X = x) = C x^-alpha."""
        return 1.0 / float(special.zeta(self.alpha, self.xmin))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["normalization"] = self.normalization
        return d


@dataclass(frozen=True)
class GofResult:
    p_value: float
    n_bootstrap: int
    seed: int
    ks_observed: float
    ks_bootstrap: tuple = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"p_value": self.p_value, "n_bootstrap": self.n_bootstrap, "seed": self.seed,
                "ks_observed": self.ks_observed}


# ---------------------------------------------------------------------- Hurwitz zeta

# B_2j / (2j)! for j = 1..8
_EM = np.array([
    1 / 6 / 2, -1 / 30 / 24, 1 / 42 / 720, -1 / 30 / 40320,
    5 / 66 / 3628800, -691 / 2730 / 479001600, 7 / 6 / 87178291200, -3617 / 510 / 20922789888000,
])


@njit
def hurwitz_zeta(s, q):
    """(zeta(s, q), d/ds zeta(s, q)) for s > 1, q > 0 by Euler-Maclaurin."""
    z = 0.0
    dz = 0.0
    a = q
    while a < 12.0:
        t = a ** -s
        z += t
        dz -= math.log(a) * t
        a += 1.0
    la = math.log(a)
    t = a ** (1.0 - s)
    z += t / (s - 1.0)
    dz += -la * t / (s - 1.0) - t / ((s - 1.0) * (s - 1.0))
    t = a ** -s
    z += 0.5 * t
    dz -= 0.5 * la * t
    # Bernoulli correction terms
    poly = s
    dpoly = 1.0
    pw = a ** (-s - 1.0)
    for j in range(8):
        c = _EM[j]
        z += c * poly * pw
        dz += c * pw * (dpoly - la * poly)
        # advance rising factorial by two factors and the power by a^-2
        k = 2.0 * j + 1.0
        dpoly = dpoly * (s + k) * (s + k + 1.0) + poly * ((s + k + 1.0) + (s + k))
        poly = poly * (s + k) * (s + k + 1.0)
        pw /= a * a
    return z, dz


@njit
def _partial_sum(alpha, a, b):
    """sum_{k=a}^{b} k^-alpha for integers a <= b (0 if b < a)."""
    if b < a:
        return 0.0
    if b - a <= 64:
        s = 0.0
        for k in range(a, b + 1):
            s += float(k) ** -alpha
        return s
    return hurwitz_zeta(alpha, float(a))[0] - hurwitz_zeta(alpha, float(b + 1))[0]


@njit
def _nb_mle(mean_log, xmin):
    """Root of E_alpha[ln X] = mean_log by bisection on [ALPHA_LO, ALPHA_HI]."""
    lo = 1.01
    hi = 6.0
    z, dz = hurwitz_zeta(lo, float(xmin))
    if -dz / z - mean_log <= 0.0:
        return lo
    z, dz = hurwitz_zeta(hi, float(xmin))
    if -dz / z - mean_log >= 0.0:
        return hi
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        z, dz = hurwitz_zeta(mid, float(xmin))
        if -dz / z - mean_log > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit
def _nb_ks(values, cum, n_tail, alpha, xmin):
    """Sup over integers x >= xmin of |S(x) - F(x)| for distinct tail values
    ``values`` with cumulative counts ``cum``."""
    zmin = hurwitz_zeta(alpha, float(xmin))[0]
    d = 0.0
    acc = 0.0  # sum_{k=xmin}^{x} k^-alpha
    x = xmin - 1
    prev_s = 0.0
    for i in range(len(values)):
        v = values[i]
        if v - 1 > x:
            acc += _partial_sum(alpha, x + 1, v - 1)
            x = v - 1
            diff = abs(acc / zmin - prev_s)
            if diff > d:
                d = diff
        acc += float(v) ** -alpha
        x = v
        s_i = cum[i] / n_tail
        diff = abs(acc / zmin - s_i)
        if diff > d:
            d = diff
        prev_s = s_i
    return d


@njit
def _nb_scan(values, counts, cand_idx):
    """Best (ks, alpha, index) over candidate xmin positions into ``values``."""
    m = len(values)
    log_suffix = np.zeros(m + 1)
    cnt_suffix = np.zeros(m + 1, np.int64)
    for i in range(m - 1, -1, -1):
        log_suffix[i] = log_suffix[i + 1] + counts[i] * math.log(values[i])
        cnt_suffix[i] = cnt_suffix[i + 1] + counts[i]
    best_ks = 2.0
    best_alpha = 0.0
    best_i = -1
    for c in range(len(cand_idx)):
        i = cand_idx[c]
        nt = cnt_suffix[i]
        xmin = values[i]
        alpha = _nb_mle(log_suffix[i] / nt, xmin)
        cum = np.cumsum(counts[i:])
        ks = _nb_ks(values[i:], cum, float(nt), alpha, xmin)
        if ks < best_ks:
            best_ks = ks
            best_alpha = alpha
            best_i = i
    return best_ks, best_alpha, best_i


# ---------------------------------------------------------------------- numpy route


def _np_mle(log_sum: float, n_tail: int, xmin: int) -> float:
    def nll(a):
        return n_tail * math.log(special.zeta(a, xmin)) + a * log_sum

    res = optimize.minimize_scalar(nll, bounds=(ALPHA_LO, ALPHA_HI), method="bounded",
                                   options={"xatol": ALPHA_TOL})
    return float(res.x)


def _np_ks(values: np.ndarray, cum: np.ndarray, alpha: float, xmin: int) -> float:
    zmin = special.zeta(alpha, xmin)
    f_at = 1.0 - special.zeta(alpha, values + 1.0) / zmin
    f_before = 1.0 - special.zeta(alpha, values.astype(np.float64)) / zmin
    s_at = cum / cum[-1]
    s_before = np.r_[0.0, s_at[:-1]]
    # integers skipped before a value, including the run from xmin to the first one
    gap = np.r_[values[0] > xmin, np.diff(values) > 1]
    d = np.abs(f_at - s_at).max()
    if gap.any():
        d = max(d, np.abs(f_before[gap] - s_before[gap]).max())
    return float(d)


def _np_scan(values, counts, cand_idx):
    logs = counts * np.log(values)
    log_suffix = np.r_[np.cumsum(logs[::-1])[::-1], 0.0]
    cnt_suffix = np.r_[np.cumsum(counts[::-1])[::-1], 0]
    best = (2.0, 0.0, -1)
    for i in cand_idx:
        nt = int(cnt_suffix[i])
        alpha = _np_mle(float(log_suffix[i]), nt, int(values[i]))
        ks = _np_ks(values[i:], np.cumsum(counts[i:]), alpha, int(values[i]))
        if ks < best[0]:
            best = (ks, alpha, int(i))
    return best


# ---------------------------------------------------------------------- fitting


def _prepare(samples) -> np.ndarray:
    x = np.asarray(samples)
    if x.ndim != 1:
        x = x.ravel()
    if x.size and (not np.issubdtype(x.dtype, np.integer)):
        if not np.all(np.isfinite(x)) or np.any(x != np.round(x)):
            raise PowerLawError("samples must be positive integers")
    x = x.astype(np.int64)
    if (x < 1).any():
        raise PowerLawError("samples must be positive integers")
    return x


def fit_powerlaw(samples, min_samples: int = MIN_SAMPLES, xmin: int | None = None) -> PowerLawFit:
    """Fit a discrete power law; ``xmin`` fixes the lower cutoff instead of scanning."""
    x = _prepare(samples)
    if x.size < min_samples:
        raise PowerLawError(f"need at least {min_samples} samples, got {x.size}")
    values, counts = np.unique(x, return_counts=True)
    if len(values) < 2:
        raise PowerLawError("all samples are equal; no tail to fit")
    if xmin is None:
        cap = np.quantile(x, XMIN_QUANTILE, method="lower")
        cand = np.flatnonzero(values <= cap)
        cand = cand[cand < len(values) - 1]  # tail needs two distinct values
        if not len(cand):
            cand = np.array([0])
    else:
        pos = int(np.searchsorted(values, xmin))
        if pos >= len(values) - 1:
            raise PowerLawError(f"xmin={xmin} leaves fewer than two distinct tail values")
        cand = np.array([pos])
    cand = cand.astype(np.int64)
    vals_f = values.astype(np.int64)
    if _accel.use_numba():
        ks, alpha, i = _nb_scan(vals_f, counts.astype(np.float64), cand)
    else:
        ks, alpha, i = _np_scan(vals_f, counts.astype(np.float64), cand)
    n_tail = int(counts[i:].sum())
    return PowerLawFit(alpha=float(alpha), xmin=int(values[i]), n_tail=n_tail, ks_stat=float(ks), n=int(x.size))


def ks_statistic(samples, alpha: float, xmin: int) -> float:
    x = _prepare(samples)
    values, counts = np.unique(x[x >= xmin], return_counts=True)
    if not len(values):
        raise PowerLawError("no samples at or above xmin")
    cum = np.cumsum(counts).astype(np.float64)
    if _accel.use_numba():
        return float(_nb_ks(values.astype(np.int64), cum, float(cum[-1]), float(alpha), int(xmin)))
    return _np_ks(values, cum, alpha, xmin)


# ---------------------------------------------------------------------- sampling

_TABLE = 1 << 16
_X_CAP = 10 ** 15


@lru_cache(maxsize=32)
def _survival_table(alpha: float, xmin: int) -> tuple[float, np.ndarray]:
    """zeta(alpha, xmin) and P(X >= x) for x = xmin..xmin+65535 (decreasing, first entry 1).
    Cached because every bootstrap replicate samples from the same fitted law."""
    z = float(special.zeta(alpha, xmin))
    surv = special.zeta(alpha, np.arange(xmin, xmin + _TABLE, dtype=np.float64)) / z
    surv.setflags(write=False)
    return z, surv


def sample_powerlaw(alpha: float, xmin: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact inverse-CDF draws from the discrete power law.

    A survival table covers xmin..xmin+65535; rarer draws are located by integer
    bisection on zeta(alpha, x) / zeta(alpha, xmin). Values are capped at 1e15.
    """
    u = rng.random(size)
    z, surv = _survival_table(float(alpha), int(xmin))
    out = np.empty(size, dtype=np.int64)
    near = u >= surv[-1]
    idx = np.searchsorted(-surv, -u[near], side="right") - 1
    out[near] = xmin + idx
    far = np.flatnonzero(~near)
    if len(far):
        uf = u[far]
        lo = np.full(len(far), xmin + _TABLE - 1, dtype=np.float64)  # surv(lo) >= u
        hi = lo * 2
        while True:
            grow = (special.zeta(alpha, hi) / z >= uf) & (hi < _X_CAP)
            if not grow.any():
                break
            lo[grow] = hi[grow]
            hi[grow] = np.minimum(hi[grow] * 2, _X_CAP)
        while True:
            open_ = hi - lo > 1
            if not open_.any():
                break
            mid = np.floor((lo + hi) / 2)
            ok = special.zeta(alpha, mid) / z >= uf
            lo = np.where(open_ & ok, mid, lo)
            hi = np.where(open_ & ~ok, mid, hi)
        out[far] = lo.astype(np.int64)
    return out


# ---------------------------------------------------------------------- bootstrap


def _replicate(i: int, seed: int, body: np.ndarray, n: int, n_tail: int, alpha: float, xmin: int,
               min_samples: int) -> float:
    rng = child_rng(seed, i)
    k = int(rng.binomial(n, n_tail / n)) if len(body) else n
    tail = sample_powerlaw(alpha, xmin, k, rng)
    rest = body[rng.integers(0, len(body), n - k)] if len(body) else np.zeros(0, np.int64)
    data = np.concatenate([rest, tail])
    try:
        return fit_powerlaw(data, min_samples=min(min_samples, n)).ks_stat
    except PowerLawError:
        # degenerate replicate (e.g. a single distinct value) cannot beat the data
        return 0.0


def gof_pvalue(samples, fit: PowerLawFit, n_bootstrap: int = 1000, seed: int = 0,
               workers: int | None = None) -> GofResult:
    """Semiparametric bootstrap p-value: fraction of replicate KS >= observed."""
    if n_bootstrap < 100:
        raise PowerLawError("n_bootstrap must be at least 100")
    x = _prepare(samples)
    body = np.sort(x[x < fit.xmin])
    fn = partial(_replicate, seed=int(seed), body=body, n=int(x.size), n_tail=fit.n_tail,
                 alpha=fit.alpha, xmin=fit.xmin, min_samples=MIN_SAMPLES)
    ks = np.array(pmap(fn, range(n_bootstrap), workers=workers))
    p = float(np.mean(ks >= fit.ks_stat))
    return GofResult(p_value=p, n_bootstrap=n_bootstrap, seed=int(seed), ks_observed=fit.ks_stat,
                     ks_bootstrap=tuple(ks.tolist()))


def uniformity_test(p_values) -> tuple[float, float]:
    """One-sample KS test of p-values against U(0, 1)."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size < 5:
        raise ValueError("uniformity test needs at least 5 p-values")
    if not np.all((p >= 0) & (p <= 1)):
        raise ValueError("p-values must lie in [0, 1]")
    res = stats.kstest(p, "uniform")
    return float(res.statistic), float(res.pvalue)


def ccdf_points(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values and empirical P(X >= x), for log-log plots."""
    x = _prepare(samples)
    values, counts = np.unique(x, return_counts=True)
    surv = np.cumsum(counts[::-1])[::-1] / x.size
    return values, surv
