"""Random-intercept linear mixed model by profiled maximum likelihood, and the
forward/backward predictor selection built on likelihood-ratio tests.

    y_it = b0 + a_i + l_t + b1' x_it + b2' x_it * t + e_it,
    a_i ~ N(0, tau2), e_it ~ N(0, sigma2)

Year effects l_t are dummies with the first year as reference; t in the
interactions is year minus the first year.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .multivariate import standardize

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5) - 1) / 2
RHO_MAX = 1 - 1e-9


@dataclass
class MixedModelFit:
    beta0: float
    tau2: float
    sigma2: float
    lam: dict  # year -> effect (reference year omitted)
    beta1: dict  # predictor -> main effect
    beta2: dict  # predictor -> time interaction
    se: dict  # coefficient name -> standard error
    loglik: float
    predictors: list
    interactions: list
    n_obs: int
    n_groups: int
    gamma: float
    gradient: float
    iterations: int
    loglik_trace: list = field(default_factory=list, repr=False)

    @property
    def n_params(self) -> int:
        # fixed effects + tau2 + sigma2
        return 1 + len(self.lam) + len(self.beta1) + len(self.beta2) + 2

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0, "tau2": self.tau2, "sigma2": self.sigma2,
            "lambda": {str(k): v for k, v in self.lam.items()},
            "beta1": self.beta1, "beta2": self.beta2, "se": self.se,
            "loglik": self.loglik, "predictors": self.predictors, "interactions": self.interactions,
            "n_obs": self.n_obs, "n_groups": self.n_groups,
        }


class _Design:
    """Fixed-effects design plus group bookkeeping for quasi-demeaning."""

    def __init__(self, y, X, names, years, groups):
        self.y = y
        self.X = X
        self.names = names
        self.N = len(y)
        _, self.g = np.unique(groups, return_inverse=True)
        self.G = int(self.g.max()) + 1
        self.n_i = np.bincount(self.g, minlength=self.G).astype(np.float64)
        self.years = years

    def group_mean(self, a):
        if a.ndim == 1:
            return np.bincount(self.g, weights=a, minlength=self.G) / self.n_i
        return np.stack([np.bincount(self.g, weights=a[:, j], minlength=self.G) for j in range(a.shape[1])], 1) / self.n_i[:, None]

    def gls(self, gamma):
        theta = 1.0 - 1.0 / np.sqrt(1.0 + self.n_i * gamma)
        th = theta[self.g]
        ys = self.y - th * self.group_mean(self.y)[self.g]
        Xs = self.X - th[:, None] * self.group_mean(self.X)[self.g]
        beta, *_ = np.linalg.lstsq(Xs, ys, rcond=None)
        rs = ys - Xs @ beta
        return beta, float(rs @ rs), Xs

    def profile(self, gamma):
        beta, rss, _ = self.gls(gamma)
        ll = -0.5 * self.N * (math.log(2 * math.pi) + 1 + math.log(rss / self.N)) \
            - 0.5 * float(np.log1p(self.n_i * gamma).sum())
        return ll, beta, rss

    def gradient(self, gamma):
        beta, rss, _ = self.gls(gamma)
        r = self.y - self.X @ beta
        s = np.bincount(self.g, weights=r, minlength=self.G)
        d = 1.0 + self.n_i * gamma
        return 0.5 * self.N / rss * float((s * s / (d * d)).sum()) - 0.5 * float((self.n_i / d).sum())


def _build(y, X, predictors, years, states, interactions, per_year_interactions=False):
    y = np.asarray(y, dtype=np.float64)
    years = np.asarray(years)
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1) if X is not None and np.size(X) else np.zeros((len(y), 0))
    uy = np.unique(years)
    t = (years - uy[0]).astype(np.float64)
    cols = [np.ones(len(y))]
    names = ["(Intercept)"]
    for yr in uy[1:]:
        cols.append((years == yr).astype(np.float64))
        names.append(f"year{yr}")
    for j, p in enumerate(predictors):
        cols.append(X[:, j])
        names.append(p)
    for p in interactions:
        j = predictors.index(p)
        if per_year_interactions:
            for yr in uy[1:]:
                cols.append(X[:, j] * (years == yr))
                names.append(f"{p}:year{yr}")
        else:
            cols.append(X[:, j] * t)
            names.append(f"{p}:t")
    D = np.column_stack(cols)
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise np.linalg.LinAlgError("singular fixed-effects design")
    return _Design(y, D, names, years, np.asarray(states)), uy


def fit_mixed_model(y, X, years, states, predictors: Sequence[str] | None = None,
                    interactions: Sequence[str] = (), standardize_predictors: bool = True,
                    per_year_interactions: bool = False, tol: float = 1e-8) -> MixedModelFit:
    """ML fit of the random-intercept model.

    The likelihood is profiled over rho = gamma / (1 + gamma), gamma =
    tau2 / sigma2, by golden-section search; fixed effects come from GLS
    (quasi-demeaning) at each candidate. An interior optimum is polished by
    root-finding on the analytic profile gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    Xa = np.asarray(X, dtype=np.float64).reshape(len(y), -1) if X is not None and np.size(X) else np.zeros((len(y), 0))
    predictors = list(predictors) if predictors is not None else [f"x{j + 1}" for j in range(Xa.shape[1])]
    if len(predictors) != Xa.shape[1]:
        raise ValueError("one name per predictor column required")
    if standardize_predictors and Xa.shape[1]:
        Xa = standardize(Xa)
    interactions = list(interactions)
    des, uy = _build(y, Xa, predictors, years, states, interactions, per_year_interactions)
    if (des.n_i < 2).any():
        raise ValueError("every state needs at least two observations")

    def negll(rho):
        return -des.profile(rho / (1 - rho))[0]

    trace = []
    a, b = 0.0, RHO_MAX
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = negll(c), negll(d)
    it = 0
    while b - a > tol and it < 200:
        it += 1
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = negll(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = negll(d)
        trace.append(-min(fc, fd))
    rho = (a + b) / 2
    cands = [(negll(0.0), 0.0), (negll(rho), rho)]
    gamma = rho / (1 - rho)
    # polish interior optimum on the gradient
    if gamma > 0:
        # the profile is flat to rounding near the optimum, so golden comparisons
        # can drift off the root; bracket the gradient sign change explicitly
        step = max(gamma * 1e-6, 1e-12)
        lo, hi = max(gamma - step, 0.0), gamma + step
        glo, ghi = des.gradient(lo), des.gradient(hi)
        for _ in range(60):
            if glo > 0 > ghi:
                break
            step *= 2
            if glo <= 0 and lo > 0:
                lo = max(gamma - step, 0.0)
                glo = des.gradient(lo)
            if ghi >= 0:
                hi = gamma + step
                ghi = des.gradient(hi)
        if glo > 0 > ghi:
            g_star = optimize.brentq(des.gradient, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
            cands.append((negll(g_star / (1 + g_star)), g_star / (1 + g_star)))
    best_rho = min(cands)[1]
    gamma = best_rho / (1 - best_rho)
    ll, beta, rss = des.profile(gamma)
    trace.append(ll)
    grad = des.gradient(gamma)
    if gamma == 0 and grad > 1e-6:
        log.warning("profiled likelihood increasing at the boundary; optimum not bracketed")
    sigma2 = rss / des.N
    _, _, Xs = des.gls(gamma)
    cov = sigma2 * np.linalg.inv(Xs.T @ Xs)
    se = dict(zip(des.names, np.sqrt(np.diag(cov)).tolist()))
    coef = dict(zip(des.names, beta.tolist()))
    lam = {int(yr) if np.issubdtype(type(yr), np.integer) else yr: coef[f"year{yr}"] for yr in uy[1:]}
    b1 = {p: coef[p] for p in predictors}
    b2 = {n: coef[n] for n in des.names if ":" in n}
    return MixedModelFit(
        beta0=coef["(Intercept)"], tau2=gamma * sigma2, sigma2=sigma2, lam=lam, beta1=b1, beta2=b2,
        se=se, loglik=ll, predictors=predictors, interactions=interactions, n_obs=des.N,
        n_groups=des.G, gamma=gamma, gradient=grad if gamma > 0 else 0.0, iterations=it, loglik_trace=trace,
    )


def lrt(full: MixedModelFit, reduced: MixedModelFit, df: int | None = None) -> tuple[float, float]:
    """Likelihood-ratio chi-squared statistic and p-value."""
    df = df if df is not None else full.n_params - reduced.n_params
    stat = max(2.0 * (full.loglik - reduced.loglik), 0.0)
    return stat, float(stats.chi2.sf(stat, df))


@dataclass
class StepwiseResult:
    selected: list
    interactions: list
    fit: MixedModelFit
    steps: list  # (action, term, chi2, p)


def stepwise_select(y, X, years, states, names: Sequence[str], alpha: float = 0.05,
                    per_year_interactions: bool = False) -> StepwiseResult:
    """Forward selection by LRT starting from the intercept-plus-year model,
    then add every selected predictor's time interaction and drop the least
    significant interaction one at a time until all remaining ones pass."""
    Xa = standardize(np.asarray(X, dtype=np.float64).reshape(len(y), -1))
    names = list(names)
    col = {n: j for j, n in enumerate(names)}

    def fit(sel, inter=()):
        return fit_mixed_model(y, Xa[:, [col[s] for s in sel]] if sel else None, years, states,
                               predictors=list(sel), interactions=list(inter), standardize_predictors=False,
                               per_year_interactions=per_year_interactions)

    steps = []
    selected: list = []
    current = fit(selected)
    while True:
        best = None
        for n in names:
            if n in selected:
                continue
            try:
                cand = fit(selected + [n])
            except np.linalg.LinAlgError:
                continue
            stat, p = lrt(cand, current)
            if best is None or stat > best[1] + 1e-12:
                best = (n, stat, p, cand)
        if best is None or best[2] >= alpha:
            break
        selected.append(best[0])
        current = best[3]
        steps.append(("add", best[0], best[1], best[2]))

    inter = list(selected)
    if inter:
        try:
            current_i = fit(selected, inter)
        except np.linalg.LinAlgError:
            inter, current_i = [], current
        while inter:
            worst = None
            for term in inter:
                rest = [t for t in inter if t != term]
                reduced = fit(selected, rest)
                stat, p = lrt(current_i, reduced)
                if worst is None or p > worst[2] + 1e-15:
                    worst = (term, stat, p, reduced)
            if worst[2] < alpha:
                break
            inter.remove(worst[0])
            current_i = worst[3]
            steps.append(("drop", f"{worst[0]}:t", worst[1], worst[2]))
        current = current_i
    return StepwiseResult(selected, inter, current, steps)
