"""Synthetic CMS-style referral files for smoke tests and demos.

Physicians get a home state (weights roughly proportional to state size),
heavy-tailed activity, mostly in-state partners and frequent reciprocal
referrals. Counts start at 11, mimicking the public file's suppression of
small cells.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._parallel import child_rng
from .states import STATES_50

# Rough relative sizes (millions of residents) used only to skew state sizes.
_STATE_SIZE = {
    "AL": 4.8, "AK": 0.7, "AZ": 6.4, "AR": 2.9, "CA": 37.3, "CO": 5.0, "CT": 3.6, "DE": 0.9,
    "FL": 18.8, "GA": 9.7, "HI": 1.4, "ID": 1.6, "IL": 12.8, "IN": 6.5, "IA": 3.0, "KS": 2.9,
    "KY": 4.3, "LA": 4.5, "ME": 1.3, "MD": 5.8, "MA": 6.5, "MI": 9.9, "MN": 5.3, "MS": 3.0,
    "MO": 6.0, "MT": 1.0, "NE": 1.8, "NV": 2.7, "NH": 1.3, "NJ": 8.8, "NM": 2.1, "NY": 19.4,
    "NC": 9.5, "ND": 0.7, "OH": 11.5, "OK": 3.8, "OR": 3.8, "PA": 12.7, "RI": 1.1, "SC": 4.6,
    "SD": 0.8, "TN": 6.3, "TX": 25.1, "UT": 2.8, "VT": 0.6, "VA": 8.0, "WA": 6.7, "WV": 1.9,
    "WI": 5.7, "WY": 0.6,
}


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 100_000
    n_physicians: int | None = None  # default n_rows / 10
    in_state: float = 0.92
    reciprocal: float = 0.45
    multi_state: float = 0.02
    pareto_shape: float = 1.3
    seed: int = 0
    stream: int = 0  # referral stream; same seed + different stream = same physicians, new referrals
    block: int = 1 << 20


def _physicians(cfg: SynthConfig):
    n = cfg.n_physicians or max(100, cfg.n_rows // 10)
    rng = child_rng(cfg.seed, 0)
    codes = np.array(sorted(STATES_50))
    w = np.array([_STATE_SIZE[c] for c in codes])
    state = np.sort(rng.choice(len(codes), size=n, p=w / w.sum()))
    # NPIs: distinct 10-digit numbers starting with 1, shuffled relative to state
    npi = 1_000_000_000 + rng.choice(900_000_000, size=n, replace=False)
    activity = rng.pareto(cfg.pareto_shape, size=n) + 1.0
    return codes, state, npi.astype(np.int64), activity


def generate(referrals_path, states_path, cfg: SynthConfig | None = None) -> dict:
    """Write a headerless ``from,to,count`` file and an ``npi,state`` table."""
    cfg = cfg or SynthConfig()
    codes, state, npi, act = _physicians(cfg)
    n = len(npi)
    S = len(codes)
    p_all = act / act.sum()
    cum_all = np.cumsum(p_all)
    # per-state cumulative weights (physicians are sorted by state)
    bounds = np.searchsorted(state, np.arange(S + 1))
    cum_state = np.cumsum(act)
    base = np.r_[0.0, cum_state][bounds[:-1]]
    total = np.r_[0.0, cum_state][bounds[1:]] - base

    written = 0
    b = 0
    tmp = f"{os.fspath(referrals_path)}.tmp"
    with open(tmp, "w") as fh:
        while written < cfg.n_rows:
            rng = child_rng(cfg.seed, 1, cfg.stream, b)
            k = min(cfg.block, cfg.n_rows - written)
            m = int(np.ceil(k / (1 + cfg.reciprocal)))
            src = np.minimum(np.searchsorted(cum_all, rng.random(m) * cum_all[-1]), n - 1)
            local = rng.random(m) < cfg.in_state
            dst = np.minimum(np.searchsorted(cum_all, rng.random(m) * cum_all[-1]), n - 1)
            s_st = state[src[local]]
            tgt = base[s_st] + rng.random(int(local.sum())) * total[s_st]
            dst[local] = np.minimum(np.searchsorted(cum_state, tgt), bounds[s_st + 1] - 1)
            cnt = 11 + rng.geometric(0.08, size=m) - 1
            rec = rng.random(m) < cfg.reciprocal
            rcnt = np.maximum(11, np.round(cnt[rec] * rng.lognormal(0.0, 0.3, int(rec.sum())))).astype(np.int64)
            f = np.concatenate([src, dst[rec]])[:k]
            t = np.concatenate([dst, src[rec]])[:k]
            c = np.concatenate([cnt, rcnt])[:k]
            df = pd.DataFrame({"f": npi[f], "t": npi[t], "c": c})
            df.to_csv(fh, header=False, index=False)
            written += len(df)
            b += 1
    os.replace(tmp, referrals_path)

    rng = child_rng(cfg.seed, 2)
    multi = rng.random(n) < cfg.multi_state
    other = (state[multi] + rng.integers(1, S, int(multi.sum()))) % S
    rows = pd.DataFrame({
        "npi": np.concatenate([npi, npi[multi]]),
        "state": np.concatenate([codes[state], codes[other]]),
    })
    tmp = f"{os.fspath(states_path)}.tmp"
    rows.to_csv(tmp, index=False)
    os.replace(tmp, states_path)
    return {"rows": written, "physicians": n, "multi_state": int(multi.sum())}


def health_attributes(features, seed: int = 0, noise: float = 0.5) -> pd.DataFrame:
    """Synthetic long-format health table loosely driven by f1 and f9."""
    rng = child_rng(seed, 3)
    f = features.copy()
    x1 = f["f1"].fillna(f["f1"].mean()).to_numpy()
    x9 = np.log1p(f["f9"].fillna(0).to_numpy())
    z = lambda a: (a - a.mean()) / (a.std() or 1.0)
    rows = []
    for name, coef in (("discharges_per_1000", (2.0, 0.5)), ("population_millions", (0.2, 1.5))):
        v = 10 + coef[0] * z(x1) + coef[1] * z(x9) + rng.normal(0, noise, len(f))
        rows.append(pd.DataFrame({"state": f["state"], "year": f["year"], "attribute": name, "value": v}))
    return pd.concat(rows, ignore_index=True)
