"""Interstate referral flows and the log-log gravity regression.

Flows use referral counts as the volume measure; the claims data carries no
patient identifiers, so distinct patients cannot be counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .graph import PhysicianRegistry, RefGraph
from .states import N_STATES, STATE_CODES, STATES_50

EARTH_RADIUS_KM = 6371.0088

# State capitol buildings, decimal degrees (lat, lon). Table version 1.
CAPITALS_VERSION = 1
CAPITALS = {
    "AL": (32.377, -86.300), "AK": (58.301, -134.420), "AZ": (33.448, -112.097),
    "AR": (34.747, -92.289), "CA": (38.576, -121.494), "CO": (39.739, -104.985),
    "CT": (41.764, -72.682), "DE": (39.157, -75.520), "FL": (30.438, -84.281),
    "GA": (33.749, -84.388), "HI": (21.307, -157.857), "ID": (43.618, -116.200),
    "IL": (39.798, -89.654), "IN": (39.768, -86.163), "IA": (41.591, -93.604),
    "KS": (39.048, -95.678), "KY": (38.187, -84.875), "LA": (30.457, -91.187),
    "ME": (44.307, -69.782), "MD": (38.979, -76.491), "MA": (42.358, -71.064),
    "MI": (42.734, -84.555), "MN": (44.955, -93.102), "MS": (32.304, -90.182),
    "MO": (38.579, -92.173), "MT": (46.586, -112.018), "NE": (40.808, -96.700),
    "NV": (39.164, -119.766), "NH": (43.207, -71.538), "NJ": (40.220, -74.770),
    "NM": (35.682, -105.940), "NY": (42.653, -73.757), "NC": (35.780, -78.639),
    "ND": (46.821, -100.783), "OH": (39.961, -82.999), "OK": (35.492, -97.503),
    "OR": (44.938, -123.030), "PA": (40.264, -76.884), "RI": (41.831, -71.415),
    "SC": (34.000, -81.033), "SD": (44.367, -100.346), "TN": (36.166, -86.784),
    "TX": (30.275, -97.740), "UT": (40.777, -111.888), "VT": (44.262, -72.581),
    "VA": (37.539, -77.434), "WA": (47.035, -122.905), "WV": (38.336, -81.612),
    "WI": (43.075, -89.384), "WY": (41.140, -104.820), "DC": (38.895, -77.036),
}

FLOW_PROXY_NOTE = "F_ij counts referrals, not distinct patients (no patient ids in the source data)"


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def capital_distance(state_a: str, state_b: str) -> float:
    try:
        la, oa = CAPITALS[state_a.upper()]
        lb, ob = CAPITALS[state_b.upper()]
    except KeyError as exc:
        raise ValueError(f"no capital coordinates for {exc.args[0]!r}") from None
    return float(haversine_km(la, oa, lb, ob))


def distance_matrix(codes: Sequence[str]) -> np.ndarray:
    lat = np.array([CAPITALS[c][0] for c in codes])
    lon = np.array([CAPITALS[c][1] for c in codes])
    return haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


@dataclass
class StateFlowMatrix:
    states: tuple  # row/column codes
    flows: np.ndarray  # summed over years, diagonal zero
    physicians: np.ndarray  # mean yearly physician count per state
    years: tuple = ()
    yearly_flows: np.ndarray | None = None  # (years, S, S)
    yearly_physicians: np.ndarray | None = None  # (years, S)
    intrastate_weight: int = 0
    other_weight: int = 0  # endpoints outside the row/column states
    unlabeled_weight: int = 0
    unlabeled_edges: int = 0
    note: str = FLOW_PROXY_NOTE

    @property
    def cross_weight(self) -> int:
        return int(self.flows.sum())

    def to_csv_rows(self) -> list[list]:
        rows = [["from", "to", "flow"]]
        for i, a in enumerate(self.states):
            for j, b in enumerate(self.states):
                if i != j:
                    rows.append([a, b, int(self.flows[i, j])])
        return rows


def aggregate_flows(graphs, registries, years: Sequence | None = None,
                    states: Sequence[str] = tuple(sorted(STATES_50))) -> StateFlowMatrix:
    """Sum edge weights between state-labeled physicians, pooled over years.

    ``graphs``/``registries`` may be single objects or parallel sequences (one
    per year). Weight whose endpoints are unlabeled, or outside ``states``, is
    tallied rather than dropped silently.
    """
    if isinstance(graphs, RefGraph):
        graphs, registries = [graphs], [registries]
    if len(graphs) != len(registries):
        raise ValueError("need one registry per graph")
    years = tuple(years) if years is not None else tuple(range(len(graphs)))
    states = tuple(states)
    col = np.full(N_STATES, -1, dtype=np.int64)
    for k, code in enumerate(states):
        col[STATE_CODES.index(code)] = k
    S = len(states)
    yf = np.zeros((len(graphs), S, S), dtype=np.int64)
    ym = np.zeros((len(graphs), S), dtype=np.int64)
    intra = other = unl_w = unl_e = 0
    for y, (g, reg) in enumerate(zip(graphs, registries)):
        s, d, w = g.edges()
        a = reg.state_of[s].astype(np.int64)
        b = reg.state_of[d].astype(np.int64)
        unl = (a < 0) | (b < 0)
        unl_w += int(w[unl].sum())
        unl_e += int(unl.sum())
        lab = ~unl
        same = lab & (a == b)
        intra += int(w[same].sum())
        cross = lab & (a != b)
        ca = np.where(cross, col[np.where(a >= 0, a, 0)], -1)
        cb = np.where(cross, col[np.where(b >= 0, b, 0)], -1)
        inside = cross & (ca >= 0) & (cb >= 0)
        other += int(w[cross & ~inside].sum())
        np.add.at(yf[y], (ca[inside], cb[inside]), w[inside])
        lbl = reg.state_of.astype(np.int64)
        lbl = col[lbl[lbl >= 0]]
        ym[y] = np.bincount(lbl[lbl >= 0], minlength=S)
    return StateFlowMatrix(
        states=states,
        flows=yf.sum(axis=0),
        physicians=ym.mean(axis=0),
        years=years,
        yearly_flows=yf,
        yearly_physicians=ym,
        intrastate_weight=intra,
        other_weight=other,
        unlabeled_weight=unl_w,
        unlabeled_edges=unl_e,
    )


@dataclass
class GravityFit:
    g_log: float
    beta_i: float
    beta_j: float
    beta_d: float
    r_squared: float
    residual_se: float
    p_value_overall: float
    n_pairs: int
    n_excluded: int
    std_errors: tuple = ()
    pooled_years: bool = False
    note: str = FLOW_PROXY_NOTE

    def to_dict(self) -> dict:
        return dict(self.__dict__, std_errors=list(self.std_errors))


def ols_qr(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Least squares via QR; returns (coef, residuals, rss, rank)."""
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    rank = int((diag > diag.max() * 1e-10).sum()) if len(diag) else 0
    if rank < X.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient design")
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    return coef, resid, float(resid @ resid), rank


def fit_gravity_arrays(flow: np.ndarray, m_i: np.ndarray, m_j: np.ndarray, dist: np.ndarray,
                       min_pairs: int = 30) -> GravityFit:
    """OLS of log F on log M_i, log M_j, log D over pairs with F > 0."""
    flow = np.asarray(flow, dtype=np.float64)
    pos = flow > 0
    n_excl = int((~pos).sum())
    if pos.sum() < min_pairs:
        raise ValueError(f"need at least {min_pairs} positive-flow pairs, got {int(pos.sum())}")
    X = np.column_stack([
        np.ones(int(pos.sum())), np.log(m_i[pos]), np.log(m_j[pos]), np.log(dist[pos]),
    ])
    y = np.log(flow[pos])
    coef, resid, rss, _ = ols_qr(X, y)
    n, p = X.shape
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    dof = n - p
    sigma2 = rss / dof if dof > 0 else float("nan")
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    if r2 < 1 and dof > 0:
        fstat = (r2 / (p - 1)) / ((1 - r2) / dof)
        pval = float(stats.f.sf(fstat, p - 1, dof))
    else:
        pval = 0.0
    return GravityFit(
        g_log=float(coef[0]),
        beta_i=float(coef[1]),
        beta_j=float(coef[2]),
        beta_d=float(-coef[3]),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        residual_se=math.sqrt(sigma2) if dof > 0 else float("nan"),
        p_value_overall=pval,
        n_pairs=int(n),
        n_excluded=n_excl,
        std_errors=tuple(float(s) for s in se),
    )


def fit_gravity(matrix: StateFlowMatrix, distances: np.ndarray | None = None, pool_years: bool = False,
                min_pairs: int = 30) -> GravityFit:
    """Fit on summed flows (default) or on one observation per pair and year."""
    D = distance_matrix(matrix.states) if distances is None else np.asarray(distances, dtype=np.float64)
    S = len(matrix.states)
    off = ~np.eye(S, dtype=bool)
    ii, jj = np.nonzero(off)
    if not pool_years:
        m = matrix.physicians
        fit = fit_gravity_arrays(matrix.flows[ii, jj], m[ii], m[jj], D[ii, jj], min_pairs)
    else:
        if matrix.yearly_flows is None:
            raise ValueError("matrix has no per-year flows to pool")
        Y = matrix.yearly_flows.shape[0]
        f = np.concatenate([matrix.yearly_flows[y][ii, jj] for y in range(Y)])
        mi = np.concatenate([matrix.yearly_physicians[y][ii] for y in range(Y)])
        mj = np.concatenate([matrix.yearly_physicians[y][jj] for y in range(Y)])
        fit = fit_gravity_arrays(f, mi, mj, np.tile(D[ii, jj], Y), min_pairs)
        fit.pooled_years = True
    return fit
