"""Empirical diagnostics for stationary behaviour of simulated delay equations.

Contraction is measured by synchronous coupling (two initial segments, one
noise path per replica), moment bounds by per-window sup norms, and laws
are compared through their marginals at a few segment offsets with the 1-d
Wasserstein distance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fundsol import AllZeroTail, envelope_rate
from .measures import Segment
from .simulate import Ensemble, ModelSpec, PathGrid, simulate_ensemble

BOUNDED = "Bounded"
UNBOUNDED = "Unbounded"
CONVERGING = "Converging"
NOT_CONVERGING = "NotConverging"


@dataclass(frozen=True)
class EmpiricalLaw:
    """Samples X(t + theta_j): one row per replica, one column per offset."""

    offsets: np.ndarray
    samples: np.ndarray
    t: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != len(self.offsets):
            raise ValueError("samples must be (replicas, offsets)")
        if not np.all(np.isfinite(s)):
            raise ValueError("empirical law has non-finite entries")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))

    @property
    def replicas(self) -> int:
        return self.samples.shape[0]

    def column(self, offset: float) -> np.ndarray:
        k = np.flatnonzero(np.isclose(self.offsets, offset, atol=1e-9))
        if len(k) == 0:
            raise ValueError(f"offset {offset} not in the law")
        return self.samples[:, k[0]]


@dataclass
class ContractionReport:
    times: np.ndarray
    msd: np.ndarray
    fitted_rate: float
    fitted_at: tuple


@dataclass
class MomentBound:
    times: np.ndarray
    moments: np.ndarray
    running_max: np.ndarray
    verdict: str
    slope: float
    tolerance: float


@dataclass
class ConvergenceReport:
    checkpoints: np.ndarray
    curves: dict
    verdicts: dict
    floor: float
    fitted_rates: dict = field(default_factory=dict)

    @property
    def all_converging(self) -> bool:
        return all(v == CONVERGING for v in self.verdicts.values())


def default_offsets(tau: float) -> list[float]:
    return [0.0, -tau / 2, -tau]


# -- laws -----------------------------------------------------------------
def empirical_marginal_law(paths, t: float, offsets) -> EmpiricalLaw:
    """Marginal vectors X(t + theta_j) from an Ensemble or a list of PathGrid."""
    offsets = np.asarray(offsets, dtype=float)
    if t < -1e-12:
        raise ValueError("t must be >= 0")
    if isinstance(paths, Ensemble):
        tau = paths.tau
        if np.any(t + offsets < -tau - 1e-9):
            raise ValueError("t + theta reaches before -tau")
        cols = [paths.at(t + th) for th in offsets]
        return EmpiricalLaw(offsets, np.array(cols).T, t)
    rows = []
    for p in paths:
        if np.any(t + offsets < -p.tau - 1e-9):
            raise ValueError("t + theta reaches before -tau")
        rows.append([p.at(t + th) for th in offsets])
    if not rows:
        raise ValueError("no paths given")
    return EmpiricalLaw(offsets, np.array(rows), t)


def wasserstein1(lawA: EmpiricalLaw, lawB: EmpiricalLaw, offset: float = 0.0) -> float:
    """W1 between the marginals at ``offset``; larger samples are truncated."""
    a, b = lawA.column(offset), lawB.column(offset)
    m = min(len(a), len(b))
    if m == 0:
        raise ValueError("empty law")
    return float(np.mean(np.abs(np.sort(a[:m]) - np.sort(b[:m]))))


def _w1_max(lawA: EmpiricalLaw, lawB: EmpiricalLaw) -> float:
    return max(wasserstein1(lawA, lawB, th) for th in lawA.offsets)


# -- contraction and moments ------------------------------------------------
def _fit_rate(times, curve, tau, t_min):
    try:
        return envelope_rate(times, curve, tau, t_min)
    except AllZeroTail:
        return -np.inf


def coupled_runs(model: ModelSpec, xi: Segment, eta: Segment, T: float, dt: float,
                 replicas: int, seed: int, thin: int = 1):
    """Both solutions per replica driven by the same increments."""
    ids = np.arange(replicas)
    segs = [xi] * replicas + [eta] * replicas
    ens = simulate_ensemble(model, segs, T, dt, seed, replica_ids=np.concatenate([ids, ids]),
                            thin=thin)
    return ens


def coupling_contraction(model: ModelSpec, xi: Segment, eta: Segment, T: float, dt: float,
                         replicas: int, seed: int, thin: int | None = None) -> ContractionReport:
    """Mean-square gap E|X(t; xi) - X(t; eta)|**2 under shared noise, with its rate.

    The rate is the slope of the log peak envelope on t >= 2*tau; an
    identically zero gap gives rate -inf.
    """
    n = int(round(model.tau / dt))
    thin = thin or max(1, n // 20)
    ens = coupled_runs(model, xi, eta, T, dt, replicas, seed, thin)
    pos = ens.t >= -1e-12
    d = ens.values[pos, :replicas] - ens.values[pos, replicas:]
    msd = np.mean(d ** 2, axis=1)
    t = ens.t[pos]
    t_min = 2 * model.tau
    return ContractionReport(t, msd, _fit_rate(t, msd, model.tau, t_min), (t_min, float(t[-1])))


def moment_verdict(times, moments, scale_floor: float = 0.0):
    """Running max of the moment curve and its last-quarter slope verdict."""
    times = np.asarray(times, dtype=float)
    rm = np.maximum.accumulate(np.asarray(moments, dtype=float))
    scale = max(float(rm.max()), scale_floor)
    q = max(2, len(times) // 4)
    tt, yy = times[-q:], rm[-q:]
    slope = float(np.polyfit(tt, yy, 1)[0]) if np.ptp(tt) > 0 else 0.0
    tol = 1e-3 * scale
    if not np.isfinite(scale):
        return rm, UNBOUNDED, np.inf, tol
    return rm, (BOUNDED if slope <= tol else UNBOUNDED), slope, tol


def median_of_means(x, groups: int = 20) -> np.ndarray:
    """Median over ``groups`` equal replica blocks of the block means (last axis).

    Unlike the plain mean it concentrates when only a first moment exists.
    """
    x = np.asarray(x, dtype=float)
    R = x.shape[-1]
    if R < groups:
        raise ValueError("fewer replicas than groups")
    m = R // groups * groups
    return np.median(x[..., :m].reshape(*x.shape[:-1], groups, -1).mean(axis=-1), axis=-1)


def segment_moment_bound(model: ModelSpec, xi: Segment, T: float, dt: float, replicas: int,
                         seed: int, p: int = 2, norm: str = "sup",
                         estimator: str = "mean") -> MomentBound:
    """Sample E||X_t||_inf**p at t = 0, tau, 2 tau, .. with a boundedness verdict.

    ``norm="point"`` uses |X(t)| instead of the segment sup norm;
    ``estimator="median_of_means"`` replaces the replica mean for heavy tails.
    The verdict is Unbounded when the running max still climbs over the
    last quarter faster than 1e-3 times its own size per unit time.
    """
    if norm not in ("sup", "point"):
        raise ValueError("norm must be 'sup' or 'point'")
    if estimator not in ("mean", "median_of_means"):
        raise ValueError("estimator must be 'mean' or 'median_of_means'")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if p == 2 and model.kind in ("levy_ou", "levy_multiplicative") \
            and not model.noise.large_jump_second_moment_finite:
        raise ValueError("second moments need a jump law with finite second moment")
    tau = model.tau
    N = int(round(T / tau))
    window_t = np.arange(N + 1) * tau
    record = window_t if norm == "point" else [0.0, T]
    ens = simulate_ensemble(model, xi, T, dt, seed, replicas=replicas, record_at=record)
    if norm == "sup":
        stat, window_t = ens.window_sup, ens.window_t
    else:
        stat = np.array([np.abs(ens.at(t)) for t in window_t])
    with np.errstate(over="ignore", invalid="ignore"):
        stat = stat ** p
        mom = np.mean(stat, axis=1) if estimator == "mean" else median_of_means(stat)
    rm, verdict, slope, tol = moment_verdict(window_t, mom)
    return MomentBound(window_t, mom, rm, verdict, slope, tol)


def running_abs_moment(ens: Ensemble, p: int = 1, t_min: float = 0.0):
    """Sample E|X(t)|**p over the recorded times t >= t_min."""
    keep = ens.t >= t_min - 1e-12
    with np.errstate(over="ignore"):
        return ens.t[keep], np.mean(np.abs(ens.values[keep]) ** p, axis=1)


def hill_tail_index(x, k: int | None = None) -> float:
    """Hill estimate of the tail index of |x| from its top k order statistics."""
    a = np.sort(np.abs(np.asarray(x, dtype=float)))[::-1]
    a = a[a > 0]
    if k is None:
        k = max(10, int(np.sqrt(len(a))))
    if len(a) <= k:
        raise ValueError("not enough nonzero samples for the Hill estimator")
    return float(1.0 / np.mean(np.log(a[:k] / a[k])))


# -- stationarity ---------------------------------------------------------
def trend_verdict(values, floor: float, times=None) -> tuple[str, float]:
    """Converging if the curve ends at or below ``floor`` or trends down.

    Also returns the log-linear slope of the positive part of the curve
    against ``times`` (index when omitted); nan if fewer than two points.
    """
    v = np.asarray(values, dtype=float)
    x = np.arange(len(v), dtype=float) if times is None else np.asarray(times, dtype=float)
    if len(v) == 0:
        return NOT_CONVERGING, np.nan
    pos = v > 0
    slope = float(np.polyfit(x[pos], np.log(v[pos]), 1)[0]) if pos.sum() >= 2 else np.nan
    if v[-1] <= floor:
        return CONVERGING, slope
    ok = v[-1] < v[0] and np.isfinite(slope) and slope < 0
    return (CONVERGING if ok else NOT_CONVERGING), slope


def stationarity_convergence_test(model: ModelSpec, xi: Segment, eta: Segment, checkpoints,
                                  dt: float, replicas: int, seed: int,
                                  offsets=None) -> ConvergenceReport:
    """Three curves at the checkpoints, each expected to fall to the floor 2/sqrt(replicas).

    ``convergence``  W1 between the laws from xi at consecutive checkpoints
    ``uniqueness``   W1 between the laws from xi and from eta (independent noise)
    ``contraction``  mean-square gap of the two solutions under shared noise
    W1 of vector marginals is the largest per-offset W1.
    """
    cps = np.asarray(checkpoints, dtype=float)
    if len(cps) < 2 or np.any(np.diff(cps) <= 0):
        raise ValueError("need at least two increasing checkpoints")
    tau = model.tau
    offsets = default_offsets(tau) if offsets is None else list(offsets)
    T = float(cps[-1])
    R = replicas
    ids = np.arange(R)
    # columns: xi (shared ids), eta (shared ids), eta (independent ids)
    segs = [xi] * R + [eta] * R + [eta] * R
    ens = simulate_ensemble(model, segs, T, dt, seed,
                            replica_ids=np.concatenate([ids, ids, ids + R]),
                            record_at=[c + th for c in cps for th in offsets])

    def law(cols, t):
        sub = Ensemble(ens.dt, ens.T, ens.tau, ens.t, ens.values[:, cols], ens.window_t,
                       ens.window_sup[:, cols], ens.seed, ens.replica_ids[cols])
        return empirical_marginal_law(sub, t, offsets)

    a, b, c = slice(0, R), slice(R, 2 * R), slice(2 * R, 3 * R)
    laws_xi = [law(a, t) for t in cps]
    conv = np.array([_w1_max(laws_xi[k], laws_xi[k + 1]) for k in range(len(cps) - 1)])
    uniq = np.array([_w1_max(laws_xi[k], law(c, t)) for k, t in enumerate(cps)])
    msd = np.array([np.mean((ens.at(t)[a] - ens.at(t)[b]) ** 2) for t in cps])
    floor = 2.0 / np.sqrt(R)
    curves = {"convergence": (cps[1:], conv), "uniqueness": (cps, uniq), "contraction": (cps, msd)}
    verdicts, rates = {}, {}
    for name, (t, v) in curves.items():
        verdicts[name], rates[name] = trend_verdict(v, floor, t)
    return ConvergenceReport(cps, curves, verdicts, floor, rates)
