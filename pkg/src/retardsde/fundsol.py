"""Fundamental solutions of linear retarded and neutral delay equations.

r(t) solves r'(t) = int r(t+theta) mu(dtheta) (retarded) or
d[r(t) - int r(t+theta) rho(dtheta)] = int r(t+theta) mu(dtheta) dt (neutral)
with r(0) = 1 and r = 0 on [-tau, 0).  Both are integrated by the method of
steps with a trapezoidal predictor-corrector on a grid aligned with the
segment grid, so every delayed argument is an already computed grid value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import SignedMeasure, total_variation


class NeutralRecoveryFailure(RuntimeError):
    """r(t) cannot be recovered from the neutral difference functional."""


class AllZeroTail(RuntimeError):
    """The envelope of |r| underflowed; ``gamma`` is set to -inf."""

    gamma = -np.inf


def grid_count(tau: float, dt: float) -> int:
    """Number of steps per delay window; raises unless dt divides tau."""
    n = int(round(tau / dt))
    if n < 1 or abs(n * dt - tau) > 1e-9 * tau:
        raise ValueError(f"dt={dt} does not divide tau={tau}")
    return n


@dataclass(frozen=True)
class FundamentalSolution:
    """r on the grid t_i = (i - n) * dt, i = 0 .. n + N.

    ``values`` are right limits; ``left_values`` the left limits (they differ
    only where r jumps: at t = 0, and at multiples of the neutral delays).
    """

    dt: float
    T: float
    tau: float
    values: np.ndarray
    left_values: np.ndarray

    @property
    def n(self) -> int:
        return int(round(self.tau / self.dt))

    @property
    def t(self) -> np.ndarray:
        return (np.arange(len(self.values)) - self.n) * self.dt

    def index(self, t: float) -> int:
        i = int(round(t / self.dt)) + self.n
        if not 0 <= i < len(self.values):
            raise ValueError(f"t={t} outside [-tau, T]")
        return i

    def __call__(self, t):
        """Right-limit value of r at grid time(s) ``t`` (snapped to the grid)."""
        t = np.asarray(t, dtype=float)
        idx = np.rint(t / self.dt).astype(int) + self.n
        out = np.where(idx < 0, 0.0, self.values[np.clip(idx, 0, len(self.values) - 1)])
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DecayFit:
    c: float
    gamma: float


def _method_of_steps(w_mu: np.ndarray, w_rho: np.ndarray | None, n: int, N: int, dt: float):
    """Heun stepping of M(t) = r(t) - int r(t+theta) rho(dtheta), then recovery of r.

    With w_rho None (retarded) M coincides with r and every operation below
    reduces exactly to plain Heun stepping of r.
    """
    r = np.zeros(n + N + 1)
    left = np.zeros(n + N + 1)
    r[n] = 1.0
    if w_rho is None:
        w_rho = np.zeros(n + 1)
    rho_now = w_rho[n]
    if abs(rho_now) >= 1.0:
        raise NeutralRecoveryFailure(
            f"weight {rho_now:.3g} of rho at theta=0 makes recovery non-contractive")
    denom = 1.0 - rho_now
    jm = np.flatnonzero(w_mu[:n])
    wm = w_mu[jm]
    mu_now = w_mu[n]
    jr = np.flatnonzero(w_rho[:n])
    wr = w_rho[jr]
    half = 0.5 * dt

    M = r[n] - (wr @ r[jr] + rho_now * r[n])
    for i in range(N):
        g = i + n
        F = wm @ r[i + jm] + mu_now * r[g]
        hist = wr @ r[i + 1 + jr]
        hist_left = wr @ left[i + 1 + jr]
        # the step's right end sees left limits of r: jumps sit on grid points
        pred = (M + dt * F + hist_left) / denom
        F_pred = wm @ left[i + 1 + jm] + mu_now * pred
        M = M + half * (F + F_pred)
        r[g + 1] = (M + hist) / denom
        left[g + 1] = (M + hist_left) / denom
    return r, left


def fundamental_retarded(mu: SignedMeasure, T: float, dt: float) -> FundamentalSolution:
    if T <= 0:
        raise ValueError("horizon T must be positive")
    n = grid_count(mu.tau, dt)
    N = int(round(T / dt))
    r, left = _method_of_steps(mu.stencil(n), None, n, N, dt)
    r.setflags(write=False)
    left.setflags(write=False)
    return FundamentalSolution(dt, N * dt, mu.tau, r, left)


def fundamental_neutral(rho: SignedMeasure, mu: SignedMeasure, T: float, dt: float) -> FundamentalSolution:
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if not np.isclose(rho.tau, mu.tau):
        raise ValueError("rho and mu must share tau")
    n = grid_count(mu.tau, dt)
    N = int(round(T / dt))
    w_rho = rho.stencil(n)
    if w_rho[n] != 0.0 and total_variation(rho) >= 1.0:
        raise NeutralRecoveryFailure("Var(rho) >= 1 with mass at the current time")
    r, left = _method_of_steps(mu.stencil(n), w_rho, n, N, dt)
    r.setflags(write=False)
    left.setflags(write=False)
    return FundamentalSolution(dt, N * dt, mu.tau, r, left)


def envelope_rate(t: np.ndarray, y: np.ndarray, window: float, t_min: float = 0.0) -> float:
    """Exponential rate of the peak envelope of |y| by a log-linear fit.

    |y| is reduced to maxima over consecutive blocks of length ``window``;
    for a decaying signal the block maxima exceeding everything later (the
    descending staircase corners) are fitted, for a growing one those
    exceeding everything earlier.  Corners of e^{g t} cos(w t + p) lie
    exactly on a line of slope g, so oscillation does not bias the fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = t >= t_min - 1e-12
    t, y = t[keep], y[keep]
    if len(t) < 2:
        raise ValueError("not enough points in the fit window")
    step = t[1] - t[0]
    b = max(1, int(round(window / step)))
    nblk = len(t) // b
    if nblk < 2:
        raise ValueError("fit window shorter than two envelope blocks")
    blocks = y[: nblk * b].reshape(nblk, b)
    arg = blocks.argmax(axis=1)
    peak = blocks[np.arange(nblk), arg]
    tpk = t[: nblk * b].reshape(nblk, b)[np.arange(nblk), arg]
    if np.all(peak[nblk // 2:] <= np.finfo(float).tiny):
        raise AllZeroTail("envelope is identically zero in the fit window")

    q = max(1, nblk // 4)
    decaying = peak[-q:].max() <= peak[:q].max()
    if decaying:
        suffix = np.maximum.accumulate(peak[::-1])[::-1]
        corner = peak >= suffix
    else:
        prefix = np.maximum.accumulate(peak)
        corner = peak >= prefix
    corner &= peak > np.finfo(float).tiny
    tc, pc = tpk[corner], peak[corner]
    if len(tc) < 2:
        return 0.0
    slope, _ = np.polyfit(tc, np.log(pc), 1)
    return float(slope)


def fit_decay(r: FundamentalSolution, t_min: float | None = None) -> DecayFit:
    """Fit |r(t)| <= c * exp(gamma * t); gamma from the peak envelope of r.

    The rate is fitted on t >= 2*tau (the early transient is excluded); c is
    then the smallest constant making the bound hold at every grid point.
    """
    if r.T < 5 * r.tau - 1e-12:
        raise ValueError("fit_decay needs a horizon of at least 5*tau")
    t = r.t
    pos = t >= 0
    t_min = 2 * r.tau if t_min is None else t_min
    gamma = envelope_rate(t[pos], r.values[pos], r.tau, t_min)
    c = float(np.max(np.abs(r.values[pos]) * np.exp(-gamma * t[pos])))
    assert np.all(np.abs(r.values[pos]) <= c * np.exp(gamma * t[pos]) * (1 + 1e-12))
    return DecayFit(c, gamma)
