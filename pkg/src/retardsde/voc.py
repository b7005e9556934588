"""Variation-of-constants representation of delay equation solutions.

For the retarded equation with fundamental solution r,

    X(t) = r(t) xi(0) + int mu(dth) int_th^0 r(t+th-s) xi(s) ds
           + int_0^t r(t-s) g(s) dW(s),

and the neutral equation adds the two rho terms

    - xi(0) int r(t+th) rho(dth) + int rho(dth) int_th^0 r(t+th-s) xi'(s) ds.

All lookups of r are snapped to the common grid, so atoms of mu and rho
must sit on grid points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fundsol import FundamentalSolution
from .measures import Segment, SignedMeasure


class MissingDerivative(ValueError):
    """The neutral formula needs xi' but the segment carries no derivative."""


def _require_grid_atoms(m: SignedMeasure, n: int) -> None:
    h = m.tau / n
    for th, _ in m.atoms:
        k = (th + m.tau) / h
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"atom at {th} is not on the grid of step {h}")


@dataclass(frozen=True)
class VocContext:
    r: FundamentalSolution
    mu: SignedMeasure
    xi: Segment
    rho: SignedMeasure | None = None

    def __post_init__(self):
        for name, m in (("mu", self.mu), ("rho", self.rho)):
            if m is not None and not np.isclose(m.tau, self.r.tau):
                raise ValueError(f"{name} and r have different tau")
        if not np.isclose(self.xi.tau, self.r.tau):
            raise ValueError("xi and r have different tau")
        if not np.isclose(self.xi.dt, self.r.dt):
            raise ValueError("xi and r have different grid steps")
        _require_grid_atoms(self.mu, self.xi.n)
        if self.rho is not None:
            _require_grid_atoms(self.rho, self.xi.n)

    @property
    def n(self) -> int:
        return self.xi.n


def _step_index(r: FundamentalSolution, t: float) -> int:
    m = int(round(t / r.dt))
    if m < 0 or abs(m * r.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a nonnegative grid time")
    if m > int(round(r.T / r.dt)):
        raise ValueError(f"t={t} beyond the horizon of r")
    return m


def _inner(r: FundamentalSolution, m: int, k: int, g: np.ndarray) -> float:
    """int_{th}^0 r(t+th-s) g(s) ds for th = theta_k, t = m*dt, by per-cell trapezoid.

    Along a cell [s_j, s_{j+1}] the argument u = t+th-s decreases, so r is
    taken as a left limit at s_j and a right limit at s_{j+1}; this keeps
    the jump of r at u = 0 (and neutral jumps) on the correct side.
    """
    n = len(g) - 1
    if k >= n:
        return 0.0
    j = np.arange(k, n)
    # grid index of u_j = t + theta_k - s_j is n + m + k - j
    base = n + m + k
    rl = r.left_values[base - j]
    rr = r.values[base - j - 1]
    return float(0.5 * r.dt * np.sum(rl * g[j] + rr * g[j + 1]))


def _double_integral(r, m: int, weights: np.ndarray, g: np.ndarray) -> float:
    total = 0.0
    for k in np.flatnonzero(weights):
        total += weights[k] * _inner(r, m, int(k), g)
    return total


def voc_deterministic(ctx: VocContext, t: float) -> float:
    """Deterministic retarded solution Y(t; xi) at grid time t >= 0."""
    r, n = ctx.r, ctx.n
    m = _step_index(r, t)
    xi = ctx.xi.values
    return float(r.values[n + m] * xi[n] + _double_integral(r, m, ctx.mu.stencil(n), xi))


def voc_neutral_deterministic(ctx: VocContext, t: float) -> float:
    """Deterministic neutral solution; needs ``xi.derivative_values``."""
    if ctx.xi.derivative_values is None:
        raise MissingDerivative("the neutral formula needs derivative_values on xi")
    r, n = ctx.r, ctx.n
    m = _step_index(r, t)
    xi, dxi = ctx.xi.values, ctx.xi.derivative_values
    out = r.values[n + m] * xi[n] + _double_integral(r, m, ctx.mu.stencil(n), xi)
    if ctx.rho is not None:
        w_rho = ctx.rho.stencil(n)
        # r(t + theta_k) has grid index n + m + k - n
        ks = np.flatnonzero(w_rho)
        out -= xi[n] * float(np.sum(w_rho[ks] * r.values[m + ks]))
        out += _double_integral(r, m, w_rho, dxi)
    return float(out)


def voc_path(ctx: VocContext, T: float | None = None) -> np.ndarray:
    """Deterministic solution at every grid time 0, dt, .., T."""
    M = _step_index(ctx.r, ctx.r.T if T is None else T)
    f = voc_neutral_deterministic if ctx.rho is not None else voc_deterministic
    return np.array([f(ctx, m * ctx.r.dt) for m in range(M + 1)])


def stochastic_convolution(r: FundamentalSolution, integrand, noise_increments, t: float) -> float:
    """Ito sum  sum_{t_i < t} r(t - t_i) g(t_i) dW_i  with t_i = i*dt."""
    g = np.asarray(integrand, dtype=float)
    dw = np.asarray(noise_increments, dtype=float)
    if g.shape != dw.shape:
        raise ValueError(f"integrand has {g.shape} entries, increments {dw.shape}")
    m = _step_index(r, t)
    if m > len(dw):
        raise ValueError(f"t={t} needs {m} increments, got {len(dw)}")
    i = np.arange(m)
    return float(np.sum(r.values[r.n + m - i] * g[:m] * dw[:m]))


def stochastic_convolution_path(r: FundamentalSolution, integrand, noise_increments) -> np.ndarray:
    """The stochastic convolution at every grid time 0 .. len(increments)*dt."""
    h = np.asarray(integrand, dtype=float) * np.asarray(noise_increments, dtype=float)
    M = len(h)
    if r.n + M >= len(r.values):
        raise ValueError("r horizon too short for the increments")
    kern = np.array(r.values[r.n:r.n + M + 1])
    kern[0] = 0.0
    if M <= 20000:
        full = np.convolve(kern, h)
    else:
        from scipy.signal import fftconvolve
        full = fftconvolve(kern, h)
    return full[:M + 1]


def voc_reconstruct(ctx: VocContext, integrand, noise_increments) -> np.ndarray:
    """Deterministic part plus stochastic convolution on the grid 0 .. N*dt."""
    M = len(np.asarray(noise_increments))
    det = voc_path(ctx, M * ctx.r.dt)
    return det + stochastic_convolution_path(ctx.r, integrand, noise_increments)
