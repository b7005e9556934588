"""Finite signed measures on [-tau, 0] and sampled segment paths.

A measure is a finite set of atoms plus an optional piecewise-constant
density.  Integration against a path sampled on the uniform segment grid
reduces to a weight vector (a *stencil*) over the grid points, which is what
the simulators and the fundamental-solution integrator use in their inner
loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

_EDGE_TOL = 1e-12


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SignedMeasure:
    """Atoms ``(theta_k, c_k)`` plus a piecewise-constant density on [-tau, 0].

    ``density_breaks`` holds the increasing breakpoints b_0 < ... < b_m and
    ``density_values`` the m values (mass per unit time) on [b_j, b_{j+1}].
    """

    tau: float
    atoms: tuple = ()
    density_breaks: tuple = ()
    density_values: tuple = ()

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        atoms = tuple((float(th), float(c)) for th, c in self.atoms)
        locs = [th for th, _ in atoms]
        for th in locs:
            if th < -self.tau - _EDGE_TOL or th > _EDGE_TOL:
                raise ValueError(f"atom location {th} outside [-{self.tau}, 0]")
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)

        breaks = tuple(float(b) for b in self.density_breaks)
        values = tuple(float(v) for v in self.density_values)
        if breaks or values:
            if len(breaks) != len(values) + 1:
                raise ValueError("density needs len(breaks) == len(values) + 1")
            if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
                raise ValueError("density breakpoints must be strictly increasing")
            if breaks[0] < -self.tau - _EDGE_TOL or breaks[-1] > _EDGE_TOL:
                raise ValueError("density support must lie in [-tau, 0]")
            if not all(np.isfinite(values)):
                raise ValueError("density values must be finite")
        object.__setattr__(self, "density_breaks", breaks)
        object.__setattr__(self, "density_values", values)

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, tau: float) -> "SignedMeasure":
        return cls(tau)

    @classmethod
    def dirac(cls, theta: float, weight: float = 1.0, tau: float | None = None) -> "SignedMeasure":
        return cls(tau if tau is not None else max(-theta, 1.0), ((theta, weight),))

    @classmethod
    def from_atoms(cls, tau: float, atoms: Sequence) -> "SignedMeasure":
        # merge repeated locations so callers can add c*delta_a + d*delta_a
        merged: dict[float, float] = {}
        for th, c in atoms:
            merged[float(th)] = merged.get(float(th), 0.0) + float(c)
        return cls(tau, tuple(sorted(merged.items())))

    @classmethod
    def lebesgue(cls, tau: float, value: float = 1.0, lo: float | None = None,
                 hi: float = 0.0) -> "SignedMeasure":
        lo = -tau if lo is None else lo
        return cls(tau, (), (lo, hi), (value,))

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        if not np.isclose(self.tau, other.tau):
            raise ValueError("cannot add measures with different tau")
        atoms: dict[float, float] = dict(self.atoms)
        for th, c in other.atoms:
            atoms[th] = atoms.get(th, 0.0) + c
        if self.density_breaks and other.density_breaks:
            breaks = np.union1d(self.density_breaks, other.density_breaks)
            mids = 0.5 * (breaks[1:] + breaks[:-1])
            values = self.density(mids) + other.density(mids)
            return SignedMeasure(self.tau, tuple(sorted(atoms.items())), tuple(breaks), tuple(values))
        src = self if self.density_breaks else other
        return SignedMeasure(self.tau, tuple(sorted(atoms.items())),
                             src.density_breaks, src.density_values)

    def __mul__(self, k: float) -> "SignedMeasure":
        return SignedMeasure(self.tau, tuple((th, k * c) for th, c in self.atoms),
                             self.density_breaks, tuple(k * v for v in self.density_values))

    __rmul__ = __mul__

    # -- queries ----------------------------------------------------------
    @property
    def has_density(self) -> bool:
        return bool(self.density_values)

    def density(self, theta) -> np.ndarray:
        """Density value at ``theta`` (0 outside the support)."""
        theta = np.asarray(theta, dtype=float)
        if not self.has_density:
            return np.zeros_like(theta)
        b = np.asarray(self.density_breaks)
        v = np.asarray(self.density_values)
        idx = np.searchsorted(b, theta, side="right") - 1
        inside = (idx >= 0) & (idx < len(v))
        out = np.zeros_like(theta)
        out[inside] = v[idx[inside]]
        return out

    def density_pieces(self):
        b = self.density_breaks
        return [(b[j], b[j + 1], self.density_values[j]) for j in range(len(self.density_values))]

    def support_extent(self) -> float:
        """Largest |theta| carrying mass (0 for the zero measure)."""
        ext = 0.0
        for th, c in self.atoms:
            if c != 0.0:
                ext = max(ext, -th)
        for lo, _, v in self.density_pieces():
            if v != 0.0:
                ext = max(ext, -lo)
        return ext

    def total_variation(self) -> float:
        return total_variation(self)

    def stencil(self, n: int, part: str = "all") -> np.ndarray:
        """Weights w_i on grid theta_i = -tau + i*tau/n with sum_i w_i f(theta_i)
        equal to the integral of the linear interpolant of f against the measure.

        ``part`` selects ``"atoms"``, ``"density"`` or ``"all"``.
        """
        if n < 1:
            raise ValueError("grid count n must be >= 1")
        h = self.tau / n
        w = np.zeros(n + 1)
        if part in ("all", "atoms"):
            for th, c in self.atoms:
                x = (th + self.tau) / h
                i = int(np.floor(x + 1e-9))
                frac = x - i
                if abs(frac) < 1e-9 or i >= n:
                    w[min(i, n)] += c
                else:
                    w[i] += c * (1.0 - frac)
                    w[i + 1] += c * frac
        if part in ("all", "density"):
            grid = -self.tau + h * np.arange(n + 1)
            left, right = grid[:-1], grid[1:]
            for lo, hi, val in self.density_pieces():
                p = np.clip(lo, left, right)
                q = np.clip(hi, left, right)
                # integrals of the two hat functions over [p, q] within each cell
                w[:-1] += val * ((right - p) ** 2 - (right - q) ** 2) / (2 * h)
                w[1:] += val * ((q - left) ** 2 - (p - left) ** 2) / (2 * h)
        return w


def total_variation(m: SignedMeasure) -> float:
    """Var(m) = sum |c_k| + integral of |density|."""
    tv = sum(abs(c) for _, c in m.atoms)
    tv += sum(abs(v) * (hi - lo) for lo, hi, v in m.density_pieces())
    return float(tv)


@dataclass(frozen=True)
class Segment:
    """Path on [-tau, 0] stored at the n+1 grid points theta_i = -tau + i*tau/n."""

    tau: float
    values: np.ndarray
    derivative_values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        v = _readonly(self.values)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("segment needs at least two grid values")
        if not np.all(np.isfinite(v)):
            raise ValueError("segment values must be finite")
        object.__setattr__(self, "values", v)
        if self.derivative_values is not None:
            d = _readonly(self.derivative_values)
            if d.shape != v.shape:
                raise ValueError("derivative_values must match values in length")
            object.__setattr__(self, "derivative_values", d)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def dt(self) -> float:
        return self.tau / self.n

    @property
    def grid(self) -> np.ndarray:
        return -self.tau + self.dt * np.arange(self.n + 1)

    @classmethod
    def from_function(cls, tau: float, n: int, f: Callable, df: Callable | None = None) -> "Segment":
        grid = -tau + (tau / n) * np.arange(n + 1)
        vals = np.array([f(th) for th in grid], dtype=float)
        dvals = None if df is None else np.array([df(th) for th in grid], dtype=float)
        return cls(tau, vals, dvals)

    @classmethod
    def constant(cls, tau: float, n: int, value: float = 1.0) -> "Segment":
        return cls(tau, np.full(n + 1, float(value)), np.zeros(n + 1))

    @classmethod
    def linear(cls, tau: float, n: int, intercept: float = 0.0, slope: float = 1.0) -> "Segment":
        """xi(theta) = intercept + slope * theta."""
        return cls.from_function(tau, n, lambda th: intercept + slope * th, lambda th: slope)

    @classmethod
    def sine(cls, tau: float, n: int, amplitude: float = 1.0, freq: float = np.pi,
             phase: float = 0.0) -> "Segment":
        return cls.from_function(
            tau, n,
            lambda th: amplitude * np.sin(freq * th + phase),
            lambda th: amplitude * freq * np.cos(freq * th + phase),
        )

    def eval(self, theta):
        return segment_eval(self, theta)

    def sup_norm(self) -> float:
        return segment_sup_norm(self)


def segment_eval(s: Segment, theta):
    th = np.asarray(theta, dtype=float)
    if np.any(th < -s.tau - _EDGE_TOL) or np.any(th > _EDGE_TOL):
        raise ValueError(f"theta={theta} outside [-{s.tau}, 0]")
    out = np.interp(np.clip(th, -s.tau, 0.0), s.grid, s.values)
    return float(out) if np.ndim(out) == 0 else out


def segment_sup_norm(s: Segment) -> float:
    return float(np.max(np.abs(s.values)))


PathLike = Union[Segment, Callable[[np.ndarray], np.ndarray]]


def integrate_against(m: SignedMeasure, f: PathLike, n: int = 2000) -> float:
    """Integral of the path ``f`` over [-tau, 0] against ``m``.

    A :class:`Segment` is integrated on its own grid (exact for its linear
    interpolant).  A callable is evaluated exactly at the atoms and the
    density part uses trapezoid quadrature on an ``n``-cell grid.
    """
    if isinstance(f, Segment):
        if not np.isclose(f.tau, m.tau):
            raise ValueError("segment and measure have different tau")
        return float(m.stencil(f.n) @ f.values)
    total = 0.0
    for th, c in m.atoms:
        total += c * float(f(th))
    if m.has_density:
        grid = -m.tau + (m.tau / n) * np.arange(n + 1)
        try:
            vals = np.asarray(f(grid), dtype=float)
            if vals.shape != grid.shape:
                raise ValueError
        except (TypeError, ValueError):
            vals = np.array([f(th) for th in grid], dtype=float)
        total += float(m.stencil(n, part="density") @ vals)
    return total
