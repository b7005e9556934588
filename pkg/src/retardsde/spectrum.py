"""Characteristic functions of linear delay equations and their rightmost roots.

Roots are located by the argument principle on rectangles (the
characteristic functions are entire), recursive bisection, and Newton
polishing.  Search rectangles are made finite with a-priori modulus bounds:
for the retarded function, any root with Re(lam) >= s satisfies
|lam| <= Var(mu) * exp(tau * max(0, -s)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .measures import SignedMeasure, total_variation

_SIMPSON_POINTS = 257  # 256 intervals per density piece


class ContourNearZero(RuntimeError):
    """The characteristic function (nearly) vanishes on the contour."""


class BudgetExceeded(RuntimeError):
    """Bisection or contour refinement ran past its limits."""


class Box(NamedTuple):
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= z.real <= self.re_max + slack
                and self.im_min - slack <= z.imag <= self.im_max + slack)

    @property
    def width(self) -> float:
        return self.re_max - self.re_min

    @property
    def height(self) -> float:
        return self.im_max - self.im_min


@dataclass(frozen=True)
class CharSpec:
    kind: str
    mu: SignedMeasure
    rho: SignedMeasure | None = None

    def __post_init__(self):
        if self.kind not in ("retarded", "neutral"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "neutral":
            if self.rho is None:
                raise ValueError("neutral characteristic function needs rho")
            if total_variation(self.rho) >= 1.0:
                raise ValueError("neutral kind requires Var(rho) < 1")
        elif self.rho is not None:
            raise ValueError("rho is only meaningful for the neutral kind")

    @classmethod
    def retarded(cls, mu: SignedMeasure) -> "CharSpec":
        return cls("retarded", mu)

    @classmethod
    def neutral(cls, rho: SignedMeasure, mu: SignedMeasure) -> "CharSpec":
        return cls("neutral", mu, rho)

    @property
    def delay(self) -> float:
        ext = self.mu.support_extent()
        if self.rho is not None:
            ext = max(ext, self.rho.support_extent())
        return ext


@dataclass
class RootReport:
    roots: list
    box: Box
    v0_estimate: float
    certified_negative: bool
    essential_abscissa: float | None = None
    notes: list = field(default_factory=list)


# -- characteristic functions ---------------------------------------------

def _transform(m: SignedMeasure, lam: np.ndarray, moment: int = 0) -> np.ndarray:
    """integral of theta**moment * exp(lam*theta) m(dtheta), vectorised over lam."""
    lam = np.asarray(lam, dtype=complex)
    out = np.zeros_like(lam)
    for th, c in m.atoms:
        out = out + c * (th ** moment) * np.exp(lam * th)
    for lo, hi, val in m.density_pieces():
        s = np.linspace(lo, hi, _SIMPSON_POINTS)
        wts = np.ones(_SIMPSON_POINTS)
        wts[1:-1:2] = 4.0
        wts[2:-1:2] = 2.0
        wts *= (hi - lo) / (3 * (_SIMPSON_POINTS - 1))
        ker = np.exp(lam[..., None] * s) * (s ** moment)
        out = out + val * (ker @ wts)
    return out


def char_retarded(lam, mu: SignedMeasure):
    """Delta(lam) = lam - integral of exp(lam*s) mu(ds)."""
    lam_a = np.asarray(lam, dtype=complex)
    out = lam_a - _transform(mu, lam_a)
    return complex(out) if out.ndim == 0 else out


def char_neutral(lam, rho: SignedMeasure, mu: SignedMeasure):
    """Delta_0(lam) = lam - lam * int exp(lam*t) rho(dt) - int exp(lam*t) mu(dt)."""
    lam_a = np.asarray(lam, dtype=complex)
    out = lam_a - lam_a * _transform(rho, lam_a) - _transform(mu, lam_a)
    return complex(out) if out.ndim == 0 else out


def characteristic(spec: CharSpec, lam):
    if spec.kind == "retarded":
        return char_retarded(lam, spec.mu)
    return char_neutral(lam, spec.rho, spec.mu)


def characteristic_derivative(spec: CharSpec, lam):
    lam_a = np.asarray(lam, dtype=complex)
    d = 1.0 - _transform(spec.mu, lam_a, 1)
    if spec.kind == "neutral":
        d = d - _transform(spec.rho, lam_a) - lam_a * _transform(spec.rho, lam_a, 1)
    return complex(d) if d.ndim == 0 else d


# -- a-priori bounds --------------------------------------------------------

def modulus_bound(spec: CharSpec, sigma: float) -> float:
    """Upper bound on |lam| for every root with Re(lam) >= sigma (inf if none)."""
    grow = np.exp(spec.delay * max(0.0, -sigma))
    bound = total_variation(spec.mu) * grow
    if spec.kind == "neutral":
        q = total_variation(spec.rho) * grow
        if q >= 1.0:
            return np.inf
        bound /= 1.0 - q
    return float(bound)


def essential_abscissa(rho: SignedMeasure) -> float:
    """Abscissa where sum_k |c_k| exp(s*theta_k) = 1 over the atoms of rho.

    Root chains of the neutral characteristic function accumulate on this
    vertical line.  Returns -inf when rho has no delayed atoms.
    """
    atoms = [(th, abs(c)) for th, c in rho.atoms if c != 0.0]
    at_zero = sum(c for th, c in atoms if th == 0.0)
    delayed = [(th, c) for th, c in atoms if th < 0.0]
    if not delayed:
        return -np.inf
    if at_zero >= 1.0:
        return np.inf

    def g(s):
        return at_zero + sum(c * np.exp(s * th) for th, c in delayed) - 1.0

    lo, hi = -1.0, 1.0
    while g(lo) < 0:
        lo *= 2
    while g(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- argument principle -------------------------------------------------------

def _contour_param(box: Box, s: np.ndarray) -> np.ndarray:
    """Counter-clockwise boundary of ``box``, s in [0, 4)."""
    x0, x1, y0, y1 = box
    side = np.floor(s).astype(int) % 4
    u = s - np.floor(s)
    z = np.empty(s.shape, dtype=complex)
    z[side == 0] = (x0 + u[side == 0] * (x1 - x0)) + 1j * y0
    z[side == 1] = x1 + 1j * (y0 + u[side == 1] * (y1 - y0))
    z[side == 2] = (x1 - u[side == 2] * (x1 - x0)) + 1j * y1
    z[side == 3] = x0 + 1j * (y1 - u[side == 3] * (y1 - y0))
    return z


def count_roots_in_box(spec: CharSpec, box: Box, *, contour_tol: float = 1e-9,
                       initial_points: int = 64, max_points: int = 200_000) -> int:
    """Number of zeros inside ``box`` via the winding number of Delta on its boundary."""
    if not (box.width > 0 and box.height > 0):
        raise ValueError(f"degenerate box {box}")
    s = np.arange(4 * initial_points + 1) / initial_points
    vals = characteristic(spec, _contour_param(box, s))
    min_step = 1e-13 * max(box.width, box.height, 1.0)
    scale = max(box.width, box.height)
    while True:
        if np.min(np.abs(vals)) < contour_tol:
            raise ContourNearZero(f"|Delta| < {contour_tol} on boundary of {box}")
        darg = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(darg) >= np.pi / 2
        if not bad.any():
            break
        steps = np.diff(s)
        if np.any(steps[bad] * scale < min_step):
            raise ContourNearZero(f"argument jump not resolved on boundary of {box}")
        if len(s) + bad.sum() > max_points:
            raise BudgetExceeded("contour refinement exceeded point budget")
        mids = 0.5 * (s[:-1][bad] + s[1:][bad])
        mvals = characteristic(spec, _contour_param(box, mids))
        s_new = np.concatenate([s, mids])
        v_new = np.concatenate([vals, mvals])
        order = np.argsort(s_new, kind="stable")
        s, vals = s_new[order], v_new[order]
    winding = darg.sum() / (2 * np.pi)
    k = int(round(winding))
    if abs(winding - k) > 0.05:
        raise ContourNearZero(f"non-integral winding {winding:.3f} on {box}")
    return k


def _count_jittered(spec: CharSpec, box: Box, retries: int = 5, grow_left: bool = False) -> tuple[int, Box]:
    """Count with small outward jitters of the box when the contour hits a zero."""
    err = None
    for k in range(retries + 1):
        if k == 0:
            b = box
        else:
            eps = 1e-6 * (3.7 ** k) * max(1.0, box.width, box.height)
            b = Box(box.re_min - eps * (1.0 if grow_left else 0.37), box.re_max + eps,
                    box.im_min - 0.61 * eps, box.im_max + 0.83 * eps)
        try:
            return count_roots_in_box(spec, b), b
        except ContourNearZero as e:
            err = e
    raise err


# -- root location ----------------------------------------------------------

def newton_refine(spec: CharSpec, z0: complex, tol: float = 1e-10, maxiter: int = 100):
    """Newton iteration on Delta; returns the root or None when it fails."""
    z = complex(z0)
    for _ in range(maxiter):
        f = characteristic(spec, z)
        if abs(f) < tol * 1e-3:
            return z
        d = characteristic_derivative(spec, z)
        if d == 0 or not np.isfinite(d):
            return None
        step = f / d
        z -= step
        if not np.isfinite(z):
            return None
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            break
    return z if abs(characteristic(spec, z)) < tol else None


def _split(spec: CharSpec, box: Box, n_inside: int, retries: int = 6):
    """Halve ``box`` along its longer side, nudging the cut off any zero."""
    vertical = box.width >= box.height
    for k in range(retries):
        frac = 0.5 + (0.0 if k == 0 else 0.03 * k * (-1) ** k)
        if vertical:
            cut = box.re_min + frac * box.width
            a, b = Box(box.re_min, cut, *box[2:]), Box(cut, box.re_max, *box[2:])
        else:
            cut = box.im_min + frac * box.height
            a = Box(box.re_min, box.re_max, box.im_min, cut)
            b = Box(box.re_min, box.re_max, cut, box.im_max)
        try:
            na, nb = count_roots_in_box(spec, a), count_roots_in_box(spec, b)
        except ContourNearZero:
            continue
        if na + nb == n_inside:
            return (a, na), (b, nb)
    raise ContourNearZero(f"could not split {box} cleanly")


def find_roots_in_box(spec: CharSpec, box: Box, n_inside: int | None = None, *,
                      tol: float = 1e-10, max_depth: int = 60, _depth: int = 0) -> list:
    """All zeros inside ``box`` (with multiplicity) by bisection + Newton."""
    if n_inside is None:
        n_inside = count_roots_in_box(spec, box)
    if n_inside == 0:
        return []
    if _depth > max_depth:
        raise BudgetExceeded(f"bisection depth {max_depth} exceeded at {box}")
    if n_inside == 1:
        slack = 1e-9 * max(1.0, box.width, box.height)
        center = complex(0.5 * (box.re_min + box.re_max), 0.5 * (box.im_min + box.im_max))
        z = newton_refine(spec, center, tol)
        if z is not None and box.contains(z, slack):
            return [z]
    elif max(box.width, box.height) < 1e-9:
        z = newton_refine(spec, complex(box.re_min, box.im_min), tol)
        if z is None:
            raise BudgetExceeded("multiple root could not be polished")
        return [z] * n_inside
    (a, na), (b, nb) = _split(spec, box, n_inside)
    return (find_roots_in_box(spec, a, na, tol=tol, max_depth=max_depth, _depth=_depth + 1)
            + find_roots_in_box(spec, b, nb, tol=tol, max_depth=max_depth, _depth=_depth + 1))


def _sort_roots(roots):
    return sorted(roots, key=lambda z: (-round(z.real, 9), abs(z.imag), z.imag))


def certify_negative(spec: CharSpec) -> tuple[bool, Box]:
    """True iff the argument principle finds no zero with Re >= 0."""
    bound = modulus_bound(spec, 0.0)
    if not np.isfinite(bound):
        return False, Box(0.0, np.inf, -np.inf, np.inf)
    edge = bound + 0.5
    box = Box(0.0, edge, -edge, edge)
    n, used = _count_jittered(spec, box, grow_left=True)
    return n == 0, used


def rightmost_roots(spec: CharSpec, count: int = 2, *, omega: float | None = None,
                    tol: float = 1e-10, sigma_floor: float | None = None,
                    omega_cap: float = 200.0) -> RootReport:
    """Roots of largest real part, sorted by (Re desc, |Im| asc).

    Retarded: the left abscissa moves left one unit at a time until ``count``
    roots are enclosed; the imaginary half-height follows the a-priori bound.
    Neutral: chains have no finite bound, so the search uses the half-height
    ``omega`` (default 30) and starts just left of the essential abscissa.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    notes = []
    ess = None
    if spec.kind == "neutral":
        ess = essential_abscissa(spec.rho)
        om = 30.0 if omega is None else float(omega)
        base = ess if np.isfinite(ess) else 0.0
        s_probe = base / 2 if base < 0 else -0.5
        right = max(modulus_bound(spec, s_probe), s_probe) + 0.5
        if not np.isfinite(right):
            right = om
        sigma = base - 0.5
        floor = base - 10.0 if sigma_floor is None else sigma_floor
    else:
        right = None
        sigma = -1.0
        floor = -np.log(omega_cap / max(total_variation(spec.mu), 1e-12)) / max(spec.delay, 1e-12) \
            if sigma_floor is None else sigma_floor
        floor = min(max(floor, -60.0), -1.0)

    while True:
        if spec.kind == "neutral":
            box = Box(sigma, right, -om, om)
        else:
            bnd = modulus_bound(spec, sigma) + 0.5
            box = Box(sigma, max(bnd, sigma + 1.0), -bnd, bnd)
        n, box = _count_jittered(spec, box, grow_left=True)
        if n >= count or sigma - 1.0 < floor:
            break
        sigma -= 1.0

    roots = _sort_roots(find_roots_in_box(spec, box, n, tol=tol))
    if n < count:
        notes.append(f"only {n} roots found with Re >= {box.re_min:.3g}")
    chosen = roots[:count]
    # keep conjugate partners together
    for z in list(chosen):
        if abs(z.imag) > 1e-9 and not any(abs(w - z.conjugate()) < 1e-7 for w in chosen):
            partner = [w for w in roots if abs(w - z.conjugate()) < 1e-7]
            if partner:
                chosen.append(partner[0])
    chosen = _sort_roots(chosen)

    v0 = max((z.real for z in roots), default=-np.inf)
    if spec.kind == "neutral" and ess is not None and np.isfinite(ess):
        if ess > v0:
            notes.append(f"root chain near Re={ess:.6g} lies right of every isolated root found")
        v0 = max(v0, ess)
    certified, _ = certify_negative(spec)
    return RootReport(chosen, box, float(v0), bool(certified), ess, notes)


# -- closed-form tests for mu = a*delta_0 + b*delta_{-1} -------------------

def stability_interval_check(a: float, b: float) -> bool:
    """a < b < -a."""
    return bool(a < b < -a)


def dissipativity_margin(a: float, b: float, eps: float | None = None) -> tuple[float, float]:
    """(lambda1, lambda2) with 2x(ax+by) <= -lambda1 x**2 + lambda2 y**2.

    ``eps`` defaults to |b| (for b = 0 the second constant is 0).
    """
    if eps is None:
        eps = abs(b)
    if eps < 0:
        raise ValueError("eps must be positive")
    if eps == 0:
        if b != 0:
            raise ValueError("eps must be positive")
        return (-2.0 * a, 0.0)
    return (-2.0 * a - eps, b * b / eps)
