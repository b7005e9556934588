"""Euler-Maruyama simulation of linear-drift delay equations.

Four model classes share one stepping engine:

* ``retarded_diffusion``  dX = (int X(t+th) mu(dth)) dt + sigma(X_t) dW
* ``neutral_diffusion``   d(X - int X rho) = (int X mu) dt + sigma(X_t) dW
* ``levy_ou``             dX = (int X mu) dt + dZ
* ``levy_multiplicative`` dX = (int X mu) dt + sigma(X_{t-}) dZ

The engine advances all replicas at once.  The state is kept in a ring
buffer holding one delay window, so memory does not grow with the horizon;
only thinned samples and per-window sup norms are recorded.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fundsol import NeutralRecoveryFailure, grid_count
from .measures import Segment, SignedMeasure, total_variation
from .noise import BLOCK_STEPS, NoiseSpec, increment_stream, replica_stream, sample_levy_increment

MODEL_KINDS = ("retarded_diffusion", "neutral_diffusion", "levy_ou", "levy_multiplicative")
SIGMA_FORMS = ("affine_endpoint", "affine_integral", "constant", "bounded_saturating")


@dataclass(frozen=True)
class DiffusionFunctional:
    """A named diffusion coefficient sigma acting on the segment.

    affine_endpoint     sigma0 + sigma1 * xi(-lag)
    affine_integral     a * int_{-tau}^0 xi(th) dth
    constant            c
    bounded_saturating  B * tanh(xi(-lag) / B)

    ``lipschitz`` is the constant L in |sigma(xi) - sigma(eta)|**2 <=
    L * int |xi - eta|**2 d(nu), with nu = delta_{-lag} for the endpoint
    forms and Lebesgue measure on [-tau, 0] for the integral form.
    """

    form: str
    sigma0: float = 0.0
    sigma1: float = 0.0
    a: float = 0.0
    c: float = 0.0
    B: float = 1.0
    lag: float = 0.0
    tau: float | None = None

    def __post_init__(self):
        if self.form not in SIGMA_FORMS:
            raise ValueError(f"unknown sigma form {self.form!r}")
        if self.lag < 0:
            raise ValueError("sigma lag must be >= 0")
        if self.form == "bounded_saturating" and not self.B > 0:
            raise ValueError("saturation level B must be positive")
        if self.form == "affine_integral" and self.tau is None:
            raise ValueError("affine_integral needs tau")

    @classmethod
    def affine_endpoint(cls, sigma0: float, sigma1: float, lag: float) -> "DiffusionFunctional":
        return cls("affine_endpoint", sigma0=sigma0, sigma1=sigma1, lag=lag)

    @classmethod
    def affine_integral(cls, a: float, tau: float) -> "DiffusionFunctional":
        return cls("affine_integral", a=a, tau=tau)

    @classmethod
    def constant(cls, c: float) -> "DiffusionFunctional":
        return cls("constant", c=c)

    @classmethod
    def bounded_saturating(cls, B: float, lag: float) -> "DiffusionFunctional":
        return cls("bounded_saturating", B=B, lag=lag)

    @property
    def lipschitz(self) -> float:
        if self.form == "affine_endpoint":
            return self.sigma1 ** 2
        if self.form == "affine_integral":
            return self.a ** 2 * self.tau   # Cauchy-Schwarz
        if self.form == "constant":
            return 0.0
        return 1.0

    @property
    def is_bounded(self) -> bool:
        return self.form in ("constant", "bounded_saturating") or (
            self.form == "affine_endpoint" and self.sigma1 == 0.0)

    @property
    def is_zero(self) -> bool:
        return {"affine_endpoint": self.sigma0 == 0 and self.sigma1 == 0,
                "affine_integral": self.a == 0,
                "constant": self.c == 0,
                "bounded_saturating": False}[self.form]

    def stencil(self, tau: float, n: int) -> np.ndarray:
        """Weights of the linear functional inside sigma on the segment grid."""
        if self.form == "constant":
            return np.zeros(n + 1)
        if self.form == "affine_integral":
            if not np.isclose(self.tau, tau):
                raise ValueError("affine_integral tau differs from the model tau")
            return SignedMeasure.lebesgue(tau).stencil(n)
        if self.lag > tau + 1e-12:
            raise ValueError(f"sigma lag {self.lag} exceeds tau {tau}")
        k = self.lag / (tau / n)
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"sigma lag {self.lag} is not on the grid")
        w = np.zeros(n + 1)
        w[n - int(round(k))] = 1.0
        return w

    def apply(self, z):
        """sigma as a function of the stencil value z."""
        if self.form == "affine_endpoint":
            return self.sigma0 + self.sigma1 * z
        if self.form == "affine_integral":
            return self.a * z
        if self.form == "constant":
            return np.full_like(np.asarray(z, dtype=float), self.c)
        return self.B * np.tanh(z / self.B)

    def __call__(self, xi: Segment) -> float:
        return float(self.apply(self.stencil(xi.tau, xi.n) @ xi.values))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    mu: SignedMeasure
    rho: SignedMeasure | None = None
    sigma: DiffusionFunctional | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec.brownian)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.rho is not None and self.kind != "neutral_diffusion":
            raise ValueError("rho is only allowed for neutral_diffusion")
        if self.kind == "neutral_diffusion" and self.rho is None:
            object.__setattr__(self, "rho", SignedMeasure.zero(self.mu.tau))
        if self.kind == "levy_ou" and self.sigma is not None:
            raise ValueError("levy_ou has unit noise coefficient; sigma must be absent")
        if self.kind != "levy_ou" and self.sigma is None:
            raise ValueError(f"{self.kind} needs a sigma functional")
        if self.kind in ("retarded_diffusion", "neutral_diffusion") and self.noise.kind != "brownian":
            raise ValueError("diffusion models are driven by Brownian noise")
        if self.rho is not None and not np.isclose(self.rho.tau, self.mu.tau):
            raise ValueError("rho and mu must share tau")

    @property
    def tau(self) -> float:
        return self.mu.tau

    def check_levy_regime(self) -> None:
        """Raise unless the jump law fits the model's moment regime."""
        if self.kind == "levy_ou" and not self.noise.large_jump_first_moment_finite:
            raise ValueError("levy_ou needs int_{|z|>1} |z| nu(dz) < inf")
        if self.kind == "levy_multiplicative" and not self.sigma.is_bounded \
                and not self.noise.large_jump_second_moment_finite:
            raise ValueError("unbounded sigma needs a jump law with finite second moment")


@dataclass(frozen=True)
class PathGrid:
    """One trajectory on t_i = -tau + i*dt, i = 0 .. n + N."""

    dt: float
    T: float
    tau: float
    values: np.ndarray
    seed: int
    replica_id: int

    @property
    def n(self) -> int:
        return int(round(self.tau / self.dt))

    @property
    def t(self) -> np.ndarray:
        return (np.arange(len(self.values)) - self.n) * self.dt

    def at(self, t: float) -> float:
        i = int(round(t / self.dt)) + self.n
        if not 0 <= i < len(self.values):
            raise ValueError(f"t={t} outside [-tau, T]")
        return float(self.values[i])

    def segment(self, t: float) -> Segment:
        i = int(round(t / self.dt)) + self.n
        if i < self.n or i >= len(self.values):
            raise ValueError(f"segment time {t} outside [0, T]")
        return Segment(self.tau, self.values[i - self.n:i + 1])


@dataclass
class Ensemble:
    """Recorded output of a batch of replicas.

    ``values[k, j]`` is X(t[k]) for replica ``replica_ids[j]``;
    ``window_sup[k, j]`` the sup norm of the segment at ``window_t[k]``.
    """

    dt: float
    T: float
    tau: float
    t: np.ndarray
    values: np.ndarray
    window_t: np.ndarray
    window_sup: np.ndarray
    seed: int
    replica_ids: np.ndarray

    def at(self, t: float) -> np.ndarray:
        k = np.flatnonzero(np.isclose(self.t, t, atol=1e-9 * max(1.0, abs(t))))
        if len(k) == 0:
            raise ValueError(f"time {t} was not recorded")
        return self.values[k[0]]

    def path(self, j: int) -> PathGrid:
        if not np.allclose(np.diff(self.t), self.dt):
            raise ValueError("full paths need thin=1")
        return PathGrid(self.dt, self.T, self.tau, self.values[:, j].copy(), self.seed,
                        int(self.replica_ids[j]))


def _initial_matrix(xi, n: int, R: int, tau: float) -> np.ndarray:
    segs = xi if isinstance(xi, (list, tuple)) else [xi]
    cols = []
    for s in segs:
        if not np.isclose(s.tau, tau):
            raise ValueError("initial segment tau differs from the model tau")
        if s.n != n:
            raise ValueError(f"initial segment has {s.n} cells, the grid needs {n}")
        cols.append(s.values)
    X0 = np.array(cols).T
    if X0.shape[1] == 1:
        X0 = np.repeat(X0, R, axis=1)
    if X0.shape[1] != R:
        raise ValueError("need one initial segment or one per replica")
    return X0


def _sparse(w: np.ndarray):
    idx = np.flatnonzero(w)
    return idx, w[idx]


def _model_increment_noise(model: ModelSpec) -> NoiseSpec:
    return model.noise if model.kind in ("levy_ou", "levy_multiplicative") else NoiseSpec.brownian()


def simulate_ensemble(model: ModelSpec, xi, T: float, dt: float, seed: int,
                      replicas: int = 1, replica_ids=None, thin: int = 1,
                      increments: np.ndarray | None = None,
                      record_from: float | None = None, record_at=None) -> Ensemble:
    """Advance ``replicas`` independent copies with Euler-Maruyama.

    Replica j draws its increments from ``replica_stream(seed, replica_ids[j])``
    in blocks of ``BLOCK_STEPS`` steps, so every path depends only on
    (seed, replica id) and never on batch composition.  ``increments`` (shape
    (N,) or (N, replicas)) replaces the random stream entirely.  ``xi`` is one
    Segment or a list with one Segment per replica.  Values are recorded
    every ``thin`` steps (from ``record_from`` if given) or only at the grid
    times ``record_at``.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")
    tau = model.tau
    n = grid_count(tau, dt)
    N = int(round(T / dt))
    if abs(N * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("dt must divide T")
    ids = np.arange(replicas) if replica_ids is None else np.asarray(replica_ids, dtype=np.int64)
    R = len(ids)
    if thin < 1:
        raise ValueError("thin must be >= 1")
    X0 = _initial_matrix(xi, n, R, tau)

    w_mu = model.mu.stencil(n)
    jm, wm = _sparse(w_mu)
    if model.sigma is None:
        sig_idx, sig_w, sig_apply = None, None, lambda z: 1.0
    else:
        sig_idx, sig_w = _sparse(model.sigma.stencil(tau, n))
        sig_apply = model.sigma.apply
    neutral = model.kind == "neutral_diffusion"
    if neutral:
        w_rho = model.rho.stencil(n)
        rho_now = w_rho[n]
        if abs(rho_now) >= 1.0 or (rho_now != 0.0 and total_variation(model.rho) >= 1.0):
            raise NeutralRecoveryFailure("rho mass at theta=0 makes recovery non-contractive")
        denom = 1.0 - rho_now
        jr, wr = _sparse(w_rho[:n])
    if model.kind in ("levy_ou", "levy_multiplicative"):
        model.check_levy_regime()
    noise = _model_increment_noise(model)

    if increments is not None:
        inc = np.asarray(increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.shape[0] != N or inc.shape[1] not in (1, R):
            raise ValueError(f"increments must have shape ({N},) or ({N}, {R})")
        inc = np.broadcast_to(inc, (N, R))
        streams = None
    else:
        streams = [replica_stream(seed, int(r)) for r in ids]

    # ring buffer: time index i in [-n, N] lives in slot i % L
    L = n + 1
    buf = np.empty_like(X0)
    for j in range(n + 1):
        buf[(j - n) % L] = X0[j]

    def combo(idx, w, i):
        # sum_j w_j X(t_i - tau + j dt)
        if len(idx) == 0:
            return np.zeros(R)
        slots = (i - n + idx) % L
        if len(idx) <= 4:
            out = w[0] * buf[slots[0]]
            for k in range(1, len(idx)):
                out = out + w[k] * buf[slots[k]]
            return out
        return w @ buf[slots]

    if record_at is not None:
        rec_idx = sorted({int(round(t / dt)) for t in record_at})
        if rec_idx[0] < -n or rec_idx[-1] > N:
            raise ValueError("record_at times outside [-tau, T]")
    elif record_from is None:
        rec_idx = list(range(-n, N + 1, thin))
    else:
        rec_idx = list(range(max(0, int(round(record_from / dt))), N + 1, thin))
    rec_pos = {i: k for k, i in enumerate(rec_idx)}
    values = np.empty((len(rec_idx), R))
    for i in rec_idx:
        if i <= 0:
            values[rec_pos[i]] = X0[i + n]

    n_win = N // n
    window_sup = np.empty((n_win + 1, R))
    window_sup[0] = np.max(np.abs(X0), axis=0)
    wmax = np.abs(X0[n]).copy()

    X = X0[n].copy()
    if neutral:
        M = X - (combo(jr, wr, 0) + rho_now * X)
    block = None
    for i in range(N):
        if streams is not None:
            b = i % BLOCK_STEPS
            if b == 0:
                block = np.empty((BLOCK_STEPS, R))
                for c, g in enumerate(streams):
                    block[:, c] = sample_levy_increment(noise, dt, g, BLOCK_STEPS)
            dZ = block[b]
        else:
            dZ = inc[i]
        drift = combo(jm, wm, i)
        if sig_idx is None:
            diff = dZ
        else:
            diff = sig_apply(combo(sig_idx, sig_w, i)) * dZ
        if neutral:
            M = M + drift * dt + diff
            # X(t_{i+1} + theta) for theta < 0 is already known
            X = (M + combo(jr, wr, i + 1)) / denom
        else:
            X = X + drift * dt + diff
        buf[(i + 1) % L] = X
        absX = np.abs(X)
        np.maximum(wmax, absX, out=wmax)
        if (i + 1) % n == 0:
            window_sup[(i + 1) // n] = wmax
            wmax = absX.copy()
        k = rec_pos.get(i + 1)
        if k is not None:
            values[k] = X
    t_rec = np.array(rec_idx, dtype=float) * dt
    window_t = np.arange(n_win + 1) * tau
    return Ensemble(dt, N * dt, tau, t_rec, values, window_t, window_sup, int(seed), ids)


def _single(model, xi, T, dt, seed, replica_id, increments):
    ens = simulate_ensemble(model, xi, T, dt, seed, replica_ids=[replica_id],
                            increments=increments)
    return ens.path(0)


def euler_retarded(model: ModelSpec, xi: Segment, T: float, dt: float, seed: int = 0,
                   replica_id: int = 0, increments=None) -> PathGrid:
    if model.kind != "retarded_diffusion":
        raise ValueError("euler_retarded needs a retarded_diffusion model")
    return _single(model, xi, T, dt, seed, replica_id, increments)


def euler_neutral(model: ModelSpec, xi: Segment, T: float, dt: float, seed: int = 0,
                  replica_id: int = 0, increments=None) -> PathGrid:
    if model.kind != "neutral_diffusion":
        raise ValueError("euler_neutral needs a neutral_diffusion model")
    return _single(model, xi, T, dt, seed, replica_id, increments)


def euler_levy_ou(model: ModelSpec, xi: Segment, T: float, dt: float, seed: int = 0,
                  replica_id: int = 0, increments=None) -> PathGrid:
    if model.kind != "levy_ou":
        raise ValueError("euler_levy_ou needs a levy_ou model")
    return _single(model, xi, T, dt, seed, replica_id, increments)


def euler_levy_multiplicative(model: ModelSpec, xi: Segment, T: float, dt: float, seed: int = 0,
                              replica_id: int = 0, increments=None) -> PathGrid:
    if model.kind != "levy_multiplicative":
        raise ValueError("euler_levy_multiplicative needs a levy_multiplicative model")
    return _single(model, xi, T, dt, seed, replica_id, increments)


def replica_increments(model: ModelSpec, T: float, dt: float, seed: int, replica_id: int = 0) -> np.ndarray:
    """The increments the engine draws for one replica (for VOC cross-checks)."""
    return increment_stream(_model_increment_noise(model), dt, seed, replica_id, int(round(T / dt)))
