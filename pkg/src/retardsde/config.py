"""Line-oriented run configuration.

Grammar: one ``section.key = value`` per line, ``#`` starts a comment.
Repeatable keys (``model.mu.atom``, ``model.mu.density`` and the rho
equivalents) accumulate.  Example::

    model.kind = retarded_diffusion
    model.mu.atom = -1.0 @ -1.0          # weight @ theta
    model.mu.density = 0.5 on [-1, 0]    # value on [lo, hi]
    model.sigma.form = affine_endpoint
    model.sigma.sigma1 = 0.1
    model.sigma.lag = 1.0
    noise.kind = brownian
    init.xi = constant 1.0
    run.T = 60
    run.dt = 0.01

Every problem found is reported, each with its line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .measures import Segment, SignedMeasure
from .noise import JumpLaw, NoiseSpec
from .simulate import MODEL_KINDS, SIGMA_FORMS, DiffusionFunctional, ModelSpec

REPEATABLE = {"model.mu.atom", "model.mu.density", "model.rho.atom", "model.rho.density"}

FLOAT_KEYS = {
    "model.tau",
    "model.sigma.sigma0", "model.sigma.sigma1", "model.sigma.lag", "model.sigma.a",
    "model.sigma.c", "model.sigma.B",
    "noise.rate", "noise.alpha", "noise.scale", "noise.drift",
    "noise.jump.mean", "noise.jump.sd", "noise.jump.alpha", "noise.jump.x_min",
    "run.T", "run.dt",
}
INT_KEYS = {"run.replicas", "run.seed", "run.thin", "roots.count"}
STR_KEYS = {"model.kind", "model.sigma.form", "noise.kind", "noise.jump.law",
            "init.xi", "init.eta", "output.paths", "output.format"}
LIST_KEYS = {"run.checkpoints", "run.offsets"}
KNOWN = REPEATABLE | FLOAT_KEYS | INT_KEYS | STR_KEYS | LIST_KEYS

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_ATOM = re.compile(rf"^\s*({_NUM})\s*@\s*({_NUM})\s*$")
_DENS = re.compile(rf"^\s*({_NUM})\s+on\s+\[\s*({_NUM})\s*,\s*({_NUM})\s*\]\s*$")


class ConfigError(ValueError):
    """All validation problems of a config; ``errors`` holds (line, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors]
        super().__init__("\n".join(lines))


@dataclass
class RunConfig:
    model: ModelSpec
    xi: Segment
    eta: Segment
    T: float
    dt: float
    replicas: int = 1000
    seed: int = 0
    checkpoints: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    thin: int = 1
    root_count: int = 2
    output_paths: str | None = None
    output_format: str = "csv"
    xi_text: str = "constant 1.0"
    eta_text: str = "constant -1.0"

    @property
    def tau(self) -> float:
        return self.model.tau

    def with_dt(self, dt: float) -> "RunConfig":
        """Copy on a different step, with the initial segments resampled."""
        n = int(round(self.tau / dt))
        if n < 1 or abs(n * dt - self.tau) > 1e-9 * self.tau:
            raise ValueError(f"dt = {dt:g} does not divide tau = {self.tau:g}")
        return replace(self, dt=dt, xi=_parse_segment(self.xi_text, self.tau, n),
                       eta=_parse_segment(self.eta_text, self.tau, n))


def _parse_segment(text: str, tau: float, n: int):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("empty segment description")
    kind, args = parts[0], [float(a) for a in parts[1:]]
    if kind == "constant":
        return Segment.constant(tau, n, *(args[:1] or [1.0]))
    if kind == "linear":
        return Segment.linear(tau, n, *args[:2])
    if kind == "sine":
        return Segment.sine(tau, n, *args[:3])
    if kind == "cosine":
        amp = args[0] if args else 1.0
        freq = args[1] if len(args) > 1 else np.pi
        return Segment.sine(tau, n, amp, freq, np.pi / 2)
    if kind == "values":
        vals = np.array(args)
        if len(vals) == n + 1:
            return Segment(tau, vals)
        if len(vals) < 2:
            raise ValueError("values segment needs at least two values")
        src = np.linspace(-tau, 0, len(vals))
        return Segment(tau, np.interp(-tau + (tau / n) * np.arange(n + 1), src, vals))
    raise ValueError(f"unknown segment preset {kind!r} (constant, linear, sine, cosine, values)")


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    errors: list[tuple[int, str]] = []
    vals: dict[str, tuple[int, object]] = {}
    rep: dict[str, list[tuple[int, object]]] = {k: [] for k in REPEATABLE}

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        try:
            if key in REPEATABLE:
                if key.endswith(".atom"):
                    m = _ATOM.match(value)
                    if not m:
                        raise ValueError("atom must read 'weight @ theta'")
                    rep[key].append((ln, (float(m.group(2)), float(m.group(1)))))
                else:
                    m = _DENS.match(value)
                    if not m:
                        raise ValueError("density must read 'value on [lo, hi]'")
                    rep[key].append((ln, tuple(float(g) for g in m.groups())))
                continue
            if key in vals:
                errors.append((ln, f"{key} set twice (first on line {vals[key][0]})"))
                continue
            if key in FLOAT_KEYS:
                v = float(value)
                if not np.isfinite(v):
                    raise ValueError("must be finite")
            elif key in INT_KEYS:
                v = int(value)
            elif key in LIST_KEYS:
                v = [float(x) for x in value.replace(",", " ").split()]
            else:
                v = value
            vals[key] = (ln, v)
        except ValueError as exc:
            errors.append((ln, f"{key}: {exc}"))

    def get(key, default=None):
        return vals[key][1] if key in vals else default

    def line(key):
        if key in vals:
            return vals[key][0]
        if key in rep and rep[key]:
            return rep[key][0][0]
        return 0

    for key in ("model.kind", "run.T", "run.dt"):
        if key not in vals:
            errors.append((0, f"missing required key {key}"))
    if not rep["model.mu.atom"] and not rep["model.mu.density"]:
        errors.append((0, "missing required key model.mu.atom or model.mu.density"))

    kind = get("model.kind")
    if kind is not None and kind not in MODEL_KINDS:
        errors.append((line("model.kind"), f"model.kind must be one of {', '.join(MODEL_KINDS)}"))
        kind = None

    # delay horizon: explicit, or the furthest reach of any delayed term
    reach = [1e-300]
    for k in ("model.mu.atom", "model.rho.atom"):
        reach += [-th for _, (th, _) in rep[k]]
    for k in ("model.mu.density", "model.rho.density"):
        reach += [-lo for _, (_, lo, _) in rep[k]]
    if get("model.sigma.lag") is not None:
        reach.append(get("model.sigma.lag"))
    tau = get("model.tau")
    if tau is None:
        tau = max(reach) if max(reach) > 1e-12 else 1.0
    elif not tau > 0:
        errors.append((line("model.tau"), "model.tau must be positive"))
        tau = 1.0

    def measure(prefix):
        atoms = []
        ok = True
        for ln, (th, c) in rep[f"{prefix}.atom"]:
            if th < -tau - 1e-12 or th > 1e-12:
                errors.append((ln, f"{prefix}.atom location {th} outside [-{tau:g}, 0]"))
                ok = False
            atoms.append((th, c))
        m = SignedMeasure.from_atoms(tau, atoms) if ok else SignedMeasure.zero(tau)
        for ln, (v, lo, hi) in rep[f"{prefix}.density"]:
            if not (-tau - 1e-12 <= lo < hi <= 1e-12):
                errors.append((ln, f"{prefix}.density interval [{lo}, {hi}] invalid for tau={tau:g}"))
                continue
            m = m + SignedMeasure.lebesgue(tau, v, lo, hi)
        return m

    mu = measure("model.mu")
    has_rho = bool(rep["model.rho.atom"] or rep["model.rho.density"])
    rho = measure("model.rho") if has_rho else None
    if has_rho and kind not in (None, "neutral_diffusion"):
        errors.append((line("model.rho.atom") or line("model.rho.density"),
                       "model.rho is only allowed for neutral_diffusion"))

    dt = get("run.dt")
    n = None
    if dt is not None:
        if not dt > 0:
            errors.append((line("run.dt"), "run.dt must be positive"))
        else:
            n = int(round(tau / dt))
            if n < 1 or abs(n * dt - tau) > 1e-9 * tau:
                where = f"model.tau (line {line('model.tau')})" if "model.tau" in vals \
                    else "model.tau (inferred from the delays)"
                errors.append((line("run.dt"), f"run.dt = {dt:g} does not divide {where} = {tau:g}"))
                n = None
    T = get("run.T")
    if T is not None:
        if not T > 0:
            errors.append((line("run.T"), "run.T must be positive"))
        elif dt and dt > 0 and abs(round(T / dt) * dt - T) > 1e-9 * T:
            errors.append((line("run.T"), f"run.dt = {dt:g} does not divide run.T = {T:g}"))

    # sigma
    sigma = None
    form = get("model.sigma.form")
    if kind == "levy_ou":
        if form is not None:
            errors.append((line("model.sigma.form"), "levy_ou takes no model.sigma"))
    elif kind is not None:
        if form is None:
            errors.append((0, f"missing required key model.sigma.form for {kind}"))
        elif form not in SIGMA_FORMS:
            errors.append((line("model.sigma.form"), f"model.sigma.form must be one of {', '.join(SIGMA_FORMS)}"))
        else:
            try:
                if form == "affine_endpoint":
                    sigma = DiffusionFunctional.affine_endpoint(
                        get("model.sigma.sigma0", 0.0), get("model.sigma.sigma1", 0.0),
                        get("model.sigma.lag", 0.0))
                elif form == "affine_integral":
                    sigma = DiffusionFunctional.affine_integral(get("model.sigma.a", 0.0), tau)
                elif form == "constant":
                    sigma = DiffusionFunctional.constant(get("model.sigma.c", 0.0))
                else:
                    sigma = DiffusionFunctional.bounded_saturating(
                        get("model.sigma.B", 1.0), get("model.sigma.lag", 0.0))
                if n is not None:
                    sigma.stencil(tau, n)
            except ValueError as exc:
                errors.append((line("model.sigma.form"), f"model.sigma: {exc}"))
                sigma = None

    # noise
    noise = NoiseSpec.brownian()
    nkind = get("noise.kind", "brownian")
    try:
        jump = None
        if nkind in ("compound_poisson", "brownian_plus_compound_poisson"):
            law = get("noise.jump.law")
            if law is None:
                raise ValueError("missing required key noise.jump.law")
            if law == "exponential":
                jump = JumpLaw.exponential(get("noise.jump.mean", 1.0))
            elif law == "normal":
                jump = JumpLaw.normal(get("noise.jump.sd", 1.0))
            elif law == "pareto":
                jump = JumpLaw.pareto(get("noise.jump.alpha", 1.5), get("noise.jump.x_min", 1.0))
            else:
                raise ValueError(f"unknown noise.jump.law {law!r}")
        if nkind == "brownian":
            noise = NoiseSpec.brownian()
        elif nkind == "compound_poisson":
            noise = NoiseSpec.compound_poisson(get("noise.rate", 1.0), jump)
        elif nkind == "alpha_stable":
            noise = NoiseSpec.alpha_stable(get("noise.alpha", 1.5), get("noise.scale", 1.0))
        elif nkind == "brownian_plus_compound_poisson":
            noise = NoiseSpec.brownian_plus_compound_poisson(
                get("noise.drift", 0.0), get("noise.rate", 1.0), jump)
        else:
            raise ValueError(f"unknown noise.kind {nkind!r}")
    except ValueError as exc:
        errors.append((line("noise.kind") or line("noise.jump.law"), f"noise: {exc}"))

    model = None
    if kind is not None and not errors:
        try:
            model = ModelSpec(kind, mu, rho, sigma, noise)
            if kind in ("levy_ou", "levy_multiplicative"):
                model.check_levy_regime()
        except ValueError as exc:
            errors.append((line("model.kind"), f"model: {exc}"))

    xi = eta = None
    if n is not None:
        for key, default in (("init.xi", "constant 1.0"), ("init.eta", "constant -1.0")):
            try:
                seg = _parse_segment(get(key, default), tau, n)
            except ValueError as exc:
                errors.append((line(key), f"{key}: {exc}"))
                seg = None
            if key == "init.xi":
                xi = seg
            else:
                eta = seg

    replicas = get("run.replicas", 1000)
    if replicas < 1:
        errors.append((line("run.replicas"), "run.replicas must be >= 1"))
    thin = get("run.thin", 1)
    if thin < 1:
        errors.append((line("run.thin"), "run.thin must be >= 1"))
    offsets = get("run.offsets", [0.0, -tau / 2, -tau])
    for th in get("run.offsets", []):
        if th > 1e-12 or th < -tau - 1e-12:
            errors.append((line("run.offsets"), f"offset {th} outside [-{tau:g}, 0]"))
        elif dt and dt > 0 and abs(round(th / dt) * dt - th) > 1e-9:
            errors.append((line("run.offsets"), f"offset {th} not on the run.dt grid"))
    cps = get("run.checkpoints")
    if cps is None and T is not None and T > 0:
        cps = list(np.linspace(T / 10, T, 10))
        if dt and dt > 0:
            cps = [round(c / dt) * dt for c in cps]
    elif cps is not None:
        if any(b <= a for a, b in zip(cps, cps[1:])):
            errors.append((line("run.checkpoints"), "run.checkpoints must be increasing"))
        if T is not None and cps and cps[-1] > T + 1e-12:
            errors.append((line("run.checkpoints"), "run.checkpoints beyond run.T"))
    fmt = get("output.format", "csv")
    if fmt not in ("csv", "json"):
        errors.append((line("output.format"), "output.format must be csv or json"))

    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e[0]))
    return RunConfig(model, xi, eta, T, dt, replicas, get("run.seed", 0), cps, list(offsets),
                     thin, get("roots.count", 2), get("output.paths"), fmt,
                     get("init.xi", "constant 1.0"), get("init.eta", "constant -1.0"))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
