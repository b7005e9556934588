"""Named end-to-end scenarios.

Each scenario runs at a default scale (overridable), evaluates a list of
checks and returns the artifacts it would write.  ``passed`` is True iff
every check passes.
"""
from __future__ import annotations

import inspect
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .fundsol import fit_decay, fundamental_retarded
from .measures import Segment, SignedMeasure, total_variation
from .noise import JumpLaw, NoiseSpec
from .output import csv_text, json_text
from .simulate import DiffusionFunctional, ModelSpec, simulate_ensemble
from .spectrum import (CharSpec, char_neutral, dissipativity_margin, rightmost_roots,
                       stability_interval_check)
from .stationarity import (BOUNDED, CONVERGING, coupling_contraction, hill_tail_index,
                           segment_moment_bound, stationarity_convergence_test)


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    target: str = ""


@dataclass
class ExperimentResult:
    name: str
    checks: list
    artifacts: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "failures": self.failures,
                "seconds": self.seconds, "summary": self.summary,
                "checks": [{"name": c.name, "passed": c.passed, "value": c.value,
                            "target": c.target} for c in self.checks]}


# -- models used by the scenarios -------------------------------------------
def pure_delay(weight: float = -1.0, delay: float = 1.0) -> SignedMeasure:
    return SignedMeasure.dirac(-delay, weight, tau=delay)


def two_point(a: float, b: float) -> SignedMeasure:
    """a*delta_0 + b*delta_{-1}."""
    return SignedMeasure.from_atoms(1.0, [(0.0, a), (-1.0, b)])


def delayed_linear_noise_model(slope: float = 0.1) -> ModelSpec:
    """dX = -X(t-1) dt + slope * X(t-1) dW."""
    return ModelSpec("retarded_diffusion", pure_delay(),
                     sigma=DiffusionFunctional.affine_endpoint(0.0, slope, 1.0))


def neutral_example_measures():
    return SignedMeasure.dirac(-1.0, -1.0 / 3.0), pure_delay()


def neutral_integral_noise_model(a: float = 0.05) -> ModelSpec:
    """d(X + X(t-1)/3) = -X(t-1) dt + a * int_{-1}^0 X(t+th) dth dW."""
    rho, mu = neutral_example_measures()
    return ModelSpec("neutral_diffusion", mu, rho=rho,
                     sigma=DiffusionFunctional.affine_integral(a, 1.0))


def levy_ou_model(noise: NoiseSpec) -> ModelSpec:
    return ModelSpec("levy_ou", pure_delay(), noise=noise)


def multiplicative_jump_model(slope: float = 0.1) -> ModelSpec:
    noise = NoiseSpec.brownian_plus_compound_poisson(0.0, 1.0, JumpLaw.normal(1.0))
    return ModelSpec("levy_multiplicative", pure_delay(),
                     sigma=DiffusionFunctional.affine_endpoint(0.0, slope, 1.0), noise=noise)


def ou_model(a: float = -1.0, c: float = 1.0) -> ModelSpec:
    return ModelSpec("retarded_diffusion", SignedMeasure.dirac(0.0, a, tau=1.0),
                     sigma=DiffusionFunctional.constant(c))


def _roots_csv(report, spec) -> str:
    from .spectrum import characteristic
    rows = [(z.real, z.imag, abs(characteristic(spec, z))) for z in report.roots]
    return csv_text(["re", "im", "residual"], rows)


# -- scenarios ----------------------------------------------------------------
def ex36(seed: int = 0, replicas: int = 1000, T: float = 60.0, dt: float = 0.01,
         slope: float = 0.1) -> ExperimentResult:
    spec = CharSpec.retarded(pure_delay())
    rep = rightmost_roots(spec, 2)
    top = rep.roots[0]
    checks = [
        Check("rightmost root", abs(top.real + 0.3181) < 1e-3 and abs(abs(top.imag) - 1.3372) < 1e-3,
              [top.real, abs(top.imag)], "-0.3181 +- 1.3372i within 1e-3"),
        Check("certified negative", rep.certified_negative, rep.certified_negative, "true"),
    ]
    r = fundamental_retarded(pure_delay(), 30.0, 1e-3)
    fit = fit_decay(r)
    checks.append(Check("decay rate", abs(fit.gamma - rep.v0_estimate) < 0.05, fit.gamma,
                        f"within 0.05 of {rep.v0_estimate:.4f}"))
    n = int(round(1.0 / dt))
    cc = coupling_contraction(delayed_linear_noise_model(slope), Segment.constant(1.0, n, 1.0),
                              Segment.constant(1.0, n, -1.0), T, dt, replicas, seed)
    checks.append(Check("coupling contraction", cc.fitted_rate < 0, cc.fitted_rate, "< 0"))
    arts = {
        "ex36_roots.csv": _roots_csv(rep, spec),
        "ex36_contraction.csv": csv_text(["t", "msd"], zip(cc.times, cc.msd)),
    }
    summ = {"v0": rep.v0_estimate, "decay": {"c": fit.c, "gamma": fit.gamma},
            "contraction_rate": cc.fitted_rate}
    return ExperimentResult("ex36", checks, arts, summ)


def ex38(a: float = -1.0, b: float = 0.5) -> ExperimentResult:
    spec = CharSpec.retarded(two_point(a, b))
    rep = rightmost_roots(spec, 2)
    check = stability_interval_check(a, b)
    agree = check == (rep.v0_estimate < 0)
    checks = [Check("interval check agrees with root finder", agree,
                    {"interval_check": check, "v0": rep.v0_estimate}, "agreement")]
    lam1, lam2 = dissipativity_margin(a, b)
    summ = {"a": a, "b": b, "interval_check": check, "v0": rep.v0_estimate,
            "certified_negative": rep.certified_negative,
            "dissipativity_margin": [lam1, lam2]}
    return ExperimentResult("ex38", checks, {"ex38_roots.csv": _roots_csv(rep, spec)}, summ)


def ex43(seed: int = 0, replicas: int = 1000, T: float = 60.0, dt: float = 0.01,
         a: float = 0.05) -> ExperimentResult:
    rho, mu = neutral_example_measures()
    spec = CharSpec.neutral(rho, mu)
    lam = -2.313474269
    resid = abs(char_neutral(lam, rho, mu))
    rep = rightmost_roots(spec, 8)
    chain = [z for z in rep.roots if -1.2 < z.real < -0.9]
    kappa = total_variation(rho)
    checks = [
        Check("real root residual", resid < 1e-6, resid, "< 1e-6"),
        Check("chain roots near -ln 3", len(chain) >= 3, len(chain), ">= 3 in (-1.2, -0.9)"),
        Check("v0 negative", rep.v0_estimate < 0, rep.v0_estimate, "< 0"),
        Check("Var(rho) < 1/2", kappa < 0.5, kappa, "< 0.5"),
    ]
    n = int(round(1.0 / dt))
    model = neutral_integral_noise_model(a)
    xi, eta = Segment.constant(1.0, n, 1.0), Segment.constant(1.0, n, -1.0)
    conv = stationarity_convergence_test(model, xi, eta, np.arange(5.0, T + 1e-9, 5.0), dt,
                                         replicas, seed)
    for name, v in conv.verdicts.items():
        checks.append(Check(f"{name} verdict", v == CONVERGING, v, CONVERGING))
    mb = segment_moment_bound(model, xi, T, dt, replicas, seed, p=2)
    checks.append(Check("second moment", mb.verdict == BOUNDED, mb.verdict, BOUNDED))
    arts = {"ex43_roots.csv": _roots_csv(rep, spec),
            "ex43_curves.csv": _curves_csv(conv)}
    summ = {"v0": rep.v0_estimate, "essential_abscissa": rep.essential_abscissa,
            "notes": rep.notes, "verdicts": conv.verdicts}
    return ExperimentResult("ex43", checks, arts, summ)


def _curves_csv(conv) -> str:
    rows = []
    for name in ("convergence", "uniqueness", "contraction"):
        t, v = conv.curves[name]
        rows += [(name, ti, vi) for ti, vi in zip(t, v)]
    return csv_text(["curve", "t", "value"], rows)


def levy_mean_estimate(model: ModelSpec, xi: Segment, T: float, dt: float, replicas: int,
                       seed: int) -> float:
    """Long-run mean: average over replicas and over t in [T/2, T] (step tau)."""
    times = np.arange(T / 2, T + 1e-9, model.tau)
    ens = simulate_ensemble(model, xi, T, dt, seed, replicas=replicas, record_at=times)
    return float(np.mean([ens.at(t) for t in times]))


def stable_variance_diagnostic(model: ModelSpec, xi: Segment, T: float, dt: float,
                               replicas: int, seed: int, k: int = 400) -> dict:
    """Hill tail index of |X| pooled over t in [T/2, T] (every 5 tau), and the
    sample second moment on nested replica subsets."""
    times = np.arange(T / 2, T + 1e-9, 5 * model.tau)
    ens = simulate_ensemble(model, xi, T, dt, seed, replicas=replicas, record_at=times)
    pool = np.concatenate([ens.at(t) for t in times])
    xT = ens.at(times[-1])
    sizes = [replicas // 8, replicas // 4, replicas // 2, replicas]
    return {"hill": hill_tail_index(pool, k),
            "second_moment_by_size": {int(s): float(np.mean(xT[:s] ** 2)) for s in sizes}}


def thm51(seed: int = 0, replicas: int = 2000, T: float = 200.0, dt: float = 0.01) -> ExperimentResult:
    n = int(round(1.0 / dt))
    xi = Segment.constant(1.0, n, 1.0)
    cp = levy_ou_model(NoiseSpec.compound_poisson(1.0, JumpLaw.exponential(1.0)))
    mb = segment_moment_bound(cp, xi, T, dt, replicas, seed, p=1, norm="point")
    mean = levy_mean_estimate(cp, xi, T, dt, replicas, seed)
    st = levy_ou_model(NoiseSpec.alpha_stable(1.5))
    mbs = segment_moment_bound(st, xi, T, dt, replicas, seed, p=1, norm="point",
                               estimator="median_of_means")
    diag = stable_variance_diagnostic(st, xi, T, dt, replicas, seed)
    checks = [
        Check("compound Poisson E|X| bounded", mb.verdict == BOUNDED, mb.verdict, BOUNDED),
        Check("stationary mean", abs(mean - 1.0) <= 0.05, mean, "1.0 +- 5%"),
        Check("stable E|X| bounded", mbs.verdict == BOUNDED, mbs.verdict, BOUNDED),
        Check("stable variance infinite", diag["hill"] < 2.0, diag["hill"], "Hill index < 2"),
    ]
    arts = {"thm51_moments.csv": csv_text(
        ["noise", "t", "moment"],
        [("compound_poisson", t, m) for t, m in zip(mb.times, mb.moments)]
        + [("alpha_stable", t, m) for t, m in zip(mbs.times, mbs.moments)])}
    summ = {"mean": mean, "stable": diag}
    return ExperimentResult("thm51", checks, arts, summ)


def thm54(seed: int = 0, replicas: int = 2000, T: float = 60.0, dt: float = 0.01,
          slope: float = 0.1) -> ExperimentResult:
    n = int(round(1.0 / dt))
    model = multiplicative_jump_model(slope)
    xi, eta = Segment.constant(1.0, n, 1.0), Segment.constant(1.0, n, -1.0)
    mb = segment_moment_bound(model, xi, T, dt, replicas, seed, p=2)
    conv = stationarity_convergence_test(model, xi, eta, np.arange(5.0, T + 1e-9, 5.0), dt,
                                         replicas, seed)
    checks = [
        Check("second moment", mb.verdict == BOUNDED, mb.verdict, BOUNDED),
        Check("cross-initial W1 decay", conv.verdicts["uniqueness"] == CONVERGING,
              conv.verdicts["uniqueness"], CONVERGING),
    ]
    return ExperimentResult("thm54", checks, {"thm54_curves.csv": _curves_csv(conv)},
                            {"verdicts": conv.verdicts})


def ou_closed_form(seed: int = 0, replicas: int = 10000, T: float = 50.0,
                   dt: float = 0.01) -> ExperimentResult:
    n = int(round(1.0 / dt))
    ens = simulate_ensemble(ou_model(), Segment.constant(1.0, n, 0.0), T, dt, seed,
                            replicas=replicas, record_at=[T])
    x = ens.at(T)
    var = float(np.var(x, ddof=1))
    ks = stats.kstest(x, stats.norm(0.0, np.sqrt(0.5)).cdf).statistic
    crit = float(stats.kstwo.ppf(0.99, len(x)))
    checks = [Check("terminal variance", abs(var - 0.5) <= 0.025, var, "0.5 +- 5%"),
              Check("KS vs N(0, 0.5)", ks < crit, ks, f"< {crit:.5f}")]
    return ExperimentResult("ou_closed_form", checks, {}, {"variance": var, "ks": ks})


EXPERIMENTS = {"ex36": ex36, "ex38": ex38, "ex43": ex43, "thm51": thm51, "thm54": thm54,
               "ou_closed_form": ou_closed_form}


def run_named_experiment(name: str, overrides: dict | None = None) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    kwargs = {}
    params = inspect.signature(fn).parameters
    for k, v in (overrides or {}).items():
        if k not in params:
            raise KeyError(f"experiment {name} has no parameter {k!r}")
        default = params[k].default
        kwargs[k] = type(default)(v) if not isinstance(default, float) else float(v)
    t0 = time.perf_counter()
    res = fn(**kwargs)
    res.seconds = time.perf_counter() - t0
    res.artifacts[f"{name}.json"] = json_text(res.as_dict() | {"seconds": None})
    return res
