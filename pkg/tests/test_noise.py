import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from retardsde.noise import (BLOCK_STEPS, JumpLaw, NoiseSpec, increment_stream, replica_stream,
                             sample_levy_increment, symmetric_stable)

DRAWS = 100_000


def test_compound_poisson_moments():
    noise = NoiseSpec.compound_poisson(2.0, JumpLaw.exponential(1.0))
    x = sample_levy_increment(noise, 1.0, replica_stream(1, 0), DRAWS)
    se = np.sqrt(4.0 / DRAWS)
    assert abs(x.mean() - 2.0) < 3 * se
    assert x.var() == pytest.approx(4.0, rel=0.05)


def test_stable_two_is_standard_normal():
    noise = NoiseSpec.alpha_stable(2.0, 1 / np.sqrt(2))
    x = sample_levy_increment(noise, 1.0, replica_stream(2, 0), DRAWS)
    ks = stats.kstest(x, "norm").statistic
    assert ks < stats.kstwo.ppf(0.99, DRAWS)


@pytest.mark.parametrize("u", [0.5, 1.0, 2.0])
def test_stable_characteristic_function(u):
    scale = 0.8
    noise = NoiseSpec.alpha_stable(1.5, scale)
    x = sample_levy_increment(noise, 1.0, replica_stream(3, 0), DRAWS)
    ecf = np.mean(np.cos(u * x))
    assert ecf == pytest.approx(np.exp(-abs(scale * u) ** 1.5), abs=0.01)


def test_stable_time_scaling():
    noise = NoiseSpec.alpha_stable(1.5)
    x = sample_levy_increment(noise, 0.01, replica_stream(4, 0), DRAWS)
    u = 10.0
    assert np.mean(np.cos(u * x)) == pytest.approx(np.exp(-0.01 * u ** 1.5), abs=0.01)


def test_cauchy_special_case():
    x = symmetric_stable(1.0, DRAWS, np.random.default_rng(0))
    assert stats.kstest(x, "cauchy").statistic < stats.kstwo.ppf(0.99, DRAWS)


def test_brownian_plus_jumps_moments():
    noise = NoiseSpec.brownian_plus_compound_poisson(0.5, 1.0, JumpLaw.normal(1.0))
    x = sample_levy_increment(noise, 1.0, replica_stream(5, 0), DRAWS)
    assert abs(x.mean() - 0.5) < 3 * np.sqrt(2.0 / DRAWS)
    assert x.var() == pytest.approx(2.0, rel=0.05)


def test_pareto_jumps_above_scale():
    law = JumpLaw.pareto(1.5, 2.0)
    s = law.sample(np.random.default_rng(0), 1000)
    assert s.min() >= 2.0
    assert law.first_moment == pytest.approx(6.0)
    assert law.second_moment == np.inf


def test_scalar_increment():
    v = sample_levy_increment(NoiseSpec.brownian(), 0.1, replica_stream(0, 0))
    assert isinstance(v, float)


def test_moment_conditions_per_law():
    assert NoiseSpec.compound_poisson(1.0, JumpLaw.exponential()).large_jump_first_moment_finite
    assert NoiseSpec.compound_poisson(1.0, JumpLaw.normal()).large_jump_second_moment_finite
    assert NoiseSpec.compound_poisson(1.0, JumpLaw.pareto(1.5)).large_jump_first_moment_finite
    assert not NoiseSpec.compound_poisson(1.0, JumpLaw.pareto(1.5)).large_jump_second_moment_finite
    assert not NoiseSpec.compound_poisson(1.0, JumpLaw.pareto(0.8)).large_jump_first_moment_finite
    assert NoiseSpec.alpha_stable(1.5).large_jump_first_moment_finite
    assert not NoiseSpec.alpha_stable(1.5).large_jump_second_moment_finite
    assert not NoiseSpec.alpha_stable(0.7).large_jump_first_moment_finite


@pytest.mark.parametrize("build", [
    lambda: NoiseSpec.compound_poisson(0.0, JumpLaw.exponential()),
    lambda: NoiseSpec("compound_poisson", rate=1.0),
    lambda: NoiseSpec.alpha_stable(2.5),
    lambda: NoiseSpec.alpha_stable(1.5, -1.0),
    lambda: NoiseSpec("gamma"),
    lambda: JumpLaw.exponential(-1.0),
    lambda: JumpLaw.pareto(0.0),
    lambda: JumpLaw("uniform"),
])
def test_invalid_parameters_rejected(build):
    with pytest.raises(ValueError):
        build()


def test_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        sample_levy_increment(NoiseSpec.brownian(), 0.0, replica_stream(0, 0))


def test_streams_depend_only_on_seed_and_id():
    a = replica_stream(9, 3).standard_normal(5)
    replica_stream(9, 0).standard_normal(100)
    b = replica_stream(9, 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, replica_stream(9, 4).standard_normal(5))
    assert not np.array_equal(a, replica_stream(10, 3).standard_normal(5))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3 * BLOCK_STEPS), st.integers(1, 3 * BLOCK_STEPS))
def test_increment_prefix_stable_under_horizon(m, k):
    # a longer run reproduces the shorter one as its prefix
    noise = NoiseSpec.compound_poisson(3.0, JumpLaw.normal())
    short = increment_stream(noise, 0.01, 1, 2, m)
    long = increment_stream(noise, 0.01, 1, 2, m + k)
    assert np.array_equal(short, long[:m])
