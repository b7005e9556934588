import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retardsde.measures import (Segment, SignedMeasure, integrate_against, segment_eval,
                                segment_sup_norm, total_variation)


def test_total_variation_unit_atom():
    assert total_variation(SignedMeasure.dirac(0.0, 1.0)) == 1.0


def test_total_variation_two_atoms():
    m = SignedMeasure.from_atoms(1.0, [(0.0, -1.0), (-1.0, 0.5)])
    assert total_variation(m) == pytest.approx(1.5)


def test_total_variation_neutral_example_below_half():
    kappa = total_variation(SignedMeasure.dirac(-1.0, -1.0 / 3.0))
    assert kappa == pytest.approx(1.0 / 3.0)
    assert kappa < 0.5


def test_total_variation_counts_density():
    m = SignedMeasure.from_atoms(2.0, [(-2.0, 0.5)]) + SignedMeasure.lebesgue(2.0, -3.0, -1.0, -0.5)
    assert total_variation(m) == pytest.approx(0.5 + 1.5)


def test_integrate_constant_against_delayed_atom():
    assert integrate_against(SignedMeasure.dirac(-1.0), lambda th: 3.0) == 3.0


def test_integrate_identity_against_two_atoms():
    m = SignedMeasure.from_atoms(1.0, [(0.0, 1.0), (-1.0, 2.0)])
    assert integrate_against(m, lambda th: th) == pytest.approx(-2.0)


def test_integrate_identity_against_lebesgue():
    m = SignedMeasure.lebesgue(1.0)
    assert integrate_against(m, lambda th: th) == pytest.approx(-0.5, abs=1e-10)
    seg = Segment.linear(1.0, 100)
    assert integrate_against(m, seg) == pytest.approx(-0.5, abs=1e-12)


def test_stencil_density_partial_cells_exact_for_linear():
    # density on [-0.73, -0.21] cuts cells; linear integrands are exact
    m = SignedMeasure.lebesgue(1.0, 2.0, -0.73, -0.21)
    seg = Segment.linear(1.0, 10, 1.0, 3.0)
    exact = 2.0 * ((-0.21 + 1.5 * (-0.21) ** 2) - (-0.73 + 1.5 * (-0.73) ** 2))
    assert m.stencil(10) @ seg.values == pytest.approx(exact, abs=1e-12)


def test_atom_locations_validated():
    with pytest.raises(ValueError):
        SignedMeasure(1.0, ((0.5, 1.0),))
    with pytest.raises(ValueError):
        SignedMeasure(1.0, ((-0.5, 1.0), (-0.5, 2.0)))
    with pytest.raises(ValueError):
        SignedMeasure(-1.0)


def test_from_atoms_merges_repeats():
    m = SignedMeasure.from_atoms(1.0, [(-1.0, 1.0), (-1.0, 2.0)])
    assert m.atoms == ((-1.0, 3.0),)


def test_segment_eval_grid_and_interpolation():
    s = Segment(1.0, np.array([0.0, 2.0, 4.0]))
    assert segment_eval(s, -0.5) == 2.0
    assert segment_eval(s, -0.25) == pytest.approx(3.0)
    assert s.eval(0.0) == 4.0


def test_segment_eval_outside_raises():
    s = Segment.constant(1.0, 4, 1.0)
    with pytest.raises(ValueError):
        segment_eval(s, 0.1)
    with pytest.raises(ValueError):
        segment_eval(s, -1.5)


def test_sup_norm():
    s = Segment(1.0, np.array([1.0, -3.0, 2.0]))
    assert segment_sup_norm(s) == 3.0


def test_segment_values_read_only():
    s = Segment.constant(1.0, 4, 1.0)
    with pytest.raises(ValueError):
        s.values[0] = 2.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.floats(-5, 5)), min_size=1, max_size=5,
                unique_by=lambda p: p[0]),
       st.lists(st.floats(-3, 3), min_size=21, max_size=21))
def test_on_grid_atoms_integrate_exactly(atoms, values):
    n = 20
    m = SignedMeasure.from_atoms(1.0, [(-1.0 + k / n, c) for k, c in atoms])
    seg = Segment(1.0, np.array(values))
    expected = sum(c * values[k] for k, c in atoms)
    assert integrate_against(m, seg) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 0), st.floats(-4, 4), st.floats(-4, 4))
def test_stencil_exact_for_affine_paths(theta, c, slope):
    m = SignedMeasure.from_atoms(1.0, [(theta, c)]) + SignedMeasure.lebesgue(1.0, 0.7, -0.6, -0.1)
    seg = Segment.linear(1.0, 13, 0.3, slope)
    direct = integrate_against(m, lambda th: 0.3 + slope * np.asarray(th), n=4000)
    assert m.stencil(13) @ seg.values == pytest.approx(direct, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_of_integration(a, b):
    m = SignedMeasure.from_atoms(1.0, [(-0.5, 1.0), (-1.0, -2.0)]) + SignedMeasure.lebesgue(1.0, 0.5)
    f = Segment.sine(1.0, 50)
    g = Segment.linear(1.0, 50, 1.0, 2.0)
    h = Segment(1.0, a * f.values + b * g.values)
    assert integrate_against(m, h) == pytest.approx(
        a * integrate_against(m, f) + b * integrate_against(m, g), abs=1e-9)
