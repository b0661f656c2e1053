import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnsolver.diagnostics import gbeta_norm, local_mass, window_integrals
from bnsolver.grid import Distribution, GridSpec, build_grid, integrate
from bnsolver.integrator import write_checkpoint
from bnsolver.measures import (GBetaParams, RadonMeasure, calibration_constant,
                               existence_horizon, gbeta_norm_measure, mass_bound_check,
                               read_measure, singular_init, write_measure)
from conftest import power_grid

# int_0^1 x^(-3/4) e^(-x) dx = lower incomplete gamma(1/4, 1), 30 digits (mpmath)
GAMMA_QUARTER_1 = 3.37935437902841


def atoms_strategy(max_size=20):
    return st.lists(st.tuples(st.floats(0, 10), st.floats(1e-6, 10)), max_size=max_size)


# --- window norm of atoms -------------------------------------------------

def test_single_atom():
    assert gbeta_norm_measure(RadonMeasure(((2.0, 1.0),)), 1.0) == pytest.approx(math.e ** 2,
                                                                              rel=1e-15)


def test_atoms_too_far_apart():
    mu = RadonMeasure(((0.25, 1.0), (1.75, 1.0)))
    assert gbeta_norm_measure(mu, 1.0) == pytest.approx(math.exp(1.75), rel=1e-15)


def test_atoms_sharing_a_window():
    mu = RadonMeasure(((0.2, 1.0), (0.9, 1.0)))
    assert gbeta_norm_measure(mu, 1.0) == pytest.approx(math.exp(0.2) + math.exp(0.9), rel=1e-15)


def test_atoms_exactly_one_apart_never_share():
    # open windows of length 1 cannot hold both ends
    mu = RadonMeasure(((1.0, 1.0), (2.0, 1.0)))
    assert gbeta_norm_measure(mu, 1.0) == pytest.approx(math.e ** 2, rel=1e-15)


def test_empty_measure():
    assert gbeta_norm_measure(RadonMeasure(), 1.5) == 0.0
    assert mass_bound_check(RadonMeasure()) == (0.0, 0.0, True)


def test_atom_at_origin_in_no_window():
    assert gbeta_norm_measure(RadonMeasure(((0.0, 5.0),)), 1.2) == 0.0


def test_atoms_and_density_add():
    g = power_grid(64, x_max=6.0)
    dens = Distribution(g, np.exp(-3.0 * g.nodes))
    mu = RadonMeasure(((4.5, 1e-3),), dens)
    assert gbeta_norm_measure(mu, 1.2) >= gbeta_norm(dens, 1.2)
    assert gbeta_norm_measure(RadonMeasure((), dens), 1.2) == pytest.approx(
        gbeta_norm(dens, 1.2), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(atoms_strategy(), atoms_strategy(), st.floats(1.01, 3.0))
def test_subadditive(a, b, beta):
    mu, nu = RadonMeasure(tuple(a)), RadonMeasure(tuple(b))
    both = RadonMeasure(tuple(a) + tuple(b))
    s = gbeta_norm_measure(mu, beta) + gbeta_norm_measure(nu, beta)
    assert gbeta_norm_measure(both, beta) <= s * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(atoms_strategy(), st.floats(1e-3, 1e3), st.floats(1.01, 3.0))
def test_homogeneous(a, lam, beta):
    mu = RadonMeasure(tuple(a))
    assert gbeta_norm_measure(mu.scaled(lam), beta) == pytest.approx(
        lam * gbeta_norm_measure(mu, beta), rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(atoms_strategy(), st.floats(1.01, 3.0), st.floats(0, 10))
def test_norm_dominates_any_window(a, beta, R):
    mu = RadonMeasure(tuple(a))
    inside = sum(m * math.exp(beta * x) for x, m in a if R < x < R + 1)
    assert inside <= gbeta_norm_measure(mu, beta) * (1 + 1e-12)


# --- total mass bound -----------------------------------------------------

@pytest.mark.parametrize("x", [0.5, 3.0, 9.99])
def test_mass_bound_single_atom(x):
    total, bound, ok = mass_bound_check(RadonMeasure(((x, 1.0),)))
    assert ok and total == 1.0 and bound == pytest.approx(3 * math.exp(1.2 * x))


def test_mass_bound_random_atoms():
    rng = np.random.default_rng(7)
    for _ in range(20):
        pos = rng.uniform(0, 10, 1000)
        mass = rng.exponential(1.0, 1000)
        assert mass_bound_check(RadonMeasure(tuple(zip(pos, mass))), 1.2)[2]


def test_mass_bound_rejects_small_beta():
    with pytest.raises(ValueError):
        mass_bound_check(RadonMeasure(), 1.1)


def test_measure_validation():
    for bad in (((-1.0, 1.0),), ((1.0, 0.0),), ((math.inf, 1.0),), ((1.0, math.nan),)):
        with pytest.raises(ValueError):
            RadonMeasure(bad)
    with pytest.raises(ValueError):
        GBetaParams(1.0, 1.0)
    with pytest.raises(ValueError):
        GBetaParams(1.5, 0.0)
    p = GBetaParams(1.5, math.exp(3.0))
    assert p.contains(RadonMeasure(((2.0, 1.0),)))
    assert not p.contains(RadonMeasure(((2.0, 1.01),)))


# --- existence horizon ----------------------------------------------------

def test_horizon_zero_data_limit():
    C, k = 0.1, 2.0
    lim = k / (C * k ** 2 * (1 + k))
    assert existence_horizon(0.0, 1.0, 1e16, k, C) == pytest.approx(lim, rel=1e-7)
    assert existence_horizon(0.0, 1.0, 4.0, k, C) == pytest.approx(lim - 0.5, rel=1e-15)


def test_horizon_tight_kappa_is_zero():
    assert existence_horizon(1.0, 1.0, 2.0, 1.0 + 1e-12, 1.0) == 0.0


def test_horizon_errors():
    with pytest.raises(ValueError):
        existence_horizon(1.0, 1.0, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        existence_horizon(0.5, 0.0, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        existence_horizon(0.5, 1.0, 2.0, 1.0, 0.0)


@settings(max_examples=100)
@given(st.floats(0, 5), st.floats(0.01, 5), st.floats(1.01, 5), st.floats(1.01, 4),
       st.floats(0, 10))
def test_calibration_inverts_horizon(n0, mass, beta, factor, window):
    kappa = n0 * factor + 1e-3
    C = calibration_constant(n0, mass, beta, kappa, window)
    assert existence_horizon(n0, mass, beta, kappa, C) == pytest.approx(window, rel=1e-9,
                                                                        abs=1e-9)


# --- singular initial data ------------------------------------------------

def test_singular_init_rejections():
    g = power_grid(32)
    for a in (1.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            singular_init(a, 1.0, 1.0, g)
    with pytest.raises(ValueError):
        singular_init(0.5, 0.0, 1.0, g)
    with pytest.raises(ValueError):
        singular_init(0.5, 1.0, -1.0, g)


def test_singular_local_mass_matches_reference():
    g = build_grid(GridSpec(node_count=39544, x_max=2.0, grading="geometric",
                            ratio=1.0006, first_node=1e-10))
    d = singular_init(0.75, 1.0, 1.0, g)
    assert d.grid.spec.singular_exponent == 0.75
    assert local_mass(d, 1.0) == pytest.approx(GAMMA_QUARTER_1, abs=1e-6)


def test_singular_alpha_zero_is_exponential():
    g = power_grid(48)
    d = singular_init(0.0, 2.0, 1.5, g)
    np.testing.assert_array_equal(d.values, 2.0 * np.exp(-1.5 * g.nodes))


def test_singular_norm_finite_and_first_window_dominates():
    g = power_grid(256, x_max=20.0, p=4.0)
    d = singular_init(0.75, 1.0, 2.0, g)
    n = gbeta_norm(d, 1.2)
    assert math.isfinite(n)
    assert n == pytest.approx(window_integrals(d, 1.2, [0.0])[0], rel=1e-12)
    assert window_integrals(d, 1.2, [8.0])[0] < 1e-3 * n


# --- file format ----------------------------------------------------------

def test_measure_file_roundtrip(tmp_path):
    mu = RadonMeasure(((0.1, 1 / 3), (math.pi, 2.0)))
    p = tmp_path / "m.txt"
    write_measure(mu, p)
    assert read_measure(p) == mu


def test_measure_file_with_density(tmp_path):
    g = power_grid(24, x_max=5.0)
    dens = Distribution(g, np.exp(-g.nodes), time=0.25)
    write_checkpoint(tmp_path / "snap.ckpt", dens)
    mu = RadonMeasure(((1.5, 0.5),), dens)
    write_measure(mu, tmp_path / "m.txt", density_path="snap.ckpt")
    back = read_measure(tmp_path / "m.txt")
    assert back.atoms == mu.atoms
    np.testing.assert_array_equal(back.density.values, dens.values)
    assert back.total_mass() == pytest.approx(0.5 + integrate(dens, 0.0), rel=1e-15)


def test_measure_file_bad_line(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# comment\natom 1.0 2.0\nblob 3\n")
    with pytest.raises(ValueError, match=":3:"):
        read_measure(p)
