import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnsolver.equilibrium import (BEParams, be_distribution, be_moments, critical_mass,
                                  fit_equilibrium)
from bnsolver.grid import GridSpec, build_grid
from conftest import power_grid

# mpmath, 30 digits: Gamma(3/2) Li_{3/2}(e^-1), Gamma(5/2) Li_{5/2}(e^-1)
MASS_A1_B1 = 0.379695714963135520891195444423
ENERGY_A1_B1 = 0.526057226932355523828416573149
# Gamma(3/2) zeta(3/2), Gamma(5/2) zeta(5/2): the critical pair at beta = 1
MASS_CRIT_B1 = 2.31515737339411700042581946912
ENERGY_CRIT_B1 = 1.78329319129130008736099538952


def test_params_invariants():
    with pytest.raises(ValueError):
        BEParams(1.0, 1.0, m0=0.5)
    with pytest.raises(ValueError):
        BEParams(-0.1, 1.0)
    with pytest.raises(ValueError):
        BEParams(0.0, 0.0)


def test_distribution_value():
    g = build_grid(GridSpec(node_count=8, x_max=1.0, grading="uniform"))
    d = be_distribution(BEParams(1.0, 1.0), g)
    assert d.values[-1] == pytest.approx(0.156517642749665651818080623465, rel=1e-14)


def test_maxwellian_limit():
    g = power_grid(32, x_max=10.0)
    d = be_distribution(BEParams(30.0, 1.0), g)
    # relative error of e^{-u} against 1/(e^u - 1) is e^{-u} < 1e-13 here
    np.testing.assert_allclose(d.values, np.exp(-30.0 - g.nodes), rtol=1e-12)


def test_critical_power_law_near_origin():
    g = power_grid(64, x_max=10.0, p=4.0)
    d = be_distribution(BEParams(0.0, 1.0), g)
    assert g.nodes[0] * d.values[0] == pytest.approx(1.0, abs=1e-6)


def test_underflowing_first_node_rejected():
    g = build_grid(GridSpec(node_count=8, x_max=1e-300, grading="uniform"))
    with pytest.raises(ValueError, match="first_node"):
        be_distribution(BEParams(0.0, 1e-30), g)


def test_moments_against_polylog():
    m, e = be_moments(1.0, 1.0)
    assert m == pytest.approx(MASS_A1_B1, rel=1e-12)
    assert e == pytest.approx(ENERGY_A1_B1, rel=1e-12)
    mc, ec = be_moments(0.0, 1.0)
    assert mc == pytest.approx(MASS_CRIT_B1, rel=1e-10)
    assert ec == pytest.approx(ENERGY_CRIT_B1, rel=1e-10)


def test_moment_scaling():
    m1, e1 = be_moments(0.7, 1.3)
    m4, e4 = be_moments(0.7, 4 * 1.3)
    assert m4 == pytest.approx(m1 / 8, rel=1e-10)
    assert e4 == pytest.approx(e1 / 32, rel=1e-10)


def test_dilute_limit_moments_vanish():
    m, e = be_moments(200.0, 1.0)
    assert m < 1e-80 and e < 1e-80


def test_critical_mass_at_unit_beta():
    assert critical_mass(ENERGY_CRIT_B1) == pytest.approx(MASS_CRIT_B1, rel=1e-10)


def test_roundtrip_unit_params():
    m, e = be_moments(1.0, 1.0)
    p = fit_equilibrium(m, e)
    assert p.alpha == pytest.approx(1.0, abs=1e-8)
    assert p.beta == pytest.approx(1.0, abs=1e-8)
    assert p.m0 == 0.0 and not p.supercritical


def test_supercritical_condensate():
    e = 2.0
    mc = critical_mass(e)
    p = fit_equilibrium(1.5 * mc, e)
    assert p.alpha == 0.0 and p.supercritical
    assert p.m0 == pytest.approx(0.5 * mc, rel=1e-12)


@pytest.mark.parametrize("energy", [0.3, 1.0, 2.0, 7.5, 1.0 / 3.0, 0.9])
def test_exactly_critical_fit(energy):
    # rounding can put the data a hair on either side of the critical line
    p = fit_equilibrium(critical_mass(energy), energy)
    assert p.alpha < 1e-20
    assert p.m0 <= 1e-14 * critical_mass(energy)
    m, e = be_moments(p.alpha, p.beta)
    assert e == pytest.approx(energy, rel=1e-12)
    assert m == pytest.approx(critical_mass(energy), rel=1e-12)


def test_dilute_fit():
    p = fit_equilibrium(1e-12, 1.0)
    assert p.alpha > 10 and p.m0 == 0.0 and not p.supercritical


def test_fit_rejects_nonpositive():
    with pytest.raises(ValueError):
        fit_equilibrium(0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.1, 10.0))
def test_roundtrip_property(alpha, beta):
    p = fit_equilibrium(*be_moments(alpha, beta))
    assert p.alpha == pytest.approx(alpha, abs=1e-8, rel=1e-8)
    assert p.beta == pytest.approx(beta, abs=1e-8, rel=1e-8)
    assert p.alpha * p.m0 == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e-3, 5.0), st.floats(1e-3, 5.0))
def test_supercritical_monotone_in_mass(energy, m1, m2):
    lo, hi = sorted((m1, m2))
    if fit_equilibrium(lo, energy).supercritical:
        assert fit_equilibrium(hi, energy).supercritical
