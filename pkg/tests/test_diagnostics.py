import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bnsolver.diagnostics import (CSV_HEADER, DiagnosticsConfig, DiagnosticsRecord, FitRefused,
                                  blowup_fit, blowup_lower_bound, comparison_profile,
                                  fit_blowup_time, fit_profile_exponent, gbeta_norm,
                                  kappa_theorem1, local_mass, make_record, profile_window,
                                  read_records_csv, riccati_check, sup_xf, tail_constant,
                                  tail_moment, verify_comparison, weighted_sup,
                                  window_integrals, write_records_csv)
from bnsolver.equilibrium import BEParams, be_distribution
from bnsolver.grid import Distribution, GridSpec, build_grid, integrate
from bnsolver.integrator import StepControls, run
from conftest import power_grid, uniform_grid


def records_from(times, l_values, mass=1.0):
    return [DiagnosticsRecord(time=t, mass=mass, energy=1.0, l1_total=l, l1_local=l, wsup=0.0,
                              supxf=0.0, gbeta=0.0, dt=0.0)
            for t, l in zip(times, l_values)]


# --- norms ----------------------------------------------------------------

def test_weighted_sup_examples():
    g = power_grid(64)
    x = g.nodes
    d = Distribution(g, (1 + x) ** -9.0)
    assert weighted_sup(d, 0.0, 9.0) == pytest.approx(1.0, abs=1e-12)
    assert weighted_sup(Distribution(g, np.zeros(64)), 0.0, 9.0) == 0.0
    assert weighted_sup(Distribution(g, x ** -0.5), 0.5, 0.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        weighted_sup(d, 1.0, 9.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(0, 1e6)), st.floats(0, 1e3))
def test_weighted_sup_homogeneous(vals, lam):
    g = power_grid(16, x_max=5.0)
    d = Distribution(g, vals)
    scaled = Distribution(g, lam * vals)
    assert weighted_sup(scaled, 0.3, 9.0) == pytest.approx(lam * weighted_sup(d, 0.3, 9.0),
                                                           rel=1e-15, abs=0)


def test_local_mass_examples():
    g = uniform_grid(64, 1.0)
    one = Distribution(g, np.ones(64))
    assert local_mass(one, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert local_mass(one, 0.5 + 1 / 128) == pytest.approx(0.5 + 1 / 128, abs=1e-12)
    d = Distribution(power_grid(40), np.exp(-power_grid(40).nodes))
    assert local_mass(d, d.grid.x_max) == pytest.approx(integrate(d, 0.0), rel=1e-14)
    with pytest.raises(ValueError):
        local_mass(d, 0.0)


def test_local_mass_singular_profile():
    errs = []
    for n in (256, 512):
        g = build_grid(GridSpec(node_count=n, x_max=2.0, grading="power", exponent=10.0,
                                singular_exponent=0.75))
        errs.append(abs(local_mass(Distribution(g, g.nodes ** -0.75), 1.0) - 4.0))
    assert errs[1] <= 2e-3
    assert errs[0] / errs[1] >= 3.5


def test_gbeta_examples():
    g = uniform_grid(400, 5.0)
    x = g.nodes
    bump = np.exp(-0.5 * ((x - 2) / 0.02) ** 2)
    d = Distribution(g, bump / integrate(Distribution(g, bump), 0.0))
    assert gbeta_norm(d, 1.0) == pytest.approx(math.e ** 2, rel=1e-2)
    assert gbeta_norm(Distribution(g, np.zeros(400)), 1.2) == 0.0
    g2 = power_grid(200)
    decay = Distribution(g2, np.exp(-2 * g2.nodes))
    assert gbeta_norm(decay, 1.0) == pytest.approx(1 - 1 / math.e, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 24, elements=st.floats(0, 10)), st.floats(0, 9.0))
def test_gbeta_dominates_any_window(vals, R):
    d = Distribution(power_grid(24, x_max=10.0), vals)
    assert window_integrals(d, 1.2, [R])[0] <= gbeta_norm(d, 1.2) * (1 + 1e-12) + 1e-300


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 32, elements=st.floats(0, 1e3)), st.floats(1.2, 4.0))
def test_total_mass_bound(vals, beta):
    d = Distribution(power_grid(32, x_max=10.0), vals)
    assert integrate(d, 0.0) <= 3.0 * gbeta_norm(d, beta) * (1 + 1e-12) + 1e-300


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 48, elements=st.floats(0, 1.0)), st.floats(0.0, 12.0))
def test_tail_moment_bound(vals, R):
    g = power_grid(48, x_max=15.0)
    d = Distribution(g, vals * np.exp(-1.2 * g.nodes))
    norm = gbeta_norm(d, 1.2)
    assert tail_moment(d, R) <= tail_constant(1.5, 1.2) * norm * math.exp(-0.6 * R) * (1 + 1e-9)


def test_tail_moment_decays_exponentially():
    g = power_grid(200, x_max=30.0)
    d = Distribution(g, np.exp(-2.0 * g.nodes))
    t = [tail_moment(d, R) for R in (4.0, 8.0, 12.0)]
    # exponential rate at least beta/2 = 0.6
    assert t[1] / t[0] <= math.exp(-0.6 * 4) and t[2] / t[1] <= math.exp(-0.6 * 4)


# --- bound formulas -------------------------------------------------------

def test_kappa_limit_and_value():
    lim = 1 - 2.5 * math.e / 8
    assert kappa_theorem1(9.0, 0.0, 1e-300, 5.0, 5.0) == pytest.approx(lim, abs=1e-12)
    expected = 1 - 2.5 * math.e / 8 - (2 ** 10 * 27 / 8 + 2 ** 9 * 2 + (1 + 2 ** 10)) * 1e-6
    assert kappa_theorem1(9.0, 0.0, 1e-6, 1.0, 1.0) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=50)
@given(st.floats(2.5 * math.e + 1.01, 30), st.floats(0, 0.99), st.floats(1e-6, 1.0),
       st.floats(1e-6, 1.0), st.floats(0, 5), st.floats(0, 5))
def test_kappa_decreasing_in_T(gamma, alpha, T1, T2, c, e):
    lo, hi = sorted((T1, T2))
    if hi > lo:
        assert kappa_theorem1(gamma, alpha, hi, c, e) <= kappa_theorem1(gamma, alpha, lo, c, e)


def test_kappa_rejects_small_gamma():
    with pytest.raises(ValueError):
        kappa_theorem1(2.5 * math.e + 1, 0.0, 0.1, 1.0, 1.0)


def test_blowup_lower_bound():
    assert blowup_lower_bound(0.5, 1.0, 0.0, 1e-12) == pytest.approx(0.0, abs=1e-11)
    assert blowup_lower_bound(1 - 1e-12, 1.0, 1.0, 1.0) > 1e5
    assert blowup_lower_bound(0.0, 0.5, 1.0, 1.0) == pytest.approx(1.0 - 2.0)
    with pytest.raises(ValueError):
        blowup_lower_bound(1.0, 1.0, 1.0, 1.0)


# --- Riccati check --------------------------------------------------------

def test_riccati_zero_trajectory():
    traj = SimpleNamespace(records=records_from(np.linspace(0, 1, 11), np.zeros(11), mass=0.0))
    rep = riccati_check(traj, 1.0)
    assert rep.passed and rep.checked == 9 and rep.constant == 2.0


def test_riccati_flags_fast_growth():
    # slope 1e4 against (l + 2)^3 <= 13^3 on this window
    t = np.linspace(0, 1e-3, 21)
    traj = SimpleNamespace(records=records_from(t, 1.0 + 1e4 * t))
    rep = riccati_check(traj, 1.0)
    assert not rep.passed and len(rep.violations) == 19


def test_riccati_needs_three_records():
    with pytest.raises(ValueError):
        riccati_check(SimpleNamespace(records=records_from([0, 1], [1, 1])), 1.0)


# --- blow-up fit ----------------------------------------------------------

def test_fit_time_of_exact_model():
    t = np.linspace(0.0, 0.999, 400)
    t_star, c, res = fit_blowup_time(t, 1 / np.sqrt(2 * (1 - t)))
    assert t_star == pytest.approx(1.0, abs=1e-10) and abs(c) < 1e-9


def test_fit_time_with_offset():
    t = np.linspace(0.2, 0.99, 200)
    t_star, c, _ = fit_blowup_time(t, 1 / np.sqrt(2 * (1 - t)) - 0.7)
    assert t_star == pytest.approx(1.0, abs=1e-8) and c == pytest.approx(0.7, abs=1e-7)


def test_fit_profile_pure_power():
    x = np.geomspace(1e-4, 1e-3, 12)
    nu, res = fit_profile_exponent(x, x ** (-7 / 6))
    assert nu == pytest.approx(7 / 6, abs=1e-6) and res < 1e-12


def test_blowup_fit_synthetic_trajectory():
    g = power_grid(64, x_max=4.0, p=4.0)
    x = g.nodes
    t = np.linspace(0.0, 0.9999, 300)
    prof = Distribution(g, x ** (-7 / 6))
    traj = SimpleNamespace(records=records_from(t, 1 / np.sqrt(2 * (1 - t))),
                           snapshots=[prof])
    fit = blowup_fit(traj, 1.0, profile_lo=float(x[0]))
    assert fit.t_star == pytest.approx(1.0, abs=1e-8)
    assert fit.t_star > fit.window[1]
    assert fit.exponent == pytest.approx(7 / 6, abs=1e-6)
    assert fit.residual >= 0
    d = fit.as_dict()
    assert d["distance_to_1_234"] == pytest.approx(abs(7 / 6 - 1.234))


def test_blowup_fit_refuses_flat_growth():
    traj = SimpleNamespace(records=records_from(np.linspace(0, 1, 10), np.linspace(1, 2, 10)),
                           snapshots=[])
    with pytest.raises(FitRefused):
        blowup_fit(traj, 1.0)


def test_profile_window_choices():
    x = np.geomspace(1e-6, 1.0, 61)
    assert profile_window(x, x_lo=1e-4) == pytest.approx((1e-4, 1e-3))
    f = np.where(x < 1e-5, 1e5, 1 / x)  # x f peaks at x = 1e-5 then flattens
    f[x >= 1e-5] = 1e-5 ** 0.2 * x[x >= 1e-5] ** -1.2
    lo, hi = profile_window(x, f)
    assert lo == pytest.approx(1e-4) and hi == pytest.approx(1e-3)
    lo, hi = profile_window(np.array([1e-3, 1e-2, 1e-1, 1.0, 2.0]), x_lo=1e-3)
    assert hi == 1.0


# --- comparison function --------------------------------------------------

def test_comparison_profile_examples():
    phi0 = comparison_profile(0.0, 3.0, 2.0)
    assert phi0.lam == 1.0
    x = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(phi0(x), 3.0 * np.minimum(1.0, 1 / x))
    assert comparison_profile(0.1, 1.0, 1.0).lam == pytest.approx(math.exp(1.5), rel=1e-15)
    with pytest.raises(ValueError):
        comparison_profile(0.0, 0.5, 1.0)


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1, 50), st.floats(0, 10))
def test_comparison_lambda_nondecreasing(t1, t2, C, e):
    lo, hi = sorted((t1, t2))
    assert comparison_profile(lo, C, e).lam <= comparison_profile(hi, C, e).lam


def test_comparison_zero_trajectory():
    g = power_grid(24, x_max=5.0)
    z = Distribution(g, np.zeros(24))
    traj = SimpleNamespace(snapshots=[z, z.evolve(z.values, time=0.5)])
    rep = verify_comparison(traj, C=1.0)
    assert rep.passed and rep.C_min == 1.0


def test_comparison_refuses_large_initial_data():
    g = power_grid(24, x_max=5.0)
    d = Distribution(g, np.full(24, 2.0))
    with pytest.raises(ValueError, match="min"):
        verify_comparison(SimpleNamespace(snapshots=[d]), C=1.0)


@pytest.mark.slow
def test_comparison_equilibrium_run():
    g = power_grid(64, x_max=12.0)
    be = be_distribution(BEParams(1.0, 1.0), g)
    tr = run(be, StepControls(t_end=1.0, dt_max=0.05))
    rep = verify_comparison(tr)
    assert rep.passed and rep.C_min <= 1.1
    assert not verify_comparison(tr, C=1.0, t_max=0.0).first_violation


def test_comparison_reports_violation():
    g = power_grid(24, x_max=5.0)
    x = g.nodes
    d0 = Distribution(g, 0.5 * np.minimum(1, 1 / x))
    d1 = Distribution(g, 50 * np.minimum(1, 1 / x), time=1e-6)
    rep = verify_comparison(SimpleNamespace(snapshots=[d0, d1]), C=2.0)
    assert not rep.passed and rep.first_violation["time"] == 1e-6
    assert rep.C_min is not None and rep.C_min > 2.0


# --- records --------------------------------------------------------------

def test_record_fields():
    g = power_grid(32, x_max=6.0)
    d = Distribution(g, np.exp(-g.nodes))
    r = make_record(d, 0.01, DiagnosticsConfig(delta=1.0))
    assert r.mass == integrate(d, 0.5) and r.energy == integrate(d, 1.5)
    assert r.supxf == sup_xf(d) and r.l1_local == local_mass(d, 1.0)
    assert r.gbeta == gbeta_norm(d, 1.2) and r.dt == 0.01


def test_csv_roundtrip(tmp_path):
    recs = records_from([0.0, 1 / 3, 2 / 3], [math.pi, math.e, 1e-300])
    p = tmp_path / "d.csv"
    write_records_csv(recs, p)
    text = p.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text
    assert read_records_csv(p) == recs


def test_csv_bad_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_records_csv(p)
