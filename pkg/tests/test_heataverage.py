import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewmix import groups as G
from skewmix import heataverage as H
from skewmix import thermo
from skewmix import twisted as W
from skewmix.dynamics import linear_map

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def flat(torus1):
    return W.constant_skew(torus1, [0.0])


@pytest.fixture(scope="module")
def linear_tau():
    return W.torus_linear_skew()


def test_twist_free_example(doubling, srb, flat):
    rep = H.S_sum(doubling, srb, flat, 1.0, 1)
    assert rep.S_value == pytest.approx(7.0905, abs=1e-4)
    assert rep.S_value == pytest.approx(1.7726372048266521 * 4.0, abs=1e-12)


@pytest.mark.parametrize("t", [1e-3, 0.02, 0.3, 2.0])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_twist_free_factorization(doubling, srb, flat, torus1, t, n):
    rep = H.S_sum(doubling, srb, flat, t, n)
    h = float(G.heat_kernel(torus1, t, np.array([0.0])))
    expected = h / (1.0 - 2.0**-n) ** 2
    assert rep.S_value == pytest.approx(expected, rel=1e-10)


def test_trivial_irrep_alone(perturbed, perturbed_srb, linear_tau, torus1):
    rep = H.S_sum(perturbed, perturbed_srb, linear_tau, 0.1, 4, kappa_max=0)
    w = W.W_value(perturbed, perturbed_srb, linear_tau, torus1.irrep((0,)), 4)
    assert rep.S_value == pytest.approx(abs(w) ** 2, rel=1e-13)


def test_orbit_sum_of_doubled_potential(doubling, srb, linear_tau):
    for n in range(1, 9):
        assert H.S_sum(doubling, srb, linear_tau, 0.1, n).orbit_sum2 == pytest.approx(2.0**-n, rel=1e-12)


def test_pressure_of_the_doubled_potential():
    for k in (2, 3):
        tmap = linear_map(k)
        phi = thermo.srb_potential(tmap)
        p2 = H.pressure_of_double(tmap, phi)
        assert p2 == pytest.approx(-math.log(k), abs=1e-12)
        rep = H.S_sum(tmap, phi, W.torus_linear_skew(), 0.1, 12, pressure2=p2)
        assert math.log(rep.orbit_sum2) / 12 == pytest.approx(p2, abs=1e-6)


def test_scaling_in_t(doubling, srb, flat):
    t = np.logspace(-3, -1, 9)
    S = [H.S_sum(doubling, srb, flat, v, 3).S_value for v in t]
    slope = np.polyfit(np.log(t), np.log(S), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_su2_diagonal_routes_agree(perturbed, perturbed_srb):
    tau = W.su2_two_direction()
    rep = H.S_sum(perturbed, perturbed_srb, tau, 0.3, 4)
    truncated = H.S_sum(perturbed, perturbed_srb, tau, 0.3, 4, kappa_max=400.0)
    assert rep.diagonal_value == pytest.approx(truncated.diagonal_value, rel=1e-10)
    assert rep.S_value == pytest.approx(truncated.S_value, rel=1e-10)


def test_bound_check_and_fit(doubling, srb, linear_tau):
    A, checked, worst = H.fit_and_verify(doubling, srb, linear_tau, [1e-3, 1e-2, 1e-1], [2, 5],
                                         np.logspace(-3, -1, 5), [1, 3, 4])
    assert A > 0 and worst >= 0.0
    assert all(H.diagonal_lower_bound_check(r)[0] for r in checked)
    assert {r.n for r in checked} == {1, 3, 4}


def test_bound_check_needs_a_constant(doubling, srb, linear_tau):
    rep = H.S_sum(doubling, srb, linear_tau, 0.1, 2)
    with pytest.raises(ValueError):
        H.diagonal_lower_bound_check(rep)
    ok, margin = H.diagonal_lower_bound_check(rep, A=H.bound_ratio(rep))
    assert ok and margin >= 0.0
    assert not H.diagonal_lower_bound_check(rep, A=2.0 * H.bound_ratio(rep, use_diagonal=False))[0]
    with pytest.raises(ValueError):
        H.fit_A([])


def test_disjoint_grids_are_required(doubling, srb, linear_tau):
    with pytest.raises(ValueError):
        H.fit_and_verify(doubling, srb, linear_tau, [0.01], [2], [0.01], [2])


def test_invalid_time_is_rejected(doubling, srb, linear_tau):
    with pytest.raises(G.GroupError):
        H.S_sum(doubling, srb, linear_tau, 0.0, 1)


def test_contradiction_thresholds(doubling, srb, linear_tau):
    rep = H.contradiction_scheme(doubling, srb, linear_tau, 0.2, 1e-3)
    assert rep.threshold == pytest.approx(2.0**-1.5, abs=1e-10)
    assert rep.threshold == pytest.approx(0.3536, abs=1e-4)
    mme = H.contradiction_scheme(doubling, thermo.mme_potential(doubling), linear_tau, 0.2, 1e-3)
    assert mme.threshold == pytest.approx(rep.threshold, abs=1e-12)
    su2 = H.contradiction_scheme(doubling, srb, W.su2_two_direction(), 0.2, 1e-3, improved=True, n_values=(2, 4))
    assert su2.threshold == pytest.approx(2.0**-0.5, abs=1e-10)


def test_contradiction_rates(doubling, srb, linear_tau):
    eps = 1e-3
    ruled_out = H.contradiction_scheme(doubling, srb, linear_tau, 0.1, eps)
    assert ruled_out.contradiction
    assert ruled_out.alpha == pytest.approx(2 * LOG2 + 6 * eps)
    assert ruled_out.outgrows_low_irreps
    # the lower bound outgrows the hypothetical upper bound
    assert ruled_out.lhs_rates[-1] > ruled_out.rhs_rates[-1]
    allowed = H.contradiction_scheme(doubling, srb, linear_tau, 0.9, eps)
    assert not allowed.contradiction
    assert allowed.lhs_rates[-1] < allowed.rhs_rates[-1]
    assert ruled_out.rho_critical == allowed.rho_critical


def test_excess_of_three_eps_does_not_close_on_a_circle(doubling, srb, linear_tau):
    eps = 1e-3
    rep = H.contradiction_scheme(doubling, srb, linear_tau, 0.1, eps, alpha=2 * LOG2 + 3 * eps)
    assert not rep.outgrows_low_irreps and not rep.contradiction
    assert all(lo < hi for lo, hi in zip(rep.lhs_rates, rep.rhs_rates))
    planar = H.contradiction_scheme(doubling, srb, W.torus_linear_skew(group=G.Torus(2)), 0.05, eps,
                                    alpha=LOG2 + 3 * eps, n_values=(2, 4))
    assert planar.outgrows_low_irreps and planar.contradiction


def test_contradiction_arguments(doubling, srb, linear_tau):
    with pytest.raises(ValueError):
        H.contradiction_scheme(doubling, srb, linear_tau, 1.0, 1e-3)
    with pytest.raises(ValueError):
        H.contradiction_scheme(doubling, srb, linear_tau, 0.5, 1e-3, t_rule="power")


def test_grid_csv(doubling, srb, linear_tau, tmp_path):
    reps = [r.with_bound(0.1) for r in H.heat_grid(doubling, srb, linear_tau, [0.01, 0.1], [1, 2])]
    path = tmp_path / "grid.csv"
    H.write_grid_csv(reps, path)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["t", "n", "S", "diagonal", "bound", "margin"]
    assert len(rows) == 4
    assert float(rows[0]["S"]) == reps[0].S_value


@given(t=st.floats(1e-3, 2.0), n=st.integers(1, 6), group=st.sampled_from(["torus", "su2"]))
def test_S_dominates_the_diagonal(perturbed, perturbed_srb, linear_tau, t, n, group):
    tau = linear_tau if group == "torus" else W.su2_two_direction()
    rep = H.S_sum(perturbed, perturbed_srb, tau, t, n)
    assert rep.diagonal_value >= 0.0
    assert rep.S_value >= rep.diagonal_value * (1 - 1e-10)


@given(t=st.floats(0.01, 1.0), n=st.integers(1, 5))
def test_S_grows_with_the_cutoff(doubling, srb, t, n):
    tau = W.su2_two_direction()
    values = [H.S_sum(doubling, srb, tau, t, n, kappa_max=k).S_value for k in (0, 3, 8, 15, 35, 80)]
    assert all(b >= a * (1 - 1e-13) for a, b in itertools.pairwise(values))
