import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewmix import groups as G
from skewmix import thermo
from skewmix import twisted as W
from skewmix.dynamics import linear_map

Z_HALF = math.prod(1.0 - 2.0 ** (-k - 1) for k in range(60))  # prod_k (1 - 2^-k / 2)


@pytest.fixture(scope="module")
def linear_tau():
    return W.torus_linear_skew()


@pytest.fixture(scope="module")
def srb48(doubling, srb):
    return thermo.rpf_solve(doubling, srb, 48)


def _op(tmap, phi, rpf, tau, irrep, N=48):
    return W.build_twisted_matrix(tmap, phi, rpf, tau, irrep, N)


def _same_multiset(a, b, tol):
    a, b = list(a), list(b)
    for v in a:
        j = int(np.argmin([abs(v - w) for w in b]))
        if abs(v - b[j]) > tol:
            return False
        b.pop(j)
    return not b


def test_trivial_irrep_is_the_normalized_scalar_operator(doubling, srb, srb_rpf, torus1, su2):
    scalar = thermo.normalized_transfer_matrix(doubling, srb, srb_rpf, 32)
    for irrep in (torus1.irrep((0,)), su2.irrep(0)):
        op = _op(doubling, srb, srb_rpf, W.identity_skew(irrep.group), irrep, 32)
        assert np.allclose(op.matrix, scalar, atol=1e-14)


def test_identity_skew_repeats_the_untwisted_spectrum(perturbed, perturbed_srb, perturbed_rpf, su2):
    op = _op(perturbed, perturbed_srb, perturbed_rpf, W.identity_skew(su2), su2.irrep(1), 24)
    base = W.eigenvalues(_op(perturbed, perturbed_srb, perturbed_rpf, W.identity_skew(su2), su2.irrep(0), 24))
    vals = W.eigenvalues(op).eigenvalues
    lead = base.eigenvalues[:6]
    assert _same_multiset(vals[:12], np.repeat(lead, 2), 1e-9)


def test_untwisted_doubling_spectrum(doubling, srb, srb_rpf):
    spec = W.eigenvalues(_op(doubling, srb, srb_rpf, W.identity_skew(G.Torus(1)), G.Torus(1).irrep((0,)), 32))
    assert np.allclose(spec.eigenvalues[:4], 2.0 ** -np.arange(4), atol=1e-11)
    # double precision resolves the non-normal tail only up to the error estimates
    idx = np.flatnonzero(spec.trusted)
    assert len(idx) >= 4 and not spec.trusted[-1]
    assert np.all(np.abs(spec.eigenvalues[idx] - 2.0**-idx) <= 10 * spec.error_estimates[idx] + 1e-14)
    assert np.all(np.diff(np.abs(spec.eigenvalues)) <= 1e-15)


def test_constant_twist_rotates_the_spectrum(perturbed, perturbed_srb, perturbed_rpf, torus1):
    c, q = 0.7, 3
    irrep = torus1.irrep((q,))
    plain = _op(perturbed, perturbed_srb, perturbed_rpf, W.identity_skew(torus1), irrep, 32)
    turned = _op(perturbed, perturbed_srb, perturbed_rpf, W.constant_skew(torus1, [c]), irrep, 32)
    # the operator inverts the skew, so the factor is exp(-i q c)
    factor = np.exp(-1j * q * c)
    assert np.allclose(turned.matrix, factor * plain.matrix, atol=1e-14)
    k = 6
    a, b = W.eigenvalues(turned).eigenvalues[:k], W.eigenvalues(plain).eigenvalues[:k]
    assert _same_multiset(a, b * factor, 1e-10)


def test_spectral_radius_of_a_twisted_doubling_operator(doubling, srb, srb48, linear_tau, torus1):
    spec = W.eigenvalues(_op(doubling, srb, srb48, linear_tau, torus1.irrep((5,))))
    assert spec.spectral_radius <= 1.0 + 1e-8


def test_spectral_radius_bound_across_irreps(perturbed, perturbed_srb, perturbed_rpf, torus1, su2, linear_tau):
    cases = [(linear_tau, torus1.irrep((q,))) for q in range(-3, 6)]
    cases += [(W.su2_two_direction(), su2.irrep(m)) for m in range(4)]
    for tau, irrep in cases:
        op = _op(perturbed, perturbed_srb, perturbed_rpf, tau, irrep, 32)
        assert W.eigenvalues(op).spectral_radius <= 1.0 + 1e-8


def test_orbit_traces(doubling, srb, torus1, su2):
    triv = torus1.irrep((0,))
    ident = W.identity_skew(torus1)
    assert W.trace_periodic(doubling, srb, ident, triv, 1) == pytest.approx(2.0, abs=1e-13)
    assert W.trace_periodic(doubling, srb, ident, triv, 2) == pytest.approx(4 / 3, abs=1e-13)
    assert W.trace_periodic(doubling, srb, W.identity_skew(su2), su2.irrep(1), 2) == pytest.approx(16 / 3, abs=1e-12)


def test_matrix_traces(doubling, srb, srb_rpf, su2, torus1):
    op = _op(doubling, srb, srb_rpf, W.identity_skew(torus1), torus1.irrep((0,)), 32)
    assert W.trace_matrix(op, 1) == pytest.approx(2.0, abs=1e-8)
    op = _op(doubling, srb, srb_rpf, W.identity_skew(su2), su2.irrep(1), 32)
    assert W.trace_matrix(op, 2) == pytest.approx(16 / 3, abs=1e-8)
    with pytest.raises(ValueError):
        W.trace_matrix(op, 0)


def test_trace_routes_agree_on_the_doubling_torus(doubling, srb, srb48, linear_tau, torus1):
    for q in range(11):
        irrep = torus1.irrep((q,))
        op = _op(doubling, srb, srb48, linear_tau, irrep)
        for n in range(1, 11):
            orbit = W.trace_periodic(doubling, srb, linear_tau, irrep, n, srb48.pressure)
            assert abs(orbit - W.trace_matrix(op, n)) <= 1e-8 * (1 + abs(orbit))


def test_trace_routes_agree_for_su2(perturbed, perturbed_srb, perturbed_rpf, su2):
    tau = W.su2_two_direction()
    for m in range(4):
        op = _op(perturbed, perturbed_srb, perturbed_rpf, tau, su2.irrep(m))
        for n in range(1, 9):
            orbit = W.trace_periodic(perturbed, perturbed_srb, tau, su2.irrep(m), n, perturbed_rpf.pressure)
            assert abs(orbit - W.trace_matrix(op, n)) <= 1e-8 * (1 + abs(orbit))


def test_density_cancels_on_periodic_orbits(perturbed, perturbed_srb, perturbed_rpf, su2, torus1, linear_tau):
    for tau, irrep in ((linear_tau, torus1.irrep((2,))), (W.su2_two_direction(), su2.irrep(2))):
        for n in (1, 4, 7):
            plain = W.trace_periodic(perturbed, perturbed_srb, tau, irrep, n)
            checked = W.trace_periodic(perturbed, perturbed_srb, tau, irrep, n, rpf=perturbed_rpf)
            assert checked == plain


def test_W_values(doubling, srb, torus1, linear_tau):
    for n in range(1, 7):
        w = W.W_value(doubling, srb, W.identity_skew(torus1), torus1.irrep((3,)), n)
        assert w == pytest.approx(1.0 / (1.0 - 2.0**-n), abs=1e-12)
    assert W.W_value(doubling, srb, linear_tau, torus1.irrep((1,)), 1) == pytest.approx(2.0, abs=1e-12)


def test_W_is_dominated_by_the_trivial_trace(perturbed, perturbed_srb, su2):
    tau = W.su2_two_direction()
    for n in range(1, 7):
        bound = W.trace_periodic(perturbed, perturbed_srb, W.identity_skew(su2), su2.irrep(0), n).real
        for m in range(1, 4):
            w = W.W_value(perturbed, perturbed_srb, tau, su2.irrep(m), n)
            assert abs(w) <= (m + 1) ** 2 * bound * (1 + 1e-12)


@pytest.fixture(scope="module")
def untwisted_series(doubling, srb, torus1):
    return W.zeta_series_from_orbits(doubling, srb, W.identity_skew(torus1), torus1.irrep((0,)), 12)


def test_zeta_values(untwisted_series):
    assert W.zeta_eval(untwisted_series, 0.0)[0] == 1.0
    value, err = W.zeta_eval(untwisted_series, 0.5)
    assert value.real == pytest.approx(Z_HALF, abs=max(err, 1e-12))
    assert Z_HALF == pytest.approx(0.28879, abs=1e-5)
    with pytest.raises(W.TwistError):
        W.zeta_eval(untwisted_series, 0.9)


def test_zeros_are_reciprocal_eigenvalues(doubling, srb, srb_rpf, torus1):
    op = _op(doubling, srb, srb_rpf, W.identity_skew(torus1), torus1.irrep((0,)), 32)
    zs = W.zeta_series_from_operator(op)
    coeffs = W.determinant_coefficients(zs.eigenvalues[:10], 1, 10)
    roots = np.roots(coeffs[::-1])
    assert np.min(np.abs(roots)) == pytest.approx(1.0, abs=1e-10)


def test_contour_extraction_examples(untwisted_series, doubling, srb, torus1, linear_tau):
    assert W.contour_extract_W(untwisted_series, 1, 0.5) == pytest.approx(2.0, abs=1e-10)
    assert W.contour_extract_W(untwisted_series, 2, 0.5) == pytest.approx(4 / 3, abs=1e-10)
    irrep = torus1.irrep((1,))
    zs = W.zeta_series_from_orbits(doubling, srb, linear_tau, irrep, 12)
    target = W.W_value(doubling, srb, linear_tau, irrep, 3)
    assert abs(W.contour_extract_W(zs, 3, 0.5) - target) <= 1e-7


def test_contour_errors(untwisted_series, doubling, srb, srb_rpf, torus1):
    with pytest.raises(W.TwistError):
        W.contour_extract_W(untwisted_series, 13, 0.5)
    with pytest.raises(W.TwistError):
        W.contour_extract_W(untwisted_series, 1, 0.8)
    op = _op(doubling, srb, srb_rpf, W.identity_skew(torus1), torus1.irrep((0,)), 32)
    with pytest.raises(W.TwistError):
        W.contour_extract_W(W.zeta_series_from_operator(op), 1, 1.0)
    with pytest.raises(ValueError):
        W.contour_extract_W(untwisted_series, 0, 0.5)


def test_contour_matches_W_on_the_perturbed_torus(perturbed, perturbed_srb, perturbed_rpf, torus1, linear_tau):
    for q in (1, 2, 3):
        irrep = torus1.irrep((q,))
        op = _op(perturbed, perturbed_srb, perturbed_rpf, linear_tau, irrep)
        sres = W.eigenvalues(op)
        zs = W.zeta_series_from_operator(op, sres=sres)
        r = 0.5 / sres.spectral_radius
        for n in range(1, 9):
            target = W.W_value(perturbed, perturbed_srb, linear_tau, irrep, n, perturbed_rpf.pressure)
            assert abs(W.contour_extract_W(zs, n, r) - target) <= 1e-7


def test_logderiv_for_the_untwisted_determinant(doubling, srb, srb_rpf, torus1, untwisted_series):
    op = _op(doubling, srb, srb_rpf, W.identity_skew(torus1), torus1.irrep((0,)), 32)
    zs = W.zeta_series_from_operator(op)
    rep = W.logderiv_bound_check(zs, 0.5, 0.9)
    assert math.isfinite(rep.max_logderiv) and rep.sqrt_kappa == 0.0
    z = 0.5 * np.exp(2j * np.pi * np.arange(256) / 256)
    lam = 2.0 ** -np.arange(40)
    exact = np.max(np.abs(np.sum(lam[None, :] / (lam[None, :] * z[:, None] - 1.0), axis=1)))
    assert rep.max_logderiv == pytest.approx(exact, abs=1e-8)
    series = W.logderiv_bound_check(untwisted_series, 0.5, 0.7)
    assert series.max_logderiv == pytest.approx(exact, abs=1e-3)
    with pytest.raises(W.TwistError):
        W.logderiv_bound_check(zs, 0.5, 1.1)
    with pytest.raises(ValueError):
        W.logderiv_bound_check(zs, 0.5, 0.4)


def test_logderiv_growth_is_at_most_linear(doubling, srb, srb_rpf, torus1, linear_tau):
    reports = []
    for q in range(1, 21):
        op = _op(doubling, srb, srb_rpf, linear_tau, torus1.irrep((q,)), 32)
        reports.append(W.logderiv_bound_check(W.zeta_series_from_operator(op), 0.5, 0.9))
    assert W.logderiv_growth_exponent(reports) <= 1.1
    with pytest.raises(ValueError):
        W.logderiv_growth_exponent(reports[:1])


def test_decay_fits(doubling):
    _C, rho = W.decay_fit(W.scalar_spectrum(doubling, thermo.constant_potential(-math.log(2)), 32, dps=40))
    assert rho == pytest.approx(0.5, abs=1e-6)
    k3 = linear_map(3)
    _, rho = W.decay_fit(W.scalar_spectrum(k3, thermo.constant_potential(-math.log(3)), 32, dps=40))
    assert rho == pytest.approx(1 / 3, abs=1e-6)


def test_decay_fit_needs_trusted_values(doubling):
    spec = W.scalar_spectrum(doubling, thermo.constant_potential(-math.log(2)), 8)
    with pytest.raises(W.TwistError):
        W.decay_fit(spec, min_count=20)


def test_group_mismatch_is_rejected(doubling, srb, srb_rpf, su2, torus1, linear_tau):
    with pytest.raises(W.TwistError):
        _op(doubling, srb, srb_rpf, linear_tau, su2.irrep(1), 16)
    with pytest.raises(W.TwistError):
        W.make_skew("linear", su2)
    with pytest.raises(W.TwistError):
        W.make_skew("two-direction", torus1)
    with pytest.raises(ValueError):
        _op(doubling, srb, srb_rpf, linear_tau, torus1.irrep((1,)), 3)


def test_spectrum_record_round_trip(doubling, srb, srb_rpf, torus1, linear_tau, tmp_path):
    op = _op(doubling, srb, srb_rpf, linear_tau, torus1.irrep((2,)), 16)
    spec = W.eigenvalues(op)
    rec = W.spectrum_record(spec, [W.trace_matrix(op, 1)])
    path = tmp_path / "spec.json"
    W.write_spectrum_json([rec], path)
    back = json.loads(path.read_text())[0]
    assert back["irrep_id"] == [2] and back["N"] == 16 and back["kappa"] == 4.0
    assert complex(*back["eigenvalues"][0]) == pytest.approx(spec.eigenvalues[0])


@given(q=st.integers(1, 12))
def test_conjugate_irreps_have_conjugate_spectra(doubling, srb, srb_rpf, torus1, linear_tau, q):
    plus = _op(doubling, srb, srb_rpf, linear_tau, torus1.irrep((q,)), 24)
    minus = _op(doubling, srb, srb_rpf, linear_tau, torus1.irrep((-q,)), 24)
    assert np.allclose(plus.matrix, np.conj(minus.matrix), atol=1e-13)
    a = W.eigenvalues(plus).eigenvalues[:8]
    b = np.conj(W.eigenvalues(minus).eigenvalues[:8])
    assert _same_multiset(a, b, 1e-10)


@given(q=st.integers(0, 6), eps=st.sampled_from([0.0, 0.05]))
def test_determinant_series_matches_eigenvalue_product(q, eps, torus1, linear_tau):
    from skewmix.dynamics import perturbed_doubling

    tmap = perturbed_doubling(eps) if eps else linear_map(2)
    phi = thermo.srb_potential(tmap)
    rpf = thermo.rpf_solve(tmap, phi, 64)
    irrep = torus1.irrep((q,))
    op = _op(tmap, phi, rpf, linear_tau, irrep, 64)
    spec = W.eigenvalues(op)
    traces = [W.trace_periodic(tmap, phi, linear_tau, irrep, n, rpf.pressure) for n in range(1, 7)]
    from_orbits = W.zeta_coefficients(traces, 6)
    from_eigs = W.determinant_coefficients(spec.eigenvalues, 1, 6)
    assert np.max(np.abs(from_orbits - from_eigs)) <= 1e-8


@given(m=st.integers(0, 3), n=st.integers(1, 6))
def test_zeta_coefficients_of_a_finite_spectrum(m, n):
    rng = np.random.default_rng(m * 7 + n)
    lam = rng.uniform(-0.8, 0.8, 5) + 1j * rng.uniform(-0.3, 0.3, 5)
    dim = m + 1
    traces = [dim * np.sum(lam**k) for k in range(1, n + 1)]
    assert np.allclose(W.zeta_coefficients(traces, n), W.determinant_coefficients(lam, dim, n), atol=1e-12)
