import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewmix import dynamics as d
from skewmix.groups import SU2, Torus
from skewmix.twisted import identity_skew, torus_linear_skew

LOG2 = math.log(2.0)


def test_fixed_points_of_single_letter_words(doubling):
    p0 = d.periodic_point_of_word(doubling, (0,))
    p1 = d.periodic_point_of_word(doubling, (1,))
    assert p0.x == pytest.approx(0.0, abs=1e-14) and p0.multiplier == pytest.approx(2.0)
    assert p1.x == pytest.approx(1.0, abs=1e-14) and p1.multiplier == pytest.approx(2.0)


def test_two_letter_word_lies_on_the_one_third_orbit(doubling):
    p = d.periodic_point_of_word(doubling, (0, 1))
    assert p.x == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert sorted(p.orbit) == pytest.approx([1 / 3, 2 / 3], abs=1e-13)
    assert p.multiplier == pytest.approx(4.0)


def test_enumeration_counts_and_order(doubling):
    pts = d.enumerate_periodic_points(doubling, 1)
    assert [p.x for p in pts] == pytest.approx([0.0, 1.0], abs=1e-14)
    pts = d.enumerate_periodic_points(doubling, 2)
    assert [p.x for p in pts] == pytest.approx([0.0, 1 / 3, 2 / 3, 1.0], abs=1e-13)
    assert len(d.enumerate_periodic_points(d.linear_map(3), 2)) == 9
    words = [p.word for p in d.enumerate_periodic_points(doubling, 3)]
    assert words == sorted(words)


def test_enumeration_cap(doubling):
    with pytest.raises(d.MapError):
        d.periodic_orbits(doubling, 6, cap=10)


def test_birkhoff_sums(doubling):
    p = d.periodic_point_of_word(doubling, (0, 1))
    assert d.birkhoff_sum(lambda x: x, p) == pytest.approx(1.0, abs=1e-13)
    q = d.periodic_point_of_word(doubling, (1, 0, 1))
    assert d.birkhoff_sum(lambda x: np.full_like(x, -LOG2), q) == pytest.approx(-3 * LOG2)
    assert d.birkhoff_sum(lambda x: np.full_like(x, 0.7), q) == pytest.approx(2.1)


def test_group_cocycles(doubling):
    p = d.periodic_point_of_word(doubling, (0, 1))
    T = Torus(1)
    angle = d.group_cocycle(torus_linear_skew(), p, T)
    assert min(angle[0], 2 * math.pi - angle[0]) == pytest.approx(0.0, abs=1e-12)
    theta0 = 0.4
    q = d.periodic_point_of_word(doubling, (1, 1, 0))
    const = lambda x: np.full(np.shape(x) + (1,), theta0)
    assert d.group_cocycle(const, q, T)[0] == pytest.approx(3 * theta0)
    G = SU2()
    assert d.group_cocycle(identity_skew(G), q, G) == pytest.approx([1.0, 0.0, 0.0, 0.0])


def test_orbit_weights():
    assert d.orbit_weight(2.0, -LOG2) == pytest.approx(1.0)
    assert d.orbit_weight(4.0, -2 * LOG2) == pytest.approx(1 / 3)
    assert d.orbit_weight(1e12, 0.0) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(d.MapError):
        d.orbit_weight(0.5, 0.0)


@pytest.mark.parametrize("n", [1, 4, 9])
def test_pressure_from_orbits_linear(doubling, n):
    const = lambda c: (lambda x: np.full_like(x, c))
    assert d.pressure_from_orbits(doubling, const(-LOG2), n) == pytest.approx(0.0, abs=1e-13)
    assert d.pressure_from_orbits(doubling, const(-2 * LOG2), n) == pytest.approx(-LOG2, abs=1e-13)
    assert d.pressure_from_orbits(doubling, const(0.0), n) == pytest.approx(LOG2, abs=1e-13)


def test_pressure_from_orbits_is_cauchy(perturbed):
    phi = lambda x: -np.log(perturbed.derivative(x))
    p = [d.pressure_from_orbits(perturbed, phi, n) for n in (3, 6, 12)]
    assert abs(p[2] - p[1]) < abs(p[1] - p[0])


def test_map_validation():
    with pytest.raises(d.MapError):
        d.linear_map(1)
    with pytest.raises(d.MapError):
        d.make_map("tent")


def test_perturbed_inverse_branches(perturbed):
    y = np.linspace(0.0, 1.0, 41)
    for j in range(2):
        x = perturbed.inverse(j, y)
        assert np.all(perturbed.locate(x[1:-1]) == j)
        assert np.allclose(perturbed.forward_by(j, x), y, atol=1e-13)
    assert perturbed.min_expansion > 1.0


@given(word=st.lists(st.integers(0, 1), min_size=1, max_size=7), eps=st.sampled_from([0.0, 0.05, 0.1]))
def test_word_point_consistency(word, eps):
    tmap = d.perturbed_doubling(eps) if eps else d.doubling_map()
    p = d.periodic_point_of_word(tmap, tuple(word))
    x = p.x
    for a in word:
        x = float(tmap.forward_by(a, np.array([x]))[0])
    assert abs(x - p.x) < 1e-10
    assert abs(p.multiplier) >= tmap.min_expansion ** len(word) * (1 - 1e-12)


@given(word=st.lists(st.integers(0, 2), min_size=2, max_size=6), shift=st.integers(1, 5))
def test_cyclic_rotation_stays_on_the_orbit(word, shift):
    tmap = d.linear_map(3)
    shift %= len(word)
    p = d.periodic_point_of_word(tmap, tuple(word))
    q = d.periodic_point_of_word(tmap, tuple(word[shift:] + word[:shift]))
    assert q.multiplier == pytest.approx(p.multiplier)
    f = lambda x: np.sin(3 * x) + x**2
    assert d.birkhoff_sum(f, q) == pytest.approx(d.birkhoff_sum(f, p), abs=1e-12)
    assert min(abs(q.x - v) for v in p.orbit) < 1e-12
