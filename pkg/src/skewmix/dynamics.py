"""Analytic full-branch expanding maps of [0, 1] and their periodic orbits.

Letters of symbolic words are 0-based branch indices: the word ``(0, 1)``
is the composition ``gamma_0 o gamma_1`` of inverse branches, whose unique
fixed point is the periodic point coded by that word.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import numerics

ArrayFn = Callable[[np.ndarray], np.ndarray]

MAX_ORBIT_COUNT = 2_000_000


class MapError(ValueError):
    """Invalid map definition or a non-contracting inverse branch configuration."""


@dataclass(frozen=True)
class Branch:
    index: int
    interval: tuple[float, float]
    forward: ArrayFn
    derivative: ArrayFn
    inverse: ArrayFn
    expansion_min: float


@dataclass(frozen=True)
class ExpandingMap:
    """Piecewise analytic map with ``k >= 2`` full branches covering [0, 1]."""

    branches: tuple[Branch, ...]
    name: str = "map"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.branches) < 2:
            raise MapError("need at least two branches")
        ends = [b.interval for b in self.branches]
        if not math.isclose(ends[0][0], 0.0, abs_tol=1e-14) or not math.isclose(ends[-1][1], 1.0, abs_tol=1e-14):
            raise MapError("branch intervals must cover [0, 1]")
        for (a0, b0), (a1, b1) in itertools.pairwise(ends):
            if not math.isclose(b0, a1, abs_tol=1e-14):
                raise MapError("branch intervals must be contiguous with disjoint interiors")
        for b in self.branches:
            if b.expansion_min <= 1.0:
                raise MapError(f"branch {b.index} is not expanding")

    @property
    def k(self) -> int:
        return len(self.branches)

    @property
    def min_expansion(self) -> float:
        return min(b.expansion_min for b in self.branches)

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Branch index of each point; boundary points go to the lower-index branch."""
        x = np.asarray(x, dtype=float)
        rights = np.array([b.interval[1] for b in self.branches[:-1]])
        return np.searchsorted(rights, x, side="left")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.locate(x)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            sel = idx == j
            if np.any(sel):
                out[sel] = b.forward(x[sel])
        return out

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.locate(x)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            sel = idx == j
            if np.any(sel):
                out[sel] = b.derivative(x[sel])
        return out

    def inverse(self, letters: np.ndarray | int, y: np.ndarray) -> np.ndarray:
        """Apply inverse branch ``letters[i]`` to ``y[i]`` (a scalar letter applies to all)."""
        y = np.asarray(y, dtype=float)
        if np.isscalar(letters) or np.ndim(letters) == 0:
            return self.branches[int(letters)].inverse(y)
        letters = np.asarray(letters)
        out = np.empty_like(y)
        for j, b in enumerate(self.branches):
            sel = letters == j
            if np.any(sel):
                out[sel] = b.inverse(y[sel])
        return out

    def forward_by(self, letters: np.ndarray | int, x: np.ndarray) -> np.ndarray:
        """Apply forward branch ``letters[i]`` to ``x[i]`` without locating the point."""
        x = np.asarray(x, dtype=float)
        if np.isscalar(letters) or np.ndim(letters) == 0:
            return self.branches[int(letters)].forward(x)
        letters = np.asarray(letters)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            sel = letters == j
            if np.any(sel):
                out[sel] = b.forward(x[sel])
        return out

    def derivative_by(self, letters: np.ndarray | int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.isscalar(letters) or np.ndim(letters) == 0:
            return self.branches[int(letters)].derivative(x)
        letters = np.asarray(letters)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            sel = letters == j
            if np.any(sel):
                out[sel] = b.derivative(x[sel])
        return out

    def iterate(self, x: np.ndarray, n: int) -> np.ndarray:
        for _ in range(n):
            x = self(x)
        return x


@dataclass(frozen=True)
class PeriodicPoint:
    """Point with ``T^n x = x``; ``orbit[j]`` is ``T^j x``."""

    word: tuple[int, ...]
    x: float
    multiplier: float
    orbit: np.ndarray

    @property
    def period(self) -> int:
        return len(self.word)


@dataclass(frozen=True)
class PeriodicOrbits:
    """All ``k^n`` period-n points, in lexicographic word order, as arrays.

    ``orbits[w, j] = T^j x_w``; ``multipliers[w] = (T^n)'(x_w)``.
    """

    words: np.ndarray
    orbits: np.ndarray
    multipliers: np.ndarray

    @property
    def period(self) -> int:
        return self.words.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.orbits[:, 0]

    def __len__(self) -> int:
        return self.words.shape[0]

    def birkhoff(self, f: ArrayFn) -> np.ndarray:
        vals = np.asarray(f(self.orbits), dtype=float)
        vals = np.broadcast_to(vals, self.orbits.shape)
        # left-to-right accumulation keeps a fixed summation order
        total = np.zeros(len(self))
        for j in range(self.period):
            total = total + vals[:, j]
        return total

    def as_points(self) -> list[PeriodicPoint]:
        return [
            PeriodicPoint(tuple(int(a) for a in w), float(o[0]), float(m), o.copy())
            for w, o, m in zip(self.words, self.orbits, self.multipliers)
        ]


def _solve_words(tmap: ExpandingMap, words: np.ndarray, max_iter: int = 500) -> PeriodicOrbits:
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    count, n = words.shape
    if n < 1:
        raise MapError("words must be nonempty")
    if words.min() < 0 or words.max() >= tmap.k:
        raise MapError("letter out of range")

    x = np.full(count, 0.5)
    for _ in range(max_iter):
        y = x
        for j in range(n - 1, -1, -1):
            y = tmap.inverse(words[:, j], y)
        step = np.max(np.abs(y - x))
        x = y
        if step < 1e-15:
            break
    else:
        raise MapError("inverse-branch iteration did not converge; branches are not contracting")

    def orbit_of(x0):
        orb = np.empty((count, n))
        y = x0
        for j in range(n - 1, 0, -1):
            y = tmap.inverse(words[:, j], y)
            orb[:, j] = y
        orb[:, 0] = x0
        return orb

    def multiplier_of(orb):
        mult = np.ones(count)
        for j in range(n):
            mult = mult * tmap.derivative_by(words[:, j], orb[:, j])
        return mult

    # one Newton polish step on T^n(x) - x along the word's branches
    orb = orbit_of(x)
    mult = multiplier_of(orb)
    image = tmap.forward_by(words[:, n - 1], orb[:, n - 1])
    x = np.clip(x - (image - x) / (mult - 1.0), 0.0, 1.0)
    orb = orbit_of(x)
    mult = multiplier_of(orb)
    return PeriodicOrbits(words, orb, mult)


def all_words(k: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(k**n, n)


def periodic_point_of_word(tmap: ExpandingMap, word: Sequence[int]) -> PeriodicPoint:
    return _solve_words(tmap, np.array([list(word)])).as_points()[0]


def periodic_orbits(tmap: ExpandingMap, n: int, cap: int = MAX_ORBIT_COUNT) -> PeriodicOrbits:
    if n < 1:
        raise MapError("period must be >= 1")
    if tmap.k**n > cap:
        raise MapError(f"{tmap.k}^{n} periodic points exceed the cap {cap}")
    return _solve_words(tmap, all_words(tmap.k, n))


def enumerate_periodic_points(tmap: ExpandingMap, n: int, cap: int = MAX_ORBIT_COUNT) -> list[PeriodicPoint]:
    return periodic_orbits(tmap, n, cap).as_points()


def birkhoff_sum(f: ArrayFn, point: PeriodicPoint) -> float:
    vals = np.broadcast_to(np.asarray(f(point.orbit), dtype=float), point.orbit.shape)
    total = 0.0
    for v in vals:
        total += float(v)
    return total


def group_cocycle(tau, point: PeriodicPoint, group):
    """Ordered product ``tau(x) tau(Tx) ... tau(T^{n-1} x)``."""
    return group.product(tau(point.orbit))


def orbit_weight(multiplier, phi_birkhoff):
    """``exp(phi^(n)(x)) / (1 - 1/(T^n)'(x))``."""
    multiplier = np.asarray(multiplier, dtype=float)
    if np.any(np.abs(multiplier) <= 1.0):
        raise MapError("orbit multiplier must exceed 1 in absolute value")
    return np.exp(phi_birkhoff) / (1.0 - 1.0 / multiplier)


def pressure_from_orbits(tmap: ExpandingMap, phi: ArrayFn, n: int) -> float:
    """``(1/n) log sum_{T^n x = x} exp(phi^(n)(x))``."""
    orbs = periodic_orbits(tmap, n)
    return float(logsumexp(orbs.birkhoff(phi))) / n


# --------------------------------------------------------------------------
# shipped maps


def linear_map(k: int = 2) -> ExpandingMap:
    """``T(x) = k x mod 1`` with ``k`` full affine branches."""
    if k < 2:
        raise MapError("linear map needs k >= 2")
    branches = []
    for j in range(k):
        branches.append(
            Branch(
                index=j,
                interval=(j / k, (j + 1) / k),
                forward=lambda x, j=j: k * np.asarray(x) - j,
                derivative=lambda x: np.full(np.shape(x), float(k)),
                inverse=lambda y, j=j: (np.asarray(y) + j) / k,
                expansion_min=float(k),
            )
        )
    return ExpandingMap(tuple(branches), name="linear", params={"k": k})


def doubling_map() -> ExpandingMap:
    m = linear_map(2)
    return ExpandingMap(m.branches, name="doubling", params={})


def perturbed_doubling(eps: float = 0.05) -> ExpandingMap:
    """``T(x) = 2x + eps sin(2 pi x) mod 1`` for ``|eps| < 1/(2 pi)``."""
    if not abs(eps) < 1.0 / (2.0 * math.pi):
        raise MapError("perturbation must satisfy |eps| < 1/(2 pi)")
    two_pi = 2.0 * math.pi

    def raw(x):
        return 2 * x + eps * numerics.sin(two_pi * x)

    def draw(x):
        return 2 + two_pi * eps * numerics.cos(two_pi * x)

    def make_inverse(j):
        def inv(y):
            target = numerics.as_real(y) + j
            tol = 4 * numerics.eps_of(target)
            x = target / 2
            for _ in range(100):
                dx = (raw(x) - target) / draw(x)
                x = x - dx
                if np.all(np.abs(dx) < tol):
                    break
            return x

        return inv

    branches = tuple(
        Branch(
            index=j,
            interval=(0.5 * j, 0.5 * (j + 1)),
            forward=lambda x, j=j: raw(numerics.as_real(x)) - j,
            derivative=lambda x: draw(numerics.as_real(x)),
            inverse=make_inverse(j),
            expansion_min=2.0 - two_pi * abs(eps),
        )
        for j in range(2)
    )
    return ExpandingMap(branches, name="perturbed", params={"eps": eps})


MAPS = {
    "doubling": lambda **kw: doubling_map(),
    "linear": linear_map,
    "perturbed": perturbed_doubling,
}


def make_map(name: str, **params) -> ExpandingMap:
    try:
        factory = MAPS[name]
    except KeyError:
        raise MapError(f"unknown map {name!r}; choose from {sorted(MAPS)}") from None
    return factory(**params)
