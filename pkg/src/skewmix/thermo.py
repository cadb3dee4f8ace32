"""Scalar Ruelle transfer operator, its Perron-Frobenius data and equilibrium quadrature.

The operator ``L f(x) = sum_j exp(phi(gamma_j x)) f(gamma_j x)`` is discretized
by collocation at ``N`` Chebyshev-Lobatto nodes: a function is represented by
its node values and interpolated by the degree ``N - 1`` polynomial.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import mpmath
import numpy as np

from . import numerics
from .chebyshev import (
    interpolate,
    interpolation_matrix,
    lobatto_nodes,
    lobatto_nodes_mp,
)
from .dynamics import ExpandingMap

EIG_RESIDUAL_TOL = 1e-11


class RpfError(RuntimeError):
    """Leading eigenvalue not simple, not real-positive, or not resolved."""


@dataclass(frozen=True)
class Potential:
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = "phi"

    def __call__(self, x):
        if numerics.is_object(x):
            vals = np.asarray(self.eval(x))
            return np.broadcast_to(numerics.mp_array(vals), np.shape(x))
        return np.broadcast_to(np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float), np.shape(x))

    def shift(self, c: float, label: str | None = None) -> Potential:
        f = self.eval
        return Potential(lambda x: f(x) + c, label or f"{self.label}{c:+.17g}")

    def scale(self, s: float) -> Potential:
        f = self.eval
        return Potential(lambda x: s * f(x), f"{s:g}*({self.label})")


def constant_potential(c: float) -> Potential:
    return Potential(lambda x: np.full(np.shape(x), float(c)), f"const({c:.17g})")


def srb_potential(tmap: ExpandingMap) -> Potential:
    """``-log|T'|``, whose equilibrium state is the absolutely continuous invariant measure."""
    def phi(x):
        if numerics.is_object(x):
            # branch-free evaluation is fine here: |T'| is continuous across branches for the shipped maps
            d = np.stack([b.derivative(x) for b in tmap.branches])
            idx = tmap.locate(np.asarray(x, dtype=float))
            return -numerics.log(np.abs(np.choose(idx, d)))
        return -np.log(np.abs(tmap.derivative(x)))

    return Potential(phi, f"srb[{tmap.name}]")


def mme_potential(tmap: ExpandingMap) -> Potential:
    """``-log k``: the measure of maximal entropy."""
    return constant_potential(-math.log(tmap.k))


def sine_potential(base: float, amplitude: float) -> Potential:
    return Potential(lambda x: base + amplitude * numerics.sin(2.0 * np.pi * x), f"{base:g}+{amplitude:g}sin(2pi x)")


@dataclass(frozen=True)
class RpfData:
    """Perron-Frobenius data at the collocation nodes.

    ``conformal_weights`` represent the eigenmeasure nu (``int f dnu ~ sum nu_i f(x_i)``),
    normalized to total mass one; ``density_values`` are h at the nodes with
    ``sum nu_i h_i = 1``; ``measure_weights = nu_i h_i`` integrate against mu = h nu.
    """

    pressure: float
    density_values: np.ndarray
    node_points: np.ndarray
    measure_weights: np.ndarray
    conformal_weights: np.ndarray
    eigenvalue: float
    second_modulus: float

    @property
    def collocation_size(self) -> int:
        return len(self.node_points)

    def density(self, x) -> np.ndarray:
        return interpolate(self.node_points, self.density_values, x)

    def integrate(self, f) -> float:
        return equilibrium_integral(self, f)


def branch_samples(tmap: ExpandingMap, phi: Potential, nodes: np.ndarray):
    """Preimages ``y[j, i] = gamma_j(x_i)`` and weights ``exp(phi(y))``."""
    y = np.stack([b.inverse(nodes) for b in tmap.branches])
    return y, numerics.exp(phi(y))


def discretize_transfer_operator(tmap: ExpandingMap, phi: Potential, N: int, dps: int | None = None) -> np.ndarray:
    """``M[i, l] = sum_j exp(phi(gamma_j x_i)) ell_l(gamma_j x_i)`` at Lobatto nodes.

    With ``dps`` the matrix is an object array of mpmath numbers assembled at
    that many digits; the map branches and ``phi`` are then called on mpmath
    arrays, and any evaluator that falls back to floats caps the accuracy.
    """
    if N < 4:
        raise ValueError("collocation needs N >= 4")
    if dps is None:
        nodes = lobatto_nodes(N)
        y, w = branch_samples(tmap, phi, nodes)
        B = interpolation_matrix(nodes, y)
        return np.einsum("ji,jil->il", w, B)
    with mpmath.workdps(dps):
        nodes = lobatto_nodes_mp(N)
        y, w = branch_samples(tmap, phi, nodes)
        B = interpolation_matrix(nodes, y)
        M = w[0][:, None] * B[0]
        for j in range(1, tmap.k):
            M = M + w[j][:, None] * B[j]
        return M


def transfer_spectrum(tmap: ExpandingMap, phi: Potential, N: int = 32, dps: int | None = None) -> np.ndarray:
    """Eigenvalues of ``exp(-P) L_phi`` sorted by decreasing modulus.

    Conjugating by the density is a similarity, so these are also the
    eigenvalues of the normalized operator.  With ``dps`` the matrix is built
    in extended precision and diagonalized with python-flint; this matters
    because collocation matrices of transfer operators are far from normal and
    rounding the entries to double precision already moves the small
    eigenvalues (about 1e-4 at ``lambda = 2^-8`` for the doubling map, N = 32).
    """
    M = discretize_transfer_operator(tmap, phi, N, dps)
    if dps is None:
        vals = np.linalg.eigvals(M)
    else:
        with mpmath.workdps(dps):
            vals = numerics.eigvals_extended(M)
    vals = vals[np.argsort(-np.abs(vals), kind="stable")]
    return vals / vals[0].real


def _leading_pair(M: np.ndarray):
    vals, vecs = np.linalg.eig(M)
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order], vecs[:, order]


def rpf_solve(tmap: ExpandingMap, phi: Potential, N: int = 32) -> RpfData:
    M = discretize_transfer_operator(tmap, phi, N)
    vals, vecs = _leading_pair(M)
    lam = vals[0]
    if abs(lam.imag) > 1e-10 * abs(lam) or lam.real <= 0:
        raise RpfError(f"leading eigenvalue {lam} is not real positive; increase N")
    if abs(vals[1]) > abs(lam) * (1.0 - 1e-6):
        raise RpfError("leading eigenvalue is not simple; increase N or check the map")
    lam = lam.real
    v = vecs[:, 0]
    v = np.real(v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))])))
    resid = np.linalg.norm(M @ v - lam * v) / np.linalg.norm(v)
    if resid > EIG_RESIDUAL_TOL * max(1.0, lam):
        raise RpfError(f"right eigenvector residual {resid:.2e} too large")

    lvals, lvecs = np.linalg.eig(M.T)
    u = lvecs[:, np.argmin(np.abs(lvals - lam))]
    u = np.real(u * np.exp(-1j * np.angle(u[np.argmax(np.abs(u))])))
    resid = np.linalg.norm(M.T @ u - lam * u) / np.linalg.norm(u)
    if resid > EIG_RESIDUAL_TOL * max(1.0, lam):
        raise RpfError(f"left eigenvector residual {resid:.2e} too large")

    nu = u / np.sum(u)
    h = v / np.dot(nu, v)
    if np.any(h <= 0):
        raise RpfError("invariant density is not positive at the nodes; increase N")
    w = nu * h
    w = w / np.sum(w)
    return RpfData(
        pressure=math.log(lam),
        density_values=h,
        node_points=lobatto_nodes(N),
        measure_weights=w,
        conformal_weights=nu,
        eigenvalue=lam,
        second_modulus=float(abs(vals[1])),
    )


def normalize_potential(phi: Potential, rpf: RpfData) -> Potential:
    """``phi - P(phi)``."""
    return phi.shift(-rpf.pressure, label=f"({phi.label})-P")


def equilibrium_integral(rpf: RpfData, f) -> float:
    vals = np.asarray(f(rpf.node_points))
    vals = np.broadcast_to(vals, rpf.node_points.shape)
    return float(np.dot(rpf.measure_weights, vals))


def conformal_integral(rpf: RpfData, f) -> float:
    vals = np.broadcast_to(np.asarray(f(rpf.node_points)), rpf.node_points.shape)
    return float(np.dot(rpf.conformal_weights, vals))


def normalized_transfer_matrix(tmap: ExpandingMap, phi: Potential, rpf: RpfData, N: int) -> np.ndarray:
    """Collocation matrix of ``f -> h^-1 L_phi(h f) exp(-P)`` with h interpolated from ``rpf``."""
    nodes = lobatto_nodes(N)
    y, w = branch_samples(tmap, phi, nodes)
    hx = rpf.density(nodes)
    hy = rpf.density(y)
    weight = w * hy / hx[None, :] * math.exp(-rpf.pressure)
    B = interpolation_matrix(nodes, y)
    return np.einsum("ji,jil->il", weight, B)


POTENTIALS = {
    "srb": lambda tmap, **kw: srb_potential(tmap),
    "mme": lambda tmap, **kw: mme_potential(tmap),
    "constant": lambda tmap, value=0.0: constant_potential(value),
    "sine": lambda tmap, base=-math.log(2.0), amplitude=0.1: sine_potential(base, amplitude),
}


def make_potential(name: str, tmap: ExpandingMap, **params) -> Potential:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None
    return factory(tmap, **params)
