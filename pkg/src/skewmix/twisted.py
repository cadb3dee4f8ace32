"""Twisted transfer operators, their spectra and traces, and the dynamical determinant.

The operator for an irrep ``pi`` acts on row-vector functions ``v: [0, 1] -> C^dim``:

    (M v)(x) = sum_j w_j(x) v(gamma_j x) pi(tau(gamma_j x))^-1,
    w_j(x) = exp(phi(gamma_j x) - P) h(gamma_j x) / h(x).

Right multiplication preserves each row of a matrix-valued function, so the
operator on ``End(V)``-valued functions is ``dim`` copies of this one and its
trace is ``dim`` times ours.

Iterating the operator along a periodic orbit ``y, Ty, ..., T^(n-1) y`` picks up
``pi(tau(y))^-1 pi(tau(Ty))^-1 ... = pi((tau(T^(n-1) y) ... tau(y))^-1)``, so the
orbit sum uses the character of the inverse of the forward skew cocycle.  On the
torus this is ``exp(-i q tau^(n))``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.linalg

from . import numerics
from .chebyshev import interpolation_matrix, lobatto_nodes
from .dynamics import ExpandingMap, periodic_orbits
from .groups import SU2, CompactGroup, IrrepInfo, Torus, quat_exp, quat_multiply
from .thermo import Potential, RpfData, branch_samples, discretize_transfer_operator

CONTOUR_POINTS = 256
ZERO_THRESHOLD = 1e-12


class TwistError(ValueError):
    pass


@dataclass(frozen=True)
class SkewFunction:
    """``tau: [0, 1] -> G``; ``eval`` maps an array of points to group points (extra last axis)."""

    eval: Callable[[np.ndarray], np.ndarray]
    group: CompactGroup
    label: str = "tau"

    def __call__(self, x) -> np.ndarray:
        return self.group.validate(self.eval(np.asarray(x, dtype=float)))


def identity_skew(group: CompactGroup) -> SkewFunction:
    return SkewFunction(lambda x: group.identity(np.shape(x)), group, "identity")


def constant_skew(group: CompactGroup, g0) -> SkewFunction:
    g0 = group.validate(g0)
    return SkewFunction(lambda x: np.broadcast_to(g0, np.shape(x) + g0.shape).copy(), group, "constant")


def torus_linear_skew(scale: float = 2.0 * math.pi, group: Torus | None = None) -> SkewFunction:
    """``tau(x) = scale * x`` in every torus coordinate."""
    group = group or Torus(1)
    return SkewFunction(lambda x: np.repeat((scale * x)[..., None], group.d, axis=-1), group, f"{scale:g}*x")


def su2_one_direction(axis=(1.0, 0.0, 0.0), scale: float = math.pi) -> SkewFunction:
    """``exp(scale * x * xi)`` for a unit direction ``xi``; abelian in effect."""
    return SkewFunction(lambda x: quat_exp(scale * x, axis), SU2(), f"exp({scale:g} x xi)")


def su2_two_direction(
    a: Callable = lambda x: x,
    b: Callable = lambda x: x * x,
    axis1=(1.0, 0.0, 0.0),
    axis2=(0.0, 1.0, 0.0),
) -> SkewFunction:
    """``exp(a(x) xi_1) exp(b(x) xi_2)`` with non-commuting directions."""

    def ev(x):
        return quat_multiply(quat_exp(a(x), axis1), quat_exp(b(x), axis2))

    return SkewFunction(ev, SU2(), "exp(a xi1) exp(b xi2)")


SKEWS = {
    "identity": lambda group, **kw: identity_skew(group),
    "constant": lambda group, value=0.0, **kw: constant_skew(group, np.atleast_1d(np.asarray(value, dtype=float))),
    "linear": lambda group, scale=2.0 * math.pi: torus_linear_skew(scale, group),
    "one-direction": lambda group, scale=math.pi, axis=(1.0, 0.0, 0.0): su2_one_direction(axis, scale),
    "two-direction": lambda group, **kw: su2_two_direction(),
}


def make_skew(name: str, group: CompactGroup, **params) -> SkewFunction:
    try:
        factory = SKEWS[name]
    except KeyError:
        raise TwistError(f"unknown skew function {name!r}; choose from {sorted(SKEWS)}") from None
    if name in ("linear",) and not isinstance(group, Torus):
        raise TwistError("the linear skew function lives on a torus")
    if name in ("one-direction", "two-direction") and not isinstance(group, SU2):
        raise TwistError(f"{name} skew functions live on SU(2)")
    return factory(group, **params)


# --------------------------------------------------------------------------
# operator and spectrum


@dataclass(frozen=True)
class TwistedOperator:
    """Collocation matrix, possibly in a gauge-adapted basis.

    With a torus ``gauge`` polynomial ``s`` the matrix represents
    ``u -> e^{-i q.s} M(e^{i q.s} u)``, a similarity of ``M``: eigenvalues and
    traces are unchanged and an eigenvector ``u`` maps back to ``e^{i q.s} u``.
    """

    irrep: IrrepInfo
    matrix: np.ndarray
    collocation_size: int
    normalized: bool = True
    gauge: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.irrep.dim

    @property
    def nodes(self) -> np.ndarray:
        return lobatto_nodes(self.collocation_size)

    def gauge_factor(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gauge is None:
            return np.ones(x.shape, dtype=complex)
        return np.exp(1j * gauge_phase(self.gauge, np.asarray(self.irrep.id, dtype=float), x))


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalues sorted by decreasing modulus.

    Each value occurs with multiplicity ``multiplicity`` (= dim) in the
    operator on matrix-valued functions.  ``error_estimates`` are first-order
    perturbation bounds (double precision) or enclosure radii (extended).
    """

    eigenvalues: np.ndarray
    irrep: IrrepInfo | None
    N: int
    trusted: np.ndarray
    error_estimates: np.ndarray
    multiplicity: int = 1

    @property
    def trusted_values(self) -> np.ndarray:
        return self.eigenvalues[self.trusted]

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(self.eigenvalues[0])) if len(self.eigenvalues) else 0.0


def _check_compatible(tau: SkewFunction, irrep: IrrepInfo):
    if tau.group != irrep.group:
        raise TwistError(f"skew function lives on {tau.group!r} but the irrep belongs to {irrep.group!r}")


def torus_gauge(tmap: ExpandingMap, tau: SkewFunction, degree: int = 1, samples: int = 64) -> np.ndarray:
    """Coefficients of a polynomial gauge ``s`` making ``s(y) - s(T y) - tau(y)`` as flat as possible.

    Returns an array ``(degree, d)``: ``s(x) = sum_k coef[k - 1] x^k``.  The fit is
    least squares on the derivative ``s'(y) - s'(T y) T'(y) - tau'(y)`` over
    Gauss points of every branch, with ``tau'`` from wrapped central differences.
    """
    xg, _ = np.polynomial.legendre.leggauss(samples)
    rows, rhs = [], []
    step = 1e-6
    powers = np.arange(1, degree + 1)
    for b in tmap.branches:
        lo, hi = b.interval
        y = lo + (hi - lo) * 0.5 * (xg + 1.0)
        diff = tau(y + step) - tau(y - step)
        rhs.append((np.mod(diff + math.pi, 2.0 * math.pi) - math.pi) / (2.0 * step))
        Ty = b.forward(y)
        dT = b.derivative(y)
        rows.append(powers * (y[:, None] ** (powers - 1) - Ty[:, None] ** (powers - 1) * dT[:, None]))
    coef, *_ = np.linalg.lstsq(np.concatenate(rows), np.concatenate(rhs), rcond=None)
    return coef


def gauge_phase(coef: np.ndarray, q: np.ndarray, x) -> np.ndarray:
    """``q . s(x)`` for the polynomial gauge ``coef`` of :func:`torus_gauge`."""
    x = np.asarray(x, dtype=float)
    powers = np.arange(1, coef.shape[0] + 1)
    return (x[..., None] ** powers) @ (coef @ q)


def build_twisted_matrix(
    tmap: ExpandingMap,
    phi: Potential,
    rpf: RpfData,
    tau: SkewFunction,
    irrep: IrrepInfo,
    N: int,
    gauge: bool = True,
) -> TwistedOperator:
    """Collocation matrix of the normalized twisted operator; ``rpf`` must be solved for ``phi``.

    On a torus the default basis is ``e^{i q.s(x)}`` times polynomials with the
    gauge ``s`` of :func:`torus_gauge`.  For ``tau(x) = 2 pi x`` over the
    doubling map this removes the oscillation entirely; without it a degree-47
    polynomial basis cannot resolve ``exp(2 pi i q x)`` for ``q`` beyond about 3.
    """
    _check_compatible(tau, irrep)
    if N < 4:
        raise ValueError("collocation needs N >= 4")
    nodes = lobatto_nodes(N)
    y, ew = branch_samples(tmap, phi, nodes)
    w = ew * rpf.density(y) / rpf.density(nodes)[None, :] * math.exp(-rpf.pressure)
    B = interpolation_matrix(nodes, y)
    K = w[:, :, None] * B  # (k, N, N)
    dim = irrep.dim
    if dim == 1 and irrep.is_trivial:
        return TwistedOperator(irrep, K.sum(axis=0).astype(complex), N)
    if isinstance(irrep.group, Torus):
        q = np.asarray(irrep.id, dtype=float)
        c = torus_gauge(tmap, tau) if gauge else None
        phase = -(tau(y) @ q)
        if c is not None:
            phase = phase + gauge_phase(c, q, y) - gauge_phase(c, q, nodes)[None, :]
        M = K * np.exp(1j * phase)[:, :, None]
        return TwistedOperator(irrep, M.sum(axis=0), N, gauge=c)
    R = irrep.matrix(tau(y))  # (k, N, dim, dim) = pi(tau(y))
    R = np.conj(np.swapaxes(R, -1, -2))  # unitary inverse
    # M[(i, b), (l, a)] = sum_j K[j, i, l] R[j, i, a, b]
    M = np.einsum("jil,jiab->ibla", K, R).reshape(N * dim, N * dim)
    return TwistedOperator(irrep, M, N)


def _trust_mask(vals, errs, N, dim, eps):
    lead = abs(vals[0]) if len(vals) else 0.0
    cut = math.sqrt(eps) * lead
    idx = np.arange(len(vals))
    return (np.abs(vals) > cut) & (idx <= N * dim // 2) & (errs <= cut)


def _matrix_spectrum(M, N, dim, irrep) -> SpectrumResult:
    if not np.all(np.isfinite(M)):
        raise TwistError("matrix has non-finite entries")
    try:
        vals, vl, vr = scipy.linalg.eig(M, left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise TwistError(f"eigen-solver failed: {exc}") from exc
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vl, vr = vals[order], vl[:, order], vr[:, order]
    # eigenvalue condition numbers 1 / |y^H x| for unit left/right vectors
    overlap = np.abs(np.sum(np.conj(vl) * vr, axis=0))
    cond = 1.0 / np.maximum(overlap, 1e-300)
    eps = float(np.finfo(float).eps)
    errs = cond * eps * np.linalg.norm(M, 2)
    return SpectrumResult(vals, irrep, N, _trust_mask(vals, errs, N, dim, eps), errs, dim)


def _by_modulus(vals):
    return vals[np.argsort(-np.abs(vals), kind="stable")]


def eigenvalues(op: TwistedOperator) -> SpectrumResult:
    return _matrix_spectrum(op.matrix, op.collocation_size, op.dim, op.irrep)


def scalar_spectrum(tmap: ExpandingMap, phi: Potential, N: int = 32, dps: int | None = None,
                    irrep: IrrepInfo | None = None) -> SpectrumResult:
    """Spectrum of ``exp(-P) L_phi``, optionally assembled and solved in extended precision.

    Conjugation by the density is a similarity, so this is also the spectrum of
    the normalized operator.
    """
    M = discretize_transfer_operator(tmap, phi, N, dps)
    if dps is None:
        res = _matrix_spectrum(M, N, 1, irrep)
        vals, errs = res.eigenvalues, res.error_estimates
        eps = float(np.finfo(float).eps)
    else:
        # accuracy is judged by repeating assembly and eigensolve with more digits
        check = dps + max(10, dps // 2)
        with mpmath.workdps(dps):
            vals = _by_modulus(numerics.eigvals_extended(M))
            eps = numerics.eps_of(M)
        with mpmath.workdps(check):
            ref = numerics.eigvals_extended(discretize_transfer_operator(tmap, phi, N, check))
        errs = np.min(np.abs(vals[:, None] - ref[None, :]), axis=1)
    scale = vals[0].real
    vals, errs = vals / scale, errs / abs(scale)
    return SpectrumResult(vals, irrep, N, _trust_mask(vals, errs, N, 1, eps), errs, 1)


def decay_fit(sres: SpectrumResult, min_count: int = 6) -> tuple[float, float]:
    """``(C, rho)`` from a least-squares line through ``log|lambda_n|`` over trusted indices."""
    idx = np.flatnonzero(sres.trusted)
    if len(idx) < min_count:
        raise TwistError(f"only {len(idx)} trusted eigenvalues; need {min_count}")
    slope, intercept = np.polyfit(idx.astype(float), np.log(np.abs(sres.eigenvalues[idx])), 1)
    rho = math.exp(slope)
    if not rho < 1.0:
        raise TwistError(f"fitted rho = {rho} is not below 1")
    return math.exp(intercept), rho


# --------------------------------------------------------------------------
# traces


def trace_matrix(op: TwistedOperator, n: int) -> complex:
    if n < 1:
        raise ValueError("n must be >= 1")
    return complex(op.dim * np.trace(np.linalg.matrix_power(op.matrix, n)))


def _orbit_terms(tmap, phi, tau, irrep, n, pressure):
    _check_compatible(tau, irrep)
    orbs = periodic_orbits(tmap, n)
    group = irrep.group
    inv_steps = group.inverse(tau(orbs.orbits))  # (count, n, coords)
    cocycle = group.product(inv_steps)
    chi = irrep.character(cocycle)
    weight = np.exp(orbs.birkhoff(phi) - n * pressure) / (1.0 - 1.0 / orbs.multipliers)
    return orbs, chi, weight


def trace_periodic(
    tmap: ExpandingMap,
    phi: Potential,
    tau: SkewFunction,
    irrep: IrrepInfo,
    n: int,
    pressure: float = 0.0,
    rpf: RpfData | None = None,
) -> complex:
    """``dim sum_{T^n x = x} chi(cocycle^-1) exp(phi^(n) - n P) / (1 - 1/(T^n)'(x))``.

    Given ``rpf``, the sum is recomputed with the density-conjugated weights and
    the two values must agree to round-off (the ``log h`` terms telescope).
    """
    orbs, chi, weight = _orbit_terms(tmap, phi, tau, irrep, n, pressure)
    terms = chi * weight
    total = complex(irrep.dim * np.sum(terms))
    if rpf is not None:
        h = rpf.density(orbs.orbits)
        h_next = np.roll(h, -1, axis=1)  # h(T x_j), closing the orbit
        ratio = np.prod(h_next / h, axis=1)
        conj_total = complex(irrep.dim * np.sum(terms * ratio))
        if abs(conj_total - total) > 1e-12 * (1.0 + abs(total)):
            raise TwistError("density factors failed to cancel on periodic orbits")
    return total


def W_value(tmap, phi, tau, irrep, n, pressure: float = 0.0) -> complex:
    """The orbit sum ``W(n, pi)``; identical to :func:`trace_periodic`."""
    return trace_periodic(tmap, phi, tau, irrep, n, pressure)


# --------------------------------------------------------------------------
# dynamical determinant


@dataclass(frozen=True)
class ZetaSeries:
    """``Z(zeta) = exp(-sum_n zeta^n tr_n / n)`` with ``traces[n - 1] = tr_n``.

    When ``eigenvalues`` are attached, log-derivatives and zero checks use the
    product ``prod (1 - zeta lambda)^dim`` instead of the truncated series.
    """

    irrep: IrrepInfo | None
    traces: np.ndarray
    n_max: int
    radius_hint: float
    eigenvalues: np.ndarray | None = None
    multiplicity: int = 1

    def __post_init__(self):
        if self.n_max < 1 or len(self.traces) != self.n_max:
            raise TwistError("need n_max >= 1 traces")
        if not np.all(np.isfinite(self.traces)):
            raise TwistError("non-finite trace")


def _radius_from_traces(traces, dim):
    n = len(traces)
    est = (abs(traces[-1]) / dim) ** (1.0 / n)
    return 0.75 / max(est, 0.5)


def zeta_series_from_orbits(tmap, phi, tau, irrep, n_max: int = 12, pressure: float = 0.0) -> ZetaSeries:
    traces = np.array([trace_periodic(tmap, phi, tau, irrep, n, pressure) for n in range(1, n_max + 1)])
    return ZetaSeries(irrep, traces, n_max, _radius_from_traces(traces, irrep.dim), None, irrep.dim)


def zeta_series_from_operator(op: TwistedOperator, n_max: int = 12, sres: SpectrumResult | None = None) -> ZetaSeries:
    sres = sres or eigenvalues(op)
    lam = sres.eigenvalues
    traces = np.array([op.dim * np.sum(lam**n) for n in range(1, n_max + 1)])
    lead = abs(lam[0]) if len(lam) else 0.0
    return ZetaSeries(op.irrep, traces, n_max, 0.75 / max(lead, 1e-300), lam, op.dim)


def zeta_eval(zs: ZetaSeries, zeta: complex) -> tuple[complex, float]:
    """``(Z(zeta), truncation error estimate)`` from the trace series."""
    zeta = complex(zeta)
    if abs(zeta) >= zs.radius_hint:
        raise TwistError(f"|zeta| = {abs(zeta):.3g} is outside the trust radius {zs.radius_hint:.3g}")
    n = np.arange(1, zs.n_max + 1)
    s = np.sum(zeta**n * zs.traces / n)
    value = np.exp(-s)
    # geometric tail with ratio |zeta| / radius scale
    ratio = abs(zeta) * 0.75 / zs.radius_hint
    bound = zs.multiplicity**2 * ratio ** (zs.n_max + 1) / ((zs.n_max + 1) * (1.0 - ratio))
    return complex(value), float(abs(value) * math.expm1(bound))


def zeta_coefficients(traces: Sequence[complex], count: int) -> np.ndarray:
    """Taylor coefficients ``c_0..c_count`` of ``exp(-sum zeta^n tr_n / n)`` by Newton's identities."""
    traces = np.asarray(traces, dtype=complex)
    if count > len(traces):
        raise ValueError("not enough traces")
    c = np.zeros(count + 1, dtype=complex)
    c[0] = 1.0
    for k in range(1, count + 1):
        c[k] = -np.dot(traces[:k], c[k - 1 :: -1][:k]) / k
    return c


def determinant_coefficients(eigs, multiplicity: int, count: int) -> np.ndarray:
    """Coefficients of ``prod (1 - zeta lambda)^multiplicity`` up to ``zeta^count``."""
    lam = np.repeat(np.asarray(eigs, dtype=complex), multiplicity)
    c = np.zeros(count + 1, dtype=complex)
    c[0] = 1.0
    for v in lam:
        c[1:] = c[1:] - v * c[:-1]
    return c


def _logderiv(zs: ZetaSeries, zeta: np.ndarray) -> np.ndarray:
    """``Z'/Z`` on an array of points."""
    if zs.eigenvalues is not None:
        lam = zs.eigenvalues
        return -zs.multiplicity * np.sum(lam[None, :] / (1.0 - zeta[:, None] * lam[None, :]), axis=1)
    n = np.arange(1, zs.n_max + 1)
    return -np.sum(zeta[:, None] ** (n - 1) * zs.traces[None, :], axis=1)


def _min_modulus_on_circle(zs: ZetaSeries, r: float, points: int) -> float:
    z = r * np.exp(2j * np.pi * np.arange(points) / points)
    if zs.eigenvalues is not None:
        return float(np.min(np.abs(1.0 - z[:, None] * zs.eigenvalues[None, :])))
    n = np.arange(1, zs.n_max + 1)
    vals = np.exp(-np.sum(z[:, None] ** n * zs.traces / n, axis=1))
    return float(np.min(np.abs(vals)))


def contour_extract_W(zs: ZetaSeries, n: int, r: float, points: int = CONTOUR_POINTS) -> complex:
    """``-(1/2 pi i) ∮ Z'/Z zeta^-n dzeta`` over ``|zeta| = r`` by the trapezoid rule."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if zs.eigenvalues is None:
        if r >= zs.radius_hint:
            raise TwistError("contour radius outside the series trust radius")
        if n > zs.n_max:
            raise TwistError("series has no information beyond n_max")
    if _min_modulus_on_circle(zs, r, points) < ZERO_THRESHOLD:
        raise TwistError("the contour passes through a zero of Z")
    z = r * np.exp(2j * np.pi * np.arange(points) / points)
    # dzeta = i zeta dtheta, so the integral is -mean(Z'/Z zeta^(1-n))
    return complex(-np.mean(_logderiv(zs, z) * z ** (1 - n)))


@dataclass(frozen=True)
class LogDerivReport:
    r: float
    rho1: float
    max_logderiv: float
    sqrt_kappa: float


def _zero_count(zs: ZetaSeries, rho: float) -> int:
    """Zeros of Z with ``|zeta| <= rho``; the truncated series only certifies inside its trust radius."""
    if zs.eigenvalues is not None:
        return int(np.sum(np.abs(zs.eigenvalues) * rho >= 1.0)) * zs.multiplicity
    if rho >= zs.radius_hint:
        raise TwistError("cannot certify a zero-free disc beyond the series trust radius")
    return 0


def logderiv_bound_check(zs: ZetaSeries, r: float, rho1: float, points: int = CONTOUR_POINTS) -> LogDerivReport:
    if not rho1 > r:
        raise ValueError("need rho1 > r")
    if _zero_count(zs, rho1) != 0 or _min_modulus_on_circle(zs, rho1, points) < ZERO_THRESHOLD:
        raise TwistError(f"Z has a zero in the disc of radius {rho1}")
    z = r * np.exp(2j * np.pi * np.arange(points) / points)
    m = float(np.max(np.abs(_logderiv(zs, z))))
    kappa = zs.irrep.kappa if zs.irrep is not None else 0.0
    return LogDerivReport(r, rho1, m, math.sqrt(kappa))


def logderiv_growth_exponent(reports: Sequence[LogDerivReport]) -> float:
    """Least-squares slope of ``log max|Z'/Z|`` against ``log sqrt(kappa)`` (kappa > 0 only)."""
    pts = [(rep.sqrt_kappa, rep.max_logderiv) for rep in reports if rep.sqrt_kappa > 0 and rep.max_logderiv > 0]
    if len(pts) < 2:
        raise ValueError("need two reports with kappa > 0")
    s, m = np.array(pts).T
    slope, _ = np.polyfit(np.log(s), np.log(m), 1)
    return float(slope)


# --------------------------------------------------------------------------
# export


def _pairs(values) -> list[list[float]]:
    return [[float(np.real(v)), float(np.imag(v))] for v in values]


def spectrum_record(sres: SpectrumResult, traces: Sequence[complex] = (), group_name: str | None = None) -> dict:
    irrep = sres.irrep
    return {
        "group": group_name or (irrep.group.name if irrep is not None else None),
        "irrep_id": (list(irrep.id) if isinstance(irrep.id, tuple) else irrep.id) if irrep is not None else None,
        "kappa": irrep.kappa if irrep is not None else 0.0,
        "N": sres.N,
        "eigenvalues": _pairs(sres.eigenvalues),
        "trusted": [bool(v) for v in sres.trusted],
        "traces": _pairs(traces),
    }


def write_spectrum_json(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(list(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
