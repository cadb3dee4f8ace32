"""Observables on the skew product, their correlations and decay-rate estimates.

An observable is a sum of terms ``Re`` or ``Im`` of ``Tr(pi(g) A(x))``.  If ``A``
is an eigenfunction of the twisted operator with eigenvalue
``lambda = rho e^{i theta}``, then with ``F = Re Tr(pi A)`` and ``G = Im Tr(pi A)``

    C(F, F)(n) = rho^n (cos(n theta) int F^2 - sin(n theta) int F G),

because the transfer operator of the skew product acts on ``Tr(pi(g) A(x))`` as
the twisted operator acts on ``A``.

The direct route integrates ``F(T^n x, tau^(n)(x) g) F(x, g)`` without using
that identity.  The integrand jumps across the ``k^n`` cylinders of length
``n``, so nodes are pulled back along every inverse branch word: with
``nu`` the conformal measure and ``h`` the density,

    int f dmu = int sum_{|w| = n} exp(phi^(n)(gamma_w z) - n P) h(gamma_w z) f(gamma_w z) dnu(z),

and the inner sum is analytic in ``z``.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .chebyshev import general_barycentric_weights, interpolate, interpolation_matrix
from .dynamics import ExpandingMap, all_words
from .groups import CompactGroup, IrrepInfo, Torus
from .thermo import Potential, RpfData
from .twisted import SkewFunction, build_twisted_matrix, eigenvalues

CHUNK = 1 << 20  # complex entries per evaluation block
DIRICHLET_CAP = 10_000_000


class CorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableTerm:
    irrep: IrrepInfo
    coeff_fn: Callable[[np.ndarray], np.ndarray]  # x (P,) -> (P, dim, dim) complex
    part: str = "re"

    def __post_init__(self):
        if self.part not in ("re", "im"):
            raise ValueError("part must be 're' or 'im'")


@dataclass(frozen=True)
class Observable:
    terms: tuple[ObservableTerm, ...]
    description: str = ""

    @property
    def group(self) -> CompactGroup:
        return self.terms[0].irrep.group

    def __call__(self, x, g) -> np.ndarray:
        """``F(x_p, g_pq)`` for ``x`` of shape ``(P,)`` and ``g`` of shape ``(P, Q, coords)``."""
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        out = np.zeros(g.shape[:2])
        for term in self.terms:
            A = np.asarray(term.coeff_fn(x), dtype=complex)
            val = _trace_pi_A(term.irrep, g, A)
            out += val.real if term.part == "re" else val.imag
        return out

    def __add__(self, other: Observable) -> Observable:
        return Observable(self.terms + other.terms, f"{self.description} + {other.description}")

    def scaled(self, a: float) -> Observable:
        terms = tuple(ObservableTerm(t.irrep, _scale_fn(t.coeff_fn, a), t.part) for t in self.terms)
        return Observable(terms, f"{a:g}*({self.description})")

    def imaginary_partner(self) -> Observable:
        """Swap ``Re`` and ``Im`` in every term."""
        terms = tuple(ObservableTerm(t.irrep, t.coeff_fn, "im" if t.part == "re" else "re") for t in self.terms)
        return Observable(terms, f"partner of {self.description}")


def _scale_fn(fn, a):
    return lambda x: a * fn(x)


def _trace_pi_A(irrep: IrrepInfo, g: np.ndarray, A: np.ndarray) -> np.ndarray:
    if irrep.dim == 1:
        return irrep.character(g) * A[:, None, 0, 0]
    P = g.shape[0]
    per_row = max(1, CHUNK // max(1, g.shape[1] * irrep.dim**2))
    out = np.empty(g.shape[:2], dtype=complex)
    for s in range(0, P, per_row):
        R = irrep.matrix(g[s : s + per_row])
        out[s : s + per_row] = np.einsum("pqab,pba->pq", R, A[s : s + per_row])
    return out


def constant_observable(irrep: IrrepInfo, A, part: str = "re") -> Observable:
    """``Re/Im Tr(pi(g) A)`` with a constant matrix: a function of ``g`` only."""
    A = np.asarray(A, dtype=complex).reshape(irrep.dim, irrep.dim)
    fn = lambda x: np.broadcast_to(A, np.shape(x) + A.shape)
    return Observable((ObservableTerm(irrep, fn, part),), f"fiber[{irrep.id}]")


# --------------------------------------------------------------------------
# dynamics on the product


def skew_apply(tmap: ExpandingMap, tau: SkewFunction, n: int, x, g):
    """``(T^n x, tau(T^(n-1) x) ... tau(x) g)``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    group = tau.group
    for _ in range(n):
        g = group.multiply(tau(x), g)
        x = tmap(x)
    return x, g


@dataclass(frozen=True)
class SkewSystem:
    """Base map, potential with its RPF data, and skew function."""

    tmap: ExpandingMap
    phi: Potential
    rpf: RpfData
    tau: SkewFunction

    @property
    def group(self) -> CompactGroup:
        return self.tau.group


def group_resolution(irreps: Sequence[IrrepInfo]) -> int:
    """Haar resolution that integrates products of two coefficients of these irreps exactly."""
    group = irreps[0].group
    if isinstance(group, Torus):
        qmax = max(int(np.max(np.abs(ir.id))) for ir in irreps)
        return 2 * qmax + 2
    mmax = max(int(ir.id) for ir in irreps)
    return max(2, mmax + 1)  # degree 2 mmax <= 2 resolution - 1


def _haar(group: CompactGroup, resolution: int):
    return group.haar_quadrature(resolution)


def integrate(system: SkewSystem, f: Callable, resolution: int) -> float:
    """``int f(x, g) dmu(x) dm(g)`` at the RPF nodes; ``f`` takes ``(P,)`` and ``(P, Q, c)`` arrays."""
    nodes, gw = _haar(system.group, resolution)
    x = system.rpf.node_points
    g = np.broadcast_to(nodes, (len(x),) + nodes.shape)
    vals = f(x, g)
    return float(system.rpf.measure_weights @ (vals @ gw))


def mean(system: SkewSystem, F: Observable, resolution: int) -> float:
    return integrate(system, F, resolution)


def _pullback_nodes(rpf: RpfData):
    """Interior Gauss-Legendre nodes ``z`` with weights ``omega`` equivalent to ``nu`` on polynomials."""
    N = rpf.collocation_size
    xg, _ = np.polynomial.legendre.leggauss(N)
    z = 0.5 * (xg + 1.0)
    bw = general_barycentric_weights(z)
    B = interpolation_matrix(z, rpf.node_points, bw)  # B[i, k] = ell^z_k(x_i)
    return z, B.T @ rpf.conformal_weights


def cylinder_quadrature(system: SkewSystem, n: int):
    """Points ``x = gamma_w(z)`` over all words of length ``n`` and weights integrating against ``mu``.

    Returns ``(x, weights, orbit)`` with ``orbit[:, j] = T^j x`` computed from
    the inverse branches (so ``orbit[:, n] = z`` exactly).
    """
    tmap, phi, rpf = system.tmap, system.phi, system.rpf
    z, omega = _pullback_nodes(rpf)
    if n == 0:
        return z, omega * rpf.density(z), z[:, None]
    words = all_words(tmap.k, n)
    count = len(words)
    orbit = np.empty((count, len(z), n + 1))
    y = np.broadcast_to(z, (count, len(z))).copy()
    orbit[:, :, n] = y
    for j in range(n - 1, -1, -1):
        letters = np.repeat(words[:, j][:, None], len(z), axis=1)
        y = tmap.inverse(letters.ravel(), y.ravel()).reshape(count, len(z))
        orbit[:, :, j] = y
    birk = np.zeros((count, len(z)))
    for j in range(n):
        birk = birk + phi(orbit[:, :, j])
    x = orbit[:, :, 0]
    w = omega[None, :] * np.exp(birk - n * rpf.pressure) * rpf.density(x)
    return x.ravel(), w.ravel(), orbit.reshape(count * len(z), n + 1)


def correlation_direct(
    system: SkewSystem, F: Observable, G: Observable, n: int, resolution: int, forward: bool = True
) -> float:
    """``int F(T_hat^n(x, g)) G(x, g) - int F int G`` by cylinder-refined quadrature.

    With ``forward`` the images ``T^n x`` and the cocycle come from iterating
    the forward map; otherwise the pulled-back orbit is reused.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    group = system.group
    nodes, gw = _haar(group, resolution)
    x, w, orbit = cylinder_quadrature(system, n)
    if forward:
        xn, coc = skew_apply(system.tmap, system.tau, n, x, group.identity(x.shape))
    else:
        xn = orbit[:, n]
        coc = group.identity(x.shape)
        for j in range(n):
            coc = group.multiply(system.tau(orbit[:, j]), coc)
    Q = len(nodes)
    per = max(1, CHUNK // max(1, Q * 16))
    total = 0.0
    for s in range(0, len(x), per):
        sl = slice(s, s + per)
        g = np.broadcast_to(nodes, (len(x[sl]),) + nodes.shape)
        gn = group.multiply(coc[sl][:, None, :], g)
        vals = F(xn[sl], gn) * G(x[sl], g)
        total += float(w[sl] @ (vals @ gw))
    return total - mean(system, F, resolution) * mean(system, G, resolution)


# --------------------------------------------------------------------------
# eigen-observables


@dataclass(frozen=True)
class EigenObservable:
    """``F = Re Tr(pi A)`` with ``A`` an eigenfunction, phased so that ``int F G = 0``.

    ``G`` is the imaginary partner; ``FF`` and ``FG`` are the quadrature values
    of ``int F^2`` (normalized to 1) and ``int F G``.
    """

    F: Observable
    G: Observable
    eigenvalue: complex
    FF: float
    FG: float
    residual: float
    irrep: IrrepInfo

    @property
    def rho(self) -> float:
        return abs(self.eigenvalue)

    @property
    def theta(self) -> float:
        return float(np.angle(self.eigenvalue))


def _row_function(nodes, values, gauge_fn):
    """``x -> (P, dim, dim)`` matrix with first row the interpolated eigen-row."""
    dim = values.shape[1]

    def fn(x):
        x = np.asarray(x, dtype=float)
        row = interpolate(nodes, values, x) * gauge_fn(x)[..., None]
        A = np.zeros(x.shape + (dim, dim), dtype=complex)
        A[..., 0, :] = row
        return A

    return fn


def eigen_observable(
    system: SkewSystem, irrep: IrrepInfo, N: int = 48, index: int | None = None, resolution: int | None = None
) -> EigenObservable:
    """Observable built from an eigenvector of the twisted operator.

    ``index`` defaults to the leading eigenvalue, or the second one for the
    trivial irrep (the leading one belongs to the constants, which do not
    correlate).
    """
    if system.phi is None:
        raise CorrelationError("system needs a potential")
    op = build_twisted_matrix(system.tmap, system.phi, system.rpf, system.tau, irrep, N)
    sres = eigenvalues(op)
    if index is None:
        index = 1 if irrep.is_trivial else 0
    if index >= len(sres.eigenvalues) or not sres.trusted[index]:
        raise CorrelationError(f"eigenvalue {index} is not trusted")
    lam = sres.eigenvalues[index]
    vals, vecs = np.linalg.eig(op.matrix)
    k = int(np.argmin(np.abs(vals - lam)))
    u = vecs[:, k].reshape(N, irrep.dim)
    residual = float(np.linalg.norm(op.matrix @ vecs[:, k] - lam * vecs[:, k]) / np.linalg.norm(vecs[:, k]))
    nodes = op.nodes
    fn = _row_function(nodes, u, op.gauge_factor)
    res = resolution or group_resolution([irrep])

    # complex pairings a = int Phi^2 and b = int |Phi|^2 of Phi = Tr(pi A)
    def phi_vals(x, g):
        A = fn(x)
        return _trace_pi_A(irrep, g, A)

    a = _integrate_complex(system, lambda x, g: phi_vals(x, g) ** 2, res)
    b = integrate(system, lambda x, g: np.abs(phi_vals(x, g)) ** 2, res)
    phase = np.exp(-0.5j * np.angle(a)) if abs(a) > 1e-14 * b else 1.0
    FF = 0.5 * (b + abs(a)) if abs(a) > 1e-14 * b else 0.5 * b
    if FF <= 1e-12:
        raise CorrelationError("eigen-observable has vanishing norm")
    scale = phase / math.sqrt(FF)
    fn_n = _scale_fn(fn, scale)
    F = Observable((ObservableTerm(irrep, fn_n, "re"),), f"eigen[{irrep.id}] lambda={lam:.6g}")
    G = F.imaginary_partner()
    FF_n = integrate(system, lambda x, g: F(x, g) ** 2, res)
    FG_n = integrate(system, lambda x, g: F(x, g) * G(x, g), res)
    return EigenObservable(F, G, complex(lam), FF_n, FG_n, residual, irrep)


def _integrate_complex(system, f, resolution):
    nodes, gw = _haar(system.group, resolution)
    x = system.rpf.node_points
    g = np.broadcast_to(nodes, (len(x),) + nodes.shape)
    return complex(system.rpf.measure_weights @ (f(x, g) @ gw))


def correlation_predicted(terms: Sequence[tuple[float, EigenObservable]], n: int) -> float:
    """``sum_a c_a^2 rho_a^n (cos(n theta_a) int F_a^2 - sin(n theta_a) int F_a G_a)``."""
    total = 0.0
    for c, eo in terms:
        r = eo.rho**n
        total += c * c * r * (math.cos(n * eo.theta) * eo.FF - math.sin(n * eo.theta) * eo.FG)
    return total


def orthogonality_check(system: SkewSystem, F: Observable, G: Observable, resolution: int) -> float:
    """``int F G dmu dm`` by quadrature."""
    return integrate(system, lambda x, g: F(x, g) * G(x, g), resolution)


# --------------------------------------------------------------------------
# series and decay rates


@dataclass(frozen=True)
class CorrelationSeries:
    values: np.ndarray  # C(n) for n = 1..len
    method: str
    observable: str
    measure: str
    angles: tuple[float, ...] = field(default=())

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)


def correlation_series_direct(system: SkewSystem, eos: Sequence[tuple[float, EigenObservable]], n_max: int,
                              resolution: int | None = None) -> CorrelationSeries:
    F = _combine(eos)
    res = resolution or group_resolution([eo.irrep for _, eo in eos])
    vals = np.array([correlation_direct(system, F, F, n, res) for n in range(1, n_max + 1)])
    return CorrelationSeries(vals, "direct-quadrature", F.description, _measure_label(system), _angles(eos))


def correlation_series_predicted(eos: Sequence[tuple[float, EigenObservable]], n_max: int,
                                 system: SkewSystem | None = None) -> CorrelationSeries:
    vals = np.array([correlation_predicted(eos, n) for n in range(1, n_max + 1)])
    label = _measure_label(system) if system is not None else ""
    return CorrelationSeries(vals, "eigen-formula", _combine(eos).description, label, _angles(eos))


def _combine(eos):
    terms = [eo.F.scaled(c) if c != 1.0 else eo.F for c, eo in eos]
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def _angles(eos):
    return tuple(eo.theta / (2.0 * math.pi) for _, eo in eos)


def _measure_label(system: SkewSystem) -> str:
    return f"{system.tmap.name}/{system.phi.label}/{system.group.name}/{system.tau.label}"


def dirichlet_subsequence(angles: Sequence[float], Q: int, D: int = 1, cap: int = DIRICHLET_CAP) -> int:
    """Smallest ``q`` in ``{D, ..., D Q^N}`` with ``max_j dist(q alpha_j, Z) <= 1/Q``."""
    if Q < 2 or D < 1:
        raise CorrelationError("need Q >= 2 and D >= 1")
    alpha = np.asarray(angles, dtype=float).reshape(-1)
    hi = D * Q ** len(alpha)
    if hi > cap:
        raise CorrelationError(f"search range up to {hi} exceeds the cap {cap}")
    block = 1 << 16
    for start in range(D, hi + 1, block):
        q = np.arange(start, min(start + block, hi + 1), dtype=float)
        prod = q[:, None] * alpha[None, :]
        dist = np.abs(prod - np.round(prod))
        ok = np.flatnonzero(np.all(dist <= 1.0 / Q + 1e-12, axis=1))
        if len(ok):
            return int(q[ok[0]])
    raise CorrelationError("no valid q found; the box principle guarantees one, so the input is invalid")


def default_subsequence(angles: Sequence[float], n_max: int) -> list[int]:
    """Multiples of the Dirichlet ``q`` for the largest ``Q`` whose range fits in ``n_max``."""
    if not angles:
        return list(range(1, n_max + 1))
    Q = max(2, math.floor(n_max ** (1.0 / len(angles))))
    while Q > 2 and Q ** len(angles) > n_max:
        Q -= 1
    q = dirichlet_subsequence(angles, Q, 1)
    return list(range(q, n_max + 1, q)) or [q]


def decay_rate_estimate(series: CorrelationSeries, subsequence: Sequence[int] | None = None) -> float:
    """``max |C(n)|^(1/n)`` over the subsequence (default: Dirichlet multiples of the eigen-angles)."""
    vals = np.abs(series.values)
    if np.all(vals < 1e-300):
        raise CorrelationError("all correlation values vanish")
    if np.count_nonzero(vals >= 1e-300) < 4:
        raise CorrelationError("need at least four nonzero values")
    if subsequence is None:
        subsequence = default_subsequence(series.angles, len(vals))
    ns = [n for n in subsequence if 1 <= n <= len(vals) and vals[n - 1] >= 1e-300]
    if not ns:
        raise CorrelationError("subsequence has no usable values")
    return float(max(vals[n - 1] ** (1.0 / n) for n in ns))


# --------------------------------------------------------------------------
# export


def write_series_csv(series_list: Sequence[CorrelationSeries], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "C", "method"])
        for s in series_list:
            for n, v in zip(s.n, s.values):
                w.writerow([int(n), repr(float(v)), s.method])


def series_record(series: CorrelationSeries) -> dict:
    return {
        "method": series.method,
        "observable": series.observable,
        "measure": series.measure,
        "angles": list(series.angles),
        "n": [int(v) for v in series.n],
        "values": [float(v) for v in series.values],
    }


def write_series_json(series_list: Sequence[CorrelationSeries], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([series_record(s) for s in series_list], fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_data(series: CorrelationSeries, path) -> None:
    """Two columns ``n log|C(n)|`` for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(n)} {math.log(abs(v)) if v != 0 else float('-inf'):.17g}\n" for n, v in zip(series.n, series.values))
