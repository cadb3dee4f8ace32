"""Heat-averaged orbit sums over representations and the bookkeeping of the lower bound.

For a period ``n`` write ``G_x = exp(phi^(n)(x)) / (1 - 1/(T^n)'(x))`` and ``a_x``
for the cocycle at the periodic point ``x``.  Then

    S(t, n) = sum_pi exp(-t kappa_pi) |W(n, pi)|^2 / dim(pi)^2
            = sum_{x, y} G_x G_y F(t; a_x, a_y),

where ``F(t; a, b) = sum_pi exp(-t kappa_pi) chi_pi(a) conj(chi_pi(b))`` is the
Haar average of the heat kernel over conjugates, hence nonnegative.  Keeping
only ``x = y`` gives the diagonal lower bound.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dynamics import ExpandingMap, periodic_orbits
from .groups import (
    CompactGroup,
    GroupError,
    beta_value,
    conjugation_average,
    gamma_constant,
    truncation_kappa,
)
from .thermo import Potential, rpf_solve
from .twisted import SkewFunction


@dataclass(frozen=True)
class AverageReport:
    t: float
    n: int
    S_value: float
    diagonal_value: float
    lower_bound_value: float
    rank: int
    pressure2: float
    orbit_sum2: float  # sum over period-n points of exp(2 phi^(n))

    def with_bound(self, A: float) -> AverageReport:
        bound = A * self.t ** (-self.rank / 2.0) * self.orbit_sum2
        return AverageReport(self.t, self.n, self.S_value, self.diagonal_value, bound, self.rank,
                             self.pressure2, self.orbit_sum2)


def _orbit_data(tmap, phi, tau, n, pressure):
    orbs = periodic_orbits(tmap, n)
    group = tau.group
    cocycle = group.product(group.inverse(tau(orbs.orbits)))
    birk = orbs.birkhoff(phi) - n * pressure
    G = np.exp(birk) / (1.0 - 1.0 / orbs.multipliers)
    return cocycle, G, float(np.sum(np.exp(2.0 * birk)))


def pressure_of_double(tmap: ExpandingMap, phi: Potential, N: int = 32, pressure: float = 0.0) -> float:
    """``P(2 (phi - pressure))`` from the RPF eigenvalue."""
    doubled = phi.shift(-pressure).scale(2.0)
    return rpf_solve(tmap, doubled, N).pressure


def S_sum(
    tmap: ExpandingMap,
    phi: Potential,
    tau: SkewFunction,
    t: float,
    n: int,
    tol: float = 1e-15,
    pressure: float = 0.0,
    pressure2: float | None = None,
    kappa_max: float | None = None,
) -> AverageReport:
    """``S(t, n)`` by the truncated irrep sum, with its diagonal part.

    ``kappa_max`` overrides the truncation (only irreps with ``kappa <= kappa_max``).
    """
    if t <= 0:
        raise GroupError("t must be positive")
    group = tau.group
    cocycle, G, orbit_sum2 = _orbit_data(tmap, phi, tau, n, pressure)
    K = truncation_kappa(t, group.dim, tol) if kappa_max is None else kappa_max
    ids, _dims, kappas = group.irrep_table(K)
    chis = group.characters(ids, cocycle)  # (irreps, orbits)
    Wd = chis @ G  # W(n, pi) / dim(pi)
    S = float(np.sum(np.exp(-t * kappas) * np.abs(Wd) ** 2))
    if kappa_max is None:
        diag = float(np.sum(G**2 * conjugation_average(group, t, cocycle, cocycle, tol)))
    else:
        diag = float(np.sum(G**2 * (np.exp(-t * kappas) @ np.abs(chis) ** 2)))
    if pressure2 is None:
        pressure2 = pressure_of_double(tmap, phi, pressure=pressure)
    return AverageReport(float(t), int(n), S, diag, math.nan, group.rank, float(pressure2), orbit_sum2)


def heat_grid(tmap, phi, tau, t_grid: Sequence[float], n_grid: Sequence[int], tol: float = 1e-15,
              pressure: float = 0.0) -> list[AverageReport]:
    p2 = pressure_of_double(tmap, phi, pressure=pressure)
    return [S_sum(tmap, phi, tau, t, n, tol, pressure, p2) for n in n_grid for t in t_grid]


def bound_ratio(report: AverageReport, use_diagonal: bool = True) -> float:
    """``value / (t^(-rank/2) sum exp(2 phi^(n)))``."""
    value = report.diagonal_value if use_diagonal else report.S_value
    return value / (report.t ** (-report.rank / 2.0) * report.orbit_sum2)


def fit_A(reports: Sequence[AverageReport]) -> float:
    """Largest ``A`` for which the diagonal clears ``A t^(-rank/2) sum exp(2 phi^(n))`` on these cells."""
    if not reports:
        raise ValueError("no reports to fit")
    return float(min(bound_ratio(r) for r in reports))


def diagonal_lower_bound_check(report: AverageReport, A: float | None = None) -> tuple[bool, float]:
    """``(S >= bound, relative margin (S - bound) / bound)``; uses ``report.lower_bound_value`` unless ``A`` is given."""
    if A is not None:
        report = report.with_bound(A)
    bound = report.lower_bound_value
    if not math.isfinite(bound):
        raise ValueError("report has no bound; pass A")
    margin = (report.S_value - bound) / bound if bound > 0 else math.inf
    return margin >= 0.0, float(margin)


def fit_and_verify(tmap, phi, tau, coarse_t, coarse_n, fine_t, fine_n, tol: float = 1e-15, pressure: float = 0.0):
    """Fit ``A`` on the coarse cells, then check every fine cell that is not a coarse cell.

    Returns ``(A, verified reports with bounds, worst relative margin)``.
    """
    coarse = heat_grid(tmap, phi, tau, coarse_t, coarse_n, tol, pressure)
    A = fit_A(coarse)
    taken = {(round(math.log(r.t), 12), r.n) for r in coarse}
    cells = [(t, n) for n in fine_n for t in fine_t if (round(math.log(t), 12), n) not in taken]
    if not cells:
        raise ValueError("verification grid has no cells outside the fitting grid")
    p2 = coarse[0].pressure2
    checked = [S_sum(tmap, phi, tau, t, n, tol, pressure, p2).with_bound(A) for t, n in cells]
    worst = min(diagonal_lower_bound_check(r)[1] for r in checked)
    return A, checked, worst


@dataclass(frozen=True)
class ContradictionReport:
    rho_hypothesis: float
    epsilon: float
    alpha: float
    beta: float
    rank: int
    pressure2: float
    rho_critical: float  # (1 + eps) exp(-alpha beta / 2) - eps
    threshold: float  # exp(gamma P(2 phi))
    outgrows_low_irreps: bool  # alpha rank / 2 + P(2 phi) > 2 log(1 + eps)
    contradiction: bool  # the hypothesis rho is ruled out
    lhs_rates: tuple[float, ...]  # (1/n) log of the lower bound with t = exp(-alpha n)
    rhs_rates: tuple[float, ...]  # (1/n) log of (1 + eps)^(2n) + (rho + eps)^(2n) t^(-beta)
    n_values: tuple[int, ...]


def contradiction_scheme(
    tmap: ExpandingMap,
    phi: Potential,
    tau: SkewFunction,
    rho_hypothesis: float,
    epsilon: float,
    t_rule: str = "exponential",
    improved: bool = False,
    n_values: Sequence[int] = (2, 4, 6, 8, 10, 12),
    pressure: float = 0.0,
    alpha: float | None = None,
) -> ContradictionReport:
    """Replay the chain of inequalities with ``t = exp(-alpha n)``.

    The lower bound grows like ``exp(n (alpha rank/2 + P(2 phi)))`` while the
    hypothesis that all large irreps have spectral radius below ``rho`` caps
    ``S`` by ``(1 + eps)^(2n) + (rho + eps)^(2n) t^(-beta)``.  A contradiction
    needs the lower rate to beat both terms:

        alpha rank / 2 + P(2 phi) > 2 log(1 + eps)   and   rho + eps < (1 + eps) exp(-alpha beta / 2).

    The default ``alpha = (2|P(2 phi)| + 6 eps) / rank`` satisfies the first
    condition for every rank.  An excess of ``3 eps`` over ``2|P(2 phi)|/rank``
    would only do so from rank 2 upward, since on a circle it leaves the lower
    rate at ``1.5 eps`` against ``2 log(1 + eps)``.
    """
    if not 0.0 < rho_hypothesis < 1.0:
        raise ValueError("rho_hypothesis must lie in (0, 1)")
    if t_rule != "exponential":
        raise ValueError("only the rule t = exp(-alpha n) is implemented")
    group: CompactGroup = tau.group
    rank = group.rank
    beta = beta_value(group, improved)
    p2 = pressure_of_double(tmap, phi, pressure=pressure)
    if alpha is None:
        alpha = (2.0 * abs(p2) + 6.0 * epsilon) / rank
    rho_crit = (1.0 + epsilon) * math.exp(-alpha * beta / 2.0) - epsilon
    outgrows = alpha * rank / 2.0 + p2 > 2.0 * math.log1p(epsilon)
    threshold = math.exp(gamma_constant(group, improved) * p2)
    lhs, rhs = [], []
    for n in n_values:
        orbs = periodic_orbits(tmap, n)
        s2 = float(np.sum(np.exp(2.0 * (orbs.birkhoff(phi) - n * pressure))))
        log_t = -alpha * n
        lhs.append((-rank / 2.0 * log_t + math.log(s2)) / n)
        a = 2 * n * math.log1p(epsilon)
        b = 2 * n * math.log(rho_hypothesis + epsilon) - beta * log_t
        rhs.append((max(a, b) + math.log1p(math.exp(-abs(a - b)))) / n)
    return ContradictionReport(
        rho_hypothesis, epsilon, alpha, beta, rank, p2, rho_crit, threshold, outgrows,
        outgrows and rho_hypothesis < rho_crit, tuple(lhs), tuple(rhs), tuple(int(n) for n in n_values),
    )


def write_grid_csv(reports: Sequence[AverageReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n", "S", "diagonal", "bound", "margin"])
        for r in reports:
            margin = (r.S_value - r.lower_bound_value) / r.lower_bound_value if math.isfinite(r.lower_bound_value) else math.nan
            w.writerow([repr(r.t), r.n, repr(r.S_value), repr(r.diagonal_value), repr(r.lower_bound_value), repr(margin)])
