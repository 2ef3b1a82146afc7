"""Annealed quantities: Delta, the annealed critical point, free energy and correlation length.

The annealed free energy s = beta*f_a solves the renewal fixed point

    sum_n p_n e^{-s n} = e^{-beta Delta},

which depends on (beta, u) only through beta*Delta.  For loop exponent one
the relevant excursion scale 1/s is astronomically large when beta*Delta is
small, so the solver works in lambda = log M = -log s and evaluates the
series as an exact sum up to n0 plus a quadrature over log n beyond it.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import bisect, brentq
from scipy.signal import fftconvolve

from disorder import DisorderModel, log_mgf
from errors import HorizonExceeded, InvalidSpec, NoSolution, NonConvergent
from excursion_law import ExcursionLaw, PhiSpec, psi_integral
from pinning_dp import PinningParams, log_z_free_weights

logger = logging.getLogger(__name__)

HYBRID_THRESHOLD = 1_000_000
# the series beyond e^{CUTOFF_LOG}/s is suppressed by e^{-40}
QUADRATURE_CUTOFF = 40.0
LAMBDA_CAP = 1e8


@dataclass(frozen=True)
class AnnealedSolution:
    beta_delta: float
    s: float
    M: float
    log_M: float
    method: str
    residual: float


@dataclass(frozen=True)
class AnnealedContact:
    """Annealed contact fraction C_a = ds/d(beta Delta) and its asymptotic proxy."""

    value: float
    log_value: float
    log_proxy: float
    solution: AnnealedSolution


def delta_of(params: PinningParams, model: DisorderModel) -> float:
    """Delta = u + log M_V(beta) / beta."""
    return params.u + log_mgf(model, params.beta) / params.beta


def u_c_annealed(model: DisorderModel, beta: float) -> float:
    """u_c^a(beta) = -log M_V(beta) / beta."""
    if not beta > 0:
        raise InvalidSpec(f"beta must be > 0, got {beta}")
    return -log_mgf(model, beta) / beta


class RenewalTransform:
    """Laplace-type sums of a law evaluated at s = e^{-lam}."""

    def __init__(self, law: ExcursionLaw) -> None:
        self.law = law
        self.n0 = law.n_cut if law.is_table else min(HYBRID_THRESHOLD, law.n_cut)

    @cached_property
    def _exact(self) -> tuple[np.ndarray, np.ndarray]:
        weights = self.law.exact_weights(self.n0)
        n = np.arange(self.n0 + 1, dtype=float)
        return n, weights

    def uses_quadrature(self, lam: float) -> bool:
        if self.law.is_table:
            return False
        return lam > math.log(self.n0 / QUADRATURE_CUTOFF)

    def _quad(self, func, lo: float, hi: float, point: float) -> float:
        points = [point] if lo < point < hi else None
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                value, _err = quad(func, lo, hi, points=points, epsabs=1e-16, epsrel=1e-12, limit=500)
            except IntegrationWarning as exc:
                raise NonConvergent(f"quadrature did not stabilize on [{lo:g}, {hi:g}]: {exc}") from exc
        return value

    def one_minus_laplace(self, lam: float) -> float:
        """sum_n p_n (1 - e^{-s n})."""
        n, weights = self._exact
        s = math.exp(-lam)
        exact = float(weights @ -np.expm1(-s * n))
        if not self.uses_quadrature(lam):
            return exact + self.law.tail(self.n0)

        law = self.law
        start = math.log(self.n0 + 0.5)
        hi = lam + math.log(QUADRATURE_CUTOFF)
        # below lam - 40 the factor 1 - e^{-s n} is under e^{-40}
        lo = max(start, lam - QUADRATURE_CUTOFF)

        def integrand(t: float) -> float:
            return float(law.log_scale_density(t)) * -math.expm1(-math.exp(t - lam))

        middle = self._quad(integrand, lo, hi, lam)
        return exact + middle + law.tail_beyond_log(hi)

    def log_first_moment(self, lam: float) -> float:
        """log sum_n n p_n e^{-s n}."""
        n, weights = self._exact
        s = math.exp(-lam)
        exact = float(weights @ (n * np.exp(-s * n)))
        log_exact = math.log(exact) if exact > 0 else float("-inf")
        if not self.uses_quadrature(lam):
            return log_exact

        law = self.law
        start = math.log(self.n0 + 0.5)
        lo = max(start, lam - QUADRATURE_CUTOFF)
        hi = lam + math.log(QUADRATURE_CUTOFF) + 1.0

        def integrand(t: float) -> float:
            x = t - lam
            return float(law.log_scale_density(t)) * math.exp(x - math.exp(x))

        scaled = self._quad(integrand, lo, hi, lam)
        if scaled <= 0:
            return log_exact
        return float(np.logaddexp(log_exact, lam + math.log(scaled)))


def solve_free_energy(law: ExcursionLaw, beta_delta: float) -> AnnealedSolution:
    """Unique s > 0 with sum p_n e^{-s n} = e^{-beta Delta}, by bisection on log M."""
    if beta_delta <= 0:
        return AnnealedSolution(
            beta_delta=beta_delta,
            s=0.0,
            M=math.inf,
            log_M=math.inf,
            method="trivial_zero",
            residual=abs(math.expm1(-beta_delta)),
        )

    transform = RenewalTransform(law)
    target = -math.expm1(-beta_delta)

    def excess(lam: float) -> float:
        return transform.one_minus_laplace(lam) - target

    # s <= beta*Delta because sum p_n e^{-sn} <= e^{-s}
    lam_lo = -math.log(beta_delta) - 1.0
    step = 1.0
    lam_hi = lam_lo + step
    while excess(lam_hi) > 0:
        step *= 2.0
        lam_hi = lam_lo + step
        if lam_hi > LAMBDA_CAP:
            raise NonConvergent(f"no bracket for log M below {LAMBDA_CAP:g} at beta*Delta={beta_delta!r}")

    lam = bisect(excess, lam_lo, lam_hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    residual = abs(excess(lam))
    method = "hybrid_integral" if transform.uses_quadrature(lam) else "exact_sum"
    solution = AnnealedSolution(
        beta_delta=beta_delta,
        s=math.exp(-lam),
        M=math.exp(lam) if lam < 709.0 else math.inf,
        log_M=lam,
        method=method,
        residual=residual,
    )
    logger.debug("annealed beta*Delta=%g: log M=%.17g method=%s residual=%.3g",
                 beta_delta, lam, method, residual)
    return solution


def beta_delta_for_M(law: ExcursionLaw, M: float) -> float:
    """beta*Delta whose annealed correlation length is M."""
    if not M > 0:
        raise InvalidSpec(f"M must be > 0, got {M}")
    return -math.log1p(-RenewalTransform(law).one_minus_laplace(math.log(M)))


def annealed_log_z_dp(law: ExcursionLaw, beta_delta: float, N: int) -> float:
    """log E^X[e^{beta Delta L_N}] from the quenched DP with every site weight beta*Delta."""
    return log_z_free_weights(law, np.full(N, float(beta_delta)))


def _series_inverse(f: np.ndarray) -> np.ndarray:
    """Coefficients of 1/f(z) up to z^(len(f)-1) for f[0] = 1, by Newton doubling."""
    g = np.ones(1)
    k = 1
    while k < f.size:
        k = min(2 * k, f.size)
        correction = -fftconvolve(f[:k], g)[:k]
        correction[0] += 2.0
        g = fftconvolve(g, correction)[:k]
    return g


def annealed_log_z_series(law: ExcursionLaw, beta_delta: float, N: int, rate: float | None = None) -> float:
    """log E^X[e^{beta Delta L_N}] in O(N log N) by inverting the renewal generating function.

    Coefficients are tilted by e^{-rate n} so they stay bounded; rate
    defaults to the annealed s, under which the tilted renewal sequence
    converges instead of growing.  Agrees with ``annealed_log_z_dp``.
    """
    if N < 1:
        raise InvalidSpec(f"N must be >= 1, got {N}")
    if rate is None:
        rate = solve_free_energy(law, beta_delta).s if beta_delta > 0 else 0.0
    upto = min(N, law.n_cut)
    if upto < N and not law.is_table:
        raise HorizonExceeded(f"exact masses stop at {law.n_cut}, series needs N={N}")
    masses = np.zeros(N + 1)
    tails = np.zeros(N + 1)
    masses[: upto + 1] = law.exact_weights(upto)
    tails[: upto + 1] = law.exact_tails(upto)

    tilt = np.exp(-rate * np.arange(N + 1, dtype=float))
    f = -math.exp(beta_delta) * masses * tilt
    f[0] = 1.0
    renewal = _series_inverse(f)
    # last return at k, then an excursion longer than N - k
    total = float(renewal @ (tails * tilt)[::-1])
    return rate * N + math.log(total)


def predict_log_M_asymptotic(phi: PhiSpec, beta_delta: float) -> float:
    """log M ~ ((alpha - 1) beta Delta / K)^{-1/(alpha - 1)} for phi ~ K (log n)^-alpha."""
    if phi.family != "log_power" or not phi.alpha > 1:
        raise InvalidSpec("the closed-form asymptotics need a log_power phi with alpha > 1")
    if not beta_delta > 0:
        raise InvalidSpec(f"beta*Delta must be > 0, got {beta_delta}")
    return ((phi.alpha - 1.0) * beta_delta / phi.K) ** (-1.0 / (phi.alpha - 1.0))


def invert_psi(phi: PhiSpec, beta_delta: float) -> float:
    """t with Psi(t) = beta*Delta, for any phi whose Psi converges."""
    if not beta_delta > 0:
        raise InvalidSpec(f"beta*Delta must be > 0, got {beta_delta}")

    def gap(log_t: float) -> float:
        return math.log(psi_integral(phi, math.exp(log_t))) - math.log(beta_delta)

    lo, hi = math.log(1e-8), math.log(1e12)
    if gap(lo) < 0 or gap(hi) > 0:
        raise NoSolution(f"Psi(t) = {beta_delta!r} has no root for t in [1e-8, 1e12]")
    return math.exp(brentq(gap, lo, hi, xtol=1e-15, rtol=1e-13))


def contact_fraction_annealed(law: ExcursionLaw, beta_delta: float) -> AnnealedContact:
    """C_a = e^{-beta Delta} / sum_n n p_n e^{-s n}, by implicit differentiation of the fixed point."""
    if not beta_delta > 0:
        raise InvalidSpec(f"contact fraction needs beta*Delta > 0, got {beta_delta}")
    solution = solve_free_energy(law, beta_delta)
    log_value = -beta_delta - RenewalTransform(law).log_first_moment(solution.log_M)
    if law.is_table:
        log_proxy = math.nan
    else:
        # 1 / (M phi(M))
        log_proxy = -solution.log_M - float(law.phi_effective.log_at_log(solution.log_M))
    return AnnealedContact(
        value=math.exp(log_value),
        log_value=log_value,
        log_proxy=log_proxy,
        solution=solution,
    )
