"""Excursion-length laws p_n proportional to n^-c phi(n), with tails and the Psi integral."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import IO

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from errors import HorizonExceeded, InvalidSpec, NonConvergent, NonSummable
from num_utils import fmt_float, safe_log

logger = logging.getLogger(__name__)

PHI_FAMILIES = {"constant", "log_power", "table"}
PRESETS = {"srw2d", "logpow", "power", "table"}

DEFAULT_SHIFT = math.e
# Exact partial sums run at least this far before the analytic tail takes over.
NORMALIZER_CUTOFF = 1_000_000
TABLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PhiSpec:
    """Slowly varying factor phi of the excursion law.

    constant:  phi(x) = K
    log_power: phi(x) = K * log(x + shift)^-alpha
    table:     explicit masses p_1..p_m (phi is not used)
    """

    family: str
    K: float = 1.0
    alpha: float = 0.0
    shift: float = DEFAULT_SHIFT
    table: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.family not in PHI_FAMILIES:
            raise InvalidSpec(f"unknown phi family '{self.family}' (expected one of {sorted(PHI_FAMILIES)})")
        if self.family == "table":
            if not self.table:
                raise InvalidSpec("table law needs at least one mass")
            if any(not math.isfinite(p) or p < 0 for p in self.table):
                raise InvalidSpec("table masses must be finite and nonnegative")
            return
        if not (self.K > 0 and math.isfinite(self.K)):
            raise InvalidSpec(f"phi needs K > 0, got {self.K}")
        if self.family == "log_power":
            if not self.alpha > 0:
                raise InvalidSpec(f"log_power needs alpha > 0, got {self.alpha}")
            # shift = 0 is the idealized form, usable for Psi but not for a law
            if not self.shift >= 0:
                raise InvalidSpec(f"log_power needs shift >= 0, got {self.shift}")

    def log_at_log(self, t: np.ndarray | float) -> np.ndarray | float:
        """log phi(e^t), computed without forming e^t."""
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            out = np.full_like(t, math.log(self.K))
        elif self.family == "log_power":
            # log(e^t + s0) = t + log1p(s0 e^-t)
            with np.errstate(over="ignore"):
                inner = t + np.log1p(self.shift * np.exp(-t))
            out = math.log(self.K) - self.alpha * safe_log(inner)
        else:
            raise InvalidSpec("table laws carry no phi")
        return out if out.ndim else float(out)

    def evaluate(self, x: np.ndarray | float) -> np.ndarray | float:
        """phi(x) for x >= 1."""
        if self.family == "constant":
            return np.full_like(np.asarray(x, dtype=float), self.K) if np.ndim(x) else self.K
        if self.family == "log_power":
            return self.K * np.log(np.asarray(x, dtype=float) + self.shift) ** (-self.alpha)
        raise InvalidSpec("table laws carry no phi")

    def scaled(self, factor: float) -> PhiSpec:
        return PhiSpec(self.family, self.K * factor, self.alpha, self.shift, self.table)


def constant_phi(K: float = 1.0) -> PhiSpec:
    return PhiSpec("constant", K=K)


def log_power_phi(K: float = 1.0, alpha: float = 2.0, shift: float = DEFAULT_SHIFT) -> PhiSpec:
    return PhiSpec("log_power", K=K, alpha=alpha, shift=shift)


def table_phi(masses: list[float] | tuple[float, ...]) -> PhiSpec:
    return PhiSpec("table", table=tuple(float(p) for p in masses))


@dataclass(frozen=True, eq=False)
class ExcursionLaw:
    """Normalized return-time law.

    Arrays are indexed by n: ``masses[n] = p_n`` (``masses[0] = 0``) and
    ``tails[n] = P(E > n)`` for 0 <= n <= n_max, with ``tails[n]`` computed
    as ``tails[n - 1] - masses[n]``.  Beyond ``n_max`` the upper sums and
    then the analytic form are used.  Immutable once built.
    """

    c: float
    phi: PhiSpec
    n_max: int
    masses: np.ndarray
    tails: np.ndarray
    normalizer: float
    n_cut: int
    # unnormalized weights n^-c phi(n) and their upper sums, indexed 0..n_cut
    _weights: np.ndarray
    _upper_sums: np.ndarray

    @property
    def is_table(self) -> bool:
        return self.phi.family == "table"

    @property
    def tail_model(self) -> str:
        if self.is_table:
            return "zero beyond support"
        return f"integral of x^-{self.c:g} phi(x) from n + 1/2"

    @cached_property
    def log_masses(self) -> np.ndarray:
        return safe_log(self.masses)

    @cached_property
    def log_tails(self) -> np.ndarray:
        return safe_log(self.tails)

    @cached_property
    def phi_effective(self) -> PhiSpec:
        """phi with the normalizer folded in, so p_n = n^-c phi_eff(n) exactly."""
        if self.is_table:
            raise InvalidSpec("table laws carry no phi")
        return self.phi.scaled(1.0 / self.normalizer)

    def mass(self, n: int) -> float:
        """p_n; the analytic continuation n^-c phi(n) / Z_p beyond n_max."""
        if n < 1:
            raise InvalidSpec(f"mass needs n >= 1, got {n}")
        if n <= self.n_max:
            return float(self.masses[n])
        if self.is_table:
            return 0.0
        log_n = math.log(n)
        return math.exp(-self.c * log_n + self.phi.log_at_log(log_n)) / self.normalizer

    def tail(self, n: int) -> float:
        """P(E > n)."""
        if n < 0:
            raise InvalidSpec(f"tail needs n >= 0, got {n}")
        if n <= self.n_max:
            return float(self.tails[n])
        if n <= self.n_cut:
            return float(self._upper_sums[n]) / self.normalizer
        if self.is_table:
            return 0.0
        return _tail_integral(self.c, self.phi, math.log(n + 0.5)) / self.normalizer

    def log_mass_at_log(self, t: np.ndarray | float) -> np.ndarray | float:
        """log p at n = e^t from the analytic form (valid for huge n)."""
        if self.is_table:
            raise InvalidSpec("table laws have no analytic continuation")
        return -self.c * np.asarray(t, dtype=float) + self.phi.log_at_log(t) - math.log(self.normalizer)

    def log_scale_density(self, t: np.ndarray | float) -> np.ndarray | float:
        """Density of log E in the continuum limit: p(e^t) e^t."""
        return np.exp(self.log_mass_at_log(t) + np.asarray(t, dtype=float))

    def tail_beyond_log(self, t: float) -> float:
        """Continuum tail: integral of p(x) dx over x > e^t."""
        if self.is_table:
            return 0.0
        return _tail_integral(self.c, self.phi, t) / self.normalizer

    def exact_weights(self, n_upto: int) -> np.ndarray:
        """Normalized masses p_0..p_n_upto (p_0 = 0), n_upto <= n_cut."""
        if n_upto > self.n_cut:
            raise HorizonExceeded(f"exact masses stop at {self.n_cut}, asked for {n_upto}")
        weights = self._weights[: n_upto + 1] / self.normalizer
        head = min(n_upto, self.n_max) + 1
        weights[:head] = self.masses[:head]
        return weights

    def exact_tails(self, n_upto: int) -> np.ndarray:
        """P(E > n) for n = 0..n_upto, n_upto <= n_cut."""
        if n_upto > self.n_cut:
            raise HorizonExceeded(f"exact tails stop at {self.n_cut}, asked for {n_upto}")
        tails = self._upper_sums[: n_upto + 1] / self.normalizer
        head = min(n_upto, self.n_max) + 1
        tails[:head] = self.tails[:head]
        return tails

    def check_horizon(self, N: int) -> None:
        if N > self.n_max:
            raise HorizonExceeded(f"law supplies p_n up to n_max={self.n_max}, DP needs N={N}")


def _tail_integral(c: float, phi: PhiSpec, log_a: float) -> float:
    """Integral of x^-c phi(x) over x > e^log_a."""
    if phi.family == "constant":
        if c <= 1:
            raise NonSummable("constant phi with c <= 1 has a divergent tail")
        return phi.K * math.exp((1.0 - c) * log_a) / (c - 1.0)

    if phi.family != "log_power":
        raise InvalidSpec("table laws have no analytic tail")

    if c == 1.0:
        if phi.alpha <= 1:
            raise NonSummable(f"c = 1 needs alpha > 1, got {phi.alpha}")
        # K t^(1-alpha)/(alpha-1) is the shift-free part; the shift correction decays like e^-t
        leading = phi.K * log_a ** (1.0 - phi.alpha) / (phi.alpha - 1.0)
        if phi.shift == 0:
            return leading

        def correction(t: float) -> float:
            return math.exp(phi.log_at_log(t)) - phi.K * t ** (-phi.alpha)

        value, _err = quad(correction, log_a, np.inf, epsabs=1e-16, epsrel=1e-13, limit=200)
        return leading + value

    def integrand(t: float) -> float:
        return math.exp((1.0 - c) * t + phi.log_at_log(t))

    value, _err = quad(integrand, log_a, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return value


def _check_summable(c: float, phi: PhiSpec) -> None:
    if c < 1:
        raise InvalidSpec(f"loop exponent must be >= 1, got {c}")
    if c > 1 or phi.family == "table":
        return
    if phi.family == "constant":
        raise NonSummable("c = 1 with constant phi: the harmonic series diverges")
    if phi.alpha <= 1:
        raise NonSummable(f"c = 1 with log_power needs alpha > 1, got {phi.alpha}")


def _analytic_weights(c: float, phi: PhiSpec, n_cut: int) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized weights f_n = n^-c phi(n) and upper sums R_n = sum_{k>n} f_k."""
    n = np.arange(1, n_cut + 1, dtype=float)
    log_n = np.log(n)
    weights = np.zeros(n_cut + 1)
    weights[1:] = np.exp(-c * log_n + phi.log_at_log(log_n))
    beyond = _tail_integral(c, phi, math.log(n_cut + 0.5))
    # accumulate from the far end so small terms are added first
    upper = np.empty(n_cut + 1)
    upper[:-1] = np.cumsum(weights[:0:-1])[::-1] + beyond
    upper[-1] = beyond
    return weights, upper


def _running_tails(masses: np.ndarray) -> np.ndarray:
    """tails[0] = 1 and tails[n] = tails[n - 1] - masses[n], subtracted in order."""
    steps = masses.copy()
    steps[0] = 1.0
    return np.subtract.accumulate(steps)


def _normalizer(c: float, phi: PhiSpec) -> float:
    _check_summable(c, phi)
    _weights, upper = _analytic_weights(c, phi, NORMALIZER_CUTOFF)
    return float(upper[0])


def build_law(c: float, phi: PhiSpec, n_max: int) -> ExcursionLaw:
    """Build the normalized law with explicit masses up to n_max."""
    if n_max < 2:
        raise InvalidSpec(f"n_max must be >= 2, got {n_max}")
    _check_summable(c, phi)

    if phi.family == "table":
        table = np.asarray(phi.table, dtype=float)
        total = float(table.sum())
        if abs(total - 1.0) > TABLE_TOLERANCE:
            raise InvalidSpec(f"table masses sum to {total!r}, not 1")
        n_cut = max(n_max, table.size)
        weights = np.zeros(n_cut + 1)
        weights[1 : table.size + 1] = table
        upper = np.zeros(n_cut + 1)
        upper[:-1] = np.cumsum(weights[:0:-1])[::-1]
        normalizer = total
    else:
        if phi.family == "log_power" and phi.shift <= 0:
            raise InvalidSpec("a law needs shift > 0 so that log(n + shift) > 0 at n = 1")
        n_cut = max(n_max, NORMALIZER_CUTOFF)
        weights, upper = _analytic_weights(c, phi, n_cut)
        normalizer = float(upper[0])

    n_max = max(n_max, len(phi.table))
    masses = weights[: n_max + 1] / normalizer
    if phi.family == "table":
        # the last support point takes the rounding residue so the tail ends at exactly zero
        support = len(phi.table)
        masses[support] = _running_tails(masses[:support])[-1]
    tails = _running_tails(masses)

    law = ExcursionLaw(
        c=float(c),
        phi=phi,
        n_max=n_max,
        masses=masses,
        tails=tails,
        normalizer=normalizer,
        n_cut=n_cut,
        _weights=weights,
        _upper_sums=upper,
    )
    masses.flags.writeable = False
    tails.flags.writeable = False
    logger.debug("Built law c=%g phi=%s n_max=%d Z_p=%.17g", c, phi.family, n_max, normalizer)
    return law


@lru_cache(maxsize=None)
def srw2d_shift(K: float = math.pi, alpha: float = 2.0) -> float:
    """Shift s0 at which sum_n K / (n log(n + s0)^alpha) = 1.

    With this shift the normalizer is one, so p_n = phi(n)/n exactly, as for
    the return times of planar simple random walk.
    """

    def excess(shift: float) -> float:
        return math.log(_normalizer(1.0, log_power_phi(K, alpha, shift)))

    shift = brentq(excess, DEFAULT_SHIFT, 1e9, xtol=1e-12, rtol=1e-14)
    logger.info("srw2d shift calibrated to %.12g", shift)
    return shift


def law_from_preset(
    name: str,
    n_max: int,
    *,
    c: float | None = None,
    K: float | None = None,
    alpha: float | None = None,
    shift: float | None = None,
    table: list[float] | None = None,
) -> ExcursionLaw:
    """Build one of the named laws: srw2d, logpow, power, table."""
    if name == "srw2d":
        return build_law(1.0, log_power_phi(math.pi, 2.0, srw2d_shift(math.pi, 2.0)), n_max)
    if name == "logpow":
        phi = log_power_phi(K if K is not None else 1.0, alpha if alpha is not None else 2.0,
                            shift if shift is not None else DEFAULT_SHIFT)
        return build_law(1.0, phi, n_max)
    if name == "power":
        c = 1.5 if c is None else c
        if c <= 1:
            raise NonSummable(f"power preset needs c > 1, got {c}")
        return build_law(c, constant_phi(K if K is not None else 1.0), n_max)
    if name == "table":
        if not table:
            raise InvalidSpec("table preset needs explicit masses")
        return build_law(1.0, table_phi(table), n_max)
    raise InvalidSpec(f"unknown law preset '{name}' (expected one of {sorted(PRESETS)})")


def psi_integral(phi: PhiSpec, t: float) -> float:
    """Psi(t) = integral of phi(e^s) ds over s > t."""
    if not t > 0:
        raise InvalidSpec(f"Psi needs t > 0, got {t}")
    if phi.family == "table":
        raise InvalidSpec("table laws carry no phi")
    if phi.family == "constant" or phi.alpha <= 1:
        raise NonConvergent(f"Psi diverges for phi family {phi.family} (alpha={phi.alpha})")
    # same integral as the c = 1 tail, in the log variable
    return _tail_integral(1.0, phi, t)


def write_law_dump(law: ExcursionLaw, out: Path | IO[str]) -> None:
    """Plain-text lines "n p_n tail_n" for n = 1..n_max."""
    lines = [
        f"{n} {fmt_float(law.masses[n])} {fmt_float(law.tails[n])}\n"
        for n in range(1, law.n_max + 1)
    ]
    if isinstance(out, Path):
        out.write_text("".join(lines))
    else:
        out.writelines(lines)
