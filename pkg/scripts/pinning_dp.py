"""Log-domain renewal dynamic programming for pinning partition functions.

Site convention: the Hamiltonian sums n = 1..N, so site 0 carries no
energy and the local time <L_N> counts contacts at n = 1..N.  ``weights``
arrays hold beta*(u + V_n) with ``weights[n - 1]`` belonging to site n.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np
from scipy.special import logsumexp

from disorder import DisorderModel, log_mgf
from errors import InvalidSpec, TooLarge
from excursion_law import ExcursionLaw
from num_utils import LOG_ZERO, fmt_float, log_sum

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class PinningParams:
    beta: float
    u: float
    model: DisorderModel = field(default_factory=lambda: DisorderModel("gaussian"))

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise InvalidSpec(f"beta must be > 0, got {self.beta}")

    @property
    def delta(self) -> float:
        """Distance to the annealed critical point, u + log M_V(beta) / beta."""
        return self.u + log_mgf(self.model, self.beta) / self.beta


@dataclass(frozen=True, eq=False)
class QuenchedProfile:
    """Forward partition values and, optionally, per-site contact probabilities.

    ``log_zc[n]`` is the log partition constrained to x_n = 0 over [0, n];
    ``contact_prob[n - 1]`` is P(x_n = 0) under the Gibbs measure, n = 1..N.
    """

    log_zc: np.ndarray
    log_z_free: float
    contact_prob: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.log_zc.size - 1

    @property
    def mean_local_time(self) -> float:
        if self.contact_prob is None:
            raise InvalidSpec("profile was computed without contact probabilities")
        return float(self.contact_prob.sum())

    @property
    def contact_fraction(self) -> float:
        return self.mean_local_time / self.N


def site_weights(params: PinningParams, V: np.ndarray | Sequence[float], N: int) -> np.ndarray:
    """beta * (u + V_n) for n = 1..N."""
    V = np.asarray(V, dtype=float)
    if V.size < N:
        raise InvalidSpec(f"disorder has {V.size} sites, need {N}")
    return params.beta * (params.u + V[:N])


def _renewal_pass(
    log_p: np.ndarray,
    target_w: np.ndarray,
    source_w: np.ndarray | None = None,
    seed: np.ndarray | None = None,
    track_local_time: bool = False,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Batched log-domain renewal recursion over rows of shape (B, L).

        out[j] = target_w[j] + log( e^seed[j] + sum_{i<j} e^(out[i] + source_w[i] + log_p[j-i]) )

    with out[0] = target_w[0] + seed[0] (seed defaults to 0 at j = 0, -inf
    elsewhere).  With ``track_local_time`` the derivative of out[j] with
    respect to a common shift of target_w[1:] is carried along; that is the
    expected number of weighted sites.
    """
    B, L = target_w.shape
    out = np.empty((B, L))
    out[:, 0] = target_w[:, 0] + (seed[:, 0] if seed is not None else 0.0)
    dl = np.zeros((B, L)) if track_local_time else None

    for j in range(1, L):
        terms = out[:, :j] + log_p[j:0:-1]
        if source_w is not None:
            terms = terms + source_w[:, :j]
        with np.errstate(divide="ignore"):
            lse = logsumexp(terms, axis=1)
        if seed is not None:
            total = np.logaddexp(seed[:, j], lse)
        else:
            total = lse
        out[:, j] = target_w[:, j] + total

        if dl is not None:
            finite = np.isfinite(lse)
            with np.errstate(invalid="ignore", over="ignore"):
                share = np.exp(terms - lse[:, None])
                grad = np.einsum("bi,bi->b", share, dl[:, :j])
                if seed is not None:
                    grad = grad * np.exp(lse - total)
            dl[:, j] = 1.0 + np.where(finite, grad, 0.0)
    return out, dl


def _forward(law: ExcursionLaw, weights: np.ndarray, track_local_time: bool = False):
    weights = np.atleast_2d(weights)
    N = weights.shape[1]
    law.check_horizon(N)
    target = np.zeros((weights.shape[0], N + 1))
    target[:, 1:] = weights
    return _renewal_pass(law.log_masses[: N + 1], target, track_local_time=track_local_time)


def _free_from_constrained(law: ExcursionLaw, log_zc: np.ndarray, N: int) -> float:
    # last return at k, then an excursion longer than N - k
    return float(logsumexp(log_zc[: N + 1] + law.log_tails[N::-1]))


def log_z_constrained_weights(law: ExcursionLaw, weights: np.ndarray) -> np.ndarray:
    out, _ = _forward(law, np.asarray(weights, dtype=float))
    return out[0]


def log_z_free_weights(law: ExcursionLaw, weights: np.ndarray) -> float:
    weights = np.asarray(weights, dtype=float)
    N = weights.size
    if not np.any(weights):
        # E^X[1] = 1
        law.check_horizon(N)
        return 0.0
    return _free_from_constrained(law, log_z_constrained_weights(law, weights), N)


def log_z_free_batch(law: ExcursionLaw, weights: np.ndarray) -> np.ndarray:
    """log Z_N for each row of a (B, N) weight matrix, all rows in one pass."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    N = weights.shape[1]
    out, _ = _forward(law, weights)
    log_z = logsumexp(out + law.log_tails[N::-1], axis=1)
    return np.where(np.any(weights, axis=1), log_z, 0.0)


def log_z_constrained(law: ExcursionLaw, params: PinningParams, V, N: int) -> np.ndarray:
    """log_zc[0..N] for the quenched model."""
    return log_z_constrained_weights(law, site_weights(params, V, N))


def log_z_free(law: ExcursionLaw, params: PinningParams, V, N: int) -> float:
    """log Z_N with a free endpoint."""
    return log_z_free_weights(law, site_weights(params, V, N))


def free_energy_by_horizon(
    law: ExcursionLaw, weights: np.ndarray, horizons: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """log Z_N and <L_N> for every N in ``horizons`` from one forward pass.

    Relies on the prefix property: log_zc[n] only depends on sites 1..n.
    """
    weights = np.asarray(weights, dtype=float)
    N_max = max(horizons)
    if weights.size < N_max:
        raise InvalidSpec(f"weights cover {weights.size} sites, need {N_max}")
    out, dl = _forward(law, weights[:N_max], track_local_time=True)
    log_zc, local = out[0], dl[0]

    log_z = np.empty(len(horizons))
    mean_local = np.empty(len(horizons))
    for idx, N in enumerate(horizons):
        terms = log_zc[: N + 1] + law.log_tails[N::-1]
        total = float(logsumexp(terms))
        share = np.exp(terms - total)
        mean_local[idx] = float(share @ local[: N + 1])
        log_z[idx] = 0.0 if not np.any(weights[:N]) else total
    return log_z, mean_local


def contact_profile(law: ExcursionLaw, params: PinningParams, V, N: int) -> QuenchedProfile:
    """Forward-backward contact probabilities P(x_n = 0), n = 1..N."""
    weights = site_weights(params, V, N)
    log_zc = log_z_constrained_weights(law, weights)

    # backward partition g(j) = Z over [N - j, N] from 0, site N - j excluded:
    # the forward kernel on index-reversed sites with the weight on the source
    source = np.zeros((1, N + 1))
    source[0, :N] = weights[::-1]
    seed = law.log_tails[: N + 1][None, :]
    log_g, _ = _renewal_pass(law.log_masses[: N + 1], np.zeros((1, N + 1)), source, seed)
    log_g = log_g[0]

    log_z = _free_from_constrained(law, log_zc, N)
    logger.debug("contact_profile N=%d: forward %.17g backward %.17g", N, log_z, log_g[N])
    with np.errstate(under="ignore"):
        prob = np.exp(log_zc[1:] + log_g[N - 1 :: -1] - log_z)
    prob = np.clip(prob, 0.0, 1.0)
    return QuenchedProfile(log_zc=log_zc, log_z_free=0.0 if not np.any(weights) else log_z, contact_prob=prob)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else LOG_ZERO


def brute_force_log_z(law: ExcursionLaw, params: PinningParams, V, N: int) -> float:
    """log Z_N by enumerating every return set in (0, N]; independent of the DP."""
    if N > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force enumerates 2^N paths; N={N} > {BRUTE_FORCE_LIMIT}")
    if N == 0:
        return 0.0
    V = [float(v) for v in V]
    if len(V) < N:
        raise InvalidSpec(f"disorder has {len(V)} sites, need {N}")

    log_mass = [LOG_ZERO] + [_log(law.mass(n)) for n in range(1, N + 1)]
    log_tail = [_log(law.tail(n)) for n in range(N + 1)]
    energy = [0.0] + [params.beta * (params.u + V[n - 1]) for n in range(1, N + 1)]

    terms: list[float] = []
    for k in range(N + 1):
        for returns in itertools.combinations(range(1, N + 1), k):
            total = 0.0
            previous = 0
            for t in returns:
                total += log_mass[t - previous] + energy[t]
                previous = t
            total += log_tail[N - previous]
            if total != LOG_ZERO:
                terms.append(total)
    return log_sum(terms)


def write_dp_dump(log_zc: np.ndarray, out: Path | IO[str]) -> None:
    """Plain-text lines "n log_zc"."""
    lines = [f"{n} {fmt_float(value)}\n" for n, value in enumerate(log_zc)]
    if isinstance(out, Path):
        out.write_text("".join(lines))
    else:
        out.writelines(lines)
