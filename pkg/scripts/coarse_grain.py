"""Block coarse-graining: scale selection, good/bad blocks, p_good and the free-energy lower bound.

A block of length K1 is good when the windowed quenched partition sums
started in its first half exceed half of their disorder average.  Scales
K1 >> K2 >> M are chosen so that blocks are good with probability > 1/2 and
the cost of skipping bad blocks stays below the energy gained in good ones.
Compliant scales are usually astronomically large, so K1 is carried as
log K1 and only materialized when it fits a 64-bit integer.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from annealed import annealed_log_z_dp, delta_of
from disorder import DisorderModel, lambda_v, sample
from errors import InfeasibleScales, InvalidSpec, NoSolution
from excursion_law import ExcursionLaw, PhiSpec
from pinning_dp import PinningParams, log_z_free_batch

logger = logging.getLogger(__name__)

# K1 is materialized only below 2^62
INT_LIMIT_LOG = 62 * math.log(2)
LOG_K1_MARGIN = 1.0
K2_MARGIN = 2
K2_CAP = 10**12
FIXED_POINT_ITERATIONS = 200
# gap multiples d = 1..GAP_MULTIPLES scanned for the excursion constant
GAP_MULTIPLES = 50


@dataclass(frozen=True)
class ScaleFlags:
    """Scale conditions, all evaluated in log space.

    block_variance: 32 K2 < exp(Lambda_V K2)
    excursion_cost: 4 (M v 1) log(1/phi(K1)) < K2
    block_length:   K2 < log(K1/2) / (2 Lambda_V)
    """

    block_variance: bool
    excursion_cost: bool
    block_length: bool

    @property
    def all(self) -> bool:
        return self.block_variance and self.excursion_cost and self.block_length


@dataclass(frozen=True)
class BlockScales:
    log_K1: float
    K1: int | None  # None: too large to materialize at desk scale
    K2: int
    flags: ScaleFlags
    M: float
    lam: float

    @property
    def compliant(self) -> bool:
        return self.flags.all

    @property
    def feasible(self) -> bool:
        return self.K1 is not None


@dataclass(frozen=True)
class BlockVerdict:
    good: bool
    log_w_sum: float
    log_reference_sum: float


@dataclass(frozen=True)
class BlockDiagnostic:
    replica: int
    good: bool
    log_w_sum: float
    log_reference_sum: float


@dataclass(frozen=True)
class BlockReport:
    replicas: int
    good_count: int
    p_good_hat: float
    stderr: float
    diagnostics: tuple[BlockDiagnostic, ...]


@dataclass(frozen=True)
class CPhiResult:
    value: float
    x_at: float
    k_at: float
    # for log_power with log(K + shift) > alpha (and constant phi) the ratio
    # is increasing in x, so the infimum is exactly 1 at x = 1
    attained_at_unit_x: bool


@dataclass(frozen=True)
class BoundReport:
    """Terms of the block lower bound on f_q; all logs natural."""

    log_annealed: float
    log_excursion_constant: float
    log_c_phi: float
    log_phi_K1: float
    penalty: float
    bracket: float
    bracket_lemma: float
    bracket_coarse: float
    log_K1: float
    log_bound: float | None
    p_good: float | None = None
    bracket_measured: float | None = None
    log_bound_measured: float | None = None

    @property
    def conclusive(self) -> bool:
        return self.log_bound is not None

    @property
    def bound(self) -> float:
        """The bound itself; 0.0 when there is no conclusion or it underflows."""
        return math.exp(self.log_bound) if self.log_bound is not None else 0.0


def _log_phi(law: ExcursionLaw, log_x: float) -> float:
    """log phi(x) for the law's own phi (p_n = n^-c phi(n))."""
    if not law.is_table:
        return float(law.phi_effective.log_at_log(log_x))
    if log_x > INT_LIMIT_LOG:
        return float("-inf")
    n = int(round(math.exp(log_x)))
    p = law.mass(n)
    return law.c * math.log(n) + math.log(p) if p > 0 else float("-inf")


def _even_above(x: float) -> int:
    """Smallest even integer strictly greater than x."""
    k = math.floor(x) + 1
    return k + (k % 2)


def check_scales(
    law: ExcursionLaw, model: DisorderModel, beta: float, M: float, log_K1: float, K2: int
) -> BlockScales:
    """Evaluate the three scale conditions for (K1 = e^log_K1, K2)."""
    if K2 < 2 or K2 % 2:
        raise InvalidSpec(f"K2 must be an even integer >= 2, got {K2}")
    if not log_K1 > 0:
        raise InvalidSpec(f"log K1 must be > 0, got {log_K1}")
    lam = lambda_v(model, beta)

    block_variance = math.log(32.0 * K2) < lam * K2
    excursion_cost = 4.0 * max(M, 1.0) * -_log_phi(law, log_K1) < K2
    block_length = True if lam <= 0 else K2 < (log_K1 - math.log(2.0)) / (2.0 * lam)

    # nearest even integer; a block uses its first K1 / 2 sites
    K1 = max(2, 2 * round(math.exp(log_K1) / 2.0)) if log_K1 <= INT_LIMIT_LOG else None
    return BlockScales(
        log_K1=log_K1,
        K1=K1,
        K2=K2,
        flags=ScaleFlags(block_variance, excursion_cost, block_length),
        M=M,
        lam=lam,
    )


def _smallest_variance_K2(lam: float) -> int:
    K2 = 2
    while math.log(32.0 * K2) >= lam * K2:
        K2 += 2
        if K2 > K2_CAP:
            raise NoSolution(f"no K2 below {K2_CAP} makes 32 K2 < exp(Lambda K2) for Lambda={lam:g}")
    return K2


def choose_scales(
    law: ExcursionLaw,
    model: DisorderModel,
    beta: float,
    M: float,
    mode: str = "compliant",
    K1_max: int | None = None,
) -> BlockScales:
    """Pick (K1, K2): the self-consistent compliant pair, or the largest desk pair under K1_max."""
    if not M > 0:
        raise InvalidSpec(f"M must be > 0, got {M}")

    if mode == "desk":
        if K1_max is None or K1_max < 4:
            raise InvalidSpec(f"desk mode needs K1_max >= 4, got {K1_max}")
        K1 = K1_max - (K1_max % 2)
        K2 = max(2, (K1 // 100) - ((K1 // 100) % 2))
        scales = check_scales(law, model, beta, M, math.log(K1), K2)
        logger.info("Desk scales K1=%d K2=%d flags=%s", K1, K2, scales.flags)
        return scales

    if mode != "compliant":
        raise InvalidSpec(f"unknown scale mode '{mode}' (expected compliant or desk)")

    lam = lambda_v(model, beta)
    if lam <= 0:
        raise NoSolution("Lambda_V(beta) = 0: no K2 satisfies the block-variance condition")

    K2_min = _smallest_variance_K2(lam)
    K2 = K2_min
    for iteration in range(FIXED_POINT_ITERATIONS):
        log_K1 = 2.0 * lam * K2 + math.log(2.0) + LOG_K1_MARGIN
        need = 4.0 * max(M, 1.0) * -_log_phi(law, log_K1)
        candidate = max(K2_min, _even_above(need) + K2_MARGIN)
        if candidate == K2:
            break
        K2 = candidate
        if K2 > K2_CAP or not math.isfinite(need):
            raise NoSolution(f"scale fixed point diverged (K2={K2}) at M={M}")
    else:
        raise NoSolution(f"scale fixed point did not settle in {FIXED_POINT_ITERATIONS} iterations")

    if log_K1 <= INT_LIMIT_LOG:
        K1 = _even_above(math.exp(log_K1) - 1.0)
        log_K1 = math.log(K1)
    scales = check_scales(law, model, beta, M, log_K1, K2)
    logger.info("Compliant scales after %d iterations: log K1=%.6g K2=%d feasible=%s",
                iteration + 1, scales.log_K1, scales.K2, scales.feasible)
    return scales


def block_goodness(
    law: ExcursionLaw,
    params: PinningParams,
    model: DisorderModel,
    V_window: np.ndarray,
    K1: int,
    K2: int,
    log_reference: float | None = None,
) -> BlockVerdict:
    """Classify one block from its disorder V_{1..K1/2+K2}.

    W_b is the free partition of length K2 over V_{b+1..b+K2}, site b
    excluded; the block is good when sum_b W_b > (K1/4) E^X[e^{beta Delta L_K2}].
    Ties count as bad.
    """
    if K1 % 2 or K2 % 2:
        raise InvalidSpec(f"K1 and K2 must be even, got {K1}, {K2}")
    half = K1 // 2
    V_window = np.asarray(V_window, dtype=float)
    if V_window.size < half + K2 - 1:
        raise InvalidSpec(f"window has {V_window.size} sites, need {half + K2 - 1}")

    if log_reference is None:
        log_reference = annealed_log_z_dp(law, params.beta * delta_of(params, model), K2)
    windows = sliding_window_view(V_window, K2)[:half]
    log_w = log_z_free_batch(law, params.beta * (params.u + windows))

    log_w_sum = float(logsumexp(log_w))
    log_reference_sum = math.log(half) - math.log(2.0) + log_reference
    return BlockVerdict(good=log_w_sum > log_reference_sum, log_w_sum=log_w_sum,
                        log_reference_sum=log_reference_sum)


def estimate_p_good(
    law: ExcursionLaw,
    params: PinningParams,
    model: DisorderModel,
    scales: BlockScales,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> BlockReport:
    """Monte-Carlo p_good over independent blocks; replica i uses disorder stream (seed, i)."""
    if replicas < 1:
        raise InvalidSpec(f"replicas must be >= 1, got {replicas}")
    if not scales.feasible:
        raise InfeasibleScales(f"K1 = exp({scales.log_K1:.6g}) cannot be materialized")

    K1, K2 = scales.K1, scales.K2
    log_reference = annealed_log_z_dp(law, params.beta * delta_of(params, model), K2)

    def classify(replica: int) -> BlockDiagnostic:
        V = sample(model, seed, replica, K1 // 2 + K2).values
        verdict = block_goodness(law, params, model, V, K1, K2, log_reference)
        logger.debug("block replica %d: good=%s logW=%.6g logRef=%.6g",
                     replica, verdict.good, verdict.log_w_sum, verdict.log_reference_sum)
        return BlockDiagnostic(replica, verdict.good, verdict.log_w_sum, verdict.log_reference_sum)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        diagnostics = tuple(pool.map(classify, range(replicas)))

    good = sum(d.good for d in diagnostics)
    p_hat = good / replicas
    report = BlockReport(
        replicas=replicas,
        good_count=good,
        p_good_hat=p_hat,
        stderr=math.sqrt(p_hat * (1.0 - p_hat) / replicas),
        diagnostics=diagnostics,
    )
    logger.info("p_good: %d/%d good blocks (K1=%d, K2=%d)", good, replicas, K1, K2)
    return report


def c_phi_constant(
    phi: PhiSpec,
    K: float | None = None,
    x_grid: np.ndarray | None = None,
    k_grid: np.ndarray | None = None,
    *,
    log_K: float | None = None,
) -> CPhiResult:
    """Grid infimum of x phi(kx) / phi(k) over x >= 1, k >= K."""
    if phi.family == "table":
        raise InvalidSpec("table laws carry no phi")
    if log_K is None:
        if K is None or not K > 0:
            raise InvalidSpec(f"C_phi needs K > 0, got {K}")
        log_K = math.log(K)

    if x_grid is None:
        # refined near x = 1 where the infimum usually sits
        log_x = np.unique(np.concatenate([np.log(np.linspace(1.0, 2.0, 101)),
                                          np.linspace(math.log(2.0), math.log(1e6), 241)]))
    else:
        log_x = np.log(np.asarray(x_grid, dtype=float))
    if k_grid is None:
        top = max(math.log(1e9), log_K + math.log(1e3))
        log_k = np.linspace(log_K, top, 181)
    else:
        log_k = np.log(np.asarray(k_grid, dtype=float))
        log_k = log_k[log_k >= log_K]
        if log_k.size == 0:
            log_k = np.array([log_K])

    lk, lx = np.meshgrid(log_k, log_x, indexing="ij")
    log_ratio = lx + phi.log_at_log(lk + lx) - phi.log_at_log(lk)
    flat = int(np.argmin(log_ratio))
    i, j = np.unravel_index(flat, log_ratio.shape)

    if phi.family == "constant":
        unit_x = True
    else:
        # log(K + shift) > alpha, with log(K + shift) = log K + log1p(shift / K)
        unit_x = log_K + math.log1p(phi.shift * math.exp(-log_K)) > phi.alpha
    return CPhiResult(
        value=float(np.exp(log_ratio[i, j])),
        x_at=float(np.exp(log_x[j])),
        k_at=float(np.exp(log_k[i])) if log_k[i] < 700 else math.inf,
        attained_at_unit_x=unit_x,
    )


def _log_excursion_constant(law: ExcursionLaw, log_K1: float) -> float:
    """log of the smallest p_m (d+1) K1 / phi((d+1) K1) over the gaps m a skipped run can need.

    A jump from the first three quarters of block i to the first half of
    block i + d has length below (d + 1/2) K1; p_m is nonincreasing in m for
    every analytic family, so the minimum sits at that end.
    """
    if law.is_table:
        raise InvalidSpec("the block bound needs an analytic law; table laws vanish beyond their support")
    values = []
    for d in range(1, GAP_MULTIPLES + 1):
        log_far = log_K1 + math.log(d + 0.5)
        log_span = log_K1 + math.log(d + 1.0)
        log_p = float(law.log_mass_at_log(log_far))
        values.append(log_p + log_span - _log_phi(law, log_span))
    return min(values)


def fq_lower_bound(
    law: ExcursionLaw,
    params: PinningParams,
    scales: BlockScales,
    c_phi: float,
    K2_annealed_log: float | None = None,
    p_good: float | None = None,
) -> BoundReport:
    """Computable block lower bound on f_q.

    bracket = log E^X[e^{beta Delta L_K2}] + log(C C_phi phi(K1)) - 2 log 3,
    f_q >= bracket / (2 K1) when positive (needs p_good >= 1/2).  With a
    measured p_good the general form p (logZa + log(C C_phi phi(K1)) -
    2 log(1/p + 1)) / K1 is reported as well.
    """
    beta_delta = params.beta * params.delta
    if not beta_delta > 0:
        raise InvalidSpec(f"the lower bound needs Delta > 0, got {params.delta}")
    if not c_phi > 0:
        raise InvalidSpec(f"C_phi must be > 0, got {c_phi}")
    if K2_annealed_log is None:
        K2_annealed_log = annealed_log_z_dp(law, beta_delta, scales.K2)

    log_c = _log_excursion_constant(law, scales.log_K1)
    log_phi_K1 = _log_phi(law, scales.log_K1)
    entropy = log_c + math.log(c_phi) + log_phi_K1
    penalty = 2.0 * math.log(3.0)

    bracket = K2_annealed_log + entropy - penalty
    bracket_lemma = scales.K2 / (2.0 * scales.M) + entropy - penalty
    bracket_coarse = scales.K2 / (4.0 * scales.M) + log_c + math.log(c_phi) - math.log(9.0)
    log_bound = math.log(bracket) - math.log(2.0) - scales.log_K1 if bracket > 0 else None
    if log_bound is None:
        logger.warning("Lower bound bracket %.6g <= 0: no conclusion", bracket)

    bracket_measured = log_bound_measured = None
    if p_good is not None:
        if not 0 < p_good <= 1:
            raise InvalidSpec(f"p_good must be in (0, 1], got {p_good}")
        bracket_measured = K2_annealed_log + entropy - 2.0 * math.log(1.0 / p_good + 1.0)
        if bracket_measured > 0:
            log_bound_measured = math.log(p_good) + math.log(bracket_measured) - scales.log_K1

    return BoundReport(
        log_annealed=K2_annealed_log,
        log_excursion_constant=log_c,
        log_c_phi=math.log(c_phi),
        log_phi_K1=log_phi_K1,
        penalty=penalty,
        bracket=bracket,
        bracket_lemma=bracket_lemma,
        bracket_coarse=bracket_coarse,
        log_K1=scales.log_K1,
        log_bound=log_bound,
        p_good=p_good,
        bracket_measured=bracket_measured,
        log_bound_measured=log_bound_measured,
    )
