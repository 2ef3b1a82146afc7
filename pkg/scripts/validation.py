"""Property suites behind ``pinlab validate``: cross-checks between independent routes.

Each suite returns CheckResult records.  Quick scale runs in seconds; the
full scale reproduces the acceptance-sized runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from annealed import (
    annealed_log_z_dp,
    annealed_log_z_series,
    beta_delta_for_M,
    predict_log_M_asymptotic,
    solve_free_energy,
    u_c_annealed,
)
from coarse_grain import check_scales, choose_scales, estimate_p_good
from disorder import DisorderModel, lambda_v, sample
from errors import PinningError
from excursion_law import build_law, law_from_preset, psi_integral, table_phi
from harness import ScanResult, estimate_grid, render_csv, scan_critical_point
from pinning_dp import (
    PinningParams,
    brute_force_log_z,
    contact_profile,
    free_energy_by_horizon,
    log_z_free,
)

logger = logging.getLogger(__name__)

# p_good measured at seed 20240601 with 200 replicas at the desk block parameters
P_GOOD_GOLDEN_SEED = 20240601
P_GOOD_GOLDEN = 0.95
# u_c^a offsets of the acceptance scan; uniform step around the threshold
SCAN_OFFSETS = (-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2, 0.3)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    name: str
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def ok(self) -> bool:
        return self.passed == len(self.results)


def _random_table(rng: np.random.Generator, size: int) -> list[float]:
    raw = rng.random(size) + 1e-3
    return list(raw / raw.sum())


def suite_oracle(full: bool, seed: int) -> list[CheckResult]:
    """DP against brute-force enumeration on random table laws."""
    rng = np.random.default_rng(seed)
    instances, n_top = (50, 14) if full else (10, 10)
    model = DisorderModel("gaussian")
    results = []
    for i in range(instances):
        N = int(rng.integers(1, n_top + 1))
        law = build_law(1.0, table_phi(_random_table(rng, int(rng.integers(1, N + 4)))), max(N, 2))
        params = PinningParams(float(rng.uniform(0.5, 2.0)), float(rng.uniform(-1.0, 1.0)), model)
        V = sample(model, seed, i, N).values
        dp = log_z_free(law, params, V, N)
        brute = brute_force_log_z(law, params, V, N)
        gap = abs(dp - brute)
        results.append(CheckResult(f"instance {i} (N={N})", gap < 1e-9, f"|dp - brute| = {gap:.3g}"))
    return results


def suite_neutral(full: bool, seed: int) -> list[CheckResult]:
    """beta (u + V) = 0 gives log Z_N = 0 exactly."""
    model = DisorderModel("zero")
    params = PinningParams(1.0, 0.0, model)
    results = []
    for preset in ("srw2d", "logpow", "power", "table"):
        law = law_from_preset(preset, 1000, table=[0.5, 0.25, 0.25])
        for N in (1, 10, 1000):
            value = log_z_free(law, params, sample(model, seed, 0, N).values, N)
            results.append(CheckResult(f"{preset} N={N}", value == 0.0, f"log Z = {value!r}"))
    return results


def suite_annealed_routes(full: bool, seed: int) -> list[CheckResult]:
    """Fixed-point s against the DP slope log Z_N / N at N = 200 M."""
    results = []
    table_law = law_from_preset("table", 2, table=[0.3, 0.3, 0.2, 0.1, 0.1])
    cases = [("table", table_law, 0.5)]
    if full:
        cases.append(("srw2d", law_from_preset("srw2d", 1000), 0.5))
    else:
        cases.append(("srw2d", law_from_preset("srw2d", 1000), 2.0))

    for name, law, beta_delta in cases:
        solution = solve_free_energy(law, beta_delta)
        N = max(200, int(math.ceil(200 * solution.M)))
        if N <= 20_000:
            slope = annealed_log_z_dp(build_law(law.c, law.phi, N), beta_delta, N) / N
            route = "dp"
        else:
            slope = annealed_log_z_series(law, beta_delta, N) / N
            route = "series"
        rel = abs(slope - solution.s) / solution.s
        results.append(CheckResult(f"{name} beta*Delta={beta_delta:g}", rel < 0.02,
                                   f"s={solution.s:.6g} {route} slope={slope:.6g} at N={N} rel={rel:.3g}"))

    # the two partition-function routes agree where both are cheap
    law = law_from_preset("srw2d", 2000)
    dp = annealed_log_z_dp(law, 0.7, 2000)
    series = annealed_log_z_series(law, 0.7, 2000)
    results.append(CheckResult("dp vs series N=2000", abs(dp - series) < 1e-8 * max(1.0, abs(dp)),
                               f"dp={dp:.17g} series={series:.17g}"))
    return results


def suite_lemma(full: bool, seed: int) -> list[CheckResult]:
    """log E^X[e^{beta Delta L_N}] >= N/M - beta Delta, and >= N/(2M) once N > 2 beta Delta M."""
    n_top = 10_000 if full else 2_000
    law = law_from_preset("srw2d", n_top)
    horizons = list(range(n_top // 100, n_top + 1, n_top // 100))
    results = []
    for beta_delta in (0.1, 0.3, 1.0):
        solution = solve_free_energy(law, beta_delta)
        log_z, _ = free_energy_by_horizon(law, np.full(n_top, beta_delta), horizons)
        inv_M = math.exp(-solution.log_M)
        violations = 0
        checked = 0
        for N, value in zip(horizons, log_z):
            if value < N * inv_M - beta_delta - 1e-9:
                violations += 1
            if N * inv_M > 2.0 * beta_delta:
                checked += 1
                if value < 0.5 * N * inv_M - 1e-9:
                    violations += 1
        if checked == 0:
            logger.warning("beta*Delta=%g: log M=%.4g leaves no N > 2 beta Delta M in range",
                           beta_delta, solution.log_M)
        results.append(CheckResult(f"beta*Delta={beta_delta:g}", violations == 0,
                                   f"{violations} violations, {checked} horizons past 2 beta Delta M"))
    return results


def suite_asymptotics(full: bool, seed: int) -> list[CheckResult]:
    """Solver log M against ((alpha-1) beta Delta / K)^(-1/(alpha-1)) and Psi(log M) against beta Delta."""
    law = law_from_preset("srw2d", 1000)
    phi = law.phi_effective
    results = []
    for beta_delta in (3e-3, 1e-2, 3e-2):
        solution = solve_free_energy(law, beta_delta)
        predicted = predict_log_M_asymptotic(phi, beta_delta)
        ratio = solution.log_M / predicted
        psi_ratio = psi_integral(phi, solution.log_M) / beta_delta
        ok = abs(ratio - 1.0) < 0.3 and abs(psi_ratio - 1.0) < 0.2
        results.append(CheckResult(f"beta*Delta={beta_delta:g}", ok,
                                   f"log M={solution.log_M:.6g} ({solution.method}), ratio={ratio:.4g}, "
                                   f"Psi/beta*Delta={psi_ratio:.4g}"))
    return results


def suite_jensen(full: bool, seed: int) -> list[CheckResult]:
    """Replica mean of (1/(beta N)) log Z_N stays below the annealed value."""
    N, replicas = (10_000, 32) if full else (1_000, 8)
    beta = 1.0
    model = DisorderModel("gaussian")
    law = law_from_preset("srw2d", N)
    uc_a = u_c_annealed(model, beta)
    u_values = [uc_a + d for d in (-0.2, -0.1, 0.0, 0.1, 0.2)]
    rows = estimate_grid(law, model, beta, u_values, [N], replicas, seed)
    results = []
    for row in rows:
        annealed = annealed_log_z_dp(law, beta * row.delta, N) / (beta * N)
        ok = row.fq_hat <= annealed + 3.0 * row.stderr
        results.append(CheckResult(f"u={row.u:.4g}", ok,
                                   f"fq_hat={row.fq_hat:.6g} +- {row.stderr:.3g}, annealed={annealed:.6g}"))
    return results


def suite_contact(full: bool, seed: int) -> list[CheckResult]:
    """Sum of contact probabilities against a central difference of log Z in beta u."""
    instances, N = (10, 1000) if full else (3, 200)
    rng = np.random.default_rng(seed)
    model = DisorderModel("gaussian")
    law = law_from_preset("srw2d", N)
    h = 1e-5
    results = []
    for i in range(instances):
        beta = float(rng.uniform(0.5, 1.5))
        u = float(rng.uniform(-1.0, 0.5))
        V = sample(model, seed, i, N).values
        profile = contact_profile(law, PinningParams(beta, u, model), V, N)
        up = log_z_free(law, PinningParams(beta, u + h / beta, model), V, N)
        down = log_z_free(law, PinningParams(beta, u - h / beta, model), V, N)
        finite_diff = (up - down) / (2.0 * h)
        _, forward = free_energy_by_horizon(law, beta * (u + V), [N])
        rel = abs(profile.mean_local_time - finite_diff) / abs(finite_diff)
        rel_forward = abs(forward[0] - finite_diff) / abs(finite_diff)
        results.append(CheckResult(f"instance {i}", rel < 1e-5 and rel_forward < 1e-5,
                                   f"sum p={profile.mean_local_time:.10g} fd={finite_diff:.10g} "
                                   f"forward={forward[0]:.10g}"))
    return results


def suite_scales(full: bool, seed: int) -> list[CheckResult]:
    """Log-space scale checks against direct arithmetic, and the compliant fixed point."""
    rng = np.random.default_rng(seed)
    law = law_from_preset("srw2d", 1000)
    phi = law.phi_effective
    mismatches = 0
    for _ in range(100):
        beta = float(rng.uniform(0.05, 1.5))
        model = DisorderModel("gaussian")
        lam = lambda_v(model, beta)
        K1 = 2 * int(rng.integers(2, 10**8))
        K2 = 2 * int(rng.integers(1, 300))
        M = float(rng.uniform(0.5, 30.0))
        scales = check_scales(law, model, beta, M, math.log(K1), K2)
        direct = (
            32.0 * K2 < math.exp(min(lam * K2, 700.0)),
            4.0 * max(M, 1.0) * math.log(1.0 / phi.evaluate(K1)) < K2,
            K2 < math.log(K1 / 2.0) / (2.0 * lam),
        )
        got = (scales.flags.block_variance, scales.flags.excursion_cost, scales.flags.block_length)
        mismatches += direct != got
    results = [CheckResult("100 random triples", mismatches == 0, f"{mismatches} mismatches")]

    compliant = choose_scales(law, DisorderModel("gaussian"), 1.0, 5.0, "compliant")
    results.append(CheckResult("compliant fixed point M=5", compliant.compliant,
                               f"log K1={compliant.log_K1:.6g} K2={compliant.K2} flags={compliant.flags}"))
    return results


def suite_blocks(full: bool, seed: int) -> list[CheckResult]:
    """Desk-scale p_good (K1 = 10^4, K2 = 100, M = 20) above 1/2 by 3 stderr."""
    replicas = 200 if full else 20
    beta = 1.0
    model = DisorderModel("gaussian")
    scales_law = law_from_preset("srw2d", 100)
    scales = choose_scales(scales_law, model, beta, 20.0, "desk", K1_max=10_000)
    beta_delta = beta_delta_for_M(scales_law, 20.0)
    params = PinningParams(beta, beta_delta / beta + u_c_annealed(model, beta), model)
    report = estimate_p_good(scales_law, params, model, scales, replicas, seed)
    again = estimate_p_good(scales_law, params, model, scales, replicas, seed)
    measured = f"p_hat={report.p_good_hat:.4g} +- {report.stderr:.3g} over {replicas} replicas"
    results = [
        CheckResult("p_good reproducible", report == again),
        CheckResult("p_good above 1/2 by 3 stderr", report.p_good_hat - 0.5 > 3.0 * report.stderr, measured),
    ]
    if full and seed == P_GOOD_GOLDEN_SEED:
        tolerance = 3.0 * math.sqrt(P_GOOD_GOLDEN * (1.0 - P_GOOD_GOLDEN) / replicas)
        gap = abs(report.p_good_hat - P_GOOD_GOLDEN)
        results.append(CheckResult(f"p_good matches golden {P_GOOD_GOLDEN:g}", gap <= tolerance, measured))
    return results


def suite_determinism(full: bool, seed: int) -> list[CheckResult]:
    """Thread count never changes the CSV bytes."""
    model = DisorderModel("gaussian")
    law = law_from_preset("srw2d", 400)
    u_values = [-0.6, -0.5, -0.4]
    one = render_csv(estimate_grid(law, model, 1.0, u_values, [200, 400], 6, seed, threads=1))
    many = render_csv(estimate_grid(law, model, 1.0, u_values, [200, 400], 6, seed, threads=8))
    return [CheckResult("threads 1 vs 8", one == many)]


def scan_checks(scan: ScanResult, window: float = 0.1) -> list[CheckResult]:
    """Top of the u-grid pinned at the largest N, final bracket meeting [uc_a, uc_a + window], widths not growing in N."""
    uc_a = scan.uc_annealed
    top = max(scan.rows, key=lambda r: (r.N, r.u))
    bracket = scan.bracket
    widths = [b.width for b in scan.brackets_by_N]
    tol = 1e-12
    meets = (bracket.lower is not None and bracket.upper is not None
             and bracket.lower <= uc_a + window + tol and bracket.upper >= uc_a - tol)
    narrowing = all(b <= a + tol for a, b in zip(widths, widths[1:]))
    listed = ", ".join(f"N={b.N}:{b.width:.3g}" for b in scan.brackets_by_N)
    return [
        CheckResult(f"pinned at u_c^a {top.u - uc_a:+.3g}", top.pinned,
                    f"fq_hat={top.fq_hat:.4g} +- {top.stderr:.3g} at N={top.N}"),
        CheckResult(f"bracket meets [u_c^a, u_c^a + {window:g}]", meets, scan.summary_line()),
        CheckResult("bracket width does not grow with N", narrowing, listed),
    ]


def suite_scan(full: bool, seed: int) -> list[CheckResult]:
    """Critical-point bracket at acceptance scale."""
    if not full:
        return []
    beta = 1.0
    model = DisorderModel("gaussian")
    horizons = [2500, 5000, 10_000, 20_000]
    law = law_from_preset("srw2d", horizons[-1])
    uc_a = u_c_annealed(model, beta)
    try:
        scan = scan_critical_point(law, model, beta, [uc_a + d for d in SCAN_OFFSETS], horizons, 32, seed)
    except PinningError as exc:
        return [CheckResult("bracket", False, f"no bracket: {exc}")]
    return scan_checks(scan)


SUITES: dict[str, Callable[[bool, int], list[CheckResult]]] = {
    "oracle": suite_oracle,
    "neutral": suite_neutral,
    "annealed": suite_annealed_routes,
    "lemma": suite_lemma,
    "asymptotics": suite_asymptotics,
    "jensen": suite_jensen,
    "contact": suite_contact,
    "scales": suite_scales,
    "blocks": suite_blocks,
    "determinism": suite_determinism,
    "scan": suite_scan,
}


def run_suites(full: bool = False, seed: int = 20240601, only: list[str] | None = None) -> list[SuiteReport]:
    reports = []
    for name, suite in SUITES.items():
        if only and name not in only:
            continue
        report = SuiteReport(name)
        try:
            report.results.extend(suite(full, seed))
        except PinningError as exc:
            logger.error("Suite %s aborted: %s", name, exc)
            report.results.append(CheckResult("aborted", False, str(exc)))
        for result in report.results:
            level = logging.INFO if result.passed else logging.ERROR
            logger.log(level, "[%s] %s: %s %s", name, result.name,
                       "ok" if result.passed else "FAILED", result.detail)
        reports.append(report)
    return reports
