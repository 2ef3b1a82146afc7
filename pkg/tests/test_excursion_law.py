from __future__ import annotations

import io
import math

import numpy as np
import pytest

from errors import HorizonExceeded, InvalidSpec, NonConvergent, NonSummable
from excursion_law import (
    PhiSpec,
    build_law,
    constant_phi,
    law_from_preset,
    log_power_phi,
    psi_integral,
    srw2d_shift,
    table_phi,
    write_law_dump,
)


def test_harmonic_law_is_rejected():
    with pytest.raises(NonSummable):
        build_law(1.0, constant_phi(1.0), 100)


def test_log_power_needs_alpha_above_one_at_c_one():
    with pytest.raises(NonSummable):
        build_law(1.0, log_power_phi(1.0, 1.0), 100)


@pytest.mark.parametrize("kwargs", [{"K": 0.0}, {"K": -1.0}, {"alpha": 0.0}, {"shift": -1.0}])
def test_nonpositive_parameters_are_invalid(kwargs):
    params = {"K": 1.0, "alpha": 2.0, "shift": math.e} | kwargs
    with pytest.raises(InvalidSpec):
        PhiSpec("log_power", **params)


def test_loop_exponent_below_one_is_invalid():
    with pytest.raises(InvalidSpec):
        build_law(0.5, log_power_phi(), 100)


def test_table_must_be_normalized():
    with pytest.raises(InvalidSpec):
        build_law(1.0, table_phi([0.5, 0.4]), 10)


def test_log_power_law_is_normalized():
    law = build_law(1.0, log_power_phi(1.0, 2.0, math.e), 10_000)
    total = law.masses[1:].sum() + law.tails[law.n_max]
    assert total == pytest.approx(1.0, abs=1e-12)
    assert law.tails[0] == 1.0
    assert np.all(np.diff(law.tails) <= 0)


def test_first_mass_matches_partial_sum_oracle():
    law = build_law(1.0, log_power_phi(1.0, 2.0, math.e), 10_000)
    n = np.arange(1, 10_000_001, dtype=float)
    partial = float(np.sum(1.0 / (n * np.log(n + math.e) ** 2)))
    # integral of 1/(x log^2 x) beyond the cut is 1/log x
    oracle = partial + 1.0 / math.log(10_000_000.5)
    expected_p1 = math.log(1.0 + math.e) ** -2 / oracle
    assert law.mass(1) == pytest.approx(expected_p1, rel=1e-7)


def test_tails_are_running_subtractions(srw2d_law, table_law):
    for law in (srw2d_law, table_law):
        assert law.tails[0] == 1.0
        assert np.array_equal(law.tails[1:], law.tails[:-1] - law.masses[1:])
        for n in (1, 2, law.n_max):
            assert law.tail(n) == law.tail(n - 1) - law.mass(n)
    assert np.all(table_law.tails[3:] == 0.0)
    assert np.array_equal(srw2d_law.exact_tails(srw2d_law.n_max), srw2d_law.tails)


def test_table_lookups(table_law):
    assert table_law.mass(2) == pytest.approx(0.3)
    assert table_law.tail(0) == 1.0
    assert table_law.tail(2) == pytest.approx(0.2)
    assert table_law.mass(50) == 0.0
    assert table_law.tail(50) == 0.0


def test_partial_sums_telescope(srw2d_law):
    n_max = srw2d_law.n_max
    total = sum(srw2d_law.mass(n) for n in range(1, n_max + 1))
    assert total == pytest.approx(1.0 - srw2d_law.tail(n_max), abs=1e-12)


def test_srw2d_preset_has_unit_normalizer(srw2d_law):
    s0 = srw2d_shift()
    assert srw2d_law.normalizer == pytest.approx(1.0, abs=1e-9)
    for n in (1, 7, 100, 1999, 50_000):
        assert srw2d_law.mass(n) * n * math.log(n + s0) ** 2 / math.pi == pytest.approx(
            1.0 / srw2d_law.normalizer, rel=1e-12
        )


def test_mass_continues_beyond_horizon(srw2d_law):
    n = srw2d_law.n_max
    assert srw2d_law.mass(n + 1) == pytest.approx(srw2d_law.masses[n], rel=1e-2)
    assert srw2d_law.tail(n + 1) == pytest.approx(srw2d_law.tails[n] - srw2d_law.mass(n + 1), rel=1e-9)


def test_table_law_is_zero_beyond_support(table_law, srw2d_law):
    assert table_law.tail_model == "zero beyond support"
    assert table_law.mass(table_law.n_max + 3) == 0.0
    assert table_law.tail(table_law.n_max + 3) == 0.0
    assert "phi(x)" in srw2d_law.tail_model


def test_tail_is_slowly_varying(srw2d_law):
    ratio = srw2d_law.tail(2_000_000) / srw2d_law.tail(1_000_000)
    assert 0.9 <= ratio <= 1.1


@pytest.mark.parametrize("n", [10**6, 10**8])
def test_tail_matches_inverse_log(srw2d_law, n):
    assert srw2d_law.tail(n) * math.log(n) / math.pi == pytest.approx(1.0, rel=1e-3)


def test_check_horizon(table_law):
    with pytest.raises(HorizonExceeded):
        table_law.check_horizon(table_law.n_max + 1)


@pytest.mark.parametrize("t", np.linspace(0.5, 40.0, 20))
def test_psi_closed_form_alpha_two(t):
    phi = log_power_phi(2.5, 2.0, 0.0)
    assert psi_integral(phi, t) == pytest.approx(2.5 / t, rel=1e-8)


@pytest.mark.parametrize("t", [0.5, 2.0, 10.0, 100.0])
def test_psi_closed_form_alpha_three(t):
    phi = log_power_phi(math.pi, 3.0, 0.0)
    assert psi_integral(phi, t) == pytest.approx(math.pi / (2.0 * t * t), rel=1e-8)


def test_psi_is_decreasing():
    phi = log_power_phi(math.pi, 2.0, math.e)
    values = [psi_integral(phi, t) for t in (0.5, 1.0, 5.0, 50.0, 500.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_psi_diverges_for_constant_phi():
    with pytest.raises(NonConvergent):
        psi_integral(constant_phi(1.0), 3.0)


def test_power_preset_needs_c_above_one():
    with pytest.raises(NonSummable):
        law_from_preset("power", 100, c=1.0)
    law = law_from_preset("power", 100, c=1.5)
    assert law.masses[1:].sum() + law.tails[100] == pytest.approx(1.0, abs=1e-12)


def test_unknown_preset():
    with pytest.raises(InvalidSpec):
        law_from_preset("levy", 100)


def test_phi_effective_folds_normalizer():
    law = build_law(1.0, log_power_phi(1.0, 2.0, math.e), 100)
    phi = law.phi_effective
    for n in (1, 10, 100):
        assert law.mass(n) == pytest.approx(phi.evaluate(n) / n, rel=1e-12)


def test_law_dump_format(table_law):
    out = io.StringIO()
    write_law_dump(table_law, out)
    lines = out.getvalue().splitlines()
    assert len(lines) == table_law.n_max
    assert lines[0] == "1 0.5 0.5"
    assert lines[1].startswith("2 0.29999999999999999 ")
