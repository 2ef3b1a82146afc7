from __future__ import annotations

import math

import numpy as np
import pytest

from disorder import DisorderModel, lambda_v, log_mgf, mc_log_mgf, replica_seed, sample
from errors import InvalidSpec

MODELS = [
    DisorderModel("gaussian"),
    DisorderModel("rademacher"),
    DisorderModel("uniform_centered"),
    DisorderModel("shifted_bernoulli", 0.2),
]


def test_gaussian_log_mgf():
    assert log_mgf(DisorderModel("gaussian"), 1.3) == pytest.approx(0.5 * 1.3**2)


@pytest.mark.parametrize("t", [-3.0, -0.1, 0.5, 1.0, 20.0])
def test_rademacher_is_log_cosh(t):
    assert log_mgf(DisorderModel("rademacher"), t) == pytest.approx(math.log(math.cosh(t)), rel=1e-13)


@pytest.mark.parametrize("model", MODELS + [DisorderModel("zero")], ids=lambda m: m.family)
def test_log_mgf_vanishes_at_zero(model):
    assert log_mgf(model, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("t", [5e-5, 2e-4, 0.3, 4.0])
def test_uniform_log_mgf(t):
    a = math.sqrt(3.0) * t
    assert log_mgf(DisorderModel("uniform_centered"), t) == pytest.approx(math.log(math.sinh(a) / a), rel=1e-9, abs=1e-15)


def test_shifted_bernoulli_is_standardized():
    model = DisorderModel("shifted_bernoulli", 0.2)
    h = 1e-4
    # cumulants from the log-MGF: first is the mean, second the variance
    mean = (log_mgf(model, h) - log_mgf(model, -h)) / (2 * h)
    var = (log_mgf(model, h) - 2 * log_mgf(model, 0.0) + log_mgf(model, -h)) / h**2
    assert mean == pytest.approx(0.0, abs=1e-6)
    assert var == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
def test_log_mgf_is_convex(model):
    grid = np.linspace(-3.0, 3.0, 13)
    for s in grid:
        for t in grid:
            mid = log_mgf(model, 0.5 * (s + t))
            assert mid <= 0.5 * (log_mgf(model, s) + log_mgf(model, t)) + 1e-12


def test_lambda_v_values():
    assert lambda_v(DisorderModel("gaussian"), 1.0) == pytest.approx(1.0)
    rad = lambda_v(DisorderModel("rademacher"), 1.0)
    assert rad == pytest.approx(math.log(math.cosh(2.0)) - 2 * math.log(math.cosh(1.0)))
    assert rad >= 0


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
def test_lambda_v_nonnegative_and_vanishing(model):
    for beta in (1e-6, 0.01, 0.5, 1.0, 3.0):
        assert lambda_v(model, beta) >= 0.0
    assert lambda_v(model, 1e-6) < 1e-10


def test_lambda_v_needs_positive_beta():
    with pytest.raises(InvalidSpec):
        lambda_v(DisorderModel("gaussian"), 0.0)


def test_unknown_family_and_bad_p():
    with pytest.raises(InvalidSpec):
        DisorderModel("cauchy")
    with pytest.raises(InvalidSpec):
        DisorderModel("shifted_bernoulli", 1.0)


def test_sample_is_deterministic_and_read_only():
    model = DisorderModel("gaussian")
    a = sample(model, 42, 3, 1000)
    b = sample(model, 42, 3, 1000)
    assert np.array_equal(a.values, b.values)
    assert (a.seed, a.replica_index) == (42, 3)
    with pytest.raises(ValueError):
        a.values[0] = 1.0


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
def test_shorter_sample_is_a_prefix(model):
    short = sample(model, 7, 1, 500).values
    long = sample(model, 7, 1, 5000).values
    assert np.array_equal(short, long[:500])


def test_replicas_differ():
    model = DisorderModel("gaussian")
    first = [tuple(sample(model, 11, i, 8).values) for i in range(100)]
    assert len(set(first)) == 100
    assert len({replica_seed(11, i) for i in range(100)}) == 100


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
def test_sample_moments(model):
    n = 1_000_000
    values = sample(model, 2024, 0, n).values
    assert abs(values.mean()) < 4.0 / math.sqrt(n)
    assert abs(values.var() - 1.0) < 0.01


def test_zero_family_samples_zeros():
    assert not np.any(sample(DisorderModel("zero"), 1, 0, 10).values)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_monte_carlo_log_mgf(beta):
    model = DisorderModel("gaussian")
    estimate, stderr = mc_log_mgf(model, beta, 1_000_000, seed=99)
    assert abs(estimate - log_mgf(model, beta)) < 3.0 * stderr
