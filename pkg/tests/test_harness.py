from __future__ import annotations

import io
import math

import pytest

from annealed import annealed_log_z_dp, u_c_annealed
from errors import InconclusiveBracket, InvalidSpec
from harness import (
    RESULT_COLUMNS,
    ResultRow,
    estimate_fq,
    estimate_grid,
    render_csv,
    scan_critical_point,
    write_output,
)


def _row(**changes) -> ResultRow:
    values = dict(beta=1.0, u=-0.25, delta=0.25, N=100, replicas=4, fq_hat=0.1, stderr=0.01,
                  fa=0.2, M=5.0, log_M=math.log(5.0), contact_fraction_hat=0.3, wallclock=1.5)
    values.update(changes)
    return ResultRow(**values)


def test_neutral_replicas_have_zero_spread(srw2d_law, zero_disorder):
    row = estimate_fq(srw2d_law, zero_disorder, 1.0, 0.0, 500, 4, seed=3)
    assert row.fq_hat == 0.0
    assert row.stderr == 0.0
    assert not row.pinned
    assert row.fa == 0.0
    assert math.isinf(row.log_M)


def test_single_replica_has_zero_stderr(srw2d_law, gaussian):
    row = estimate_fq(srw2d_law, gaussian, 1.0, -0.3, 200, 1, seed=3)
    assert row.stderr == 0.0


def test_quenched_stays_below_annealed(srw2d_law, gaussian):
    beta, N = 1.0, 1000
    for u in (-0.3, 0.0, 0.5):
        row = estimate_fq(srw2d_law, gaussian, beta, u, N, 16, seed=5)
        annealed = annealed_log_z_dp(srw2d_law, beta * row.delta, N)
        assert row.fq_hat * beta * N <= annealed + 3.0 * row.stderr * beta * N


def test_rows_are_monotone_in_u(srw2d_law, gaussian):
    u_values = [-1.0, -0.6, -0.2, 0.2]
    rows = estimate_grid(srw2d_law, gaussian, 1.0, u_values, [400], 6, seed=8)
    values = [r.fq_hat for r in rows]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_grid_is_u_major_and_matches_single_points(srw2d_law, gaussian):
    rows = estimate_grid(srw2d_law, gaussian, 1.0, [-0.4, 0.1], [100, 300], 5, seed=21)
    assert [(r.u, r.N) for r in rows] == [(-0.4, 100), (-0.4, 300), (0.1, 100), (0.1, 300)]
    single = estimate_fq(srw2d_law, gaussian, 1.0, 0.1, 300, 5, seed=21)
    assert single.fq_hat == pytest.approx(rows[3].fq_hat, rel=1e-12, abs=1e-15)
    assert single.stderr == pytest.approx(rows[3].stderr, rel=1e-9, abs=1e-15)


def test_results_do_not_depend_on_threads(srw2d_law, gaussian):
    args = (srw2d_law, gaussian, 0.8, [-0.5, 0.0], [50, 150], 7)
    one = estimate_grid(*args, seed=4, threads=1)
    many = estimate_grid(*args, seed=4, threads=4)
    assert render_csv(one) == render_csv(many)


def test_bad_grids(srw2d_law, gaussian):
    with pytest.raises(InvalidSpec):
        estimate_grid(srw2d_law, gaussian, 1.0, [0.0], [300, 100], 2, seed=1)
    with pytest.raises(InvalidSpec):
        estimate_fq(srw2d_law, gaussian, 1.0, 0.0, 100, 0, seed=1)


def test_strong_pinning_is_detected(srw2d_law, gaussian):
    u = u_c_annealed(gaussian, 1.0) + 1.0
    row = estimate_fq(srw2d_law, gaussian, 1.0, u, 2000, 16, seed=13)
    assert row.fq_hat > 10.0 * row.stderr
    assert row.pinned
    assert row.contact_fraction_hat > 0.0


def test_doubling_replicas_shrinks_stderr(srw2d_law, gaussian):
    u = u_c_annealed(gaussian, 1.0)
    small, large = [], []
    for trial in range(10):
        small.append(estimate_fq(srw2d_law, gaussian, 1.0, u, 200, 16, seed=100 + trial).stderr)
        large.append(estimate_fq(srw2d_law, gaussian, 1.0, u, 200, 32, seed=100 + trial).stderr)
    ratio = sum(small) / sum(large)
    assert ratio == pytest.approx(math.sqrt(2.0), rel=0.2)


def test_scan_without_pinned_points_is_inconclusive(srw2d_law, gaussian):
    uc = u_c_annealed(gaussian, 1.0)
    with pytest.raises(InconclusiveBracket):
        scan_critical_point(srw2d_law, gaussian, 1.0, [uc - 3.0, uc - 2.5], [200, 400], 4, seed=2)


def test_scan_brackets_the_threshold(srw2d_law, gaussian):
    uc = u_c_annealed(gaussian, 1.0)
    scan = scan_critical_point(srw2d_law, gaussian, 1.0, [uc + 2.0, uc - 3.0], [200, 800], 6, seed=2)
    assert scan.bracket.N == 800
    assert scan.bracket.lower == uc - 3.0
    assert scan.bracket.upper == uc + 2.0
    assert [b.N for b in scan.brackets_by_N] == [200, 800]
    assert scan.summary_line().startswith("uc_a=")
    assert scan.uc_annealed == pytest.approx(-0.5)


def test_csv_layout():
    text = render_csv([_row(), _row(log_M=math.inf, M=math.inf)])
    lines = text.split("\n")
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert "\r" not in text
    assert text.endswith("\n")
    first = lines[1].split(",")
    assert first[RESULT_COLUMNS.index("wallclock")] == "nan"
    assert first[RESULT_COLUMNS.index("stderr")] == "0.01"
    assert first[RESULT_COLUMNS.index("u")] == "-0.25"
    assert lines[2].split(",")[RESULT_COLUMNS.index("M_or_logM")] == "inf"


def test_csv_timing_column():
    text = render_csv([_row()], timing=True)
    assert text.split("\n")[1].split(",")[-1] == "1.5"


def test_write_output(tmp_path):
    target = tmp_path / "out" / "scan.csv"
    write_output("a,b\n1,2\n", target)
    assert target.read_bytes() == b"a,b\n1,2\n"
    stream = io.StringIO()
    write_output("x\n", None, stream)
    assert stream.getvalue() == "x\n"
