import math

import numpy as np
import pytest

from lvpp.schedules import (
    Arithmetic,
    DoubleExp,
    Factorial,
    Fixed,
    Geometric,
    PracticalDoubleExp,
    ScheduleError,
    classify_order,
    parse_schedule,
    theoretical_error_ratio,
)


def take(schedule, k):
    return [schedule.next_alpha() for _ in range(k)]


def test_practical_double_exponential_benchmark_row():
    sched = PracticalDoubleExp(1.5, 1.5, alpha1=1.0, cap=1e10)
    alphas = take(sched, 11)
    assert alphas[0] == 1.0
    assert alphas[1] == pytest.approx(1.0)       # floor engages at k = 2
    assert alphas[2] == pytest.approx(1.49, abs=5e-3)
    assert alphas[3] == pytest.approx(2.43, abs=5e-2)
    assert alphas[4] == pytest.approx(5.35, abs=5e-2)
    assert alphas[10] == 1e10                    # cap engages


def test_all_alphas_positive_and_unsummable():
    for sched in (
        Arithmetic(1.0, 0),
        Arithmetic(0.5, 2),
        Geometric(1.0, 2.0),
        Factorial(1.0),
        DoubleExp(1.5, 1.5),
        PracticalDoubleExp(1.5, 1.5),
    ):
        alphas = take(sched, 100)
        assert all(a > 0 for a in alphas)
        partial = np.cumsum(alphas)
        # unbounded growth: each doubling of k multiplies the sum by ~2 or
        # more (even once a cap makes the tail linear), so no convergent tail
        assert partial[99] > 1.9 * partial[49]
        assert partial[49] > 1.9 * partial[24]


def test_factorial_partial_sum_identity_exact():
    sched = Factorial(1.0)
    total = 0
    for k in range(1, 13):
        total += k * math.factorial(k)
        assert sched.partial_sum(k) == total == math.factorial(k + 1) - 1


def test_double_exp_telescoping_partial_sums():
    sched = DoubleExp(1.5, 1.5, cap=1e30)
    running = 0.0
    for k in range(1, 13):
        running += sched.next_alpha()
        closed = 1.5 ** (1.0 / 0.5 + 1.5 ** (k - 1))
        assert running == pytest.approx(closed, rel=1e-10)


def test_theoretical_error_ratios_closed_forms():
    assert theoretical_error_ratio(Geometric(1.0, 2.0), 1) == pytest.approx(1 / 3, abs=1e-12)
    for k in (1, 2, 5, 9):
        mu = 2.0
        assert theoretical_error_ratio(Geometric(1.0, mu), k) == pytest.approx(
            (mu**k - 1) / (mu ** (k + 1) - 1), abs=1e-12
        )
        assert theoretical_error_ratio(DoubleExp(1.5, 1.5), k) == pytest.approx(1.5, abs=1e-12)
        assert theoretical_error_ratio(Arithmetic(1.0, 0), k) == pytest.approx(
            k / (k + 2), abs=1e-12
        )
        assert theoretical_error_ratio(Fixed(2.0), k) == pytest.approx(k / (k + 1), abs=1e-12)
    assert theoretical_error_ratio(Arithmetic(1.0, 0), 10**6) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ScheduleError):
        theoretical_error_ratio(PracticalDoubleExp(1.5, 1.5), 3)


def test_classify_order():
    assert classify_order([1.0, 0.999, 1.001, 1.0, 0.9995]).kind == "sublinear"
    out = classify_order([0.7, 0.6, 0.52, 0.5, 0.5, 0.5])
    assert out.kind == "linear"
    assert out.rate == pytest.approx(0.5, abs=1e-6)
    ratios = [theoretical_error_ratio(DoubleExp(1.5, 1.5), k) for k in range(1, 8)]
    out = classify_order(ratios, q=1.5)
    assert out.kind == "superlinear"
    assert out.order == 1.5
    assert out.rate == pytest.approx(1.5, abs=1e-9)
    assert classify_order([0.5, 0.2, 0.05, 0.01, 0.001]).kind == "superlinear"
    with pytest.raises(ScheduleError):
        classify_order([1.0, 1.0])


def test_parse_schedule_grammar():
    assert isinstance(parse_schedule("fixed:1.0"), Fixed)
    geo = parse_schedule("geo:2.0")
    assert isinstance(geo, Geometric) and geo.mu == 2.0
    ar = parse_schedule("arith:1:0")
    assert isinstance(ar, Arithmetic) and ar.C == 1.0 and ar.m == 0
    assert isinstance(parse_schedule("fact:1.0"), Factorial)
    dx = parse_schedule("dexp:1.5,1.5")
    assert isinstance(dx, PracticalDoubleExp) and dx.r == 1.5 and dx.q == 1.5
    for bad in ("nope:1", "geo:", "dexp:0.5,2"):
        with pytest.raises(ScheduleError):
            parse_schedule(bad)


def test_validation_errors():
    for bad in (lambda: Fixed(0.0), lambda: Geometric(1.0, 1.0), lambda: Factorial(-1.0),
                lambda: DoubleExp(1.0, 1.5), lambda: PracticalDoubleExp(1.5, 1.5, alpha1=0.0)):
        with pytest.raises(ScheduleError):
            bad()


def test_reset():
    sched = Geometric(1.0, 2.0)
    first = take(sched, 3)
    sched.reset()
    assert take(sched, 3) == first
