import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from diukit.forcing import (DriveSignal, ForcingError, KickSchedule, RngStream, apply_kick,
                            empty_schedule, meal_square_driver, periodic_schedule,
                            poisson_schedule, read_schedule_csv, uniform_amplitude_schedule)
from diukit.model import REFERENCE_STATE, UltradianState


def test_periodic_examples():
    s = periodic_schedule(2.0, 20.0, 3)
    assert list(s.times) == [0.0, 20.0, 40.0]
    assert list(s.amplitudes) == [2.0, 2.0, 2.0]
    z = periodic_schedule(0.0, 10.0, 5)
    assert len(z) == 5 and np.all(z.amplitudes == 0)
    big = periodic_schedule(50.0, 200.0, 1000)
    assert big.times[-1] == 199800.0
    assert np.all(np.diff(big.times) == 200.0)


@pytest.mark.parametrize("bad", [0.0, -5.0])
def test_periodic_rejects_nonpositive_T(bad):
    with pytest.raises(ForcingError):
        periodic_schedule(1.0, bad, 3)


def test_poisson_moments_and_ks():
    s = poisson_schedule(10.0, 20.0, 10_000, RngStream(7, 0))
    gaps = np.diff(np.concatenate([[0.0], s.times]))
    assert s.times[0] > 0
    assert 19.4 <= gaps.mean() <= 20.6
    assert 377 <= gaps.var(ddof=1) <= 423
    ks = stats.kstest(gaps, stats.expon(scale=20.0).cdf)
    # 1% critical value of the one-sample KS statistic
    assert ks.statistic < 1.63 / np.sqrt(len(gaps))


def test_poisson_determinism_and_stream_independence():
    a = poisson_schedule(1.0, 20.0, 100, RngStream(3, 5))
    b = poisson_schedule(1.0, 20.0, 100, RngStream(3, 5))
    c = poisson_schedule(1.0, 20.0, 100, RngStream(3, 6))
    assert a == b
    assert not np.array_equal(a.times, c.times)


def test_uniform_amplitudes():
    s = uniform_amplitude_schedule(45.0, 55.0, 20.0, 10_000, RngStream(11, 0))
    assert 49.91 <= s.amplitudes.mean() <= 50.09
    assert 7.9 <= s.amplitudes.var(ddof=1) <= 8.7
    assert s.amplitudes.min() >= 45 and s.amplitudes.max() <= 55
    d = uniform_amplitude_schedule(50.0, 50.0, 20.0, 10, RngStream(1, 0))
    assert d == periodic_schedule(50.0, 20.0, 10)
    with pytest.raises(ForcingError):
        uniform_amplitude_schedule(55.0, 45.0, 20.0, 10, RngStream(1, 0))


@pytest.mark.parametrize("make", [
    lambda: periodic_schedule(3.0, 17.0, 40),
    lambda: poisson_schedule(3.0, 17.0, 40, RngStream(2**63 + 5, 9)),
    lambda: uniform_amplitude_schedule(1.0, 4.0, 17.0, 40, RngStream(99, 3)),
])
def test_regenerate_from_descriptor_is_bit_exact(make):
    s = make()
    r = s.regenerate()
    assert r.times.tobytes() == s.times.tobytes()
    assert r.amplitudes.tobytes() == s.amplitudes.tobytes()
    assert r.end == s.end


def test_schedule_invariants():
    with pytest.raises(ForcingError):
        KickSchedule(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 5.0)
    with pytest.raises(ForcingError):
        KickSchedule(np.array([0.0]), np.array([-1.0]), 5.0)
    s = periodic_schedule(1.0, 10.0, 3)
    with pytest.raises(ValueError):
        s.times[0] = 4.0


def test_schedule_csv_roundtrip(tmp_path):
    s = poisson_schedule(2.5, 13.0, 25, RngStream(4, 1))
    f = tmp_path / "s.csv"
    s.to_csv(f)
    assert f.read_text().splitlines()[0] == "n,time_min,amplitude"
    r = read_schedule_csv(f, end=s.end)
    assert r == s


def test_meal_driver():
    d = meal_square_driver(100.0, 1)
    assert [p[0] for p in d.pulses] == [480.0, 720.0, 1080.0]
    assert d(495.0) == 100.0 and d(600.0) == 0.0
    assert d(480.0) == 100.0 and d(510.0) == 0.0
    total = sum((b - a) * lv for a, b, lv in d.pulses)
    assert total == 90 * 100.0
    d3 = meal_square_driver(7.0, 3)
    assert len(d3.pulses) == 9 and d3.pulses[-1][0] == 2 * 1440 + 1080


def test_drive_pieces_split_at_endpoints():
    d = meal_square_driver(10.0, 2)
    pieces = d.pieces(0.0, 2880.0)
    cuts = [a for a, _, _ in pieces[1:]]
    assert cuts == list(d.endpoints)
    for a, b, lv in pieces:
        assert d(0.5 * (a + b)) == lv
    assert DriveSignal(3.0).pieces(0.0, 5.0) == [(0.0, 5.0, 3.0)]
    with pytest.raises(ForcingError):
        DriveSignal(0.0, ((0.0, 10.0, 1.0), (5.0, 15.0, 1.0)))


def test_apply_kick():
    s = UltradianState(1.0, 2.0, 100.0, 4.0, 5.0, 6.0)
    k = apply_kick(s, 10.0)
    assert k.G == 110.0 and (k.I_p, k.I_i, k.h1, k.h2, k.h3) == (1.0, 2.0, 4.0, 5.0, 6.0)
    assert apply_kick(s, 0.0) == s


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_kick_additivity_and_off_axis_identity(a1, a2):
    y = np.array(REFERENCE_STATE)
    two = apply_kick(apply_kick(y, a1), a2)
    one = apply_kick(y, a1 + a2)
    assert two[2] == pytest.approx(one[2], rel=1e-15)
    assert np.array_equal(np.delete(two, 2), np.delete(y, 2))


def test_empty_schedule():
    s = empty_schedule(100.0)
    assert len(s) == 0 and list(s.cycle_bounds()) == [100.0]
