import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxlab.decay import DecayReport, DecayRow, FloorContaminationError, fit_decay_exponent


def test_exact_power_law():
    t = np.geomspace(1.0, 100.0, 20)
    slope, resid = fit_decay_exponent(t, 1.0 / t)
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)


def test_perturbed_power_law():
    t = np.geomspace(1.0, 1000.0, 40)
    slope, _ = fit_decay_exponent(t, 3 * t**-0.5 * (1 + 0.01 * np.sin(np.log(t))))
    assert -0.52 <= slope <= -0.48


def test_constant_series():
    t = np.geomspace(2.0, 50.0, 10)
    slope, resid = fit_decay_exponent(t, np.full_like(t, 7.0))
    assert slope == pytest.approx(0.0, abs=1e-12) and resid == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-3.0, 1.0), st.floats(1e-3, 1e3))
def test_slope_recovered(k, c):
    t = np.geomspace(1.0, 50.0, 12)
    assert fit_decay_exponent(t, c * t**k)[0] == pytest.approx(k, abs=1e-9)


def test_floor_and_sample_errors():
    t = np.geomspace(1.0, 10.0, 8)
    v = 1.0 / t
    v[-1] = 0.0
    with pytest.raises(FloorContaminationError):
        fit_decay_exponent(t, v)
    with pytest.raises(ValueError, match="6 samples"):
        fit_decay_exponent(t[:5], 1.0 / t[:5])
    with pytest.raises(ValueError, match="6 samples"):
        fit_decay_exponent(t, 1.0 / t, window=(5.0, 10.0))


def test_window_selection():
    t = np.geomspace(1.0, 100.0, 41)
    v = np.where(t < 10, t**-2.0, 1e-2 * (t / 10) ** -0.5)
    assert fit_decay_exponent(t, v, (10.0, 100.0))[0] == pytest.approx(-0.5, abs=1e-12)


def test_band_row_semantics():
    t = np.geomspace(1.0, 100.0, 20)
    assert DecayRow("u", 0, 2, t, t**-0.3, -0.25, 0.1).passed is True
    assert DecayRow("u", 0, 2, t, t**-0.5, -0.25, 0.1).passed is False
    # a curved series fails the residual gate even with a matching mean slope
    curved = np.exp(-0.25 * np.log(t) + 0.4 * np.sin(3 * np.log(t)))
    row = DecayRow("u", 0, 2, t, curved, -0.25, 0.3)
    assert row.residual > 0.1 and row.passed is False


def test_upper_row_semantics():
    t = np.geomspace(1.0, 100.0, 20)
    assert DecayRow("d", 0, 2, t, t**-2.0, -1.0, 0.1, "upper").passed is True
    assert DecayRow("d", 0, 2, t, t**-0.5, -1.0, 0.1, "upper").passed is False
    # steep start but a flat tail: the whole-window slope passes, the late slope does not
    v = np.where(t < 10, t**-3.0, 1e-3)
    row = DecayRow("d", 0, 2, t, v, -1.0, 0.1, "upper")
    assert row.fitted < -1.0 and row.late_slope() > -0.9 and row.passed is False
    assert DecayRow("u", 0, 2, t, t**-0.5, -1.0, 0.1, "info").passed is None


def test_failed_fit_is_recorded():
    t = np.geomspace(1.0, 10.0, 8)
    row = DecayRow("u", 0, 2, t, np.zeros_like(t), -1.0)
    assert row.fitted is None and "floor" in row.error and row.passed is False


def test_report_csv_and_json(tmp_path):
    t = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    rep = DecayReport()
    rep.add(DecayRow("u", 1, np.inf, t, 1 / 3.0 / t, -1.0))
    rep.checks["extra"] = True
    csv, js = rep.write(tmp_path)
    lines = csv.read_text().splitlines()
    assert lines[0] == "variable,beta,p,t,value"
    assert lines[1] == "u,1,inf,1,0.33333333333333331"
    assert float(lines[2].split(",")[-1]) == 1 / 3.0 / 2.0
    assert rep.passed
    assert '"pass": true' in js.read_text()
    assert "PASS" in rep.table()
    with pytest.raises(KeyError):
        rep.row("missing")
