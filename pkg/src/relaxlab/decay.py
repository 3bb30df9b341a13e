"""Power-law fits of norm histories and the decay report container."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class FloorContaminationError(ValueError):
    """Raised when a series reaches zero or negative values (roundoff floor)."""


def fit_decay_exponent(times, values, window: Optional[Sequence[float]] = None):
    """Least-squares slope of ``log(value)`` against ``log(t)``.

    Returns ``(exponent, residual)`` where the residual is the RMS deviation
    of the log-data from the fitted line.
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if window is not None:
        sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
        t, v = t[sel], v[sel]
    if t.size < 6:
        raise ValueError(f"need at least 6 samples in the fit window, got {t.size}")
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise FloorContaminationError(
            "nonpositive values in the fit window: the series hit the roundoff floor")
    lt, lv = np.log(t), np.log(v)
    coef = np.polyfit(lt, lv, 1)
    resid = float(np.sqrt(np.mean((lv - np.polyval(coef, lt)) ** 2)))
    return float(coef[0]), resid


@dataclass
class DecayRow:
    """One norm history with its fitted and theoretical exponents.

    ``bound`` is ``"band"`` when the fitted exponent must sit within
    ``tolerance`` of the theoretical one (with an RMS fit residual of at most
    0.1), ``"upper"`` when it only has to be at least as steep
    (``fitted <= theoretical + tolerance`` on the whole window and on its
    late half), and ``"info"`` for reference rows that carry no pass
    criterion.
    """

    variable: str
    beta: int
    p: float
    times: np.ndarray
    values: np.ndarray
    theoretical: Optional[float]
    tolerance: float = 0.1
    bound: str = "band"
    window: Optional[tuple] = None
    label: str = ""
    fitted: Optional[float] = None
    residual: Optional[float] = None
    error: Optional[str] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float)
        if self.fitted is None:
            try:
                self.fitted, self.residual = fit_decay_exponent(
                    self.times, self.values, self.window)
            except ValueError as exc:
                self.error = str(exc)

    @property
    def passed(self) -> Optional[bool]:
        if self.bound == "info" or self.theoretical is None:
            return None
        if self.fitted is None:
            return False
        if self.bound == "upper":
            # a one-sided bound tolerates curvature as long as the late part
            # of the window is at least as steep as the bound
            late = self.late_slope()
            return bool(self.fitted <= self.theoretical + self.tolerance
                        and late is not None and late <= self.theoretical + self.tolerance)
        if self.residual > 0.1:
            return False
        return bool(abs(self.fitted - self.theoretical) <= self.tolerance)

    def late_slope(self) -> Optional[float]:
        """Slope fitted on the upper half (in log t) of the window."""
        lo, hi = (self.times[self.times > 0].min(), self.times.max()) \
            if self.window is None else self.window
        try:
            return fit_decay_exponent(self.times, self.values, (np.sqrt(lo * hi), hi))[0]
        except ValueError:
            return None

    @property
    def name(self) -> str:
        p = "inf" if np.isinf(self.p) else f"{self.p:g}"
        return self.label or f"{self.variable}|beta={self.beta}|p={p}"

    def summary(self) -> dict:
        return {
            "name": self.name,
            "variable": self.variable,
            "beta": int(self.beta),
            "p": "inf" if np.isinf(self.p) else float(self.p),
            "fitted": self.fitted,
            "theoretical": self.theoretical,
            "tolerance": self.tolerance,
            "bound": self.bound,
            "residual": self.residual,
            "window": None if self.window is None else [float(w) for w in self.window],
            "pass": self.passed,
            "error": self.error,
        }


@dataclass
class DecayReport:
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def add(self, row: DecayRow) -> DecayRow:
        self.rows.append(row)
        return row

    def row(self, name: str) -> DecayRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        flags = [r.passed for r in self.rows if r.passed is not None]
        return all(flags) and all(self.checks.values())

    def summary(self) -> dict:
        return {"provenance": self.provenance,
                "rows": [r.summary() for r in self.rows],
                "checks": {k: bool(v) for k, v in self.checks.items()},
                "pass": self.passed}

    def csv_text(self) -> str:
        lines = ["variable,beta,p,t,value"]
        for r in self.rows:
            p = "inf" if np.isinf(r.p) else f"{r.p:g}"
            var = r.label or r.variable
            for t, v in zip(r.times, r.values):
                lines.append(f"{var},{r.beta},{p},{t:.17g},{v:.17g}")
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str = "decay") -> list:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        csv = d / f"{stem}.csv"
        csv.write_text(self.csv_text())
        js = d / f"{stem}.json"
        js.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return [csv, js]

    def table(self) -> str:
        out = []
        for r in self.rows:
            f = "nan" if r.fitted is None else f"{r.fitted:+.3f}"
            th = "-" if r.theoretical is None else f"{r.theoretical:+.3f}"
            flag = {True: "PASS", False: "FAIL", None: "info"}[r.passed]
            out.append(f"{r.name:32s} fitted {f}  theory {th}  {flag}")
        for k, v in self.checks.items():
            out.append(f"{k:32s} {'PASS' if v else 'FAIL'}")
        return "\n".join(out)
