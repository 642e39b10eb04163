"""Quantitative feedback-quality criteria.

Step responses are summarized by the four classic error integrals (IAE,
ISE, ITAE, ITSE), percent overshoot, and 10-90% rise time. Trajectory
tracking is summarized by the directed nearest-point RMS between executed
and planned paths (the RMS member of the Hausdorff family; the classical
max-Hausdorff is reported alongside for reference) and by the absolute
position error at landing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

_trapz = getattr(np, "trapezoid", np.trapz)


class MetricsError(ValueError):
    """Raised when a log cannot support the requested criterion."""


@dataclass(frozen=True)
class ResponseLog:
    """Uniformly sampled single-axis reference/response pair."""

    t: np.ndarray
    ref: np.ndarray
    resp: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        ref = np.asarray(self.ref, dtype=float)
        resp = np.asarray(self.resp, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "ref", ref)
        object.__setattr__(self, "resp", resp)
        if len(t) < 2 or len(ref) != len(t) or len(resp) != len(t):
            raise MetricsError("log needs at least two equal-length samples")
        if not (np.isfinite(t).all() and np.isfinite(ref).all()
                and np.isfinite(resp).all()):
            raise MetricsError("log contains non-finite samples")
        steps = np.diff(t)
        if np.abs(steps - steps[0]).max() > 1e-9:
            raise MetricsError("log must be uniformly sampled")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass
class MetricsReport:
    """Per-response summary; trajectory fields stay None for step runs."""

    iae: float
    ise: float
    itae: float
    itse: float
    overshoot_pct: float
    rise_time: float
    hausdorff_rms: float | None = None
    hausdorff_max: float | None = None
    landing_error: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {
            "IAE": self.iae,
            "ISE": self.ise,
            "ITAE": self.itae,
            "ITSE": self.itse,
            "PO_pct": self.overshoot_pct,
            "rise_time_s": self.rise_time,
            "hausdorff_rms_m": self.hausdorff_rms,
            "hausdorff_max_m": self.hausdorff_max,
            "landing_error_m": self.landing_error,
        }


def _onset_index(log: ResponseLog, t0: float) -> int:
    if t0 < log.t[0] - 1e-9 or t0 > log.t[-1] + 1e-9:
        raise MetricsError(f"step onset {t0} lies outside the log")
    return int(np.searchsorted(log.t, t0 - 1e-9))


def integral_criteria(
    log: ResponseLog, t0: float
) -> tuple[float, float, float, float]:
    """IAE, ISE, ITAE, ITSE of ref - resp over [t0, end], trapezoidal rule.

    Time weights are measured from the step onset, so the criteria are
    invariant to shifting the whole log in absolute time.
    """
    i0 = _onset_index(log, t0)
    if i0 >= len(log.t) - 1:
        raise MetricsError("no samples after the step onset")
    tau = log.t[i0:] - t0
    e = log.ref[i0:] - log.resp[i0:]
    abs_e = np.abs(e)
    sq_e = e * e
    iae = float(_trapz(abs_e, tau))
    ise = float(_trapz(sq_e, tau))
    itae = float(_trapz(tau * abs_e, tau))
    itse = float(_trapz(tau * sq_e, tau))
    return iae, ise, itae, itse


def _step_amplitude(log: ResponseLog, i0: int) -> float:
    """Reference step size: final reference minus the pre-step response."""
    return float(log.ref[-1] - log.resp[i0])


def overshoot(log: ResponseLog, t0: float) -> float:
    """Percent overshoot, signed toward the step direction.

    The settled value is the mean of the last 10% of the hold window;
    excursions beyond it in the step direction count, undershoot does not.
    """
    i0 = _onset_index(log, t0)
    amplitude = _step_amplitude(log, i0)
    if amplitude == 0:
        raise MetricsError("zero step amplitude")
    sign = math.copysign(1.0, amplitude)
    directed = sign * log.resp[i0:]
    n_tail = max(1, len(directed) // 10)
    final = float(np.mean(directed[-n_tail:]))
    peak = float(np.max(directed))
    return 100.0 * max(0.0, (peak - final) / abs(amplitude))


def rise_time(log: ResponseLog, t0: float) -> float:
    """Time from 10% to 90% of the step amplitude, linearly interpolated."""
    i0 = _onset_index(log, t0)
    amplitude = _step_amplitude(log, i0)
    if amplitude == 0:
        raise MetricsError("zero step amplitude")
    base = float(log.resp[i0])
    sign = math.copysign(1.0, amplitude)
    progress = sign * (log.resp[i0:] - base)
    span = abs(amplitude)
    t = log.t[i0:]

    t10 = _first_crossing(t, progress, 0.1 * span)
    t90 = _first_crossing(t, progress, 0.9 * span)
    if t90 is None:
        raise MetricsError("unsettled response: 90% threshold never reached")
    if t10 is None:
        # 90% reached without a detected 10% crossing can only happen on
        # the very first sample; treat onset as the 10% time.
        t10 = float(t[0])
    return t90 - t10


def _first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float | None:
    above = y >= level
    if above[0]:
        return float(t[0])
    idx = np.argmax(above)
    if not above[idx]:
        return None
    y0, y1 = y[idx - 1], y[idx]
    frac = (level - y0) / (y1 - y0) if y1 != y0 else 1.0
    return float(t[idx - 1] + frac * (t[idx] - t[idx - 1]))


def hausdorff_rms(planned: np.ndarray, executed: np.ndarray) -> float:
    """RMS of each executed point's distance to the nearest planned point.

    A directed measure: permuting or densifying the planned set never
    changes which neighbor is nearest, and identical paths score zero.
    """
    planned = np.asarray(planned, dtype=float)
    executed = np.asarray(executed, dtype=float)
    if planned.size == 0 or executed.size == 0:
        raise MetricsError("empty trajectory")
    d, _ = cKDTree(planned).query(executed)
    return float(np.sqrt(np.mean(d * d)))


def hausdorff_max(planned: np.ndarray, executed: np.ndarray) -> float:
    """Classical symmetric Hausdorff distance (max of directed maxima)."""
    planned = np.asarray(planned, dtype=float)
    executed = np.asarray(executed, dtype=float)
    if planned.size == 0 or executed.size == 0:
        raise MetricsError("empty trajectory")
    d_pe, _ = cKDTree(planned).query(executed)
    d_ep, _ = cKDTree(executed).query(planned)
    return float(max(d_pe.max(), d_ep.max()))


def landing_error(reported_final: np.ndarray, truth_final: np.ndarray) -> float:
    """Euclidean distance between reported and true final positions."""
    reported = np.asarray(reported_final, dtype=float)
    truth = np.asarray(truth_final, dtype=float)
    if not (np.isfinite(reported).all() and np.isfinite(truth).all()):
        raise MetricsError("non-finite landing positions")
    return float(np.linalg.norm(reported - truth))


def step_report(log: ResponseLog, t0: float) -> MetricsReport:
    """All step-response criteria for one log in a single report."""
    iae, ise, itae, itse = integral_criteria(log, t0)
    return MetricsReport(
        iae=iae,
        ise=ise,
        itae=itae,
        itse=itse,
        overshoot_pct=overshoot(log, t0),
        rise_time=rise_time(log, t0),
    )
