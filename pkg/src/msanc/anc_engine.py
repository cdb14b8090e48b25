"""Modified FXLMS controller with mode-switching online secondary-path modeling.

Per sample the caller does::

    y = ctrl.output(x)            # control signal from the copied weights w
    d, e = plant.step(x, y, n)    # physical error at the error sensor
    out = ctrl.update(e)          # adapt (ANC or SPM mode), monitor, switch

In ANC mode the dummy filter ``w_hat`` adapts on the estimated residual
``e_hat = d_hat - w_hat . x_hat`` with ``d_hat = e + s_hat * y`` and is
copied into ``w`` every sample. In SPM mode ``w`` is frozen and the
secondary-path estimate adapts on the inner error
``e_s = e - s_prev * y + s_hat * y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from msanc.dsp_core import DelayLine, PowerEstimator, SlopeEstimator
from msanc.errors import ConfigurationError, DivergenceFault

EPS = 1e-12


class Mode(str, Enum):
    ANC = "ANC"
    SPM = "SPM"


class ControlFilter:
    """Adaptive FIR controller.

    ``w_hat`` is the dummy filter that adapts; ``w`` is the copy that
    generates the control signal. ``x_line`` holds the raw reference (long
    enough to also feed the secondary-path estimate), ``xf_line`` the
    filtered reference.
    """

    def __init__(self, length: int, mu_w: float, ref_history: Optional[int] = None):
        if length < 1:
            raise ConfigurationError(f"control filter length must be positive, got {length}")
        if mu_w < 0:
            raise ConfigurationError(f"mu_w must be non-negative, got {mu_w}")
        self.length = int(length)
        self.mu_w = float(mu_w)
        self.w_hat = np.zeros(self.length)
        self.w = np.zeros(self.length)
        self.x_line = DelayLine(max(self.length, ref_history or 0))
        self.xf_line = DelayLine(self.length)
        self.y = 0.0

    def output(self, x: float) -> float:
        """Push ``x(n)`` and return ``y(n) = w . [x(n), ..., x(n-L_w+1)]``."""
        self.x_line.push(x)
        y = float(self.w @ self.x_line.view()[:self.length])
        if not math.isfinite(y):
            raise DivergenceFault("non-finite control signal (controller weights diverged)")
        self.y = y
        return y

    def reference(self, n_taps: int) -> np.ndarray:
        return self.x_line.view()[:n_taps]


class SecondaryPathModel:
    """Adaptive secondary-path estimate ``s_hat`` and its frozen snapshot ``s_prev``."""

    def __init__(self, s_init, mu_s: float):
        s = np.array(s_init, dtype=np.float64).ravel()
        if s.size == 0 or not np.all(np.isfinite(s)):
            raise ConfigurationError("initial secondary-path estimate must be finite and non-empty")
        if mu_s < 0:
            raise ConfigurationError(f"mu_s must be non-negative, got {mu_s}")
        self.s_hat = s
        self.s_prev = s.copy()
        self.mu_s = float(mu_s)
        self.y_line = DelayLine(s.size)

    @property
    def length(self) -> int:
        return self.s_hat.size

    def snapshot(self) -> None:
        self.s_prev = self.s_hat.copy()


@dataclass(slots=True)
class StepOutput:
    y: float
    e: float
    mode: Mode
    e_hat: Optional[float] = None
    e_s: Optional[float] = None
    t12: float = float("nan")
    t21: Optional[float] = None

    @property
    def inner_error(self) -> float:
        return self.e_hat if self.mode is Mode.ANC else self.e_s


def anc_step(cf: ControlFilter, spm: SecondaryPathModel, e_measured: float) -> StepOutput:
    """One modified-FXLMS adaptation step; ``cf.output`` must already have run."""
    y = cf.y
    spm.y_line.push(y)
    d_hat = e_measured + float(spm.s_hat @ spm.y_line.view())
    x_hat = float(spm.s_hat @ cf.reference(spm.length))
    cf.xf_line.push(x_hat)
    xf = cf.xf_line.view()
    e_hat = d_hat - float(cf.w_hat @ xf)
    if not math.isfinite(e_hat):
        raise DivergenceFault("non-finite estimated residual in ANC mode")
    if e_hat != 0.0 and cf.mu_w != 0.0:
        cf.w_hat += (cf.mu_w * e_hat) * xf
    cf.w[:] = cf.w_hat
    return StepOutput(y=y, e=e_measured, mode=Mode.ANC, e_hat=e_hat)


def spm_step(cf: ControlFilter, spm: SecondaryPathModel, e_measured: float) -> StepOutput:
    """One online secondary-path modeling step with the controller frozen."""
    y = cf.y
    spm.y_line.push(y)
    yv = spm.y_line.view()
    # e - s_prev*y + s_hat*y, grouped so that s_hat == s_prev gives e exactly
    e_s = e_measured + float((spm.s_hat - spm.s_prev) @ yv)
    if not math.isfinite(e_s):
        raise DivergenceFault("non-finite modeling error in SPM mode")
    x_hat = float(spm.s_hat @ cf.reference(spm.length))
    if spm.mu_s != 0.0:
        spm.s_hat -= (spm.mu_s * e_s) * yv
    cf.xf_line.push(x_hat)
    return StepOutput(y=y, e=e_measured, mode=Mode.SPM, e_s=e_s)


@dataclass
class SwitchMonitor:
    """Divergence / remodel-complete detector with arming and dwell.

    ``alpha`` is in dB; ``hysteresis`` is the margin above ``alpha`` that
    T12 must exceed (in ANC mode) before a drop below ``alpha`` counts.
    ``spm_timeout`` (samples, ``None`` disables) restarts the SPM cycle
    when T21 never settles.
    """

    lam: float = 0.999
    alpha: float = 10.0
    beta: float = 1e-7
    n_avg: int = 64
    hysteresis: float = 3.0
    dwell: int = 1024
    spm_timeout: Optional[int] = None
    mode: Mode = Mode.ANC
    armed: bool = False
    dwell_remaining: int = field(init=False)
    spm_elapsed: int = field(default=0, init=False)
    spm_restarts: int = field(default=0, init=False)

    def __post_init__(self):
        if self.dwell < 0:
            raise ConfigurationError(f"dwell must be non-negative, got {self.dwell}")
        if self.beta <= 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        self.p_x = PowerEstimator(self.lam)
        self.p_e = PowerEstimator(self.lam)
        self.slope = SlopeEstimator(self.n_avg)
        self.dwell_remaining = self.dwell

    def t12(self) -> float:
        ratio = self.p_x.value / max(self.p_e.value, EPS)
        if not ratio > 0.0:  # no reference power yet, or P_e overflowed
            return -math.inf
        return 10.0 * math.log10(ratio)


def monitor_update(m: SwitchMonitor, x: float, e: float,
                   e_s: Optional[float] = None) -> Tuple[float, Optional[float]]:
    """Advance power and slope estimators; return ``(T12 dB, T21 or None)``."""
    m.p_x.update(x)
    m.p_e.update(e)
    t12 = m.t12()
    t21 = None
    if m.mode is Mode.SPM and e_s is not None:
        t21 = m.slope.update(e_s)
    elif (m.mode is Mode.ANC and m.dwell_remaining == 0
          and t12 > m.alpha + m.hysteresis):
        # Not during dwell: right after start-up P_e is still zero while the
        # disturbance travels the primary path, which would read as huge T12.
        m.armed = True
    return t12, t21


def mode_transition(m: SwitchMonitor, spm: SecondaryPathModel, t12: float,
                    t21: Optional[float]) -> Mode:
    if m.dwell_remaining > 0:
        m.dwell_remaining -= 1
    if m.mode is Mode.ANC:
        if m.armed and t12 < m.alpha and m.dwell_remaining == 0:
            spm.snapshot()
            m.slope.reset()
            m.mode = Mode.SPM
            m.dwell_remaining = m.dwell
            m.spm_elapsed = 0
    else:
        m.spm_elapsed += 1
        if t21 is not None and abs(t21) < m.beta and m.dwell_remaining == 0:
            m.mode = Mode.ANC
            m.armed = False
            m.dwell_remaining = m.dwell
        elif m.spm_timeout is not None and m.spm_elapsed >= m.spm_timeout:
            # s_prev stays: the modeling target is only unbiased while it
            # matches the estimate the frozen controller converged with.
            m.slope.reset()
            m.dwell_remaining = m.dwell
            m.spm_elapsed = 0
            m.spm_restarts += 1
    return m.mode


@dataclass
class Transition:
    sample: int
    from_mode: Mode
    to_mode: Mode
    t12: float
    t21: Optional[float]


class ModeSwitchingController:
    """Modified FXLMS with mode-switching online secondary-path modeling.

    Args:
        control_length: taps of the control filter (L_w).
        s_init: initial secondary-path estimate; its length sets L_s.
        mu_w: controller step size.
        mu_s: secondary-path modeling step size.
        monitor: switching monitor; defaults to the standard thresholds with
            a dwell of ``2 * max(L_w, L_s)`` samples.
        rollback: if positive, on entry to SPM mode the frozen controller is
            restored from a snapshot at least this many samples old. The
            divergence is only detected some tens of samples after the path
            change, and the weights adapted in that interval (against the
            wrong secondary-path estimate) would otherwise bias the modeling.
    """

    SNAPSHOT_INTERVAL = 256
    SNAPSHOTS_KEPT = 8

    def __init__(self, control_length: int, s_init, mu_w: float, mu_s: float,
                 monitor: Optional[SwitchMonitor] = None, rollback: int = 0):
        if rollback < 0:
            raise ConfigurationError(f"rollback must be non-negative, got {rollback}")
        if rollback > self.SNAPSHOT_INTERVAL * (self.SNAPSHOTS_KEPT - 1):
            raise ConfigurationError(
                f"rollback {rollback} exceeds the snapshot history "
                f"({self.SNAPSHOT_INTERVAL * (self.SNAPSHOTS_KEPT - 1)} samples)")
        self.rollback = int(rollback)
        self.spm = SecondaryPathModel(s_init, mu_s)
        self.cf = ControlFilter(control_length, mu_w, ref_history=self.spm.length)
        if monitor is None:
            monitor = SwitchMonitor(dwell=2 * max(control_length, self.spm.length))
        self.monitor = monitor
        self.events: List[Transition] = []
        self._snapshots: List[Tuple[int, np.ndarray]] = []
        self._x = 0.0
        self._n = -1

    @property
    def mode(self) -> Mode:
        return self.monitor.mode

    @property
    def s_hat(self) -> np.ndarray:
        return self.spm.s_hat

    def output(self, x: float) -> float:
        self._x = x
        return self.cf.output(x)

    def _record_snapshot(self) -> None:
        if self._n % self.SNAPSHOT_INTERVAL == 0:
            self._snapshots.append((self._n, self.cf.w.copy()))
            del self._snapshots[:-self.SNAPSHOTS_KEPT]

    def _roll_back(self) -> None:
        old = [w for k, w in self._snapshots if self._n - k >= self.rollback]
        if old:
            self.cf.w[:] = old[-1]
            self.cf.w_hat[:] = old[-1]
        self._snapshots.clear()

    def update(self, e: float) -> StepOutput:
        """Adapt on the measured error ``e(n)`` and run the mode logic."""
        if not math.isfinite(e):
            raise DivergenceFault(f"non-finite measured error at sample {self._n + 1}")
        self._n += 1
        m = self.monitor
        if m.mode is Mode.ANC:
            out = anc_step(self.cf, self.spm, e)
        else:
            out = spm_step(self.cf, self.spm, e)
        t12, t21 = monitor_update(m, self._x, e, out.e_s)
        out.t12 = t12
        out.t21 = t21
        before = m.mode
        after = mode_transition(m, self.spm, t12, t21)
        if self.rollback and before is Mode.ANC:
            if after is Mode.SPM:
                self._roll_back()
            else:
                self._record_snapshot()
        if after is not before:
            self.events.append(Transition(self._n, before, after, t12, t21))
        return out
