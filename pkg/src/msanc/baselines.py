"""Reference controllers for comparison runs.

* plain FXLMS with a fixed secondary-path estimate;
* FXLMS with auxiliary white-noise online secondary-path modeling
  (the classic injected-noise scheme, no power scheduling or VSS).

Both expose the same ``output(x)`` / ``update(e)`` loop interface as
:class:`msanc.anc_engine.ModeSwitchingController`.
"""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from msanc.anc_engine import ControlFilter, Mode, StepOutput, Transition
from msanc.dsp_core import DelayLine, NoiseSource
from msanc.errors import ConfigurationError, DivergenceFault


def fxlms_step(cf: ControlFilter, s_hat: np.ndarray, e: float) -> None:
    """Standard FXLMS update on the measured error; ``cf.output`` must already have run."""
    x_hat = float(s_hat @ cf.reference(s_hat.size))
    cf.xf_line.push(x_hat)
    if not math.isfinite(e):
        raise DivergenceFault("non-finite error in FXLMS update")
    if e != 0.0 and cf.mu_w != 0.0:
        cf.w_hat += (cf.mu_w * e) * cf.xf_line.view()
    cf.w[:] = cf.w_hat


class AuxNoiseSpm:
    """Online secondary-path estimate driven by injected white noise."""

    def __init__(self, s_init, mu_aux: float, variance: float = 0.001, seed: int = 7):
        # variance 0 is accepted (no excitation, estimate frozen); scenarios require > 0
        if variance < 0:
            raise ConfigurationError(f"auxiliary noise variance must be non-negative, got {variance}")
        if mu_aux < 0:
            raise ConfigurationError(f"mu_aux must be non-negative, got {mu_aux}")
        self.s_hat = np.array(s_init, dtype=np.float64).ravel()
        self.mu_aux = float(mu_aux)
        self.variance = float(variance)
        self.v_source = NoiseSource(seed, shaping=None, gain=math.sqrt(variance))
        self.v_line = DelayLine(self.s_hat.size)

    def inject(self, y_ctrl: float) -> float:
        """Draw ``v(n)`` and return the loudspeaker drive ``y_ctrl + v``."""
        v = self.v_source.next()
        self.v_line.push(v)
        return y_ctrl + v

    def update(self, e: float) -> float:
        """Adapt on ``e - s_hat * v`` and return that modeling error."""
        vv = self.v_line.view()
        e_model = e - float(self.s_hat @ vv)
        if not math.isfinite(e_model):
            raise DivergenceFault("non-finite modeling error in auxiliary-noise SPM")
        if self.mu_aux != 0.0:
            self.s_hat += (self.mu_aux * e_model) * vv
        return e_model


def aux_spm_step(a: AuxNoiseSpm, y_ctrl: float, plant_error) -> Tuple[float, float]:
    """Convenience wrapper: ``plant_error(y_total)`` must return the plant's ``e``."""
    y_total = a.inject(y_ctrl)
    e = plant_error(y_total)
    return y_total, a.update(e)


class FxlmsController:
    """Plain FXLMS with a fixed secondary-path estimate."""

    def __init__(self, control_length: int, s_hat, mu_w: float):
        self._s_hat = np.array(s_hat, dtype=np.float64).ravel()
        self.cf = ControlFilter(control_length, mu_w, ref_history=self._s_hat.size)
        self.events: List[Transition] = []

    mode = Mode.ANC

    @property
    def s_hat(self) -> np.ndarray:
        return self._s_hat

    def output(self, x: float) -> float:
        return self.cf.output(x)

    def update(self, e: float) -> StepOutput:
        fxlms_step(self.cf, self._s_hat, e)
        return StepOutput(y=self.cf.y, e=e, mode=Mode.ANC, e_hat=e)


class AuxNoiseController:
    """FXLMS whose filtered reference uses an auxiliary-noise online estimate."""

    def __init__(self, control_length: int, s_init, mu_w: float, mu_aux: float,
                 variance: float = 0.001, seed: int = 7):
        self.aux = AuxNoiseSpm(s_init, mu_aux, variance, seed)
        self.cf = ControlFilter(control_length, mu_w, ref_history=self.aux.s_hat.size)
        self.events: List[Transition] = []
        self.last_e_model = 0.0

    mode = Mode.ANC

    @property
    def s_hat(self) -> np.ndarray:
        return self.aux.s_hat

    def output(self, x: float) -> float:
        return self.aux.inject(self.cf.output(x))

    def update(self, e: float) -> StepOutput:
        fxlms_step(self.cf, self.aux.s_hat, e)
        self.last_e_model = self.aux.update(e)
        return StepOutput(y=self.cf.y, e=e, mode=Mode.ANC, e_hat=e)
