"""Sample-by-sample DSP building blocks.

FIR filtering over a tapped delay line, windowed-sinc band-pass design,
seeded band-limited Gaussian noise, and the recursive power and slope
estimators used by the mode-switching monitor.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from msanc.errors import ConfigurationError, SignalChainError


class DelayLine:
    """Fixed-length history buffer, most recent sample first.

    Backed by a mirrored buffer of twice the length so that ``view()`` is a
    contiguous slice and pushing is O(1).
    """

    def __init__(self, length: int):
        if length < 1:
            raise ConfigurationError(f"delay line length must be positive, got {length}")
        self.length = int(length)
        self._buf = np.zeros(2 * self.length)
        self._pos = 0

    def push(self, value: float) -> None:
        pos = self._pos - 1
        if pos < 0:
            pos += self.length
        self._buf[pos] = value
        self._buf[pos + self.length] = value
        self._pos = pos

    def view(self) -> np.ndarray:
        """Read-only view ``[v(n), v(n-1), ..., v(n-L+1)]``."""
        return self._buf[self._pos:self._pos + self.length]

    def clear(self) -> None:
        self._buf[:] = 0.0
        self._pos = 0

    def __len__(self) -> int:
        return self.length


class FirFilter:
    """FIR filter with its own tapped delay line.

    Coefficients may be replaced between samples (``set_coeffs``) without
    touching the delay-line contents.
    """

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=np.float64).ravel()
        if c.size == 0:
            raise ConfigurationError("FIR filter needs at least one tap")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("FIR coefficients must be finite")
        self.coeffs = c
        self._line = DelayLine(c.size)

    @property
    def length(self) -> int:
        return self.coeffs.size

    @property
    def delay_line(self) -> np.ndarray:
        return self._line.view()

    def set_coeffs(self, coeffs) -> None:
        c = np.asarray(coeffs, dtype=np.float64).ravel()
        if c.size != self.coeffs.size:
            raise ConfigurationError(
                f"coefficient swap must keep length {self.coeffs.size}, got {c.size}")
        self.coeffs = c.copy()

    def process(self, x_in: float) -> float:
        if not math.isfinite(x_in):
            raise SignalChainError(f"non-finite filter input: {x_in!r}")
        self._line.push(x_in)
        return float(self.coeffs @ self._line.view())

    def process_block(self, xs) -> np.ndarray:
        """Filter a block, continuing from (and updating) the delay line.

        Equivalent to calling :meth:`process` per sample, up to rounding.
        """
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return np.zeros(0)
        if not np.all(np.isfinite(xs)):
            raise SignalChainError("non-finite sample in filter input block")
        L = self.length
        history = self._line.view()[:L - 1][::-1]  # oldest first
        ext = np.concatenate([history, xs])
        out = np.convolve(ext, self.coeffs, mode="valid")
        for v in ext[-L:]:
            self._line.push(v)
        return out

    def reset(self) -> None:
        self._line.clear()


def fir_process(f: FirFilter, x_in: float) -> float:
    """Push ``x_in`` and return ``sum_k coeffs[k] * x(n-k)``."""
    return f.process(x_in)


def design_bandpass(low_hz: float, high_hz: float, fs: float, taps: int) -> FirFilter:
    """Linear-phase Hamming-windowed-sinc band-pass filter.

    The sinc cutoffs sit slightly outside ``[low_hz, high_hz]`` (2% of the
    Hamming transition width) so the requested edges stay at or above -6 dB.
    Gain is normalized to 1 at the geometric band centre.
    """
    if taps < 1 or taps % 2 == 0:
        raise ConfigurationError(f"taps must be a positive odd integer, got {taps}")
    if not (0 < low_hz < high_hz < fs / 2):
        raise ConfigurationError(
            f"band edges must satisfy 0 < low < high < fs/2, got ({low_hz}, {high_hz}) at fs={fs}")
    guard = 0.02 * 3.3 * fs / taps
    f1 = max(low_hz - guard, 0.5 * low_hz) / fs
    f2 = min(high_hz + guard, 0.5 * (high_hz + fs / 2)) / fs
    m = np.arange(taps) - (taps - 1) / 2
    win = np.hamming(taps)
    # Difference of two unit-DC-gain low-passes, so DC cancels exactly.
    lp2 = np.sinc(2 * f2 * m) * win
    lp1 = np.sinc(2 * f1 * m) * win
    h = lp2 / lp2.sum() - lp1 / lp1.sum()
    fc = math.sqrt(low_hz * high_hz) / fs
    gain = abs(np.sum(h * np.exp(-2j * np.pi * fc * np.arange(taps))))
    return FirFilter(h / gain)


def freq_response(coeffs, freqs_hz, fs: float) -> np.ndarray:
    """Complex response of an FIR at the given frequencies (direct DTFT)."""
    c = np.asarray(coeffs, dtype=np.float64)
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    k = np.arange(c.size)
    return np.exp(-2j * np.pi * np.outer(f / fs, k)) @ c


class NoiseSource:
    """Seeded Gaussian noise shaped by an FIR and scaled to unit variance.

    White samples are drawn from ``numpy.random.default_rng(seed)`` in
    fixed-size blocks, so the output depends only on the seed.
    """

    BLOCK = 8192

    def __init__(self, seed: int, shaping: Optional[FirFilter] = None, gain: Optional[float] = None):
        self.seed = int(seed)
        self.shaping = shaping
        if gain is None:
            gain = 1.0 if shaping is None else 1.0 / math.sqrt(float(shaping.coeffs @ shaping.coeffs))
        self.gain = float(gain)
        self._rng = np.random.default_rng(self.seed)
        self._buf = np.zeros(0)
        self._idx = 0
        if shaping is not None:
            # Discard the start-up transient: output is stationary from sample 0.
            shaping.process_block(self._rng.standard_normal(shaping.length - 1))

    @classmethod
    def bandlimited(cls, seed: int, low_hz: float, high_hz: float, fs: float, taps: int = 513) -> "NoiseSource":
        return cls(seed, design_bandpass(low_hz, high_hz, fs, taps))

    def _refill(self) -> None:
        white = self._rng.standard_normal(self.BLOCK)
        if self.shaping is not None:
            white = self.shaping.process_block(white)
        self._buf = self.gain * white
        self._idx = 0

    def next(self) -> float:
        if self._idx >= self._buf.size:
            self._refill()
        v = self._buf[self._idx]
        self._idx += 1
        return float(v)

    def block(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._idx >= self._buf.size:
                self._refill()
            take = min(n - filled, self._buf.size - self._idx)
            out[filled:filled + take] = self._buf[self._idx:self._idx + take]
            self._idx += take
            filled += take
        return out


def noise_next(src: NoiseSource) -> float:
    return src.next()


class PowerEstimator:
    """Exponentially weighted power: ``P(n) = lam*P(n-1) + (1-lam)*v(n)^2``."""

    def __init__(self, lam: float, value: float = 0.0):
        if not (0.9 <= lam < 1.0):
            raise ConfigurationError(f"forgetting factor must lie in [0.9, 1), got {lam}")
        self.lam = float(lam)
        self.value = float(value)

    def update(self, sample: float) -> float:
        self.value = self.lam * self.value + (1.0 - self.lam) * sample * sample
        return self.value

    def reset(self, value: float = 0.0) -> None:
        self.value = float(value)


def power_update(p: PowerEstimator, sample: float) -> float:
    return p.update(sample)


class SlopeEstimator:
    """Smoothed slope of the squared error,
    ``(1/N) sum_{i<N} e(n-i) * (e(n-i) - e(n-i-1))``.

    Returns ``None`` until N+1 samples have been seen since the last reset.
    """

    def __init__(self, n_avg: int):
        if n_avg < 1:
            raise ConfigurationError(f"slope window must be positive, got {n_avg}")
        self.n_avg = int(n_avg)
        self._window = DelayLine(self.n_avg + 1)
        self._seen = 0

    def update(self, e_s: float) -> Optional[float]:
        self._window.push(e_s)
        self._seen += 1
        if self._seen <= self.n_avg:
            return None
        w = self._window.view()
        cur = w[:-1]
        return float(cur @ (cur - w[1:])) / self.n_avg

    def reset(self) -> None:
        self._window.clear()
        self._seen = 0

    @property
    def warmed_up(self) -> bool:
        return self._seen > self.n_avg


def slope_update(s: SlopeEstimator, e_s: float) -> Optional[float]:
    return s.update(e_s)
