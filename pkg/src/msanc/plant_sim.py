"""Simulated acoustic plant: primary path, switchable secondary path, error sensor."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from msanc.dsp_core import FirFilter, design_bandpass
from msanc.errors import ConfigurationError, SequencingError

# Shaping filter for synthetic impulse responses; short so the band edges
# survive the exponential envelope.
_SYNTH_SHAPING_TAPS = 129


@dataclass(frozen=True)
class PathSpec:
    """Recipe for a synthetic secondary-path impulse response."""

    seed: int
    taps: int = 256
    bulk_delay: int = 16
    band: Tuple[float, float] = (80.0, 5000.0)
    decay: float = 16.0
    fs: float = 13000.0


def synth_path(spec: PathSpec) -> np.ndarray:
    """Band-passed seeded Gaussian, exponentially decayed, delayed, peak-normalized."""
    if spec.taps < 1 or spec.bulk_delay < 0 or spec.bulk_delay >= spec.taps:
        raise ConfigurationError(f"need 0 <= bulk_delay < taps, got {spec.bulk_delay}/{spec.taps}")
    if spec.decay <= 0:
        raise ConfigurationError(f"decay must be positive, got {spec.decay}")
    shaping = design_bandpass(spec.band[0], spec.band[1], spec.fs, _SYNTH_SHAPING_TAPS).coeffs
    n = spec.taps - spec.bulk_delay
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal(n + shaping.size - 1)
    body = np.convolve(white, shaping, mode="valid")
    body *= np.exp(-np.arange(n) / spec.decay)
    h = np.concatenate([np.zeros(spec.bulk_delay), body])
    return h / np.max(np.abs(h))


def primary_path(fs: float = 13000.0, band: Tuple[float, float] = (80.0, 5000.0),
                 taps: int = 257, bulk_delay: int = 16) -> np.ndarray:
    """Band-pass primary path preceded by a pure delay."""
    h = design_bandpass(band[0], band[1], fs, taps).coeffs
    return np.concatenate([np.zeros(bulk_delay), h])


def save_path_csv(coeffs, path) -> None:
    """One coefficient per line, full round-trip precision."""
    path = Path(path)
    with path.open("w") as fh:
        for c in np.asarray(coeffs, dtype=np.float64):
            fh.write(f"{c:.17g}\n")


def load_path_csv(path) -> np.ndarray:
    path = Path(path)
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line.split(",")[0]))
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: not a number: {line!r}") from exc
    if not values:
        raise ConfigurationError(f"{path}: no coefficients")
    return np.array(values)


class Plant:
    """Primary path plus a secondary path whose coefficients follow a schedule.

    ``schedule`` is a list of ``(sample_index, path_id)`` with strictly
    increasing indices. A change takes effect at its sample index and swaps
    coefficients only; sound already in the delay line keeps propagating.
    """

    def __init__(self, primary, paths: Dict[str, np.ndarray],
                 schedule: Sequence[Tuple[int, str]]):
        if not schedule:
            raise ConfigurationError("schedule must name at least the initial path")
        idx = [int(i) for i, _ in schedule]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigurationError(f"schedule indices must be strictly increasing: {idx}")
        if idx[0] != 0:
            raise ConfigurationError("schedule must start at sample 0")
        missing = [pid for _, pid in schedule if pid not in paths]
        if missing:
            raise ConfigurationError(f"schedule names unknown paths: {missing}")
        lengths = {len(v) for v in paths.values()}
        if len(lengths) != 1:
            raise ConfigurationError("all secondary paths must have the same length")
        self.paths = {k: np.asarray(v, dtype=np.float64) for k, v in paths.items()}
        self.schedule: List[Tuple[int, str]] = [(int(i), p) for i, p in schedule]
        self.primary = FirFilter(primary)
        self.secondary_active = FirFilter(self.paths[self.schedule[0][1]])
        self.active_path = self.schedule[0][1]
        self._next_change = 1
        self._n = -1

    def step(self, x: float, y: float, n: int) -> Tuple[float, float]:
        if n != self._n + 1:
            raise SequencingError(f"plant expected sample {self._n + 1}, got {n}")
        self._n = n
        while (self._next_change < len(self.schedule)
               and self.schedule[self._next_change][0] <= n):
            self.active_path = self.schedule[self._next_change][1]
            self.secondary_active.set_coeffs(self.paths[self.active_path])
            self._next_change += 1
        d = self.primary.process(x)
        e = d - self.secondary_active.process(y)
        return d, e

    @property
    def secondary_coeffs(self) -> np.ndarray:
        return self.secondary_active.coeffs


def plant_step(pl: Plant, x: float, y: float, n: int) -> Tuple[float, float]:
    """Return ``(d, e)``; ``d`` is for metrics only, never for the controller."""
    return pl.step(x, y, n)
