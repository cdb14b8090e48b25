"""Scenario definition, simulation loop, metrics and result files."""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from msanc.anc_engine import Mode, ModeSwitchingController, SwitchMonitor, Transition
from msanc.baselines import AuxNoiseController, FxlmsController
from msanc.dsp_core import NoiseSource
from msanc.errors import AncError, ConfigurationError, DivergenceFault
from msanc.plant_sim import PathSpec, Plant, load_path_csv, primary_path, synth_path

MSE_FLOOR_DB = -120.0
CONTROLLERS = ("mode_switching", "fxlms", "aux_noise")
ENV_PREFIX = "MSANC_"


@dataclass
class Scenario:
    """Everything a run depends on. Defaults are the Case 1 desk-scale setup."""

    name: str = "case1"
    fs: float = 13000.0
    duration: float = 20.0
    # reference noise
    noise_low: float = 100.0
    noise_high: float = 1000.0
    noise_taps: int = 513
    noise_seed: int = 1
    # primary path
    primary_low: float = 80.0
    primary_high: float = 5000.0
    primary_taps: int = 257
    primary_delay: int = 16
    # secondary paths
    path_taps: int = 256
    path_low: float = 80.0
    path_high: float = 5000.0
    path_decay: float = 16.0
    path1_seed: int = 58
    path1_delay: int = 16
    path2_seed: int = 31
    path2_delay: int = 24
    path1_file: Optional[str] = None
    path2_file: Optional[str] = None
    change_times: Tuple[float, ...] = (8.0,)
    # controller
    controller: str = "mode_switching"
    control_length: int = 512
    mu_w: float = 1e-4
    mu_s: float = 1e-3
    lam: float = 0.999
    alpha: float = 10.0
    beta: float = 1e-7
    n_avg: int = 64
    hysteresis: float = 3.0
    dwell: Optional[int] = None
    rollback: int = 512
    spm_timeout: Optional[float] = None
    # comparators; plain FXLMS keeps the secondary-path delay inside the
    # adaptation loop and diverges at mu_w = 1e-4 on these paths
    baseline_mu_w: float = 5e-5
    aux_variance: float = 0.001
    aux_mu: float = 1e-3
    aux_seed: int = 7
    # reporting
    mse_window: int = 1300
    trace_decimation: int = 1
    steady_window: float = 1.0

    def __post_init__(self):
        self.change_times = tuple(float(t) for t in self.change_times)
        self.validate()

    def validate(self) -> None:
        if self.fs <= 0 or self.duration < 0:
            raise ConfigurationError("fs must be positive and duration non-negative")
        for name in ("mu_w", "mu_s", "baseline_mu_w", "aux_mu", "aux_variance"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0.9 <= self.lam < 1.0):
            raise ConfigurationError(f"lam must lie in [0.9, 1), got {self.lam}")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if any(b <= a for a, b in zip(self.change_times, self.change_times[1:])):
            raise ConfigurationError(f"change_times must be increasing: {self.change_times}")
        if any(t <= 0 for t in self.change_times):
            raise ConfigurationError("change_times must be positive")
        if self.trace_decimation < 1 or self.mse_window < 1 or self.n_avg < 1:
            raise ConfigurationError("trace_decimation, mse_window and n_avg must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.fs * self.duration))

    @property
    def change_samples(self) -> List[int]:
        return [int(round(t * self.fs)) for t in self.change_times]

    @property
    def effective_dwell(self) -> int:
        return self.dwell if self.dwell is not None else 2 * max(self.control_length, self.path_taps)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def case1(**overrides) -> Scenario:
    """Single path change at 8 s of a 20 s run."""
    return Scenario(**{"name": "case1", "duration": 20.0, "change_times": (8.0,), **overrides})


def case2(**overrides) -> Scenario:
    """Paths alternate every 10 s over 40 s."""
    return Scenario(**{"name": "case2", "duration": 40.0,
                       "change_times": (10.0, 20.0, 30.0), **overrides})


CASES = {"case1": case1, "case2": case2}


# --- configuration files -------------------------------------------------

def _field_types() -> Dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(Scenario)}


def _coerce(name: str, raw: str):
    kind = _field_types().get(name)
    if kind is None:
        raise ConfigurationError(f"unknown configuration key {name!r}")
    raw = raw.strip()
    optional = kind.startswith("Optional")
    if optional and raw.lower() in ("", "none"):
        return None
    try:
        if "Tuple" in kind:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if "int" in kind:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc
    return raw


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def scenario_to_config(sc: Scenario) -> str:
    lines = ["[scenario]"]
    for f in dataclasses.fields(Scenario):
        lines.append(f"{f.name} = {_format(getattr(sc, f.name))}")
    return "\n".join(lines) + "\n"


def overrides_from_config(path) -> Dict[str, object]:
    """Read ``key = value`` pairs from the ``[scenario]`` section of an INI file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    if not parser.has_section("scenario"):
        raise ConfigurationError(f"{path}: missing [scenario] section")
    return {k: _coerce(k, v) for k, v in parser.items("scenario")}


def overrides_from_env(environ=None) -> Dict[str, object]:
    """``MSANC_<KEY>`` variables, e.g. ``MSANC_MU_W=2e-4``."""
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            out[name] = _coerce(name, raw)
    return out


def load_scenario(config=None, case: Optional[str] = None, environ=None, **overrides) -> Scenario:
    """Preset < config file < environment < explicit overrides."""
    values: Dict[str, object] = {}
    if config is not None:
        values.update(overrides_from_config(config))
    values.update(overrides_from_env(environ))
    values.update({k: v for k, v in overrides.items() if v is not None})
    preset = case or values.pop("name", None) or "case1"
    values.pop("name", None)
    if preset not in CASES:
        raise ConfigurationError(f"unknown case {preset!r}; choose from {sorted(CASES)}")
    return CASES[preset](**values)


# --- plant & controllers -------------------------------------------------

def scenario_paths(sc: Scenario) -> Dict[str, np.ndarray]:
    paths = {}
    for pid, seed, delay, file in (("path1", sc.path1_seed, sc.path1_delay, sc.path1_file),
                                   ("path2", sc.path2_seed, sc.path2_delay, sc.path2_file)):
        if file:
            h = load_path_csv(file)
        else:
            h = synth_path(PathSpec(seed=seed, taps=sc.path_taps, bulk_delay=delay,
                                    band=(sc.path_low, sc.path_high), decay=sc.path_decay, fs=sc.fs))
        if h.size != sc.path_taps:
            raise ConfigurationError(f"{pid} has {h.size} taps, expected {sc.path_taps}")
        paths[pid] = h
    return paths


def build_plant(sc: Scenario, paths: Optional[Dict[str, np.ndarray]] = None) -> Plant:
    paths = scenario_paths(sc) if paths is None else paths
    schedule = [(0, "path1")]
    for i, n in enumerate(sc.change_samples):
        schedule.append((n, "path2" if i % 2 == 0 else "path1"))
    p = primary_path(sc.fs, (sc.primary_low, sc.primary_high), sc.primary_taps, sc.primary_delay)
    return Plant(p, paths, schedule)


def build_controller(sc: Scenario, s_init: np.ndarray):
    if sc.controller == "fxlms":
        return FxlmsController(sc.control_length, s_init, sc.baseline_mu_w)
    if sc.controller == "aux_noise":
        return AuxNoiseController(sc.control_length, s_init, sc.baseline_mu_w, sc.aux_mu,
                                  sc.aux_variance, sc.aux_seed)
    timeout = None if sc.spm_timeout is None else int(round(sc.spm_timeout * sc.fs))
    monitor = SwitchMonitor(lam=sc.lam, alpha=sc.alpha, beta=sc.beta, n_avg=sc.n_avg,
                            hysteresis=sc.hysteresis, dwell=sc.effective_dwell,
                            spm_timeout=timeout)
    return ModeSwitchingController(sc.control_length, s_init, sc.mu_w, sc.mu_s,
                                   monitor=monitor, rollback=sc.rollback)


# --- metrics -------------------------------------------------------------

def mse_curve(errors, window: int, fs: float = 13000.0) -> np.ndarray:
    """Block MSE in dB: rows of ``(block centre time in s, 10*log10(mean e^2))``.

    Non-overlapping blocks; a trailing partial block is dropped. All-zero
    blocks report the -120 dB floor.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        return np.zeros((0, 2))
    if window < 1 or window > e.size:
        raise ConfigurationError(f"window must be in [1, {e.size}], got {window}")
    nb = e.size // window
    # overflow only happens on a diverged (faulted) record; +inf dB is the honest value
    with np.errstate(divide="ignore", over="ignore"):
        ms = np.mean(e[:nb * window].reshape(nb, window) ** 2, axis=1)
        db = np.maximum(10.0 * np.log10(ms), MSE_FLOOR_DB)
    t = (np.arange(nb) + 0.5) * window / fs
    return np.column_stack([t, db])


def mse_db(errors) -> float:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        return float("nan")
    with np.errstate(over="ignore"):
        m = float(np.mean(e * e))
    return MSE_FLOOR_DB if m <= 0 else max(10.0 * math.log10(m), MSE_FLOOR_DB)


def misalignment(s_true, s_hat) -> float:
    """``10*log10(||s_hat - s||^2 / ||s||^2)``, floored at -120 dB."""
    s = np.asarray(s_true, dtype=np.float64)
    h = np.asarray(s_hat, dtype=np.float64)
    if s.shape != h.shape:
        raise ConfigurationError(f"length mismatch: {s.shape} vs {h.shape}")
    ref = float(s @ s)
    if ref == 0.0:
        raise ConfigurationError("misalignment undefined for an all-zero true path")
    with np.errstate(over="ignore"):  # a diverged estimate reads as +inf dB
        err = float((h - s) @ (h - s))
    return MSE_FLOOR_DB if err == 0.0 else max(10.0 * math.log10(err / ref), MSE_FLOOR_DB)


def band_misalignment(s_true, s_hat, fs: float, band: Tuple[float, float],
                      n_fft: int = 8192) -> float:
    """Misalignment restricted to ``band``: ratio of in-band spectral energies."""
    s = np.asarray(s_true, dtype=np.float64)
    h = np.asarray(s_hat, dtype=np.float64)
    if s.shape != h.shape:
        raise ConfigurationError(f"length mismatch: {s.shape} vs {h.shape}")
    f = np.fft.rfftfreq(n_fft, 1.0 / fs)
    sel = (f >= band[0]) & (f <= band[1])
    S = np.fft.rfft(s, n_fft)[sel]
    D = np.fft.rfft(h - s, n_fft)[sel]
    ref = float(np.sum(np.abs(S) ** 2))
    if ref == 0.0:
        raise ConfigurationError("band misalignment undefined: true path has no in-band energy")
    with np.errstate(over="ignore"):
        err = float(np.sum(np.abs(D) ** 2))
    return MSE_FLOOR_DB if err == 0.0 else max(10.0 * math.log10(err / ref), MSE_FLOOR_DB)


# --- running -------------------------------------------------------------

@dataclass
class RunRecord:
    scenario: Scenario
    e: np.ndarray
    e_inner: np.ndarray
    mode: np.ndarray              # 0 = ANC, 1 = SPM
    t12: np.ndarray
    t21: np.ndarray               # NaN where undefined
    events: List[Transition]
    mse: np.ndarray               # rows of (time s, dB)
    misalignment_blocks: np.ndarray  # rows of (time s, full-band dB, in-band dB)
    s_hat: np.ndarray
    paths: Dict[str, np.ndarray]
    active_path: str
    fault: Optional[str] = None
    fault_sample: Optional[int] = None
    summary: Dict[str, object] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.e.size


def _empty_record(sc: Scenario, paths, s_hat, active) -> RunRecord:
    z = np.zeros(0)
    return RunRecord(sc, z, z.copy(), np.zeros(0, dtype=np.int8), z.copy(), z.copy(), [],
                     np.zeros((0, 2)), np.zeros((0, 3)), s_hat, paths, active)


def run_scenario(sc: Scenario) -> RunRecord:
    """Simulate ``sc`` sample by sample; deterministic in the scenario's seeds.

    A divergence fault stops the run; the record is truncated to the
    samples completed and carries the fault description.
    """
    paths = scenario_paths(sc)
    plant = build_plant(sc, paths)
    ctrl = build_controller(sc, paths["path1"])
    n_total = sc.n_samples
    if n_total == 0:
        rec = _empty_record(sc, paths, ctrl.s_hat.copy(), plant.active_path)
        rec.summary = summarize(rec)
        return rec

    x = NoiseSource.bandlimited(sc.noise_seed, sc.noise_low, sc.noise_high, sc.fs,
                                taps=sc.noise_taps).block(n_total)
    e = np.zeros(n_total)
    inner = np.zeros(n_total)
    mode = np.zeros(n_total, dtype=np.int8)
    t12 = np.full(n_total, np.nan)
    t21 = np.full(n_total, np.nan)
    block = sc.mse_window
    band = (sc.noise_low, sc.noise_high)
    mis_rows = []
    monitor = getattr(ctrl, "monitor", None)
    # Baselines have no monitor; track T12 for the trace with a passive one.
    passive = SwitchMonitor(lam=sc.lam) if monitor is None else None

    fault = None
    fault_sample = None
    n = 0
    try:
        for n in range(n_total):
            xn = x[n]
            y = ctrl.output(xn)
            _, en = plant.step(xn, y, n)
            out = ctrl.update(en)
            e[n] = en
            if out.mode is Mode.SPM:
                mode[n] = 1
                inner[n] = out.e_s
            else:
                inner[n] = out.e_hat
            if monitor is not None:
                t12[n] = out.t12
                if out.t21 is not None:
                    t21[n] = out.t21
            else:
                passive.p_x.update(xn)
                passive.p_e.update(en)
                t12[n] = passive.t12()
            if (n + 1) % block == 0:
                s_true = plant.secondary_coeffs
                s_hat = ctrl.s_hat
                mis_rows.append(((n + 1) / sc.fs, misalignment(s_true, s_hat),
                                 band_misalignment(s_true, s_hat, sc.fs, band)))
        n = n_total
    except DivergenceFault as exc:
        fault = str(exc)
        fault_sample = n
    except AncError as exc:
        fault = f"{type(exc).__name__}: {exc}"
        fault_sample = n

    done = n
    rec = RunRecord(
        scenario=sc,
        e=e[:done],
        e_inner=inner[:done],
        mode=mode[:done],
        t12=t12[:done],
        t21=t21[:done],
        events=list(ctrl.events),
        mse=mse_curve(e[:done], min(block, done), sc.fs) if done else np.zeros((0, 2)),
        misalignment_blocks=np.array(mis_rows).reshape(-1, 3),
        s_hat=ctrl.s_hat.copy(),
        paths=paths,
        active_path=plant.active_path,
        fault=fault,
        fault_sample=fault_sample,
    )
    rec.summary = summarize(rec)
    return rec


def steady_state_mse(rec: RunRecord) -> List[float]:
    """MSE (dB) over the ``steady_window`` seconds before each change and before the end."""
    sc = rec.scenario
    w = int(round(sc.steady_window * sc.fs))
    ends = [n for n in sc.change_samples if n <= rec.n_samples] + [rec.n_samples]
    return [mse_db(rec.e[max(0, k - w):k]) for k in ends if k > 0]


def summarize(rec: RunRecord) -> Dict[str, object]:
    sc = rec.scenario
    out: Dict[str, object] = {
        "scenario": sc.name,
        "controller": sc.controller,
        "samples": rec.n_samples,
        "transitions": len(rec.events),
    }
    if rec.fault:
        out["fault"] = f"{rec.fault} (sample {rec.fault_sample})"
    if rec.n_samples == 0:
        return out
    ss = steady_state_mse(rec)
    out["steady_state_mse_db"] = [round(v, 3) for v in ss]
    changes = [n for n in sc.change_samples if n < rec.n_samples]
    latencies, durations = [], []
    for k, n0 in enumerate(changes):
        n1 = changes[k + 1] if k + 1 < len(changes) else rec.n_samples
        entry = next((ev for ev in rec.events
                      if ev.to_mode is Mode.SPM and n0 <= ev.sample < n1), None)
        if entry is None:
            latencies.append(None)
            durations.append(None)
            continue
        latencies.append((entry.sample - n0) / sc.fs)
        exit_ = next((ev for ev in rec.events
                      if ev.to_mode is Mode.ANC and ev.sample > entry.sample), None)
        durations.append(None if exit_ is None else (exit_.sample - entry.sample) / sc.fs)
    out["detection_latency_s"] = latencies
    out["remodel_duration_s"] = durations
    s_true = rec.paths[rec.active_path]
    out["final_misalignment_db"] = round(misalignment(s_true, rec.s_hat), 3)
    out["final_band_misalignment_db"] = round(
        band_misalignment(s_true, rec.s_hat, sc.fs, (sc.noise_low, sc.noise_high)), 3)
    return out


# --- output files --------------------------------------------------------

def _g(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, ".17g")


def emit_results(rec: RunRecord, out_dir, svg: bool = False) -> List[Path]:
    """Write trace, MSE curve, event log and summary into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        sc = rec.scenario
        written = []
        k = sc.trace_decimation
        p = out / "trace.csv"
        with p.open("w") as fh:
            fh.write("sample,time_s,e,e_inner,mode,t12,t21\n")
            for n in range(0, rec.n_samples, k):
                fh.write(f"{n},{_g(n / sc.fs)},{_g(rec.e[n])},{_g(rec.e_inner[n])},"
                         f"{'SPM' if rec.mode[n] else 'ANC'},{_g(rec.t12[n])},{_g(rec.t21[n])}\n")
        written.append(p)

        p = out / "mse.csv"
        with p.open("w") as fh:
            fh.write("time_s,mse_db\n")
            for t, v in rec.mse:
                fh.write(f"{_g(t)},{_g(v)}\n")
        written.append(p)

        p = out / "events.csv"
        with p.open("w") as fh:
            fh.write("sample,time_s,from_mode,to_mode,t12,t21\n")
            for ev in rec.events:
                fh.write(f"{ev.sample},{_g(ev.sample / sc.fs)},{ev.from_mode.value},"
                         f"{ev.to_mode.value},{_g(ev.t12)},{_g(ev.t21)}\n")
        written.append(p)

        p = out / "s_hat.csv"
        with p.open("w") as fh:
            for c in rec.s_hat:
                fh.write(f"{_g(c)}\n")
        written.append(p)

        p = out / "summary.txt"
        with p.open("w") as fh:
            for key, val in rec.summary.items():
                fh.write(f"{key}: {val}\n")
        written.append(p)

        if svg:
            p = out / "learning_curve.svg"
            plot_learning_curve(rec, p)
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return written


def read_trace(path) -> Dict[str, np.ndarray]:
    """Parse a ``trace.csv`` back into arrays (mode as 0/1)."""
    cols: Dict[str, list] = {}
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
        for name in header:
            cols[name] = []
        for line in fh:
            for name, raw in zip(header, line.rstrip("\n").split(",")):
                if name == "mode":
                    cols[name].append(1 if raw == "SPM" else 0)
                elif name == "sample":
                    cols[name].append(int(raw))
                else:
                    cols[name].append(float(raw) if raw else math.nan)
    return {k: np.array(v) for k, v in cols.items()}


def spm_spans(rec: RunRecord) -> List[Tuple[int, int]]:
    """``[start, stop)`` sample ranges spent in SPM mode."""
    spans = []
    start = None
    for ev in rec.events:
        if ev.to_mode is Mode.SPM:
            start = ev.sample + 1
        elif start is not None:
            spans.append((start, ev.sample + 1))
            start = None
    if start is not None:
        spans.append((start, rec.n_samples))
    return spans


def plot_learning_curve(rec: RunRecord, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sc = rec.scenario
    fig, ax = plt.subplots(figsize=(8, 3.5))
    if rec.mse.size:
        ax.plot(rec.mse[:, 0], rec.mse[:, 1], lw=1.0, color="k")
    for a, b in spm_spans(rec):
        ax.axvspan(a / sc.fs, b / sc.fs, color="tab:orange", alpha=0.3, lw=0)
    for t in sc.change_times:
        ax.axvline(t, color="tab:red", ls="--", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("MSE (dB)")
    ax.set_title(f"{sc.name}: {sc.controller}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
