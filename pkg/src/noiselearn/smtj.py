"""Two-level junction physics and telegraph-trace statistics.

Covers the thermally activated dwell-time law, continuous-time simulation of
two-level switching sampled onto a uniform grid, series composition of
several junctions into multilevel noise, and the analysis side: normalized
autocorrelation, dwell-time estimation with a hysteresis detector, and a
two-state hidden-Markov fit of a measured trace.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import AnalysisError, DomainError, FormatError, ShapeError

STATE_LOW = "low"
STATE_HIGH = "high"


@dataclass(frozen=True)
class TelegraphParams:
    """Physical parameters of one fluctuating junction.

    ``eb_over_kt`` is the barrier-to-thermal-energy ratio per state
    (low, high); an asymmetric pair encodes a field bias.
    """

    tau0: float
    eb_over_kt: tuple[float, float]
    level_low: float
    level_high: float

    def __post_init__(self):
        if self.tau0 <= 0:
            raise DomainError(f"attempt time must be positive, got {self.tau0}")
        if len(self.eb_over_kt) != 2 or min(self.eb_over_kt) < 0:
            raise DomainError(f"eb_over_kt must be two non-negative values, got {self.eb_over_kt}")
        if not self.level_low < self.level_high:
            raise DomainError(f"require level_low < level_high, got {self.level_low}, {self.level_high}")


@dataclass(eq=False)
class TelegraphTrace:
    """A sampled voltage time series with its sampling rate in Hz."""

    samples: np.ndarray
    sampling_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ShapeError("trace needs at least 2 samples in a 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("trace contains non-finite samples")
        if self.sampling_rate <= 0:
            raise DomainError(f"sampling rate must be positive, got {self.sampling_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sampling_rate


@dataclass(frozen=True)
class HmmFit:
    """Two-state chain parameters recovered from a trace."""

    p_flip: float
    mu1: float
    mu2: float
    sigma_obs: float

    def __post_init__(self):
        if self.mu1 == self.mu2:
            raise DomainError("state means must differ")
        if not 0 < self.p_flip < 1:
            raise DomainError(f"p_flip must lie in (0, 1), got {self.p_flip}")


def dwell_time(params: TelegraphParams, state: str) -> float:
    """Mean residence time tau0 * exp(Eb / kT) for one state."""
    idx = {STATE_LOW: 0, STATE_HIGH: 1}.get(state)
    if idx is None:
        raise DomainError(f"state must be 'low' or 'high', got {state!r}")
    tau = params.tau0 * math.exp(params.eb_over_kt[idx])
    if not math.isfinite(tau):
        raise DomainError(f"dwell time overflowed for eb_over_kt={params.eb_over_kt[idx]}")
    return tau


def ensemble_rate(taus) -> float:
    """Total fluctuation rate of an ensemble: sum of reciprocal dwell times."""
    taus = np.asarray(taus, dtype=np.float64)
    if taus.size == 0 or np.any(taus <= 0):
        raise DomainError("all dwell times must be positive")
    return float(np.sum(1.0 / taus))


def simulate_telegraph(params: TelegraphParams, duration: float, rng,
                       sampling_rate: float = 40_000.0,
                       start: str | None = None) -> TelegraphTrace:
    """Simulate two-level switching and sample it onto a uniform grid.

    Residence times are drawn exactly from exponentials with the state's
    mean dwell time, then the continuous trajectory is read out at
    ``sampling_rate``; sub-sample dwells are therefore representable even
    on a coarse grid.
    """
    if duration <= 0:
        raise DomainError("duration must be positive")
    n = int(duration * sampling_rate)
    if n < 2:
        raise DomainError(f"duration {duration} s is shorter than two sample periods "
                          f"at {sampling_rate} Hz")
    tau = (dwell_time(params, STATE_LOW), dwell_time(params, STATE_HIGH))
    if start is None:
        # stationary occupancy is proportional to the state's dwell time
        p_low = tau[0] / (tau[0] + tau[1])
        state = 0 if rng.random() < p_low else 1
    else:
        state = {STATE_LOW: 0, STATE_HIGH: 1}[start]

    # switch times of the continuous process, then grid readout
    switch_times = []
    start_state = state
    t = rng.exponential(tau[state])
    while t < duration:
        switch_times.append(t)
        state = 1 - state
        t += rng.exponential(tau[state])
    edges = np.asarray(switch_times, dtype=np.float64)
    grid = np.arange(n, dtype=np.float64) / sampling_rate
    seg = np.searchsorted(edges, grid, side="right")
    states = (start_state + seg) % 2
    levels = np.where(states == 0, params.level_low, params.level_high)
    return TelegraphTrace(levels, sampling_rate)


def compose_series(traces, tmr_equal: bool = False) -> TelegraphTrace:
    """Pointwise sum of traces, as series-connected junction voltages add.

    With ``tmr_equal`` the level spacings of all inputs are checked to
    match (n+1 output levels); distinct spacings give up to 2^n levels.
    """
    traces = list(traces)
    if not traces:
        raise ShapeError("need at least one trace")
    rate = traces[0].sampling_rate
    length = traces[0].samples.size
    for t in traces[1:]:
        if t.sampling_rate != rate or t.samples.size != length:
            raise ShapeError("traces must share sampling rate and length")
    if tmr_equal:
        gaps = [np.ptp(t.samples) for t in traces]
        if max(gaps) - min(gaps) > 1e-9 * max(gaps):
            raise DomainError(f"tmr_equal requested but level gaps differ: {gaps}")
    total = np.sum([t.samples for t in traces], axis=0)
    return TelegraphTrace(total, rate)


def autocorrelation(trace: TelegraphTrace, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation C(0..max_lag) of the mean-centered trace.

    Uses the biased estimator (divide by N at every lag) for variance
    stability at large lags; C(0) is exactly 1.
    """
    x = trace.samples
    n = x.size
    if not 0 <= max_lag < n:
        raise ShapeError(f"max_lag {max_lag} out of range for {n} samples")
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0.0:
        raise AnalysisError("constant trace has zero variance")
    # FFT of the zero-padded series; the autocovariance is its squared modulus
    fsize = 1 << (2 * n - 1).bit_length()
    fx = np.fft.rfft(x, fsize)
    acov = np.fft.irfft(fx * np.conj(fx), fsize)[: max_lag + 1] / n
    return acov / acov[0]


def _two_level_split(x: np.ndarray):
    """1-D two-means split; returns (lower mean, upper mean, pooled within-std).

    Deterministic Lloyd iteration seeded at the extremes. Raises if the
    split does not separate two genuine levels.
    """
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise AnalysisError("constant trace is not bimodal")
    for _ in range(100):
        thr = 0.5 * (lo + hi)
        low_mask = x <= thr
        if not low_mask.any() or low_mask.all():
            raise AnalysisError("histogram is unimodal; no two-level split found")
        new_lo, new_hi = float(x[low_mask].mean()), float(x[~low_mask].mean())
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
    low_mask = x <= 0.5 * (lo + hi)
    var_within = (np.var(x[low_mask]) * low_mask.sum()
                  + np.var(x[~low_mask]) * (~low_mask).sum()) / x.size
    sd = math.sqrt(var_within)
    if hi - lo < 4.0 * sd:
        raise AnalysisError("histogram is unimodal; level gap below noise floor")
    return lo, hi, sd


def _hysteresis_states(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Assign 0/1 states with a +-5% of gap dead band around the midpoint."""
    mid = 0.5 * (lo + hi)
    band = 0.05 * (hi - lo)
    raw = np.full(x.size, -1, dtype=np.int64)
    raw[x > mid + band] = 1
    raw[x < mid - band] = 0
    known = np.flatnonzero(raw >= 0)
    if known.size == 0:
        raise AnalysisError("no samples outside the hysteresis band")
    # forward-fill from the last decided sample; leading samples take the first
    pos = np.searchsorted(known, np.arange(x.size), side="right") - 1
    return raw[known[np.clip(pos, 0, known.size - 1)]]


def estimate_dwell_times(trace: TelegraphTrace):
    """Mean residence time per level from a bimodal trace.

    Returns ``(tau_low, tau_high, threshold)``. The threshold is the
    midpoint between the two level means; crossings are detected with a
    hysteresis band of 10% of the level gap to suppress observation-noise
    chatter.
    """
    x = trace.samples
    lo, hi, _ = _two_level_split(x)
    states = _hysteresis_states(x, lo, hi)
    change = np.flatnonzero(np.diff(states)) + 1
    bounds = np.concatenate(([0], change, [x.size]))
    durations = np.diff(bounds) / trace.sampling_rate
    seg_states = states[bounds[:-1]]
    if not (seg_states == 0).any() or not (seg_states == 1).any():
        raise AnalysisError("trace never leaves one level; cannot estimate both dwell times")
    tau_low = float(durations[seg_states == 0].mean())
    tau_high = float(durations[seg_states == 1].mean())
    return tau_low, tau_high, 0.5 * (lo + hi)


def fit_hmm(trace: TelegraphTrace) -> HmmFit:
    """Fit a two-state chain with Gaussian emissions to a bimodal trace.

    The flip probability is the per-step threshold-crossing frequency;
    the state means are the per-level sample means (mu1 is the upper
    level) and sigma_obs pools the within-level standard deviation.
    """
    x = trace.samples
    lo, hi, _ = _two_level_split(x)
    states = _hysteresis_states(x, lo, hi)
    flips = int(np.count_nonzero(np.diff(states)))
    if flips == 0:
        raise AnalysisError("trace never switches; cannot fit a two-state chain")
    p_flip = flips / (x.size - 1)
    upper = states == 1
    mu1 = float(x[upper].mean())
    mu2 = float(x[~upper].mean())
    var_within = (np.var(x[upper]) * upper.sum() + np.var(x[~upper]) * (~upper).sum()) / x.size
    return HmmFit(p_flip=p_flip, mu1=mu1, mu2=mu2, sigma_obs=math.sqrt(var_within))


# --- trace files: raw samples plus a small key=value sidecar ----------------

def save_trace(trace: TelegraphTrace, path, fmt: str = "f64"):
    """Write one channel of samples plus a ``<path>.meta`` sidecar.

    ``fmt`` is ``f64`` (little-endian binary) or ``text`` (one value per
    line).
    """
    path = os.fspath(path)
    if fmt == "f64":
        trace.samples.astype("<f8").tofile(path)
    elif fmt == "text":
        np.savetxt(path, trace.samples, fmt="%.17g")
    else:
        raise FormatError(f"unknown trace format {fmt!r}")
    with open(path + ".meta", "w") as fh:
        fh.write(f"sampling_rate_hz = {trace.sampling_rate!r}\n")
        fh.write("units = V\n")
        fh.write(f"format = {fmt}\n")
        fh.write(f"count = {trace.samples.size}\n")


def load_trace(path) -> TelegraphTrace:
    """Read a trace written by :func:`save_trace`."""
    path = os.fspath(path)
    meta_path = path + ".meta"
    if not os.path.exists(meta_path):
        raise FormatError(f"missing sidecar header {meta_path}")
    meta = {}
    with open(meta_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"bad sidecar line: {line!r}")
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    try:
        rate = float(meta["sampling_rate_hz"])
        fmt = meta.get("format", "f64")
        count = int(meta["count"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete sidecar header {meta_path}: {exc}") from exc
    if fmt == "f64":
        samples = np.fromfile(path, dtype="<f8")
    elif fmt == "text":
        samples = np.loadtxt(path, dtype=np.float64, ndmin=1)
    else:
        raise FormatError(f"unknown trace format {fmt!r}")
    if samples.size != count:
        raise FormatError(f"trace {path} has {samples.size} samples, sidecar says {count}")
    return TelegraphTrace(samples, rate)
