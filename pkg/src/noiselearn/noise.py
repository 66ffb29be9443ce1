"""Perturbation sources behind one sampling interface.

Every source draws from a seeded generator owned by a :class:`NoiseState`,
so identical (seed, spec, call sequence) reproduce identical values bitwise.
Replay and live sources hand out values serially, input layer first, which
is what makes a single physical device feeding a whole network the
worst-case autocorrelated regime.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .smtj import TelegraphParams, TelegraphTrace, dwell_time


@dataclass(frozen=True)
class GaussianSpec:
    """Independent zero-mean Gaussian noise with standard deviation sigma."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class BernoulliSpec:
    """Sum of h two-point draws: +alpha with probability p, else -alpha."""

    p: float = 0.5
    alpha: float = 1.0
    h: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if self.alpha <= 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.h < 1:
            raise DomainError(f"h must be at least 1, got {self.h}")


@dataclass(frozen=True)
class HmmSpec:
    """Two-state chain with symmetric flip probability and Gaussian readout.

    Emits the current state mean (mu1 for the starting state) plus
    observation noise of standard deviation sigma_obs, in raw volts.
    """

    p_flip: float
    mu1: float
    mu2: float
    sigma_obs: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_flip <= 1.0:
            raise DomainError(f"p_flip must lie in [0, 1], got {self.p_flip}")
        if self.sigma_obs < 0:
            raise DomainError(f"sigma_obs must be non-negative, got {self.sigma_obs}")


@dataclass(frozen=True)
class TelegraphSpec:
    """Physics-level simulation of series-connected junctions, read at dt."""

    params: tuple[TelegraphParams, ...]
    dt: float

    def __post_init__(self):
        if not self.params:
            raise DomainError("need at least one junction")
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True, eq=False)
class ReplaySpec:
    """Replay of a recorded trace, mean-centered, assigned serially."""

    trace: TelegraphTrace

    def __post_init__(self):
        if self.trace.samples.size == 0:
            raise DomainError("replay trace is empty")


@dataclass(frozen=True)
class LiveSpec:
    """Live hardware readings through a buffer of shuffled recent values."""

    buffer_size: int = 200
    min_wait: float = 1e-3

    def __post_init__(self):
        if self.buffer_size < 1:
            raise DomainError(f"buffer_size must be positive, got {self.buffer_size}")
        if self.min_wait < 0:
            raise DomainError(f"min_wait must be non-negative, got {self.min_wait}")


NoiseSpec = GaussianSpec | BernoulliSpec | HmmSpec | TelegraphSpec | ReplaySpec | LiveSpec


class _TelegraphChannel:
    """Incremental grid readout of one simulated junction."""

    def __init__(self, params: TelegraphParams, dt: float, rng):
        self.levels = (params.level_low, params.level_high)
        self.tau = (dwell_time(params, "low"), dwell_time(params, "high"))
        self.dt = dt
        self.rng = rng
        p_low = self.tau[0] / (self.tau[0] + self.tau[1])
        self.state = 0 if rng.random() < p_low else 1
        self.t = 0.0
        self.t_switch = rng.exponential(self.tau[self.state])

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        filled = 0
        while filled < n:
            t_sample = self.t + self.dt
            while self.t_switch < t_sample:
                self.state = 1 - self.state
                self.t_switch += self.rng.exponential(self.tau[self.state])
            # emit every sample that falls before the pending switch
            count = min(n - filled, int((self.t_switch - self.t) / self.dt))
            count = max(count, 1)
            out[filled:filled + count] = self.levels[self.state]
            filled += count
            self.t += count * self.dt
        return out


class NoiseState:
    """Owns the generator and latent state of one noise source.

    Single-owner mutable: do not sample from two threads at once.
    Independent states (own seeds) may run concurrently.
    """

    def __init__(self, spec: NoiseSpec, seed, live_source=None):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.wrap_count = 0
        self.live_source = live_source
        if isinstance(spec, ReplaySpec):
            samples = spec.trace.samples
            self._replay = samples - samples.mean()
            self._cursor = 0
        elif isinstance(spec, TelegraphSpec):
            self._channels = [_TelegraphChannel(p, spec.dt, self.rng) for p in spec.params]
        elif isinstance(spec, HmmSpec):
            self._chain = 0          # single-series chain, starts in the mu1 state
            self._node_chains = {}   # per-node chains keyed by total node count
        elif isinstance(spec, LiveSpec) and live_source is None:
            raise ConfigError("a live noise spec needs a live_source")


def sample_gaussian(state: NoiseState, sigma: float, n: int) -> np.ndarray:
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return state.rng.normal(0.0, sigma, n)


def sample_bernoulli(state: NoiseState, p: float, alpha: float, h: int, n: int) -> np.ndarray:
    if h < 1:
        raise DomainError(f"h must be at least 1, got {h}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    successes = state.rng.binomial(h, p, n)
    return alpha * (2.0 * successes - h)


def sample_hmm(state: NoiseState, spec: HmmSpec, n: int) -> np.ndarray:
    """Next n steps of the single-series chain (flip, then emit)."""
    flips = state.rng.random(n) < spec.p_flip
    chain = (state._chain + np.cumsum(flips)) % 2
    state._chain = int(chain[-1])
    means = np.where(chain == 0, spec.mu1, spec.mu2)
    return means + state.rng.normal(0.0, spec.sigma_obs, n)


def sample_replay(state: NoiseState, n: int) -> np.ndarray:
    """Next n consecutive mean-centered trace values; wraps are counted."""
    data = state._replay
    m = data.size
    idx = (state._cursor + np.arange(n)) % m
    state.wrap_count += (state._cursor + n) // m
    state._cursor = (state._cursor + n) % m
    return data[idx]


def sample_telegraph(state: NoiseState, n: int) -> np.ndarray:
    """Next n grid samples of the series-composed simulated junctions."""
    total = state._channels[0].take(n)
    for ch in state._channels[1:]:
        total = total + ch.take(n)
    return total


def sample_live(state: NoiseState, n: int) -> np.ndarray:
    """n values from shuffled live-buffer snapshots, centered on the buffer mean."""
    chunks = []
    have = 0
    while have < n:
        values = state.live_source.sample_shuffled()
        values = values - values.mean()
        chunks.append(values)
        have += values.size
    return np.concatenate(chunks)[:n]


def sample(state: NoiseState, n: int) -> np.ndarray:
    """Draw n values from whatever source the state wraps."""
    spec = state.spec
    if isinstance(spec, GaussianSpec):
        return sample_gaussian(state, spec.sigma, n)
    if isinstance(spec, BernoulliSpec):
        return sample_bernoulli(state, spec.p, spec.alpha, spec.h, n)
    if isinstance(spec, HmmSpec):
        return sample_hmm(state, spec, n)
    if isinstance(spec, ReplaySpec):
        return sample_replay(state, n)
    if isinstance(spec, TelegraphSpec):
        return sample_telegraph(state, n)
    if isinstance(spec, LiveSpec):
        return sample_live(state, n)
    raise ConfigError(f"unknown noise spec {type(spec).__name__}")


def _advance_node_chains(state: NoiseState, spec: HmmSpec, total: int, steps: int) -> np.ndarray:
    """Advance one independent chain per node by `steps`; returns (steps, total)."""
    chains = state._node_chains.get(total)
    if chains is None:
        chains = state.rng.integers(0, 2, total)
    flips = state.rng.random((steps, total)) < spec.p_flip
    path = (chains + np.cumsum(flips, axis=0)) % 2
    state._node_chains[total] = path[-1].copy()
    means = np.where(path == 0, spec.mu1, spec.mu2)
    return means + state.rng.normal(0.0, spec.sigma_obs, (steps, total))


def _split_serial(values: np.ndarray, layer_sizes) -> list[np.ndarray]:
    out = []
    start = 0
    for size in layer_sizes:
        out.append(values[start:start + size])
        start += size
    return out


def layer_noise(state: NoiseState, spec: NoiseSpec, layer_sizes) -> list[np.ndarray]:
    """One noise vector per layer for a single forward pass.

    Per-layer sources (Gaussian, Bernoulli) draw each layer independently;
    one HMM chain runs per node and advances one step per pass; serial
    sources (telegraph, replay, live) hand out consecutive values from the
    input layer to the output layer.
    """
    sizes = [int(s) for s in layer_sizes]
    if not sizes or min(sizes) < 1:
        raise ShapeError(f"layer sizes must be positive, got {layer_sizes}")
    if isinstance(spec, GaussianSpec):
        return [sample_gaussian(state, spec.sigma, s) for s in sizes]
    if isinstance(spec, BernoulliSpec):
        return [sample_bernoulli(state, spec.p, spec.alpha, spec.h, s) for s in sizes]
    total = sum(sizes)
    if isinstance(spec, HmmSpec):
        values = _advance_node_chains(state, spec, total, 1)[0]
    else:
        values = sample(state, total)
    return _split_serial(values, sizes)


def layer_noise_block(state: NoiseState, spec: NoiseSpec, layer_sizes, count: int) -> list[np.ndarray]:
    """Noise for `count` forward passes at once: one (count, size) array per layer.

    Row s of every array is the noise of pass s; serial sources fill rows
    with consecutive chunks so each pass still reads the device in order.
    """
    sizes = [int(s) for s in layer_sizes]
    if not sizes or min(sizes) < 1:
        raise ShapeError(f"layer sizes must be positive, got {layer_sizes}")
    if count < 1:
        raise ShapeError(f"count must be positive, got {count}")
    if isinstance(spec, GaussianSpec):
        return [state.rng.normal(0.0, spec.sigma, (count, s)) for s in sizes]
    if isinstance(spec, BernoulliSpec):
        return [spec.alpha * (2.0 * state.rng.binomial(spec.h, spec.p, (count, s)) - spec.h)
                for s in sizes]
    total = sum(sizes)
    if isinstance(spec, HmmSpec):
        block = _advance_node_chains(state, spec, total, count)
    elif isinstance(spec, LiveSpec):
        block = np.stack([sample_live(state, total) for _ in range(count)])
    else:
        block = sample(state, count * total).reshape(count, total)
    return [block[:, start:start + size]
            for start, size in zip(np.cumsum([0] + sizes[:-1]), sizes)]
