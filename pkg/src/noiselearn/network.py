"""Forward-only multilayer perceptron with optional input decorrelation.

Weight updates live in :mod:`noiselearn.learning`; this module only runs
passes and records the traces those rules consume. A noisy pass stores the
noise-injected pre-activation, because the learning rules measure activity
the hardware can observe, not the noise itself.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, ShapeError
from .linalg import as_matrix, as_vector, matvec

LINEAR = "linear"
RELU = "relu"
LEAKY_RELU = "leaky_relu"

_CHECKPOINT_MAGIC = b"NLNET1\n"
_ACT_CODES = {LINEAR: 0, RELU: 1, LEAKY_RELU: 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class Activation:
    kind: str = LINEAR
    slope: float = 0.01  # leaky slope; ignored by linear/relu

    def __post_init__(self):
        if self.kind not in _ACT_CODES:
            raise DomainError(f"unknown activation {self.kind!r}")
        if self.kind == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise DomainError(f"leaky slope must lie in (0, 1), got {self.slope}")

    def apply(self, a: np.ndarray) -> np.ndarray:
        if self.kind == LINEAR:
            return a
        if self.kind == RELU:
            return np.maximum(a, 0.0)
        return np.where(a > 0.0, a, self.slope * a)

    def derivative(self, a: np.ndarray) -> np.ndarray:
        if self.kind == LINEAR:
            return np.ones_like(a)
        if self.kind == RELU:
            return (a > 0.0).astype(np.float64)
        return np.where(a > 0.0, 1.0, self.slope)


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    activation: Activation


@dataclass
class NetworkState:
    """Weights plus, when enabled, one square decorrelator per layer input.

    ``decorrelators[l]`` transforms the input of layer l and is None where
    decorrelation is off (e.g. the raw network input when that is kept
    untouched).
    """

    layers: list[Layer]
    decorrelators: list[np.ndarray | None] | None = None

    def __post_init__(self):
        widths = self.widths
        for l, layer in enumerate(self.layers):
            if layer.W.shape != (widths[l + 1], widths[l]):
                raise ShapeError(f"layer {l} weight shape {layer.W.shape} breaks the chain {widths}")
        if self.decorrelators is not None:
            if len(self.decorrelators) != len(self.layers):
                raise ShapeError("need one decorrelator slot per layer")
            for l, R in enumerate(self.decorrelators):
                if R is not None and R.shape != (widths[l], widths[l]):
                    raise ShapeError(f"decorrelator {l} must be {widths[l]} square, got {R.shape}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].W.shape[1],) + tuple(layer.W.shape[0] for layer in self.layers)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Output width per layer; their sum is the unit count used by the rules."""
        return tuple(layer.W.shape[0] for layer in self.layers)

    @property
    def n_units(self) -> int:
        return sum(self.layer_sizes)


@dataclass
class LayerTrace:
    input_used: np.ndarray     # what actually multiplied W (decorrelated when enabled)
    pre_activation: np.ndarray  # noise included on noisy passes
    output: np.ndarray


@dataclass
class ForwardTrace:
    layers: list[LayerTrace] = field(default_factory=list)

    @property
    def y(self) -> np.ndarray:
        return self.layers[-1].output


def decorrelate(R: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a decorrelating transform to one layer input."""
    return matvec(R, x)


def decorrelation_matrix(batch: np.ndarray) -> np.ndarray:
    """Batch mean of (x x^T - diag(x^2)); zero on the diagonal by construction."""
    xbar = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if xbar.size == 0:
        raise ShapeError("empty batch")
    m = xbar.T @ xbar / xbar.shape[0]
    np.fill_diagonal(m, 0.0)
    return m


def decorrelation_update(R: np.ndarray, batch, eps: float) -> np.ndarray:
    """One step of the local whitening rule R <- R - eps * M R.

    ``batch`` holds inputs already transformed by the current R, one row
    per sample.
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    xbar = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if xbar.size == 0:
        raise ShapeError("empty batch")
    if xbar.shape[1] != R.shape[0]:
        raise ShapeError(f"batch width {xbar.shape[1]} does not match R {R.shape}")
    # M @ R via the batch factors: cheaper than forming M when batch << width
    mr = xbar.T @ (xbar @ R) / xbar.shape[0]
    mr -= np.mean(xbar * xbar, axis=0)[:, None] * R
    return R - eps * mr


def forward_clean(net: NetworkState, x0) -> ForwardTrace:
    """Deterministic pass: optional decorrelation, affine map, activation."""
    x = as_vector(x0)
    trace = ForwardTrace()
    for l, layer in enumerate(net.layers):
        R = net.decorrelators[l] if net.decorrelators is not None else None
        x_in = decorrelate(R, x) if R is not None else x
        a = matvec(layer.W, x_in)
        x = layer.activation.apply(a)
        trace.layers.append(LayerTrace(x_in, a, x))
    return trace


def forward_noisy(net: NetworkState, x0, noise: list[np.ndarray]) -> ForwardTrace:
    """Pass with additive pre-activation noise, one vector per layer.

    The stored pre-activation includes the noise: downstream rules work
    from observable activity.
    """
    if len(noise) != len(net.layers):
        raise ShapeError(f"need {len(net.layers)} noise vectors, got {len(noise)}")
    x = as_vector(x0)
    trace = ForwardTrace()
    for l, layer in enumerate(net.layers):
        eps = noise[l]
        if eps.shape != (layer.W.shape[0],):
            raise ShapeError(f"noise {l} has shape {eps.shape}, layer emits {layer.W.shape[0]}")
        R = net.decorrelators[l] if net.decorrelators is not None else None
        x_in = decorrelate(R, x) if R is not None else x
        a = matvec(layer.W, x_in) + eps
        x = layer.activation.apply(a)
        trace.layers.append(LayerTrace(x_in, a, x))
    return trace


def forward_clean_block(net: NetworkState, X: np.ndarray) -> ForwardTrace:
    """Clean passes for a whole batch; rows are samples."""
    X = as_matrix(X)
    trace = ForwardTrace()
    for l, layer in enumerate(net.layers):
        R = net.decorrelators[l] if net.decorrelators is not None else None
        X_in = X @ R.T if R is not None else X
        A = X_in @ layer.W.T
        X = layer.activation.apply(A)
        trace.layers.append(LayerTrace(X_in, A, X))
    return trace


def forward_noisy_block(net: NetworkState, X: np.ndarray, noise: list[np.ndarray]) -> ForwardTrace:
    """Noisy passes for a whole batch; noise arrays are (batch, layer width)."""
    X = as_matrix(X)
    if len(noise) != len(net.layers):
        raise ShapeError(f"need {len(net.layers)} noise blocks, got {len(noise)}")
    trace = ForwardTrace()
    for l, layer in enumerate(net.layers):
        R = net.decorrelators[l] if net.decorrelators is not None else None
        X_in = X @ R.T if R is not None else X
        A = X_in @ layer.W.T + noise[l]
        X = layer.activation.apply(A)
        trace.layers.append(LayerTrace(X_in, A, X))
    return trace


def init_weights(widths, rng, hidden_activation: Activation | None = None,
                 output_activation: Activation | None = None,
                 decorrelation: bool = False,
                 decorrelate_input: bool = True) -> NetworkState:
    """Fresh network with fan-in-scaled uniform weights in +-sqrt(6/fan_in).

    Decorrelators start as identity matrices; with ``decorrelate_input``
    off the first layer keeps its raw input.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise ShapeError(f"need at least input and output widths >= 1, got {widths}")
    hidden_activation = hidden_activation or Activation(LEAKY_RELU, 0.01)
    output_activation = output_activation or Activation(LINEAR)
    layers = []
    for l in range(len(widths) - 1):
        fan_in = widths[l]
        bound = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-bound, bound, (widths[l + 1], fan_in))
        act = output_activation if l == len(widths) - 2 else hidden_activation
        layers.append(Layer(W, act))
    decorrelators = None
    if decorrelation:
        decorrelators = [np.eye(widths[l]) if (l > 0 or decorrelate_input) else None
                         for l in range(len(widths) - 1)]
    return NetworkState(layers, decorrelators)


def save_network(net: NetworkState, path):
    """Checkpoint to a flat binary layout (magic, dims, weights, decorrelators)."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(net.layers)))
        for l, layer in enumerate(net.layers):
            out_w, in_w = layer.W.shape
            fh.write(struct.pack("<IIBd", in_w, out_w,
                                 _ACT_CODES[layer.activation.kind], layer.activation.slope))
            fh.write(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
            R = net.decorrelators[l] if net.decorrelators is not None else None
            fh.write(struct.pack("<B", 0 if R is None else 1))
            if R is not None:
                fh.write(np.ascontiguousarray(R, dtype="<f8").tobytes())


def load_network(path) -> NetworkState:
    """Read a checkpoint written by :func:`save_network`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise FormatError(f"{path} is not a network checkpoint")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        layers = []
        decorrelators = []
        any_decorr = False
        for _ in range(n_layers):
            header = fh.read(struct.calcsize("<IIBd"))
            in_w, out_w, act_code, slope = struct.unpack("<IIBd", header)
            if act_code not in _ACT_NAMES:
                raise FormatError(f"unknown activation code {act_code}")
            data = fh.read(8 * in_w * out_w)
            if len(data) != 8 * in_w * out_w:
                raise FormatError(f"{path} is truncated")
            W = np.frombuffer(data, dtype="<f8").reshape(out_w, in_w).copy()
            layers.append(Layer(W, Activation(_ACT_NAMES[act_code], slope)))
            (has_r,) = struct.unpack("<B", fh.read(1))
            if has_r:
                rdata = fh.read(8 * in_w * in_w)
                if len(rdata) != 8 * in_w * in_w:
                    raise FormatError(f"{path} is truncated")
                decorrelators.append(np.frombuffer(rdata, dtype="<f8").reshape(in_w, in_w).copy())
                any_decorr = True
            else:
                decorrelators.append(None)
    return NetworkState(layers, decorrelators if any_decorr else None)
