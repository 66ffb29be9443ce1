"""Weight-update rules and their shared pieces.

Three rules produce an update per layer: the perturbation rule correlates
injected noise with the loss change between a clean and a noisy pass; the
activity-difference rule compares two noisy passes and needs neither a
clean pass nor the noise values; exact reverse-mode gradients serve as the
baseline and as the test oracle. Updates are per-sample here; batch
averaging is the caller's job (the *_block variants do it with one matrix
product per layer).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .linalg import outer, sq_norm
from .network import ForwardTrace, NetworkState, forward_clean_block

SQUARED_ERROR = "squared_error"
CROSS_ENTROPY = "cross_entropy"

_PROB_FLOOR = 1e-12

UpdateSet = list  # one ndarray per layer, shaped like its weights


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stable softmax (works on vectors and batches)."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def loss(kind: str, target, output) -> float:
    """Per-sample loss: summed squared error, or cross-entropy on a one-hot target."""
    target = np.asarray(target, dtype=np.float64)
    output = np.asarray(output, dtype=np.float64)
    if target.shape != output.shape:
        raise ShapeError(f"target {target.shape} and output {output.shape} differ")
    if kind == SQUARED_ERROR:
        d = target - output
        return float(np.dot(d, d))
    if kind == CROSS_ENTROPY:
        p = np.maximum(softmax(output), _PROB_FLOOR)
        return float(-np.log(p[int(np.argmax(target))]))
    raise DomainError(f"unknown loss kind {kind!r}")


def loss_block(kind: str, targets: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """Per-sample losses for a batch; rows are samples."""
    if targets.shape != outputs.shape:
        raise ShapeError(f"targets {targets.shape} and outputs {outputs.shape} differ")
    if kind == SQUARED_ERROR:
        d = targets - outputs
        return np.sum(d * d, axis=1)
    if kind == CROSS_ENTROPY:
        p = np.maximum(softmax(outputs), _PROB_FLOOR)
        return -np.log(np.sum(p * targets, axis=1))
    raise DomainError(f"unknown loss kind {kind!r}")


def loss_grad(kind: str, target: np.ndarray, output: np.ndarray) -> np.ndarray:
    if kind == SQUARED_ERROR:
        return 2.0 * (output - target)
    if kind == CROSS_ENTROPY:
        return softmax(output) - target
    raise DomainError(f"unknown loss kind {kind!r}")


def np_update(clean: ForwardTrace, noisy: ForwardTrace, noise: list[np.ndarray],
              sigma: float, kind: str, target) -> UpdateSet:
    """Perturbation update from one clean/noisy pass pair.

    Scales the loss change by 1/sigma^2 and correlates it with the injected
    noise and the clean pass's layer inputs.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    dl = loss(kind, target, noisy.y) - loss(kind, target, clean.y)
    coeff = dl / (sigma * sigma)
    return [coeff * outer(noise[l], clean.layers[l].input_used)
            for l in range(len(clean.layers))]


def anp_update(pass1: ForwardTrace, pass2: ForwardTrace, kind: str, target,
               input_mode: str = "pass1") -> UpdateSet | None:
    """Activity-difference update from two noisy passes.

    Normalizes the per-layer activity difference by its squared norm over
    the whole network and scales by the total unit count. Returns None when
    the two passes produced identical activity (degenerate denominator);
    callers must count and report the skip.
    """
    deltas = [p1.pre_activation - p2.pre_activation
              for p1, p2 in zip(pass1.layers, pass2.layers)]
    denom = sum(sq_norm(d) for d in deltas)
    if denom == 0.0:
        return None
    n_units = sum(d.size for d in deltas)
    dl = loss(kind, target, pass1.y) - loss(kind, target, pass2.y)
    coeff = n_units * dl / denom
    updates = []
    for l, d in enumerate(deltas):
        if input_mode == "pass1":
            x = pass1.layers[l].input_used
        elif input_mode == "mean":
            x = 0.5 * (pass1.layers[l].input_used + pass2.layers[l].input_used)
        else:
            raise DomainError(f"unknown input_mode {input_mode!r}")
        updates.append(coeff * outer(d, x))
    return updates


def bp_update(net: NetworkState, x0, target, kind: str) -> UpdateSet:
    """Exact loss gradient for each weight matrix (decorrelators held fixed)."""
    from .network import forward_clean

    trace = forward_clean(net, x0)
    dy = loss_grad(kind, np.asarray(target, dtype=np.float64), trace.y)
    updates = [None] * len(net.layers)
    g = dy * net.layers[-1].activation.derivative(trace.layers[-1].pre_activation)
    for l in range(len(net.layers) - 1, -1, -1):
        updates[l] = outer(g, trace.layers[l].input_used)
        if l > 0:
            dx = net.layers[l].W.T @ g
            R = net.decorrelators[l] if net.decorrelators is not None else None
            if R is not None:
                dx = R.T @ dx
            g = dx * net.layers[l - 1].activation.derivative(trace.layers[l - 1].pre_activation)
    return updates


# --- batched variants (one matrix product per layer) ------------------------

def np_update_block(clean: ForwardTrace, noisy: ForwardTrace, noise: list[np.ndarray],
                    sigma: float, kind: str, targets: np.ndarray) -> UpdateSet:
    """Batch mean of the perturbation update."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    dl = loss_block(kind, targets, noisy.y) - loss_block(kind, targets, clean.y)
    coeff = dl / (sigma * sigma)
    b = targets.shape[0]
    return [(noise[l] * coeff[:, None]).T @ clean.layers[l].input_used / b
            for l in range(len(clean.layers))]


def anp_update_block(pass1: ForwardTrace, pass2: ForwardTrace, kind: str,
                     targets: np.ndarray, input_mode: str = "pass1"):
    """Batch mean of the activity-difference update.

    Returns ``(updates, skips)``; samples whose passes coincide are skipped
    and excluded from the mean.
    """
    deltas = [p1.pre_activation - p2.pre_activation
              for p1, p2 in zip(pass1.layers, pass2.layers)]
    denom = np.zeros(targets.shape[0])
    for d in deltas:
        denom += np.sum(d * d, axis=1)
    valid = denom > 0.0
    skips = int(np.count_nonzero(~valid))
    n_units = sum(d.shape[1] for d in deltas)
    dl = loss_block(kind, targets, pass1.y) - loss_block(kind, targets, pass2.y)
    coeff = np.zeros_like(denom)
    coeff[valid] = n_units * dl[valid] / denom[valid]
    scale = max(targets.shape[0] - skips, 1)
    updates = []
    for l, d in enumerate(deltas):
        if input_mode == "pass1":
            x = pass1.layers[l].input_used
        elif input_mode == "mean":
            x = 0.5 * (pass1.layers[l].input_used + pass2.layers[l].input_used)
        else:
            raise DomainError(f"unknown input_mode {input_mode!r}")
        updates.append((d * coeff[:, None]).T @ x / scale)
    return updates, skips


def bp_update_block(net: NetworkState, X: np.ndarray, targets: np.ndarray, kind: str) -> UpdateSet:
    """Batch-mean exact gradient."""
    trace = forward_clean_block(net, X)
    if kind == SQUARED_ERROR:
        dy = 2.0 * (trace.y - targets)
    elif kind == CROSS_ENTROPY:
        dy = softmax(trace.y) - targets
    else:
        raise DomainError(f"unknown loss kind {kind!r}")
    b = X.shape[0]
    updates = [None] * len(net.layers)
    g = dy * net.layers[-1].activation.derivative(trace.layers[-1].pre_activation)
    for l in range(len(net.layers) - 1, -1, -1):
        updates[l] = g.T @ trace.layers[l].input_used / b
        if l > 0:
            dx = g @ net.layers[l].W
            R = net.decorrelators[l] if net.decorrelators is not None else None
            if R is not None:
                dx = dx @ R
            g = dx * net.layers[l - 1].activation.derivative(trace.layers[l - 1].pre_activation)
    return updates


# --- optimizers --------------------------------------------------------------

@dataclass
class AdamState:
    """First/second-moment accumulators, one pair per weight matrix."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def for_network(cls, net: NetworkState, **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(layer.W) for layer in net.layers],
                   v=[np.zeros_like(layer.W) for layer in net.layers], **kwargs)


def adam_step(adam: AdamState, updates: UpdateSet, eta: float, net: NetworkState):
    """Bias-corrected Adam step using the given update as the gradient surrogate."""
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    adam.step += 1
    c1 = 1.0 - adam.beta1 ** adam.step
    c2 = 1.0 - adam.beta2 ** adam.step
    for l, g in enumerate(updates):
        adam.m[l] = adam.beta1 * adam.m[l] + (1.0 - adam.beta1) * g
        adam.v[l] = adam.beta2 * adam.v[l] + (1.0 - adam.beta2) * (g * g)
        m_hat = adam.m[l] / c1
        v_hat = adam.v[l] / c2
        net.layers[l].W -= eta * m_hat / (np.sqrt(v_hat) + adam.eps_hat)


def plain_step(net: NetworkState, updates: UpdateSet, eta: float):
    """Plain descent step W <- W - eta * update."""
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    for l, g in enumerate(updates):
        net.layers[l].W -= eta * g


def alignment(a: UpdateSet, b: UpdateSet) -> float:
    """Cosine similarity between two update sets, flattened and concatenated."""
    fa = np.concatenate([u.ravel() for u in a])
    fb = np.concatenate([u.ravel() for u in b])
    if fa.shape != fb.shape:
        raise ShapeError("update sets have different shapes")
    na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
    if na == 0.0 or nb == 0.0:
        raise DomainError("alignment of an all-zero update set is undefined")
    return float(np.dot(fa, fb) / (na * nb))
