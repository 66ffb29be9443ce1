"""Dataset ingestion and the synthetic tasks used by the experiments.

Real data comes from big-endian IDX image/label pairs and CIFAR binary
batches, parsed bit-exactly. When those files are absent, a deterministic
rendered-glyph corpus with the same shapes stands in (the harness only
uses it when explicitly allowed, and says so in the run metadata).
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .network import Activation, NetworkState, forward_clean_block, init_weights

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Flattened inputs in [0,1] plus class indices (or regression targets)."""

    inputs: np.ndarray          # (n, dim) float64
    targets: np.ndarray         # (n,) int64 class indices, or (n, k) float64
    split: str
    meta: dict

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class TeacherTask:
    """Frozen random network plus the exact input/output pairs it generated."""

    teacher: NetworkState
    inputs: np.ndarray
    targets: np.ndarray


# --- IDX ---------------------------------------------------------------------

def load_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != _IDX_IMAGE_MAGIC:
            raise FormatError(f"{path}: bad IDX image magic 0x{magic:08x}")
        body = fh.read()
    expected = count * rows * cols
    if len(body) != expected:
        raise FormatError(f"{path}: expected {expected} pixels, found {len(body)} bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">II", header)
        if magic != _IDX_LABEL_MAGIC:
            raise FormatError(f"{path}: bad IDX label magic 0x{magic:08x}")
        body = fh.read()
    if len(body) != count:
        raise FormatError(f"{path}: expected {count} labels, found {len(body)} bytes")
    return np.frombuffer(body, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images: np.ndarray):
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", _IDX_IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", _IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.tobytes())


def load_idx(images_path, labels_path, split: str = "train", name: str = "mnist") -> Dataset:
    """Load an IDX image/label pair, scaling pixels to [0, 1]."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels, split,
                   {"name": name, "input_dim": inputs.shape[1],
                    "class_count": int(labels.max()) + 1 if labels.size else 0})


# --- CIFAR binary batches ------------------------------------------------------

def load_cifar(paths, classes: int = 10, split: str = "train") -> Dataset:
    """Load CIFAR binary batch files (fine labels for the 100-class layout)."""
    if classes not in (10, 100):
        raise FormatError(f"classes must be 10 or 100, got {classes}")
    record = 3073 if classes == 10 else 3074
    images, labels = [], []
    for path in paths:
        with open(path, "rb") as fh:
            body = fh.read()
        if len(body) == 0 or len(body) % record != 0:
            raise FormatError(f"{path}: size {len(body)} is not a multiple of {record}")
        raw = np.frombuffer(body, dtype=np.uint8).reshape(-1, record)
        labels.append(raw[:, record - 3073].astype(np.int64))  # fine label for CIFAR-100
        images.append(raw[:, record - 3072:])
    inputs = np.concatenate(images).astype(np.float64) / 255.0
    targets = np.concatenate(labels)
    if targets.size and targets.max() >= classes:
        raise FormatError(f"label {targets.max()} out of range for {classes} classes")
    return Dataset(inputs, targets, split,
                   {"name": f"cifar{classes}", "input_dim": 3072, "class_count": classes})


def write_cifar_batch(path, images: np.ndarray, labels, classes: int = 10, coarse=None):
    """Write one CIFAR binary batch (test helper and synthetic-corpus emitter)."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), 3072)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        for i in range(len(labels)):
            if classes == 100:
                c = 0 if coarse is None else int(coarse[i])
                fh.write(bytes([c, labels[i]]))
            else:
                fh.write(bytes([labels[i]]))
            fh.write(images[i].tobytes())


# --- augmentation --------------------------------------------------------------

def hflip(image: np.ndarray) -> np.ndarray:
    """Horizontal flip of a flattened 3x32x32 planar image."""
    if image.size != 3072:
        raise ShapeError(f"expected 3072 values, got {image.size}")
    return image.reshape(3, 32, 32)[:, :, ::-1].reshape(-1).copy()


def crop_shift(image: np.ndarray, dy: int, dx: int, pad: int = 4) -> np.ndarray:
    """Crop a 32x32 window at (dy, dx) out of the zero-padded image.

    Offsets run 0..2*pad; (pad, pad) recovers the original.
    """
    if image.size != 3072:
        raise ShapeError(f"expected 3072 values, got {image.size}")
    if not (0 <= dy <= 2 * pad and 0 <= dx <= 2 * pad):
        raise ShapeError(f"offsets ({dy}, {dx}) outside 0..{2 * pad}")
    img = image.reshape(3, 32, 32)
    padded = np.zeros((3, 32 + 2 * pad, 32 + 2 * pad), dtype=image.dtype)
    padded[:, pad:pad + 32, pad:pad + 32] = img
    return padded[:, dy:dy + 32, dx:dx + 32].reshape(-1).copy()


def augment(image: np.ndarray, rng) -> np.ndarray:
    """Random horizontal flip and random 4-pixel-padded crop."""
    out = image
    if rng.random() < 0.5:
        out = hflip(out)
    dy, dx = rng.integers(0, 9, 2)
    return crop_shift(out, int(dy), int(dx))


# --- synthetic rendered-glyph corpus -------------------------------------------

_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_GLYPHS = {d: np.array([[float(c) for c in row] for row in rows])
           for d, rows in _FONT.items()}

_PALETTE = np.array([
    (220, 60, 60), (60, 200, 60), (70, 90, 230), (230, 220, 60), (60, 210, 210),
    (210, 60, 210), (240, 150, 50), (140, 70, 200), (240, 240, 240), (130, 130, 130),
], dtype=np.float64) / 255.0


def _render_glyph(digit: int, rng, size: int) -> np.ndarray:
    """One grayscale glyph with random scale, position, stroke dropout and noise."""
    k = int(rng.integers(2, 4))
    img = np.kron(_GLYPHS[digit], np.ones((k, k)))
    img = img * (rng.random(img.shape) > 0.08)
    canvas = np.zeros((size, size))
    oy = int(rng.integers(0, size - img.shape[0] + 1))
    ox = int(rng.integers(0, size - img.shape[1] + 1))
    canvas[oy:oy + img.shape[0], ox:ox + img.shape[1]] = img * (0.55 + 0.45 * rng.random())
    canvas += rng.normal(0.0, 0.10, canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def synthetic_digit_images(n: int, rng, size: int = 28):
    """n rendered digit images as uint8 (n, size, size) plus labels."""
    labels = rng.integers(0, 10, n)
    images = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        images[i] = np.round(_render_glyph(int(labels[i]), rng, size) * 255)
    return images, labels.astype(np.int64)


def synthetic_digits(n: int, seed: int, split: str = "train") -> Dataset:
    """Deterministic 10-class 28x28 stand-in corpus with MNIST shapes."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0 if split == "train" else 1)))
    images, labels = synthetic_digit_images(n, rng)
    inputs = images.reshape(n, -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels, split,
                   {"name": "synth-digits", "input_dim": inputs.shape[1], "class_count": 10})


def synthetic_color_glyph_images(n: int, classes: int, rng):
    """Colored 32x32 glyph images in planar RGB; class couples glyph and hue."""
    if classes not in (10, 100):
        raise ShapeError(f"classes must be 10 or 100, got {classes}")
    labels = rng.integers(0, classes, n)
    images = np.empty((n, 3, 32, 32), dtype=np.float64)
    for i in range(n):
        c = int(labels[i])
        digit = c // 10 if classes == 100 else c
        color = _PALETTE[c % 10] if classes == 100 else _PALETTE[int(rng.integers(0, 10))]
        gray = _render_glyph(digit, rng, 32)
        base = rng.random(3) * 0.25
        for ch in range(3):
            images[i, ch] = np.clip(base[ch] + gray * color[ch], 0.0, 1.0)
    return np.round(images * 255).astype(np.uint8).reshape(n, 3072), labels.astype(np.int64)


def synthetic_color_glyphs(n: int, classes: int, seed: int, split: str = "train") -> Dataset:
    """Deterministic CIFAR-shaped stand-in corpus (10 or 100 classes)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, classes, 0 if split == "train" else 1)))
    images, labels = synthetic_color_glyph_images(n, classes, rng)
    return Dataset(images.astype(np.float64) / 255.0, labels, split,
                   {"name": f"synth-cifar{classes}", "input_dim": 3072, "class_count": classes})


# --- teacher-network regression task --------------------------------------------

def make_teacher_task(seed, n_samples: int = 100, widths=(2, 2, 2, 1)) -> TeacherTask:
    """Random frozen network and the exact mapping samples a student must match."""
    ss = np.random.SeedSequence(seed)
    net_ss, input_ss = ss.spawn(2)
    teacher = init_weights(widths, np.random.default_rng(net_ss),
                           hidden_activation=Activation("leaky_relu", 0.01))
    inputs = np.random.default_rng(input_ss).standard_normal((n_samples, widths[0]))
    targets = forward_clean_block(teacher, inputs).y.copy()
    return TeacherTask(teacher, inputs, targets)
