"""Target classifier: a small differentiable reference CNN plus adapters.

The reference architecture is fixed: conv(3x3, 16, replicate pad) -> ReLU
-> 2x2 max-pool -> conv(3x3, 32) -> ReLU -> max-pool -> flatten -> affine.
Forward and backward passes are written out by hand in numpy so input
gradients are exact and bit-reproducible; max-pool ties break to the
first index in scan order.

Preprocessing contract: attacks perturb the image at its native
resolution; the classifier pipeline bilinearly resizes to ``input_size``
and backpropagates through the resize, which is a fixed linear map with
an exact adjoint.

Weight file layout (little-endian), see :func:`save_weights`:

    magic  b"HZRC1\\0"
    u32    input_size
    u32    n_classes
    6 x    [u8 name_len][name ascii][u8 ndim][u32 dim ...]
    raw    float32 data for the 6 tensors, header order

Tensor order is conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b.
"""

from __future__ import annotations

import json
import struct
import subprocess
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import require_image, save_image

_WEIGHT_MAGIC = b"HZRC1\x00"
_TENSOR_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")


class AdapterError(RuntimeError):
    """Raised when an external classifier process fails or misbehaves."""


@dataclass(frozen=True)
class LabeledExample:
    """An image paired with its ground-truth class index."""

    image: np.ndarray
    label: int


@dataclass
class ReferenceCnnWeights:
    """All parameters of the reference CNN, float64 in memory."""

    conv1_w: np.ndarray  # (16, 3, 3, 3)
    conv1_b: np.ndarray  # (16,)
    conv2_w: np.ndarray  # (32, 16, 3, 3)
    conv2_b: np.ndarray  # (32,)
    fc_w: np.ndarray     # (n_classes, 32 * (S/4)**2)
    fc_b: np.ndarray     # (n_classes,)
    input_size: int
    n_classes: int

    def __post_init__(self):
        s, n = self.input_size, self.n_classes
        if s < 4 or s % 4 != 0:
            raise ValueError(f"input_size must be a positive multiple of 4, got {s}")
        if n < 2:
            raise ValueError(f"need at least 2 classes, got {n}")
        feat = 32 * (s // 4) ** 2
        expected = {
            "conv1_w": (16, 3, 3, 3), "conv1_b": (16,),
            "conv2_w": (32, 16, 3, 3), "conv2_b": (32,),
            "fc_w": (n, feat), "fc_b": (n,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")


def init_reference_weights(input_size: int = 32, n_classes: int = 10,
                           seed: int = 0) -> ReferenceCnnWeights:
    """Seeded Glorot-uniform initialization (+/- sqrt(6/(fan_in+fan_out)))."""
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    feat = 32 * (input_size // 4) ** 2
    return ReferenceCnnWeights(
        conv1_w=glorot((16, 3, 3, 3), 3 * 9, 16 * 9),
        conv1_b=np.zeros(16),
        conv2_w=glorot((32, 16, 3, 3), 16 * 9, 32 * 9),
        conv2_b=np.zeros(32),
        fc_w=glorot((n_classes, feat), feat, n_classes),
        fc_b=np.zeros(n_classes),
        input_size=input_size,
        n_classes=n_classes,
    )


# ---------------------------------------------------------------------------
# Layers (batched, (B, C, H, W) float64)
# ---------------------------------------------------------------------------

def _conv3x3_forward(x, w, b):
    bsz, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))           # (B,C,H,W,3,3)
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz, h * wd, c * 9)
    wmat = w.reshape(w.shape[0], -1)
    out = patches @ wmat.T + b
    return out.transpose(0, 2, 1).reshape(bsz, w.shape[0], h, wd), patches


def _conv3x3_backward(gout, patches, x_shape, w):
    bsz, c, h, wd = x_shape
    nout = w.shape[0]
    g = gout.reshape(bsz, nout, h * wd).transpose(0, 2, 1)       # (B,HW,O)
    dw = np.einsum("bpo,bpk->ok", g, patches).reshape(w.shape)
    db = gout.sum(axis=(0, 2, 3))
    dpatches = (g @ w.reshape(nout, -1)).reshape(bsz, h, wd, c, 3, 3)
    # scatter patch gradients back into the padded frame (indices for a
    # fixed tap offset never collide), then fold the replicate border
    dpad = np.zeros((bsz, c, h + 2, wd + 2))
    for dr in range(3):
        for dc in range(3):
            dpad[:, :, dr:dr + h, dc:dc + wd] += (
                dpatches[:, :, :, :, dr, dc].transpose(0, 3, 1, 2))
    dx = dpad[:, :, 1:-1, 1:-1].copy()
    dx[:, :, 0, :] += dpad[:, :, 0, 1:-1]
    dx[:, :, -1, :] += dpad[:, :, -1, 1:-1]
    dx[:, :, :, 0] += dpad[:, :, 1:-1, 0]
    dx[:, :, :, -1] += dpad[:, :, 1:-1, -1]
    dx[:, :, 0, 0] += dpad[:, :, 0, 0]
    dx[:, :, 0, -1] += dpad[:, :, 0, -1]
    dx[:, :, -1, 0] += dpad[:, :, -1, 0]
    dx[:, :, -1, -1] += dpad[:, :, -1, -1]
    return dx, dw, db


def _maxpool2_forward(x):
    bsz, c, h, wd = x.shape
    xr = (x.reshape(bsz, c, h // 2, 2, wd // 2, 2)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(bsz, c, h // 2, wd // 2, 4))
    # argmax returns the first maximum: scan order (r0c0, r0c1, r1c0, r1c1)
    am = xr.argmax(axis=4)
    out = np.take_along_axis(xr, am[..., None], axis=4)[..., 0]
    return out, am


def _maxpool2_backward(gout, am, x_shape):
    bsz, c, h, wd = x_shape
    gr = np.zeros((bsz, c, h // 2, wd // 2, 4))
    np.put_along_axis(gr, am[..., None], gout[..., None], axis=4)
    return (gr.reshape(bsz, c, h // 2, wd // 2, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(bsz, c, h, wd))


def _forward_cached(w: ReferenceCnnWeights, xb: np.ndarray):
    """Batched forward pass keeping the caches backprop needs."""
    z1, p1 = _conv3x3_forward(xb, w.conv1_w, w.conv1_b)
    a1 = np.maximum(z1, 0.0)
    pool1, am1 = _maxpool2_forward(a1)
    z2, p2 = _conv3x3_forward(pool1, w.conv2_w, w.conv2_b)
    a2 = np.maximum(z2, 0.0)
    pool2, am2 = _maxpool2_forward(a2)
    flat = pool2.reshape(xb.shape[0], -1)
    logits = flat @ w.fc_w.T + w.fc_b
    cache = (xb, z1, p1, a1, am1, pool1, z2, p2, a2, am2, pool2, flat)
    return logits, cache


def _backward(w: ReferenceCnnWeights, cache, dlogits: np.ndarray):
    """Backprop dJ/dlogits to the input and all weights."""
    xb, z1, p1, a1, am1, pool1, z2, p2, a2, am2, pool2, flat = cache
    dfc_w = dlogits.T @ flat
    dfc_b = dlogits.sum(axis=0)
    dflat = dlogits @ w.fc_w
    dpool2 = dflat.reshape(pool2.shape)
    da2 = _maxpool2_backward(dpool2, am2, a2.shape)
    dz2 = da2 * (z2 > 0)
    dpool1, dconv2_w, dconv2_b = _conv3x3_backward(dz2, p2, pool1.shape, w.conv2_w)
    da1 = _maxpool2_backward(dpool1, am1, a1.shape)
    dz1 = da1 * (z1 > 0)
    dx, dconv1_w, dconv1_b = _conv3x3_backward(dz1, p1, xb.shape, w.conv1_w)
    grads = {
        "conv1_w": dconv1_w, "conv1_b": dconv1_b,
        "conv2_w": dconv2_w, "conv2_b": dconv2_b,
        "fc_w": dfc_w, "fc_b": dfc_b,
    }
    return dx, grads


def _to_batch(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(2, 0, 1))[None]


def forward(w: ReferenceCnnWeights, img: np.ndarray) -> np.ndarray:
    """Logits for one (S, S, 3) image.  Deterministic and pure."""
    if img.shape != (w.input_size, w.input_size, 3):
        raise ValueError(
            f"expected ({w.input_size}, {w.input_size}, 3) input, got {img.shape}")
    logits, _ = _forward_cached(w, _to_batch(img))
    return logits[0]


def forward_batch(w: ReferenceCnnWeights, images: np.ndarray) -> np.ndarray:
    """Logits for a stack of images shaped (B, S, S, 3)."""
    xb = np.ascontiguousarray(images.transpose(0, 3, 1, 2))
    logits, _ = _forward_cached(w, xb)
    return logits


def softmax_cross_entropy(logits: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against a one-hot true label.

    Returns (loss, dloss/dlogits); the gradient is softmax - onehot and
    always sums to zero.  Stabilized by max subtraction.
    """
    n = logits.shape[-1]
    if not 0 <= y < n:
        raise ValueError(f"label {y} out of range for {n} classes")
    z = logits - logits.max()
    logsumexp = np.log(np.sum(np.exp(z)))
    loss = float(logsumexp - z[y])
    grad = np.exp(z - logsumexp)
    grad[y] -= 1.0
    return loss, grad


def backprop_logits_grad(w: ReferenceCnnWeights, img: np.ndarray,
                         dlogits: np.ndarray) -> np.ndarray:
    """Input gradient for an arbitrary upstream logits gradient.

    Linear in ``dlogits`` for fixed forward activations (ReLU masks and
    pool argmaxes are taken from the forward pass on ``img``).
    """
    _, cache = _forward_cached(w, _to_batch(img))
    dx, _ = _backward(w, cache, dlogits[None])
    return dx[0].transpose(1, 2, 0)


def input_gradient(w: ReferenceCnnWeights, img: np.ndarray, y: int) -> np.ndarray:
    """Exact dJ/dimg of the cross-entropy loss at true label y."""
    logits, cache = _forward_cached(w, _to_batch(img))
    _, dlogits = softmax_cross_entropy(logits[0], y)
    dx, _ = _backward(w, cache, dlogits[None])
    return dx[0].transpose(1, 2, 0)


def numeric_input_gradient(forward_fn, img: np.ndarray, y: int,
                           h: float = 1e-5) -> np.ndarray:
    """Central-difference input gradient oracle (test use only).

    ``forward_fn`` maps an image to logits; the differenced quantity is
    the softmax cross-entropy at label ``y``.  O(pixels) forward calls.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")

    def loss_at(x):
        return softmax_cross_entropy(forward_fn(x), y)[0]

    grad = np.zeros_like(img)
    it = np.nditer(img, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        perturbed = img.copy()
        perturbed[idx] = img[idx] + h
        up = loss_at(perturbed)
        perturbed[idx] = img[idx] - h
        down = loss_at(perturbed)
        grad[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return grad


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    weights: ReferenceCnnWeights
    final_train_accuracy: float
    epoch_losses: list[float] = field(default_factory=list)


def train_reference(dataset: list[LabeledExample], seed: int = 0,
                    epochs: int = 10, lr: float = 0.05,
                    batch_size: int = 32, input_size: int = 32,
                    n_classes: int | None = None,
                    lr_decay: float = 0.0) -> TrainReport:
    """Plain mini-batch SGD on softmax cross-entropy.

    Fully deterministic given (dataset, seed, epochs, lr): initialization
    and per-epoch shuffling come from one seeded generator.  Images at a
    different native size are bilinearly resized to ``input_size`` first,
    matching the inference-time preprocessing.  ``lr_decay`` applies the
    schedule lr / (1 + lr_decay * epoch), which keeps late epochs from
    oscillating on hard corpora.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    if n_classes is None:
        n_classes = max(ex.label for ex in dataset) + 1
    rng = np.random.default_rng(seed)
    w = init_reference_weights(input_size, n_classes, seed=seed)

    xs = np.stack([
        resize_bilinear(ex.image, input_size, input_size) for ex in dataset
    ]).transpose(0, 3, 1, 2)
    ys = np.array([ex.label for ex in dataset], dtype=np.int64)
    if ys.min() < 0 or ys.max() >= n_classes:
        raise ValueError("labels out of range")

    count = len(dataset)
    epoch_losses = []
    for epoch in range(epochs):
        epoch_lr = lr / (1.0 + lr_decay * epoch)
        order = rng.permutation(count)
        total_loss = 0.0
        for start in range(0, count, batch_size):
            batch = order[start:start + batch_size]
            xb, yb = xs[batch], ys[batch]
            logits, cache = _forward_cached(w, xb)
            # batch-mean cross-entropy and its logits gradient
            z = logits - logits.max(axis=1, keepdims=True)
            logsumexp = np.log(np.exp(z).sum(axis=1))
            total_loss += float((logsumexp - z[np.arange(len(batch)), yb]).sum())
            probs = np.exp(z - logsumexp[:, None])
            probs[np.arange(len(batch)), yb] -= 1.0
            _, grads = _backward(w, cache, probs / len(batch))
            for name, g in grads.items():
                arr = getattr(w, name)
                setattr(w, name, arr - epoch_lr * g)
        epoch_losses.append(total_loss / count)

    preds = forward_batch(w, xs.transpose(0, 2, 3, 1)).argmax(axis=1)
    accuracy = float(np.mean(preds == ys))
    return TrainReport(weights=w, final_train_accuracy=accuracy,
                       epoch_losses=epoch_losses)


# ---------------------------------------------------------------------------
# Weight file I/O
# ---------------------------------------------------------------------------

def save_weights(w: ReferenceCnnWeights, path: str | Path) -> None:
    """Serialize weights to the flat float32 container (quantizes float64)."""
    with open(path, "wb") as f:
        f.write(_WEIGHT_MAGIC)
        f.write(struct.pack("<II", w.input_size, w.n_classes))
        tensors = [getattr(w, name) for name in _TENSOR_ORDER]
        for name, arr in zip(_TENSOR_ORDER, tensors):
            encoded = name.encode("ascii")
            f.write(struct.pack("<B", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for arr in tensors:
            f.write(arr.astype("<f4").tobytes())


def load_weights(path: str | Path) -> ReferenceCnnWeights:
    """Read a weight container written by :func:`save_weights`."""
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(len(_WEIGHT_MAGIC)) != _WEIGHT_MAGIC:
            raise ValueError(f"not a reference-CNN weight file: {path}")
        input_size, n_classes = struct.unpack("<II", f.read(8))
        shapes = {}
        for expected in _TENSOR_ORDER:
            (name_len,) = struct.unpack("<B", f.read(1))
            name = f.read(name_len).decode("ascii")
            if name != expected:
                raise ValueError(f"tensor order mismatch: {name} != {expected}")
            (ndim,) = struct.unpack("<B", f.read(1))
            shapes[name] = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        tensors = {}
        for name in _TENSOR_ORDER:
            shape = shapes[name]
            n_vals = int(np.prod(shape))
            raw = f.read(4 * n_vals)
            if len(raw) != 4 * n_vals:
                raise ValueError(f"truncated weight file: {path}")
            tensors[name] = (np.frombuffer(raw, dtype="<f4")
                               .reshape(shape).astype(np.float64))
    return ReferenceCnnWeights(input_size=input_size, n_classes=n_classes, **tensors)


# ---------------------------------------------------------------------------
# Bilinear resize (fixed linear map with exact adjoint)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _resize_axis_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Half-pixel-center bilinear interpolation matrix (n_out, n_in)."""
    mat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        i0 = min(i0, n_in - 1)
        frac = src - i0
        i1 = min(i0 + 1, n_in - 1)
        mat[o, i0] += 1.0 - frac
        mat[o, i1] += frac
    mat.setflags(write=False)
    return mat


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) field or an (H, W, 3) image."""
    wr = _resize_axis_matrix(out_h, arr.shape[0])
    wc = _resize_axis_matrix(out_w, arr.shape[1])
    if arr.ndim == 2:
        return wr @ arr @ wc.T
    return np.einsum("oh,hwc,pw->opc", wr, arr, wc, optimize=True)


def resize_adjoint(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Transpose of :func:`resize_bilinear` mapping output grads back."""
    wr = _resize_axis_matrix(grad.shape[0], in_h)
    wc = _resize_axis_matrix(grad.shape[1], in_w)
    if grad.ndim == 2:
        return wr.T @ grad @ wc
    return np.einsum("oh,opc,pw->hwc", wr, grad, wc, optimize=True)


# ---------------------------------------------------------------------------
# Classifier pipelines used by the attack engine and the harness
# ---------------------------------------------------------------------------

class ReferenceClassifier:
    """Native-resolution pipeline around the reference CNN.

    Images are resized to the CNN's input size for scoring; ``loss_grad``
    backpropagates through CNN and resize, returning a native-resolution
    image gradient.
    """

    def __init__(self, weights: ReferenceCnnWeights, model_id: str = "reference"):
        self.weights = weights
        self.id = model_id

    @property
    def n_classes(self) -> int:
        return self.weights.n_classes

    def logits(self, img: np.ndarray) -> np.ndarray:
        s = self.weights.input_size
        return forward(self.weights, resize_bilinear(img, s, s))

    def predict(self, img: np.ndarray) -> int:
        return int(self.logits(img).argmax())

    def loss_grad(self, img: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        s = self.weights.input_size
        resized = resize_bilinear(img, s, s)
        logits, cache = _forward_cached(self.weights, _to_batch(resized))
        loss, dlogits = softmax_cross_entropy(logits[0], y)
        dx, _ = _backward(self.weights, cache, dlogits[None])
        grad_native = resize_adjoint(dx[0].transpose(1, 2, 0),
                                     img.shape[0], img.shape[1])
        return loss, grad_native

    def logits_for_file(self, path: str | Path) -> np.ndarray:
        from .imagecore import load_image
        return self.logits(load_image(path))


@dataclass(frozen=True)
class AdapterSpec:
    """Configuration of an external forward-only classifier.

    The process is invoked as ``command + [png_path]`` and must print the
    class scores to stdout, either as a JSON array or one real per line.
    """

    model_id: str
    command: tuple[str, ...]
    n_classes: int
    timeout_s: float = 120.0


class ExternalAdapter:
    """Forward-only classifier backed by an external command."""

    def __init__(self, spec: AdapterSpec):
        self.spec = spec
        self.id = spec.model_id

    def logits_for_file(self, path: str | Path) -> np.ndarray:
        cmd = list(self.spec.command) + [str(path)]
        try:
            proc = subprocess.run(
                cmd, capture_output=True, timeout=self.spec.timeout_s)
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"adapter timed out: {cmd}") from exc
        except OSError as exc:
            raise AdapterError(f"adapter failed to start: {cmd}: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterError(
                f"adapter exited with {proc.returncode}: {cmd}: "
                f"{proc.stderr.decode(errors='replace').strip()}")
        text = proc.stdout.decode(errors="replace").strip()
        try:
            values = json.loads(text)
        except json.JSONDecodeError:
            try:
                values = [float(tok) for tok in text.split()]
            except ValueError as exc:
                raise AdapterError(f"malformed adapter response: {text[:200]!r}") from exc
        if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) for v in values):
            raise AdapterError(f"adapter response is not a list of reals: {text[:200]!r}")
        if len(values) != self.spec.n_classes:
            raise AdapterError(
                f"adapter returned {len(values)} scores, expected {self.spec.n_classes}")
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise AdapterError("adapter returned non-finite scores")
        return arr


def external_forward(spec: AdapterSpec, img: np.ndarray) -> np.ndarray:
    """Score an in-memory image through an external adapter.

    The image is materialized as a temporary PNG (the adapter protocol is
    file based), so scores reflect 8-bit quantization.
    """
    require_image(img)
    adapter = ExternalAdapter(spec)
    with tempfile.TemporaryDirectory(prefix="hazeattack-adapter-") as tmp:
        png = Path(tmp) / "query.png"
        save_image(img, png)
        return adapter.logits_for_file(png)
