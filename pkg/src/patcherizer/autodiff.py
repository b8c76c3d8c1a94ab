"""Dense tensors with reverse-mode automatic differentiation.

Broadcasting is deliberately narrow: operands of elementwise ops must have
equal shapes, or one side is a scalar, or one side is a 1-D vector matching
the other's last dimension (a row vector added to every row). Anything else
raises ``ShapeMismatch``.

Computation is single-threaded numpy in a fixed order, so identical inputs
give bit-identical results.
"""

import contextlib
import json
import os
import threading

import numpy as np

from .errors import CheckpointMismatch, FileNotFound, NonScalarLoss, ShapeMismatch

_state = threading.local()


def _dtype():
    return getattr(_state, "dtype", np.float32)


def _grad_enabled():
    return getattr(_state, "grad", True)


@contextlib.contextmanager
def default_dtype(dtype):
    """Create tensors in ``dtype`` inside the block (float64 for grad checks)."""
    old = _dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = old


@contextlib.contextmanager
def no_grad():
    old = _grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = old


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _check_broadcast(a, b, op):
    sa, sb = a.shape, b.shape
    if sa == sb or a.size == 1 and a.ndim <= 1 or b.size == 1 and b.ndim <= 1:
        return
    if b.ndim == 1 and a.ndim >= 1 and sa[-1] == sb[0]:
        return
    if a.ndim == 1 and b.ndim >= 1 and sb[-1] == sa[0]:
        return
    raise ShapeMismatch(f"{op}: incompatible shapes {sa} and {sb}")


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return grad.sum().reshape(shape)
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))).reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        if a.data.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), bw)


def transpose(a):
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose: expected a matrix, got shape {a.shape}")
    return _result(a.data.T, (a,), lambda g: (g.T,))


def tsum(a):
    return _result(a.data.sum(), (a,), lambda g: (np.full(a.shape, g, dtype=a.data.dtype),))


def mean(a):
    n = a.data.size

    def bw(g):
        return (np.full(a.shape, g / n, dtype=a.data.dtype),)

    return _result(a.data.mean(), (a,), bw)


def relu(a):
    on = a.data > 0
    return _result(np.where(on, a.data, 0).astype(a.data.dtype), (a,), lambda g: (g * on,))


def sigmoid(a):
    """Logistic function, kept strictly inside (0, 1) at the dtype's resolution."""
    x = a.data
    z = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
    info = np.finfo(x.dtype)
    y = np.clip(y, info.tiny, 1.0 - info.epsneg)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def softmax(x, bias=None):
    """Softmax over the last axis; ``bias`` is a constant additive mask."""
    z = x.data if bias is None else x.data + bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), bw)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeMismatch(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    d = x.shape[-1]

    def bw(g):
        gx_hat = g * gain.data
        gx = inv / d * (d * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gain.data + bias.data, (x, gain, bias), bw)


def embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result(table.data[ids], (table,), bw)


def embedding_bag(table, bags):
    """Row ``i`` is the mean of ``table`` rows listed in ``bags[i]``.

    Empty bags give a zero row.
    """
    flat = np.asarray([t for bag in bags for t in bag], dtype=np.int64)
    seg = np.asarray([i for i, bag in enumerate(bags) for _ in bag], dtype=np.int64)
    counts = np.asarray([max(len(bag), 1) for bag in bags], dtype=table.data.dtype)
    out = np.zeros((len(bags), table.shape[1]), dtype=table.data.dtype)
    if flat.size:
        np.add.at(out, seg, table.data[flat])
    out /= counts[:, None]

    def bw(g):
        gt = np.zeros_like(table.data)
        if flat.size:
            np.add.at(gt, flat, (g / counts[:, None])[seg])
        return (gt,)

    return _result(out, (table,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: shapes {[t.shape for t in tensors]} ({exc})") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tuple(tensors), bw)


def slice_cols(x, start, stop):
    def bw(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return _result(x.data[..., start:stop], (x,), bw)


def mask_rows(x, mask):
    """Zero the rows of ``x`` where ``mask`` is 0."""
    m = np.asarray(mask, dtype=x.data.dtype)
    if m.shape != x.shape[:1]:
        raise ShapeMismatch(f"mask_rows: mask {m.shape} vs input {x.shape}")
    m = m.reshape((-1,) + (1,) * (x.data.ndim - 1))
    return _result(x.data * m, (x,), lambda g: (g * m,))


def masked_mean(x, mask):
    """Mean of the rows of ``x`` where ``mask`` is 1; zeros if none are."""
    m = np.asarray(mask, dtype=x.data.dtype)
    if m.shape != x.shape[:1]:
        raise ShapeMismatch(f"masked_mean: mask {m.shape} vs input {x.shape}")
    count = max(float(m.sum()), 1.0)
    w = (m / count)[:, None]
    return _result((x.data * w).sum(axis=0), (x,), lambda g: (w * g[None, :],))


def dropout(x, rate, train, rng):
    if not train or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def log_softmax(x):
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _result(y, (x,), bw)


def cross_entropy(logits, targets, ignore_index=0):
    """Mean token cross-entropy over positions whose target is not ``ignore_index``.

    Returns (loss, number_of_counted_positions). All-ignored input gives 0.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != logits.shape[:1]:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    keep = targets != ignore_index
    n = int(keep.sum())
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    rows = np.nonzero(keep)[0]
    denom = max(n, 1)
    loss = -logp[rows, targets[rows]].sum() / denom

    def bw(g):
        grad = np.exp(logp)
        grad[rows, targets[rows]] -= 1.0
        grad[~keep] = 0.0
        return (grad * (g / denom),)

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), bw), n


def binary_cross_entropy(p, y, clip=1e-7):
    """Summed binary cross-entropy of probabilities ``p`` against 0/1 ``y``."""
    y = np.asarray(y, dtype=p.data.dtype).reshape(p.shape)
    pc = np.clip(p.data, clip, 1.0 - clip)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum()
    inside = (p.data >= clip) & (p.data <= 1.0 - clip)

    def bw(g):
        return (g * inside * (pc - y) / (pc * (1.0 - pc)),)

    return _result(np.asarray(loss, dtype=p.data.dtype), (p,), bw)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every leaf that requires grad.

    Leaf gradients accumulate across calls until ``zero_grad``.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def xavier_init(shape, rng):
    """Uniform Glorot init in +-sqrt(6 / (fan_in + fan_out)).

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    shape = tuple(shape)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[0], int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in sorted(self.params):
            p = self.params[k]
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype)


def save_checkpoint(prefix, arrays, meta=None):
    """Write ``<prefix>.json`` (manifest) and ``<prefix>.bin`` (little-endian f32)."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype="<f4"))
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": "patcherizer-ckpt-1", "tensors": entries, "meta": meta or {}}
    with open(f"{prefix}.bin", "wb") as f:
        f.write(b"".join(chunks))
    with open(f"{prefix}.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_checkpoint(prefix):
    for ext in (".json", ".bin"):
        if not os.path.exists(prefix + ext):
            raise FileNotFound(f"checkpoint file {prefix}{ext}")
    with open(f"{prefix}.json", encoding="utf-8") as f:
        manifest = json.load(f)
    with open(f"{prefix}.bin", "rb") as f:
        blob = f.read()
    arrays = {}
    for e in manifest["tensors"]:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise CheckpointMismatch(f"tensor {e['name']} runs past the end of {prefix}.bin")
        arrays[e["name"]] = np.frombuffer(blob[e["offset"]:end], dtype="<f4").reshape(e["shape"]).copy()
    return arrays, manifest.get("meta", {})
