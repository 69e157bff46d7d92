"""Dense fp64 arrays with reverse-mode differentiation.

Exactly the kernels the embedding networks, the label attention and the
policy head need: strict-shape elementwise ops, matrix products, a 3x3
same-padding convolution, 2x2 max pooling, batch normalization, a GRU
cell and a stable softmax. There is no broadcasting: every operation
checks operand shapes and raises DimensionError naming both shapes.

A computation graph and its nodes belong to one thread. Values are
float64 throughout; leaf construction rejects NaN/Inf.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording; ops return value-only nodes."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def as_value(values) -> np.ndarray:
    """Validate and normalize raw data to a finite, C-order float64 array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractError("array construction rejected non-finite values")
    return arr


class Node:
    """One value in a computation record.

    `grad` is allocated lazily by the backward pass and always matches
    the value's shape. `parents` and `_backward` form the acyclic record;
    value-only nodes (constants, or anything built under no_grad) have
    neither.
    """

    __slots__ = ("value", "grad", "parents", "_backward", "tag")

    def __init__(self, value: np.ndarray, parents=(), backward=None, tag: str = ""):
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.tag = tag

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        return f"Node(shape={self.value.shape}, tag={self.tag!r})"


def leaf(values, tag: str = "") -> Node:
    """Trainable leaf; participates in backward even under no_grad parents."""
    return Node(as_value(values), tag=tag)


def constant(values, tag: str = "") -> Node:
    return Node(as_value(values), tag=tag)


def _accumulate(node: Node, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        node.grad += g


def _node(value: np.ndarray, parents, backward, tag: str) -> Node:
    if not _grad_enabled:
        return Node(value, tag=tag)
    return Node(value, parents=tuple(parents), backward=backward, tag=tag)


def backward(root: Node, seed=None) -> None:
    """Reverse-mode sweep from `root`, visiting each node exactly once.

    `seed` is the gradient of the objective w.r.t. `root` (defaults to
    ones, which for a scalar root is the usual d(root)/d(root) = 1).
    """
    if seed is None:
        seed_arr = np.ones_like(root.value)
    else:
        seed_arr = np.full(root.value.shape, seed, dtype=np.float64) if np.isscalar(seed) else np.asarray(seed, dtype=np.float64)
        if seed_arr.shape != root.value.shape:
            raise DimensionError(f"backward seed shape {seed_arr.shape} != root shape {root.value.shape}")
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    _accumulate(root, seed_arr)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _check_same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


# -- elementwise ---------------------------------------------------------


def add(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "add")
    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _node(a.value + b.value, (a, b), bwd, "add")


def sub(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "sub")
    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _node(a.value - b.value, (a, b), bwd, "sub")


def mul(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "mul")
    def bwd(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)
    return _node(a.value * b.value, (a, b), bwd, "mul")


def scale(a: Node, c: float) -> Node:
    c = float(c)
    def bwd(g):
        _accumulate(a, g * c)
    return _node(a.value * c, (a,), bwd, "scale")


def mul_scalar(a: Node, s: Node) -> Node:
    """Multiply every element of `a` by the scalar node `s`."""
    if s.value.size != 1:
        raise DimensionError(f"mul_scalar: gain must be scalar, got shape {s.value.shape}")
    sv = float(s.value.reshape(-1)[0])
    def bwd(g):
        _accumulate(a, g * sv)
        _accumulate(s, np.asarray((g * a.value).sum()).reshape(s.value.shape))
    return _node(a.value * sv, (a, s), bwd, "mul_scalar")


def relu(a: Node) -> Node:
    mask = a.value > 0  # subgradient at 0 is 0
    def bwd(g):
        _accumulate(a, g * mask)
    return _node(a.value * mask, (a,), bwd, "relu")


def sigmoid(a: Node) -> Node:
    out = np.empty_like(a.value)
    pos = a.value >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ez = np.exp(a.value[~pos])
    out[~pos] = ez / (1.0 + ez)
    def bwd(g):
        _accumulate(a, g * out * (1.0 - out))
    return _node(out, (a,), bwd, "sigmoid")


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    def bwd(g):
        _accumulate(a, g * (1.0 - out * out))
    return _node(out, (a,), bwd, "tanh")


def log(a: Node) -> Node:
    if np.any(a.value <= 0):
        raise ContractError("log requires strictly positive input")
    def bwd(g):
        _accumulate(a, g / a.value)
    return _node(np.log(a.value), (a,), bwd, "log")


def sum_all(a: Node) -> Node:
    def bwd(g):
        _accumulate(a, np.full(a.value.shape, float(g)))
    return _node(np.asarray(a.value.sum()), (a,), bwd, "sum")


# -- linear algebra ------------------------------------------------------


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(f"matmul: shapes {a.value.shape} and {b.value.shape} do not chain")
    def bwd(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)
    return _node(a.value @ b.value, (a, b), bwd, "matmul")


def matvec(w: Node, x: Node) -> Node:
    if w.value.ndim != 2 or x.value.ndim != 1 or w.value.shape[1] != x.value.shape[0]:
        raise DimensionError(f"matvec: shapes {w.value.shape} and {x.value.shape} do not chain")
    def bwd(g):
        _accumulate(w, np.outer(g, x.value))
        _accumulate(x, w.value.T @ g)
    return _node(w.value @ x.value, (w, x), bwd, "matvec")


def add_rowvec(a: Node, v: Node) -> Node:
    """Explicit per-row bias add: a[B, F] + v[F] on every row."""
    if a.value.ndim != 2 or v.value.ndim != 1 or a.value.shape[1] != v.value.shape[0]:
        raise DimensionError(f"add_rowvec: shapes {a.value.shape} and {v.value.shape} incompatible")
    def bwd(g):
        _accumulate(a, g)
        _accumulate(v, g.sum(axis=0))
    return _node(a.value + v.value[None, :], (a, v), bwd, "add_rowvec")


# -- shape plumbing ------------------------------------------------------


def reshape(a: Node, shape) -> Node:
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.value.size:
        raise DimensionError(f"reshape: {a.value.shape} has {a.value.size} elements, target {shape}")
    old = a.value.shape
    def bwd(g):
        _accumulate(a, g.reshape(old))
    return _node(a.value.reshape(shape), (a,), bwd, "reshape")


def permute(a: Node, axes) -> Node:
    axes = tuple(int(x) for x in axes)
    inverse = tuple(int(i) for i in np.argsort(axes))
    def bwd(g):
        _accumulate(a, np.ascontiguousarray(g.transpose(inverse)))
    return _node(np.ascontiguousarray(a.value.transpose(axes)), (a,), bwd, "permute")


def stack0(nodes: list[Node]) -> Node:
    if not nodes:
        raise DimensionError("stack0: empty input")
    shape = nodes[0].value.shape
    for n in nodes:
        if n.value.shape != shape:
            raise DimensionError(f"stack0: shapes {shape} and {n.value.shape} differ")
    members = tuple(nodes)
    def bwd(g):
        for i, n in enumerate(members):
            _accumulate(n, g[i])
    return _node(np.stack([n.value for n in nodes]), members, bwd, "stack0")


def index0(a: Node, i: int) -> Node:
    if not 0 <= i < a.value.shape[0]:
        raise DimensionError(f"index0: index {i} out of range for shape {a.value.shape}")
    def bwd(g):
        full = np.zeros_like(a.value)
        full[i] = g
        _accumulate(a, full)
    return _node(np.ascontiguousarray(a.value[i]), (a,), bwd, "index0")


def pick(v: Node, i: int) -> Node:
    """Scalar element of a vector; gradient is the matching one-hot."""
    if v.value.ndim != 1:
        raise DimensionError(f"pick: expected vector, got shape {v.value.shape}")
    if not 0 <= i < v.value.shape[0]:
        raise DimensionError(f"pick: index {i} out of range for shape {v.value.shape}")
    def bwd(g):
        full = np.zeros_like(v.value)
        full[i] = float(g)
        _accumulate(v, full)
    return _node(np.asarray(v.value[i]), (v,), bwd, "pick")


# -- attention / policy kernels ------------------------------------------


def softmax(logits: Node) -> Node:
    """Max-subtracted stable softmax over a vector."""
    if logits.value.ndim != 1 or logits.value.shape[0] < 1:
        raise DimensionError(f"softmax: expected non-empty vector, got shape {logits.value.shape}")
    z = logits.value - logits.value.max()
    e = np.exp(z)
    p = e / e.sum()
    def bwd(g):
        _accumulate(logits, p * (g - float(np.dot(g, p))))
    return _node(p, (logits,), bwd, "softmax")


def rowwise_neg_euclid(m: Node, h: Node) -> Node:
    """Per-row negated Euclidean distance: out[i] = -||m[i] - h||.

    The zero-distance row gets a zero subgradient, which keeps the score
    maximum at exact prototype hits without NaNs.
    """
    if m.value.ndim != 2 or h.value.ndim != 1 or m.value.shape[1] != h.value.shape[0]:
        raise DimensionError(f"rowwise_neg_euclid: shapes {m.value.shape} and {h.value.shape} incompatible")
    diff = m.value - h.value[None, :]
    dist = np.sqrt((diff * diff).sum(axis=1))
    def bwd(g):
        safe = np.where(dist > 0.0, dist, 1.0)
        unit = diff / safe[:, None]
        unit[dist == 0.0] = 0.0
        _accumulate(m, -unit * g[:, None])
        _accumulate(h, unit.T @ g)
    return _node(-dist, (m, h), bwd, "rowwise_neg_euclid")


# -- convolution / pooling / normalization --------------------------------


def conv2d_3x3(x: Node, kernels: Node, bias: Node) -> Node:
    """Cross-correlation with 3x3 kernels, zero padding 1, stride 1.

    x is [C_in, H, W], kernels [C_out, C_in, 3, 3], bias [C_out]; the
    spatial size is preserved.
    """
    if x.value.ndim != 3:
        raise DimensionError(f"conv2d_3x3: input must be [C,H,W], got {x.value.shape}")
    c_in, height, width = x.value.shape
    if kernels.value.ndim != 4 or kernels.value.shape[1:] != (c_in, 3, 3):
        raise DimensionError(
            f"conv2d_3x3: kernels {kernels.value.shape} do not match input {x.value.shape}")
    c_out = kernels.value.shape[0]
    if bias.value.shape != (c_out,):
        raise DimensionError(f"conv2d_3x3: bias {bias.value.shape} does not match {c_out} kernels")
    if height < 3 or width < 3:
        raise DimensionError(f"conv2d_3x3: spatial size {height}x{width} below 3x3")

    padded = np.pad(x.value, ((0, 0), (1, 1), (1, 1)))
    # im2col: rows indexed (c_in, dy, dx) row-major to match the kernel layout
    cols = np.stack(
        [padded[:, dy:dy + height, dx:dx + width] for dy in range(3) for dx in range(3)],
        axis=1,
    ).reshape(c_in * 9, height * width)
    kmat = kernels.value.reshape(c_out, c_in * 9)
    out = (kmat @ cols + bias.value[:, None]).reshape(c_out, height, width)

    def bwd(g):
        gmat = g.reshape(c_out, height * width)
        _accumulate(bias, gmat.sum(axis=1))
        _accumulate(kernels, (gmat @ cols.T).reshape(kernels.value.shape))
        dcols = (kmat.T @ gmat).reshape(c_in, 3, 3, height, width)
        dpad = np.zeros_like(padded)
        for dy in range(3):
            for dx in range(3):
                dpad[:, dy:dy + height, dx:dx + width] += dcols[:, dy, dx]
        _accumulate(x, dpad[:, 1:height + 1, 1:width + 1])

    return _node(out, (x, kernels, bias), bwd, "conv2d_3x3")


def maxpool2(x: Node) -> Node:
    """2x2 max pooling; gradient routes to the argmax, ties to the first
    element in row-major window order."""
    if x.value.ndim != 3:
        raise DimensionError(f"maxpool2: input must be [C,H,W], got {x.value.shape}")
    c, height, width = x.value.shape
    if height % 2 or width % 2:
        raise DimensionError(f"maxpool2: spatial size {height}x{width} not even")
    windows = (
        x.value.reshape(c, height // 2, 2, width // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, height // 2, width // 2, 4)
    )
    amax = windows.argmax(axis=3)
    out = np.take_along_axis(windows, amax[..., None], axis=3)[..., 0]

    def bwd(g):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, amax[..., None], g[..., None], axis=3)
        dx = (
            dwin.reshape(c, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, height, width)
        )
        _accumulate(x, dx)

    return _node(out, (x,), bwd, "maxpool2")


@dataclass
class BatchNormState:
    """Running statistics for one batchnorm layer (eval-mode inputs)."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, n_features: int) -> "BatchNormState":
        return cls(mean=np.zeros(n_features), var=np.ones(n_features))


BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def batchnorm(x: Node, gamma: Node, beta: Node, state: BatchNormState, train: bool) -> Node:
    """Batch normalization over rows of x[B, F].

    Train mode normalizes by batch statistics (biased variance) and folds
    them into `state` with momentum 0.9; eval mode normalizes by the
    running statistics. Backward implements the full batch-statistics
    gradient in train mode.
    """
    if x.value.ndim != 2:
        raise DimensionError(f"batchnorm: input must be [B,F], got {x.value.shape}")
    n, f = x.value.shape
    if n == 0:
        raise DimensionError("batchnorm: empty batch")
    if gamma.value.shape != (f,) or beta.value.shape != (f,):
        raise DimensionError(
            f"batchnorm: gamma {gamma.value.shape} / beta {beta.value.shape} do not match {f} features")
    if state.mean.shape != (f,):
        raise DimensionError(f"batchnorm: running stats sized {state.mean.shape}, need ({f},)")

    if train:
        mu = x.value.mean(axis=0)
        var = x.value.var(axis=0)
        # in place: the arrays are shared with parameter-set views
        state.mean[...] = BN_MOMENTUM * state.mean + (1.0 - BN_MOMENTUM) * mu
        state.var[...] = BN_MOMENTUM * state.var + (1.0 - BN_MOMENTUM) * var
    else:
        mu = state.mean
        var = state.var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x.value - mu[None, :]) * inv[None, :]
    out = xhat * gamma.value[None, :] + beta.value[None, :]

    def bwd(g):
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        dxhat = g * gamma.value[None, :]
        if train:
            dx = (inv[None, :] / n) * (
                n * dxhat - dxhat.sum(axis=0)[None, :] - xhat * (dxhat * xhat).sum(axis=0)[None, :]
            )
        else:
            dx = dxhat * inv[None, :]
        _accumulate(x, dx)

    return _node(out, (x, gamma, beta), bwd, "batchnorm")


# -- GRU cell --------------------------------------------------------------


@dataclass
class GruParams:
    """Parameter nodes of one GRU cell; weights are [d_in|d_h, d_h]."""

    wz: Node
    uz: Node
    bz: Node
    wr: Node
    ur: Node
    br: Node
    wh: Node
    uh: Node
    bh: Node

    @property
    def d_in(self) -> int:
        return self.wz.value.shape[0]

    @property
    def d_h(self) -> int:
        return self.wz.value.shape[1]


def gru_cell_batch(x: Node, h_prev: Node, p: GruParams) -> Node:
    """One GRU step over a batch: x[B, d_in], h_prev[B, d_h] -> [B, d_h].

    Update gate z, reset gate r, candidate state, then the convex
    combination z*h_prev + (1-z)*candidate, so a saturated update gate
    keeps the previous state.
    """
    if x.value.ndim != 2 or h_prev.value.ndim != 2:
        raise DimensionError(
            f"gru_cell: expected matrices, got {x.value.shape} and {h_prev.value.shape}")
    if x.value.shape[0] != h_prev.value.shape[0]:
        raise DimensionError(
            f"gru_cell: batch sizes {x.value.shape[0]} and {h_prev.value.shape[0]} differ")
    if x.value.shape[1] != p.d_in or h_prev.value.shape[1] != p.d_h:
        raise DimensionError(
            f"gru_cell: inputs {x.value.shape}/{h_prev.value.shape} do not match "
            f"parameters ({p.d_in}->{p.d_h})")
    z = sigmoid(add_rowvec(add(matmul(x, p.wz), matmul(h_prev, p.uz)), p.bz))
    r = sigmoid(add_rowvec(add(matmul(x, p.wr), matmul(h_prev, p.ur)), p.br))
    cand = tanh(add_rowvec(add(matmul(x, p.wh), matmul(mul(r, h_prev), p.uh)), p.bh))
    ones = constant(np.ones_like(z.value))
    return add(mul(z, h_prev), mul(sub(ones, z), cand))


def gru_cell(x: Node, h_prev: Node, p: GruParams) -> Node:
    """Single-vector GRU step: x[d_in], h_prev[d_h] -> [d_h]."""
    if x.value.ndim != 1 or h_prev.value.ndim != 1:
        raise DimensionError(
            f"gru_cell: expected vectors, got {x.value.shape} and {h_prev.value.shape}")
    xb = reshape(x, (1, x.value.shape[0]))
    hb = reshape(h_prev, (1, h_prev.value.shape[0]))
    return reshape(gru_cell_batch(xb, hb, p), (p.d_h,))


# -- gradient checking -----------------------------------------------------

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    per_input: list[float]

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(f, points: list[np.ndarray], tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central
    finite differences (step 1e-5 at fp64).

    `f` receives a list of leaf Nodes built from `points` and must return
    a scalar Node. The numeric side re-evaluates `f` at perturbed points
    and never touches the backward pass.
    """
    if tolerance <= 0:
        raise ContractError(f"tolerance must be positive, got {tolerance}")
    points = [as_value(p) for p in points]
    leaves = [leaf(p.copy()) for p in points]
    out = f(leaves)
    if out.value.size != 1:
        raise ContractError(f"grad_check requires a scalar function, got shape {out.value.shape}")
    backward(out)
    analytic = [
        np.zeros_like(points[i]) if leaves[i].grad is None else leaves[i].grad
        for i in range(len(points))
    ]

    def eval_at(pts: list[np.ndarray]) -> float:
        with no_grad():
            return f([constant(p) for p in pts]).item()

    per_input = []
    for i, p in enumerate(points):
        errs = 0.0
        flat = p.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + FD_STEP
            up = eval_at(points)
            flat[j] = orig - FD_STEP
            down = eval_at(points)
            flat[j] = orig
            numeric = (up - down) / (2.0 * FD_STEP)
            a = analytic[i].reshape(-1)[j]
            denom = max(abs(a), abs(numeric), 1e-6)
            errs = max(errs, abs(a - numeric) / denom)
        per_input.append(errs)
    worst = max(per_input) if per_input else 0.0
    return GradCheckReport(max_rel_err=worst, tolerance=tolerance, per_input=per_input)
