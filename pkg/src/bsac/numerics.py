"""Dense float64 math with a small reverse-mode tape, MLPs and Adam.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Differentiable
computation goes through :class:`Var`, a thin wrapper that records each
operation on a :class:`Tape` when at least one input is being tracked.  Ops on
untracked values still return ``Var`` but leave nothing on any tape, so the
same model code serves both training and inference.

Example::

    tape = Tape()
    w = tape.param("w", np.array([1.0, 2.0]))
    loss = sum_(w * np.array([3.0, 4.0]))
    grads = tape.backward(loss)      # {"w": array([3., 4.])}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ShapeError, UsageError

ACTIVATIONS = ("relu", "tanh", "identity")


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Var:
    """A value that may sit on a tape.  ``index is None`` means constant."""

    __slots__ = ("value", "tape", "index")
    # make ndarray <op> Var dispatch to Var's reflected operators
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape | None = None, index: int | None = None):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.index is not None

    def __repr__(self):
        tag = "tracked" if self.tracked else "const"
        return f"Var({tag}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return take(self, idx)


def _wrap(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(as_tensor(x))


class Tape:
    """Records operations in construction order for one backward pass."""

    def __init__(self):
        self._nodes: list[tuple[tuple[Var, ...], Callable | None]] = []
        self._keys: dict[int, str] = {}
        self._leaves: dict[int, np.ndarray] = {}
        self._consumed = False

    def __len__(self):
        return len(self._nodes)

    def __bool__(self):  # an empty tape is still a tape
        return True

    def param(self, key: str, value: np.ndarray) -> Var:
        """Register ``value`` as a leaf whose gradient is reported under ``key``."""
        v = self._record(value, (), None)
        self._keys[v.index] = key
        self._leaves[v.index] = value
        return v

    def watch(self, value) -> Var:
        """Track an input without reporting its gradient."""
        return self._record(as_tensor(value), (), None)

    def _record(self, value, inputs, backward) -> Var:
        if self._consumed:
            raise UsageError("tape already consumed by backward()")
        self._nodes.append((inputs, backward))
        return Var(value, self, len(self._nodes) - 1)

    def backward(self, loss: Var, seed=1.0) -> dict[str, np.ndarray]:
        """Return d(loss)/d(param) for every registered parameter; consumes the tape."""
        if self._consumed:
            raise UsageError("tape already consumed by backward()")
        if not self._nodes:
            raise UsageError("backward() on an empty tape")
        if not isinstance(loss, Var) or loss.tape is not self or loss.index is None:
            raise UsageError("loss was not produced on this tape")
        grads: list = [None] * len(self._nodes)
        grads[loss.index] = np.broadcast_to(as_tensor(seed), loss.value.shape).copy()
        out = {}
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            inputs, backward = self._nodes[i]
            if backward is None:
                key = self._keys.get(i)
                if key is not None:
                    out[key] = g
                continue
            for inp, ig in zip(inputs, backward(g)):
                if ig is None or inp.index is None:
                    continue
                j = inp.index
                grads[j] = ig if grads[j] is None else grads[j] + ig
            grads[i] = None
        # parameters disconnected from the loss get exact zeros
        for idx, key in self._keys.items():
            if key not in out:
                out[key] = np.zeros_like(self._leaves[idx])
        self._nodes.clear()
        self._leaves.clear()
        self._consumed = True
        return out


def _make(value, inputs: Sequence[Var], backward) -> Var:
    tape = None
    for v in inputs:
        if v.index is not None:
            tape = v.tape
            break
    if tape is None:
        return Var(value)
    for v in inputs:
        if v.index is not None and v.tape is not tape:
            raise UsageError("mixing values from different tapes")
    return tape._record(value, tuple(inputs), backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ops -------------------------------------------------------


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.value.shape, b.value.shape
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.value.shape, b.value.shape
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    return _make(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    out = av / bv
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def neg(a) -> Var:
    a = _wrap(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def square(a) -> Var:
    a = _wrap(a)
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * av * g,))


def exp(a) -> Var:
    a = _wrap(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Var:
    a = _wrap(a)
    av = a.value
    return _make(np.log(av), (a,), lambda g: (g / av,))


def tanh(a) -> Var:
    a = _wrap(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Var:
    a = _wrap(a)
    av = a.value
    return _make(np.maximum(av, 0.0), (a,), lambda g: (g * (av > 0),))


def clip(a, lo: float, hi: float) -> Var:
    """Clamp; gradient passes only where the input is strictly inside."""
    a = _wrap(a)
    av = a.value
    mask = (av > lo) & (av < hi)
    return _make(np.clip(av, lo, hi), (a,), lambda g: (g * mask,))


def minimum(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    pick_a = av <= bv
    return _make(
        np.minimum(av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, av.shape), _unbroadcast(g * ~pick_a, bv.shape)),
    )


# -- reductions and shape ops ----------------------------------------------


def sum_(a, axis=None) -> Var:
    a = _wrap(a)
    shape = a.value.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(a.value, axis=axis), (a,), backward)


def mean(a, axis=None) -> Var:
    a = _wrap(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return sum_(a, axis) * (1.0 / n)


def concat(parts: Sequence, axis: int = -1) -> Var:
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([p.value for p in parts], axis=axis), parts, backward)


def take(a, idx) -> Var:
    """Basic/advanced indexing; gradient scatters back with accumulation."""
    a = _wrap(a)
    shape = a.value.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.value[idx], (a,), backward)


def columns(a, cols) -> Var:
    """Select trailing-axis columns ``cols`` (list of ints or slice)."""
    return take(a, (Ellipsis, cols))


def linear(x, w, b) -> Var:
    """``x @ w.T + b`` with ``w`` shaped (out, in)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    xv, wv = x.value, w.value
    if xv.shape[-1] != wv.shape[1] or b.value.shape != (wv.shape[0],):
        raise ShapeError(f"linear: input {xv.shape}, weight {wv.shape}, bias {b.value.shape}")

    def backward(g):
        gx = g @ wv if x.index is not None else None
        gw = gb = None
        if w.index is not None:
            gw = np.outer(g, xv) if g.ndim == 1 else g.T @ xv
        if b.index is not None:
            gb = g if g.ndim == 1 else g.sum(axis=0)
        return gx, gw, gb

    return _make(xv @ wv.T + b.value, (x, w, b), backward)


_ACT = {"relu": relu, "tanh": tanh, "identity": lambda v: v}
_ACT_NP = {
    "relu": lambda v: np.maximum(v, 0.0),
    "tanh": np.tanh,
    "identity": lambda v: v,
}


# -- MLPs -------------------------------------------------------------------


@dataclass
class MlpParams:
    """Dense layers; weight ``k`` has shape (out_k, in_k)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS or self.output_activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation in {self.activation!r}/{self.output_activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} incompatible with bias {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: input width {w.shape[1]} != previous output {self.weights[k - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def named(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Flat name -> array view (shares storage with this object)."""
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{k}"] = w
            out[f"{prefix}b{k}"] = b
        return out

    def copy(self) -> MlpParams:
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.output_activation,
        )

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    activation: str = "relu",
    output_activation: str = "identity",
) -> MlpParams:
    """Glorot-uniform weights, zero biases.  ``sizes`` = [in, hidden..., out]."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation, output_activation)


def _check_input(params: MlpParams, width: int):
    if width != params.in_dim:
        raise ShapeError(f"layer 0: expected input width {params.in_dim}, got {width}")


def mlp_forward(
    params: MlpParams,
    x,
    tape: Tape | None = None,
    prefix: str = "",
    trainable: bool = True,
):
    """Run the affine/activation stack.

    Without a tape this is a plain numpy computation returning an ndarray.
    With a tape, weights are registered as parameters named ``prefix + W<k>``
    (or as constants if ``trainable`` is False, which still lets gradients
    reach ``x``) and a :class:`Var` is returned.
    """
    n = len(params.weights)
    if tape is None:
        h = x.value if isinstance(x, Var) else as_tensor(x)
        _check_input(params, h.shape[-1])
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            h = h @ w.T + b
            h = _ACT_NP[params.activation if k < n - 1 else params.output_activation](h)
        return h
    h = _wrap(x)
    _check_input(params, h.value.shape[-1])
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        if trainable:
            wv, bv = tape.param(f"{prefix}W{k}", w), tape.param(f"{prefix}b{k}", b)
        else:
            wv, bv = w, b
        h = linear(h, wv, bv)
        h = _ACT[params.activation if k < n - 1 else params.output_activation](h)
    return h


# -- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
):
    """One bias-corrected Adam update, applied in place to ``params``."""
    missing = set(params) - set(grads)
    if missing:
        raise UsageError(f"no gradient for parameters: {sorted(missing)}")
    extra = set(grads) - set(params)
    if extra:
        raise UsageError(f"gradients for unknown parameters: {sorted(extra)}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- RNG --------------------------------------------------------------------


def seeded_rng(seed: int) -> np.random.Generator:
    """Philox4x64 counter-based generator (numpy ``Generator`` front end)."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
