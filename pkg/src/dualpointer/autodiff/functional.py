"""Differentiable primitives.

Each function takes tensors (or array-likes, treated as constants), computes
the forward value with numpy and, when any input requires a gradient,
attaches a backward closure.  Fused primitives (``conv1d_maxpool_batch``,
``lstm_sequence``) exist because a per-timestep graph is too slow in pure
Python; both are checked against their composed counterparts in the tests.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor

logger = logging.getLogger(__name__)

LOG_CLAMP = -50.0


class InvalidMaskError(ValueError):
    """A softmax row has no unmasked entry."""


class VocabIndexError(IndexError):
    """Embedding id outside the table."""


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    if not requires_grad:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward, op=op)


def _coerce(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        scale = float(b)

        def backward_scalar(g):
            return (g * scale,)

        return _result(a.data * scale, (a,), backward_scalar, "scale")
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad / bd, (a, b), backward, "div")


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's batch broadcasting; 1-D ``a`` is a row vector."""
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data
    if bd.ndim < 2 or ad.ndim < 1 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {ad.shape} x {bd.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError as exc:
        raise ShapeError(f"matmul shape mismatch: {ad.shape} x {bd.shape}") from exc

    def backward(g):
        ga = gb = None
        if ad.ndim == 1:
            if a.requires_grad:
                ga = unbroadcast(np.matmul(g[..., None, :], np.swapaxes(bd, -1, -2))[..., 0, :], ad.shape)
            if b.requires_grad:
                gb = unbroadcast(ad[:, None] * g[..., None, :], bd.shape)
            return ga, gb
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _result(out, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.sum(x.data, axis=axis), (x,), backward, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(count))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    original = x.shape

    def backward(g):
        return (g.reshape(original),)

    return _result(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _result(np.transpose(x.data, axes), (x,), backward, "transpose")


def index(x, idx) -> Tensor:
    """Basic or integer-array indexing; gradient scatter-adds into the source."""
    x = as_tensor(x)
    shape = x.shape
    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(not isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        if fancy:
            np.add.at(out, idx, g)
        else:
            out[idx] = g
        return (out,)

    return _result(x.data[idx], (x,), backward, "index")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of an empty sequence")
    ndim = parts[0].ndim
    ax = axis % ndim
    for p in parts[1:]:
        if p.ndim != ndim or any(
            p.shape[d] != parts[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise ShapeError(
                f"concat non-axis dims disagree: {[q.shape for q in parts]} along axis {axis}"
            )
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(parts))
        )

    return _result(np.concatenate([p.data for p in parts], axis=ax), parts, backward, "concat")


def split(x, n: int, axis: int = 0) -> list[Tensor]:
    """Split into ``n`` equal slices along ``axis``."""
    x = as_tensor(x)
    size = x.shape[axis]
    if n <= 0 or size % n:
        raise ShapeError(f"cannot split axis {axis} of size {size} into {n} equal parts")
    width = size // n
    out = []
    for i in range(n):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(i * width, (i + 1) * width)
        out.append(index(x, tuple(sl)))
    return out


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    expanded = [reshape(p, p.shape[:axis % (p.ndim + 1)] + (1,) + p.shape[axis % (p.ndim + 1):]) for p in parts]
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _result(y, (x,), backward, "tanh")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _result(y, (x,), backward, "sigmoid")


def relu(x) -> Tensor:
    x = as_tensor(x)
    y = np.maximum(x.data, 0)

    def backward(g):
        return (g * (y > 0),)

    return _result(y, (x,), backward, "relu")


def activation(x, kind: str) -> Tensor:
    try:
        fn = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def backward(g):
        return (g * y,)

    return _result(y, (x,), backward, "exp")


def log(x, clamp: float | None = None) -> Tensor:
    """Natural log; with ``clamp`` the output is floored there and the gradient cut."""
    x = as_tensor(x)
    with np.errstate(divide="ignore"):
        y = np.log(x.data)
    clamped = None
    if clamp is not None:
        clamped = y < clamp
        if clamped.any():
            y = np.where(clamped, clamp, y).astype(x.dtype)

    def backward(g):
        gx = g / np.where(clamped, 1.0, x.data) if clamped is not None else g / x.data
        if clamped is not None:
            gx = np.where(clamped, 0.0, gx).astype(g.dtype)
        return (gx,)

    return _result(y, (x,), backward, "log")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    out = np.tanh(z * z.dtype.type(0.5))
    out += 1
    out *= z.dtype.type(0.5)
    return out


# ---------------------------------------------------------------------------
# probability maps and losses
# ---------------------------------------------------------------------------

def softmax(x, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; ``mask`` (True = keep) broadcasts against ``x``.

    Masked entries come out exactly 0.  A slice with nothing unmasked raises
    :class:`InvalidMaskError`.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise InvalidMaskError("softmax row is fully masked")
        z = np.where(mask, z, -np.inf)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    y = (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (x,), backward, "softmax")


def softmax_rows(x, mask=None) -> Tensor:
    return softmax(x, mask=mask, axis=-1)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _result(y, (x,), backward, "log_softmax")


def cross_entropy(logits, target) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over rows.

    ``logits`` is ``[C]`` with an integer target, or ``[N, C]`` with ``N``
    targets.  The gradient is ``(softmax - onehot) / N``.
    """
    logits = as_tensor(logits)
    z = logits.data
    single = z.ndim == 1
    z2 = z[None, :] if single else z
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, c = z2.shape
    if t.shape != (n,):
        raise ShapeError(f"cross_entropy expects {n} targets, got shape {t.shape}")
    if (t < 0).any() or (t >= c).any():
        raise IndexError(f"target out of range for {c} classes: {t.tolist()}")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    losses = lse - shifted[rows, t]
    value = np.asarray(losses.mean(), dtype=z.dtype)

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, t] -= 1.0
        grad = (p * (g / n)).astype(z.dtype)
        return (grad[0] if single else grad,)

    return _result(value, (logits,), backward, "cross_entropy")


def nll_of_probs(probs, target) -> Tensor:
    """Mean of ``-log probs[i, target[i]]`` with log clamped at ``LOG_CLAMP``.

    Used for pointer distributions, which are already normalised.  A target
    slot holding zero mass is clamped and logged as a warning: it means the
    mask hid the gold slot.
    """
    probs = as_tensor(probs)
    t = np.asarray(target, dtype=np.int64)
    rows = np.arange(len(t))
    picked = index(probs, (rows, t))
    if (picked.data <= 0).any():
        logger.warning("gold pointer slot carries zero attention mass; check the self mask")
    return mul(mean(log(picked, clamp=LOG_CLAMP)), -1.0)


# ---------------------------------------------------------------------------
# lookup, dropout
# ---------------------------------------------------------------------------

def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of ``table``; gradient scatter-adds (repeated ids accumulate)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)]
        raise VocabIndexError(f"embedding id {int(bad[0])} outside table of {vocab} rows")
    shape = table.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, ids, g)
        return (out,)

    return _result(table.data[ids], (table,), backward, "embedding")


def dropout(x, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors scaled by ``1/(1-p)``; identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# convolution with max-over-time pooling
# ---------------------------------------------------------------------------

def conv1d_maxpool(seq, filters, bias) -> Tensor:
    """Valid 1-D convolution, relu, max over time.

    ``seq`` is ``[L, d_in]``, ``filters`` ``[w, d_in, f]``, ``bias`` ``[f]``.
    Sequences shorter than ``w`` are zero-padded on the right.
    """
    seq = as_tensor(seq)
    out = conv1d_maxpool_batch(reshape(seq, (1,) + seq.shape), [seq.shape[0]], filters, bias)
    return reshape(out, (out.shape[1],))


def conv1d_maxpool_batch(seqs, lengths, filters, bias) -> Tensor:
    """Batched :func:`conv1d_maxpool` over ``[B, L_max, d_in]`` right-padded input.

    Only windows that start inside ``max(length, w) - w + 1`` are pooled, so
    padding never beyond what a single sequence would see.  Ties in the max
    route the gradient to the lowest window index.
    """
    seqs, filters, bias = as_tensor(seqs), as_tensor(filters), as_tensor(bias)
    if filters.ndim != 3 or filters.shape[2] == 0:
        raise ValueError(f"filters must be [w, d_in, f] with f > 0, got {filters.shape}")
    w, d_in, f = filters.shape
    b, l_max, d = seqs.shape
    if d != d_in:
        raise ShapeError(f"conv input dim {d} != filter dim {d_in}")
    lengths = np.asarray(lengths, dtype=np.int64)
    if (lengths < 1).any():
        raise ValueError("conv1d_maxpool needs sequences of length >= 1")
    x = seqs.data
    l_pad = max(l_max, w)
    if l_pad > l_max:
        x = np.concatenate([x, np.zeros((b, l_pad - l_max, d), dtype=x.dtype)], axis=1)
    n_win = l_pad - w + 1
    # im2col: [B, n_win, w*d]
    windows = np.lib.stride_tricks.sliding_window_view(x, w, axis=1)  # [B, n_win, d, w]
    cols = np.ascontiguousarray(np.swapaxes(windows, 2, 3)).reshape(b, n_win, w * d)
    fmat = filters.data.reshape(w * d, f)
    z = cols @ fmat + bias.data  # [B, n_win, f]
    valid = np.arange(n_win)[None, :] < (np.maximum(lengths, w) - w + 1)[:, None]
    z_masked = np.where(valid[:, :, None], z, -np.inf)
    arg = np.argmax(z_masked, axis=1)  # first max -> lowest index on ties
    zmax = np.take_along_axis(z, arg[:, None, :], axis=1)[:, 0, :]
    out = np.maximum(zmax, 0).astype(seqs.dtype)

    def backward(g):
        gz_top = g * (zmax > 0)  # [B, f]
        dz = np.zeros_like(z)
        np.put_along_axis(dz, arg[:, None, :], gz_top[:, None, :], axis=1)
        gseq = gf = gb = None
        if filters.requires_grad:
            gf = np.einsum("bnk,bnf->kf", cols, dz).reshape(w, d, f)
        if bias.requires_grad:
            gb = gz_top.sum(axis=0)
        if seqs.requires_grad:
            dcols = (dz @ fmat.T).reshape(b, n_win, w, d)
            gx = np.zeros((b, l_pad, d), dtype=g.dtype)
            for k in range(w):
                gx[:, k:k + n_win, :] += dcols[:, :, k, :]
            gseq = gx[:, :l_max, :]
        return gseq, gf, gb

    return _result(out, (seqs, filters, bias), backward, "conv1d_maxpool")


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def lstm_cell(x, h_prev, c_prev, wx, wh, b) -> tuple[Tensor, Tensor]:
    """One LSTM step built from primitives; gates are ordered i, f, g, o.

    ``x`` ``[d_in]``, ``h_prev``/``c_prev`` ``[H]``, ``wx`` ``[d_in, 4H]``,
    ``wh`` ``[H, 4H]``, ``b`` ``[4H]``.
    """
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    hidden = h_prev.shape[-1]
    if wx.shape[-1] != 4 * hidden or wh.shape != (hidden, 4 * hidden) or x.shape[-1] != wx.shape[0]:
        raise ShapeError(
            f"lstm_cell shapes: x {x.shape}, h {h_prev.shape}, wx {wx.shape}, wh {wh.shape}"
        )
    z = matmul(x, wx) + matmul(h_prev, wh) + b
    zi, zf, zg, zo = split(z, 4, axis=-1)
    i, f, o = sigmoid(zi), sigmoid(zf), sigmoid(zo)
    g = tanh(zg)
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


def lstm_sequence(xs, wx, wh, b, reverse: bool = False) -> Tensor:
    """Run an LSTM over ``xs`` ``[T, d_in]`` from a zero state; returns ``[T, H]``.

    With ``reverse`` the scan starts at the last row; outputs stay aligned
    with input positions.  Forward and backward-through-time are fused.
    """
    xs, wx, wh, b = as_tensor(xs), as_tensor(wx), as_tensor(wh), as_tensor(b)
    steps = xs.shape[0]
    hidden = wh.shape[0]
    if wx.shape != (xs.shape[1], 4 * hidden) or wh.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm_sequence shapes: xs {xs.shape}, wx {wx.shape}, wh {wh.shape}, b {b.shape}"
        )
    dtype = xs.dtype
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    order = list(order)
    zx = xs.data @ wx.data + b.data  # [T, 4H]
    whd = wh.data
    gates = np.empty((steps, 4 * hidden), dtype=dtype)  # activated i, f, g, o
    cs = np.empty((steps, hidden), dtype=dtype)
    tcs = np.empty((steps, hidden), dtype=dtype)
    hs = np.empty((steps, hidden), dtype=dtype)
    prev_of = {}
    h = np.zeros(hidden, dtype=dtype)
    c = np.zeros(hidden, dtype=dtype)
    prev = -1
    for t in order:
        z = zx[t] + h @ whd
        act = gates[t]
        act[: 2 * hidden] = _sigmoid(z[: 2 * hidden])
        act[2 * hidden: 3 * hidden] = np.tanh(z[2 * hidden: 3 * hidden])
        act[3 * hidden:] = _sigmoid(z[3 * hidden:])
        i, f, g, o = act[:hidden], act[hidden: 2 * hidden], act[2 * hidden: 3 * hidden], act[3 * hidden:]
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cs[t], tcs[t], hs[t] = c, tc, h
        prev_of[t] = prev
        prev = t

    def backward(gh_out):
        dz_all = np.zeros((steps, 4 * hidden), dtype=dtype)
        dh_next = np.zeros(hidden, dtype=dtype)
        dc_next = np.zeros(hidden, dtype=dtype)
        for t in reversed(order):
            p = prev_of[t]
            act = gates[t]
            i, f, g, o = act[:hidden], act[hidden: 2 * hidden], act[2 * hidden: 3 * hidden], act[3 * hidden:]
            dh = gh_out[t] + dh_next
            do = dh * tcs[t]
            dc = dh * o * (1.0 - tcs[t] * tcs[t]) + dc_next
            c_prev = cs[p] if p >= 0 else np.zeros(hidden, dtype=dtype)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = dz_all[t]
            dz[:hidden] = di * i * (1.0 - i)
            dz[hidden: 2 * hidden] = df * f * (1.0 - f)
            dz[2 * hidden: 3 * hidden] = dg * (1.0 - g * g)
            dz[3 * hidden:] = do * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ whd.T
        gxs = dz_all @ wx.data.T if xs.requires_grad else None
        gwx = xs.data.T @ dz_all if wx.requires_grad else None
        gwh = None
        if wh.requires_grad:
            h_prev = np.zeros((steps, hidden), dtype=dtype)
            for t in order:
                if prev_of[t] >= 0:
                    h_prev[t] = hs[prev_of[t]]
            gwh = h_prev.T @ dz_all
        gb = dz_all.sum(axis=0) if b.requires_grad else None
        return gxs, gwx, gwh, gb

    return _result(hs, (xs, wx, wh, b), backward, "lstm_sequence")


def scaled_dot_attention(q, k, v, mask=None) -> tuple[Tensor, Tensor]:
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes; returns (output, weights)."""
    d = q.shape[-1]
    scores = mul(matmul(q, transpose_last(k)), 1.0 / math.sqrt(d))
    weights = softmax(scores, mask=mask, axis=-1)
    return matmul(weights, v), weights


def transpose_last(x) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))
