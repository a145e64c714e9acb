"""Dense float64 building blocks with hand-written backward passes.

Matrices are plain row-major ``numpy.ndarray`` objects of dtype float64.
Sequences are ``(T, dim)`` arrays. Every function is pure: outputs are new
arrays, inputs are never written to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import EmptyInputError, NumericError, ShapeError

CE_FLOOR = 1e-12

# gate order inside the stacked LSTM weights
GATES = ("i", "f", "o", "g")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def glorot_init(rows: int, cols: int, seed) -> np.ndarray:
    """Uniform Glorot matrix with bound ``sqrt(6 / (rows + cols))``.

    ``seed`` may be an int or an existing ``numpy.random.Generator`` (which is
    advanced).
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = math.sqrt(6.0 / (rows + cols))
    return _as_rng(seed).uniform(-bound, bound, size=(rows, cols))


def check_finite(x: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite entries in {what}")
    return x


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------
# dense layer


def dense_forward(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``X @ W.T + b`` for a single vector or a ``(n, in)`` batch."""
    if X.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeError(
            f"dense: input dim {X.shape[-1]} vs W {W.shape}, b {b.shape}"
        )
    return X @ W.T + b


def dense_backward(W: np.ndarray, X: np.ndarray, dY: np.ndarray):
    """Returns ``(dW, db, dX)`` for ``Y = X @ W.T + b``."""
    X2 = np.atleast_2d(X)
    dY2 = np.atleast_2d(dY)
    dW = dY2.T @ X2
    db = dY2.sum(axis=0)
    dX = dY @ W
    return dW, db, dX


# --------------------------------------------------------------------------
# softmax / cross-entropy


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, stabilised by max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] < 1:
        raise EmptyInputError("softmax of an empty vector")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, gold: int) -> float:
    probs = np.asarray(probs)
    if not 0 <= gold < probs.shape[-1]:
        raise IndexError(f"gold class {gold} outside 0..{probs.shape[-1] - 1}")
    return -math.log(max(float(probs[gold]), CE_FLOOR))


def softmax_ce(logits: np.ndarray, gold):
    """Softmax + cross-entropy, returning ``(losses, probs, dlogits)``.

    Works on one logit vector with an int ``gold`` or on a ``(n, K)`` batch
    with a sequence of gold indices. ``dlogits`` is ``probs - onehot(gold)``.
    """
    probs = softmax(logits)
    if probs.ndim == 1:
        loss = cross_entropy(probs, int(gold))
        d = probs.copy()
        d[int(gold)] -= 1.0
        return loss, probs, d
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != (probs.shape[0],):
        raise ShapeError(f"{probs.shape[0]} rows but {gold.shape} gold labels")
    losses = np.array([cross_entropy(p, int(g)) for p, g in zip(probs, gold)])
    d = probs.copy()
    d[np.arange(len(gold)), gold] -= 1.0
    return losses, probs, d


# --------------------------------------------------------------------------
# LSTM


@dataclass(frozen=True)
class LstmCellParams:
    """Stacked gate weights in (i, f, o, g) order.

    ``W`` is ``(4H, D)``, ``U`` is ``(4H, H)``, ``b`` is ``(4H,)``.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4, d = self.W.shape
        if h4 % 4 or self.U.shape != (h4, h4 // 4) or self.b.shape != (h4,):
            raise ShapeError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str):
        """``(W_name, U_name, b_name)`` views for one gate."""
        k = GATES.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, seed) -> "LstmCellParams":
        rng = _as_rng(seed)
        W = np.concatenate([glorot_init(hidden_dim, input_dim, rng) for _ in GATES])
        U = np.concatenate([glorot_init(hidden_dim, hidden_dim, rng) for _ in GATES])
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim:2 * hidden_dim] = 1.0  # forget gate
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmCellParams":
        return cls(
            np.zeros((4 * hidden_dim, input_dim)),
            np.zeros((4 * hidden_dim, hidden_dim)),
            np.zeros(4 * hidden_dim),
        )


@dataclass
class LstmCache:
    X: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    gates: np.ndarray  # (T, 4H) post-activation
    tanh_c: np.ndarray
    reverse: bool


def lstm_cell(p: LstmCellParams, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step; returns ``(h_new, c_new)``."""
    H = p.hidden_dim
    z = p.W @ x + p.U @ h + p.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H:2 * H])
    o = sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def lstm_forward(p: LstmCellParams, X: np.ndarray, reverse: bool = False):
    """Run a unidirectional LSTM over ``X`` (T, D) from zero state.

    With ``reverse=True`` the sequence is consumed from the last position to
    the first; outputs stay aligned with input positions either way.
    Returns ``(hs, cache)`` with ``hs`` of shape (T, H).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInputError("LSTM input must be a nonempty (T, D) sequence")
    if X.shape[1] != p.input_dim:
        raise ShapeError(f"LSTM expects input dim {p.input_dim}, got {X.shape[1]}")
    T, H = X.shape[0], p.hidden_dim
    Xs = X[::-1] if reverse else X
    Zx = Xs @ p.W.T + p.b
    hs = np.empty((T, H))
    h_prev = np.empty((T, H))
    c_prev = np.empty((T, H))
    gates = np.empty((T, 4 * H))
    tanh_c = np.empty((T, H))
    h = np.zeros(H)
    c = np.zeros(H)
    UT = p.U.T
    for t in range(T):
        h_prev[t] = h
        c_prev[t] = c
        z = Zx[t] + h @ UT
        a = np.empty(4 * H)
        a[:3 * H] = sigmoid(z[:3 * H])
        a[3 * H:] = np.tanh(z[3 * H:])
        c = a[H:2 * H] * c + a[:H] * a[3 * H:]
        tc = np.tanh(c)
        h = a[2 * H:3 * H] * tc
        gates[t] = a
        tanh_c[t] = tc
        hs[t] = h
    cache = LstmCache(Xs, h_prev, c_prev, gates, tanh_c, reverse)
    return (hs[::-1].copy() if reverse else hs), cache


def lstm_backward(p: LstmCellParams, cache: LstmCache, dH: np.ndarray):
    """Backprop through time.

    ``dH`` (T, H) holds loss gradients w.r.t. the outputs, aligned with input
    positions. Returns ``(LstmCellParams of grads, dX)``.
    """
    H = p.hidden_dim
    dHs = dH[::-1] if cache.reverse else dH
    T = dHs.shape[0]
    dZ = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    U = p.U
    for t in range(T - 1, -1, -1):
        a = cache.gates[t]
        i, f, o, g = a[:H], a[H:2 * H], a[2 * H:3 * H], a[3 * H:]
        tc = cache.tanh_c[t]
        dh = dHs[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[t]
        dz[:H] = dc * g * i * (1.0 - i)
        dz[H:2 * H] = dc * cache.c_prev[t] * f * (1.0 - f)
        dz[2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ U
    grads = LstmCellParams(dZ.T @ cache.X, dZ.T @ cache.h_prev, dZ.sum(axis=0))
    dX = dZ @ p.W
    return grads, (dX[::-1].copy() if cache.reverse else dX)


def bilstm_forward(inputs, fwd: LstmCellParams, bwd: LstmCellParams, return_cache=False):
    """Bidirectional LSTM; position t holds ``[h_fwd_t, h_bwd_t]`` (T, 2H)."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInputError("Bi-LSTM input must be a nonempty sequence")
    if fwd.input_dim != X.shape[1] or bwd.input_dim != X.shape[1]:
        raise ShapeError(
            f"Bi-LSTM input dim {X.shape[1]} vs cells {fwd.input_dim}/{bwd.input_dim}"
        )
    hf, cf = lstm_forward(fwd, X)
    hb, cb = lstm_forward(bwd, X, reverse=True)
    out = np.concatenate([hf, hb], axis=1)
    if return_cache:
        return out, (cf, cb)
    return out


def bilstm_backward(fwd: LstmCellParams, bwd: LstmCellParams, cache, dOut: np.ndarray):
    """Returns ``(fwd grads, bwd grads, dX)`` for ``bilstm_forward``."""
    cf, cb = cache
    H = fwd.hidden_dim
    gf, dXf = lstm_backward(fwd, cf, dOut[:, :H])
    gb, dXb = lstm_backward(bwd, cb, dOut[:, H:])
    return gf, gb, dXf + dXb


# --------------------------------------------------------------------------
# gradient checking


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise ``|a - b| / (|a| + |b|)``; 0 when both vanish."""
    num = float(np.linalg.norm(np.ravel(a) - np.ravel(b)))
    den = float(np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b)))
    if den == 0.0:
        return 0.0
    return num / den


def numerical_gradient(fn: Callable, params: Mapping[str, np.ndarray], name: str, eps: float):
    base = params[name]
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = dict(params)
        minus = dict(params)
        xp = base.copy()
        xm = base.copy()
        xp[idx] += eps
        xm[idx] -= eps
        plus[name] = xp
        minus[name] = xm
        fp = fn(plus)[0]
        fm = fn(minus)[0]
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"non-finite loss while perturbing {name}{idx}")
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad


def grad_check_detail(fn: Callable, params: Mapping[str, np.ndarray], eps: float = 1e-6):
    """Per-array relative errors between analytic and central-difference grads.

    ``fn(params) -> (loss, grads)`` where ``grads`` has an entry for every key
    of ``params``; inputs are checked simply by including them in ``params``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    loss, grads = fn(dict(params))
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    out = {}
    for name in params:
        num = numerical_gradient(fn, params, name, eps)
        out[name] = relative_error(np.asarray(grads[name]), num)
    return out


def grad_check(fn: Callable, params: Mapping[str, np.ndarray], eps: float = 1e-6) -> float:
    """Worst relative error over every parameter and input array."""
    errs = grad_check_detail(fn, params, eps)
    return max(errs.values()) if errs else 0.0


# --------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, params: Mapping[str, np.ndarray], **hyper) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in params.items()}
        return cls(m=zeros, v={k: np.zeros_like(v) for k, v in params.items()}, **hyper)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ShapeError("params, grads and Adam state must share the same keys")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeError(f"shape mismatch for {k}: param {p.shape}, grad {g.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        new_p[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        new_m[k] = m
        new_v[k] = v
    return new_p, AdamState(new_m, new_v, t, state.lr, b1, b2, state.epsilon)
