"""Derivatives of the tanh MLP with respect to inputs and parameters.

Two pieces cooperate here:

* a jet propagator that pushes (value, d/dt, d/dx, d2/dx2, d3/dx3)
  channels through every layer analytically, storing enough intermediate
  state to run the exact reverse pass for parameter gradients; and
* a small reverse-mode tape (`Node`) for the scalar arithmetic that turns
  jet fields into residual losses.  Node values are 1-D arrays over a
  batch of points, so one graph covers the whole batch.

Any scalar built from jet fields through Node arithmetic can be
backpropagated to the network parameters with `GradientTape.gradient`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import tanh_jet_bwd, tanh_jet_fwd
from .errors import NonFiniteError, StructuralError

_CHANNELS = ("v", "t", "x", "xx", "xxx")


# ---------------------------------------------------------------------------
# reverse-mode tape over batch arrays
# ---------------------------------------------------------------------------


class Node:
    """One value in the recorded scalar computation (array over the batch)."""

    __slots__ = ("value", "parents", "vjps", "leaf_key")

    # keep numpy from broadcasting over Node; reflected ops run instead
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjps=(), leaf_key=None):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.leaf_key = leaf_key  # (tape, trace_idx, channel, comp) on leaves

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Node):
            return Node(self.value + other.value, (self, other), (lambda g: g, lambda g: g))
        return Node(self.value + other, (self,), (lambda g: g,))

    __radd__ = __add__

    def __neg__(self):
        return Node(-self.value, (self,), (lambda g: -g,))

    def __sub__(self, other):
        if isinstance(other, Node):
            return Node(self.value - other.value, (self, other), (lambda g: g, lambda g: -g))
        return Node(self.value - other, (self,), (lambda g: g,))

    def __rsub__(self, other):
        return Node(other - self.value, (self,), (lambda g: -g,))

    def __mul__(self, other):
        if isinstance(other, Node):
            return Node(
                self.value * other.value,
                (self, other),
                (lambda g: g * other.value, lambda g: g * self.value),
            )
        return Node(self.value * other, (self,), (lambda g: g * other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            return Node(
                self.value / other.value,
                (self, other),
                (
                    lambda g: g / other.value,
                    lambda g: -g * self.value / (other.value * other.value),
                ),
            )
        return Node(self.value / other, (self,), (lambda g: g / other,))

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("only constant exponents are supported")
        return Node(
            self.value**k, (self,), (lambda g: g * k * self.value ** (k - 1),)
        )

    def sum(self):
        return Node(np.sum(self.value), (self,), (lambda g: g * np.ones_like(self.value),))

    def mean(self):
        n = np.size(self.value)
        return Node(
            np.mean(self.value), (self,), (lambda g: g * np.full_like(self.value, 1.0 / n),)
        )


def sin(v):
    if isinstance(v, Node):
        return Node(np.sin(v.value), (v,), (lambda g: g * np.cos(v.value),))
    return np.sin(v)


def cos(v):
    if isinstance(v, Node):
        return Node(np.cos(v.value), (v,), (lambda g: -g * np.sin(v.value),))
    return np.cos(v)


def exp(v):
    if isinstance(v, Node):
        out = np.exp(v.value)
        return Node(out, (v,), (lambda g: g * out,))
    return np.exp(v)


def value_of(v):
    return v.value if isinstance(v, Node) else v


def _toposort(root):
    order = []
    seen = set()
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root) -> dict:
    """Adjoints of every leaf reachable from root, keyed by leaf_key."""
    grads = {id(root): np.asarray(1.0)}
    leaf_grads = {}
    for node in reversed(_toposort(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.leaf_key is not None:
            key = node.leaf_key
            if key in leaf_grads:
                leaf_grads[key] = leaf_grads[key] + g
            else:
                leaf_grads[key] = g
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + contrib
            else:
                grads[pid] = contrib
    return leaf_grads


# ---------------------------------------------------------------------------
# jet propagation
# ---------------------------------------------------------------------------


@dataclass
class Jet:
    """Network output and input derivatives at a batch of points.

    Each field is a list with one entry per output component; entries are
    (n,) arrays, or Nodes wrapping such arrays when recorded on a tape.
    Unrequested derivative orders are None.
    """

    t: np.ndarray
    x: np.ndarray
    u: list
    u_t: list
    u_x: list | None
    u_xx: list | None
    u_xxx: list | None
    max_x_order: int


class _Trace:
    """Intermediates of one jet forward pass, consumed by the reverse pass."""

    __slots__ = ("params", "order", "layers", "n")

    def __init__(self, params, order, n):
        self.params = params
        self.order = order
        self.layers = []  # per layer dict of stored arrays
        self.n = n


def _forward(params, t, x, order):
    """Propagate jet channels; returns (channels at output, trace)."""
    n = t.shape[0]
    trace = _Trace(params, order, n)
    z = np.stack([t, x], axis=1)
    zt = np.broadcast_to(np.array([1.0, 0.0]), (n, 2))
    zx = np.broadcast_to(np.array([0.0, 1.0]), (n, 2))
    zxx = np.zeros((n, 2))
    zxxx = np.zeros((n, 2))

    n_layers = len(params.weights)
    for li in range(n_layers):
        w = params.weights[li]
        b = params.biases[li]
        a = z @ w.T + b
        at = zt @ w.T
        ax = zx @ w.T if order >= 1 else np.zeros_like(a)
        axx = zxx @ w.T if order >= 2 else np.zeros_like(a)
        axxx = zxxx @ w.T if order >= 3 else np.zeros_like(a)
        rec = {"z_in": (z, zt, zx, zxx, zxxx)}
        if li == n_layers - 1:
            # output layer is affine
            z, zt, zx, zxx, zxxx = a, at, ax, axx, axxx
        else:
            zz, p1, p2, p3, p4, yt, yx, yxx, yxxx = tanh_jet_fwd(
                a, at, ax, axx, axxx, order
            )
            rec["a_ch"] = (at, ax, axx, axxx)
            rec["p"] = (p1, p2, p3, p4)
            z, zt, zx, zxx, zxxx = zz, yt, yx, yxx, yxxx
        trace.layers.append(rec)
    return (z, zt, zx, zxx, zxxx), trace


def _backward(trace, adj):
    """Parameter gradients given output-channel adjoints.

    adj: dict channel -> (n, out_dim) array (missing channels mean zero).
    Returns per-layer (gW, gb) in forward order.
    """
    params = trace.params
    order = trace.order
    n_layers = len(params.weights)
    zeros = np.zeros((trace.n, params.out_dim))
    gv = adj.get("v", zeros)
    gt = adj.get("t", zeros)
    gx = adj.get("x", zeros)
    gxx = adj.get("xx", zeros)
    gxxx = adj.get("xxx", zeros)

    grads = [None] * n_layers
    for li in range(n_layers - 1, -1, -1):
        w = params.weights[li]
        rec = trace.layers[li]
        if li != n_layers - 1:
            at, ax, axx, axxx = rec["a_ch"]
            p1, p2, p3, p4 = rec["p"]
            gv, gt, gx, gxx, gxxx = tanh_jet_bwd(
                p1, p2, p3, p4, at, ax, axx, axxx, gv, gt, gx, gxx, gxxx, order
            )
        z, zt, zx, zxx, zxxx = rec["z_in"]
        gw = gv.T @ z + gt.T @ zt
        if order >= 1:
            gw += gx.T @ zx
        if order >= 2:
            gw += gxx.T @ zxx
        if order >= 3:
            gw += gxxx.T @ zxxx
        gb = gv.sum(axis=0)
        grads[li] = (gw, gb)
        if li > 0:
            gv = gv @ w
            gt = gt @ w
            gx = gx @ w if order >= 1 else gx
            gxx = gxx @ w if order >= 2 else gxx
            gxxx = gxxx @ w if order >= 3 else gxxx
    return grads


def _check_inputs(params, t, x):
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
        raise NonFiniteError("jet evaluation received non-finite coordinates")
    for w, b in zip(params.weights, params.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFiniteError("jet evaluation received non-finite parameters")


def _as_batch(t, x):
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if t.shape != x.shape or t.ndim != 1:
        raise ValueError("t and x must be scalars or equal-length 1-D arrays")
    return t, x


def jet_values(params, t, x, max_x_order=3) -> Jet:
    """Forward-only jet evaluation; fields are plain arrays."""
    t, x = _as_batch(t, x)
    _check_inputs(params, t, x)
    (v, vt, vx, vxx, vxxx), _ = _forward(params, t, x, max_x_order)
    dim = params.out_dim
    return Jet(
        t=t,
        x=x,
        u=[v[:, c] for c in range(dim)],
        u_t=[vt[:, c] for c in range(dim)],
        u_x=[vx[:, c] for c in range(dim)] if max_x_order >= 1 else None,
        u_xx=[vxx[:, c] for c in range(dim)] if max_x_order >= 2 else None,
        u_xxx=[vxxx[:, c] for c in range(dim)] if max_x_order >= 3 else None,
        max_x_order=max_x_order,
    )


class GradientTape:
    """Records jet evaluations so their scalars can be differentiated.

    Replaying (calling `gradient` twice on the same loss) is bitwise
    deterministic: the reverse pass is a fixed sequence of array ops.
    """

    def __init__(self, params):
        self.params = params
        self.traces = []

    def eval_jet(self, t, x, max_x_order=3) -> Jet:
        t, x = _as_batch(t, x)
        _check_inputs(self.params, t, x)
        channels, trace = _forward(self.params, t, x, max_x_order)
        idx = len(self.traces)
        self.traces.append(trace)
        dim = self.params.out_dim

        def leaves(ch_idx, name):
            arr = channels[ch_idx]
            return [
                Node(arr[:, c], leaf_key=(id(self), idx, name, c)) for c in range(dim)
            ]

        return Jet(
            t=t,
            x=x,
            u=leaves(0, "v"),
            u_t=leaves(1, "t"),
            u_x=leaves(2, "x") if max_x_order >= 1 else None,
            u_xx=leaves(3, "xx") if max_x_order >= 2 else None,
            u_xxx=leaves(4, "xxx") if max_x_order >= 3 else None,
            max_x_order=max_x_order,
        )

    def gradient(self, loss: Node) -> np.ndarray:
        """dLoss/dtheta as one flat vector over all parameters."""
        if not isinstance(loss, Node):
            raise StructuralError("loss must be a recorded Node")
        leaf_grads = backward(loss)
        per_trace = {}
        for key, g in leaf_grads.items():
            tape_id, idx, name, comp = key
            if tape_id != id(self):
                raise StructuralError("loss depends on a jet from another tape")
            per_trace.setdefault(idx, {}).setdefault(name, {})[comp] = g

        total = None
        dim = self.params.out_dim
        for idx in sorted(per_trace):
            trace = self.traces[idx]
            adj = {}
            for name, comps in per_trace[idx].items():
                arr = np.zeros((trace.n, dim))
                for c, g in comps.items():
                    arr[:, c] = np.broadcast_to(g, (trace.n,))
                adj[name] = arr
            grads = _backward(trace, adj)
            flat = np.concatenate(
                [np.concatenate([gw.ravel(), gb]) for gw, gb in grads]
            )
            total = flat if total is None else total + flat
        if total is None:
            # loss does not touch any jet: zero gradient
            total = np.zeros(self.params.n_params)
        return total


def eval_jet(params, t, x, max_x_order=3, tape: GradientTape | None = None):
    """Jet of the network at (t, x), recorded for parameter backprop.

    Returns (jet, tape); pass an existing tape to accumulate several
    evaluations into one recorded computation.
    """
    if tape is None:
        tape = GradientTape(params)
    return tape.eval_jet(t, x, max_x_order), tape


def backprop_params(tape: GradientTape, loss: Node) -> np.ndarray:
    return tape.gradient(loss)
