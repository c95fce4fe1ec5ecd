"""Reverse-mode autodiff tape over numpy arrays.

A :class:`Tensor` wraps one ndarray. Operations (see :mod:`.ops`) record
their inputs and a backward closure on the output tensor; executing ops *is*
the forward pass, and every intermediate value stays alive on the tape until
:func:`backward` has propagated gradients from the scalar loss root to the
trainable leaves.
"""

import numpy as np


class DiffcoreError(Exception):
    pass


class ShapeError(DiffcoreError):
    """Raised by an op whose inputs do not match its declared shapes."""


class GraphError(DiffcoreError):
    """Raised on contract violations of the forward/backward protocol."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_bwd", "_done")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._bwd = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def constant(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=False)


def param(data, name=None):
    arr = np.asarray(data)
    if not np.issubdtype(arr.dtype, np.floating):
        raise GraphError(f"parameter {name!r} must be floating point, got {arr.dtype}")
    return Tensor(arr, requires_grad=True, name=name)


def accumulate_grad(t, g):
    # dtype of a leaf's gradient always matches the leaf
    if not t.requires_grad:
        return
    g = np.asarray(g)
    if g.shape != t.data.shape:
        raise GraphError(
            f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
        )
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(loss):
    """Populate ``.grad`` on every tensor the scalar ``loss`` depends on.

    Raises GraphError if the loss is not a scalar, is non-finite, has no
    trainable ancestors, or if backward already ran on this root (the tape
    must be rebuilt by a fresh forward pass).
    """
    if not isinstance(loss, Tensor):
        raise GraphError("backward expects a Tensor loss root")
    if loss.data.size != 1:
        raise GraphError(f"loss root must be scalar, got shape {loss.data.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise GraphError("loss is non-finite; refusing to backpropagate")
    if loss._done:
        raise GraphError("backward already ran on this root; run a fresh forward pass")
    if not loss.requires_grad:
        # constant function of the leaves: every gradient is identically 0
        loss._done = True
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
    loss._done = True


def zero_grad(params):
    for p in params:
        p.grad = None
