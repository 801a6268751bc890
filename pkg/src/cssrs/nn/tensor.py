"""Tensors, the recorded graph, and reverse-mode gradient propagation."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterator

import numpy as np


class GraphError(RuntimeError):
    pass


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode AD.

    Tensors created directly are leaves. Tensors returned by the ops in
    :mod:`cssrs.nn.ops` remember their parents and a closure that pushes the
    output gradient back into them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_recorded")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._recorded = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        out = Tensor(self.data.copy())
        out._recorded = True
        return out

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


def record(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result; ``backward_fn(grad_out)`` must accumulate into parents."""
    out = Tensor(data)
    out._recorded = True
    out.requires_grad = any(p.requires_grad or p._parents for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: "ParameterSet | None" = None) -> None:
    """Propagate d(loss)/d(node) through the recorded graph.

    ``loss`` must be a scalar produced by a forward op (or a detached copy of
    one, which yields all-zero parameter gradients). When ``params`` is given,
    its gradients are reset first so the call leaves exactly this pass's
    gradients behind.
    """
    if not loss._recorded:
        raise GraphError("backward called before any forward pass was recorded")
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params is not None:
        params.zero_grad()
    order = _topological(loss)
    for node in order:
        if node is not loss and node._parents:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # intermediate buffers are not needed once parameters hold their grads
    for node in order:
        if node._parents:
            node.grad = None
            node._parents = ()
            node._backward = None


class ParameterSet:
    """Named trainable tensors with gradients and optional frozen rows.

    Initialisation helpers draw from a generator seeded with ``rng_seed`` in
    insertion order, so the whole set is a pure function of the seed and the
    sequence of ``add_*`` calls.
    """

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        self.frozen_rows: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} already defined")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self._tensors[name] = t
        return t

    def add_uniform(self, name: str, shape, scale: float = 0.08) -> Tensor:
        return self.add(name, self.rng.uniform(-scale, scale, size=shape))

    def add_glorot(self, name: str, shape, fan_in: int, fan_out: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-limit, limit, size=shape))

    def add_zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def freeze(self, name: str, rows: np.ndarray | None = None) -> None:
        """Freeze a whole parameter, or only the given rows of it."""
        if rows is None:
            self.frozen.add(name)
        else:
            mask = np.zeros(self._tensors[name].shape[0], dtype=bool)
            mask[np.asarray(rows, dtype=int)] = True
            self.frozen_rows[name] = mask

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self._tensors.items()}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._tensors.items()}

    def trainable_grad(self, name: str) -> np.ndarray | None:
        """Gradient with frozen parts zeroed, or None for a frozen parameter."""
        if name in self.frozen:
            return None
        g = self._tensors[name].grad
        mask = self.frozen_rows.get(name)
        if mask is not None and mask.any():
            g = g.copy()
            g[mask] = 0.0
        return g

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], rng_seed: int = 0) -> "ParameterSet":
        ps = cls(rng_seed)
        for k, v in arrays.items():
            ps.add(k, v)
        return ps
