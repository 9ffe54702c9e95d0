"""
Reverse-mode tensor engine.

Tensor wraps a dense numpy array (batch, channel, height, width) with an
optional gradient buffer; a Tape records primitive applications while it is
active and backward() walks it in reverse.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DetachedGraphError, NonFiniteError, NonScalarLossError, ValidationError
from utils.config import DEFAULT_PRECISION


__all__ = [
    "Tensor",
    "Tape",
    "Node",
    "backward",
    "record_op",
    "current_tape",
    "precision",
    "get_default_dtype",
    "set_default_dtype",
    "check_finite",
]


_SUPPORTED_DTYPES = {"float32": np.float32, "float64": np.float64}

_state = threading.local()


def _resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        if dtype not in _SUPPORTED_DTYPES:
            raise ValidationError(f"precisione non supportata: {dtype}", dtype=dtype)
        return np.dtype(_SUPPORTED_DTYPES[dtype])
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValidationError(f"precisione non supportata: {resolved}", dtype=str(resolved))
    return resolved


_default_dtype = _resolve_dtype(DEFAULT_PRECISION)


def get_default_dtype() -> np.dtype:
    return getattr(_state, "dtype", None) or _default_dtype


def set_default_dtype(dtype) -> None:
    """Imposta la precisione di default per il thread corrente."""
    _state.dtype = _resolve_dtype(dtype)


@contextmanager
def precision(dtype) -> Iterator[np.dtype]:
    """Context manager: float32 per training, float64 per i gradient check."""
    previous = getattr(_state, "dtype", None)
    _state.dtype = _resolve_dtype(dtype)
    try:
        yield _state.dtype
    finally:
        _state.dtype = previous


def check_finite(op: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"output non finito in {op}", op=op)


# ────────────────────────────────────────────────────────────────────────────────
# Tensor
# ────────────────────────────────────────────────────────────────────────────────

class Tensor:
    """Array denso con buffer gradiente opzionale."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        target = _resolve_dtype(dtype) if dtype is not None else None
        array = np.asarray(data)
        if target is None:
            target = array.dtype if array.dtype in (np.float32, np.float64) else get_default_dtype()
        self.data: np.ndarray = np.ascontiguousarray(array, dtype=target)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        # impostati da Tape.record per i tensori non foglia
        self._tape: Optional[Tape] = None
        self._node_index: Optional[int] = None

    # costruttori ---------------------------------------------------------------

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, name: Optional[str] = None) -> "Tensor":
        return cls(np.zeros(shape, dtype=get_default_dtype()), requires_grad=requires_grad, name=name)

    @classmethod
    def ones(cls, shape: Sequence[int], requires_grad: bool = False, name: Optional[str] = None) -> "Tensor":
        return cls(np.ones(shape, dtype=get_default_dtype()), requires_grad=requires_grad, name=name)

    @classmethod
    def randn(cls, shape: Sequence[int], rng: np.random.Generator, scale: float = 1.0,
              requires_grad: bool = False, name: Optional[str] = None) -> "Tensor":
        values = rng.standard_normal(shape) * scale
        return cls(values.astype(get_default_dtype()), requires_grad=requires_grad, name=name)

    # proprietà -----------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node_index is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLossError("item() richiede un tensore scalare", shape=self.shape)
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            value = value.reshape(self.data.shape)
        if self.grad is None:
            self.grad = value.copy()
        else:
            self.grad = self.grad + value

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


# ────────────────────────────────────────────────────────────────────────────────
# Tape
# ────────────────────────────────────────────────────────────────────────────────

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    index: int = 0


@dataclass
class Tape:
    """Lista ordinata delle applicazioni di primitive registrate."""

    nodes: List[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> bool:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn) -> Node:
        node = Node(op=op, inputs=tuple(inputs), output=output, backward=backward_fn, index=len(self.nodes))
        self.nodes.append(node)
        output._tape = self
        output._node_index = node.index
        output.requires_grad = True
        return node

    def ops(self) -> List[str]:
        return [node.op for node in self.nodes]


def _tape_stack() -> List[Tape]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def current_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def record_op(op: str, inputs: Sequence[Tensor], output_data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """
    Crea il tensore di output di una primitiva e, se c'è un Tape attivo e almeno
    un input richiede gradiente, registra il nodo.
    """
    check_finite(op, output_data)
    out = Tensor(output_data, dtype=output_data.dtype)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward_fn)
    return out


# ────────────────────────────────────────────────────────────────────────────────
# Backward
# ────────────────────────────────────────────────────────────────────────────────

def backward(loss: Tensor, leaves: Optional[Iterable[Tensor]] = None) -> None:
    """
    Propaga il gradiente di una loss scalare lungo il Tape che l'ha prodotta.

    Le foglie con requires_grad accumulano in .grad (chiamate ripetute sommano);
    quelle non raggiunte ricevono un gradiente esattamente zero.
    """
    if loss.data.size != 1:
        raise NonScalarLossError("backward richiede una loss scalare", shape=loss.shape)
    tape = loss._tape
    if tape is None or loss._node_index is None:
        raise DetachedGraphError("la loss non è stata prodotta da un Tape attivo")

    last = loss._node_index
    pending = {id(loss): np.ones_like(loss.data)}

    for node in reversed(tape.nodes[: last + 1]):
        grad_out = pending.pop(id(node.output), None)
        if grad_out is None:
            continue
        input_grads = node.backward(grad_out)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.accumulate_grad(grad)
            else:
                key = id(tensor)
                pending[key] = pending[key] + grad if key in pending else grad

    for node in tape.nodes[: last + 1]:
        for tensor in node.inputs:
            if tensor.is_leaf and tensor.requires_grad and tensor.grad is None:
                tensor.grad = np.zeros_like(tensor.data)
    for tensor in leaves or ():
        if tensor.requires_grad and tensor.grad is None:
            tensor.grad = np.zeros_like(tensor.data)
