"""
Moteur de tenseurs avec différentiation automatique en mode inverse.

Chaque opération enregistre ses parents et une fonction de rétropropagation;
backward() parcourt le graphe en ordre topologique inverse et accumule (+=)
les gradients. Toutes les valeurs sont en double précision.

Les primitives acceptent un axe de batch en tête: les formes documentées
sont celles d'un échantillon.
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import DomainError, ShapeError


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    """
    Tableau dense float64 participant au graphe de calcul.

    Attributes:
        data: Valeurs (numpy, float64, ordre C)
        requires_grad: Le gradient doit-il être calculé
        grad: Accumulateur de gradient de même forme que data (ou None)
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: Tuple["Tensor", ...] = (),
        op: str = "",
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.op = op

    # --- propriétés -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        """Copie des valeurs, détachée du graphe."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op='{self.op}')"

    # --- opérateurs -------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    # --- raccourcis ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def backward(self) -> None:
        backward(self)


def as_tensor(value: ArrayLike) -> Tensor:
    """Convertit une constante en tenseur (sans gradient)."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Iterable[Tensor], op: str) -> Tensor:
    parents = tuple(parents)
    return Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, op=op)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Somme le gradient sur les axes ajoutés ou étendus par la diffusion."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: formes incompatibles {a.shape} et {b.shape}") from None


# ---------------------------------------------------------------------------
# Opérations élément par élément
# ---------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = _result(a.data + b.data, (a, b), "add")

    def _backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    out._backward = _backward
    return out


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = _result(a.data - b.data, (a, b), "sub")

    def _backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    out._backward = _backward
    return out


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = _result(a.data * b.data, (a, b), "mul")

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    out._backward = _backward
    return out


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise DomainError("div: division par zéro")
    out = _result(a.data / b.data, (a, b), "div")

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    out._backward = _backward
    return out


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = _result(-a.data, (a,), "neg")
    out._backward = lambda g: _accumulate(a, -g)
    return out


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = _result(y, (a,), "tanh")
    out._backward = lambda g: _accumulate(a, g * (1.0 - y * y))
    return out


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # Forme stable des deux côtés de zéro
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _result(y, (a,), "sigmoid")
    out._backward = lambda g: _accumulate(a, g * y * (1.0 - y))
    return out


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    out = _result(y, (a,), "exp")
    out._backward = lambda g: _accumulate(a, g * y)
    return out


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: argument non positif")
    out = _result(np.log(a.data), (a,), "log")
    out._backward = lambda g: _accumulate(a, g / a.data)
    return out


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    if not exponent.is_integer():
        if np.any(a.data < 0.0):
            raise DomainError(f"power: base négative avec exposant non entier {exponent}")
        if exponent < 1.0 and np.any(a.data == 0.0):
            raise DomainError(f"power: dérivée infinie en 0 pour l'exposant {exponent}")
    elif exponent < 0 and np.any(a.data == 0.0):
        raise DomainError("power: zéro élevé à une puissance négative")
    out = _result(np.power(a.data, exponent), (a,), "power")
    out._backward = lambda g: _accumulate(a, g * exponent * np.power(a.data, exponent - 1.0))
    return out


def absolute(a: ArrayLike) -> Tensor:
    """Valeur absolue; la sous-dérivée retenue en 0 est 0."""
    a = as_tensor(a)
    out = _result(np.abs(a.data), (a,), "abs")
    out._backward = lambda g: _accumulate(a, g * np.sign(a.data))
    return out


_UNARY = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "neg": neg,
    "abs": absolute,
}

_BINARY = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
}


def elementwise(op_kind: str, a: ArrayLike, b: Optional[ArrayLike] = None) -> Tensor:
    """
    Point d'entrée générique des opérations élément par élément.

    Args:
        op_kind: add, sub, mul, div, tanh, sigmoid, exp, log, neg, abs, power
        a: Premier opérande
        b: Second opérande (exposant scalaire pour power)

    Raises:
        ShapeError: Formes incompatibles
        DomainError: Argument hors domaine ou opération inconnue
    """
    if op_kind in _UNARY:
        return _UNARY[op_kind](a)
    if op_kind in _BINARY:
        if b is None:
            raise DomainError(f"{op_kind}: second opérande manquant")
        return _BINARY[op_kind](a, b)
    if op_kind == "power":
        if b is None:
            raise DomainError("power: exposant manquant")
        exponent = b.item() if isinstance(b, Tensor) else float(b)
        return power(a, exponent)
    raise DomainError(f"Opération inconnue: {op_kind}")


# ---------------------------------------------------------------------------
# Réductions et manipulations de forme
# ---------------------------------------------------------------------------


def tensor_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), "sum")

    def _backward(g: np.ndarray) -> None:
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    out._backward = _backward
    return out


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: impossible de passer de {a.shape} à {shape}") from None
    out = _result(data, (a,), "reshape")
    out._backward = lambda g: _accumulate(a, g.reshape(a.shape))
    return out


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    out = _result(np.transpose(a.data, axes), (a,), "transpose")
    inverse = None if axes is None else np.argsort(axes)
    out._backward = lambda g: _accumulate(a, np.transpose(g, inverse))
    return out


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: {a.shape} incompatible avec {shape}") from None
    out = _result(data, (a,), "broadcast")
    out._backward = lambda g: _accumulate(a, _unbroadcast(g, a.shape))
    return out


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)
    out = _result(a.data[index], (a,), "getitem")
    basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in
                (index if isinstance(index, tuple) else (index,)))

    def _backward(g: np.ndarray) -> None:
        if not a.requires_grad:
            return
        if basic:
            a.grad[index] += g
        else:
            np.add.at(a.grad, index, g)

    out._backward = _backward
    return out


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: formes incompatibles {shapes} sur l'axe {axis}") from None
    out = _result(data, tensors, "concat")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g: np.ndarray) -> None:
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    out._backward = _backward
    return out


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"stack: formes incompatibles {shapes}") from None
    out = _result(data, tensors, "stack")

    def _backward(g: np.ndarray) -> None:
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Algèbre linéaire et softmax
# ---------------------------------------------------------------------------


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Produit matriciel [.., m×k]·[.., k×n] -> [.., m×n].

    Les dimensions de tête (batch) sont diffusées comme dans numpy.matmul.

    Raises:
        ShapeError: Dimensions internes différentes
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: opérandes matriciels attendus, reçu {a.shape} et {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: dimensions internes incompatibles {a.shape} et {b.shape}")
    out = _result(np.matmul(a.data, b.data), (a, b), "matmul")

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    out._backward = _backward
    return out


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    """
    Softmax stable (soustraction du maximum) le long d'un axe.

    Raises:
        DomainError: Entrée contenant NaN
        ShapeError: Axe de longueur nulle
    """
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise DomainError("softmax: entrée contenant NaN")
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"softmax: au moins un élément requis, forme {x.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = _result(y, (x,), "softmax")

    def _backward(g: np.ndarray) -> None:
        _accumulate(x, y * (g - np.sum(g * y, axis=axis, keepdims=True)))

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Convolutions (corrélation croisée, padding "same", pas de 1)
# ---------------------------------------------------------------------------


def conv1d(x: ArrayLike, w: ArrayLike) -> Tensor:
    """
    Convolution 1D [L×Cin]·[K×Cin×Cout] -> [L×Cout], padding nul (K-1)/2.

    Raises:
        ShapeError: K pair ou canaux d'entrée incompatibles
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 3:
        raise ShapeError(f"conv1d: noyau K×Cin×Cout attendu, reçu {w.shape}")
    k, c_in, c_out = w.shape
    if k % 2 == 0:
        raise ShapeError(f"conv1d: taille de noyau impaire requise, reçu K={k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[-1] != c_in:
        raise ShapeError(f"conv1d: entrée {x.shape} incompatible avec le noyau {w.shape}")
    n, length, _ = xd.shape
    pad = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0)))
    # (N, L, Cin, K)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    w_t = np.transpose(w.data, (1, 0, 2))  # (Cin, K, Cout)
    y = np.tensordot(cols, w_t, axes=([2, 3], [0, 1]))
    out = _result(y[0] if squeeze else y, (x, w), "conv1d")

    def _backward(g: np.ndarray) -> None:
        gb = g[None] if squeeze else g
        if w.requires_grad:
            dw = np.tensordot(cols, gb, axes=([0, 1], [0, 1]))  # (Cin, K, Cout)
            _accumulate(w, np.transpose(dw, (1, 0, 2)))
        if x.requires_grad:
            dcols = np.tensordot(gb, w_t, axes=([2], [2]))  # (N, L, Cin, K)
            dxp = np.zeros_like(xp)
            for i in range(k):
                dxp[:, i:i + length, :] += dcols[..., i]
            dx = dxp[:, pad:pad + length, :]
            _accumulate(x, dx[0] if squeeze else dx)

    out._backward = _backward
    return out


def conv2d(x: ArrayLike, w: ArrayLike) -> Tensor:
    """
    Convolution 2D [H×W×Cin]·[K×K×Cin×Cout] -> [H×W×Cout], padding nul (K-1)/2.

    Raises:
        ShapeError: K pair, noyau non carré ou canaux incompatibles
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"conv2d: noyau K×K×Cin×Cout attendu, reçu {w.shape}")
    k, _, c_in, c_out = w.shape
    if k % 2 == 0:
        raise ShapeError(f"conv2d: taille de noyau impaire requise, reçu K={k}")
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or xd.shape[-1] != c_in:
        raise ShapeError(f"conv2d: entrée {x.shape} incompatible avec le noyau {w.shape}")
    n, height, width, _ = xd.shape
    pad = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    # (N, H, W, Cin, K, K)
    cols = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    w_t = np.transpose(w.data, (2, 0, 1, 3))  # (Cin, K, K, Cout)
    y = np.tensordot(cols, w_t, axes=([3, 4, 5], [0, 1, 2]))
    out = _result(y[0] if squeeze else y, (x, w), "conv2d")

    def _backward(g: np.ndarray) -> None:
        gb = g[None] if squeeze else g
        if w.requires_grad:
            dw = np.tensordot(cols, gb, axes=([0, 1, 2], [0, 1, 2]))  # (Cin, K, K, Cout)
            _accumulate(w, np.transpose(dw, (1, 2, 0, 3)))
        if x.requires_grad:
            dcols = np.tensordot(gb, w_t, axes=([3], [3]))  # (N, H, W, Cin, K, K)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, i:i + height, j:j + width, :] += dcols[..., i, j]
            dx = dxp[:, pad:pad + height, pad:pad + width, :]
            _accumulate(x, dx[0] if squeeze else dx)

    out._backward = _backward
    return out


def dropout(x: ArrayLike, rate: float, generator: np.random.Generator) -> Tensor:
    """Dropout inversé: les survivants sont mis à l'échelle par 1/(1-rate)."""
    x = as_tensor(x)
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        raise DomainError(f"dropout: taux {rate} hors de [0, 1)")
    keep = (generator.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# Rétropropagation
# ---------------------------------------------------------------------------


def _topological_order(root: Tensor) -> List[Tensor]:
    """Ordre topologique itératif (les graphes récurrents dépassent la pile Python)."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Calcule dLoss/dT pour tout tenseur T du graphe avec requires_grad.

    Raises:
        ShapeError: loss n'est pas un scalaire
    """
    if loss.size != 1:
        raise ShapeError(f"backward: perte scalaire attendue, forme {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "power",
    "absolute",
    "elementwise",
    "tensor_sum",
    "mean",
    "reshape",
    "transpose",
    "broadcast_to",
    "getitem",
    "concat",
    "stack",
    "matmul",
    "softmax",
    "conv1d",
    "conv2d",
    "dropout",
    "backward",
]
