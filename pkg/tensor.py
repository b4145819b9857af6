"""
Módulo do motor de tensores densos com diferenciação reversa.

Este módulo contém o tipo Tensor (float64, row-major), as operações primitivas
usadas pelas perdas e pelas redes de brinquedo, e a passagem reversa que
acumula gradientes pela regra da cadeia. O grafo é reconstruído a cada passo
(define-by-run).
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config import NUMERIC_PARAMS

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class ShapeError(ValueError):
    """Formas incompatíveis entre operandos."""


class NumericalError(ArithmeticError):
    """Valor não finito (NaN ou infinito) produzido por uma operação."""


def _check_finite(values: np.ndarray, origem: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"valor não finito produzido por {origem}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # Soma as dimensões expandidas pelo broadcasting do numpy
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for eixo, tamanho in enumerate(shape):
        if tamanho == 1 and grad.shape[eixo] != 1:
            grad = grad.sum(axis=eixo, keepdims=True)
    return grad


def _broadcast_shape(a: np.ndarray, b: np.ndarray, operacao: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{operacao}: formas incompatíveis {a.shape} e {b.shape}") from None


class Function:
    """
    Classe base das operações diferenciáveis.

    Subclasses implementam forward (arrays numpy -> array numpy) e backward
    (gradiente da saída -> gradientes das entradas, na mesma ordem).
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: ArrayLike, **kwargs) -> "Tensor":
        """
        Aplica a operação e conecta o resultado ao grafo.

        Args:
            *tensors: Entradas (tensores ou valores convertíveis).
            **kwargs: Parâmetros da operação repassados ao forward.

        Returns:
            Tensor: Resultado, rastreado se alguma entrada rastreia gradiente.
        """
        entradas = tuple(as_tensor(t) for t in tensors)
        func = cls(*entradas)
        saida = np.asarray(func.forward(*(t.data for t in entradas), **kwargs), dtype=np.float64)
        _check_finite(saida, cls.__name__)
        requires_grad = any(t.requires_grad for t in entradas)
        return Tensor(saida, requires_grad=requires_grad, _ctx=func if requires_grad else None)


class Tensor:
    """
    Arranjo denso n-dimensional de float64 com rastreamento opcional de gradiente.
    """

    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 _ctx: Optional[Function] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        if _ctx is None:
            _check_finite(self.data, name or "Tensor")
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    # ------------------------------------------------------------------
    # Propriedades
    # ------------------------------------------------------------------

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
        if self.data.size != 1:
            raise ShapeError(f"item() exige um tensor escalar, forma {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rotulo = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{rotulo})"

    # ------------------------------------------------------------------
    # Passagem reversa
    # ------------------------------------------------------------------

    def backward(self) -> None:
        """
        Propaga d(self)/d(folha) para todas as folhas rastreadas.

        Chamadas repetidas sem zerar os gradientes acumulam.

        Raises:
            ShapeError: Se o tensor não for escalar.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward exige uma perda escalar, forma {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward chamado em um tensor que não rastreia gradiente")

        ordem = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(ordem):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = np.asarray(parent_grad, dtype=np.float64)
                if parent_grad.shape != parent.shape:
                    parent_grad = _unbroadcast(parent_grad, parent.shape)
                _check_finite(parent_grad, f"gradiente de {type(node._ctx).__name__}")
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

    # ------------------------------------------------------------------
    # Operadores
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(other, self)

    def __neg__(self) -> "Tensor":
        return Mul.apply(self, -1.0)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(other, self)

    def __pow__(self, exponent: float) -> "Tensor":
        return Pow.apply(self, exponent=float(exponent))

    def __getitem__(self, idx) -> "Tensor":
        return GetItem.apply(self, idx=idx)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        return Transpose.apply(self, axes=axes or None)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def leaky_relu(self, slope: float = NUMERIC_PARAMS["leaky_slope"]) -> "Tensor":
        return LeakyReLU.apply(self, slope=slope)


def _topological_order(root: Tensor) -> List[Tensor]:
    # DFS iterativa: cada nó entra na lista depois de todos os seus pais
    ordem: List[Tensor] = []
    visitados = set()
    pilha = [(root, False)]
    while pilha:
        node, expandido = pilha.pop()
        if expandido:
            ordem.append(node)
            continue
        if id(node) in visitados:
            continue
        visitados.add(id(node))
        pilha.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visitados:
                    pilha.append((parent, False))
    return ordem


def as_tensor(value: ArrayLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def parameter(values: ArrayLike, name: Optional[str] = None) -> Tensor:
    """
    Cria uma folha rastreada (parâmetro treinável).
    """
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ----------------------------------------------------------------------
# Operações elemento a elemento
# ----------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b, "add")
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b, "subtract")
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b, "multiply")
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a, b):
        _broadcast_shape(a, b, "divide")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / (self.b * self.b)


class Pow(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1.0),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sqrt(Function):
    def forward(self, a):
        with np.errstate(invalid="ignore"):
            self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        with np.errstate(divide="ignore"):
            return (grad * 0.5 / self.out,)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    def forward(self, a):
        e = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class LeakyReLU(Function):
    def forward(self, a, slope):
        self.mask = np.where(a > 0, 1.0, slope)
        return a * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Clamp(Function):
    def forward(self, a, lo, hi):
        self.dentro = (a >= lo) & (a <= hi)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        return (grad * self.dentro,)


class SmoothL1(Function):
    # limiar beta = 1: 0.5 e^2 se |e| < 1, senão |e| - 0.5
    def forward(self, e):
        self.e = e
        absoluto = np.abs(e)
        return np.where(absoluto < 1.0, 0.5 * e * e, absoluto - 0.5)

    def backward(self, grad):
        return (grad * np.where(np.abs(self.e) < 1.0, self.e, np.sign(self.e)),)


# ----------------------------------------------------------------------
# Reduções e manipulação de forma
# ----------------------------------------------------------------------

def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        eixos = (axis,) if isinstance(axis, int) else tuple(axis)
        eixos = tuple(sorted(e % len(shape) for e in eixos))
        grad = np.expand_dims(grad, eixos)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        return (_expand_reduced(grad, self.shape, self.axis, self.keepdims).copy(),)


class Mean(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        out = np.mean(a, axis=axis, keepdims=keepdims)
        self.count = a.size // max(np.size(out), 1)
        return out

    def backward(self, grad):
        return (_expand_reduced(grad, self.shape, self.axis, self.keepdims) / self.count,)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: forma {a.shape} incompatível com {tuple(shape)}") from None

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a, axes):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        if self.axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, a, idx):
        self.shape, self.idx = a.shape, idx
        return np.array(a[idx])

    def backward(self, grad):
        cheio = np.zeros(self.shape)
        np.add.at(cheio, self.idx, grad)
        return (cheio,)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.limites = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError:
            formas = " e ".join(str(a.shape) for a in arrays)
            raise ShapeError(f"concatenate: formas incompatíveis {formas}") from None

    def backward(self, grad):
        return tuple(np.split(grad, self.limites, axis=self.axis))


class L2Norm(Function):
    # gradiente definido como 0 onde a norma é exatamente 0
    def forward(self, a, axis, keepdims):
        self.a, self.axis, self.keepdims = a, axis, keepdims
        self.out = np.sqrt(np.sum(a * a, axis=axis, keepdims=True))
        if keepdims:
            return self.out
        return np.sum(self.out, axis=axis) if axis is not None else self.out.reshape(())

    def backward(self, grad):
        if self.axis is None:
            grad = np.reshape(grad, (1,) * self.a.ndim)
        elif not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        seguro = np.where(self.out > 0, self.out, 1.0)
        return (np.where(self.out > 0, grad * self.a / seguro, 0.0),)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: formas incompatíveis {a.shape} e {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Softmax(Function):
    def forward(self, a):
        e = np.exp(a - np.max(a, axis=-1, keepdims=True))
        self.out = e / np.sum(e, axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        return (self.out * (grad - np.sum(grad * self.out, axis=-1, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, a):
        deslocado = a - np.max(a, axis=-1, keepdims=True)
        log_soma = np.log(np.sum(np.exp(deslocado), axis=-1, keepdims=True))
        out = deslocado - log_soma
        self.softmax = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.softmax * np.sum(grad, axis=-1, keepdims=True),)


# ----------------------------------------------------------------------
# Convolução e reamostragem espacial (layout N x C x H x W)
# ----------------------------------------------------------------------

class Conv2d(Function):
    def forward(self, x, w, stride, padding):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d: formas incompatíveis {x.shape} e {w.shape}")
        if stride not in (1, 2):
            raise ValueError(f"conv2d: stride deve ser 1 ou 2 (recebido {stride})")
        self.x_shape, self.w, self.stride, self.padding = x.shape, w, stride, padding
        p = padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        self.xp_shape = xp.shape
        kh, kw = w.shape[2:]
        if xp.shape[2] < kh or xp.shape[3] < kw:
            raise ShapeError(f"conv2d: entrada {x.shape} menor que o kernel {w.shape}")
        self.janelas = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        return np.einsum("nchwij,ocij->nohw", self.janelas, w, optimize=True)

    def backward(self, grad):
        s, p = self.stride, self.padding
        kh, kw = self.w.shape[2:]
        grad_w = np.einsum("nchwij,nohw->ocij", self.janelas, grad, optimize=True)
        grad_janelas = np.einsum("nohw,ocij->nchwij", grad, self.w, optimize=True)
        grad_xp = np.zeros(self.xp_shape)
        ho, wo = grad.shape[2:]
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, :, i:i + s * ho:s, j:j + s * wo:s] += grad_janelas[:, :, :, :, i, j]
        h, w = self.x_shape[2:]
        return grad_xp[:, :, p:p + h, p:p + w], grad_w


class UpsampleNearest(Function):
    def forward(self, x, factor):
        self.factor = factor
        return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)

    def backward(self, grad):
        f = self.factor
        *lead, h, w = grad.shape
        return (grad.reshape(*lead, h // f, f, w // f, f).sum(axis=(-3, -1)),)


def _pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    # Célula i cobre [floor(i*n_in/n_out), ceil((i+1)*n_in/n_out))
    matriz = np.zeros((n_out, n_in))
    for i in range(n_out):
        inicio = (i * n_in) // n_out
        fim = -((-(i + 1) * n_in) // n_out)
        matriz[i, inicio:fim] = 1.0 / (fim - inicio)
    return matriz


class AdaptiveAvgPool2d(Function):
    def forward(self, x, output_size):
        oh, ow = output_size
        self.ph = _pool_matrix(x.shape[-2], oh)
        self.pw = _pool_matrix(x.shape[-1], ow)
        return np.einsum("ih,...hw,jw->...ij", self.ph, x, self.pw)

    def backward(self, grad):
        return (np.einsum("ih,...ij,jw->...hw", self.ph, grad, self.pw),)


# ----------------------------------------------------------------------
# API funcional
# ----------------------------------------------------------------------

def dot(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Produto interno de dois vetores 1-D de mesmo comprimento.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: formas incompatíveis {a.shape} e {b.shape}")
    return (a * b).sum()


def log(a: ArrayLike) -> Tensor:
    return Log.apply(a)


def leaky_relu(a: ArrayLike, slope: float = NUMERIC_PARAMS["leaky_slope"]) -> Tensor:
    return LeakyReLU.apply(a, slope=slope)


def clamp_probability(p: ArrayLike, eps: float = NUMERIC_PARAMS["prob_eps"]) -> Tensor:
    return Clamp.apply(p, lo=eps, hi=1.0 - eps)


def log_prob(p: ArrayLike, eps: float = NUMERIC_PARAMS["prob_eps"]) -> Tensor:
    """
    log(p) com p restrito a [eps, 1 - eps].
    """
    return Log.apply(clamp_probability(p, eps))


def log_one_minus_prob(p: ArrayLike, eps: float = NUMERIC_PARAMS["prob_eps"]) -> Tensor:
    """
    log(1 - p) com p restrito a [eps, 1 - eps].
    """
    return Log.apply(1.0 - clamp_probability(p, eps))


def smooth_l1(diff: ArrayLike) -> Tensor:
    return SmoothL1.apply(diff)


def l2_norm(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    """
    Norma L2 (Frobenius quando axis=None) com gradiente nulo na origem.
    """
    return L2Norm.apply(a, axis=axis, keepdims=keepdims)


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    expandidos = []
    for t in tensors:
        t = as_tensor(t)
        forma = list(t.shape)
        forma.insert(axis % (t.ndim + 1), 1)
        expandidos.append(t.reshape(tuple(forma)))
    return Concat.apply(*expandidos, axis=axis)


def softmax(a: ArrayLike) -> Tensor:
    return Softmax.apply(a)


def log_softmax(a: ArrayLike) -> Tensor:
    return LogSoftmax.apply(a)


def conv2d(x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    Convolução 2-D (correlação cruzada) com preenchimento por zeros.

    Args:
        x: Entrada N x C x H x W.
        weight: Kernel O x C x kh x kw.
        bias: Viés de O elementos (opcional).
        stride: Passo 1 ou 2.
        padding: Zeros adicionados em cada borda espacial.

    Returns:
        Tensor: Saída N x O x H' x W'.
    """
    out = Conv2d.apply(x, weight, stride=stride, padding=padding)
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, -1, 1, 1)
    return out


def upsample_nearest(x: ArrayLike, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)


def adaptive_avg_pool2d(x: ArrayLike, output_size: Tuple[int, int]) -> Tensor:
    """
    Média adaptativa sobre as duas últimas dimensões, com partição uniforme
    (limites floor/ceil) das células de entrada.
    """
    return AdaptiveAvgPool2d.apply(x, output_size=tuple(output_size))
