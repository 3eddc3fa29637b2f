"""
地理令牌系统 - 张量与反向模式自动微分
/geotoken/backend/autodiff/tensor.py

每个训练步动态构建计算图, backward 结束后立即释放。
只实现模型需要的算子, 全部使用 float64。
"""
import itertools
import math
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from geotoken.backend.errors import EmptyLossError, NonFiniteError, ShapeError, TokenIndexError

BackwardFn = Callable[[np.ndarray], None]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


class Tensor:
    """稠密 float64 张量, 行主序"""

    def __init__(
            self,
            data,
            requires_grad: bool = False,
            _parents: Tuple["Tensor", ...] = (),
            _op: str = ""
    ):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by {_op or 'input'}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward: Optional[BackwardFn] = None
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        self.grad = grad if self.grad is None else self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """反向传播, 结束后释放计算图"""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = self._topological_order()
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node._parents:
                node._parents = ()
                node._backward = None


_param_ids = itertools.count()


class Parameter(Tensor):
    """可训练参数, grad 与 data 同形状"""

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, _op="param")
        self.name = name or f"param_{next(_param_ids)}"
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def from_op(data: np.ndarray, parents: Sequence[Tensor], op: str, backward: BackwardFn) -> Tensor:
    """
    由算子结果创建张量并登记到计算图
    所有父节点都不需要梯度时不记录
    """
    parents = tuple(parents)
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, _parents=parents if requires else (), _op=op)
    if requires:
        out._backward = backward
    return out


def _require_2d(x: Tensor, op: str) -> None:
    if x.ndim != 2:
        raise ShapeError(f"{op} expects a 2-D tensor, got shape {x.shape}")


# ============ 基础算子 ============

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return from_op(a.data @ b.data, (a, b), "matmul", backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """同形状相加, 或二维张量加行偏置"""
    if a.shape == b.shape:
        def backward(g: np.ndarray) -> None:
            a._accumulate(g)
            b._accumulate(g)
    elif a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]:
        def backward(g: np.ndarray) -> None:
            a._accumulate(g)
            b._accumulate(g.sum(axis=0))
    else:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return from_op(a.data + b.data, (a, b), "add", backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul expects equal shapes, got {a.shape} and {b.shape}")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return from_op(a.data * b.data, (a, b), "mul", backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g: np.ndarray) -> None:
        a._accumulate(g * factor)

    return from_op(a.data * factor, (a,), "scale", backward)


def transpose(a: Tensor) -> Tensor:
    _require_2d(a, "transpose")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g.T)

    return from_op(a.data.T.copy(), (a,), "transpose", backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        a._accumulate(np.ones_like(a.data) * g)

    return from_op(np.array(a.data.sum()), (a,), "sum_all", backward)


def mean_scalars(values: Sequence[Tensor]) -> Tensor:
    """若干标量求平均（批内平均损失）"""
    if not values:
        raise ShapeError("mean_scalars needs at least one value")
    n = len(values)
    for v in values:
        if v.data.size != 1:
            raise ShapeError(f"mean_scalars expects scalars, got shape {v.shape}")
    total = math.fsum(float(v.data.reshape(())) for v in values)

    def backward(g: np.ndarray) -> None:
        for v in values:
            v._accumulate((g / n).reshape(v.shape))

    return from_op(np.array(total / n), values, "mean_scalars", backward)


# ============ 神经网络算子 ============

def softmax_rows(x: Tensor) -> Tensor:
    """按行 softmax, 先减去行最大值保证数值稳定"""
    _require_2d(x, "softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        x._accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    return from_op(s, (x,), "softmax_rows", backward)


def gelu(x: Tensor) -> Tensor:
    """tanh 形式的 GELU"""
    v = x.data
    t = np.tanh(_GELU_C * (v + _GELU_K * v ** 3))
    out = 0.5 * v * (1.0 + t)

    def backward(g: np.ndarray) -> None:
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * v * v)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * dt))

    return from_op(out, (x,), "gelu", backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """逐行层归一化, gamma / beta 形状为 [d]"""
    _require_2d(x, "layer_norm")
    d = x.shape[1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine parameters must have shape ({d},)")
    centered = x.data - x.data.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=1, keepdims=True) + eps)
    x_hat = centered * inv_std

    def backward(g: np.ndarray) -> None:
        gamma._accumulate((g * x_hat).sum(axis=0))
        beta._accumulate(g.sum(axis=0))
        d_hat = g * gamma.data
        x._accumulate(inv_std * (
            d_hat
            - d_hat.mean(axis=1, keepdims=True)
            - x_hat * (d_hat * x_hat).mean(axis=1, keepdims=True)
        ))

    return from_op(x_hat * gamma.data + beta.data, (x, gamma, beta), "layer_norm", backward)


def embedding(weight: Tensor, ids: Sequence[int]) -> Tensor:
    """按 token id 取行, 反向时按行累加"""
    _require_2d(weight, "embedding")
    index = np.asarray(ids, dtype=np.int64)
    if index.ndim != 1:
        raise ShapeError("embedding ids must be a flat sequence")
    if index.size and (index.min() < 0 or index.max() >= weight.shape[0]):
        raise TokenIndexError(f"token id out of range [0, {weight.shape[0]})")

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(weight.data)
        np.add.at(grad, index, g)
        weight._accumulate(grad)

    return from_op(weight.data[index], (weight,), "embedding", backward)


def cross_entropy(logits: Tensor, targets: Sequence[int], ignore_mask: Sequence[bool]) -> Tensor:
    """
    逐位置交叉熵, 对未屏蔽位置取平均

    Args:
        logits: [L, V]
        targets: 长度 L 的目标 id
        ignore_mask: 长度 L, True 表示该位置不计入损失
    """
    _require_2d(logits, "cross_entropy")
    length, vocab = logits.shape
    if len(targets) != length or len(ignore_mask) != length:
        raise ShapeError(f"targets and mask must have length {length}")
    keep = np.array([i for i, ignored in enumerate(ignore_mask) if not ignored], dtype=np.int64)
    if keep.size == 0:
        raise EmptyLossError("every position is masked")
    target_ids = np.asarray(targets, dtype=np.int64)[keep]
    if target_ids.min() < 0 or target_ids.max() >= vocab:
        raise TokenIndexError(f"target id out of range [0, {vocab})")

    z = logits.data
    z_max = z.max(axis=1, keepdims=True)
    log_probs = z - (np.log(np.exp(z - z_max).sum(axis=1, keepdims=True)) + z_max)
    loss = -log_probs[keep, target_ids].mean()

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(z)
        grad[keep] = np.exp(log_probs[keep])
        grad[keep, target_ids] -= 1.0
        logits._accumulate(grad * (g / keep.size))

    return from_op(np.array(loss), (logits,), "cross_entropy", backward)
