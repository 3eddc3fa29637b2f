"""
地理令牌系统 - 有限差分梯度校验
/geotoken/backend/autodiff/gradcheck.py
"""
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from geotoken.backend.autodiff.tensor import Parameter, Tensor
from geotoken.backend.errors import DomainError

Index = Union[int, Tuple[int, ...]]


def _as_index(index: Index, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if isinstance(index, (int, np.integer)):
        return tuple(int(i) for i in np.unravel_index(int(index), shape))
    return tuple(int(i) for i in index)


def finite_diff_check(
        loss_fn: Callable[[], Tensor],
        param: Parameter,
        indices: Sequence[Index],
        h: float = 1e-5
) -> float:
    """
    用中心差分 (f(x+h)-f(x-h))/2h 校验解析梯度

    Args:
        loss_fn: 无参闭包, 每次调用重新前向计算并返回标量损失
        param: 被校验的参数
        indices: 抽样坐标（扁平下标或多维下标）
        h: 差分步长

    Returns:
        最大相对误差, 分母为 max(|解析|, |数值|, 1e-8)
    """
    if h <= 0:
        raise DomainError(f"step h must be positive, got {h}")
    param.zero_grad()
    loss_fn().backward()
    analytic = param.grad.copy()

    worst = 0.0
    for raw in indices:
        idx = _as_index(raw, param.shape)
        original = param.data[idx]
        param.data[idx] = original + h
        f_plus = loss_fn().item()
        param.data[idx] = original - h
        f_minus = loss_fn().item()
        param.data[idx] = original

        numeric = (f_plus - f_minus) / (2.0 * h)
        exact = float(analytic[idx])
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        worst = max(worst, error)
    return worst


def random_coordinates(param: Parameter, count: int, rng: np.random.Generator) -> List[Tuple[int, ...]]:
    """均匀抽取参数坐标"""
    flat = rng.integers(0, param.data.size, size=count)
    return [_as_index(int(i), param.shape) for i in flat]
