"""
地理令牌系统 - Adam 优化器
/geotoken/backend/autodiff/optim.py
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from geotoken.backend.autodiff.tensor import Parameter
from geotoken.backend.config import AdamConfig
from geotoken.backend.errors import ShapeError


@dataclass
class AdamState:
    """Adam 状态, 一阶 / 二阶矩按参数名保存"""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: AdamConfig) -> "AdamState":
        return cls(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)


def adam_step(params: Iterable[Parameter], state: AdamState) -> None:
    """
    带偏差修正的 Adam 更新
    m̂ = m/(1-β1^t), v̂ = v/(1-β2^t), p ← p - lr·m̂/(√v̂+ε)
    """
    params = list(params)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ShapeError("parameter names must be unique within one optimizer")

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None or m.shape != p.shape:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[p.name] = m
        state.v[p.name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
