"""
地理令牌系统 - 球面旋转位置编码
/geotoken/backend/encoding/spherical.py

包含三类位置编码:
1. 正弦绝对位置编码（参考实现，仅用于测试对照）
2. 一维 RoPE 旋转编码（参考实现）
3. 球面旋转编码: 每三个相邻维度乘以 Rz(经度)·Rx(纬度)

所有函数均为纯函数，角度一律使用弧度。
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from geotoken.backend.errors import DomainError, InvalidDimensionError

HALF_PI = math.pi / 2
TWO_PI = 2 * math.pi
ROPE_BASE = 10000.0

# 3x3 行主序正交矩阵，即块对角旋转矩阵中的一个对角块
RotationBlock3 = np.ndarray


def normalize_longitude(theta: float) -> float:
    """把经度归一化到 [-π, π)"""
    wrapped = ((theta + math.pi) % TWO_PI) - math.pi
    # 取模可能舍入到恰好 +π
    return wrapped - TWO_PI if wrapped >= math.pi else wrapped


def degrees_to_radians(value: float) -> float:
    return value * math.pi / 180.0


@dataclass(frozen=True)
class GeoAngles:
    """
    地理角度（弧度）
    lat_phi: 纬度 φ, 取值 [-π/2, π/2], 对应绕 x 轴旋转
    lon_theta: 经度 θ, 归一化到 [-π, π), 对应绕 z 轴旋转
    """
    lat_phi: float
    lon_theta: float

    def __post_init__(self):
        lat, lon = float(self.lat_phi), float(self.lon_theta)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise DomainError(f"angles must be finite, got ({lat}, {lon})")
        if abs(lat) > HALF_PI + 1e-12:
            raise DomainError(f"latitude {lat} rad outside [-pi/2, pi/2]")
        object.__setattr__(self, "lat_phi", min(HALF_PI, max(-HALF_PI, lat)))
        object.__setattr__(self, "lon_theta", normalize_longitude(lon))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "GeoAngles":
        """由角度制构造"""
        return cls(degrees_to_radians(lat_deg), degrees_to_radians(lon_deg))

    def shifted(self, dlat: float = 0.0, dlon: float = 0.0) -> "GeoAngles":
        """平移（弧度），经度自动回绕"""
        return GeoAngles(self.lat_phi + dlat, self.lon_theta + dlon)

    def to_degrees(self) -> Tuple[float, float]:
        return self.lat_phi * 180.0 / math.pi, self.lon_theta * 180.0 / math.pi


def _require_even(dim: int) -> None:
    if dim < 2 or dim % 2 != 0:
        raise InvalidDimensionError(f"dimension must be even and >= 2, got {dim}")


# ============ 正弦绝对位置编码 ============

def sinusoidal_encoding(pos: int, dim: int) -> np.ndarray:
    """
    原始 Transformer 的绝对位置编码

    Args:
        pos: 非负整数位置
        dim: 偶数维度

    Returns:
        长度为 dim 的向量, 偶数位 sin, 奇数位 cos
    """
    _require_even(dim)
    if pos < 0:
        raise DomainError(f"position must be non-negative, got {pos}")
    t = np.arange(dim // 2, dtype=np.float64)
    angles = pos / np.power(ROPE_BASE, 2.0 * t / dim)
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


# ============ RoPE 参考实现 ============

@dataclass(frozen=True)
class RopeFrequencies:
    """RoPE 频率表, thetas 严格递减且为正"""
    dim: int
    thetas: Tuple[float, ...]

    def __post_init__(self):
        _require_even(self.dim)
        thetas = tuple(float(t) for t in self.thetas)
        if len(thetas) != self.dim // 2:
            raise InvalidDimensionError(f"expected {self.dim // 2} frequencies, got {len(thetas)}")
        if any(t <= 0 for t in thetas):
            raise DomainError("rope frequencies must be positive")
        if any(a <= b for a, b in zip(thetas, thetas[1:])):
            raise DomainError("rope frequencies must be strictly decreasing")
        object.__setattr__(self, "thetas", thetas)


def rope_frequencies(dim: int) -> RopeFrequencies:
    """θ_i = 10000^(-(2i-1)/d), i = 1..d/2"""
    _require_even(dim)
    i = np.arange(1, dim // 2 + 1, dtype=np.float64)
    thetas = np.power(ROPE_BASE, -(2.0 * i - 1.0) / dim)
    return RopeFrequencies(dim=dim, thetas=tuple(thetas.tolist()))


def rope_rotate(x: np.ndarray, m: int, freqs: RopeFrequencies) -> np.ndarray:
    """把每对 (x[2t], x[2t+1]) 旋转 m·θ_t"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != freqs.dim:
        raise InvalidDimensionError(f"vector of length {freqs.dim} expected, got shape {x.shape}")
    angles = m * np.asarray(freqs.thetas)
    cos, sin = np.cos(angles), np.sin(angles)
    even, odd = x[0::2], x[1::2]
    out = np.empty_like(x)
    out[0::2] = even * cos - odd * sin
    out[1::2] = even * sin + odd * cos
    return out


def rope_attention_score(q: np.ndarray, k: np.ndarray, m: int, n: int, freqs: RopeFrequencies) -> float:
    """<R_m q, R_n k>, 只依赖相对位置 m - n"""
    return float(np.dot(rope_rotate(q, m, freqs), rope_rotate(k, n, freqs)))


# ============ 三维旋转 ============

def axis_rotation_x(phi: float) -> RotationBlock3:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0],
                     [0.0, c, -s],
                     [0.0, s, c]])


def axis_rotation_z(theta: float) -> RotationBlock3:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0],
                     [s, c, 0.0],
                     [0.0, 0.0, 1.0]])


def euler_rotation(phi: float, psi: float, theta: float) -> RotationBlock3:
    """
    完整欧拉旋转矩阵 Rz(θ)·Ry(ψ)·Rx(φ)

    Args:
        phi: 绕 x 轴
        psi: 绕 y 轴
        theta: 绕 z 轴
    """
    cf, sf = math.cos(phi), math.sin(phi)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [cp * ct, -cf * st + sf * sp * ct, sf * st + cf * sp * ct],
        [cp * st, cf * ct + sf * sp * st, -sf * ct + cf * sp * st],
        [-sp, sf * cp, cf * cp],
    ])


def spherical_block(angles: GeoAngles) -> RotationBlock3:
    """ψ = 0 时的欧拉旋转, 等于 Rz(θ)·Rx(φ)"""
    cf, sf = math.cos(angles.lat_phi), math.sin(angles.lat_phi)
    ct, st = math.cos(angles.lon_theta), math.sin(angles.lon_theta)
    return np.array([
        [ct, -cf * st, sf * st],
        [st, cf * ct, -sf * ct],
        [0.0, sf, cf],
    ])


def relative_geo_rotation(aq: GeoAngles, ak: GeoAngles) -> RotationBlock3:
    """R(aq)ᵀ·R(ak): 查询与键之间的相对旋转"""
    return spherical_block(aq).T @ spherical_block(ak)


def geo_blocks(tags: Sequence[Optional[GeoAngles]]) -> np.ndarray:
    """每个 token 一个 3x3 块, 缺省标签为单位阵"""
    blocks = np.empty((len(tags), 3, 3), dtype=np.float64)
    for i, tag in enumerate(tags):
        blocks[i] = np.eye(3) if tag is None else spherical_block(tag)
    return blocks


@dataclass(frozen=True)
class GeoRotary:
    """
    块对角球面旋转
    只按三元组逐块相乘, 不构造 dim x dim 的稠密矩阵
    """
    dim: int

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 3 != 0:
            raise InvalidDimensionError(f"embedding dimension must be a positive multiple of 3, got {self.dim}")

    def _check_vector(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise InvalidDimensionError(f"vector of length {self.dim} expected, got shape {x.shape}")
        return x

    def apply_block(self, x: np.ndarray, block: RotationBlock3) -> np.ndarray:
        x = self._check_vector(x)
        return (x.reshape(-1, 3) @ block.T).reshape(-1)

    def apply(self, x: np.ndarray, angles: GeoAngles) -> np.ndarray:
        return self.apply_block(x, spherical_block(angles))

    def apply_rows(self, x: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        """x: [L, dim], blocks: [L, 3, 3]; 第 l 行的每个三元组乘以 blocks[l]"""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise InvalidDimensionError(f"rows of length {self.dim} expected, got shape {x.shape}")
        if blocks.shape != (x.shape[0], 3, 3):
            raise InvalidDimensionError(f"blocks of shape ({x.shape[0]}, 3, 3) expected, got {blocks.shape}")
        triples = x.reshape(x.shape[0], -1, 3)
        return np.einsum("lij,lbj->lbi", blocks, triples).reshape(x.shape)


def apply_geo_rotation(x: np.ndarray, angles: GeoAngles, rot: GeoRotary) -> np.ndarray:
    """对向量 x 施加球面旋转, 保持范数"""
    return rot.apply(x, angles)


def geo_attention_score(
        q: np.ndarray,
        k: np.ndarray,
        aq: GeoAngles,
        ak: GeoAngles,
        rot: GeoRotary
) -> float:
    """旋转后查询与键的内积"""
    return float(np.dot(rot.apply(q, aq), rot.apply(k, ak)))
