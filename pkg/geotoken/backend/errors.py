"""
地理令牌系统 - 异常定义
/geotoken/backend/errors.py
"""
from typing import Optional


class GeoTokenError(Exception):
    """所有业务异常的基类"""


class InvalidDimensionError(GeoTokenError, ValueError):
    """维度不合法（奇数维、不能被3整除、长度不匹配）"""


class ShapeError(GeoTokenError, ValueError):
    """张量形状不匹配"""


class NonFiniteError(GeoTokenError, FloatingPointError):
    """张量中出现 NaN / Inf"""


class EmptyLossError(GeoTokenError, ValueError):
    """所有位置都被屏蔽，无法计算损失"""


class TokenIndexError(GeoTokenError, IndexError):
    """目标 token id 超出词表范围"""


class DomainError(GeoTokenError, ValueError):
    """角度或经纬度超出定义域"""


class VocabularyError(GeoTokenError, ValueError):
    """字符不在词表中"""


class SequenceLengthError(GeoTokenError, ValueError):
    """序列超过最大长度"""


class ParseError(GeoTokenError, ValueError):
    """文本 / CSV / token 序列解析失败"""


class SchemaError(ParseError):
    """数据文件字段缺失或取值不合法"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")


class TrainingDivergedError(GeoTokenError, RuntimeError):
    """训练过程中损失变为非有限值"""

    def __init__(self, epoch: int, batch: int, reason: str):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {reason}")
