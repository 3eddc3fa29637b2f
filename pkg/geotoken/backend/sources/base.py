"""
地理令牌系统 - 标签来源基类
/geotoken/backend/sources/base.py
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Sequence

from geotoken.backend.config import RunMode
from geotoken.backend.data.geodata import GeoSample
from geotoken.backend.data.tags import TokenGeoTag
from geotoken.backend.data.vocab import Vocabulary, default_vocab


class BaseTagSource(ABC):
    """标签来源抽象基类, 每种运行模式对应一个实现"""

    def __init__(self):
        self.mode: RunMode = RunMode.NONE
        self.name: str = ""
        self.description: str = ""

    @abstractmethod
    def build_tags(
            self,
            samples: Sequence[GeoSample],
            seed: int,
            vocab: Vocabulary = default_vocab
    ) -> List[TokenGeoTag]:
        """为每个样本生成 token 标签, 只在训练前调用一次"""
        pass

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        return {
            "mode": self.mode.value,
            "name": self.name,
            "description": self.description
        }
