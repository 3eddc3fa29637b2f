"""
地理令牌系统 - 标签来源定义
/geotoken/backend/sources/definitions.py
"""
from typing import List, Optional, Sequence

from geotoken.backend.config import RunMode
from geotoken.backend.data.geodata import GeoSample
from geotoken.backend.data.tags import TokenGeoTag, assign_token_coordinates, randomize_tags
from geotoken.backend.data.vocab import Vocabulary, default_vocab, tokenize
from geotoken.backend.sources.base import BaseTagSource


class GeoTagSource(BaseTagSource):
    """真实坐标"""

    def __init__(self):
        super().__init__()
        self.mode = RunMode.GEO
        self.name = "真实经纬度"
        self.description = "起点段用起点坐标, 位移段用终点坐标"

    def build_tags(self, samples: Sequence[GeoSample], seed: int,
                   vocab: Vocabulary = default_vocab) -> List[TokenGeoTag]:
        return [assign_token_coordinates(s, tokenize(s.input_text, vocab), vocab) for s in samples]


class RandomTagSource(BaseTagSource):
    """随机坐标基线"""

    def __init__(self):
        super().__init__()
        self.mode = RunMode.RANDOM
        self.name = "随机经纬度"
        self.description = "分段方式不变, 坐标换成均匀随机的经纬度"

    def build_tags(self, samples: Sequence[GeoSample], seed: int,
                   vocab: Vocabulary = default_vocab) -> List[TokenGeoTag]:
        return randomize_tags(samples, seed, vocab)


class NoneTagSource(BaseTagSource):
    """无位置信息对照组"""

    def __init__(self):
        super().__init__()
        self.mode = RunMode.NONE
        self.name = "无位置信息"
        self.description = "所有 token 使用单位旋转"

    def build_tags(self, samples: Sequence[GeoSample], seed: int,
                   vocab: Vocabulary = default_vocab) -> List[TokenGeoTag]:
        return [TokenGeoTag.identity(len(tokenize(s.input_text, vocab))) for s in samples]


# ============ 标签来源注册中心 ============

class TagSourceRegistry:
    """标签来源注册中心"""

    def __init__(self):
        self._sources = {}
        self._register_default_sources()

    def _register_default_sources(self):
        for source in (GeoTagSource(), RandomTagSource(), NoneTagSource()):
            self.register(source)

    def register(self, source: BaseTagSource):
        self._sources[source.mode] = source

    def get(self, mode: RunMode) -> Optional[BaseTagSource]:
        return self._sources.get(RunMode(mode))

    def get_all(self) -> list:
        return list(self._sources.values())


tag_source_registry = TagSourceRegistry()
