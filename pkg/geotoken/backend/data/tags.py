"""
地理令牌系统 - token 坐标标签
/geotoken/backend/data/tags.py

分段方案:
    '+' 之前的字符 → 起点 (φ, θ)
    '+' 之后的字符 → 终点 (φ+Δφ, θ+Δθ)
    '+' 与特殊 token → 单位旋转
这样查询 / 键之间的相对旋转恰好编码了球面位移。
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geotoken.backend.data.geodata import GeoSample, parse_input_text
from geotoken.backend.data.vocab import TokenSeq, Vocabulary, default_vocab, detokenize, tokenize
from geotoken.backend.encoding.spherical import GeoAngles, geo_blocks
from geotoken.backend.errors import DomainError, ParseError, SequenceLengthError

SEPARATOR = "+"


@dataclass(frozen=True)
class TokenGeoTag:
    """每个 token 一个可选的 GeoAngles, None 表示单位旋转"""
    tags: Tuple[Optional[GeoAngles], ...]

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    @classmethod
    def identity(cls, length: int) -> "TokenGeoTag":
        return cls(tags=(None,) * length)

    @classmethod
    def uniform(cls, length: int, angles: GeoAngles) -> "TokenGeoTag":
        return cls(tags=(angles,) * length)

    def blocks(self) -> np.ndarray:
        """[L, 3, 3] 旋转块"""
        return geo_blocks(self.tags)

    def shifted(self, dlat: float = 0.0, dlon: float = 0.0) -> "TokenGeoTag":
        """所有非空标签整体平移（弧度）"""
        return TokenGeoTag(tags=tuple(None if t is None else t.shifted(dlat, dlon) for t in self.tags))

    @property
    def is_identity(self) -> bool:
        return all(t is None for t in self.tags)


def _validated_text(tokens: TokenSeq, vocab: Vocabulary) -> str:
    ids = list(tokens)
    if not ids or ids[-1] != vocab.eos_id or ids.count(vocab.eos_id) != 1:
        raise ParseError("token sequence must end with exactly one EOS")
    if any(vocab.is_special(i) for i in ids[:-1]):
        raise ParseError("special tokens are only allowed at the end of a sample")
    text = detokenize(ids, vocab)
    parse_input_text(text)
    return text


def tag_segments(
        tokens: TokenSeq,
        origin: GeoAngles,
        destination: GeoAngles,
        vocab: Vocabulary = default_vocab
) -> TokenGeoTag:
    """按分段方案给每个 token 打标签"""
    _validated_text(tokens, vocab)
    separator_id = vocab.id_of(SEPARATOR)
    tags: List[Optional[GeoAngles]] = []
    current: Optional[GeoAngles] = origin
    for token_id in tokens:
        if token_id == separator_id:
            tags.append(None)
            current = destination
        elif vocab.is_special(token_id):
            tags.append(None)
        else:
            tags.append(current)
    return TokenGeoTag(tags=tuple(tags))


def assign_token_coordinates(
        sample: GeoSample,
        tokens: TokenSeq,
        vocab: Vocabulary = default_vocab
) -> TokenGeoTag:
    """用样本的真实起点 / 终点坐标打标签"""
    text = _validated_text(tokens, vocab)
    if text != sample.input_text:
        raise ParseError(f"tokens spell {text!r}, sample text is {sample.input_text!r}")
    lat, lon, dlat, dlon = parse_input_text(text)
    origin = GeoAngles.from_degrees(lat, lon)
    destination = GeoAngles.from_degrees(lat + dlat, lon + dlon)
    return tag_segments(tokens, origin, destination, vocab)


def randomize_tags(
        dataset: Sequence[GeoSample],
        seed: int,
        vocab: Vocabulary = default_vocab
) -> List[TokenGeoTag]:
    """
    基线: 每个样本的起点 / 终点换成独立均匀随机的经纬度
    只在生成时抽取一次, 各 epoch 复用
    """
    if not dataset:
        raise DomainError("dataset must not be empty")
    rng = np.random.default_rng(seed)
    result = []
    for sample in dataset:
        tokens = tokenize(sample.input_text, vocab)
        origin = GeoAngles.from_degrees(float(rng.uniform(-90.0, 90.0)), float(rng.uniform(-180.0, 180.0)))
        destination = GeoAngles.from_degrees(float(rng.uniform(-90.0, 90.0)), float(rng.uniform(-180.0, 180.0)))
        result.append(tag_segments(tokens, origin, destination, vocab))
    return result


def build_target(
        sample: GeoSample,
        input_length: int,
        vocab: Vocabulary = default_vocab
) -> Tuple[List[int], List[bool]]:
    """
    目标序列 = 距离字符串 + EOS, 用 PAD 补齐到输入长度

    Returns:
        (target_ids, ignore_mask), EOS 之后的位置被忽略
    """
    target = list(tokenize(sample.target_text, vocab))
    if len(target) > input_length:
        raise SequenceLengthError(f"target of length {len(target)} longer than input {input_length}")
    padding = input_length - len(target)
    return target + [vocab.pad_id] * padding, [False] * len(target) + [True] * padding
