"""
地理令牌系统 - 球面旋转编码 Transformer
/geotoken/backend/model/transformer.py

单头、单个编码器-解码器块:
    编码器: 地理自注意力 → 残差 + LN → 前馈 → 残差 + LN
    解码器: 同一输入的地理自注意力（无掩码）→ 编码器-解码器地理注意力 → 前馈
    输出层: 每个位置映射到词表 logits
位置信息只通过 Q / K 的球面旋转进入, 不加任何位置编码。
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geotoken.backend.autodiff.tensor import (
    Parameter,
    Tensor,
    add,
    embedding,
    from_op,
    gelu,
    layer_norm,
    matmul,
    scale,
    softmax_rows,
    transpose,
)
from geotoken.backend.config import ModelConfig
from geotoken.backend.data.tags import TokenGeoTag
from geotoken.backend.encoding.spherical import GeoRotary
from geotoken.backend.errors import SequenceLengthError, ShapeError

ATTENTION_LAYERS = ("enc.self_attn", "dec.self_attn", "dec.cross_attn")
LAYER_NORMS = ("enc.ln1", "enc.ln2", "dec.ln1", "dec.ln2", "dec.ln3")
FEED_FORWARDS = ("enc.ffn", "dec.ffn")
OUTPUT_GAIN = 0.5


@dataclass
class EncDecActivations:
    """前向结果, attention 保存三个注意力层的 softmax 权重"""
    encoder_output: Tensor
    logits: Tensor
    attention: Dict[str, np.ndarray] = field(default_factory=dict)


def rotate_rows(x: Tensor, blocks: Optional[np.ndarray]) -> Tensor:
    """可微的逐行球面旋转, blocks 为 None 时即单位旋转"""
    if blocks is None:
        return x
    rot = GeoRotary(x.shape[1])
    transposed = np.ascontiguousarray(blocks.transpose(0, 2, 1))

    def backward(g: np.ndarray) -> None:
        x._accumulate(rot.apply_rows(g, transposed))

    return from_op(rot.apply_rows(x.data, blocks), (x,), "rotate_rows", backward)


def _blocks_of(tags: TokenGeoTag) -> Optional[np.ndarray]:
    return None if tags.is_identity else tags.blocks()


def geo_attention(
        q: Tensor,
        k: Tensor,
        v: Tensor,
        tags_q: TokenGeoTag,
        tags_k: TokenGeoTag
) -> Tuple[Tensor, Tensor]:
    """
    地理注意力: 旋转 Q / K 的每一行, V 不旋转

    Args:
        q: [Lq, d] 投影后的查询
        k, v: [Lk, d] 投影后的键 / 值
        tags_q, tags_k: 每行对应的坐标标签

    Returns:
        (softmax(QKᵀ/√d)·V, 注意力权重)
    """
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("attention inputs must be 2-D")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention shapes disagree: q{q.shape} k{k.shape} v{v.shape}")
    if len(tags_q) != q.shape[0] or len(tags_k) != k.shape[0]:
        raise ShapeError("tag count must equal sequence length")
    q_rot = rotate_rows(q, _blocks_of(tags_q))
    k_rot = rotate_rows(k, _blocks_of(tags_k))
    scores = softmax_rows(scale(matmul(q_rot, transpose(k_rot)), 1.0 / math.sqrt(q.shape[1])))
    return matmul(scores, v), scores


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    bound = gain * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def triple_mask(d_model: int, parity: int) -> np.ndarray:
    """第 0, 2, 4 ... 个三元组 (parity=0) 或第 1, 3, 5 ... 个 (parity=1) 为 1 的列掩码"""
    return ((np.arange(d_model) // 3) % 2 == parity).astype(float)


class GeoTransformer:
    """
    地理 Transformer
    参数按固定顺序用种子初始化, 同一种子在任何模式下权重一致
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: Dict[str, Parameter] = {}
        self._init_parameters(np.random.default_rng(seed))

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = Parameter(data, name=name)

    def _init_parameters(self, rng: np.random.Generator) -> None:
        d, d_ff, vocab = self.config.d_model, self.config.d_ff, self.config.vocab_size
        self._add("embedding", xavier_uniform(rng, vocab, d))
        # Q 只写偶数三元组, K 只写奇数三元组: 初始分数恒为 0, 注意力均匀,
        # 首批损失与标签来源无关, 而 Q / K 的梯度落在对方的三元组上
        masks = {"wq": triple_mask(d, 0), "wk": triple_mask(d, 1)}
        for layer in ATTENTION_LAYERS:
            for proj in ("wq", "wk", "wv", "wo"):
                weight = xavier_uniform(rng, d, d)
                if proj in masks:
                    weight = weight * masks[proj]
                self._add(f"{layer}.{proj}", weight)
        for ln in LAYER_NORMS:
            self._add(f"{ln}.gamma", np.ones(d))
            self._add(f"{ln}.beta", np.zeros(d))
        for ffn in FEED_FORWARDS:
            self._add(f"{ffn}.w1", xavier_uniform(rng, d, d_ff))
            self._add(f"{ffn}.b1", np.zeros(d_ff))
            self._add(f"{ffn}.w2", xavier_uniform(rng, d_ff, d))
            self._add(f"{ffn}.b2", np.zeros(d))
        # 增益 0.5 让初始 logits 较小, 首批损失接近 ln(vocab_size)
        self._add("out.weight", xavier_uniform(rng, d, vocab, gain=OUTPUT_GAIN))
        self._add("out.bias", np.zeros(vocab))

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # ============ 子层 ============

    def _attention(
            self,
            layer: str,
            x_q: Tensor,
            x_kv: Tensor,
            tags_q: TokenGeoTag,
            tags_k: TokenGeoTag
    ) -> Tuple[Tensor, Tensor]:
        q = matmul(x_q, self.params[f"{layer}.wq"])
        k = matmul(x_kv, self.params[f"{layer}.wk"])
        v = matmul(x_kv, self.params[f"{layer}.wv"])
        out, scores = geo_attention(q, k, v, tags_q, tags_k)
        return matmul(out, self.params[f"{layer}.wo"]), scores

    def _feed_forward(self, name: str, x: Tensor) -> Tensor:
        hidden = gelu(add(matmul(x, self.params[f"{name}.w1"]), self.params[f"{name}.b1"]))
        return add(matmul(hidden, self.params[f"{name}.w2"]), self.params[f"{name}.b2"])

    def _norm(self, name: str, x: Tensor) -> Tensor:
        return layer_norm(x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"], self.config.layer_norm_eps)

    def _check_inputs(self, tokens: Sequence[int], tags: TokenGeoTag) -> List[int]:
        ids = [int(t) for t in tokens]
        if not ids:
            raise ShapeError("empty token sequence")
        if len(ids) > self.config.max_seq_len:
            raise SequenceLengthError(f"sequence length {len(ids)} exceeds {self.config.max_seq_len}")
        if len(tags) != len(ids):
            raise ShapeError(f"{len(tags)} tags for {len(ids)} tokens")
        return ids

    # ============ 前向 ============

    def _encode(self, ids: List[int], tags: TokenGeoTag, attention: Dict[str, np.ndarray]) -> Tensor:
        x = embedding(self.params["embedding"], ids)
        a, scores = self._attention("enc.self_attn", x, x, tags, tags)
        attention["enc.self_attn"] = scores.data
        x = self._norm("enc.ln1", add(x, a))
        return self._norm("enc.ln2", add(x, self._feed_forward("enc.ffn", x)))

    def encode(self, tokens: Sequence[int], tags: TokenGeoTag) -> Tensor:
        """只跑编码器块"""
        return self._encode(self._check_inputs(tokens, tags), tags, {})

    def forward(
            self,
            tokens: Sequence[int],
            tags: TokenGeoTag,
            decoder_tags: Optional[TokenGeoTag] = None
    ) -> EncDecActivations:
        """
        编码器与解码器接收同一输入, 不使用掩码

        Args:
            tokens: 输入 token id
            tags: 编码器侧坐标标签
            decoder_tags: 解码器侧标签, 默认全部为单位旋转
        """
        ids = self._check_inputs(tokens, tags)
        if decoder_tags is None:
            decoder_tags = TokenGeoTag.identity(len(ids))
        elif len(decoder_tags) != len(ids):
            raise ShapeError(f"{len(decoder_tags)} decoder tags for {len(ids)} tokens")

        attention: Dict[str, np.ndarray] = {}
        memory = self._encode(ids, tags, attention)

        y = embedding(self.params["embedding"], ids)
        a, scores = self._attention("dec.self_attn", y, y, decoder_tags, decoder_tags)
        attention["dec.self_attn"] = scores.data
        y = self._norm("dec.ln1", add(y, a))
        c, scores = self._attention("dec.cross_attn", y, memory, decoder_tags, tags)
        attention["dec.cross_attn"] = scores.data
        y = self._norm("dec.ln2", add(y, c))
        y = self._norm("dec.ln3", add(y, self._feed_forward("dec.ffn", y)))

        logits = add(matmul(y, self.params["out.weight"]), self.params["out.bias"])
        return EncDecActivations(encoder_output=memory, logits=logits, attention=attention)
