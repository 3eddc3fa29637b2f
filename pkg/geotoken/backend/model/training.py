"""
地理令牌系统 - 损失、训练步与解码
/geotoken/backend/model/training.py
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from geotoken.backend.autodiff.optim import AdamState, adam_step
from geotoken.backend.autodiff.tensor import Tensor, cross_entropy, mean_scalars
from geotoken.backend.data.geodata import GeoSample
from geotoken.backend.data.tags import TokenGeoTag, build_target
from geotoken.backend.data.vocab import TokenSeq, Vocabulary, default_vocab, tokenize
from geotoken.backend.errors import EmptyLossError, ShapeError
from geotoken.backend.model.transformer import GeoTransformer


@dataclass(frozen=True)
class TrainingExample:
    """一条训练样本: 输入、标签、按位置对齐的目标"""
    tokens: TokenSeq
    tags: TokenGeoTag
    target: Tuple[int, ...]
    ignore_mask: Tuple[bool, ...]


def build_examples(
        samples: Sequence[GeoSample],
        tags: Sequence[TokenGeoTag],
        vocab: Vocabulary = default_vocab
) -> List[TrainingExample]:
    """把样本与对应标签组装成训练样本"""
    if len(samples) != len(tags):
        raise ShapeError(f"{len(samples)} samples but {len(tags)} tag lists")
    examples = []
    for sample, tag in zip(samples, tags):
        tokens = tokenize(sample.input_text, vocab)
        target, mask = build_target(sample, len(tokens), vocab)
        examples.append(TrainingExample(tokens=tokens, tags=tag, target=tuple(target), ignore_mask=tuple(mask)))
    return examples


def sample_loss(model: GeoTransformer, example: TrainingExample) -> Tensor:
    logits = model.forward(example.tokens, example.tags).logits
    return cross_entropy(logits, example.target, example.ignore_mask)


def batch_loss(model: GeoTransformer, batch: Sequence[TrainingExample]) -> Tensor:
    """批内各样本损失的平均, 可微"""
    if not batch:
        raise EmptyLossError("batch must not be empty")
    return mean_scalars([sample_loss(model, example) for example in batch])


def train_step(model: GeoTransformer, batch: Sequence[TrainingExample], state: AdamState) -> float:
    """
    一次参数更新

    Returns:
        更新前的批平均损失
    """
    model.zero_grad()
    loss = batch_loss(model, batch)
    value = loss.item()
    loss.backward()
    adam_step(model.parameters(), state)
    return value


def predict_text(
        model: GeoTransformer,
        tokens: TokenSeq,
        tags: TokenGeoTag,
        vocab: Vocabulary = default_vocab
) -> str:
    """单次前向, 逐位置取 argmax, 读到第一个 EOS 为止"""
    logits = model.forward(tokens, tags).logits.data
    chars = []
    for token_id in np.argmax(logits, axis=1):
        token_id = int(token_id)
        if token_id == vocab.eos_id:
            break
        if not vocab.is_special(token_id):
            chars.append(vocab.symbol(token_id))
    return "".join(chars)


def char_accuracy(predicted: str, target: str) -> float:
    """按位置比较字符, 长度不足的部分算错"""
    if not target:
        return 1.0 if not predicted else 0.0
    hits = sum(1 for a, b in zip(predicted, target) if a == b)
    return hits / max(len(predicted), len(target))


def mean_char_accuracy(
        model: GeoTransformer,
        examples: Sequence[TrainingExample],
        targets: Sequence[str],
        vocab: Vocabulary = default_vocab
) -> float:
    """贪心解码全部样本, 返回逐字符准确率的平均值"""
    if len(examples) != len(targets):
        raise ShapeError(f"{len(examples)} examples but {len(targets)} targets")
    if not examples:
        raise EmptyLossError("no examples to evaluate")
    scores = [char_accuracy(predict_text(model, ex.tokens, ex.tags, vocab), target)
              for ex, target in zip(examples, targets)]
    return float(np.mean(scores))
