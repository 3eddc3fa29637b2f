"""
地理令牌系统 - 字符词表与分词
/geotoken/backend/data/vocab.py
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence

from geotoken.backend.errors import SequenceLengthError, TokenIndexError, VocabularyError

# 数字、小数点、逗号与加号之外, 负坐标还需要 '-'
CHARACTERS = "0123456789.,+-"
SPECIAL_TOKENS = ("<bos>", "<eos>", "<pad>")
MAX_SEQ_LEN = 100


class Vocabulary:
    """字符 ↔ id 双向映射, 特殊 token 没有字符形式"""

    def __init__(self, characters: str = CHARACTERS):
        if len(set(characters)) != len(characters):
            raise VocabularyError("vocabulary characters must be unique")
        self._symbols: List[str] = list(characters) + list(SPECIAL_TOKENS)
        self._char_to_id: Dict[str, int] = {c: i for i, c in enumerate(characters)}
        self.bos_id = len(characters)
        self.eos_id = self.bos_id + 1
        self.pad_id = self.bos_id + 2

    @property
    def size(self) -> int:
        return len(self._symbols)

    @property
    def special_ids(self) -> frozenset:
        return frozenset((self.bos_id, self.eos_id, self.pad_id))

    def id_of(self, char: str) -> int:
        try:
            return self._char_to_id[char]
        except KeyError:
            raise VocabularyError(f"character {char!r} is not in the vocabulary") from None

    def symbol(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise TokenIndexError(f"token id {token_id} out of range [0, {self.size})")
        return self._symbols[token_id]

    def is_special(self, token_id: int) -> bool:
        return token_id in self.special_ids


@dataclass(frozen=True)
class TokenSeq:
    """token id 序列, 长度不超过 max_len"""
    ids: tuple
    max_len: int = MAX_SEQ_LEN

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if len(self.ids) > self.max_len:
            raise SequenceLengthError(f"sequence of length {len(self.ids)} exceeds {self.max_len}")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def tokenize(text: str, vocab: Vocabulary, max_len: int = MAX_SEQ_LEN) -> TokenSeq:
    """每个字符一个 id, 末尾追加 EOS"""
    if len(text) + 1 > max_len:
        raise SequenceLengthError(f"text of {len(text)} characters plus EOS exceeds {max_len}")
    ids = [vocab.id_of(c) for c in text]
    ids.append(vocab.eos_id)
    return TokenSeq(ids=tuple(ids), max_len=max_len)


def detokenize(seq: Sequence[int], vocab: Vocabulary) -> str:
    """还原文本, 丢弃特殊 token"""
    return "".join(vocab.symbol(i) for i in seq if not vocab.is_special(i))


default_vocab = Vocabulary()
