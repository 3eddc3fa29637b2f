"""
地理令牌系统 - 训练引擎
/geotoken/backend/workflow/engine.py
"""
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Generator, List, Optional, Sequence

import numpy as np

from geotoken.backend.autodiff.optim import AdamState
from geotoken.backend.config import RunConfig
from geotoken.backend.data.geodata import GeoSample
from geotoken.backend.data.vocab import Vocabulary, default_vocab
from geotoken.backend.errors import DomainError, GeoTokenError, TrainingDivergedError
from geotoken.backend.model.training import TrainingExample, build_examples, mean_char_accuracy, train_step
from geotoken.backend.model.transformer import GeoTransformer
from geotoken.backend.sources.definitions import tag_source_registry

logger = logging.getLogger(__name__)


class TrainingStatus(Enum):
    IDLE = "idle"
    RUNNING = "running"
    COMPLETED = "completed"
    ERROR = "error"
    CANCELLED = "cancelled"


@dataclass
class TrainingEvent:
    """训练事件"""
    event_type: str
    epoch: Optional[int] = None
    data: Dict[str, Any] = field(default_factory=dict)
    timestamp: datetime = field(default_factory=datetime.now)


@dataclass(frozen=True)
class LossRecord:
    """一个 epoch 的平均损失"""
    epoch: int
    mean_loss: float

    def __post_init__(self):
        if self.epoch < 1:
            raise DomainError(f"epoch numbers start at 1, got {self.epoch}")
        if not math.isfinite(self.mean_loss):
            raise DomainError(f"loss of epoch {self.epoch} is not finite")


@dataclass(frozen=True)
class RunSeeds:
    """
    由运行种子派生的独立随机流
    数据集直接使用运行种子; 初始化、打乱、随机标签各占一路
    """
    init: int
    shuffle: int
    tags: int

    @classmethod
    def derive(cls, seed: int) -> "RunSeeds":
        children = np.random.SeedSequence(seed).spawn(3)
        init, shuffle, tags = (int(c.generate_state(1)[0]) for c in children)
        return cls(init=init, shuffle=shuffle, tags=tags)


class TrainingEngine:
    """训练引擎 - 事件驱动, 逐批次流式上报"""

    def __init__(self, config: RunConfig, samples: Sequence[GeoSample], vocab: Vocabulary = default_vocab):
        if not samples:
            raise DomainError("training needs at least one sample")
        self.config = config
        self.samples = list(samples)
        self.vocab = vocab
        self.seeds = RunSeeds.derive(config.seed)
        self.model: Optional[GeoTransformer] = None
        self.examples: List[TrainingExample] = []
        self.records: List[LossRecord] = []
        self.first_batch_loss: Optional[float] = None
        self.status = TrainingStatus.IDLE
        self.current_epoch = 0
        self._cancelled = False

    def reset(self):
        self.model = None
        self.examples = []
        self.records = []
        self.first_batch_loss = None
        self.status = TrainingStatus.IDLE
        self.current_epoch = 0
        self._cancelled = False

    def cancel(self):
        self._cancelled = True
        self.status = TrainingStatus.CANCELLED

    def _prepare(self) -> List[TrainingExample]:
        source = tag_source_registry.get(self.config.mode)
        if source is None:
            raise GeoTokenError(f"no tag source registered for mode {self.config.mode}")
        tags = source.build_tags(self.samples, self.seeds.tags, self.vocab)
        self.model = GeoTransformer(self.config.model, seed=self.seeds.init)
        return build_examples(self.samples, tags, self.vocab)

    def _batches(self, rng: np.random.Generator, examples: List[TrainingExample]) -> List[List[TrainingExample]]:
        order = rng.permutation(len(examples))
        size = self.config.batch_size
        return [[examples[i] for i in order[start:start + size]] for start in range(0, len(order), size)]

    def run_stream(self) -> Generator[TrainingEvent, None, None]:
        """运行完整训练（流式）, 数值发散时抛出 TrainingDivergedError"""
        if self.status == TrainingStatus.RUNNING:
            yield TrainingEvent(event_type="training:error", data={"error": "Training is already running"})
            return

        self.reset()
        self.status = TrainingStatus.RUNNING
        examples = self.examples = self._prepare()
        state = AdamState.from_config(self.config.optimizer)
        shuffle_rng = np.random.default_rng(self.seeds.shuffle)

        yield TrainingEvent(
            event_type="training:start",
            data={"mode": self.config.mode.value, "seed": self.config.seed, "samples": len(examples)}
        )
        logger.info(f"开始训练: mode={self.config.mode.value} seed={self.config.seed} 样本数={len(examples)}")

        for epoch in range(1, self.config.epochs + 1):
            self.current_epoch = epoch
            batches = self._batches(shuffle_rng, examples)
            yield TrainingEvent(event_type="epoch:start", epoch=epoch, data={"batches": len(batches)})

            losses: List[float] = []
            for batch_no, batch in enumerate(batches, start=1):
                if self._cancelled:
                    yield TrainingEvent(event_type="training:cancelled", epoch=epoch)
                    return
                try:
                    loss = train_step(self.model, batch, state)
                    if not math.isfinite(loss):
                        raise FloatingPointError(f"loss is {loss}")
                except FloatingPointError as e:
                    self.status = TrainingStatus.ERROR
                    logger.error(f"训练发散: epoch={epoch} batch={batch_no}: {e}")
                    yield TrainingEvent(
                        event_type="training:error",
                        epoch=epoch,
                        data={"batch": batch_no, "error": str(e)}
                    )
                    raise TrainingDivergedError(epoch, batch_no, str(e)) from e

                if self.first_batch_loss is None:
                    self.first_batch_loss = loss
                losses.append(loss)
                yield TrainingEvent(event_type="batch:complete", epoch=epoch, data={"batch": batch_no, "loss": loss})

            record = LossRecord(epoch=epoch, mean_loss=math.fsum(losses) / len(losses))
            self.records.append(record)
            logger.info(f"epoch {epoch}/{self.config.epochs} 平均损失 {record.mean_loss:.6f}")
            yield TrainingEvent(event_type="epoch:complete", epoch=epoch, data={"loss": record.mean_loss})

        self.status = TrainingStatus.COMPLETED
        logger.info(f"训练完成: 最终损失 {self.records[-1].mean_loss:.6f}")
        yield TrainingEvent(
            event_type="training:complete",
            data={"final_loss": self.records[-1].mean_loss, "first_batch_loss": self.first_batch_loss}
        )

    def run(self) -> List[LossRecord]:
        """跑完整个事件流并返回每个 epoch 的记录"""
        for _ in self.run_stream():
            pass
        return list(self.records)

    def char_accuracy(self) -> float:
        """用训练后的模型贪心解码全部样本, 返回平均逐字符准确率"""
        if self.model is None or not self.examples:
            raise GeoTokenError("engine has not been run")
        targets = [s.target_text for s in self.samples]
        return mean_char_accuracy(self.model, self.examples, targets, self.vocab)

    def get_progress(self) -> Dict[str, Any]:
        total = self.config.epochs
        current = self.current_epoch
        return {
            "current": current,
            "total": total,
            "percentage": round((current / total) * 100) if total > 0 else 0,
            "status": self.status.value
        }


def create_training_engine(
        config: RunConfig,
        samples: Sequence[GeoSample],
        vocab: Vocabulary = default_vocab
) -> TrainingEngine:
    return TrainingEngine(config, samples, vocab)
