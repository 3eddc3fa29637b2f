"""
地理令牌系统 - 配置管理模块
/geotoken/backend/config.py
"""
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, model_validator

load_dotenv()


class RunMode(str, Enum):
    """
    标签来源模式
    geo: 真实经纬度; random: 随机伪造经纬度; none: 无位置信息
    """
    GEO = "geo"
    RANDOM = "random"
    NONE = "none"


class ModelConfig(BaseModel):
    """模型结构配置"""
    d_model: int = Field(27, gt=0)
    n_heads: int = Field(1, gt=0)
    n_blocks: int = Field(1, gt=0)
    d_ff: Optional[int] = Field(None, gt=0)
    vocab_size: int = Field(17, gt=0)
    max_seq_len: int = Field(100, gt=0)
    layer_norm_eps: float = Field(1e-5, gt=0)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ModelConfig":
        if self.d_model % 3 != 0:
            raise ValueError(f"d_model must be divisible by 3, got {self.d_model}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.n_heads != 1 or self.n_blocks != 1:
            raise ValueError("only a single head and a single encoder-decoder block are supported")
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model
        return self


class AdamConfig(BaseModel):
    """Adam 优化器超参数"""
    lr: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.98, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class RunConfig(BaseModel):
    """单次训练运行配置"""
    mode: RunMode = RunMode.GEO
    epochs: int = Field(25, ge=1)
    batch_size: int = Field(64, ge=1)
    dataset_size: int = Field(512, ge=1)
    seed: int = Field(0, ge=0)
    max_disp_deg: float = Field(10.0, gt=0, le=10)
    dataset_path: Optional[Path] = None
    output_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    optimizer: AdamConfig = Field(default_factory=AdamConfig)

    def resolved_output_path(self, output_dir: str) -> Path:
        """未指定输出路径时按模式和种子生成"""
        if self.output_path is not None:
            return self.output_path
        return Path(output_dir) / f"loss_{self.mode.value}_seed{self.seed}.csv"


class Settings:
    """应用配置"""

    # 实验默认值
    SEED: int = int(os.getenv("GEOTOKEN_SEED", 0))
    EPOCHS: int = int(os.getenv("GEOTOKEN_EPOCHS", 25))
    BATCH_SIZE: int = int(os.getenv("GEOTOKEN_BATCH_SIZE", 64))
    DATASET_SIZE: int = int(os.getenv("GEOTOKEN_DATASET_SIZE", 512))
    D_MODEL: int = int(os.getenv("GEOTOKEN_D_MODEL", 27))
    LR: float = float(os.getenv("GEOTOKEN_LR", 1e-4))

    # 输出与日志
    OUTPUT_DIR: str = os.getenv("GEOTOKEN_OUTPUT_DIR", "runs")
    LOG_LEVEL: str = os.getenv("GEOTOKEN_LOG_LEVEL", "INFO").upper()

    @classmethod
    def get_run_config(cls, override: Optional[Dict[str, Any]] = None) -> RunConfig:
        """获取运行配置，支持覆盖（嵌套的 model / optimizer 按字段合并）"""
        config = RunConfig(
            epochs=cls.EPOCHS,
            batch_size=cls.BATCH_SIZE,
            dataset_size=cls.DATASET_SIZE,
            seed=cls.SEED,
            model=ModelConfig(d_model=cls.D_MODEL),
            optimizer=AdamConfig(lr=cls.LR),
        )
        if override:
            merged = config.model_dump()
            for key, value in override.items():
                if key in ("model", "optimizer") and isinstance(value, dict):
                    nested = {**merged[key], **value}
                    if key == "model" and "d_model" in value and "d_ff" not in value:
                        nested["d_ff"] = None
                    merged[key] = nested
                else:
                    merged[key] = value
            config = RunConfig(**merged)
        return config


settings = Settings()
