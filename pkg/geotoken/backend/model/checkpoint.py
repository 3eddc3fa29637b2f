"""
地理令牌系统 - 模型权重存取
/geotoken/backend/model/checkpoint.py

格式: numpy .npz, 每个参数一项, 另有 __meta__ 保存 JSON（版本号、ModelConfig、参数名）
"""
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from geotoken.backend.config import ModelConfig
from geotoken.backend.errors import ParseError
from geotoken.backend.model.transformer import GeoTransformer

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(model: GeoTransformer, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.model_dump(),
        "parameters": list(model.params),
    }
    arrays = {name: p.data for name, p in model.params.items()}
    # 传文件对象, 避免 numpy 自动补 .npz 后缀
    with open(path, "wb") as f:
        np.savez(f, **{META_KEY: np.array(json.dumps(meta))}, **arrays)
    logger.info(f"权重已保存: {path} ({len(arrays)} 个参数)")
    return path


def load_checkpoint(path: Union[str, Path]) -> GeoTransformer:
    """读取权重, 形状或版本不符时抛出 ParseError"""
    with np.load(path, allow_pickle=False) as data:
        if META_KEY not in data.files:
            raise ParseError(f"{path}: missing checkpoint metadata")
        meta = json.loads(data[META_KEY].item())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        model = GeoTransformer(ModelConfig(**meta["config"]))
        for name, param in model.params.items():
            if name not in data.files:
                raise ParseError(f"{path}: missing parameter '{name}'")
            array = data[name]
            if array.shape != param.shape:
                raise ParseError(f"{path}: parameter '{name}' has shape {array.shape}, expected {param.shape}")
            param.data = np.array(array, dtype=np.float64)
            param.zero_grad()
    return model
