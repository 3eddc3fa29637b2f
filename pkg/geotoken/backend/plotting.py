"""
地理令牌系统 - 损失曲线绘图
/geotoken/backend/plotting.py
"""
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from geotoken.backend.errors import DomainError
from geotoken.backend.workflow.engine import LossRecord

logger = logging.getLogger(__name__)

MODE_COLORS = {"geo": "tab:blue", "random": "tab:orange", "none": "tab:gray"}


def plot_loss_curves(
        curves: Mapping[str, Sequence[LossRecord]],
        out_path: Union[str, Path],
        title: Optional[str] = None
) -> Path:
    """
    把若干条损失曲线画在同一张图上并保存为 PNG

    Args:
        curves: 图例名 → 每个 epoch 的损失记录
        out_path: 输出文件
        title: 图标题
    """
    if not curves or any(not records for records in curves.values()):
        raise DomainError("every curve needs at least one epoch")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig = plt.figure(figsize=(10, 6))
    try:
        for name, records in curves.items():
            plt.plot([r.epoch for r in records], [r.mean_loss for r in records],
                     marker="o", label=name, linewidth=2, color=MODE_COLORS.get(name))
        plt.xlabel("Epoch")
        plt.ylabel("Mean cross-entropy")
        plt.title(title or "Training loss")
        plt.legend()
        plt.grid(True, alpha=0.3)
        plt.savefig(out_path, dpi=150, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.info(f"损失曲线图已保存: {out_path}")
    return out_path
