"""
地理令牌实验命令行
用法: python main.py {gen-data,train,compare,reproduce} ...
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from geotoken.backend.config import settings
from geotoken.backend.experiment_api import ExperimentCommandRouter

# 配置日志
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s"
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    return argparse.ArgumentParser(
        prog="geotoken",
        description="球面旋转位置编码实验: 生成数据、训练、对比损失曲线"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    router = ExperimentCommandRouter(parser)
    return router.dispatch(argv)


# 启动命令
if __name__ == "__main__":
    sys.exit(main())
