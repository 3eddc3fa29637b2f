"""
地理令牌系统 - 实验命令
/geotoken/backend/experiment_api.py

子命令:
    gen-data   生成并导出数据集
    train      单次训练, 写出每个 epoch 的损失 CSV
    compare    比较 geo 与 random 两次运行的最终损失
    reproduce  多种子对比实验
    plot       把几份损失 CSV 画成一张曲线图
"""
import argparse
import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from geotoken.backend.config import RunConfig, RunMode, settings
from geotoken.backend.data.geodata import GeoSample, generate_dataset, read_jsonl, write_jsonl
from geotoken.backend.errors import DomainError, GeoTokenError, ParseError, TrainingDivergedError
from geotoken.backend.model.checkpoint import save_checkpoint
from geotoken.backend.model.transformer import GeoTransformer
from geotoken.backend.plotting import plot_loss_curves
from geotoken.backend.workflow.engine import LossRecord, create_training_engine

logger = logging.getLogger(__name__)

LOSS_CSV_HEADER = ("epoch", "loss")
FIRST_BATCH_TOLERANCE = 1e-12

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT_ERROR = 2


# ============ 数据集 ============

def dump_dataset(seed: int, n: int, path: Union[str, Path], max_disp_deg: float = 10.0) -> Path:
    """生成数据集并写成 JSONL, 同一种子输出字节一致"""
    samples = generate_dataset(n, seed, max_disp_deg)
    path = write_jsonl(samples, path)
    logger.info(f"数据集已写出: {path} ({n} 条, seed={seed})")
    return path


def load_dataset(path: Union[str, Path]) -> List[GeoSample]:
    return read_jsonl(path)


def prepare_dataset(config: RunConfig) -> List[GeoSample]:
    """数据集文件存在则读取, 否则按种子生成（给了路径就顺便写出）"""
    path = config.dataset_path
    if path is not None and Path(path).exists():
        samples = load_dataset(path)
        logger.info(f"读取数据集 {path}: {len(samples)} 条")
        return samples
    if path is not None:
        dump_dataset(config.seed, config.dataset_size, path, config.max_disp_deg)
        return load_dataset(path)
    return generate_dataset(config.dataset_size, config.seed, config.max_disp_deg)


# ============ 损失 CSV ============

def format_loss_csv(records: Sequence[LossRecord]) -> str:
    lines = [",".join(LOSS_CSV_HEADER)]
    lines.extend(f"{r.epoch},{r.mean_loss:.6f}" for r in records)
    return "\n".join(lines) + "\n"


def write_loss_csv(records: Sequence[LossRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_loss_csv(records))
    return path


def read_loss_csv(path: Union[str, Path]) -> List[LossRecord]:
    """读取损失 CSV, 表头、列数、epoch 连续性任一不符都抛出 ParseError"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if not rows or tuple(cell.strip() for cell in rows[0]) != LOSS_CSV_HEADER:
        raise ParseError(f"{path}: expected header 'epoch,loss'")
    records = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"{path}: line {line_no}: expected 2 columns, got {len(row)}")
        try:
            record = LossRecord(epoch=int(row[0]), mean_loss=float(row[1]))
        except ValueError as e:
            raise ParseError(f"{path}: line {line_no}: {e}") from None
        if record.epoch != len(records) + 1:
            raise ParseError(f"{path}: line {line_no}: expected epoch {len(records) + 1}, got {record.epoch}")
        records.append(record)
    if not records:
        raise ParseError(f"{path}: no loss rows")
    return records


# ============ 训练 ============

@dataclass
class TrainingResult:
    """一次训练的全部产物"""
    config: RunConfig
    records: List[LossRecord]
    first_batch_loss: float
    model: GeoTransformer
    output_path: Optional[Path] = None
    char_accuracy: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.records[-1].mean_loss


def run_training_detailed(config: RunConfig, output_dir: Optional[str] = None) -> TrainingResult:
    """
    执行一次完整训练

    Args:
        config: 运行配置
        output_dir: 未指定 output_path 时 CSV 的目录, 默认取 GEOTOKEN_OUTPUT_DIR

    Returns:
        损失记录、首批损失、训练后的模型与解码准确率
    """
    samples = prepare_dataset(config)
    engine = create_training_engine(config, samples)
    records = engine.run()
    output_path = write_loss_csv(records, config.resolved_output_path(output_dir or settings.OUTPUT_DIR))
    logger.info(f"损失曲线已写出: {output_path}")
    if config.checkpoint_path is not None:
        save_checkpoint(engine.model, config.checkpoint_path)
    accuracy = engine.char_accuracy()
    logger.info(f"训练集逐字符准确率: {accuracy:.4f}")
    return TrainingResult(
        config=config,
        records=records,
        first_batch_loss=engine.first_batch_loss,
        model=engine.model,
        output_path=output_path,
        char_accuracy=accuracy,
    )


def run_training(config: RunConfig, output_dir: Optional[str] = None) -> List[LossRecord]:
    return run_training_detailed(config, output_dir).records


# ============ 对比 ============

@dataclass(frozen=True)
class ComparisonSummary:
    geo_final: float
    random_final: float

    @property
    def ratio(self) -> float:
        if self.random_final == 0.0:
            return math.inf if self.geo_final > 0.0 else 1.0
        return self.geo_final / self.random_final

    @property
    def success(self) -> bool:
        return self.geo_final < self.random_final

    def describe(self) -> str:
        verdict = "geo 更低" if self.success else "geo 未低于 random"
        return (f"geo 最终损失: {self.geo_final:.6f}\n"
                f"random 最终损失: {self.random_final:.6f}\n"
                f"比值 geo/random: {self.ratio:.6f} ({verdict})")


def compare_runs(geo_csv: Union[str, Path], random_csv: Union[str, Path]) -> ComparisonSummary:
    """两份 CSV 行数必须一致; geo 最终损失严格更低才算成功"""
    geo = read_loss_csv(geo_csv)
    random_run = read_loss_csv(random_csv)
    if len(geo) != len(random_run):
        raise ParseError(f"row count mismatch: {len(geo)} epochs in {geo_csv}, {len(random_run)} in {random_csv}")
    return ComparisonSummary(geo_final=geo[-1].mean_loss, random_final=random_run[-1].mean_loss)


# ============ 多种子复现 ============

@dataclass
class SeedOutcome:
    """一个种子下各模式的最终损失、首批损失与解码准确率"""
    seed: int
    final_losses: Dict[RunMode, float] = field(default_factory=dict)
    first_batch_losses: Dict[RunMode, float] = field(default_factory=dict)
    accuracies: Dict[RunMode, float] = field(default_factory=dict)

    @property
    def geo_wins(self) -> bool:
        return self.final_losses[RunMode.GEO] < self.final_losses[RunMode.RANDOM]

    @property
    def first_batch_spread(self) -> float:
        values = list(self.first_batch_losses.values())
        return max(values) - min(values)


@dataclass
class ReproductionReport:
    outcomes: List[SeedOutcome]

    @property
    def wins(self) -> int:
        return sum(1 for o in self.outcomes if o.geo_wins)

    @property
    def ordering_holds(self) -> bool:
        # 至少三分之二的种子
        return 3 * self.wins >= 2 * len(self.outcomes)

    @property
    def first_batch_coincide(self) -> bool:
        return all(o.first_batch_spread <= FIRST_BATCH_TOLERANCE for o in self.outcomes)

    @property
    def success(self) -> bool:
        return self.ordering_holds and self.first_batch_coincide

    def describe(self) -> str:
        lines = []
        for o in self.outcomes:
            losses = " ".join(f"{m.value}={v:.6f}" for m, v in o.final_losses.items())
            accuracy = " ".join(f"{m.value}={v:.3f}" for m, v in o.accuracies.items())
            line = f"seed {o.seed}: {losses} 首批差 {o.first_batch_spread:.3e}"
            if accuracy:
                line += f" 准确率 {accuracy}"
            lines.append(f"{line} {'✅' if o.geo_wins else '❌'}")
        lines.append(f"geo 胜出 {self.wins}/{len(self.outcomes)}; 首批损失一致: {self.first_batch_coincide}")
        return "\n".join(lines)


def _run_job(job: Tuple[RunConfig, str]) -> Tuple[RunMode, int, float, float, float]:
    config, output_dir = job
    result = run_training_detailed(config, output_dir)
    return config.mode, config.seed, result.final_loss, result.first_batch_loss, result.char_accuracy


def reproduce(
        base_config: RunConfig,
        seeds: Sequence[int] = (0, 1, 2),
        output_dir: Optional[str] = None,
        jobs: int = 1,
        include_none: bool = False,
        plot: bool = False
) -> ReproductionReport:
    """
    每个种子先写出共享数据集, 再按模式训练; jobs > 1 时用多进程并行
    plot 为真时每个种子另存一张 loss_seed{seed}.png
    """
    output_dir = output_dir or settings.OUTPUT_DIR
    modes = [RunMode.GEO, RunMode.RANDOM] + ([RunMode.NONE] if include_none else [])
    job_list: List[Tuple[RunConfig, str]] = []
    for seed in seeds:
        dataset_path = Path(output_dir) / f"dataset_seed{seed}.jsonl"
        dump_dataset(seed, base_config.dataset_size, dataset_path, base_config.max_disp_deg)
        for mode in modes:
            config = base_config.model_copy(update={
                "mode": mode,
                "seed": seed,
                "dataset_path": dataset_path,
                "output_path": None,
                "checkpoint_path": None,
            })
            job_list.append((config, output_dir))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_job, job_list))
    else:
        results = [_run_job(job) for job in job_list]

    outcomes = {seed: SeedOutcome(seed=seed) for seed in seeds}
    for mode, seed, final_loss, first_loss, accuracy in results:
        outcomes[seed].final_losses[mode] = final_loss
        outcomes[seed].first_batch_losses[mode] = first_loss
        outcomes[seed].accuracies[mode] = accuracy

    if plot:
        for seed in seeds:
            curves = {config.mode.value: read_loss_csv(config.resolved_output_path(output_dir))
                      for config, _ in job_list if config.seed == seed}
            plot_loss_curves(curves, Path(output_dir) / f"loss_seed{seed}.png", title=f"seed {seed}")
    return ReproductionReport(outcomes=[outcomes[s] for s in seeds])


# ============ 命令路由 ============

class ExperimentCommandRouter:
    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.subparsers = parser.add_subparsers(dest="command", required=True)
        self.setup_commands()

    @staticmethod
    def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
        override: Dict[str, Any] = {}
        for key in ("mode", "seed", "epochs", "batch_size", "dataset_size"):
            value = getattr(args, key, None)
            if value is not None:
                override[key] = value
        if getattr(args, "d_model", None) is not None:
            override["model"] = {"d_model": args.d_model}
        if getattr(args, "lr", None) is not None:
            override["optimizer"] = {"lr": args.lr}
        return override

    def setup_commands(self):
        logger.debug("实验命令初始化")

        gen = self.subparsers.add_parser("gen-data", help="生成数据集 JSONL")
        gen.add_argument("--seed", type=int, default=settings.SEED)
        gen.add_argument("--dataset-size", type=int, default=settings.DATASET_SIZE)
        gen.add_argument("--out", type=Path, required=True)
        gen.set_defaults(handler=self.run_gen_data)

        train = self.subparsers.add_parser("train", help="训练并写出损失 CSV")
        train.add_argument("--mode", choices=[m.value for m in RunMode], default=RunMode.GEO.value)
        train.add_argument("--seed", type=int)
        train.add_argument("--epochs", type=int)
        train.add_argument("--batch-size", type=int)
        train.add_argument("--dataset-size", type=int)
        train.add_argument("--dataset", type=Path)
        train.add_argument("--out", type=Path)
        train.add_argument("--d-model", type=int)
        train.add_argument("--lr", type=float)
        train.add_argument("--checkpoint", type=Path)
        train.set_defaults(handler=self.run_train)

        compare = self.subparsers.add_parser("compare", help="比较 geo 与 random 的最终损失")
        compare.add_argument("geo_csv", type=Path)
        compare.add_argument("random_csv", type=Path)
        compare.set_defaults(handler=self.run_compare)

        repro = self.subparsers.add_parser("reproduce", help="多种子对比实验")
        repro.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
        repro.add_argument("--epochs", type=int)
        repro.add_argument("--batch-size", type=int)
        repro.add_argument("--dataset-size", type=int)
        repro.add_argument("--d-model", type=int)
        repro.add_argument("--lr", type=float)
        repro.add_argument("--out-dir", type=str, default=settings.OUTPUT_DIR)
        repro.add_argument("--jobs", type=int, default=1)
        repro.add_argument("--include-none", action="store_true")
        repro.add_argument("--plot", action="store_true", help="每个种子另存一张损失曲线图")
        repro.set_defaults(handler=self.run_reproduce)

        plot = self.subparsers.add_parser("plot", help="把损失 CSV 画成曲线图")
        plot.add_argument("--geo", type=Path)
        plot.add_argument("--random", type=Path)
        plot.add_argument("--none", type=Path)
        plot.add_argument("--title")
        plot.add_argument("--out", type=Path, required=True)
        plot.set_defaults(handler=self.run_plot)

    def dispatch(self, argv: Optional[Sequence[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        try:
            return args.handler(args)
        except TrainingDivergedError as e:
            logger.error(str(e))
            return EXIT_FAILED
        except (GeoTokenError, ValidationError, ValueError, OSError) as e:
            logger.error(f"输入错误: {e}")
            return EXIT_INPUT_ERROR

    # ============ 处理函数 ============

    def run_gen_data(self, args: argparse.Namespace) -> int:
        dump_dataset(args.seed, args.dataset_size, args.out)
        return EXIT_OK

    def run_train(self, args: argparse.Namespace) -> int:
        config = settings.get_run_config(self._overrides(args)).model_copy(update={
            "dataset_path": args.dataset,
            "output_path": args.out,
            "checkpoint_path": args.checkpoint,
        })
        result = run_training_detailed(config)
        print(f"{config.mode.value} seed={config.seed} 最终损失 {result.final_loss:.6f}"
              f" 准确率 {result.char_accuracy:.3f} → {result.output_path}")
        return EXIT_OK

    def run_compare(self, args: argparse.Namespace) -> int:
        summary = compare_runs(args.geo_csv, args.random_csv)
        print(summary.describe())
        return EXIT_OK if summary.success else EXIT_FAILED

    def run_reproduce(self, args: argparse.Namespace) -> int:
        if args.jobs < 1:
            raise DomainError(f"--jobs must be >= 1, got {args.jobs}")
        base = settings.get_run_config(self._overrides(args))
        report = reproduce(base, args.seeds, args.out_dir, args.jobs, args.include_none, args.plot)
        print(report.describe())
        return EXIT_OK if report.success else EXIT_FAILED

    def run_plot(self, args: argparse.Namespace) -> int:
        curves = {mode.value: read_loss_csv(path) for mode in RunMode
                  if (path := getattr(args, mode.value)) is not None}
        if not curves:
            raise DomainError("plot needs at least one of --geo, --random, --none")
        print(plot_loss_curves(curves, args.out, args.title))
        return EXIT_OK
