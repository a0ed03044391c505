"""
主入口文件

提供 dimer-trap 命令行接口：解析参数，合并配置，分派到命令处理器。
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from typing import Any, Callable, List, Mapping, Optional, Sequence, TextIO, Tuple

from src import __version__
from src.command_handler import EXIT_NUMERICAL, EXIT_VALIDATION, CommandHandler
from src.config import (
    LOG_LEVELS,
    PRESET_NAMES,
    SUBCOMMANDS,
    ConfigValidationError,
    RunConfig,
    parse_float_list,
    parse_int_list,
    parse_str_list,
    parse_window,
)
from src.logger import setup_logging


logger = logging.getLogger(__name__)


class CliUsageError(Exception):
    """命令行用法错误（用法信息已输出到 stderr）"""
    pass


class CliArgumentParser(argparse.ArgumentParser):
    """用法错误时返回退出码 1，而不是 argparse 默认的 2"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise CliUsageError(message)


@dataclass(frozen=True)
class Flag:
    names: Tuple[str, ...]
    dest: str
    help: str
    type: Callable[[str], Any] = str
    metavar: Optional[str] = None
    choices: Optional[Sequence[str]] = None


# 所有子命令共享的参数表；帮助文本与测试都从这里枚举
FLAGS: Tuple[Flag, ...] = (
    Flag(("--config", "-c"), "config", "key=value 配置文件；任何输出文件本身也可作为配置文件", metavar="PATH"),
    Flag(("--output-dir", "-o"), "output_dir", "输出目录（默认 output）", metavar="DIR"),
    Flag(("--log-level", "-l"), "log_level", "日志级别", choices=LOG_LEVELS),
    Flag(("--log-file",), "log_file", "日志文件名（写在输出目录下，带轮转）", metavar="NAME"),
    Flag(("--threads",), "threads", "扫描进程池大小上限（也可用 DIMER_TRAP_THREADS）", int),
    Flag(("--name",), "name", "输出文件名前缀"),
    Flag(("--J",), "J", "隧穿率 J > 0", float),
    Flag(("--U",), "U", "在位相互作用 U", float),
    Flag(("--N", "--n"), "N", "粒子数 N >= 1", int),
    Flag(("--lambda",), "lam", "标度相互作用 Λ = U(N-1)/J", float, metavar="LAMBDA"),
    Flag(("--eps-L",), "eps_L", "左阱在位能", float),
    Flag(("--eps-R",), "eps_R", "右阱在位能", float),
    Flag(("--hbar",), "hbar", "约化普朗克常数", float),
    Flag(("--alpha",), "alpha", "临界阈值 α ∈ (0, 1/2)", float),
    Flag(("--window",), "window", "平均窗口，单位 t0", parse_window, metavar="START,END"),
    Flag(("--t-end",), "t_end", "轨迹长度，单位 t0", float),
    Flag(("--dt",), "dt", "GPE 初始步长，单位 t0", float),
    Flag(("--dt-sample",), "dt_sample", "采样间隔，单位 t0（<= 1/50）", float),
    Flag(("--seed",), "seed", "Monte-Carlo 随机种子", int),
    Flag(("--samples",), "samples", "Monte-Carlo 样本数（>= 10000）", int),
    Flag(("--lambda-grid",), "lambda_grid", "Λ 网格：逗号分隔的值或 start:stop:step", parse_float_list, metavar="GRID"),
    Flag(("--n-list",), "n_list", "逗号分隔的粒子数列表", parse_int_list, metavar="N1,N2,..."),
    Flag(("--methods",), "methods", "逗号分隔的扫描方法", parse_str_list, metavar="M1,M2,..."),
    Flag(("--method",), "method", "轨迹方法", choices=("meanfield-numeric", "exact-quantum")),
)

_SUBCOMMAND_HELP = {
    "meanfield": "数值积分 GPE 并给出 z̄（附闭式结果）",
    "exact": "精确多体传播并给出 z̄",
    "heuristic": "闭式近似、涨落平均与 Monte-Carlo",
    "sweep": "Λ × N × 方法 网格扫描，写出 CSV 与 gnuplot 脚本",
    "trajectory": "写出 z(t) 轨迹",
    "crit": "临界相互作用 Λ_α",
    "reproduce": "按预设重新生成图形数据 (fig1..fig4 或 all)",
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    for flag in FLAGS:
        kwargs = {"dest": flag.dest, "help": flag.help, "type": flag.type, "default": None}
        if flag.metavar:
            kwargs["metavar"] = flag.metavar
        if flag.choices:
            kwargs["choices"] = list(flag.choices)
        common.add_argument(*flag.names, **kwargs)
    return common


def build_parser() -> CliArgumentParser:
    """
    构造命令行解析器

    Returns:
        CliArgumentParser: 带全部子命令的解析器
    """
    parser = CliArgumentParser(
        prog="dimer-trap",
        description="双阱玻色-爱因斯坦凝聚体的自囚禁：精确多体、平均场与闭式近似",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
        epilog="""
示例:
  dimer-trap heuristic --lambda 4
  dimer-trap crit --alpha 0.001 --n 100
  dimer-trap sweep --lambda-grid 0:10:0.1 --methods meanfield-numeric,meanfield-closed
  dimer-trap reproduce fig1
  dimer-trap reproduce --config output/fig1.csv
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    common = _common_flags()
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(
            name,
            parents=[common],
            help=_SUBCOMMAND_HELP[name],
            description=_SUBCOMMAND_HELP[name],
            allow_abbrev=False,
        )
        if name == "reproduce":
            sub.add_argument("preset", nargs="?", choices=list(PRESET_NAMES), help="图形预设")
    return parser


def load_config(
    args: argparse.Namespace,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    合并并验证配置

    Raises:
        ConfigValidationError: 当配置无效时
        FileNotFoundError: 当配置文件不存在时
    """
    flags = {flag.dest: getattr(args, flag.dest) for flag in FLAGS if flag.dest != "config"}
    flags["subcommand"] = args.subcommand
    flags["preset"] = getattr(args, "preset", None)
    return RunConfig.resolve(flags, config_path=args.config, environ=environ).validate()


def parse_and_dispatch(
    argv: Optional[List[str]] = None,
    environ: Optional[Mapping[str, str]] = None,
    out: Optional[TextIO] = None,
) -> int:
    """
    解析命令行并执行子命令

    Args:
        argv: 命令行参数（默认 sys.argv[1:]）
        environ: 环境变量映射（默认 os.environ）
        out: 结果输出流（默认 sys.stdout）

    Returns:
        int: 0 成功，1 用法或验证错误，2 数值失败
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError:
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    if args.subcommand is None:
        parser.print_help(sys.stderr)
        return EXIT_VALIDATION

    try:
        config = load_config(args, environ)
    except ConfigValidationError as e:
        print("错误: 配置无效:", file=sys.stderr)
        for error in e.errors:
            print(f"  - {error}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    setup_logging(config.log_level, log_file=config.log_file, log_dir=config.output_dir)
    for key, value in config.to_metadata().items():
        source = config.sources.get(key if key != "lambda" else "lam", "default")
        logger.debug(f"配置 {key}={value} ({source})")
    return CommandHandler(config, out=out).handle()


def main() -> None:
    """
    主函数
    """
    try:
        status = parse_and_dispatch(sys.argv[1:])
    except KeyboardInterrupt:
        print("\n已中断", file=sys.stderr)
        status = EXIT_NUMERICAL
    sys.exit(status)


if __name__ == "__main__":
    main()
