"""
命令处理器模块

把已验证的运行配置分派到各计算引擎，写出结果文件，并把异常映射为退出码：
0 成功，1 参数/验证错误（不写任何文件），2 数值失败（部分结果带 status=partial 标记）。
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, TextIO, Tuple

from src.config import ConfigValidationError, RunConfig
from src.heuristics import (
    DomainError,
    dropped_term,
    lambda_critical,
    zbar_closed_form,
    zbar_closed_form_corrected,
    zbar_gauss_hermite_average,
    zbar_mc_average,
    zbar_meanfield_closed,
)
from src.manybody import CapacityError, exact_zbar
from src.meanfield import IntegratorConfig, meanfield_zbar
from src.models import ParameterError, RangeError
from src.output import (
    format_value,
    write_critical_csv,
    write_gnuplot_script,
    write_sweep_csv,
    write_trajectory_csv,
)
from src.presets import PRESETS, run_preset
from src.sweep import (
    Method,
    SweepConfig,
    SweepValidationError,
    run_lambda_critical_curve,
    run_sweep,
    run_trajectory,
)


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

_VALIDATION_ERRORS = (
    ConfigValidationError,
    ParameterError,
    RangeError,
    DomainError,
    SweepValidationError,
    CapacityError,
)


class CommandHandler:
    """
    子命令处理器

    负责把 RunConfig 转换为引擎调用，单值结果写到标准输出，
    数据集写到输出目录。
    """

    def __init__(self, config: RunConfig, out: Optional[TextIO] = None):
        """
        初始化命令处理器

        Args:
            config: 已通过 validate() 的运行配置
            out: 结果输出流，默认 sys.stdout
        """
        self.config = config
        self.out = sys.stdout if out is None else out
        self._handlers: Dict[str, Callable[[], int]] = {
            "meanfield": self.handle_meanfield,
            "exact": self.handle_exact,
            "heuristic": self.handle_heuristic,
            "sweep": self.handle_sweep,
            "trajectory": self.handle_trajectory,
            "crit": self.handle_crit,
            "reproduce": self.handle_reproduce,
        }

    def handle(self) -> int:
        """
        执行子命令

        Returns:
            int: 退出码
        """
        handler = self._handlers.get(self.config.subcommand)
        if handler is None:
            logger.error(f"未知子命令: {self.config.subcommand}")
            return EXIT_VALIDATION
        try:
            return handler()

        except _VALIDATION_ERRORS as e:
            logger.error(f"参数验证失败: {e}")
            return EXIT_VALIDATION

        except ArithmeticError as e:
            # 积分精度不足、谱分解失败等
            logger.error(f"数值计算失败: {e}")
            return EXIT_NUMERICAL

        except Exception as e:
            logger.error(f"执行命令时发生未预期错误: {e}", exc_info=True)
            return EXIT_NUMERICAL

    def emit(self, name: str, value: float) -> None:
        print(format_value(name, value), file=self.out)

    @property
    def output_dir(self) -> Path:
        return Path(self.config.output_dir)

    def _window(self, t0: float) -> Tuple[float, float]:
        start, end = self.config.window
        return start * t0, end * t0

    def handle_meanfield(self) -> int:
        params = self.config.params()
        t0 = params.t0()
        window = self._window(t0)
        cfg = IntegratorConfig.for_params(
            params,
            t_end=window[1],
            dt_fraction=self.config.dt,
            sample_fraction=self.config.dt_sample,
        )
        lam = params.scaled_interaction()
        self.emit("zbar_meanfield_numeric", meanfield_zbar(params, window, cfg))
        self.emit("zbar_meanfield_closed", zbar_meanfield_closed(lam))
        return EXIT_OK

    def handle_exact(self) -> int:
        params = self.config.params()
        t0 = params.t0()
        zbar = exact_zbar(params, self._window(t0), dt_sample=self.config.dt_sample * t0)
        self.emit("zbar_exact", zbar)
        lam = params.scaled_interaction()
        if lam >= 0:
            self.emit("zbar_semiclassical_closed", zbar_closed_form(lam, params.N))
        return EXIT_OK

    def handle_heuristic(self) -> int:
        """闭式近似；给出 N 时附加涨落修正、Monte-Carlo 与求积结果"""
        cfg = self.config
        lam = cfg.lam if cfg.lam is not None else cfg.params().scaled_interaction()
        self.emit("zbar_meanfield_closed", zbar_meanfield_closed(lam))
        if cfg.N is None:
            return EXIT_OK
        N = cfg.N
        self.emit("zbar_closed_form", zbar_closed_form(lam, N))
        self.emit("zbar_closed_form_corrected", zbar_closed_form_corrected(lam, N))
        estimate = zbar_mc_average(lam, N, samples=cfg.samples, seed=cfg.seed)
        self.emit("zbar_mc", estimate.mean)
        self.emit("zbar_mc_stderr", estimate.stderr)
        self.emit("zbar_gauss_hermite", zbar_gauss_hermite_average(lam, N))
        self.emit("dropped_term", dropped_term(lam, N))
        return EXIT_OK

    def handle_sweep(self) -> int:
        cfg = self.config
        sweep_cfg = SweepConfig(
            lambda_grid=cfg.lambda_grid,
            n_list=cfg.n_list or ((cfg.N,) if cfg.N is not None else ()),
            window=cfg.window,
            methods=cfg.methods,
            seed=cfg.seed,
            samples=cfg.samples,
            dt_fraction=cfg.dt,
            dt_sample=cfg.dt_sample,
            J=cfg.J,
            threads=cfg.threads,
            name=cfg.name or "sweep",
        )
        sweep_cfg.validate()
        result = run_sweep(sweep_cfg)
        csv_path = write_sweep_csv(result, self.output_dir / f"{sweep_cfg.name}.csv", cfg.to_metadata())
        script = write_gnuplot_script(csv_path, "sweep", sweep_cfg.methods, sweep_cfg.n_list, sweep_cfg.name)
        self._report_paths([csv_path, script])
        if result.failed:
            logger.error(f"{len(result.failed)} 个网格点失败，结果已标记为 partial")
            return EXIT_NUMERICAL
        return EXIT_OK

    def handle_trajectory(self) -> int:
        cfg = self.config
        params = cfg.params()
        t0 = params.t0()
        record = run_trajectory(
            params,
            cfg.t_end * t0,
            Method(cfg.method),
            dt_sample=cfg.dt_sample * t0,
            dt_fraction=cfg.dt,
        )
        name = cfg.name or "trajectory"
        csv_path = write_trajectory_csv(record, self.output_dir / f"{name}.csv", extra_metadata=cfg.to_metadata())
        script = write_gnuplot_script(csv_path, "trajectory", title=name)
        self._report_paths([csv_path, script])
        self.emit("min_z", record.series.minimum())
        return EXIT_OK

    def handle_crit(self) -> int:
        cfg = self.config
        if not cfg.n_list:
            assert cfg.N is not None
            crit = lambda_critical(cfg.N, cfg.alpha)
            self.emit("lambda_alpha", crit.full)
            self.emit("lambda_alpha_asymptote", crit.asymptote)
            return EXIT_OK

        rows = run_lambda_critical_curve(cfg.n_list, cfg.alpha)
        name = cfg.name or "critical"
        csv_path = write_critical_csv(rows, self.output_dir / f"{name}.csv", cfg.to_metadata())
        script = write_gnuplot_script(csv_path, "critical", title=name)
        for row in rows:
            print(f"N={row.N:g} {format_value('lambda_alpha', row.lambda_alpha)}", file=self.out)
        self._report_paths([csv_path, script])
        return EXIT_NUMERICAL if any(r.error for r in rows) else EXIT_OK

    def handle_reproduce(self) -> int:
        """运行一个或全部图形预设"""
        names = list(PRESETS) if self.config.preset == "all" else [self.config.preset]
        status = EXIT_OK
        for name in names:
            outcome = run_preset(PRESETS[name], self.output_dir, threads=self.config.threads)
            self._report_paths(outcome.paths)
            for key, value in outcome.summary.items():
                self.emit(f"{name}.{key}", value)
            if outcome.partial:
                logger.error(f"预设 {name} 部分失败，结果已标记为 partial")
                status = EXIT_NUMERICAL
        return status

    def _report_paths(self, paths: List[Path]) -> None:
        for path in paths:
            print(f"wrote {path}", file=self.out)
