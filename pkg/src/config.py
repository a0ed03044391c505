"""
配置管理模块

提供从默认值、环境变量、key=value 配置文件和命令行参数合并运行配置的功能，
并一次性报告所有违反的物理约束。
"""

import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.models import DimerParams, DimerTrapError


logger = logging.getLogger(__name__)


SUBCOMMANDS = ("meanfield", "exact", "heuristic", "sweep", "trajectory", "crit", "reproduce")
PRESET_NAMES = ("fig1", "fig2", "fig3", "fig4", "all")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
QUANTUM_METHODS = ("exact-quantum", "semiclassical-closed", "semiclassical-mc")

THREADS_ENV = "DIMER_TRAP_THREADS"
LOG_LEVEL_ENV = "DIMER_TRAP_LOG_LEVEL"

# 输出文件头中只用于记录、不参与配置的键
INFORMATIONAL_KEYS = (
    "format", "created", "status", "basis", "code_version", "halvings", "preset_version", "time_unit", "t0",
)

# 输出文件的首行标记；带此标记的文件中 "# key=value" 行按配置项读取
METADATA_MARKER = "# format=dimer-trap-"


class ConfigValidationError(DimerTrapError, ValueError):
    """配置验证错误，携带全部错误信息"""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def parse_float_list(text: str) -> Tuple[float, ...]:
    """
    解析浮点数列表

    支持逗号分隔的值以及 ``start:stop:step`` 区间（包含终点），两者可混用。
    """
    values: List[float] = []
    for part in (p.strip() for p in str(text).split(",")):
        if not part:
            continue
        if ":" in part:
            start, stop, step = (float(x) for x in part.split(":"))
            if step <= 0:
                raise ValueError(f"range step must be positive in '{part}'")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values.extend(float(np.round(start + k * step, 10)) for k in range(count))
        else:
            values.append(float(part))
    return tuple(values)


def parse_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(float(p)) for p in str(text).split(",") if p.strip())


def parse_window(text: str) -> Tuple[float, float]:
    values = parse_float_list(text)
    if len(values) != 2:
        raise ValueError(f"window needs two values 'start,end', got '{text}'")
    return values[0], values[1]


def parse_str_list(text: str) -> Tuple[str, ...]:
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


def _optional_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got '{text}'")
    return int(value)


# 配置文件键 -> (RunConfig 字段名, 解析函数)
CONFIG_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "subcommand": ("subcommand", str),
    "preset": ("preset", str),
    "name": ("name", str),
    "J": ("J", float),
    "U": ("U", float),
    "N": ("N", _optional_int),
    "lambda": ("lam", float),
    "eps_L": ("eps_L", float),
    "eps_R": ("eps_R", float),
    "hbar": ("hbar", float),
    "alpha": ("alpha", float),
    "window": ("window", parse_window),
    "t_end": ("t_end", float),
    "dt": ("dt", float),
    "dt_sample": ("dt_sample", float),
    "seed": ("seed", _optional_int),
    "samples": ("samples", _optional_int),
    "lambda_grid": ("lambda_grid", parse_float_list),
    "n_list": ("n_list", parse_int_list),
    "methods": ("methods", parse_str_list),
    "method": ("method", str),
    "output_dir": ("output_dir", str),
    "log_level": ("log_level", lambda s: str(s).upper()),
    "log_file": ("log_file", str),
    "threads": ("threads", _optional_int),
}

_FIELD_TO_KEY = {field_name: key for key, (field_name, _) in CONFIG_KEYS.items()}


@dataclass
class RunConfig:
    """
    命令行运行配置

    时间量（window、t_end、dt、dt_sample）均以 t0 = 2πħ/J 为单位。
    """
    subcommand: str = ""
    preset: Optional[str] = None
    name: Optional[str] = None
    J: float = 1.0
    U: Optional[float] = None
    N: Optional[int] = None
    lam: Optional[float] = None
    eps_L: float = 0.0
    eps_R: float = 0.0
    hbar: float = 1.0
    alpha: float = 0.001
    window: Tuple[float, float] = (0.0, 100.0)
    t_end: float = 100.0
    dt: float = 1e-3
    dt_sample: float = 1e-2
    seed: int = 0
    samples: int = 1_000_000
    lambda_grid: Tuple[float, ...] = ()
    n_list: Tuple[int, ...] = ()
    methods: Tuple[str, ...] = ()
    method: str = "exact-quantum"
    output_dir: str = "output"
    log_level: str = "INFO"
    log_file: Optional[str] = None
    threads: Optional[int] = None
    sources: Dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    @staticmethod
    def from_env(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
        """
        从环境变量读取配置

        环境变量:
            DIMER_TRAP_THREADS: 扫描进程池大小上限
            DIMER_TRAP_LOG_LEVEL: 日志级别

        Returns:
            Dict[str, Any]: 字段名到值的映射

        Raises:
            ConfigValidationError: 当环境变量无法解析时
        """
        environ = os.environ if environ is None else environ
        raw = {}
        if environ.get(THREADS_ENV, "").strip():
            raw["threads"] = environ[THREADS_ENV].strip()
        if environ.get(LOG_LEVEL_ENV, "").strip():
            raw["log_level"] = environ[LOG_LEVEL_ENV].strip()
        values, errors = _parse_entries(raw, source="environment")
        if errors:
            raise ConfigValidationError(errors)
        return values

    @staticmethod
    def from_file(path: str) -> Dict[str, Any]:
        """
        从 key=value 配置文件读取配置

        支持 ``#`` 注释。带有输出文件元数据标记的文件中，``# key=value`` 头部行按配置读取，
        数据行被忽略，因此任何输出文件都可以直接作为配置文件重放。

        Args:
            path: 配置文件路径

        Returns:
            Dict[str, Any]: 字段名到值的映射

        Raises:
            FileNotFoundError: 当配置文件不存在时
            ConfigValidationError: 当存在未知键或格式错误的行时
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")

        lines = Path(path).read_text(encoding="utf-8").splitlines()
        is_output_file = bool(lines) and lines[0].startswith(METADATA_MARKER)
        raw: Dict[str, str] = {}
        errors: List[str] = []
        for lineno, line in enumerate(lines, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if not is_output_file:
                    continue
                text = text[1:].strip()
                if "=" not in text:
                    continue
            elif is_output_file:
                # 数据区
                continue
            if "=" not in text:
                errors.append(f"{path}:{lineno}: expected key=value, got '{text}'")
                continue
            key, value = (part.strip() for part in text.split("=", 1))
            if key in INFORMATIONAL_KEYS:
                continue
            if key not in CONFIG_KEYS:
                errors.append(f"{path}:{lineno}: unknown key '{key}'")
                continue
            raw[key] = value

        values, parse_errors = _parse_entries(raw, source=str(path))
        errors.extend(parse_errors)
        if errors:
            raise ConfigValidationError(errors)
        return values

    @classmethod
    def resolve(
        cls,
        flags: Mapping[str, Any],
        config_path: Optional[str] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "RunConfig":
        """
        按优先级合并配置：默认值 < 环境变量 < 配置文件 < 命令行参数

        Args:
            flags: 命令行给出的字段（值为 None 的条目视为未给出）
            config_path: 配置文件路径（可选）
            environ: 环境变量映射（默认 os.environ）

        Returns:
            RunConfig: 合并后的配置（尚未验证）
        """
        config = cls()
        layers = [("environment", cls.from_env(environ))]
        if config_path:
            layers.append(("file", cls.from_file(config_path)))
        layers.append(("flag", {k: v for k, v in flags.items() if v is not None}))
        for source, values in layers:
            for name, value in values.items():
                if config.sources.get(name) == "file" and source == "flag":
                    logger.info(f"命令行参数覆盖配置文件: {_FIELD_TO_KEY.get(name, name)}={value}")
                setattr(config, name, value)
                config.sources[name] = source
        return config

    def validate(self) -> "RunConfig":
        """
        验证整个配置并完成 Λ/U 换算

        Returns:
            RunConfig: 规范化后的配置副本

        Raises:
            ConfigValidationError: 列出所有违反的约束
        """
        errors: List[str] = []
        resolved = replace(self, sources=dict(self.sources))

        if self.subcommand not in SUBCOMMANDS:
            errors.append(f"unknown subcommand '{self.subcommand}' (valid: {', '.join(SUBCOMMANDS)})")
        if not (math.isfinite(self.J) and self.J > 0):
            errors.append("J must be positive")
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            errors.append("hbar must be positive")
        if self.N is not None and self.N < 1:
            errors.append("N must be >= 1")
        if not 0.0 < self.alpha < 0.5:
            errors.append("alpha must lie in (0, 1/2)")
        if len(self.window) != 2 or not (0.0 <= self.window[0] < self.window[1]):
            errors.append(f"window must satisfy 0 <= start < end, got {self.window}")
        if not self.t_end > 0:
            errors.append("t_end must be positive")
        if not 0.0 < self.dt_sample <= 0.02:
            errors.append("dt_sample must lie in (0, 1/50] (units of t0)")
        if not 0.0 < self.dt <= self.dt_sample:
            errors.append("dt must be positive and not exceed dt_sample")
        if self.samples < 10_000:
            errors.append("samples must be >= 10000")
        if self.threads is not None and self.threads < 1:
            errors.append("threads must be >= 1")
        if self.log_level not in LOG_LEVELS:
            errors.append(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        if self.lam is not None and not math.isfinite(self.lam):
            errors.append("lambda must be finite")
        if any(n < 1 for n in self.n_list):
            errors.append("n_list entries must be >= 1")

        errors.extend(self._reconcile_interaction(resolved))
        errors.extend(self._check_subcommand())

        if errors:
            raise ConfigValidationError(errors)
        return resolved

    def _needs_particle_number(self) -> bool:
        if self.subcommand == "exact":
            return True
        if self.subcommand == "trajectory":
            return self.method == "exact-quantum"
        if self.subcommand == "sweep":
            return any(m in QUANTUM_METHODS for m in self.methods)
        return False

    def _reconcile_interaction(self, resolved: "RunConfig") -> List[str]:
        """Λ 与 (U, N, J) 的一致性检查与换算"""
        errors: List[str] = []
        if self.lam is not None and self.U is not None:
            if self.N is None:
                errors.append("lambda and U given together require N")
            else:
                implied = self.U * (self.N - 1) / self.J
                if abs(implied - self.lam) > 1e-9 * max(1.0, abs(self.lam)):
                    errors.append(
                        f"inconsistent interaction: lambda={self.lam} but U(N-1)/J={implied:.12g}"
                    )
        elif self.lam is not None:
            if self.N == 1 and self.lam != 0:
                errors.append("lambda != 0 is impossible with N = 1")
            elif self.N is not None and self.N > 1:
                resolved.U = self.lam * self.J / (self.N - 1)
            elif self.N is None and self._needs_particle_number():
                errors.append("N is required for quantum methods")
        elif self.U is not None:
            if self.N is None:
                errors.append("U given without N: the scaled interaction needs N")
            else:
                resolved.lam = self.U * (self.N - 1) / self.J
        if self._needs_particle_number() and self.N is None and not self.n_list:
            if "N is required for quantum methods" not in errors:
                errors.append("N is required for quantum methods")
        return errors

    def _check_subcommand(self) -> List[str]:
        errors: List[str] = []
        has_interaction = self.lam is not None or (self.U is not None and self.N is not None)
        if self.subcommand in ("meanfield", "exact", "heuristic", "trajectory") and not has_interaction:
            errors.append(f"{self.subcommand} needs --lambda (or --U with --N)")
        if self.subcommand == "sweep":
            if not self.lambda_grid:
                errors.append("sweep needs a non-empty lambda_grid")
            if not self.methods:
                errors.append("sweep needs at least one method")
        if self.subcommand == "trajectory" and self.method not in ("meanfield-numeric", "exact-quantum"):
            errors.append("trajectory method must be meanfield-numeric or exact-quantum")
        if self.subcommand == "crit" and self.N is None and not self.n_list:
            errors.append("crit needs --n or --n-list")
        if self.subcommand == "reproduce" and self.preset not in PRESET_NAMES:
            errors.append(f"reproduce needs a preset among {', '.join(PRESET_NAMES)}")
        return errors

    def params(self, carrier_n: int = 2) -> DimerParams:
        """由已验证的配置构造物理参数；纯平均场时 N 只作为 U(N-1) 的载体"""
        if self.N is not None and self.U is not None:
            return DimerParams(J=self.J, U=self.U, N=self.N, eps_L=self.eps_L, eps_R=self.eps_R, hbar=self.hbar)
        return DimerParams.from_lambda(
            self.lam or 0.0,
            N=self.N or carrier_n,
            J=self.J,
            eps_L=self.eps_L,
            eps_R=self.eps_R,
            hbar=self.hbar,
        )

    def to_metadata(self) -> Dict[str, str]:
        """以配置文件键名输出全部已解析的值（None 省略），用于输出文件头"""
        metadata: Dict[str, str] = {}
        for f in fields(self):
            if f.name == "sources":
                continue
            value = getattr(self, f.name)
            if value is None or value == ():
                continue
            metadata[_FIELD_TO_KEY[f.name]] = _format(value)
        return metadata


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _parse_entries(raw: Mapping[str, str], source: str) -> Tuple[Dict[str, Any], List[str]]:
    values: Dict[str, Any] = {}
    errors: List[str] = []
    for key, text in raw.items():
        field_name, parse = CONFIG_KEYS[key]
        try:
            values[field_name] = parse(text)
        except (TypeError, ValueError) as e:
            errors.append(f"{source}: bad value for '{key}': {text!r} ({e})")
    return values, errors
