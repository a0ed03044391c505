"""
单元测试：配置管理

测试配置文件解析、环境变量、优先级合并、Λ/U 换算与一次性错误报告。
"""

from pathlib import Path

import pytest

from src.config import (
    LOG_LEVEL_ENV,
    THREADS_ENV,
    ConfigValidationError,
    RunConfig,
    parse_float_list,
    parse_int_list,
    parse_window,
)


def _valid(**overrides):
    values = {"subcommand": "heuristic", "lam": 4.0}
    values.update(overrides)
    return RunConfig(**values)


class TestListParsers:
    """测试列表解析"""

    def test_comma_list(self):
        """测试逗号分隔"""
        assert parse_float_list("1, 2.5,4") == (1.0, 2.5, 4.0)
        assert parse_int_list("50,100") == (50, 100)

    def test_inclusive_range(self):
        """测试包含终点的区间"""
        assert parse_float_list("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)

    def test_range_rounding(self):
        """测试区间值按十位小数取整"""
        values = parse_float_list("1.5:2.5:0.1")
        assert len(values) == 11
        assert values[3] == 1.8
        assert values[-1] == 2.5

    def test_mixed(self):
        """测试区间与单值混用"""
        assert parse_float_list("0:1:0.5,3") == (0.0, 0.5, 1.0, 3.0)

    def test_bad_step(self):
        """测试非正步长"""
        with pytest.raises(ValueError):
            parse_float_list("0:1:0")

    def test_window(self):
        """测试窗口需要两个值"""
        assert parse_window("0,100") == (0.0, 100.0)
        with pytest.raises(ValueError):
            parse_window("0,1,2")


class TestFromFile:
    """测试配置文件读取"""

    def test_plain_file(self, tmp_path):
        """测试 key=value 与注释"""
        path = tmp_path / "run.conf"
        path.write_text(
            "# 注释\nsubcommand=sweep\nlambda_grid = 1:2:0.5\nn_list=50,100\n\nmethods=exact-quantum\nseed=4\n",
            encoding="utf-8",
        )
        values = RunConfig.from_file(str(path))
        assert values == {
            "subcommand": "sweep",
            "lambda_grid": (1.0, 1.5, 2.0),
            "n_list": (50, 100),
            "methods": ("exact-quantum",),
            "seed": 4,
        }

    def test_comment_assignment_ignored(self, tmp_path):
        """测试普通配置文件中的 # lambda=3 只是注释"""
        path = tmp_path / "run.conf"
        path.write_text("# lambda=3\nJ=2\n", encoding="utf-8")
        assert RunConfig.from_file(str(path)) == {"J": 2.0}

    def test_output_header_is_config(self, tmp_path):
        """测试输出文件头部按配置读取，信息键与数据行被忽略"""
        path = tmp_path / "out.csv"
        path.write_text(
            "# format=dimer-trap-sweep\n"
            "# created=2026-01-01T00:00:00Z\n"
            "# lambda_grid=1.0,2.0\n"
            "# seed=9\n"
            "# code_version=1.0.0\n"
            "# status=complete\n"
            "lambda,N,method,zbar,err,status,message\n"
            "1.0,,meanfield-closed,0,,ok,\n",
            encoding="utf-8",
        )
        assert RunConfig.from_file(str(path)) == {"lambda_grid": (1.0, 2.0), "seed": 9}

    def test_unknown_key(self, tmp_path):
        """测试未知键报告行号"""
        path = tmp_path / "run.conf"
        path.write_text("J=1\ncolour=blue\n", encoding="utf-8")
        with pytest.raises(ConfigValidationError, match=r":2: unknown key 'colour'"):
            RunConfig.from_file(str(path))

    def test_malformed_line_and_bad_value(self, tmp_path):
        """测试格式错误与数值错误一起报告"""
        path = tmp_path / "run.conf"
        path.write_text("just words\nJ=abc\n", encoding="utf-8")
        with pytest.raises(ConfigValidationError) as exc_info:
            RunConfig.from_file(str(path))
        assert len(exc_info.value.errors) == 2

    def test_example_config(self):
        """测试仓库自带的示例配置可以解析并通过验证"""
        path = Path(__file__).resolve().parent.parent / "config" / "example.conf"
        values = RunConfig.from_file(str(path))
        assert values["lam"] == 2.0
        assert values["lambda_grid"][-1] == 6.0
        config = RunConfig(subcommand="sweep", **values).validate()
        assert config.U == pytest.approx(2.0 / 99.0)

    def test_missing_file(self, tmp_path):
        """测试文件不存在"""
        with pytest.raises(FileNotFoundError):
            RunConfig.from_file(str(tmp_path / "missing.conf"))


class TestFromEnv:
    """测试环境变量"""

    def test_values(self):
        """测试线程数与日志级别"""
        values = RunConfig.from_env({THREADS_ENV: "4", LOG_LEVEL_ENV: "debug"})
        assert values == {"threads": 4, "log_level": "DEBUG"}

    def test_empty_environment(self):
        """测试未设置时为空"""
        assert RunConfig.from_env({}) == {}

    def test_bad_value(self):
        """测试无法解析的线程数"""
        with pytest.raises(ConfigValidationError):
            RunConfig.from_env({THREADS_ENV: "lots"})


class TestResolve:
    """测试优先级合并"""

    def test_precedence(self, tmp_path):
        """测试 默认值 < 环境变量 < 配置文件 < 命令行参数"""
        path = tmp_path / "run.conf"
        path.write_text("threads=2\nseed=5\nalpha=0.01\n", encoding="utf-8")
        config = RunConfig.resolve(
            {"subcommand": "crit", "seed": 8, "N": None},
            config_path=str(path),
            environ={THREADS_ENV: "6", LOG_LEVEL_ENV: "WARNING"},
        )
        assert config.seed == 8
        assert config.threads == 2
        assert config.alpha == 0.01
        assert config.log_level == "WARNING"
        assert config.N is None
        assert config.sources["seed"] == "flag"
        assert config.sources["threads"] == "file"
        assert config.sources["log_level"] == "environment"

    def test_flag_override_echoed(self, tmp_path):
        """测试命令行覆盖的值出现在元数据中"""
        path = tmp_path / "run.conf"
        path.write_text("lambda=3\n", encoding="utf-8")
        config = RunConfig.resolve({"subcommand": "heuristic", "lam": 4.5}, config_path=str(path), environ={})
        assert config.validate().to_metadata()["lambda"] == "4.5"


class TestValidate:
    """测试配置验证"""

    def test_valid(self):
        """测试合法配置"""
        assert _valid().validate().lam == 4.0

    def test_negative_j(self):
        """测试 J=-1"""
        with pytest.raises(ConfigValidationError, match="J must be positive"):
            _valid(J=-1.0).validate()

    def test_inconsistent_interaction(self):
        """测试 Λ、U、N、J 同时给出且不一致"""
        with pytest.raises(ConfigValidationError, match="inconsistent interaction"):
            _valid(lam=2.0, U=5.0, N=100).validate()

    def test_consistent_overdetermined(self):
        """测试同时给出但一致的 Λ 与 U"""
        config = _valid(lam=2.0, U=2.0 / 99.0, N=100).validate()
        assert config.lam == 2.0

    def test_all_errors_reported(self):
        """测试所有违反的约束一次报告"""
        with pytest.raises(ConfigValidationError) as exc_info:
            _valid(J=-1.0, alpha=0.7, window=(5.0, 1.0), samples=10).validate()
        errors = exc_info.value.errors
        assert len(errors) >= 4
        assert "J must be positive" in errors

    def test_u_derived_from_lambda(self):
        """测试由 Λ 与 N 换算 U"""
        config = RunConfig(subcommand="exact", lam=4.0, N=101).validate()
        assert config.U == pytest.approx(0.04)

    def test_lambda_derived_from_u(self):
        """测试由 U 与 N 换算 Λ"""
        config = RunConfig(subcommand="exact", U=0.02, N=101, J=2.0).validate()
        assert config.lam == pytest.approx(1.0)

    def test_validate_returns_copy(self):
        """测试验证不修改原配置"""
        original = RunConfig(subcommand="exact", lam=4.0, N=101)
        original.validate()
        assert original.U is None

    def test_quantum_method_needs_n(self):
        """测试量子方法缺少 N"""
        with pytest.raises(ConfigValidationError, match="N is required"):
            RunConfig(subcommand="exact", lam=2.0).validate()

    def test_meanfield_needs_no_n(self):
        """测试平均场只需 Λ"""
        config = RunConfig(subcommand="meanfield", lam=3.0).validate()
        assert config.params().scaled_interaction() == pytest.approx(3.0)

    def test_u_without_n(self):
        """测试只给 U 不给 N"""
        with pytest.raises(ConfigValidationError, match="U given without N"):
            RunConfig(subcommand="meanfield", U=0.1).validate()

    def test_single_particle_interaction(self):
        """测试 N=1 时 Λ≠0 被拒绝"""
        with pytest.raises(ConfigValidationError, match="N = 1"):
            RunConfig(subcommand="exact", lam=1.0, N=1).validate()

    @pytest.mark.parametrize("alpha", [0.0, 0.5, -0.1])
    def test_alpha_range(self, alpha):
        """测试 α 必须在 (0, 1/2) 内"""
        with pytest.raises(ConfigValidationError, match="alpha"):
            RunConfig(subcommand="crit", N=100, alpha=alpha).validate()

    def test_coarse_sampling(self):
        """测试采样间隔上限 t0/50"""
        with pytest.raises(ConfigValidationError, match="dt_sample"):
            _valid(dt_sample=0.05).validate()

    def test_sweep_requirements(self):
        """测试扫描需要 Λ 网格与方法"""
        with pytest.raises(ConfigValidationError) as exc_info:
            RunConfig(subcommand="sweep").validate()
        assert any("lambda_grid" in e for e in exc_info.value.errors)
        assert any("method" in e for e in exc_info.value.errors)

    def test_sweep_quantum_with_n_list(self):
        """测试量子扫描以 n_list 提供粒子数"""
        config = RunConfig(
            subcommand="sweep", lambda_grid=(1.0, 2.0), methods=("exact-quantum",), n_list=(50,)
        )
        assert config.validate().n_list == (50,)

    def test_unknown_preset(self):
        """测试未知预设"""
        with pytest.raises(ConfigValidationError, match="preset"):
            RunConfig(subcommand="reproduce", preset="fig9").validate()

    def test_trajectory_method(self):
        """测试轨迹只接受数值方法"""
        with pytest.raises(ConfigValidationError, match="trajectory method"):
            RunConfig(subcommand="trajectory", lam=2.0, method="meanfield-closed").validate()


class TestToMetadata:
    """测试元数据回显"""

    def test_keys_and_formatting(self):
        """测试使用配置文件键名与 repr 浮点格式"""
        config = RunConfig(
            subcommand="sweep",
            lambda_grid=(1.0, 2.5),
            methods=("meanfield-numeric",),
            seed=3,
        ).validate()
        metadata = config.to_metadata()
        assert metadata["subcommand"] == "sweep"
        assert metadata["lambda_grid"] == "1.0,2.5"
        assert metadata["window"] == "0.0,100.0"
        assert metadata["seed"] == "3"
        assert "lambda" not in metadata
        assert "N" not in metadata
        assert "n_list" not in metadata

    def test_header_round_trip(self, tmp_path):
        """测试元数据写成文件后读回得到相同配置"""
        config = RunConfig(subcommand="exact", lam=3.0, N=50, seed=2, dt_sample=0.005).validate()
        path = tmp_path / "out.csv"
        lines = ["# format=dimer-trap-trajectory", "# created=2026-01-01T00:00:00Z"]
        lines += [f"# {k}={v}" for k, v in config.to_metadata().items()]
        lines += ["# status=complete", "t_over_t0,z", "0,1"]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        replayed = RunConfig.resolve({}, config_path=str(path), environ={}).validate()
        assert replayed == config
