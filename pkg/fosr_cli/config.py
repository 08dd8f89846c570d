"""
FOSR CLI Configuration

Run configuration read from a TOML file. Nested tables flatten with ``_``
(``[kernel] nu = 2.5`` is the key ``kernel_nu``), and ``--override`` flags
replace single keys after the file is read.
"""

import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from fosr_core import ConfigError, Domain, InputError, KernelFamily, TuneGrid, TuningMode

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = ("fit", "tune", "simulate", "rates", "spectra", "predict")


@dataclass
class RunConfig:
    """Every key a run may set; unset keys keep these defaults."""

    domain: str = "interval"
    kernel_family: str = "matern"
    kernel_nu: float = 1.5
    kernel_rho: float = 1.0
    kernel_r: float = 2.0
    quad_size: int | None = None
    k0: int = 30
    penalty: Any = 1e-3  # one value, or one per predictor

    tune_lambdas: list | None = None
    tune_nus: list | None = None
    tune_rhos: list | None = None
    tune_cycles: int = 3

    data_observations: str | None = None
    data_covariates: str | None = None

    sim_setting: int = 1
    sim_full_grid: bool = False
    sim_n_grid: list | None = None
    sim_m_grid: list | None = None
    sim_reps: int | None = None
    sim_mode: str = "full"  # GCV over lambda, nu and rho; "lambda" keeps the true kernel
    sim_lambda: float | None = None
    sim_delta_var: float = 0.1
    sim_delta_is_variance: bool = True
    sim_process_variance: str = "squared"  # or "linear"

    rates_errors: str | None = None
    rates_h: float | None = None

    spectra_source: str = "kernel"  # or "laplacian"
    spectra_count: int = 50
    spectra_fit_start: int | None = None
    spectra_fit_stop: int | None = None

    predict_model: str | None = None
    predict_covariates: str | None = None
    predict_points: str | None = None

    seed: int = 20240501
    out: str = "fosr-out"
    threads: int | None = None

    def parse_domain(self) -> Domain:
        try:
            return Domain.parse(str(self.domain))
        except InputError as e:
            raise ConfigError(f"domain: {e}") from None

    def tune_grid(self) -> TuneGrid:
        grids = {
            "lambda_grid": self.tune_lambdas,
            "nu_grid": self.tune_nus,
            "rho_grid": self.tune_rhos,
        }
        try:
            kwargs = {name: tuple(v) for name, v in grids.items() if v is not None}
            return TuneGrid(cycles=self.tune_cycles, **kwargs)
        except (InputError, TypeError, ValueError) as e:
            raise ConfigError(f"tune: {e}") from None

    def validate(self, command: str) -> "RunConfig":
        """
        Check every parameter the command will use before any work starts.

        Raises:
            ConfigError: naming the first offending key.
        """
        if command not in COMMANDS:
            raise ConfigError(f"unknown command '{command}'")
        _integer(self, "seed", minimum=0)
        if self.threads is not None:
            _integer(self, "threads", minimum=1)

        if command in ("fit", "tune", "spectra"):
            domain = self.parse_domain()
            _integer(self, "k0", minimum=1)
            if self.quad_size is not None:
                _integer(self, "quad_size", minimum=2)
            _choice(self, "kernel_family", [f.value for f in KernelFamily])
            _positive(self, "kernel_nu")
            _positive(self, "kernel_rho")
            _positive(self, "kernel_r")
            if self.kernel_family == KernelFamily.SOBOLEV_SPECTRAL.value:
                if 2 * self.kernel_r <= domain.intrinsic_dim:
                    raise ConfigError(f"kernel_r: sobolev order needs 2r > d on the {domain} domain")

        if command in ("fit", "tune"):
            _required(self, "data_observations")
            _required(self, "data_covariates")
        if command == "fit":
            values = self.penalty if isinstance(self.penalty, list) else [self.penalty]
            if not values or any(not _is_number(v) or not v > 0 for v in values):
                raise ConfigError(f"penalty: must be positive numbers, got {self.penalty!r}")
        if command == "tune":
            _integer(self, "tune_cycles", minimum=1)
            self.tune_grid()

        if command == "simulate":
            _integer(self, "sim_setting", minimum=1)
            if self.sim_setting > 6:
                raise ConfigError(f"sim_setting: expected 1-6, got {self.sim_setting}")
            _integer(self, "k0", minimum=1)
            _choice(self, "sim_mode", [m.value for m in TuningMode])
            _choice(self, "sim_process_variance", ["squared", "linear"])
            for key in ("sim_n_grid", "sim_m_grid"):
                grid = getattr(self, key)
                if grid is not None and (
                    not isinstance(grid, list) or not grid
                    or any(not isinstance(v, int) or v < 1 for v in grid)
                ):
                    raise ConfigError(f"{key}: must be a nonempty list of positive integers")
            if self.sim_reps is not None:
                _integer(self, "sim_reps", minimum=1)
            if self.sim_lambda is not None:
                _positive(self, "sim_lambda")
            if not _is_number(self.sim_delta_var) or self.sim_delta_var < 0:
                raise ConfigError(f"sim_delta_var: must be >= 0, got {self.sim_delta_var!r}")
            if self.sim_mode != TuningMode.FIXED.value:
                self.tune_grid()

        if command == "rates":
            _required(self, "rates_errors")
            if self.rates_h is not None:
                _positive(self, "rates_h")

        if command == "spectra":
            _choice(self, "spectra_source", ["kernel", "laplacian"])
            _integer(self, "spectra_count", minimum=1)
            for key in ("spectra_fit_start", "spectra_fit_stop"):
                if getattr(self, key) is not None:
                    _integer(self, key, minimum=1)

        if command == "predict":
            _required(self, "predict_model")
            _required(self, "predict_covariates")
            _required(self, "predict_points")
            self.parse_domain()
        return self


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _integer(config: RunConfig, key: str, minimum: int) -> None:
    value = getattr(config, key)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{key}: must be an integer >= {minimum}, got {value!r}")


def _positive(config: RunConfig, key: str) -> None:
    value = getattr(config, key)
    if not _is_number(value) or not value > 0:
        raise ConfigError(f"{key}: must be a positive number, got {value!r}")


def _choice(config: RunConfig, key: str, choices: list[str]) -> None:
    value = getattr(config, key)
    if value not in choices:
        raise ConfigError(f"{key}: expected one of {', '.join(choices)}, got {value!r}")


def _required(config: RunConfig, key: str) -> None:
    if not getattr(config, key):
        raise ConfigError(f"{key}: required for this command")


def flatten(table: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten nested TOML tables, joining keys with ``_``."""
    out: dict[str, Any] = {}
    for key, value in table.items():
        name = f"{prefix}_{key}" if prefix else key
        if isinstance(value, dict):
            out.update(flatten(value, name))
        else:
            out[name] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """
    Parse ``key=value``. The value is read as a TOML scalar or array, and
    taken as a plain string when that fails; dots in the key become ``_``.
    """
    key, sep, raw = text.partition("=")
    key = key.strip().replace(".", "_")
    if not sep or not key:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(
    path: Path | str | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    **explicit: Any,
) -> RunConfig:
    """
    Build a RunConfig from an optional TOML file, ``key=value`` overrides and
    explicit keyword values (``None`` keywords are ignored), in that order.

    Raises:
        ConfigError: for unreadable files or unknown keys.
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                values.update(flatten(tomllib.load(handle)))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path.name}: {e}") from None

    for text in overrides:
        key, value = parse_override(text)
        values[key] = value
    values.update({k: v for k, v in explicit.items() if v is not None})

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return RunConfig(**values)
