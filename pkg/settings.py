# Run configuration: built-in defaults, then an optional key=value file, then command-line flags.

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError, InvalidField
from flow_driver import FlowConfig
from inertia import InertiaSpec
from torus_fields import TorusGrid

load_dotenv()

RESULT_PREFIX = "result_"


@dataclass(frozen=True)
class RunSettings:
    grid: int = 64
    side_length: float = 1.0
    alpha: Optional[float] = None  # None: 0.05 * side_length^2
    order_k: int = 2
    sigma: float = 1e-3
    dt: float = 0.1
    dt_min: float = 1e-8
    max_steps: int = 2000
    grad_tol: Optional[float] = None  # None: 1e-6 * sqrt(E(initial))
    jac_floor: float = 1e-3
    defect_bound: float = 2.0
    interp_order: int = 1
    seed: int = 0
    out_dir: str = os.getenv("DIFFEOFLOW_OUT_DIR", "out")
    dump_fields: bool = False
    template: str = ""
    target: str = ""
    init_phi: str = ""
    init_psi: str = ""

    def torus_grid(self, dim: int = 2) -> TorusGrid:
        return TorusGrid(dim, self.grid, self.side_length)

    def resolved_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 0.05 * self.side_length ** 2

    def flow_config(self) -> FlowConfig:
        return FlowConfig(sigma=self.sigma, inertia=InertiaSpec(self.resolved_alpha(), self.order_k),
                          dt_init=self.dt, dt_min=self.dt_min, max_steps=self.max_steps, grad_tol=self.grad_tol,
                          jac_floor=self.jac_floor, defect_bound=self.defect_bound,
                          interp_order=self.interp_order)


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _boolean(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


PARSERS: Dict[str, Callable[[str], Any]] = {
    "grid": int, "side_length": float, "alpha": _optional_float, "order_k": int, "sigma": float,
    "dt": float, "dt_min": float, "max_steps": int, "grad_tol": _optional_float, "jac_floor": float,
    "defect_bound": float, "interp_order": int, "seed": int, "out_dir": str, "dump_fields": _boolean,
    "template": str, "target": str, "init_phi": str, "init_psi": str,
}


def parse_values(raw: Mapping[str, Optional[str]], source: str) -> Dict[str, Any]:
    """Parse textual key=value pairs; result_* keys are skipped so manifests load as config files."""
    parsed = {}
    for key, text in raw.items():
        if key.startswith(RESULT_PREFIX):
            continue
        if key not in PARSERS:
            raise ConfigError(f"{source}: unknown key '{key}'")
        if text is None:
            raise ConfigError(f"{source}: key '{key}' has no value")
        try:
            parsed[key] = PARSERS[key](text)
        except ValueError as e:
            raise ConfigError(f"{source}: bad value for '{key}': {e}") from e
    return parsed


def read_config_file(path) -> Dict[str, Any]:
    if not Path(path).is_file():
        raise ConfigError(f"Config file {path} does not exist")
    return parse_values(dotenv_values(path), str(path))


def load_settings(config_path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunSettings:
    values: Dict[str, Any] = {}
    if config_path:
        values.update(read_config_file(config_path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - {f.name for f in fields(RunSettings)}
    if unknown:
        raise ConfigError(f"Unknown settings: {', '.join(sorted(unknown))}")
    settings = RunSettings(**values)
    validate(settings)
    return settings


def validate(settings: RunSettings) -> None:
    """Surface bad values as ConfigError before any file is read."""
    try:
        settings.torus_grid()
    except InvalidField as e:
        raise ConfigError(str(e)) from e
    settings.flow_config()


def _format(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def manifest_lines(settings: RunSettings, results: Mapping[str, Any]) -> list:
    lines = [f"{key}={_format(value)}" for key, value in asdict(settings).items()]
    lines += [f"{RESULT_PREFIX}{key}={_format(value)}" for key, value in results.items()]
    return lines


def write_manifest(path, settings: RunSettings, results: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(manifest_lines(settings, results)) + "\n")
