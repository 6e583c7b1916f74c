"""Run configuration resolution.

Precedence: built-in defaults, then a flat UTF-8 ``key = value`` config
file, then explicit command-line flags. The fully resolved configuration
is echoed into the output directory before any work starts, and re-running
from that echo reproduces the run exactly.

The ``LOGICREC_OUT`` environment variable, when set, roots all relative
output directories.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig

DEFAULTS: dict[str, object] = {
    "format": "ml100k",
    "input": "",
    "data": "",
    "out": "runs/run",
    "threshold": 4.0,
    "dedupe": False,
    "d": 96,
    "layers": 2,
    "heads": 4,
    "n_max": 10,
    "phi": 10.0,
    "lambda_rule": 1e-5,
    "lambda_length": 1e-4,
    "lambda_params": 1e-4,
    "lr": 1e-4,
    "batch_size": 128,
    "epochs": 500,
    "patience": 20,
    "variant": "full",
    "seed": 1,
    "seeds": "1,2,3",
    "eval_split": "test",
    "num_eval_negatives": 100,
    "ks": "5,10",
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value, template) -> object:
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _BOOL_TRUE:
            return True
        if text in _BOOL_FALSE:
            return False
        raise ConfigError(f"config key {key!r}: cannot parse boolean from {value!r}")
    if isinstance(template, int) and not isinstance(template, bool):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return str(value)


def parse_config_file(path) -> dict[str, object]:
    """Read a flat ``key = value`` file; '#' starts a comment."""
    out: dict[str, object] = {}
    text = Path(path).read_text("utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value, DEFAULTS[key])
    return out


def resolve(file_path=None, overrides: dict[str, object] | None = None) -> dict[str, object]:
    """defaults < config file < explicit overrides (None values ignored)."""
    cfg = dict(DEFAULTS)
    if file_path:
        cfg.update(parse_config_file(file_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value, DEFAULTS[key])
    return cfg


def to_model_config(cfg: dict[str, object], seed: int | None = None,
                    variant: str | None = None) -> ModelConfig:
    return ModelConfig(
        d=cfg["d"], layers=cfg["layers"], heads=cfg["heads"], n_max=cfg["n_max"],
        phi=cfg["phi"], lambda_rule=cfg["lambda_rule"],
        lambda_length=cfg["lambda_length"], lambda_params=cfg["lambda_params"],
        lr=cfg["lr"], batch_size=cfg["batch_size"], epochs=cfg["epochs"],
        patience=cfg["patience"],
        variant=cfg["variant"] if variant is None else variant,
        seed=cfg["seed"] if seed is None else seed,
    )


def parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} list from {text!r}") from exc


def parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} list from {text!r}") from exc


def output_dir(cfg_out) -> Path:
    """Resolve an output directory under LOGICREC_OUT when it is relative."""
    path = Path(cfg_out)
    root = os.environ.get("LOGICREC_OUT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def echo_config(cfg: dict[str, object], out_dir: Path) -> Path:
    """Write the fully resolved configuration before any work begins."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{key} = {cfg[key]}" for key in sorted(cfg)]
    target = out_dir / "config.txt"
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target
