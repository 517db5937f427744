# SPDX-License-Identifier: Apache-2.0
"""Token-wise adaptive prompt learning for a frozen CLIP-style model.

Configs and reports are plain dicts. Images are float32 arrays shaped
(H, W) or (H, W, C) with values in [0, 1].
"""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping

from . import _aple
from ._aple import (
    ConfigError,
    DimensionError,
    DivergenceError,
    Error,
    IoError,
    NumericError,
    UsageError,
    adapt,
    aggregate,
    fft2,
    gaussian_gain,
    harmonic_mean,
    load_archive,
    load_image,
    load_pnm,
    save_archive,
    save_image,
    selftest,
)

__all__ = [
    "ConfigError", "DimensionError", "DivergenceError", "Error", "IoError", "NumericError",
    "UsageError", "adapt", "aggregate", "default_config", "fft2", "gaussian_gain", "gen_data",
    "grad_check", "harmonic_mean", "load_archive", "load_image", "load_pnm", "make_config", "run",
    "save_archive", "save_image", "selftest", "sweep",
]

SWEEP_AXES = ("prompt_length", "sigma", "lambda_d", "lambda_g", "adaptation_on_off")


def _dump(config: Mapping[str, Any] | None) -> str:
    return json.dumps(dict(config) if config else {})


def default_config() -> dict:
    return json.loads(_aple.default_config())


def make_config(config: Mapping[str, Any] | None = None, **overrides: Any) -> dict:
    """Validated, fully populated config.

    Keyword overrides use double underscores for dots, so
    ``make_config(train__lambda_d=0.8)`` sets ``train.lambda_d``.
    """
    pairs = [(k.replace("__", "."), json.dumps(v)) for k, v in overrides.items()]
    return json.loads(_aple.apply_overrides(_dump(config), pairs))


def run(config: Mapping[str, Any] | None = None, write_files: bool = True, **overrides: Any) -> dict:
    """Runs the full experiment and returns the report."""
    cfg = make_config(config, **overrides)
    return json.loads(_aple.run(json.dumps(cfg), write_files))


def sweep(axis: str, values: Iterable[Any], config: Mapping[str, Any] | None = None,
          write_files: bool = True, **overrides: Any) -> dict:
    cfg = make_config(config, **overrides)
    return json.loads(_aple.sweep(json.dumps(cfg), axis, [str(v) for v in values], write_files))


def gen_data(directory: str, config: Mapping[str, Any] | None = None, **overrides: Any) -> str:
    """Renders the dataset to ``directory``; returns its fingerprint."""
    return _aple.gen_data(json.dumps(make_config(config, **overrides)), directory)


def grad_check(eps: float = 1e-3, classes: int = 4, seed: int = 5) -> dict:
    """Finite-difference audit of the stage-1 loss on a small model."""
    return _aple.grad_check(eps, classes, seed)
