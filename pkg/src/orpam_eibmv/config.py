"""Run configuration files: UTF-8 ``key = value`` lines with ``#`` comments."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .pipeline import ReconstructionConfig

WORKERS_ENV = "ORPAM_WORKERS"


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse):
    def inner(text: str):
        return None if text.lower() in ("auto", "none", "") else parse(text)
    return inner


# key -> (parser, description). Keys mirror ReconstructionConfig fields plus run plumbing.
KEYS = {
    "method": (str, "uniform | fmv | feibmv"),
    "f_lo": (float, "lower passband edge, Hz"),
    "f_hi": (float, "upper passband edge, Hz"),
    "full_band": (_parse_bool, "use every positive-frequency bin instead of [f_lo, f_hi]"),
    "subband_length": (_optional(int), "snapshot length L, or auto = K // 2"),
    "loading": (_optional(float), "diagonal loading factor, or auto = 1 / (10 L)"),
    "threshold": (float, "signal-subspace eigenvalue ratio in (0, 1]"),
    "fixed_num": (_optional(int), "fixed signal-subspace size, or none"),
    "renormalize_eibmv": (_parse_bool, "rescale the projected weight to w^H d = 1"),
    "forward_backward": (_parse_bool, "forward-backward covariance averaging"),
    "output": (str, "rf | envelope | both"),
    "sound_speed": (float, "speed of sound, m/s"),
    "upsample": (int, "output grid refinement factor"),
    "input": (str, "input volume path"),
    "out": (str, "output volume path"),
    "seed": (int, "random seed (recorded for provenance)"),
    "workers": (int, f"worker threads (default from ${WORKERS_ENV}, else 1)"),
    "dtype": (str, "output sample type: float32 | float64"),
}

_RECON_FIELDS = {f.name for f in fields(ReconstructionConfig)}


@dataclass(frozen=True)
class RunConfig:
    recon: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    input: str | None = None
    out: str | None = None
    seed: int = 0
    workers: int = 1
    dtype: str = "float64"

    def to_dict(self) -> dict:
        d = self.recon.to_dict()
        d.update(input=self.input, out=self.out, seed=self.seed, workers=self.workers, dtype=self.dtype)
        return d

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                value = "auto" if key in ("subband_length", "loading") else "none"
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"${WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"${WORKERS_ENV} must be >= 1, got {n}")
    return n


def parse_config(text: str) -> dict:
    """Parse ``key = value`` text into typed values.

    Raises:
        ConfigError: On malformed lines, unknown keys, duplicates or bad values.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return values


def build_run_config(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay parsed values on ``base`` (defaults when omitted)."""
    base = RunConfig(workers=default_workers()) if base is None else base
    unknown = set(values) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    recon_kw = {k: v for k, v in values.items() if k in _RECON_FIELDS}
    run_kw = {k: v for k, v in values.items() if k not in _RECON_FIELDS}
    try:
        recon = replace(base.recon, **recon_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = replace(base, recon=recon, **run_kw)
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if cfg.dtype not in ("float32", "float64"):
        raise ConfigError(f"dtype must be float32 or float64, got {cfg.dtype!r}")
    return cfg


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return build_run_config(parse_config(f.read()))
