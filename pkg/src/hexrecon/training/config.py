"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass
from pathlib import Path

from ..errors import DataError


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 2.0
    lambda2: float = 50.0
    lambda1_prime: float = 4.0
    lr: float = 1e-3
    decay_iters: tuple[int, ...] = (100, 200, 400)
    decay_factor: float = 0.5
    coarse_iters: int = 100
    remesh_iters: tuple[int, ...] = (100, 200, 400)
    total_iters: int = 600
    resolution: int | None = None   # training image width; None keeps the scene's
    seed: int = 0
    level_x: int = 3
    level_d: int = 0
    include_raw: bool = True
    hidden: tuple[int, ...] = (128, 128, 128, 128)
    holdout_fraction: float = 0.1
    relax_passes: int = 1           # tangential relaxation after each subdivision

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda1_prime) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.total_iters < 0 or not 0 <= self.coarse_iters:
            raise ValueError("iteration counts must be >= 0")
        if self.coarse_iters > self.total_iters:
            raise ValueError("coarse_iters must not exceed total_iters")
        if list(self.remesh_iters) != sorted(self.remesh_iters):
            raise ValueError("remesh_iters must be sorted ascending")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in [0, 1)")

    def replace(self, **kw) -> TrainConfig:
        return dataclasses.replace(self, **kw)


def _convert(name: str, tp, text: str):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is tuple:
        return tuple(int(t) for t in text.replace(",", " ").split())
    if type(None) in args:
        if text.lower() in ("", "none"):
            return None
        tp = next(a for a in args if a is not type(None))
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return tp(text)


def parse_config(text: str, source: str = "<config>") -> TrainConfig:
    """Parse ``key = value`` lines (``#`` comments) into a :class:`TrainConfig`.

    Tuples are written as space- or comma-separated integers.
    """
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   interpolation=None)
    try:
        cp.read_string("[train]\n" + text, source=source)
    except configparser.Error as exc:
        raise DataError(f"{source}: {exc}") from exc
    hints = typing.get_type_hints(TrainConfig)
    kw = {}
    for key, val in cp["train"].items():
        if key not in hints:
            raise DataError(f"{source}: unknown key {key!r}")
        try:
            kw[key] = _convert(key, hints[key], val)
        except ValueError as exc:
            raise DataError(f"{source}: bad value for {key!r}: {exc}") from exc
    try:
        return TrainConfig(**kw)
    except ValueError as exc:
        raise DataError(f"{source}: {exc}") from exc


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
