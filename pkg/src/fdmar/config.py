"""Training configuration with reference defaults and a flat key=value file
format. Unknown keys in files or overrides are errors so typos never pass
silently."""

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class TrainConfig:
    """All hyperparameters. Defaults mirror the reference training setup;
    desk-scale runs override epochs/size/steps via config files."""

    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 5e-5
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    blocks_per_layer: list[int] = field(default_factory=lambda: [1, 1, 2, 2, 4, 4, 2, 2, 1])
    stages_T: int = 2
    lambda_g: float = 0.1
    mu_start: float = 0.0
    mu_end: float = 0.5
    image_size: int = 128
    seed: int = 0
    augment_rotate: bool = True
    augment_transpose: bool = True

    # architecture knobs
    base_channels: int = 16
    state_dim: int = 8
    scan_directions: int = 2
    wm_blocks: int = 2
    den_width: int = 16

    # loss configuration
    loss_mode: str = "sgcr"
    extractor: str = "vgg19"
    sgcr_epsilon: float = 1e-7

    # harness knobs
    max_steps: int = 0          # 0 = run the full epoch schedule
    holdout_fraction: float = 0.2
    eval_every: int = 1
    eta_set: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])

    def __post_init__(self):
        positive = ("epochs", "batch_size", "learning_rate", "stages_T",
                    "image_size", "base_channels", "state_dim", "wm_blocks",
                    "den_width")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.scan_directions not in (2, 4):
            raise ValueError("scan_directions must be 2 or 4")
        if self.lambda_g < 0 or self.sgcr_epsilon <= 0:
            raise ValueError("lambda_g must be >= 0 and sgcr_epsilon > 0")

    def replace(self, **overrides) -> "TrainConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls().replace(**data)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "TrainConfig":
        cfg = cls().replace(**parse_config_file(path))
        if overrides:
            cfg = cfg.replace(**overrides)
        return cfg


def _parse_value(name: str, text: str):
    proto = TrainConfig()
    if not hasattr(proto, name):
        raise ValueError(f"unknown config key '{name}'")
    current = getattr(proto, name)
    text = text.strip()
    if isinstance(current, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for '{name}': {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, list):
        elem = type(current[0]) if current else float
        return [elem(tok) for tok in text.split(",") if tok.strip()]
    return text


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        out[key] = _parse_value(key, val)
    return out


def write_config_file(cfg: TrainConfig, path) -> None:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    Path(path).write_text("\n".join(lines) + "\n")
