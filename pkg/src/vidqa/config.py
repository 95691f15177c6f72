"""Flat run configuration: defaults < config file < command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .data.generate import DEFAULT_SPLIT
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .training import DESK_LR, PAPER_LR, TrainConfig, dump_config_text, parse_config_text
from .video import SamplerSpec

CONFIG_FILENAME = "config.txt"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths
    data_dir: str = "data"
    out_dir: str = "runs/default"
    seed: int = 0
    # dataset
    n_clips: int = 100
    train_fraction: float = DEFAULT_SPLIT[0]
    image_size: int = 32
    n_frames: int = 8
    stride: int = 4
    fps: float = 30.0
    answer_type: str = "long"
    max_train_items: int = 0  # 0 keeps every training pair
    # encoders
    embed_dim: int = 64
    n_heads: int = 4
    ffn_dim: int = 128
    n_layers_video: int = 2
    n_layers_text: int = 2
    max_question_len: int = 24
    cube_t: int = 2
    cube_h: int = 16
    cube_w: int = 16
    # decoder
    dec_layers: int = 2
    dec_heads: int = 4
    dec_ffn_dim: int = 128
    max_seq_len: int = 48
    decoder_style: str = "gpt2"
    lora_targets: str = ""  # comma-separated; empty uses the style preset
    lora_rank: int = 8
    lora_alpha: float = 16.0
    base_std: float = 0.125
    token_std: float = 0.25
    max_new_tokens: int = 16
    # training
    epochs: int = 60
    lr: float = DESK_LR
    batch_size: int = 16
    freeze_policy: str = "paper"
    mask_ratio: float = 0.75
    lam: float = 1.0
    loss: str = "bce"

    def __post_init__(self):
        if self.answer_type not in ("long", "short"):
            raise ConfigError(f"answer_type must be 'long' or 'short', got {self.answer_type!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be strictly between 0 and 1")
        if self.max_train_items < 0:
            raise ConfigError("max_train_items must be >= 0")
        try:
            self.train_config()
            self.sampler()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # --- views ------------------------------------------------------------
    def sampler(self) -> SamplerSpec:
        return SamplerSpec(n_frames=self.n_frames, stride=self.stride, fps=self.fps)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, seed=self.seed,
                           freeze_policy=self.freeze_policy, mask_ratio=self.mask_ratio, lam=self.lam,
                           loss=self.loss)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size, n_layers_video=self.n_layers_video, n_layers_text=self.n_layers_text,
            n_heads=self.n_heads, embed_dim=self.embed_dim, ffn_dim=self.ffn_dim,
            max_question_len=self.max_question_len,
            frame_shape=(self.n_frames, self.image_size, self.image_size),
            cube=(self.cube_t, self.cube_h, self.cube_w),
        )

    def decoder_config(self, vocab_size: int) -> DecoderConfig:
        targets = tuple(t for t in self.lora_targets.split(",") if t) or None
        return DecoderConfig(
            vocab_size=vocab_size, n_layers=self.dec_layers, n_heads=self.dec_heads,
            embed_dim=self.embed_dim, ffn_dim=self.dec_ffn_dim, max_seq_len=self.max_seq_len,
            prefix_len=self.max_question_len, prefix_dim=self.embed_dim, style=self.decoder_style,
            lora_targets=targets, lora_rank=self.lora_rank, lora_alpha=self.lora_alpha,
            token_std=self.token_std, base_std=self.base_std,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return dump_config_text(self.to_dict())


PRESETS: dict[str, dict] = {
    "desk": {},
    # optimiser recipe for fine-tuning large pretrained stacks
    "paper": {"lr": PAPER_LR, "epochs": 60, "freeze_policy": "paper"},
    # small memorisation run used as an end-to-end learnability check
    "overfit": {"lr": 1e-3, "epochs": 300, "batch_size": 4, "freeze_policy": "desk", "max_train_items": 64},
}


def _coerce(name: str, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    ok = {int: lambda v: isinstance(v, int) and not isinstance(v, bool),
          float: lambda v: isinstance(v, float),
          str: lambda v: isinstance(v, str)}[typ]
    if not ok(value):
        raise ConfigError(f"{name}: expected {typ.__name__}, got {value!r}")
    return value


def _field_types() -> dict[str, type]:
    hints = {"int": int, "float": float, "str": str}
    return {f.name: hints[f.type] if isinstance(f.type, str) else f.type for f in fields(RunConfig)}


def merge(base: dict, overrides: dict, origin: str) -> dict:
    types = _field_types()
    out = dict(base)
    for key, value in overrides.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r} (from {origin})")
        out[key] = _coerce(key, value, types[key])
    return out


def parse_value(text: str):
    """Command-line values: JSON literals when they parse, bare strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve(config_file: str | Path | None = None, preset: str | None = None,
            overrides: dict | None = None) -> RunConfig:
    values = RunConfig().to_dict()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values = merge(values, PRESETS[preset], f"preset {preset}")
    if config_file is not None:
        try:
            text = Path(config_file).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_file}") from None
        try:
            file_values = parse_config_text(text)
        except ValueError as exc:
            raise ConfigError(f"{config_file}: {exc}") from None
        values = merge(values, file_values, str(config_file))
    values = merge(values, overrides or {}, "command line")
    return RunConfig(**values)


def write_resolved(cfg: RunConfig, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    p = d / CONFIG_FILENAME
    p.write_text(cfg.dumps(), encoding="utf-8")
    return p
