"""Flat key=value configuration with dotted sections, presets, and overrides.

Resolution is pure: defaults, then an optional preset, then an optional
config file, then --key value overrides. Every key is typed and validated;
unknown keys are an error. The resolved mapping is what lands verbatim in
the run manifest.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError
from .imageops import AugmentParams
from .refinement import PgdConfig
from .trainer import ABLATION_MODES, TrainConfig, mode_flags

_INT, _FLOAT, _STR, _BOOL = "int", "float", "str", "bool"

# key -> (type, default, allowed values or None)
SCHEMA = {
    "model.architecture": (_STR, "mnist-2conv", ("mnist-2conv", "gtsrb-5conv")),
    "data.exemplars": (_STR, "builtin:font", None),
    "data.num_classes": (_INT, 10, None),
    "data.image_size": (_INT, 28, None),
    "data.channels": (_INT, 1, (1, 3)),
    "data.infer_alpha": (_STR, "none", ("none", "white", "black")),
    "data.mnist": (_STR, "", None),
    "data.gtsrb": (_STR, "", None),
    "train.epochs": (_INT, 300, None),
    "train.rounds_per_epoch": (_INT, 20, None),
    "train.passes_per_round": (_INT, 5, None),
    "train.learning_rate": (_FLOAT, 1e-4, None),
    "train.weight_decay": (_FLOAT, 1e-4, None),
    "train.resample_prob": (_FLOAT, 0.5, None),
    "train.ablation": (_STR, "full", ABLATION_MODES),
    "train.eval_every": (_INT, 5, None),
    "train.seed": (_INT, 0, None),
    "train.val_size": (_INT, 2000, None),
    "train.precision": (_STR, "float32", ("float32", "float64")),
    "sampler.e": (_INT, 2, None),
    "context.chain_refined": (_BOOL, False, None),
    "pgd.enabled": (_STR, "auto", ("auto", "on", "off")),
    "pgd.alpha": (_FLOAT, 1.6 / 255, None),
    "pgd.iterations": (_INT, 8, None),
    "pgd.eps_fg": (_FLOAT, math.inf, None),
    "pgd.eps_bg": (_FLOAT, math.inf, None),
    "pgd.init_noise": (_FLOAT, -1.0, None),  # negative -> derived default
    "aug.rotation": (_FLOAT, 15.0, None),
    "aug.translate": (_FLOAT, 0.10, None),
    "aug.scale_lo": (_FLOAT, 0.8, None),
    "aug.scale_hi": (_FLOAT, 1.2, None),
    "aug.shear": (_FLOAT, 10.0, None),
    "aug.perspective": (_FLOAT, 0.2, None),
    "aug.blur_kernel": (_INT, 3, None),
    "aug.brightness": (_FLOAT, 0.0, None),
    "aug.contrast": (_FLOAT, 0.0, None),
    "aug.saturation": (_FLOAT, 0.0, None),
    "aug.hue": (_FLOAT, 0.0, None),
    "aug.exposure_lo": (_FLOAT, 1.0, None),
    "aug.exposure_hi": (_FLOAT, 1.0, None),
}

PRESETS = tuple(
    f"{ds}-{mode}" for ds in ("mnist", "gtsrb") for mode in ABLATION_MODES
)


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key: {key}")
    kind, _, allowed = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == _INT:
            value = int(raw)
        elif kind == _FLOAT:
            if "/" in raw:
                num, den = raw.split("/", 1)
                value = float(num) / float(den)
            else:
                value = float(raw)
        elif kind == _BOOL:
            if raw.lower() in ("true", "1", "yes", "on"):
                value = True
            elif raw.lower() in ("false", "0", "no", "off"):
                value = False
            else:
                raise ValueError(f"not a boolean: {raw!r}")
        else:
            value = raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
    if allowed is not None and value not in allowed:
        raise ConfigError(f"{key} must be one of {allowed}, got {value!r}")
    return value


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    out = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            unknown.append(key)
            continue
        out[key] = parse_value(key, raw)
    if unknown:
        raise ConfigError(f"{origin}: unknown config keys: {', '.join(sorted(unknown))}")
    return out


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ResolvedConfig:
    """Fully resolved key -> value mapping; no unset fields remain."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def manifest_text(self, extra: dict | None = None) -> str:
        items = dict(self.values)
        if extra:
            items.update(extra)
        return "\n".join(f"{k}={_format_value(v)}" for k, v in sorted(items.items())) + "\n"

    def to_train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            epochs=v["train.epochs"],
            rounds_per_epoch=v["train.rounds_per_epoch"],
            passes_per_round=v["train.passes_per_round"],
            num_classes=v["data.num_classes"],
            lr=v["train.learning_rate"],
            weight_decay=v["train.weight_decay"],
            resample_prob=v["train.resample_prob"],
            ablation=v["train.ablation"],
            eval_every=v["train.eval_every"],
            seed=v["train.seed"],
            val_size=v["train.val_size"],
            reuse_passes=v["sampler.e"],
            chain_refined=v["context.chain_refined"],
            precision=v["train.precision"],
        ).validate()

    def to_pgd_config(self) -> PgdConfig:
        v = self.values
        init = v["pgd.init_noise"]
        return PgdConfig(
            alpha=v["pgd.alpha"],
            iterations=v["pgd.iterations"],
            eps_fg=v["pgd.eps_fg"],
            eps_bg=v["pgd.eps_bg"],
            init_noise=None if init < 0 else init,
        ).validate()

    def to_augment_params(self) -> AugmentParams:
        v = self.values
        return AugmentParams(
            rotation=v["aug.rotation"],
            translate=(v["aug.translate"], v["aug.translate"]),
            scale=(v["aug.scale_lo"], v["aug.scale_hi"]),
            shear=v["aug.shear"],
            perspective_distortion=v["aug.perspective"],
            blur_kernel=v["aug.blur_kernel"],
            brightness=(1.0 - v["aug.brightness"], 1.0 + v["aug.brightness"]),
            contrast=(1.0 - v["aug.contrast"], 1.0 + v["aug.contrast"]),
            saturation=(1.0 - v["aug.saturation"], 1.0 + v["aug.saturation"]),
            hue=v["aug.hue"],
            exposure=(v["aug.exposure_lo"], v["aug.exposure_hi"]),
        ).validate()

    def exemplar_dir(self) -> str:
        spec = self.values["data.exemplars"]
        if spec.startswith("builtin:"):
            name = spec.split(":", 1)[1]
            path = resources.files("ctxforge") / "assets" / name
            return str(path)
        if not os.path.isabs(spec) and not os.path.isdir(spec):
            env = os.environ.get("CTXFORGE_DATA", "")
            if env and os.path.isdir(os.path.join(env, spec)):
                return os.path.join(env, spec)
        return spec

    def dataset_root(self, which: str) -> str:
        """Explicit path if configured, else $CTXFORGE_DATA/<which>."""
        explicit = self.values[f"data.{which}"]
        if explicit:
            return explicit
        env = os.environ.get("CTXFORGE_DATA", "")
        return os.path.join(env, which) if env else ""


def _validate_cross(values: dict) -> None:
    arch = values["model.architecture"]
    expect = {"mnist-2conv": (10, 28, 1), "gtsrb-5conv": (43, 32, 3)}[arch]
    got = (values["data.num_classes"], values["data.image_size"], values["data.channels"])
    if got != expect:
        raise ConfigError(
            f"{arch} requires (num_classes, image_size, channels) = {expect}, config has {got}"
        )
    _, _, mode_pgd = mode_flags(values["train.ablation"])
    enabled = values["pgd.enabled"]
    if enabled != "auto" and (enabled == "on") != mode_pgd:
        raise ConfigError(
            f"pgd.enabled={enabled} conflicts with ablation mode "
            f"{values['train.ablation']!r} (which turns refinement {'on' if mode_pgd else 'off'})"
        )
    if values["aug.scale_lo"] <= 0:
        raise ConfigError(f"aug.scale_lo must be > 0, got {values['aug.scale_lo']}")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    path = resources.files("ctxforge") / "presets" / f"{name}.cfg"
    return path.read_text(encoding="utf-8")


def resolve(preset: str | None = None, config_file=None, overrides: dict | None = None) -> ResolvedConfig:
    """Layer defaults <- preset <- config file <- overrides, then validate."""
    values = {key: default for key, (_, default, _) in SCHEMA.items()}
    if preset:
        values.update(parse_config_text(preset_text(preset), origin=f"preset {preset}"))
    if config_file:
        with open(config_file, encoding="utf-8") as f:
            values.update(parse_config_text(f.read(), origin=str(config_file)))
    for key, raw in (overrides or {}).items():
        values[key] = parse_value(key, raw) if isinstance(raw, str) else raw
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
    _validate_cross(values)
    cfg = ResolvedConfig(values)
    cfg.to_train_config()
    cfg.to_pgd_config()
    cfg.to_augment_params()
    return cfg
