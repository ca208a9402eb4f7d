"""TOML run configuration.

Every section and key is optional; missing values fall back to the module
defaults, so an empty file is a valid configuration::

    [pipeline]            # preset, l, s, variant, residual_scale
    [flow]                # search_radius, patch_radius, pyramid_levels, subpixel_refine, median_radius
    [train]               # learning_rate, epochs, deep_supervision_weight, seed
    [synth]               # videos, width, height, frames, classes, seed, noise_sigma, ...
    [[synth.sprite]]      # shape, class, size, velocity, color, texture_amplitude, position
"""

import re
from dataclasses import fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .benchmark import random_video_config
from .flow import FlowConfig
from .fusion import TrainConfig
from .grid import InvalidArgument
from .pipeline import PRESETS, PipelineConfig
from .synth import Sprite, SynthConfig


class ConfigError(InvalidArgument):
    pass


class Config:
    def __init__(self, data, text="", path="<config>"):
        self.data = data
        self.text = text
        self.path = path

    @classmethod
    def load(cls, path):
        if path is None:
            return cls({})
        try:
            with open(path, "rb") as f:
                raw = f.read()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror or exc}") from None
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls(data, raw.decode("utf-8"), str(path))

    def line_of(self, section, key):
        """Best-effort line number of ``key`` inside ``[section]``."""
        current = None
        for no, line in enumerate(self.text.splitlines(), 1):
            head = re.match(r"\s*\[\[?\s*([^\]]+?)\s*\]\]?", line)
            if head:
                current = head.group(1)
                continue
            if current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
                return no
        return None

    def error(self, section, key, message):
        line = self.line_of(section, key)
        where = f"{self.path}:{line}" if line else self.path
        return ConfigError(f"{where}: [{section}] {key}: {message}")

    def _sprite_location(self, message):
        found = re.match(r"sprite (\d+):", message)
        if found:
            headers = [no for no, line in enumerate(self.text.splitlines(), 1)
                       if re.match(r"\s*\[\[\s*synth\.sprite\s*\]\]", line)]
            index = int(found.group(1))
            if index < len(headers):
                return f"{self.path}:{headers[index]}"
        return self.path

    def section(self, name):
        value = self.data.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"{self.path}: [{name}] must be a table")
        return value

    def _build(self, section, cls, table, base=None, renames=None):
        renames = renames or {}
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in table.items():
            name = renames.get(key, key)
            if name not in known:
                raise self.error(section, key, "unknown key")
            kwargs[name] = tuple(value) if isinstance(value, list) else value
        try:
            return replace(base, **kwargs) if base is not None else cls(**kwargs)
        except (InvalidArgument, TypeError) as exc:
            key = next((k for k in table if renames.get(k, k) in str(exc)), next(iter(table), ""))
            raise self.error(section, key, str(exc)) from None

    def flow(self):
        return self._build("flow", FlowConfig, self.section("flow"))

    def train(self):
        return self._build("train", TrainConfig, self.section("train"))

    def pipeline(self, variant=None):
        table = dict(self.section("pipeline"))
        preset = table.pop("preset", "indoor")
        if preset not in PRESETS:
            raise self.error("pipeline", "preset", f"unknown preset {preset!r}; choose {sorted(PRESETS)}")
        if variant is not None:
            table["variant"] = variant
        base = replace(PRESETS[preset], flow=self.flow(), train=self.train())
        cfg = self._build("pipeline", PipelineConfig, table, base=base)
        return replace(cfg, train=replace(cfg.train, variant=cfg.variant))

    def synth(self):
        """One :class:`SynthConfig` per requested video."""
        table = dict(self.section("synth"))
        sprites = table.pop("sprite", [])
        count = table.pop("videos", 1)
        if not isinstance(count, int) or count < 1:
            raise self.error("synth", "videos", "must be a positive integer")
        renames = {"classes": "num_classes"}
        base = self._build("synth", SynthConfig, table, renames=renames)
        parsed = tuple(
            self._build("synth.sprite", Sprite, sp, renames={"class": "class_index"}) for sp in sprites
        )
        configs = []
        for i in range(count):
            seed = base.seed + i
            if parsed:
                cfg = replace(base, sprites=parsed, seed=seed, background_seed=base.background_seed + i)
            else:
                rand = random_video_config(seed, base.width, base.height, base.frames, base.num_classes)
                cfg = replace(base, sprites=rand.sprites, seed=seed, background_seed=base.background_seed + i)
            try:
                cfg.validate()
            except InvalidArgument as exc:
                raise ConfigError(f"{self._sprite_location(str(exc))}: [synth] {exc}") from None
            configs.append(cfg)
        return configs
