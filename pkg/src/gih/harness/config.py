"""Experiment configuration: JSON documents merged over shipped defaults."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

from .. import nn


class ConfigError(ValueError):
    pass


def _configs_dir():
    return resources.files("gih.harness") / "configs"


def default_config(experiment: str, scale: str = "desk") -> dict:
    name = f"{experiment}.json" if scale == "desk" else f"{experiment}.{scale}.json"
    path = _configs_dir() / name
    if not path.is_file():
        raise ConfigError(f"no {scale} config for experiment {experiment!r}")
    return json.loads(path.read_text())


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    doc.setdefault("_base_dir", str(path.parent.resolve()))
    return doc


def resolve(experiment: str, user: dict | None = None, seed: int | None = None) -> dict:
    """Defaults for ``experiment`` overlaid with ``user`` settings and an optional seed."""
    from .experiments import EXPERIMENTS

    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; known: {', '.join(sorted(EXPERIMENTS))}")
    user = dict(user or {})
    scale = user.pop("scale", "desk")
    cfg = deep_merge(default_config(experiment, scale), user)
    declared = cfg.get("experiment", experiment)
    if declared != experiment:
        raise ConfigError(f"config is for experiment {declared!r}, not {experiment!r}")
    cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg["seed"] = int(cfg.get("seed", 0))
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def model_from_config(entry, base_dir: str | None = None) -> nn.ModelSpec:
    """``{"ref": name, "args": {...}}``, ``{"file": path}`` or an inline spec document."""
    if isinstance(entry, str):
        entry = {"ref": entry}
    try:
        if "ref" in entry:
            factories = {
                "mini-resnet": nn.mini_resnet,
                "conv-pool": nn.small_cnn,
                "mlp": nn.mlp,
                "linear": nn.linear_model,
                "conv-pool-linear": nn.conv_pool_linear,
                "appendix-example": nn.appendix_example,
            }
            if entry["ref"] not in factories:
                raise ConfigError(f"unknown model reference {entry['ref']!r}")
            args = dict(entry.get("args", {}))
            for key in ("input_shape",):
                if key in args:
                    args[key] = tuple(args[key])
            return factories[entry["ref"]](**args)
        if "file" in entry:
            p = Path(entry["file"])
            if not p.is_absolute() and base_dir:
                p = Path(base_dir) / p
            if not p.is_file():
                raise ConfigError(f"model spec file {p} not found")
            return nn.load_spec(p)
        return nn.spec_from_dict(entry)
    except (TypeError, nn.SpecError) as exc:
        raise ConfigError(f"bad model entry {entry!r}: {exc}") from None


def canonical_json(cfg: dict) -> str:
    return json.dumps({k: v for k, v in cfg.items() if not k.startswith("_")}, sort_keys=True,
                      separators=(",", ":"))


def content_hash(cfg: dict, extra_files=()) -> str:
    """Git-style blob hash (sha1 over ``blob <len>\\0`` + bytes) of the config and referenced files."""
    h = hashlib.sha1()
    payload = canonical_json(cfg).encode()
    for f in extra_files:
        payload += b"\0" + Path(f).read_bytes()
    h.update(b"blob %d\0" % len(payload))
    h.update(payload)
    return h.hexdigest()
