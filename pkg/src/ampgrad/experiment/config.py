"""Experiment configuration files (YAML).

Example::

    arch: cnn-small
    dataset:
      kind: cifar10            # or synth-images / synth-gaussians
      dir: data/cifar-10-batches-bin
      train_size: 5000
      test_size: 1000
    template: desk             # epoch/lr frame for labels: desk (30 epochs) or paper (150)
    schedules: [baseline, S1_0.5]
    seeds: [0, 1, 2]
    baseline_seeds: [0, 1, 2, 3, 4]
    layer_types: [BatchNorm]
    output_dir: runs/s1

Instead of ``schedules`` a ``sweep`` block names exactly one swept parameter:
``step1_ratio``, ``step2_ratio`` or ``gamma``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import yaml

from ..amplification import parse_layer_types
from ..errors import ConfigError
from ..nn.archs import PRESETS
from ..schedule import TEMPLATES, Schedule, parse_schedule
from . import sweeps

SWEEP_KEYS = ("step1_ratio", "step2_ratio", "gamma")
DATASET_KINDS = ("cifar10", "synth-images", "synth-gaussians")
CIFAR_ENV = "AMPGRAD_CIFAR10_DIR"


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "cifar10"
    dir: Optional[str] = None
    train_size: Optional[int] = 5000
    test_size: Optional[int] = 1000
    stratified: bool = True
    subset_seed: int = 0
    classes: int = 10
    dim: int = 8
    separation: float = 4.0
    seed: int = 0
    normalize: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    arch: str
    dataset: DatasetSpec
    schedules: tuple
    seeds: tuple
    baseline_seeds: tuple
    output_dir: str
    template: str = "desk"
    layer_types: tuple = ("BatchNorm",)
    batch_size: int = 128
    amp_point: str = "input_side"
    scale_own_params: bool = True
    block_bn: str = "first"
    include_downsample_bn: bool = False
    arch_options: dict = field(default_factory=dict)
    workers: int = 1
    sweep: Optional[dict] = None


def _as_tuple_of_ints(value, what: str) -> tuple:
    if isinstance(value, int):
        value = [value]
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of integers, got {value!r}")
    return out


def _grid(value, default) -> tuple:
    if value is None or value == "grid":
        return tuple(default)
    if value in ("coarse", "fine"):
        return sweeps.GAMMA_GRIDS[value]
    if isinstance(value, (int, float)):
        return (float(value),)
    return tuple(float(v) for v in value)


def expand_sweep(sweep: dict, template) -> list:
    if not isinstance(sweep, dict) or len(sweep) != 1:
        keys = list(sweep) if isinstance(sweep, dict) else sweep
        raise ConfigError(f"a sweep names exactly one swept parameter out of {SWEEP_KEYS}, got {keys}")
    (key, value), = sweep.items()
    if key not in SWEEP_KEYS:
        raise ConfigError(f"unknown sweep parameter {key!r}; choose from {SWEEP_KEYS}")
    value = value if isinstance(value, dict) else {"grid": value}
    gamma = float(value.get("gamma", 2.0))
    if key == "step1_ratio":
        base = parse_schedule(value.get("base", "baseline"), template)
        return sweeps.sweep_step1(base, gamma=gamma, grid=_grid(value.get("grid"), sweeps.RATIO_GRID))
    if key == "step2_ratio":
        if "mm" not in value:
            raise ConfigError("step2_ratio sweep needs an 'mm' list")
        base = parse_schedule(value.get("base", "baseline"), template)
        mm = value["mm"] if isinstance(value["mm"], (list, tuple)) else [value["mm"]]
        return sweeps.sweep_step2(mm, base, gamma=gamma,
                                  grid=_grid(value.get("grid"), sweeps.RATIO_GRID))
    if "schedule" not in value:
        raise ConfigError("gamma sweep needs a 'schedule'")
    best = parse_schedule(str(value["schedule"]), template)
    return sweeps.sweep_gamma(best, _grid(value.get("grid", "coarse"), sweeps.GAMMA_COARSE))


def config_from_dict(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    arch = raw.get("arch", "cnn-small")
    if arch not in PRESETS:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {sorted(PRESETS)}")
    ds_raw = dict(raw.get("dataset") or {})
    bad = set(ds_raw) - set(DatasetSpec.__dataclass_fields__)
    if bad:
        raise ConfigError(f"unknown dataset keys {sorted(bad)}")
    dataset = DatasetSpec(**ds_raw)
    if dataset.kind not in DATASET_KINDS:
        raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {dataset.kind!r}")
    if dataset.kind == "cifar10":
        d = dataset.dir or os.environ.get(CIFAR_ENV)
        if not d:
            raise ConfigError(f"cifar10 dataset needs 'dir' or ${CIFAR_ENV}")
        dataset = replace(dataset, dir=os.path.join(base_dir, os.path.expanduser(d)))
    template_name = raw.get("template", "desk")
    if template_name not in TEMPLATES:
        raise ConfigError(f"template must be one of {sorted(TEMPLATES)}")
    template = TEMPLATES[template_name]

    has_sched = raw.get("schedules") is not None
    has_sweep = raw.get("sweep") is not None
    if has_sched == has_sweep:
        raise ConfigError("give exactly one of 'schedules' or 'sweep'")
    if has_sweep:
        schedules = expand_sweep(raw["sweep"], template)
    else:
        items = raw["schedules"]
        if isinstance(items, str):
            items = [items]
        schedules = [s if isinstance(s, Schedule) else parse_schedule(str(s), template)
                     for s in items]
    if not schedules:
        raise ConfigError("no schedules to run")

    seeds = _as_tuple_of_ints(raw.get("seeds", [0]), "seeds")
    if not seeds:
        raise ConfigError("seeds must not be empty")
    baseline_seeds = _as_tuple_of_ints(raw.get("baseline_seeds", list(range(5))), "baseline_seeds")
    if not baseline_seeds:
        raise ConfigError("baseline_seeds must not be empty")
    layer_types = raw.get("layer_types", ["BatchNorm"])
    parse_layer_types(layer_types)
    layer_types = tuple([layer_types] if isinstance(layer_types, str) else layer_types)
    if raw.get("amp_point", "input_side") not in ("input_side", "output_side"):
        raise ConfigError("amp_point must be input_side or output_side")
    batch_size = int(raw.get("batch_size", 128))
    if batch_size < 2:
        raise ConfigError("batch_size must be at least 2")
    out = raw.get("output_dir", "runs")
    return ExperimentConfig(
        arch=arch, dataset=dataset, schedules=tuple(schedules), seeds=seeds,
        baseline_seeds=baseline_seeds, output_dir=os.path.join(base_dir, out),
        template=template_name, layer_types=layer_types, batch_size=batch_size,
        amp_point=raw.get("amp_point", "input_side"),
        scale_own_params=bool(raw.get("scale_own_params", True)),
        block_bn=raw.get("block_bn", "first"),
        include_downsample_bn=bool(raw.get("include_downsample_bn", False)),
        arch_options=dict(raw.get("arch_options") or {}),
        workers=max(1, int(raw.get("workers", 1))),
        sweep=raw.get("sweep"))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}")
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def read_raw_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return raw
