"""Choosing which layers get their gradients amplified, and installing the multipliers.

The eligible group is every layer of the requested types in forward order. A
ratio ``beta`` of that group is drawn uniformly without replacement from a
seeded PCG64 stream; the stream id lets each training phase redraw
independently of earlier draws.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Iterable

import numpy as np

from .autograd import Kind, attach_grad_transform, clear_grad_transforms
from .errors import ConfigError

SELECTION_DOMAIN = 0x414D50


class LayerType(str, Enum):
    BATCHNORM = "BatchNorm"
    RELU = "ReLU"
    BATCHNORM_ONE_PER_BLOCK = "BatchNormOnePerBlock"


_ALIASES = {
    "bn": LayerType.BATCHNORM,
    "batchnorm": LayerType.BATCHNORM,
    "relu": LayerType.RELU,
    "bn1": LayerType.BATCHNORM_ONE_PER_BLOCK,
    "bnoneperblock": LayerType.BATCHNORM_ONE_PER_BLOCK,
    "batchnormoneperblock": LayerType.BATCHNORM_ONE_PER_BLOCK,
}


def parse_layer_types(spec) -> frozenset:
    """Accepts LayerType members or names such as ``"bn"``, ``"relu+bn"``, ``["ReLU", "BatchNorm"]``."""
    if isinstance(spec, (str, LayerType)):
        spec = re.split(r"[+,\s]+", str(spec.value if isinstance(spec, LayerType) else spec))
    out = set()
    for item in spec:
        if isinstance(item, LayerType):
            out.add(item)
            continue
        key = str(item).strip().lower().replace("_", "").replace("-", "")
        if not key:
            continue
        if key not in _ALIASES:
            raise ConfigError(f"unknown layer type {item!r}")
        out.add(_ALIASES[key])
    if not out:
        raise ConfigError("layer_types must not be empty")
    return frozenset(out)


def layer_types_label(layer_types) -> str:
    order = [LayerType.RELU, LayerType.BATCHNORM, LayerType.BATCHNORM_ONE_PER_BLOCK]
    types = parse_layer_types(layer_types)
    return "+".join(t.value for t in order if t in types)


def amp_size(beta: float, group_size: int) -> int:
    """round(beta * group_size), halves rounded away from zero on the decimal value of beta."""
    return int((Decimal(repr(float(beta))) * group_size).quantize(Decimal(1), ROUND_HALF_UP))


def build_group(model, layer_types, block_bn: str = "first",
                include_downsample_bn: bool = False) -> list:
    """Ids of every amplification-eligible layer of ``model``, in forward order.

    ``BatchNormOnePerBlock`` contributes one main-path BN per residual block
    (``block_bn`` picks the first or second) and never the stem BN.
    """
    types = parse_layer_types(layer_types)
    if block_bn not in ("first", "second"):
        raise ConfigError(f"block_bn must be 'first' or 'second', got {block_bn!r}")
    chosen = set()
    if LayerType.BATCHNORM_ONE_PER_BLOCK in types:
        blocks = model.blocks()
        if not blocks:
            raise ConfigError(
                f"BatchNormOnePerBlock needs a residual architecture; {model.name!r} has no blocks")
        for block in blocks:
            chosen.add(block.bn_positions[0 if block_bn == "first" else 1])
            if include_downsample_bn:
                chosen.update(block.downsample_bn_ids)
    for layer in model.modules():
        if layer.kind is Kind.BATCHNORM and LayerType.BATCHNORM in types:
            chosen.add(layer.layer_id)
        elif layer.kind is Kind.RELU and LayerType.RELU in types:
            chosen.add(layer.layer_id)
    group = [layer.layer_id for layer in model.modules() if layer.layer_id in chosen]
    if not group:
        raise ConfigError(f"no layers of types {sorted(t.value for t in types)} in {model.name!r}")
    return group


@dataclass(frozen=True)
class AmpSelection:
    group: tuple
    selected: tuple
    beta: float
    gamma: float
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.gamma >= 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if len(set(self.selected)) != len(self.selected) or not set(self.selected) <= set(self.group):
            raise ConfigError("selected layers must be a duplicate-free subset of the group")

    def dump_line(self, phase=None) -> str:
        phase = self.stream if phase is None else phase
        return (f"phase={phase} seed={self.seed} beta={self.beta:g} gamma={self.gamma:g} "
                f"group=[{','.join(map(str, self.group))}] "
                f"selected=[{','.join(map(str, self.selected))}]")


_DUMP_RE = re.compile(
    r"phase=(?P<phase>-?\d+) seed=(?P<seed>-?\d+) beta=(?P<beta>\S+) gamma=(?P<gamma>\S+) "
    r"group=\[(?P<group>[\d,]*)\] selected=\[(?P<selected>[\d,]*)\]$")


def parse_dump_line(line: str) -> AmpSelection:
    m = _DUMP_RE.match(line.strip())
    if m is None:
        raise ValueError(f"not a selection dump line: {line!r}")

    def ids(text):
        return tuple(int(v) for v in text.split(",") if v)

    return AmpSelection(ids(m["group"]), ids(m["selected"]), float(m["beta"]),
                        float(m["gamma"]), int(m["seed"]), int(m["phase"]))


def selection_rng(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=[SELECTION_DOMAIN, int(seed)], spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def select_from_group(group, beta: float, seed: int, stream: int = 0,
                      gamma: float = 2.0) -> AmpSelection:
    """Uniform sample of round(beta*|group|) ids without replacement."""
    beta = float(beta)
    if not 0 <= beta <= 1:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    group = tuple(group)
    k = amp_size(beta, len(group))
    picked = set(selection_rng(seed, stream).permutation(len(group))[:k].tolist())
    selected = tuple(lid for i, lid in enumerate(group) if i in picked)
    return AmpSelection(group, selected, beta, float(gamma), int(seed), int(stream))


def get_gradient_amp_layers(model, beta: float, layer_types, seed: int, gamma: float = 2.0,
                            stream: int = 0, block_bn: str = "first",
                            include_downsample_bn: bool = False) -> AmpSelection:
    if not 0 <= float(beta) <= 1:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    group = build_group(model, layer_types, block_bn, include_downsample_bn)
    return select_from_group(group, beta, seed, stream, gamma)


def apply_amplification(model, sel: AmpSelection) -> None:
    layers = {layer.layer_id: layer for layer in model.modules()}
    missing = [lid for lid in sel.selected if lid not in layers]
    if missing:
        raise ConfigError(f"layer ids {missing} are not in model {model.name!r}")
    for lid in sel.selected:
        attach_grad_transform(layers[lid], sel.gamma)


def remove_amplification(model) -> None:
    clear_grad_transforms(model)


def amplified_layers(model) -> list:
    return [layer.layer_id for layer in model.modules() if layer.grad_transform is not None]


def write_selection_dump(selections: Iterable, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for sel in selections:
            fh.write(sel.dump_line() + "\n")
