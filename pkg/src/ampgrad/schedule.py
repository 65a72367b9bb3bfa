"""Phased training schedules: (end_epoch, lr, beta, gamma) elements and their labels.

Labels follow the experiment naming: ``baseline`` (no amplification anywhere),
``S1_<mm>`` (ratio mm in the second phase only) and ``S2_<mm>_<nn>`` (ratio mm
in the second phase, nn in the third). A ``_G<gamma>`` suffix is added when
the amplification factor is not 2.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigError

DEFAULT_GAMMA = 2.0


class EpochTemplate(NamedTuple):
    """Phase end epochs and learning rates shared by a family of schedules."""
    ends: tuple
    lrs: tuple


PAPER_TEMPLATE = EpochTemplate((50, 100, 130, 150), (0.1, 0.1, 0.01, 0.01))
# same shape at one fifth of the length
DESK_TEMPLATE = EpochTemplate((10, 20, 26, 30), (0.1, 0.1, 0.01, 0.01))
TEMPLATES = {"paper": PAPER_TEMPLATE, "desk": DESK_TEMPLATE}


@dataclass(frozen=True)
class PhaseParams:
    end_epoch: int
    lr: float
    beta: float
    gamma: float

    def __post_init__(self):
        if isinstance(self.end_epoch, bool) or int(self.end_epoch) != self.end_epoch \
                or self.end_epoch <= 0:
            raise ConfigError(f"end_epoch must be a positive integer, got {self.end_epoch!r}")
        if not math.isfinite(self.lr) or self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if not 0 <= self.beta <= 1:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not math.isfinite(self.gamma) or self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        object.__setattr__(self, "end_epoch", int(self.end_epoch))

    def as_tuple(self) -> tuple:
        return (self.end_epoch, self.lr, self.beta, self.gamma)


def _num(x: float) -> str:
    return f"{x:g}"


def format_ratio(x: float) -> str:
    """One decimal for grid values (0.0, 0.5, 1.0), shortest repr otherwise."""
    if abs(x * 10 - round(x * 10)) < 1e-9:
        return f"{x:.1f}"
    return f"{x:g}"


def derive_label(phases) -> str:
    phases = tuple(phases)
    if all(p.beta == 0 and p.gamma == 1 for p in phases):
        return "baseline"
    if len(phases) == 4:
        p1, p2, p3, p4 = phases
        framed = (p1.beta == 0 and p1.gamma == 1 and p4.beta == 0 and p4.gamma == 1
                  and p1.lr == p2.lr and p3.lr == p4.lr)
        if framed:
            suffix = "" if p2.gamma == DEFAULT_GAMMA else f"_G{format_ratio(p2.gamma)}"
            if p3.beta == 0 and p3.gamma == 1:
                return f"S1_{format_ratio(p2.beta)}{suffix}"
            if p3.gamma == p2.gamma:
                return f"S2_{format_ratio(p2.beta)}_{format_ratio(p3.beta)}{suffix}"
    return "custom"


@dataclass(frozen=True)
class Schedule:
    phases: tuple

    def __post_init__(self):
        phases = tuple(self.phases)
        if not phases:
            raise ConfigError("a schedule needs at least one phase")
        for prev, cur in zip(phases, phases[1:]):
            if cur.end_epoch <= prev.end_epoch:
                raise ConfigError(
                    f"end_epoch must be strictly increasing, got {prev.end_epoch} then {cur.end_epoch}")
        object.__setattr__(self, "phases", phases)

    @property
    def label(self) -> str:
        return derive_label(self.phases)

    @property
    def num_epochs(self) -> int:
        return self.phases[-1].end_epoch

    def to_text(self) -> str:
        return "[" + ", ".join(
            f"({p.end_epoch}, {_num(p.lr)}, {_num(p.beta)}, {_num(p.gamma)})"
            for p in self.phases) + "]"

    def __str__(self):
        return self.to_text()

    def with_gamma(self, gamma: float) -> "Schedule":
        """Replace the factor of every amplification phase (beta > 0 or gamma != 1)."""
        return Schedule(tuple(
            PhaseParams(p.end_epoch, p.lr, p.beta, float(gamma))
            if (p.beta > 0 or p.gamma != 1) else p for p in self.phases))


def schedule_from_phases(items) -> Schedule:
    return Schedule(tuple(p if isinstance(p, PhaseParams) else PhaseParams(*p) for p in items))


def baseline(template: EpochTemplate = PAPER_TEMPLATE) -> Schedule:
    return schedule_from_phases((e, lr, 0.0, 1.0) for e, lr in zip(template.ends, template.lrs))


def s1(mm: float, template: EpochTemplate = PAPER_TEMPLATE, gamma: float = DEFAULT_GAMMA) -> Schedule:
    (e1, e2, e3, e4), (l1, l2, l3, l4) = template
    return schedule_from_phases([(e1, l1, 0.0, 1.0), (e2, l2, float(mm), float(gamma)),
                                 (e3, l3, 0.0, 1.0), (e4, l4, 0.0, 1.0)])


def s2(mm: float, nn: float, template: EpochTemplate = PAPER_TEMPLATE,
       gamma: float = DEFAULT_GAMMA) -> Schedule:
    (e1, e2, e3, e4), (l1, l2, l3, l4) = template
    return schedule_from_phases([(e1, l1, 0.0, 1.0), (e2, l2, float(mm), float(gamma)),
                                 (e3, l3, float(nn), float(gamma)), (e4, l4, 0.0, 1.0)])


_NUM = r"(\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
_S1_RE = re.compile(rf"^S1_{_NUM}(?:_G{_NUM})?$")
_S2_RE = re.compile(rf"^S2_{_NUM}_{_NUM}(?:_G{_NUM})?$")


def schedule_from_label(label: str, template: EpochTemplate = PAPER_TEMPLATE) -> Schedule:
    label = label.strip()
    if label == "baseline":
        return baseline(template)
    m = _S1_RE.match(label)
    if m:
        gamma = float(m[2]) if m[2] else DEFAULT_GAMMA
        return s1(float(m[1]), template, gamma)
    m = _S2_RE.match(label)
    if m:
        gamma = float(m[3]) if m[3] else DEFAULT_GAMMA
        return s2(float(m[1]), float(m[2]), template, gamma)
    raise ConfigError(f"unrecognised schedule label {label!r}")


def parse_schedule(text: str, template: EpochTemplate = PAPER_TEMPLATE) -> Schedule:
    """Parse ``"[(50, 0.1, 0, 1), ...]"`` or a label such as ``"S2_0.5_0.3"``."""
    text = text.strip()
    if not text.startswith(("[", "(")):
        return schedule_from_label(text, template)
    try:
        items = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"malformed phase list {text!r}: {exc}")
    if isinstance(items, tuple) and items and not isinstance(items[0], (tuple, list)):
        items = [items]
    phases = []
    for item in items:
        if not isinstance(item, (tuple, list)) or len(item) != 4:
            raise ConfigError(f"each phase must be (end_epoch, lr, beta, gamma), got {item!r}")
        e, lr, beta, gamma = item
        if isinstance(e, float) and e.is_integer():
            e = int(e)
        phases.append(PhaseParams(e, float(lr), float(beta), float(gamma)))
    return Schedule(tuple(phases))


def lr_at_epoch(schedule: Schedule, epoch: int) -> tuple:
    """(lr, beta, gamma, phase_index) for a 1-based epoch; phase i covers (end_{i-1}, end_i]."""
    if not 1 <= epoch <= schedule.num_epochs:
        raise ValueError(f"epoch {epoch} outside 1..{schedule.num_epochs}")
    for index, p in enumerate(schedule.phases, start=1):
        if epoch <= p.end_epoch:
            return p.lr, p.beta, p.gamma, index
    raise AssertionError("unreachable")


def phase_bounds(schedule: Schedule) -> list:
    """(phase_index, first_epoch, last_epoch, PhaseParams) for every phase."""
    out, start = [], 0
    for index, p in enumerate(schedule.phases, start=1):
        out.append((index, start + 1, p.end_epoch, p))
        start = p.end_epoch
    return out
