"""Schedule families for the ratio and factor sweeps."""
from __future__ import annotations

from ..errors import ConfigError
from ..schedule import DEFAULT_GAMMA, PhaseParams, Schedule

RATIO_GRID = tuple(round(0.1 * i, 1) for i in range(11))
GAMMA_COARSE = tuple(float(g) for g in range(1, 11))
GAMMA_FINE = tuple(round(1.1 + 0.1 * i, 1) for i in range(20))
GAMMA_GRIDS = {"coarse": GAMMA_COARSE, "fine": GAMMA_FINE}


def _check_frame(base: Schedule) -> tuple:
    """Base schedules provide four phases with one lr per half; only the phase frame is reused."""
    ph = base.phases
    if len(ph) != 4:
        raise ConfigError(f"sweep base needs 4 phases, got {len(ph)}")
    if ph[0].lr != ph[1].lr or ph[2].lr != ph[3].lr:
        raise ConfigError("sweep base must keep one lr across phases 1-2 and across phases 3-4")
    if ph[0].beta != 0 or ph[3].beta != 0:
        raise ConfigError("sweep base may amplify only in phases 2 and 3")
    return tuple((p.end_epoch, p.lr) for p in ph)


def _ratio(x) -> float:
    x = float(x)
    if not 0 <= x <= 1:
        raise ConfigError(f"ratio must lie in [0, 1], got {x}")
    return x


def _gamma(g) -> float:
    g = float(g)
    if not g >= 1:
        raise ConfigError(f"gamma must be >= 1, got {g}")
    return g


def sweep_step1(base: Schedule, gamma: float = DEFAULT_GAMMA, grid=RATIO_GRID) -> list:
    """S1_xx for every xx in ``grid``: ratio xx in phase 2 only."""
    (e1, l1), (e2, l2), (e3, l3), (e4, l4) = _check_frame(base)
    if base.phases[2].beta != 0:
        raise ConfigError("step-1 base must not amplify in phase 3")
    gamma = _gamma(gamma)
    return [Schedule((PhaseParams(e1, l1, 0.0, 1.0), PhaseParams(e2, l2, _ratio(x), gamma),
                      PhaseParams(e3, l3, 0.0, 1.0), PhaseParams(e4, l4, 0.0, 1.0)))
            for x in grid]


def sweep_step2(mm_list, base: Schedule, gamma: float = DEFAULT_GAMMA, grid=RATIO_GRID) -> list:
    """S2_mm_xx for every mm and every xx in ``grid``."""
    (e1, l1), (e2, l2), (e3, l3), (e4, l4) = _check_frame(base)
    gamma = _gamma(gamma)
    mm_list = [_ratio(m) for m in mm_list]
    if not mm_list:
        raise ConfigError("step-2 sweep needs at least one mm value")
    return [Schedule((PhaseParams(e1, l1, 0.0, 1.0), PhaseParams(e2, l2, mm, gamma),
                      PhaseParams(e3, l3, _ratio(x), gamma), PhaseParams(e4, l4, 0.0, 1.0)))
            for mm in mm_list for x in grid]


def sweep_gamma(schedule: Schedule, grid=GAMMA_COARSE) -> list:
    """``schedule`` with its amplification factor replaced by each grid value."""
    if isinstance(grid, str):
        if grid not in GAMMA_GRIDS:
            raise ConfigError(f"gamma grid must be coarse, fine or a list, got {grid!r}")
        grid = GAMMA_GRIDS[grid]
    if not any(p.beta > 0 for p in schedule.phases):
        raise ConfigError("gamma sweep needs a schedule with at least one amplified phase")
    return [schedule.with_gamma(_gamma(g)) for g in grid]
