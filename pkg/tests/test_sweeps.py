import pytest

from ampgrad.errors import ConfigError
from ampgrad.experiment import sweeps
from ampgrad.schedule import (DESK_TEMPLATE, PhaseParams, Schedule, baseline, parse_schedule,
                              s2, schedule_from_label)


def test_step1_grid():
    out = sweeps.sweep_step1(baseline())
    assert [s.label for s in out] == [f"S1_{x / 10:.1f}" for x in range(11)]
    assert all(s.phases[1].gamma == 2.0 for s in out)


def test_step2_example():
    out = sweeps.sweep_step2([0.5], baseline())
    assert len(out) == 11
    point = out[3]
    assert point.label == "S2_0.5_0.3"
    assert [p.as_tuple() for p in point.phases] == [
        (50, 0.1, 0.0, 1.0), (100, 0.1, 0.5, 2.0), (130, 0.01, 0.3, 2.0), (150, 0.01, 0.0, 1.0)]


def test_step2_four_families():
    out = sweeps.sweep_step2([0.1, 0.3, 0.5, 0.6], baseline())
    assert len(out) == 44
    assert len({s.label for s in out}) == 44


def test_step2_zero_second_ratio():
    sched = sweeps.sweep_step2([0.5], baseline(DESK_TEMPLATE))[0]
    assert sched.label == "S2_0.5_0.0"
    assert sched.phases[:2] == schedule_from_label("S1_0.5", DESK_TEMPLATE).phases[:2]


def test_gamma_grids():
    best = s2(0.1, 0.3)
    coarse = sweeps.sweep_gamma(best, "coarse")
    fine = sweeps.sweep_gamma(best, "fine")
    assert len(coarse) == 10 and len(fine) == 20
    assert [s.phases[1].gamma for s in fine] == [round(1.1 + 0.1 * i, 1) for i in range(20)]
    assert fine[-1].phases[2].gamma == 3.0
    assert all(s.phases[1].beta == 0.1 and s.phases[2].beta == 0.3 for s in coarse)


def test_gamma_below_one_rejected():
    with pytest.raises(ConfigError):
        sweeps.sweep_gamma(s2(0.1, 0.3), [0.5, 2.0])
    with pytest.raises(ConfigError):
        sweeps.sweep_gamma(baseline(), "coarse")
    with pytest.raises(ConfigError):
        sweeps.sweep_gamma(s2(0.1, 0.3), "medium")


def test_wrong_base_shape_rejected():
    with pytest.raises(ConfigError):
        sweeps.sweep_step1(parse_schedule("[(10, 0.1, 0, 1), (20, 0.01, 0, 1)]"))
    with pytest.raises(ConfigError):
        sweeps.sweep_step1(s2(0.5, 0.3))
    mixed_lr = Schedule((PhaseParams(5, 0.1, 0, 1), PhaseParams(10, 0.05, 0, 1),
                         PhaseParams(15, 0.01, 0, 1), PhaseParams(20, 0.01, 0, 1)))
    with pytest.raises(ConfigError):
        sweeps.sweep_step2([0.5], mixed_lr)
    with pytest.raises(ConfigError):
        sweeps.sweep_step2([1.5], baseline())
    with pytest.raises(ConfigError):
        sweeps.sweep_step2([], baseline())


@pytest.mark.parametrize("make", [
    lambda: sweeps.sweep_step1(baseline()),
    lambda: sweeps.sweep_step1(baseline(DESK_TEMPLATE), gamma=3.0),
    lambda: sweeps.sweep_step2([0.1, 0.3, 0.5, 0.6], baseline()),
    lambda: sweeps.sweep_gamma(s2(0.1, 0.3), "fine"),
    lambda: sweeps.sweep_gamma(s2(0.6, 0.2, DESK_TEMPLATE), "coarse"),
])
def test_every_label_parses_back(make):
    for sched in make():
        template = DESK_TEMPLATE if sched.num_epochs == 30 else None
        back = schedule_from_label(sched.label, template) if template else schedule_from_label(sched.label)
        assert back == sched
