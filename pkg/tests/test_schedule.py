import pytest

from ampgrad.errors import ConfigError
from ampgrad.schedule import (DESK_TEMPLATE, PAPER_TEMPLATE, PhaseParams, Schedule, derive_label,
                              lr_at_epoch, parse_schedule, phase_bounds, s1, s2,
                              schedule_from_label)

BASELINE = "[(50, 0.1, 0, 1), (100, 0.1, 0, 1), (130, 0.01, 0, 1), (150, 0.01, 0, 1)]"
S2_TEXT = "[(50,0.1,0,1),(100,0.1,0.5,2),(130,0.01,0.3,2),(150,0.01,0,1)]"


def test_baseline_label():
    sched = parse_schedule(BASELINE)
    assert sched.label == "baseline"
    assert len(sched.phases) == 4
    assert sched.to_text() == BASELINE


def test_s2_label():
    assert parse_schedule(S2_TEXT).label == "S2_0.5_0.3"


def test_s1_and_gamma_suffix():
    assert parse_schedule("[(50,0.1,0,1),(100,0.1,0.7,2),(130,0.01,0,1),(150,0.01,0,1)]").label == "S1_0.7"
    assert parse_schedule("[(50,0.1,0,1),(100,0.1,0.7,3),(130,0.01,0,1),(150,0.01,0,1)]").label == "S1_0.7_G3.0"
    assert parse_schedule("[(50,0.1,0,1),(100,0.1,0.1,2.5),(130,0.01,0.3,2.5),(150,0.01,0,1)]").label \
        == "S2_0.1_0.3_G2.5"


def test_other_shapes_are_custom():
    assert parse_schedule("[(10, 0.1, 0.5, 2)]").label == "custom"
    assert parse_schedule("[(5,0.1,0.2,2),(10,0.1,0.5,2),(15,0.01,0,1),(20,0.01,0,1)]").label == "custom"


@pytest.mark.parametrize("text", [
    "[(10, 0.1, 1.5, 2)]",                      # beta out of range
    "[(10, 0.0, 0, 1)]",                        # lr must be positive
    "[(10, -0.1, 0, 1)]",
    "[(10, 0.1, 0, 1), (10, 0.1, 0, 1)]",       # end epochs must increase
    "[(20, 0.1, 0, 1), (10, 0.1, 0, 1)]",
    "[(10, 0.1, 0.5, 0.5)]",                    # gamma below one
    "[(10.5, 0.1, 0, 1)]",
    "[(10, 0.1, 0)]",
    "[]",
    "[(10, 0.1, 0, 1",
    "S3_0.5",
])
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_schedule(text)


@pytest.mark.parametrize("epoch,lr", [(1, 0.1), (50, 0.1), (100, 0.1), (101, 0.01), (130, 0.01), (150, 0.01)])
def test_lr_at_epoch_baseline(epoch, lr):
    assert lr_at_epoch(parse_schedule(BASELINE), epoch)[0] == lr


def test_lr_at_epoch_s2():
    sched = parse_schedule(S2_TEXT)
    assert lr_at_epoch(sched, 75) == (0.1, 0.5, 2.0, 2)
    assert lr_at_epoch(sched, 115) == (0.01, 0.3, 2.0, 3)
    assert lr_at_epoch(sched, 140)[1] == 0 and lr_at_epoch(sched, 140)[3] == 4
    for bad in (0, 151):
        with pytest.raises(ValueError):
            lr_at_epoch(sched, bad)


def test_phase_bounds_cover_all_epochs():
    bounds = phase_bounds(parse_schedule(BASELINE))
    covered = [e for _, first, last, _ in bounds for e in range(first, last + 1)]
    assert covered == list(range(1, 151))


@pytest.mark.parametrize("label", ["baseline", "S1_0.0", "S1_0.5", "S1_1.0", "S2_0.5_0.3",
                                   "S2_0.1_0.0", "S1_0.5_G3.0", "S2_0.6_0.9_G1.3", "S1_0.25"])
@pytest.mark.parametrize("template", [PAPER_TEMPLATE, DESK_TEMPLATE])
def test_label_round_trip(label, template):
    sched = schedule_from_label(label, template)
    assert sched.label == label
    assert parse_schedule(sched.to_text()) == sched


def test_label_templates():
    assert s1(0.5).phases[1] == PhaseParams(100, 0.1, 0.5, 2.0)
    assert s2(0.5, 0.3, DESK_TEMPLATE).phases[2] == PhaseParams(26, 0.01, 0.3, 2.0)
    assert schedule_from_label("baseline", DESK_TEMPLATE).num_epochs == 30


def test_with_gamma():
    sched = s2(0.5, 0.3).with_gamma(4.0)
    assert [p.gamma for p in sched.phases] == [1.0, 4.0, 4.0, 1.0]
    assert sched.label == "S2_0.5_0.3_G4.0"


def test_zero_ratio_with_factor_is_not_baseline():
    phases = (PhaseParams(10, 0.1, 0.0, 1.0), PhaseParams(20, 0.1, 0.0, 5.0),
              PhaseParams(26, 0.01, 0.0, 1.0), PhaseParams(30, 0.01, 0.0, 1.0))
    assert derive_label(phases) == "S1_0.0_G5.0"
    assert Schedule(phases) != schedule_from_label("baseline", DESK_TEMPLATE)
