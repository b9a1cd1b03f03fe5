"""Domain model: geometry, dynamics, rewards, enumeration, serialization."""

import pytest

from coadapt.model import (
    GOAL_CLOCKWISE,
    GOAL_COUNTERCLOCKWISE,
    MODE_CLOCKWISE,
    MODE_COUNTERCLOCKWISE,
    MODES,
    ORIENTATIONS,
    ROTATION_STEP,
    START_ORIENTATION,
    VARIANT_BASELINE,
    VARIANT_COMPLIANCE,
    VARIANT_STATE_CONVEYING,
    VARIANTS,
    DomainError,
    HumanAction,
    ModelValidationError,
    MomdpModel,
    ObservableState,
    Rewards,
    RobotAction,
)


def test_orientation_grid():
    assert ORIENTATIONS == tuple(range(-90, 91, 20))
    assert START_ORIENTATION in ORIENTATIONS
    assert ORIENTATIONS[0] == GOAL_CLOCKWISE
    assert ORIENTATIONS[-1] == GOAL_COUNTERCLOCKWISE


def test_only_goal_orientations_are_terminal():
    for orientation in ORIENTATIONS:
        x = ObservableState(orientation, (0,), (0,), False)
        assert x.terminal == (orientation in (GOAL_CLOCKWISE, GOAL_COUNTERCLOCKWISE))


def test_robot_action_sets_per_variant():
    task = [RobotAction.task(m) for m in MODES]
    assert MomdpModel(variant=VARIANT_BASELINE).robot_actions() == task
    assert MomdpModel(variant=VARIANT_COMPLIANCE).robot_actions() == task + [
        RobotAction.verbal_command(m) for m in MODES
    ]
    assert MomdpModel(variant=VARIANT_STATE_CONVEYING).robot_actions() == task + [
        RobotAction.state_conveying()
    ]


@pytest.mark.parametrize(
    "variant, bad_action",
    [
        (VARIANT_BASELINE, RobotAction.verbal_command(0)),
        (VARIANT_BASELINE, RobotAction.state_conveying()),
        (VARIANT_COMPLIANCE, RobotAction.state_conveying()),
        (VARIANT_STATE_CONVEYING, RobotAction.verbal_command(1)),
    ],
)
def test_foreign_action_kinds_are_rejected(variant, bad_action):
    model = MomdpModel(variant=variant)
    with pytest.raises(DomainError):
        model.world_transition(model.pre_opening_state(), bad_action, HumanAction(1))


def test_agreement_moves_table_by_one_step():
    model = MomdpModel(variant=VARIANT_COMPLIANCE)
    x = ObservableState(START_ORIENTATION, (1,), (0,), False)
    for mode in MODES:
        x_next = model.world_transition(x, RobotAction.task(mode), HumanAction(mode))
        delta = -ROTATION_STEP if mode == MODE_CLOCKWISE else ROTATION_STEP
        assert x_next.orientation == START_ORIENTATION + delta
        assert x_next.human_modes == (mode,)
        assert x_next.robot_modes == (mode,)
        assert not x_next.verbal_flag


def test_disagreement_freezes_table():
    model = MomdpModel(variant=VARIANT_BASELINE)
    x = ObservableState(START_ORIENTATION, (1,), (1,), False)
    a_r, a_h = RobotAction.task(0), HumanAction(1)
    assert model.disagreement(a_r, a_h)
    x_next = model.world_transition(x, a_r, a_h)
    assert x_next.orientation == START_ORIENTATION
    assert x_next.human_modes == (1,)
    assert x_next.robot_modes == (0,)


def test_command_freezes_table_sets_flag_and_records_target():
    model = MomdpModel(variant=VARIANT_COMPLIANCE)
    x = ObservableState(START_ORIENTATION, (1,), (0,), False)
    x_next = model.world_transition(x, RobotAction.verbal_command(0), HumanAction(1))
    assert x_next.orientation == START_ORIENTATION
    assert x_next.robot_modes == (0,)
    assert x_next.verbal_flag
    # A command is never a push disagreement even when modes differ.
    assert not model.disagreement(RobotAction.verbal_command(0), HumanAction(1))


def test_flag_clears_on_the_next_non_command_action():
    model = MomdpModel(variant=VARIANT_COMPLIANCE)
    x = ObservableState(START_ORIENTATION, (1,), (0,), True)
    x_next = model.world_transition(x, RobotAction.task(0), HumanAction(1))
    assert not x_next.verbal_flag


def test_state_conveying_repeats_last_robot_mode():
    model = MomdpModel(variant=VARIANT_STATE_CONVEYING)
    x = ObservableState(START_ORIENTATION, (1,), (0,), False)
    x_next = model.world_transition(x, RobotAction.state_conveying(), HumanAction(1))
    assert x_next.orientation == START_ORIENTATION
    assert x_next.robot_modes == (0,)
    assert x_next.human_modes == (1,)


def test_goal_rewards_paid_once_on_entry():
    model = MomdpModel(variant=VARIANT_BASELINE)
    x = ObservableState(-70, (0,), (0,), False)
    a = RobotAction.task(0)
    x_goal = model.world_transition(x, a, HumanAction(0))
    assert x_goal.terminal
    assert model.reward(x, a, HumanAction(0), x_goal) == 20.0

    y = ObservableState(70, (1,), (1,), False)
    y_goal = model.world_transition(y, RobotAction.task(1), HumanAction(1))
    assert model.reward(y, RobotAction.task(1), HumanAction(1), y_goal) == 15.0

    frozen = model.world_transition(x, RobotAction.task(1), HumanAction(0))
    assert model.reward(x, RobotAction.task(1), HumanAction(0), frozen) == 0.0


def test_verbal_cost_is_charged_on_verbal_actions():
    model = MomdpModel(variant=VARIANT_COMPLIANCE, rewards=Rewards(verbal_cost=1.5))
    x = ObservableState(START_ORIENTATION, (1,), (0,), False)
    a = RobotAction.verbal_command(0)
    x_next = model.world_transition(x, a, HumanAction(1))
    assert model.reward(x, a, HumanAction(1), x_next) == -1.5


def test_optimal_mode_trades_reward_against_distance():
    assert MomdpModel(variant=VARIANT_BASELINE).optimal_mode() == MODE_CLOCKWISE
    # With equal goal rewards the closer goal wins.
    even = MomdpModel(variant=VARIANT_BASELINE, rewards=Rewards(optimal=20.0, suboptimal=20.0))
    assert even.optimal_mode() == MODE_COUNTERCLOCKWISE


def test_opening_step_is_the_initial_disagreement():
    for variant in VARIANTS:
        model = MomdpModel(variant=variant)
        pre = model.pre_opening_state()
        assert pre.orientation == START_ORIENTATION
        assert pre.human_modes == pre.robot_modes == (model.human_preference,)
        a_r, a_h = model.opening_actions()
        assert a_r == RobotAction.task(model.optimal_mode())
        assert a_h == HumanAction(model.human_preference)
        x0 = model.initial_state()
        assert x0.orientation == START_ORIENTATION
        assert x0.human_modes == (model.human_preference,)
        assert x0.robot_modes == (model.optimal_mode(),)


def test_enumeration_counts_and_uniqueness():
    expected = {VARIANT_BASELINE: 40, VARIANT_COMPLIANCE: 80, VARIANT_STATE_CONVEYING: 40}
    for variant, count in expected.items():
        model = MomdpModel(variant=variant)
        states = model.enumerate_observable_states()
        assert len(states) == count
        assert len({x.key() for x in states}) == count
        assert sum(1 for x in states if not x.terminal) == count * 8 // 10


def test_transitions_stay_inside_the_enumeration():
    for variant in VARIANTS:
        model = MomdpModel(variant=variant)
        keys = {x.key() for x in model.enumerate_observable_states()}
        for x in model.nonterminal_states():
            for a_r in model.robot_actions():
                for a_h in (HumanAction(0), HumanAction(1)):
                    assert model.world_transition(x, a_r, a_h).key() in keys


def test_no_transition_out_of_terminal_states():
    model = MomdpModel(variant=VARIANT_BASELINE)
    x = ObservableState(GOAL_CLOCKWISE, (0,), (0,), False)
    with pytest.raises(DomainError):
        model.world_transition(x, RobotAction.task(0), HumanAction(0))


def test_config_round_trip_preserves_model_and_hash(tmp_path):
    model = MomdpModel(variant=VARIANT_STATE_CONVEYING, human_preference=0)
    clone = MomdpModel.from_config(model.to_config())
    assert clone == model
    assert clone.model_hash() == model.model_hash()

    path = tmp_path / "model.json"
    model.save(str(path))
    assert MomdpModel.load(str(path)) == model


def test_model_hash_tracks_every_config_field():
    base = MomdpModel(variant=VARIANT_BASELINE)
    assert MomdpModel(variant=VARIANT_BASELINE, gamma=0.8).model_hash() != base.model_hash()
    assert MomdpModel(variant=VARIANT_BASELINE, human_preference=0).model_hash() != base.model_hash()
    assert MomdpModel(variant=VARIANT_COMPLIANCE).model_hash() != base.model_hash()


def test_from_config_rejects_unknown_schema():
    config = MomdpModel(variant=VARIANT_BASELINE).to_config()
    config["schema"] = 999
    with pytest.raises(ModelValidationError):
        MomdpModel.from_config(config)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"variant": "verbal"},
        {"k": 0},
        {"gamma": 1.0},
        {"human_preference": 2},
        {"alpha_grid": (0.5,)},
        {"alpha_grid": (0.5, 0.25)},
        {"alpha_prior": (1.0, 0.0, 0.0, 0.0, 0.5)},
        {"alpha_transition": ((1.0,) * 5,) * 5},
    ],
)
def test_validation_rejects_broken_configs(kwargs):
    with pytest.raises(ModelValidationError):
        MomdpModel(**{"variant": VARIANT_BASELINE, **kwargs})


def test_observable_state_json_round_trip():
    x = ObservableState(30, (0, 1), (1, 1), True)
    assert ObservableState.from_json(x.to_json()) == x
    assert x.key() == "30:01:11:1"


def test_robot_action_json_and_ordering():
    actions = [RobotAction.state_conveying(), RobotAction.verbal_command(0), RobotAction.task(1), RobotAction.task(0)]
    for a in actions:
        assert RobotAction.from_json(a.to_json()) == a
    ordered = sorted(actions, key=lambda a: a.sort_key())
    assert ordered == [
        RobotAction.task(0),
        RobotAction.task(1),
        RobotAction.verbal_command(0),
        RobotAction.state_conveying(),
    ]
