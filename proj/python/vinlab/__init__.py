"""Value-iteration DDQN gridworld transfer experiments."""

from ._vinlab import (
    Action,
    GameRules,
    GridState,
    ObjectClass,
    Variant,
    VinNetwork,
    build_network,
    epsilon_at,
    evaluate,
    generate_rules,
    gradient_check,
    layer_names,
    observe,
    optimal_action,
    optimal_return,
    random_policy_return,
    render_ascii,
    reset,
    select_seed_pair,
    self_transfer,
    step,
    steps_to_threshold,
    train,
    transfer,
)

__all__ = [
    "Action",
    "GameRules",
    "GridState",
    "ObjectClass",
    "Variant",
    "VinNetwork",
    "build_network",
    "epsilon_at",
    "evaluate",
    "generate_rules",
    "gradient_check",
    "layer_names",
    "observe",
    "optimal_action",
    "optimal_return",
    "random_policy_return",
    "render_ascii",
    "reset",
    "select_seed_pair",
    "self_transfer",
    "step",
    "steps_to_threshold",
    "train",
    "transfer",
]
