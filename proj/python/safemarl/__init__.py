"""Python bindings for the safemarl C++ core."""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    compute_budget,
    cost_collaboration,
    cost_collision,
    decomposition_residual,
    default_config,
    expected_improvement,
    gp_predict,
    lagrange_update,
    normalize_config,
    reward_destination,
    reward_move_forward,
    rollout,
    split_budget,
    straightness,
    time_consumption,
    train,
    verify,
)
from ._core import evaluate as _evaluate


def evaluate(checkpoint, scenario_text="", n=30, seed=0):
    """Evaluate a checkpoint at mean actions; returns the report as a dict."""
    return _json.loads(_evaluate(str(checkpoint), scenario_text, n, seed))
