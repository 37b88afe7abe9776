"""Python bindings for the tiered vector-search planner and simulator."""

import json as _json

from ._tieredrag import (  # noqa: F401
    BetaParams,
    Error,
    IvfIndex,
    batch_min_hitrate,
    beta_from_moments,
    expected_min_hitrate,
    mc_min_hitrate,
    train_ivf,
    variance_at,
)
from . import _tieredrag as _core


def desk_scenario(slo_search_ms=None):
    """The calibrated default scenario and its plan, as dicts."""
    return _json.loads(_core.desk_scenario_json(-1.0 if slo_search_ms is None else float(slo_search_ms)))


def simulate(scenario, lambda_rps=None, mode=None, duration_s=None, seed=None):
    """Run one simulation; `scenario` is a dict as returned by desk_scenario()["scenario"]."""
    sc = dict(scenario)
    for key, value in (("lambda_rps", lambda_rps), ("mode", mode), ("duration_s", duration_s), ("seed", seed)):
        if value is not None:
            sc[key] = value
    return _json.loads(_core.simulate_json(_json.dumps(sc)))


def max_compliant_lambda(scenario, target=0.9):
    return _core.max_compliant_lambda_json(_json.dumps(scenario), float(target))
