"""Rank-based Bayesian optimisation over molecular fingerprints."""

import json

from ._rbo import (
    ConfigError,
    DataError,
    Dataset,
    Error,
    Fingerprint,
    NumericalError,
    ParseError,
    bo_auc,
    ci95,
    fingerprint,
    fingerprint_table,
    generate_synthetic,
    kendall_tau,
    load_csv,
    pearson_r,
    r_squared,
    report,
    robust_scale,
    rogi,
    rogi_table,
    t_test,
    tanimoto,
)
from . import _rbo


_CAMPAIGN_KEYS = ("acquisition", "beta", "n_init", "budget", "batch_size", "test_fraction", "top_k", "seed")


def campaign_config(**overrides):
    """Default campaign settings as a dict. Campaign keys go to the top
    level, everything else to the ``surrogate`` section."""
    config = json.loads(_rbo.default_campaign_config())
    for key, value in overrides.items():
        if key in _CAMPAIGN_KEYS:
            config[key] = value
        elif key == "surrogate":
            config["surrogate"].update(value)
        else:
            config["surrogate"][key] = value
    return config


def run_campaign(dataset, config=None, **overrides):
    """Run one campaign and return its trace as a dict."""
    if config is None:
        config = campaign_config(**overrides)
    return json.loads(_rbo.run_campaign(dataset, json.dumps(config)))


def run_experiment(config_path, jobs=1, out=None, seed=None, permissive=False):
    """Run every campaign of an experiment config; returns the manifest."""
    return json.loads(_rbo.run_experiment(str(config_path), jobs, None if out is None else str(out), seed, permissive))
