"""Bayesian penetrance estimation from family data (C++ core)."""

import json

from . import _core
from ._core import annual_probability, cdf, quantiles_to_weibull, run_cli

__all__ = [
    "annual_probability",
    "cdf",
    "default_config",
    "default_priors",
    "estimate",
    "pedigree_logliks",
    "priors_from_config",
    "quantiles_to_weibull",
    "run_cli",
    "simulate_study",
    "validate_pedigrees",
]


def default_priors(max_age=94):
    return json.loads(_core.default_priors_json(max_age))


def default_config():
    return json.loads(_core.default_config_json())


def priors_from_config(config, max_age=94):
    return json.loads(_core.priors_from_json(json.dumps(config), max_age))


def validate_pedigrees(csv_text, max_age=94):
    return _core.validate_pedigrees(csv_text, max_age)


def pedigree_logliks(csv_text, female, male, prev=0.0001, max_age=94):
    """female/male are (asymptote, threshold, median, first_quartile)."""
    return _core.pedigree_logliks(csv_text, list(female), list(male), prev, max_age)


def simulate_study(n_probands=130, seed=1, mask_rate=0.0):
    csv_text, truth = _core.simulate_study(n_probands, seed, mask_rate)
    return csv_text, json.loads(truth)


def estimate(csv_text, config=None, priors=None):
    out = _core.estimate(
        csv_text,
        json.dumps(config) if config else "",
        json.dumps(priors) if priors else "",
    )
    out["diagnostics"] = json.loads(out["diagnostics"])
    return out
