"""Bayesian predictive synthesis with a dynamic linear synthesis function."""

from bpps.bps.dlm import (
    DlmConfig,
    DlmPosteriorDraw,
    PosteriorPredictive,
    StateFilter,
    VolatilityFilter,
    agent_state_conditional,
    backward_sample,
    build_F,
    forward_filter,
    sample_agent_states,
    volatility_filter,
)
from bpps.bps.gibbs import GibbsChain, GibbsState, predictive_samples, run_gibbs

__all__ = [
    "DlmConfig",
    "DlmPosteriorDraw",
    "GibbsChain",
    "GibbsState",
    "PosteriorPredictive",
    "StateFilter",
    "VolatilityFilter",
    "agent_state_conditional",
    "backward_sample",
    "build_F",
    "forward_filter",
    "predictive_samples",
    "run_gibbs",
    "sample_agent_states",
    "volatility_filter",
]
