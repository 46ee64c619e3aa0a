"""Forecast evaluation harness over ensemble forecast cases."""

from .data import ForecastCase, load_cases, write_cases
from .evaluate import EvalConfig, ScoreReport, rolling_evaluate
from .postprocess import BmaParams, EmosParams, fit_bma, fit_emos, params_from_dict, smoothed_ensemble
from .synth import SynthConfig, default_bma_truth, default_emos_truth, synth_generate

__all__ = [
    "BmaParams",
    "EmosParams",
    "EvalConfig",
    "ForecastCase",
    "ScoreReport",
    "SynthConfig",
    "default_bma_truth",
    "default_emos_truth",
    "fit_bma",
    "fit_emos",
    "load_cases",
    "params_from_dict",
    "rolling_evaluate",
    "smoothed_ensemble",
    "synth_generate",
    "write_cases",
]
