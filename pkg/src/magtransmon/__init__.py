"""Transmon spectroscopy and coherence in in-plane magnetic fields.

Charge-basis transmon solver, junction and film field models, dressed
qubit-cavity spectra, coherence rate budgets, the fitting pipelines that
turn spectroscopy into junction parameters, and a synthetic-data generator
that serves as their oracle.
"""

from .cpb import CpbParams, TransmonSpectrum, charge_dispersion, solve_cpb, transmon_transitions
from .fields import JunctionFieldParams, SquidParams, ej_inplane, ej_squid, gl_gap
from .fits import DEFAULT_RELATION, EcEjRelation
from .lsq import FitError, FitResult, lsq_minimize
from .synth import ScenarioConfig, generate_dataset, three_junction_scenario

__version__ = "0.1.0"

__all__ = [
    "CpbParams", "DEFAULT_RELATION", "EcEjRelation", "FitError", "FitResult", "JunctionFieldParams",
    "ScenarioConfig", "SquidParams", "TransmonSpectrum", "charge_dispersion", "ej_inplane", "ej_squid",
    "generate_dataset", "gl_gap", "lsq_minimize", "solve_cpb", "three_junction_scenario", "transmon_transitions",
]
