"""YAML run configuration with the unit spelled out in every key.

Unknown keys are errors: a misspelt ``ej0_mhz`` must not silently fall back
to a default.  Every section is optional; omitted keys keep the defaults of
the three-junction scenario.

Example::

    scenario:
      seed: 3
      junctions:
        single: {ej0_ghz: 24.7, b_crit_par_t: 1.03, b_phi0_t: 0.83}
      noise: {freq_jitter_ghz: 0.001}
    fit:
      b_crit_shared_t: null      # null: fit one shared critical field
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .coherence import CoherenceEnvironment
from .dressed import CavityParams
from .fields import JunctionFieldParams
from .fits import EcEjRelation
from .pipeline import TOLERANCE_PROFILES, Tolerances
from .synth import ScenarioConfig
from .units import bcs_gap_ghz


class ConfigError(ValueError):
    """Invalid or unknown configuration entry; the message carries the key path."""


@dataclass
class FitSettings:
    b_crit_shared: Optional[float] = None  # T; None fits it
    b_crit_guess: float = 1.0  # T
    b_perp_crit: float = 0.033  # T, fixed in single-junction sweeps
    b_crit_prior: float = 1.03  # T, enters the effective perpendicular critical field
    period_hint: Optional[float] = None  # T


@dataclass
class BudgetSettings:
    b_par: tuple = (0.0, 0.17, 0.34, 0.58)  # T
    # 'top'/'bottom' sweet spots for the SQUID plus the single junction at zero B_perp
    with_charge_dispersion: bool = True


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    fit: FitSettings = field(default_factory=FitSettings)
    budget: BudgetSettings = field(default_factory=BudgetSettings)
    tolerance_profile: str = "default"

    @property
    def tolerances(self) -> Tolerances:
        return TOLERANCE_PROFILES[self.tolerance_profile]


def _take(d: dict, keys: dict, path: str) -> dict:
    """Map unit-suffixed keys to field names, rejecting anything unknown."""
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(keys))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(map(str, unknown))}; "
                          f"allowed: {', '.join(sorted(keys))}")
    out = {}
    for k, v in d.items():
        name, conv = keys[k]
        try:
            out[name] = conv(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.{k}: {exc}") from None
    return out


def _num(v):
    if isinstance(v, bool):
        raise ValueError("expected a number")
    return float(v)


def _opt(conv):
    return lambda v: None if v is None else conv(v)


def _deg(v):
    return math.radians(_num(v))


def _grid(v):
    """A list of values or a {start, stop, num} linspace."""
    if isinstance(v, dict):
        g = _take(v, {"start_t": ("start", _num), "stop_t": ("stop", _num), "num": ("num", int)}, "grid")
        return tuple(np.linspace(g["start"], g["stop"], g["num"]).tolist())
    return tuple(_num(x) for x in v)


def _junction(d, base: JunctionFieldParams, path):
    kw = _take(d, {"ej0_ghz": ("ej0", _num), "b_crit_par_t": ("b_crit_par", _num),
                   "b_phi0_t": ("b_phi0", _num), "finger_width_l2_m": ("finger_width_l2", _opt(_num))}, path)
    return replace(base, **kw)


_NOISE_KEYS = {
    "freq_jitter_ghz": ("freq_jitter", _num), "t1_lognormal_sigma": ("t1_lognormal_sigma", _num),
    "t2_lognormal_sigma": ("t2_lognormal_sigma", _num), "outlier_fraction": ("outlier_fraction", _num),
    "outlier_span_ghz": ("outlier_span", _num), "flux_jump_probability": ("flux_jump_probability", _num),
    "alignment_jitter_t": ("alignment_jitter", _num), "alignment_jump_fraction": ("alignment_jump_fraction", _num),
}

_VORTEX_KEYS = {
    "p0_per_us_per_mt": ("p0", _num), "q_per_us": ("q", _num), "f_depin_ghz": ("f_depin", _num),
    "creep_epsilon": ("creep_epsilon", _num),
}

_COHERENCE_KEYS = {
    "f_cavity_ghz": ("f_cavity", _num), "q_total": ("q_total", _num),
    "coupling_intercept_ghz": ("coupling_intercept", _num), "coupling_slope": ("coupling_slope", _num),
    "q_background": ("q_background", _num), "t_cavity_k": ("t_cavity", _num),
    "t_quasiparticle_k": ("t_quasiparticle", _num), "t_crit_k": ("delta0", lambda v: float(bcs_gap_ghz(_num(v)))),
    "delta0_ghz": ("delta0", _num),
    "b_crit_par_t": ("b_crit_par", _num), "vortex": ("vortex", lambda v: v),
    "slow_noise_a0_per_us_per_ghz_per_mt": ("slow_noise_a0", _num),
    "slow_noise_a1_per_us_per_ghz_per_mt_per_t": ("slow_noise_a1", _num),
    "ramsey_floor_per_us": ("ramsey_floor", _num), "echo_floor_per_us": ("echo_floor", _num),
}


def coherence_from_dict(d, base: CoherenceEnvironment, path="coherence") -> CoherenceEnvironment:
    kw = _take(d, _COHERENCE_KEYS, path)
    if "vortex" in kw:
        kw["vortex"] = replace(base.vortex, **_take(kw["vortex"], _VORTEX_KEYS, f"{path}.vortex"))
    return replace(base, **kw)


def scenario_from_dict(d: Optional[dict], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    raw = lambda v: v  # noqa: E731
    kw = _take(d, {
        "seed": ("seed", int), "k": ("k", int), "junctions": ("junctions", raw), "squid": ("squid", raw),
        "relation": ("relation", raw), "b_perp_crit_t": ("b_perp_crit", _num), "perp_law": ("perp_law", str),
        "b_par_grid_t": ("b_par_grid", _grid), "single_b_perp_grid_t": ("single_b_perp_grid", _grid),
        "squid_b_perp_grid_t": ("squid_b_perp_grid", _grid),
        "unstable_band_t": ("unstable_band", _opt(lambda v: tuple(_num(x) for x in v))),
        "cavity": ("cavity", raw), "coupling": ("coupling", raw), "coherence": ("coherence", raw),
        "b0_angle_deg": ("b0_angle", _deg), "b0_angle_rad": ("b0_angle", _num),
        "include_coherence": ("include_coherence", bool),
        "parity_visibility_ghz": ("parity_visibility", _num), "misalignment_deg": ("misalignment", _deg),
        "misalignment_rad": ("misalignment", _num),
        "alignment_b_y_grid_t": ("alignment_b_y_grid", _grid), "noise": ("noise", raw),
    }, "scenario")
    if "junctions" in kw:
        j = kw.pop("junctions")
        if not isinstance(j, dict):
            raise ConfigError("scenario.junctions: expected a mapping")
        unknown = sorted(set(j) - {"single", "squid_jj1", "squid_jj2"})
        if unknown:
            raise ConfigError(f"scenario.junctions: unknown junction(s) {', '.join(unknown)}")
        for name, v in j.items():
            kw[name] = _junction(v, getattr(base, name), f"scenario.junctions.{name}")
    if "squid" in kw:
        kw.update(_take(kw.pop("squid"), {"period_t": ("squid_period", _num), "offset_t": ("squid_offset", _num)},
                        "scenario.squid"))
    if "relation" in kw:
        r = _take(kw.pop("relation"), {"slope": ("slope", _num), "intercept_ghz": ("intercept", _num)},
                  "scenario.relation")
        kw["relation"] = EcEjRelation(r.get("slope", base.relation.slope), r.get("intercept", base.relation.intercept))
    if "cavity" in kw:
        c = kw.pop("cavity")
        if c is None:
            kw["cavity"] = None
        else:
            c = _take(c, {"f_cavity_ghz": ("f", _num), "q_total": ("q", _num),
                          "photon_truncation": ("n", int)}, "scenario.cavity")
            kw["cavity"] = CavityParams(c.get("f", 8.107), c.get("q", 5800.0), 0.0, 0.0, c.get("n", 5))
    if "coupling" in kw:
        kw.update(_take(kw.pop("coupling"), {"intercept_ghz": ("coupling_intercept", _num),
                                             "slope": ("coupling_slope", _num)}, "scenario.coupling"))
    if "coherence" in kw:
        kw["coherence"] = coherence_from_dict(kw.pop("coherence"), base.coherence, "scenario.coherence")
    if "noise" in kw:
        kw["noise"] = replace(base.noise, **_take(kw.pop("noise"), _NOISE_KEYS, "scenario.noise"))
    try:
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenario: {exc}") from None


def config_from_dict(d: Optional[dict]) -> RunConfig:
    raw = lambda v: v  # noqa: E731
    top = _take(d or {}, {"scenario": ("scenario", raw), "fit": ("fit", raw), "budget": ("budget", raw),
                          "tolerance_profile": ("tolerance_profile", str)}, "config")
    cfg = RunConfig()
    if "scenario" in top:
        cfg.scenario = scenario_from_dict(top["scenario"])
    if "fit" in top:
        cfg.fit = replace(cfg.fit, **_take(top["fit"], {
            "b_crit_shared_t": ("b_crit_shared", _opt(_num)), "b_crit_guess_t": ("b_crit_guess", _num),
            "b_perp_crit_t": ("b_perp_crit", _num), "b_crit_prior_t": ("b_crit_prior", _num),
            "period_hint_t": ("period_hint", _opt(_num)),
        }, "fit"))
    if "budget" in top:
        cfg.budget = replace(cfg.budget, **_take(top["budget"], {
            "b_par_t": ("b_par", lambda v: tuple(_num(x) for x in v)),
            "with_charge_dispersion": ("with_charge_dispersion", bool),
        }, "budget"))
    if "tolerance_profile" in top:
        cfg.tolerance_profile = top["tolerance_profile"]
    if cfg.tolerance_profile not in TOLERANCE_PROFILES:
        raise ConfigError(f"config.tolerance_profile: unknown profile {cfg.tolerance_profile!r}; "
                          f"choose from {', '.join(TOLERANCE_PROFILES)}")
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data: Any = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def _floats(v):
    return [float(x) for x in v]


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`scenario_from_dict` for the manifest; floats kept at full precision."""
    jj = lambda p: {"ej0_ghz": p.ej0, "b_crit_par_t": p.b_crit_par, "b_phi0_t": p.b_phi0,  # noqa: E731
                    "finger_width_l2_m": p.finger_width_l2}
    env = cfg.coherence
    return {
        "seed": cfg.seed, "k": cfg.k,
        "junctions": {"single": jj(cfg.single), "squid_jj1": jj(cfg.squid_jj1), "squid_jj2": jj(cfg.squid_jj2)},
        "squid": {"period_t": cfg.squid_period, "offset_t": cfg.squid_offset},
        "relation": {"slope": cfg.relation.slope, "intercept_ghz": cfg.relation.intercept},
        "b_perp_crit_t": cfg.b_perp_crit, "perp_law": cfg.perp_law,
        "b_par_grid_t": _floats(cfg.b_par_grid), "single_b_perp_grid_t": _floats(cfg.single_b_perp_grid),
        "squid_b_perp_grid_t": _floats(cfg.squid_b_perp_grid),
        "unstable_band_t": None if cfg.unstable_band is None else _floats(cfg.unstable_band),
        "cavity": None if cfg.cavity is None else {"f_cavity_ghz": cfg.cavity.f_cavity_bare,
                                                    "q_total": cfg.cavity.q_total,
                                                    "photon_truncation": cfg.cavity.photon_truncation},
        "coupling": {"intercept_ghz": cfg.coupling_intercept, "slope": cfg.coupling_slope},
        "coherence": {
            "f_cavity_ghz": env.f_cavity, "q_total": env.q_total,
            "coupling_intercept_ghz": env.coupling_intercept, "coupling_slope": env.coupling_slope,
            "q_background": env.q_background, "t_cavity_k": env.t_cavity, "t_quasiparticle_k": env.t_quasiparticle,
            "delta0_ghz": env.delta0, "b_crit_par_t": env.b_crit_par,
            "vortex": {"p0_per_us_per_mt": env.vortex.p0, "q_per_us": env.vortex.q,
                       "f_depin_ghz": env.vortex.f_depin, "creep_epsilon": env.vortex.creep_epsilon},
            "slow_noise_a0_per_us_per_ghz_per_mt": env.slow_noise_a0,
            "slow_noise_a1_per_us_per_ghz_per_mt_per_t": env.slow_noise_a1,
            "ramsey_floor_per_us": env.ramsey_floor, "echo_floor_per_us": env.echo_floor,
        },
        "b0_angle_rad": cfg.b0_angle, "include_coherence": cfg.include_coherence,
        "parity_visibility_ghz": cfg.parity_visibility, "misalignment_rad": cfg.misalignment,
        "alignment_b_y_grid_t": _floats(cfg.alignment_b_y_grid),
        "noise": {
            "freq_jitter_ghz": cfg.noise.freq_jitter, "t1_lognormal_sigma": cfg.noise.t1_lognormal_sigma,
            "t2_lognormal_sigma": cfg.noise.t2_lognormal_sigma, "outlier_fraction": cfg.noise.outlier_fraction,
            "outlier_span_ghz": cfg.noise.outlier_span, "flux_jump_probability": cfg.noise.flux_jump_probability,
            "alignment_jitter_t": cfg.noise.alignment_jitter,
            "alignment_jump_fraction": cfg.noise.alignment_jump_fraction,
        },
    }


__all__ = ["BudgetSettings", "ConfigError", "FitSettings", "RunConfig", "coherence_from_dict",
           "config_from_dict", "load_config", "scenario_from_dict", "scenario_to_dict"]
