"""Command-line entry point: ``magtransmon <subcommand> [flags]``.

Exit status 0 on success, 2 for unusable input (config, dataset, paths) and
3 when a fit does not converge.  Artifacts written before a failure are
kept, and every run leaves ``run_manifest.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from filelock import FileLock

from . import dataset as ds
from .config import ConfigError, RunConfig, load_config, scenario_to_dict
from .fits import ConvergenceError, EcEjRelation, FitError
from .fields import ej_inplane
from .pipeline import (align, budget_rows, dephasing_regression, fit_arches, fit_field, fit_spectrum,
                       operating_points, sweetspots, vortex_free_field)
from .synth import SINGLE, SQUID, generate_dataset

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3
MANIFEST_VERSION = "v1"
FILES = {"spectroscopy": "spectroscopy.tsv", "coherence": "coherence.tsv", "alignment": "alignment.tsv"}


class InputError(Exception):
    pass


class _Run:
    """Collects inputs and outputs of one invocation for the manifest."""

    def __init__(self, args, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}
        self.status = "ok"
        self.messages: List[str] = []
        if args.config:
            self.inputs[str(args.config)] = _sha256(Path(args.config))

    def read(self, kind, required=True) -> Optional[ds.Table]:
        path = _dataset_path(self.args.dataset, kind)
        if path is None:
            if required:
                raise InputError(f"no {kind} dataset found at {self.args.dataset}")
            return None
        table = ds.read(path)
        if table.kind != kind:
            raise InputError(f"{path}: expected a {kind} dataset, found {table.kind}")
        self.inputs[str(path)] = _sha256(path)
        return table

    def write_table(self, table: ds.Table, name):
        self._record(ds.write(table, self.out / name))

    def write_columns(self, name, columns: dict, comment=""):
        self._record(write_columns(self.out / name, columns, comment))

    def write_json(self, name, obj):
        path = self.out / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self._record(path)

    def _record(self, path: Path):
        self.outputs[path.name] = _sha256(path)

    def manifest(self):
        tol = self.cfg.tolerances
        return {
            "manifest_version": MANIFEST_VERSION,
            "dataset_format": ds.MAGIC.split()[-1],
            "command": self.args.command,
            "argv": sys.argv[1:],
            "seed": self.cfg.scenario.seed,
            "jobs": self.args.jobs,
            "tolerance_profile": self.cfg.tolerance_profile,
            "tolerances": asdict(tol),
            "config": {"scenario": scenario_to_dict(self.cfg.scenario), "fit": asdict(self.cfg.fit),
                       "budget": asdict(self.cfg.budget)},
            "inputs": self.inputs,
            "outputs": self.outputs,
            "status": self.status,
            "messages": self.messages,
            "versions": _versions(),
        }

    def finish(self):
        path = self.out / "run_manifest.json"
        with FileLock(str(self.out / ".run_manifest.lock")):
            path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set, frozenset)):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "PyYAML", "filelock"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _dataset_path(spec, kind) -> Optional[Path]:
    if spec is None:
        raise InputError("--dataset is required for this subcommand")
    p = Path(spec)
    if p.is_dir():
        q = p / FILES[kind]
        return q if q.exists() else None
    if not p.exists():
        raise InputError(f"dataset {p} does not exist")
    return p


def write_columns(path, columns: dict, comment="") -> Path:
    """Tab-separated columns with a one-line comment header; NaN written as NA."""
    path = Path(path)
    names = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[n], dtype=object)) for n in names]
    n = max((c.size for c in cols), default=0)
    lines = [f"# {comment}"] if comment else []
    lines.append("\t".join(names))
    for i in range(n):
        cells = []
        for c in cols:
            v = c[i] if i < c.size else math.nan
            if isinstance(v, (float, np.floating)):
                cells.append("NA" if math.isnan(v) else repr(float(v)))
            else:
                cells.append(str(v))
        lines.append("\t".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def _rows_to_columns(rows: List[dict]) -> dict:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys and not isinstance(r[k], np.ndarray)]
    return {k: [r.get(k, math.nan) for r in rows] for k in keys}


# --- subcommands -------------------------------------------------------------

def cmd_simulate(run: _Run):
    data = generate_dataset(run.cfg.scenario)
    run.write_table(data.spectroscopy, FILES["spectroscopy"])
    if data.coherence is not None:
        run.write_table(data.coherence, FILES["coherence"])
    run.write_table(data.alignment, FILES["alignment"])
    run.write_json("truth.json", data.truth)
    return EXIT_OK


def _relation(run: _Run, spec):
    pairs, rel = fit_spectrum(spec, run.cfg.scenario.k, run.cfg.tolerances)
    run.write_columns("ej_ec_pairs.tsv", pairs, "E_J and E_C in GHz from each (f01, f02/2) pair")
    run.write_json("relation.json", rel.to_dict())
    if not rel.reliable:
        run.messages.append(f"relation unreliable: inlier fraction {rel.inlier_fraction:.3f}")
    return rel


def cmd_fit_spectrum(run: _Run):
    rel = _relation(run, _nonempty(run.read("spectroscopy")))
    return EXIT_OK if rel.reliable else EXIT_CONVERGENCE


def _arches(run: _Run, spec, rel: EcEjRelation):
    f = run.cfg.fit
    rows = fit_arches(spec, rel, b_perp_crit=f.b_perp_crit, b_crit_prior=f.b_crit_prior,
                      period_hint=f.period_hint, k=run.cfg.scenario.k, tol=run.cfg.tolerances,
                      jobs=run.args.jobs, perp_law=run.cfg.scenario.perp_law)
    run.write_columns("arch_fits.tsv", _rows_to_columns(rows), "per-sweep E_J (GHz), period and offset (T)")
    bad = [r for r in rows if not r["converged"]]
    for r in bad:
        run.messages.append(f"sweep {r['sweep_id']} ({r['junction']}): not converged {r.get('error', '')}".strip())
    return rows, bad


def cmd_fit_arch(run: _Run):
    spec = _nonempty(run.read("spectroscopy"))
    rel = _relation(run, spec)
    _, bad = _arches(run, spec, rel)
    return EXIT_CONVERGENCE if bad else EXIT_OK


def _field(run: _Run, rows):
    ff = fit_field(rows, b_crit_shared=run.cfg.fit.b_crit_shared, b_crit_guess=run.cfg.fit.b_crit_guess)
    out = {"b_crit_par_t": ff.b_crit_par, "b_crit_shared_fixed": run.cfg.fit.b_crit_shared is not None,
           "rms_ghz": ff.fit.rms, "converged": ff.fit.converged, "junctions": {},
           "stderr": dict(zip(ff.fit.names, ff.fit.stderr.tolist()))}
    for name, jj in ff.junctions.items():
        out["junctions"][name] = {"ej0_ghz": jj.ej0, "b_phi0_t": jj.b_phi0, "b_crit_par_t": jj.b_crit_par}
    run.write_json("field_fit.json", out)
    return ff


def cmd_fit_field(run: _Run):
    spec = _nonempty(run.read("spectroscopy"))
    rel = _relation(run, spec)
    rows, bad = _arches(run, spec, rel)
    ff = _field(run, rows)
    return EXIT_CONVERGENCE if (bad or not ff.fit.converged) else EXIT_OK


def cmd_align(run: _Run):
    table = _nonempty(run.read("alignment"))
    res = align(table)
    run.write_json("alignment_fit.json", {
        "angle_rad": res.angle, "angle_deg": math.degrees(res.angle), "slope": res.slope,
        "intercept_t": res.intercept, "correction_slope": res.correction_slope,
        "excluded_rows": [int(i) for i in res.excluded], "jumps_detected": int(res.jumps_detected),
    })
    return EXIT_OK


def _budget_points(cfg: RunConfig):
    return operating_points(cfg.scenario, cfg.budget.b_par)


def cmd_budget(run: _Run):
    rows = budget_rows(run.cfg.scenario, _budget_points(run.cfg),
                       with_charge_dispersion=run.cfg.budget.with_charge_dispersion)
    for r in rows:
        if r["device"] == SQUID:
            b0 = vortex_free_field(run.cfg.scenario, r["b_par_t"])
            top, _ = sweetspots(run.cfg.scenario, r["b_par_t"], near=b0)
            r["sweetspot"] = "top" if r["b_perp_t"] == top else "bottom"
        else:
            r["sweetspot"] = "none"
    run.write_columns("budget.tsv", _rows_to_columns(rows), "rates in 1/us, times in us, frequencies in GHz")
    return EXIT_OK


PLOT_FILES = ("perp_sweep_spectroscopy.tsv", "perp_sweep_coherence.tsv", "sweetspot_frequencies.tsv",
              "ej_vs_in_plane_field.tsv", "best_coherence.tsv", "echo_dephasing.tsv", "sensitivity_fit.tsv",
              "dephasing_vs_sensitivity.tsv")


def cmd_report(run: _Run):
    spec = _nonempty(run.read("spectroscopy"))
    coh = run.read("coherence", required=False)
    alignment = run.read("alignment", required=False)
    status = EXIT_OK
    # spectroscopy and coherence along B_perp at one in-plane field
    b_show = _closest(spec["b_par_t"], 0.17)
    sel = spec.select(spec["b_par_t"] == b_show)
    run.write_columns("perp_sweep_spectroscopy.tsv", {n: sel[n] for n in ("device", "b_perp_t", "label", "frequency_ghz")},
                      f"two-tone peaks at B_par = {b_show!r} T")
    if coh is not None and len(coh):
        c = coh.select(coh["b_par_t"] == _closest(coh["b_par_t"], 0.17))
        run.write_columns("perp_sweep_coherence.tsv", {n: c[n] for n in ("device", "b_perp_t", "f01_ghz", "t1_us",
                                                                  "t2_star_us", "t2_echo_us")},
                          "coherence times in us along B_perp")
    # sweet-spot frequencies and E_J(B_par) with the fitted model
    run.write_columns("sweetspot_frequencies.tsv", _sweetspot_frequencies(spec), "extremal f01 per sweep in GHz")
    rel = _relation(run, spec)
    rows, bad = _arches(run, spec, rel)
    if bad:
        status = EXIT_CONVERGENCE
    try:
        ff = _field(run, rows)
    except (FitError, ConvergenceError) as exc:
        run.messages.append(f"field fit failed: {exc}")
        return EXIT_CONVERGENCE
    model = [ej_inplane(ff.junctions[r["junction"]], r["b_par_t"]) if r["junction"] in ff.junctions else math.nan
             for r in rows]
    run.write_columns("ej_vs_in_plane_field.tsv", {"junction": [r["junction"] for r in rows],
                                      "b_par_t": [r["b_par_t"] for r in rows],
                                      "ej_fit_ghz": [r["ej_ghz"] for r in rows], "ej_model_ghz": model},
                      "E_J from each sweep and the in-plane model")
    # best coherence per field, echo dephasing and the Ramsey sensitivity regression
    if coh is not None and len(coh):
        run.write_columns("best_coherence.tsv", _top_coherence(coh), "mean of the best 5% per in-plane field")
        gphi = _echo_dephasing(coh)
        run.write_columns("echo_dephasing.tsv", gphi, "pure echo dephasing in 1/us")
        reg = dephasing_regression(coh, run.cfg.scenario)
        run.write_columns("sensitivity_fit.tsv", _rows_to_columns(reg),
                          "Gamma_phi* = a |df01/dB_perp| + b per in-plane field; a in (1/us)/(GHz/mT)")
        pts = {"b_par_t": [], "sensitivity_ghz_per_mt": [], "gamma_phi_star_per_us": []}
        for r in reg:
            pts["b_par_t"] += [r["b_par_t"]] * r["sensitivity"].size
            pts["sensitivity_ghz_per_mt"] += r["sensitivity"].tolist()
            pts["gamma_phi_star_per_us"] += r["gamma_phi"].tolist()
        run.write_columns("dephasing_vs_sensitivity.tsv", pts, "SQUID Ramsey dephasing versus flux sensitivity")
    if alignment is not None and len(alignment):
        cmd_align(run)
    run.write_json("report.json", {"plot_data": sorted(n for n in run.outputs if n in PLOT_FILES),
                                   "relation": rel.to_dict(), "b_crit_par_t": ff.b_crit_par})
    return status


def _closest(values, target):
    v = np.unique(np.asarray(values, dtype=float))
    return float(v[np.argmin(np.abs(v - target))])


def _sweetspot_frequencies(spec):
    out = {"device": [], "sweep_id": [], "b_par_t": [], "f01_max_ghz": [], "f01_min_ghz": []}
    f = spec.select(spec["label"] == "f01")
    for sid in np.unique(f["sweep_id"]):
        s = f.select(f["sweep_id"] == sid)
        out["device"].append(s["device"][0])
        out["sweep_id"].append(int(sid))
        out["b_par_t"].append(float(s["b_par_t"][0]))
        out["f01_max_ghz"].append(float(s["frequency_ghz"].max()))
        out["f01_min_ghz"].append(float(s["frequency_ghz"].min()))
    return out


def _top_coherence(coh, fraction=0.05):
    out = {"device": [], "b_par_t": [], "t1_us": [], "t2_star_us": [], "t2_echo_us": []}
    for dev in (SINGLE, SQUID):
        d = coh.select(coh["device"] == dev)
        for b in np.unique(d["b_par_t"]):
            s = d.select(d["b_par_t"] == b)
            out["device"].append(dev)
            out["b_par_t"].append(float(b))
            for name in ("t1_us", "t2_star_us", "t2_echo_us"):
                v = np.sort(s[name][np.isfinite(s[name])])[::-1]
                n = max(1, int(math.ceil(fraction * v.size)))
                out[name].append(float(v[:n].mean()) if v.size else math.nan)
    return out


def _echo_dephasing(coh):
    ok = np.isfinite(coh["t1_us"]) & np.isfinite(coh["t2_echo_us"])
    t1, t2 = coh["t1_us"], coh["t2_echo_us"]
    g = np.where(ok, 1.0 / np.where(ok, t2, 1.0) - 0.5 / np.where(ok, t1, 1.0), math.nan)
    return {"device": coh["device"], "b_par_t": coh["b_par_t"], "b_perp_t": coh["b_perp_t"],
            "gamma_phi_echo_per_us": g}


def _nonempty(table):
    if table is None or len(table) == 0:
        raise InputError("dataset is empty")
    return table


COMMANDS = {
    "simulate": (cmd_simulate, "generate synthetic datasets from the configured scenario"),
    "fit-spectrum": (cmd_fit_spectrum, "invert (f01, f02/2) pairs and fit the E_C(E_J) relation"),
    "fit-arch": (cmd_fit_arch, "fit every perpendicular sweep (SQUID arches and single-junction domes)"),
    "fit-field": (cmd_fit_field, "fit the in-plane E_J model to the per-sweep E_J values"),
    "align": (cmd_align, "magnet misalignment from arch offsets"),
    "budget": (cmd_budget, "coherence rate budget per field point"),
    "report": (cmd_report, "fit everything and write columnar plot-data tables"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="magtransmon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="YAML configuration file")
        s.add_argument("--dataset", help="dataset file or directory holding spectroscopy/coherence/alignment.tsv")
        s.add_argument("--out-dir", default=".", help="output directory (created if missing)")
        s.add_argument("--seed", type=int, help="override the scenario seed")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for per-sweep fits")
        s.add_argument("--tolerance-profile", help="strict, default or robust")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.scenario = replace(cfg.scenario, seed=args.seed)
        if args.tolerance_profile is not None:
            from .pipeline import TOLERANCE_PROFILES
            if args.tolerance_profile not in TOLERANCE_PROFILES:
                raise ConfigError(f"unknown tolerance profile {args.tolerance_profile!r}")
            cfg.tolerance_profile = args.tolerance_profile
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        run = _Run(args, cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command][0](run)
    except (InputError, ds.DatasetError, ConfigError) as exc:
        run.messages.append(str(exc))
        code = EXIT_INPUT
    except (FitError, ConvergenceError) as exc:
        run.messages.append(str(exc))
        code = EXIT_CONVERGENCE
    run.status = {EXIT_OK: "ok", EXIT_INPUT: "input error", EXIT_CONVERGENCE: "not converged"}[code]
    run.messages.append(f"elapsed {time.perf_counter() - t0:.3f} s")
    run.finish()
    for m in run.messages[:-1]:
        print(m, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
