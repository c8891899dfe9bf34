"""Monte-Carlo roundtrip of the three-junction scenario through fit-spectrum, fit-arch and fit-field.

Prints the worst relative error per parameter over the requested seeds.
"""

import argparse
import time

import numpy as np

from magtransmon.pipeline import run_chain
from magtransmon.synth import NoiseConfig, generate_dataset, three_junction_scenario


def errors(seed, jitter):
    cfg = three_junction_scenario(include_coherence=False, noise=NoiseConfig(freq_jitter=jitter), seed=seed)
    data = generate_dataset(cfg)
    rel, rows, ff = run_chain(data.spectroscopy)
    tr = data.truth
    out = {"slope": rel.slope / tr["relation"]["slope"] - 1,
           "intercept": rel.intercept / tr["relation"]["intercept_ghz"] - 1,
           "b_crit": ff.b_crit_par / tr["junctions"]["single"]["b_crit_par_t"] - 1}
    for name, jj in ff.junctions.items():
        out[name + ".ej0"] = jj.ej0 / tr["junctions"][name]["ej0_ghz"] - 1
        out[name + ".b_phi0"] = jj.b_phi0 / tr["junctions"][name]["b_phi0_t"] - 1
    per = np.array([r["period_t"] for r in rows if r["junction"] == "squid_jj1"])
    out["period"] = np.max(np.abs(per / tr["squid_period_t"] - 1))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--jitter", type=float, default=1e-3, help="GHz")
    args = ap.parse_args()
    t0 = time.perf_counter()
    table = [errors(s, args.jitter) for s in range(args.seeds)]
    print(f"{args.seeds} seeds, jitter {args.jitter * 1e3:g} MHz, {time.perf_counter() - t0:.1f} s")
    for key in table[0]:
        v = np.array([abs(t[key]) for t in table])
        print(f"  {key:18s} worst {v.max():.3e}  median {np.median(v):.3e}")


if __name__ == "__main__":
    main()
