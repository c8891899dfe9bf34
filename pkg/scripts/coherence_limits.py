"""Relaxation and dephasing limits versus in-plane field, at B0 (single junction) and the SQUID sweetspots."""

from magtransmon.pipeline import budget_rows, operating_points
from magtransmon.synth import three_junction_scenario


def main():
    cfg = three_junction_scenario()
    rows = budget_rows(cfg, operating_points(cfg, (0.0, 0.17, 0.34, 0.58)))
    cols = ["device", "b_par_t", "b_perp_t", "f01_ghz", "t1_us", "t2_echo_us", "t2_star_us"]
    print("\t".join(cols))
    for r in rows:
        print("\t".join(f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c]) for c in cols))


if __name__ == "__main__":
    main()
