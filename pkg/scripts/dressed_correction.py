"""Relative E_J error from inverting dressed instead of bare transitions, versus qubit frequency."""

import numpy as np

from magtransmon.dressed import ej_dressing_correction
from magtransmon.fits import DEFAULT_RELATION, ej_from_f01


def main():
    print("f01_ghz\tej_ghz\tcorrection")
    for f in np.arange(4.0, 7.55, 0.25):
        ej = float(ej_from_f01([f], DEFAULT_RELATION)[0])
        c = ej_dressing_correction(ej, float(DEFAULT_RELATION(ej)))
        print(f"{f:.2f}\t{ej:.4f}\t{c:+.4%}")


if __name__ == "__main__":
    main()
