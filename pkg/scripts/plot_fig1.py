#!/usr/bin/env python3
"""Plot the witness determinant curves written by `semidavies fig1`.

Usage: python scripts/plot_fig1.py fig1.csv [out.png]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    csv_path = sys.argv[1]
    out_path = sys.argv[2] if len(sys.argv) > 2 else "fig1.png"
    data = np.genfromtxt(csv_path, delimiter=",", names=True)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data["t"], data["detC_gz0"], label=r"$\gamma_z = 0$")
    ax.plot(data["t"], data["detC_gz0p1"], label=r"$\gamma_z = 0.1$")
    ax.plot(data["t"], data["detC_gz1"], label=r"$\gamma_z = 1$")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$\det C(t)$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
