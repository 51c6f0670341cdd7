#!/usr/bin/env python3
# Generated by bohmlab. Run from the directory holding the CSV files.
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read(name):
    with open(name, newline="") as f:
        return list(csv.DictReader(f))


rows = read("lemma.csv")
fig, ax = plt.subplots(figsize=(7, 4))
for level in sorted({r["resolution"] for r in rows}):
    sel = [r for r in rows if r["resolution"] == level]
    ax.semilogy([float(r["p0"]) for r in sel], [float(r["sup_diff"]) for r in sel], "o-", label=level)
ax.set_xlabel("p0")
ax.set_ylabel("sup_t |x_ode - x_quantile|")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "lemma.png", dpi=150)
