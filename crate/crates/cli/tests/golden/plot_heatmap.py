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


LO, HI = 1.0, 2.2
METHODS = ["ode", "quantile"]
STYLES = {"ode": "-", "quantile": "--"}

rows = read("density.csv")
ts = sorted({float(r["t"]) for r in rows})
xs = sorted({float(r["x"]) for r in rows})
rho = np.zeros((len(ts), len(xs)))
ti = {t: i for i, t in enumerate(ts)}
xi = {x: i for i, x in enumerate(xs)}
for r in rows:
    rho[ti[float(r["t"])], xi[float(r["x"])]] = float(r["rho"])

fig, ax = plt.subplots(figsize=(8, 5))
ax.pcolormesh(xs, ts, rho, shading="auto", cmap="magma")
ax.axvspan(LO, HI, color="cyan", alpha=0.15, label="bump interval")
paths = {}
for r in read("trajectories.csv"):
    paths.setdefault((r["method"], r["run_id"]), ([], []))
    paths[(r["method"], r["run_id"])][0].append(float(r["x"]))
    paths[(r["method"], r["run_id"])][1].append(float(r["t"]))
for (method, _), (x, t) in sorted(paths.items()):
    if method in METHODS:
        ax.plot(x, t, STYLES.get(method, "-"), color="white", lw=0.6)
ax.set_xlabel("x")
ax.set_ylabel("t")
ax.legend(loc="upper left")
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "heatmap.png", dpi=150)
