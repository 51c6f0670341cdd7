//! Plot-script emission. The scripts read the CSV files written next to them
//! and need only Python with matplotlib and numpy.

use bohmlab::bohm::Method;
use bohmlab::field::Interval;

use crate::output::num;

pub const HEATMAP: &str = "plot_heatmap.py";
pub const AVERAGES: &str = "plot_averages.py";
pub const LEMMA: &str = "plot_lemma.py";

const PRELUDE: &str = r#"#!/usr/bin/env python3
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

"#;

/// Trajectories drawn over the `ρ(x, t)` heatmap with the bump interval marked.
pub fn heatmap(interval: &Interval, methods: &[Method]) -> String {
    let names: Vec<String> = methods.iter().map(|m| format!("\"{}\"", m.name())).collect();
    format!(
        r#"{PRELUDE}
LO, HI = {lo}, {hi}
METHODS = [{methods}]
STYLES = {{"ode": "-", "quantile": "--"}}

rows = read("density.csv")
ts = sorted({{float(r["t"]) for r in rows}})
xs = sorted({{float(r["x"]) for r in rows}})
rho = np.zeros((len(ts), len(xs)))
ti = {{t: i for i, t in enumerate(ts)}}
xi = {{x: i for i, x in enumerate(xs)}}
for r in rows:
    rho[ti[float(r["t"])], xi[float(r["x"])]] = float(r["rho"])

fig, ax = plt.subplots(figsize=(8, 5))
ax.pcolormesh(xs, ts, rho, shading="auto", cmap="magma")
ax.axvspan(LO, HI, color="cyan", alpha=0.15, label="bump interval")
paths = {{}}
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
"#,
        lo = num(interval.lo),
        hi = num(interval.hi),
        methods = names.join(", "),
    )
}

/// Time-averaged occupancy of each trajectory against the ensemble probability.
pub fn averages(interval: &Interval, reference: Method) -> String {
    format!(
        r#"{PRELUDE}
LO, HI = {lo}, {hi}
REFERENCE = "{reference}"

frames = read("frames.csv")
t = np.array([float(r["t"]) for r in frames])
prob = np.array([float(r["interval_prob"]) for r in frames])
ensemble = np.sum(0.5 * (prob[1:] + prob[:-1]) * np.diff(t)) / (t[-1] - t[0])

per = [r for r in read("per_trajectory.csv") if r["occupancy_fraction"]]
p0 = np.array([float(r["p0"]) for r in per])
occupancy = np.array([float(r["occupancy_fraction"]) for r in per])

fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6))
top.plot(t, prob, color="black")
top.axhline(ensemble, color="gray", ls=":", label="time average")
top.set_xlabel("t")
top.set_ylabel(f"P[{{LO:.3g}} <= x <= {{HI:.3g}}]")
top.legend()
bottom.bar(p0, occupancy, width=0.6 / max(len(p0), 1), label=f"single trajectory ({{REFERENCE}})")
bottom.axhline(ensemble, color="red", label="ensemble")
bottom.set_xlabel("initial quantile p0")
bottom.set_ylabel("time fraction in interval")
bottom.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "averages.png", dpi=150)
"#,
        lo = num(interval.lo),
        hi = num(interval.hi),
        reference = reference.name(),
    )
}

/// Dual-method sup differences per quantile, one series per resolution.
pub fn lemma() -> String {
    format!(
        r#"{PRELUDE}
rows = read("lemma.csv")
fig, ax = plt.subplots(figsize=(7, 4))
for level in sorted({{r["resolution"] for r in rows}}):
    sel = [r for r in rows if r["resolution"] == level]
    ax.semilogy([float(r["p0"]) for r in sel], [float(r["sup_diff"]) for r in sel], "o-", label=level)
ax.set_xlabel("p0")
ax.set_ylabel("sup_t |x_ode - x_quantile|")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "lemma.png", dpi=150)
"#
    )
}
