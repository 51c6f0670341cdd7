use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use bohmlab::bohm::{Method, Trajectory};
use bohmlab::evolve::{adiabatic_fidelity, continuity_residual_fields, Propagator};
use bohmlab::field::trapezoid;
use bohmlab::protect::{prepare, run_protective, ExperimentReport, MethodSummary, ProtectiveConfig, Setup};
use bohmlab::spectral::eigenstates;
use bohmlab::build_grid;

use crate::config::RunConfig;
use crate::output::{ensure_dir, num, opt, write_json, write_text, Csv};
use crate::plot;

pub struct Run<'a> {
    pub config: &'a RunConfig,
    pub out: &'a Path,
    pub plot: bool,
}

pub fn eigen(ctx: &Run) -> Result<()> {
    let cfg = ctx.config;
    let grid = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)?;
    let consts = cfg.consts()?;
    let v = cfg.potential.sample(grid, &consts)?;
    let spectrum = eigenstates(&v, cfg.eigen.count, &consts).context("eigen")?;
    ensure_dir(ctx.out)?;
    let text: String = spectrum.energies.iter().map(|e| num(*e) + "\n").collect();
    write_text(ctx.out, "eigenvalues.txt", &text)?;

    let mut header = vec!["x".to_string()];
    header.extend((0..spectrum.states.len()).map(|k| format!("psi_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::create(ctx.out, "eigenstates.csv", &header)?;
    for (i, x) in grid.points().enumerate() {
        csv.row(std::iter::once(num(x)).chain(spectrum.states.iter().map(|s| num(s.amp()[i].re))))?;
    }
    csv.finish()
}

#[derive(Serialize)]
struct EvolveSummary {
    ground_energy: f64,
    gap: f64,
    weakness_ratio: f64,
    dt: f64,
    steps: usize,
    initial_interval_mass: f64,
    final_interval_mass: f64,
    min_fidelity: f64,
    final_fidelity: f64,
    max_norm_deviation: f64,
    max_continuity_residual: f64,
}

pub fn evolve(ctx: &Run) -> Result<()> {
    let cfg = ctx.config.protective()?;
    let Setup { schedule, psi0, ground_energy, gap, weakness_ratio } = prepare(&cfg)?;
    let interval = schedule.bump().expect("bump present").interval();
    let consts = cfg.consts;
    let grid = cfg.grid;
    let mut prop = Propagator::new(psi0, &schedule, cfg.dt, consts).context("propagate")?;
    ensure_dir(ctx.out)?;
    let mut frames = Csv::create(ctx.out, "frames.csv", &["t", "norm", "fidelity", "interval_prob"])?;
    let mut density = DensityCsv::create(ctx.out, cfg.density_stride)?;

    let mut prev = prop.fields();
    let initial_interval_mass = prev.interval_probability(&interval);
    let mut min_fidelity = f64::INFINITY;
    let mut final_fidelity = f64::NAN;
    let mut max_norm_deviation = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut step = 0;
    loop {
        let norm = trapezoid(prev.rho(), grid.dx());
        max_norm_deviation = max_norm_deviation.max((norm - 1.0).abs());
        if step % cfg.output_stride == 0 || prop.is_done() {
            let f = adiabatic_fidelity(prop.state(), &schedule, &consts).context("fidelity")?;
            min_fidelity = min_fidelity.min(f);
            final_fidelity = f;
            frames.row([num(prev.t()), num(norm), num(f), num(prev.interval_probability(&interval))])?;
        }
        density.maybe(step, prop.is_done(), prev.t(), grid.points(), prev.rho())?;
        if !prop.advance().context("propagate")? {
            break;
        }
        step += 1;
        let next = prop.fields();
        max_residual = max_residual.max(continuity_residual_fields(&prev, &next));
        prev = next;
    }
    frames.finish()?;
    density.finish()?;
    write_json(
        ctx.out,
        "summary.json",
        &EvolveSummary {
            ground_energy,
            gap,
            weakness_ratio,
            dt: prop.dt(),
            steps: prop.steps_total(),
            initial_interval_mass,
            final_interval_mass: prev.interval_probability(&interval),
            min_fidelity,
            final_fidelity,
            max_norm_deviation,
            max_continuity_residual: max_residual,
        },
    )?;
    Ok(())
}

/// Writes `t,x,rho` rows every `stride` steps and at the last step.
struct DensityCsv {
    csv: Option<Csv>,
    stride: usize,
}

impl DensityCsv {
    fn create(dir: &Path, stride: usize) -> Result<Self> {
        let csv = if stride > 0 { Some(Csv::create(dir, "density.csv", &["t", "x", "rho"])?) } else { None };
        Ok(Self { csv, stride })
    }

    fn maybe(&mut self, step: usize, last: bool, t: f64, xs: impl Iterator<Item = f64>, rho: &[f64]) -> Result<()> {
        let Some(csv) = &mut self.csv else { return Ok(()) };
        if step % self.stride == 0 || last {
            for (x, r) in xs.zip(rho) {
                csv.row([num(t), num(x), num(*r)])?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.csv.map_or(Ok(()), Csv::finish)
    }
}

fn write_frames(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let mut csv = Csv::create(dir, "frames.csv", &["t", "norm", "fidelity", "interval_prob"])?;
    for f in &report.frames {
        csv.row([num(f.t), num(f.norm), num(f.fidelity), num(f.interval_prob)])?;
    }
    csv.finish()
}

fn write_density(dir: &Path, report: &ExperimentReport) -> Result<()> {
    if report.density.is_empty() {
        return Ok(());
    }
    let mut csv = Csv::create(dir, "density.csv", &["t", "x", "rho"])?;
    for snap in &report.density {
        for (x, r) in report.config.grid.points().zip(&snap.rho) {
            csv.row([num(snap.t), num(x), num(*r)])?;
        }
    }
    csv.finish()
}

/// Rows at every `stride`-th recorded time plus the last one.
fn write_trajectories(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let stride = report.config.output_stride;
    let mut csv = Csv::create(dir, "trajectories.csv", &["run_id", "p0", "method", "t", "x"])?;
    for &method in report.config.methods.methods() {
        for (id, traj) in report.trajectories_for(method).enumerate() {
            let last = traj.times.len() - 1;
            for (k, (t, x)) in traj.times.iter().zip(&traj.positions).enumerate() {
                if k % stride == 0 || k == last {
                    csv.row([id.to_string(), num(traj.p0), method.name().to_string(), num(*t), num(*x)])?;
                }
            }
        }
    }
    csv.finish()
}

fn write_per_trajectory(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let mut csv = Csv::create(
        dir,
        "per_trajectory.csv",
        &[
            "run_id",
            "p0",
            "x0",
            "x_final_ode",
            "x_final_quantile",
            "sup_diff",
            "entered",
            "first_entry",
            "occupancy_fraction",
            "time_avg_position",
            "max_drift",
            "max_quantile_drift",
        ],
    )?;
    let ode: Vec<&Trajectory> = report.trajectories_for(Method::VelocityOde).collect();
    let quantile: Vec<&Trajectory> = report.trajectories_for(Method::QuantileOracle).collect();
    let reference: Vec<&Trajectory> = report.trajectories_for(report.reference_method).collect();
    let records: Vec<_> = report.records_for(report.reference_method).collect();
    for (id, (traj, rec)) in reference.iter().zip(&records).enumerate() {
        csv.row([
            id.to_string(),
            num(traj.p0),
            num(traj.initial()),
            opt(ode.get(id).map(|t| t.last())),
            opt(quantile.get(id).map(|t| t.last())),
            opt(report.sup_differences.get(id).copied()),
            rec.crossing.entered.to_string(),
            opt(rec.crossing.first_entry),
            num(rec.crossing.occupancy_fraction),
            num(rec.time_avg_position),
            num(rec.max_drift),
            num(rec.max_quantile_drift),
        ])?;
    }
    csv.finish()
}

#[derive(Serialize)]
struct ProtectSummary<'a> {
    interval_lo: f64,
    interval_hi: f64,
    ground_energy: f64,
    gap: f64,
    weakness_ratio: f64,
    weak: bool,
    initial_interval_mass: f64,
    final_interval_mass: f64,
    time_avg_interval_prob: f64,
    min_fidelity: f64,
    final_fidelity: f64,
    max_norm_deviation: f64,
    reference_method: Method,
    fraction_never_entered: f64,
    max_position_drift: f64,
    max_final_drift: f64,
    max_sup_difference: Option<f64>,
    methods: &'a [MethodSummary],
}

impl<'a> From<&'a ExperimentReport> for ProtectSummary<'a> {
    fn from(r: &'a ExperimentReport) -> Self {
        Self {
            interval_lo: r.interval.lo,
            interval_hi: r.interval.hi,
            ground_energy: r.ground_energy,
            gap: r.gap,
            weakness_ratio: r.weakness_ratio,
            weak: r.weak,
            initial_interval_mass: r.initial_interval_mass,
            final_interval_mass: r.final_interval_mass,
            time_avg_interval_prob: r.time_avg_interval_prob,
            min_fidelity: r.min_fidelity,
            final_fidelity: r.final_fidelity,
            max_norm_deviation: r.max_norm_deviation,
            reference_method: r.reference_method,
            fraction_never_entered: r.fraction_never_entered,
            max_position_drift: r.max_position_drift,
            max_final_drift: r.max_final_drift,
            max_sup_difference: r.max_sup_difference,
            methods: &r.methods,
        }
    }
}

pub fn trajectories(ctx: &Run) -> Result<()> {
    let cfg = ctx.config.protective()?;
    let report = run_protective(&cfg)?;
    ensure_dir(ctx.out)?;
    write_frames(ctx.out, &report)?;
    write_trajectories(ctx.out, &report)?;
    write_density(ctx.out, &report)?;
    if ctx.plot {
        write_text(ctx.out, plot::HEATMAP, &plot::heatmap(&report.interval, cfg.methods.methods()))?;
    }
    Ok(())
}

fn write_protect(dir: &Path, report: &ExperimentReport, plot_scripts: bool) -> Result<()> {
    ensure_dir(dir)?;
    write_json(dir, "summary.json", &ProtectSummary::from(report))?;
    write_frames(dir, report)?;
    write_trajectories(dir, report)?;
    write_per_trajectory(dir, report)?;
    write_density(dir, report)?;
    if plot_scripts {
        write_text(dir, plot::HEATMAP, &plot::heatmap(&report.interval, report.config.methods.methods()))?;
        write_text(dir, plot::AVERAGES, &plot::averages(&report.interval, report.reference_method))?;
    }
    Ok(())
}

pub fn protect(ctx: &Run) -> Result<()> {
    let cfg = ctx.config.protective()?;
    let report = run_protective(&cfg)?;
    if report.fraction_never_entered < 1.0 {
        log::info!("fraction never entered: {}", report.fraction_never_entered);
    }
    write_protect(ctx.out, &report, ctx.plot)
}

#[derive(Serialize)]
struct LemmaLevel {
    resolution: &'static str,
    n: usize,
    dt: f64,
    substeps: usize,
    max_sup_difference: f64,
    max_ode_quantile_drift: f64,
    max_norm_deviation: f64,
}

#[derive(Serialize)]
struct LemmaSummary {
    bound: f64,
    within_bound: bool,
    refinement_ratio: Option<f64>,
    levels: Vec<LemmaLevel>,
}

pub fn lemma_check(ctx: &Run) -> Result<()> {
    let configs = ctx.config.lemma()?;
    let reports: Vec<ExperimentReport> = configs.par_iter().map(run_protective).collect::<bohmlab::Result<_>>()?;
    ensure_dir(ctx.out)?;
    let names = ["reference", "refined"];
    let mut csv = Csv::create(ctx.out, "lemma.csv", &["resolution", "run_id", "p0", "sup_diff", "ode_quantile_drift"])?;
    let mut levels = Vec::new();
    for (name, report) in names.iter().zip(&reports) {
        let ode: Vec<_> = report.records_for(Method::VelocityOde).collect();
        for (id, (rec, sup)) in ode.iter().zip(&report.sup_differences).enumerate() {
            csv.row([name.to_string(), id.to_string(), num(rec.p0), num(*sup), num(rec.max_quantile_drift)])?;
        }
        levels.push(LemmaLevel {
            resolution: name,
            n: report.config.grid.len(),
            dt: report.config.dt,
            substeps: report.config.substeps,
            max_sup_difference: report.max_sup_difference.unwrap_or(f64::NAN),
            max_ode_quantile_drift: ode.iter().map(|r| r.max_quantile_drift).fold(0.0, f64::max),
            max_norm_deviation: report.max_norm_deviation,
        });
    }
    csv.finish()?;
    let bound = 5e-3 * configs[0].grid.width() / 20.0;
    let within_bound = levels[0].max_sup_difference < bound;
    if !within_bound {
        log::warn!("dual-method difference {} exceeds {}", levels[0].max_sup_difference, bound);
    }
    let refinement_ratio = levels.get(1).map(|fine| levels[0].max_sup_difference / fine.max_sup_difference);
    write_json(ctx.out, "summary.json", &LemmaSummary { bound, within_bound, refinement_ratio, levels })?;
    if ctx.plot {
        write_text(ctx.out, plot::LEMMA, &plot::lemma())?;
    }
    Ok(())
}

pub fn sweep(ctx: &Run) -> Result<()> {
    let configs: Vec<ProtectiveConfig> = ctx.config.sweep()?;
    ensure_dir(ctx.out)?;
    // each run writes only to its own directory
    let rows: Vec<Vec<String>> = configs
        .par_iter()
        .enumerate()
        .map(|(id, cfg)| -> Result<Vec<String>> {
            let report = run_protective(cfg).with_context(|| format!("sweep run {id}"))?;
            let dir = ctx.out.join(format!("run_{id:03}"));
            ensure_dir(&dir)?;
            write_json(&dir, "summary.json", &ProtectSummary::from(&report))?;
            write_frames(&dir, &report)?;
            Ok(vec![
                id.to_string(),
                num(cfg.lambda),
                num(cfg.ramp.total_time),
                num(report.fraction_never_entered),
                num(report.min_fidelity),
                num(report.final_fidelity),
                num(report.max_position_drift),
                num(report.max_final_drift),
                num(report.time_avg_interval_prob),
                num(report.initial_interval_mass),
                num(report.max_norm_deviation),
            ])
        })
        .collect::<Result<_>>()?;
    let mut csv = Csv::create(
        ctx.out,
        "sweep.csv",
        &[
            "run_id",
            "lambda",
            "total_time",
            "fraction_never_entered",
            "min_fidelity",
            "final_fidelity",
            "max_position_drift",
            "max_final_drift",
            "time_avg_interval_prob",
            "initial_interval_mass",
            "max_norm_deviation",
        ],
    )?;
    for row in rows {
        csv.row(row)?;
    }
    csv.finish()
}
