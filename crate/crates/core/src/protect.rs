//! Protective-measurement experiment.
//!
//! A particle starts in the ground state of `V₀`. A weak bump `λ g(t) b(x)`
//! is switched on and off slowly, the wavefunction is propagated, and an
//! ensemble of trajectories is followed through the run. The report compares
//! how long single trajectories spend inside the bump interval with the
//! ensemble probability of that interval.

use serde::{Deserialize, Serialize};

use crate::bohm::{crossing_report, sup_difference, CrossingReport, Ensemble, EnsembleSpec, Method, Trajectory};
use crate::error::{Error, Result, StageExt};
use crate::evolve::{adiabatic_fidelity, Bump, PotentialSchedule, Propagator, RampSchedule, RampShape};
use crate::field::{build_grid, trapezoid, DensityFields, Grid, Interval, PhysicalConstants, Wavefunction};
use crate::par::{self, Execution};
use crate::spectral::{eigenstates, PotentialSample};

/// Named families for the unperturbed potential `V₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasePotential {
    /// `m ω² x² / 2`
    Harmonic { omega: f64 },
    /// `V₀ = 0`; the box walls confine the particle.
    Free,
    /// `c x⁴`
    Quartic { coefficient: f64 },
    /// `depth (x² - s²)² / s⁴`, minima at `±s`.
    DoubleWell { depth: f64, separation: f64 },
}

impl Default for BasePotential {
    fn default() -> Self {
        BasePotential::Harmonic { omega: 1.0 }
    }
}

impl BasePotential {
    pub fn sample(&self, grid: Grid, consts: &PhysicalConstants) -> Result<PotentialSample> {
        match *self {
            BasePotential::Harmonic { omega } => {
                let k = consts.mass * omega * omega;
                PotentialSample::from_fn(grid, |x| 0.5 * k * x * x)
            }
            BasePotential::Free => Ok(PotentialSample::zeros(grid)),
            BasePotential::Quartic { coefficient } => PotentialSample::from_fn(grid, |x| coefficient * x.powi(4)),
            BasePotential::DoubleWell { depth, separation } => {
                let s2 = separation * separation;
                PotentialSample::from_fn(grid, |x| depth * (x * x - s2).powi(2) / (s2 * s2))
            }
        }
    }
}

/// Unit-peak Gaussian `exp(-(x-c)²/2w²)` truncated to `[c - 3w, c + 3w]`.
pub fn build_bump(grid: &Grid, center: f64, width: f64) -> Result<Bump> {
    let (lo, hi) = (center - 3.0 * width, center + 3.0 * width);
    if !(width > 0.0) || !grid.contains(lo) || !grid.contains(hi) {
        return Err(Error::BumpOutsideGrid { lo, hi });
    }
    let interval = Interval::new(lo, hi)?;
    let sample = PotentialSample::from_fn(*grid, |x| {
        // open support: the truncation points themselves are zero
        if (x - center).abs() < 3.0 * width * (1.0 - 1e-12) {
            (-(x - center).powi(2) / (2.0 * width * width)).exp()
        } else {
            0.0
        }
    })?;
    Bump::new(sample, interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Ode,
    Quantile,
    #[default]
    Both,
}

impl MethodSelection {
    pub fn methods(&self) -> &'static [Method] {
        match self {
            MethodSelection::Ode => &[Method::VelocityOde],
            MethodSelection::Quantile => &[Method::QuantileOracle],
            MethodSelection::Both => &[Method::VelocityOde, Method::QuantileOracle],
        }
    }

    /// The method whose crossings are reported as the experiment's result.
    pub fn reference(&self) -> Method {
        match self {
            MethodSelection::Ode => Method::VelocityOde,
            _ => Method::QuantileOracle,
        }
    }
}

/// Above this ratio `|λ| max|b| / (E₁ - E₀)` the perturbation is flagged as not weak.
pub const WEAKNESS_WARNING: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtectiveConfig {
    pub base: BasePotential,
    pub bump_center: f64,
    pub bump_width: f64,
    pub lambda: f64,
    pub ramp: RampSchedule,
    pub ensemble: EnsembleSpec,
    pub grid: Grid,
    pub dt: f64,
    pub substeps: usize,
    /// Frames (norm, fidelity, interval probability) are sampled every
    /// `output_stride` steps; trajectories keep every step.
    pub output_stride: usize,
    /// Density snapshots every `density_stride` steps; 0 keeps none.
    pub density_stride: usize,
    pub methods: MethodSelection,
    pub consts: PhysicalConstants,
}

impl ProtectiveConfig {
    /// Oscillator ground state, bump of width 0.25 at x = 2.2, λ = 0.05,
    /// sin² ramp over T = 200, 33 equispaced quantiles on a 2401-point box [-12, 12].
    pub fn canonical() -> Self {
        Self {
            base: BasePotential::Harmonic { omega: 1.0 },
            bump_center: 2.2,
            bump_width: 0.25,
            lambda: 0.05,
            ramp: RampSchedule { total_time: 200.0, shape: RampShape::SinSquared },
            ensemble: EnsembleSpec::equispaced(33).expect("nonempty"),
            grid: build_grid(-12.0, 12.0, 2401).expect("valid grid"),
            dt: 2e-3,
            substeps: 1,
            output_stride: 100,
            density_stride: 0,
            methods: MethodSelection::Both,
            consts: PhysicalConstants::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 || self.output_stride == 0 {
            return Err(Error::InvalidConfig("substeps and output_stride must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda {} not finite", self.lambda)));
        }
        RampSchedule::new(self.ramp.total_time, self.ramp.shape)?;
        PhysicalConstants::new(self.consts.hbar, self.consts.mass)?;
        let (lo, hi) = self.interval_bounds();
        if !(lo > self.grid.x_min() && hi < self.grid.x_max()) {
            return Err(Error::BumpOutsideGrid { lo, hi });
        }
        Ok(())
    }

    pub fn interval_bounds(&self) -> (f64, f64) {
        (self.bump_center - 3.0 * self.bump_width, self.bump_center + 3.0 * self.bump_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRecord {
    pub t: f64,
    pub norm: f64,
    pub fidelity: f64,
    pub interval_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub t: f64,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub p0: f64,
    pub method: Method,
    pub crossing: CrossingReport,
    pub time_avg_position: f64,
    pub max_drift: f64,
    pub final_drift: f64,
    pub max_quantile_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub fraction_never_entered: f64,
    pub max_position_drift: f64,
    pub max_final_drift: f64,
    pub max_quantile_drift: f64,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ProtectiveConfig,
    pub interval: Interval,
    pub ground_energy: f64,
    pub gap: f64,
    pub weakness_ratio: f64,
    pub weak: bool,
    pub initial_interval_mass: f64,
    pub final_interval_mass: f64,
    /// Time average of `∫_a^b ρ dx` over the run.
    pub time_avg_interval_prob: f64,
    pub min_fidelity: f64,
    pub final_fidelity: f64,
    pub max_norm_deviation: f64,
    pub reference_method: Method,
    pub fraction_never_entered: f64,
    pub max_position_drift: f64,
    pub max_final_drift: f64,
    /// `sup_t |x_ode - x_quantile|` over all members, when both methods ran.
    pub max_sup_difference: Option<f64>,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<TrajectoryRecord>,
    /// Per-member `sup_t |x_ode - x_quantile|`, when both methods ran.
    pub sup_differences: Vec<f64>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    pub frames: Vec<FrameRecord>,
    #[serde(skip)]
    pub density: Vec<DensitySnapshot>,
}

impl ExperimentReport {
    pub fn trajectories_for(&self, method: Method) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(move |t| t.method == method)
    }

    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }
}

/// Observable on positions for time and ensemble averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Constant(f64),
    Position,
    Indicator(Interval),
}

impl Observable {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Position => x,
            Observable::Indicator(iv) => iv.indicator(x),
        }
    }
}

/// Trapezoid-in-time average of `f(x(t))` along a trajectory.
pub fn time_average(traj: &Trajectory, f: impl Fn(f64) -> f64) -> Result<f64> {
    if traj.positions.len() < 2 {
        return Err(Error::EmptyTrajectory(traj.positions.len()));
    }
    Ok(crate::bohm::time_weighted_mean(&traj.times, traj.positions.iter().map(|&x| f(x))))
}

/// `∫ f(x) ρ(x) dx`. Indicators use the interpolated CDF so that the result
/// equals `cdf(b) - cdf(a)` exactly; other observables use the trapezoid rule.
pub fn ensemble_average(fields: &DensityFields, f: &Observable) -> f64 {
    match f {
        Observable::Indicator(iv) => fields.interval_probability(iv),
        _ => ensemble_average_with(fields, |x| f.value(x)),
    }
}

pub fn ensemble_average_with(fields: &DensityFields, f: impl Fn(f64) -> f64) -> f64 {
    let g = fields.grid();
    let integrand: Vec<f64> = fields.rho().iter().enumerate().map(|(i, r)| f(g.x(i)) * r).collect();
    trapezoid(&integrand, g.dx())
}

/// Initial state and schedule of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub schedule: PotentialSchedule,
    pub psi0: Wavefunction,
    pub ground_energy: f64,
    pub gap: f64,
    /// `|λ| max|b| / (E₁ - E₀)`
    pub weakness_ratio: f64,
}

/// Samples the potentials and solves for the two lowest states of `V₀`.
pub fn prepare(config: &ProtectiveConfig) -> Result<Setup> {
    config.validate().stage("config")?;
    let consts = config.consts;
    let base = config.base.sample(config.grid, &consts).stage("potential")?;
    let bump = build_bump(&config.grid, config.bump_center, config.bump_width).stage("bump")?;
    let peak = bump.sample().max_abs();
    let spectrum = eigenstates(&base, 2, &consts).stage("ground state")?;
    let gap = spectrum.gap().expect("two states");
    let ground_energy = spectrum.energies[0];
    let psi0 = spectrum.states.into_iter().next().expect("ground state");
    let schedule = PotentialSchedule::new(base, bump, config.lambda, config.ramp).stage("schedule")?;
    Ok(Setup { schedule, psi0, ground_energy, gap, weakness_ratio: config.lambda.abs() * peak / gap })
}

/// Runs the full pipeline: ground state, propagation, trajectory ensembles,
/// crossing statistics.
pub fn run_protective(config: &ProtectiveConfig) -> Result<ExperimentReport> {
    let consts = config.consts;
    let grid = config.grid;
    let Setup { schedule: sched, psi0, ground_energy, gap, weakness_ratio } = prepare(config)?;
    let interval = sched.bump().expect("bump present").interval();
    let weak = weakness_ratio <= WEAKNESS_WARNING;
    if !weak {
        log::warn!("perturbation not weak: lambda*max|b|/gap = {weakness_ratio:.3} > {WEAKNESS_WARNING}");
    }

    let mut prop = Propagator::new(psi0, &sched, config.dt, consts).stage("propagate")?;
    let dt = prop.dt();

    let mut ensembles: Vec<Ensemble> = config
        .methods
        .methods()
        .iter()
        .map(|&m| Ensemble::new(&config.ensemble, m, config.substeps))
        .collect();

    let mut prev = prop.fields();
    ensembles.iter_mut().for_each(|e| e.start(&prev));
    let initial_interval_mass = prev.interval_probability(&interval);
    let norm_of = |f: &DensityFields| trapezoid(f.rho(), grid.dx());
    let mut max_norm_deviation = (norm_of(&prev) - 1.0).abs();
    let mut frames = Vec::new();
    let mut min_fidelity = f64::INFINITY;
    let record_frame = |f: &DensityFields, psi: &crate::field::Wavefunction, frames: &mut Vec<FrameRecord>| -> Result<f64> {
        let fidelity = adiabatic_fidelity(psi, &sched, &consts).stage("fidelity")?;
        frames.push(FrameRecord {
            t: f.t(),
            norm: norm_of(f),
            fidelity,
            interval_prob: f.interval_probability(&interval),
        });
        Ok(fidelity)
    };
    min_fidelity = min_fidelity.min(record_frame(&prev, prop.state(), &mut frames)?);
    let mut density = Vec::new();
    let snapshot = |f: &DensityFields| DensitySnapshot { t: f.t(), rho: f.rho().to_vec() };
    if config.density_stride > 0 {
        density.push(snapshot(&prev));
    }

    let mut prob_integral = 0.0;
    let mut prev_prob = initial_interval_mass;
    while prop.advance().stage("propagate")? {
        let next = prop.fields();
        for e in &mut ensembles {
            e.step(&prev, &next).stage("trajectories")?;
        }
        let prob = next.interval_probability(&interval);
        prob_integral += 0.5 * dt * (prob + prev_prob);
        prev_prob = prob;
        max_norm_deviation = max_norm_deviation.max((norm_of(&next) - 1.0).abs());
        if prop.steps_done() % config.output_stride == 0 || prop.is_done() {
            min_fidelity = min_fidelity.min(record_frame(&next, prop.state(), &mut frames)?);
        }
        if config.density_stride > 0 && (prop.steps_done() % config.density_stride == 0 || prop.is_done()) {
            density.push(snapshot(&next));
        }
        prev = next;
    }
    let final_fidelity = frames.last().map(|f| f.fidelity).unwrap_or(f64::NAN);
    let final_interval_mass = prev_prob;
    let total_time = prop.time_of(prop.steps_total());

    let reference_method = config.methods.reference();
    let mut methods = Vec::new();
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    for e in ensembles {
        let method = e.method();
        let run = e.finish();
        let mut never = 0usize;
        let mut summary = MethodSummary {
            method,
            fraction_never_entered: 0.0,
            max_position_drift: 0.0,
            max_final_drift: 0.0,
            max_quantile_drift: 0.0,
            clamp_events: run.clamp_events,
        };
        for (traj, &qdrift) in run.trajectories.iter().zip(&run.max_quantile_drift) {
            let crossing = crossing_report(traj, &interval).stage("crossings")?;
            if !crossing.entered {
                never += 1;
            }
            let rec = TrajectoryRecord {
                p0: traj.p0,
                method,
                crossing,
                time_avg_position: time_average(traj, |x| x).stage("crossings")?,
                max_drift: traj.max_drift(),
                final_drift: traj.final_drift(),
                max_quantile_drift: qdrift,
            };
            summary.max_position_drift = summary.max_position_drift.max(rec.max_drift);
            summary.max_final_drift = summary.max_final_drift.max(rec.final_drift);
            summary.max_quantile_drift = summary.max_quantile_drift.max(qdrift);
            records.push(rec);
        }
        summary.fraction_never_entered = never as f64 / run.trajectories.len() as f64;
        methods.push(summary);
        trajectories.extend(run.trajectories);
    }

    let sup_differences: Vec<f64> = if config.methods == MethodSelection::Both {
        let ode: Vec<&Trajectory> = trajectories.iter().filter(|t| t.method == Method::VelocityOde).collect();
        let qt: Vec<&Trajectory> = trajectories.iter().filter(|t| t.method == Method::QuantileOracle).collect();
        ode.iter().zip(&qt).map(|(a, b)| sup_difference(a, b)).collect()
    } else {
        Vec::new()
    };
    let max_sup_difference = (!sup_differences.is_empty()).then(|| sup_differences.iter().copied().fold(0.0, f64::max));

    let reference = methods.iter().find(|m| m.method == reference_method).expect("reference method ran");
    Ok(ExperimentReport {
        config: config.clone(),
        interval,
        ground_energy,
        gap,
        weakness_ratio,
        weak,
        initial_interval_mass,
        final_interval_mass,
        time_avg_interval_prob: prob_integral / total_time,
        min_fidelity,
        final_fidelity,
        max_norm_deviation,
        reference_method,
        fraction_never_entered: reference.fraction_never_entered,
        max_position_drift: reference.max_position_drift,
        max_final_drift: reference.max_final_drift,
        max_sup_difference,
        methods,
        records,
        sup_differences,
        trajectories,
        frames,
        density,
    })
}

/// Runs independent experiments, concurrently when `exec` allows.
pub fn run_sweep(configs: &[ProtectiveConfig], exec: Execution) -> Vec<Result<ExperimentReport>> {
    par::map(exec, configs, run_protective)
}
