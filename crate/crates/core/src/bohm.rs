//! Bohmian trajectories, integrated two independent ways.
//!
//! * [`Method::VelocityOde`] integrates `ẋ = j/ρ` with RK4, interpolating the
//!   fields linearly in space and in time between stored frames.
//! * [`Method::QuantileOracle`] places the particle at the fixed quantile
//!   `P₀` of every frame's density. In one dimension the guidance equation
//!   preserves `P[x < x(t)]`, so both methods describe the same path.
//!
//! [`Ensemble`] advances many particles frame by frame, so a run can be
//! streamed out of a propagator without storing every wavefunction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::EvolutionTrace;
use crate::field::{DensityFields, Interval};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ode")]
    VelocityOde,
    #[serde(rename = "quantile")]
    QuantileOracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::VelocityOde => "ode",
            Method::QuantileOracle => "quantile",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub p0: f64,
    pub method: Method,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl Trajectory {
    pub fn initial(&self) -> f64 {
        self.positions[0]
    }

    pub fn last(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }

    /// `max_k |x_k - x_0|`
    pub fn max_drift(&self) -> f64 {
        let x0 = self.initial();
        self.positions.iter().fold(0.0, |m, x| m.max((x - x0).abs()))
    }

    pub fn final_drift(&self) -> f64 {
        (self.last() - self.initial()).abs()
    }
}

/// `sup_k |a_k - b_k|` for two trajectories recorded at the same times.
pub fn sup_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    a.positions.iter().zip(&b.positions).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Initial quantiles of an ensemble, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    quantiles: Vec<f64>,
    seed: Option<u64>,
}

impl EnsembleSpec {
    /// `p_k = (k + 1)/(count + 1)`, `k = 0..count`.
    pub fn equispaced(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        let quantiles = (1..=count).map(|k| k as f64 / (count + 1) as f64).collect();
        Ok(Self { quantiles, seed: None })
    }

    /// `count` uniform draws from `(0, 1)`, reproducible from `seed`.
    pub fn sampled(count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut quantiles = Vec::with_capacity(count);
        while quantiles.len() < count {
            let p: f64 = rng.gen();
            if p > 0.0 {
                quantiles.push(p);
            }
        }
        quantiles.sort_by(f64::total_cmp);
        Ok(Self { quantiles, seed: Some(seed) })
    }

    pub fn from_quantiles(mut quantiles: Vec<f64>) -> Result<Self> {
        if quantiles.is_empty() {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        if let Some(&bad) = quantiles.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::OutOfRange(bad));
        }
        quantiles.sort_by(f64::total_cmp);
        Ok(Self { quantiles, seed: None })
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }
}

/// Relative density floor: `eps = DENSITY_FLOOR · max ρ`.
pub const DENSITY_FLOOR: f64 = 1e-12;

pub fn default_floor(fields: &DensityFields) -> f64 {
    (DENSITY_FLOOR * fields.rho_max()).max(f64::MIN_POSITIVE)
}

/// Guidance velocity `j/max(ρ, eps)` with `ρ`, `j` interpolated linearly to `x`.
pub fn velocity(fields: &DensityFields, x: f64, eps: f64) -> Result<f64> {
    let g = fields.grid();
    if !g.contains(x) {
        return Err(Error::OutOfGrid { x, x_min: g.x_min(), x_max: g.x_max() });
    }
    let (rho, j) = fields.interpolate(x);
    Ok(j / rho.max(eps))
}

/// Two consecutive frames, interpolated linearly in time.
struct FramePair<'a> {
    from: &'a DensityFields,
    to: &'a DensityFields,
    eps: f64,
}

impl<'a> FramePair<'a> {
    fn new(from: &'a DensityFields, to: &'a DensityFields) -> Result<Self> {
        if from.grid() != to.grid() {
            return Err(Error::GridMismatch);
        }
        if !(to.t() > from.t()) {
            return Err(Error::InvalidSchedule(format!(
                "frames out of order: t={} then t={}",
                from.t(),
                to.t()
            )));
        }
        let eps = default_floor(from).max(default_floor(to));
        Ok(Self { from, to, eps })
    }

    #[inline]
    fn velocity(&self, x: f64, s: f64) -> f64 {
        let (ra, ja) = self.from.interpolate(x);
        let (rb, jb) = self.to.interpolate(x);
        let rho = ra + s * (rb - ra);
        let j = ja + s * (jb - ja);
        j / rho.max(self.eps)
    }

    /// RK4 across the whole frame interval; returns the end position and
    /// whether any stage had to be clamped to the grid.
    fn integrate(&self, mut x: f64, substeps: usize) -> (f64, bool) {
        let g = self.from.grid();
        let span = self.to.t() - self.from.t();
        let h = span / substeps as f64;
        let ds = 1.0 / substeps as f64;
        let mut clamped = false;
        let mut clamp = |y: f64| {
            let c = g.clamp(y);
            clamped |= c != y;
            c
        };
        for k in 0..substeps {
            let s = k as f64 * ds;
            let k1 = self.velocity(x, s);
            let k2 = self.velocity(clamp(x + 0.5 * h * k1), s + 0.5 * ds);
            let k3 = self.velocity(clamp(x + 0.5 * h * k2), s + 0.5 * ds);
            let k4 = self.velocity(clamp(x + h * k3), s + ds);
            x = clamp(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        (x, clamped)
    }
}

/// Integrates `ẋ = j/ρ` from `from.t()` to `to.t()` with `substeps` RK4 steps.
pub fn advance(x: f64, from: &DensityFields, to: &DensityFields, substeps: usize) -> Result<f64> {
    let g = from.grid();
    if !g.contains(x) {
        return Err(Error::OutOfGrid { x, x_min: g.x_min(), x_max: g.x_max() });
    }
    let pair = FramePair::new(from, to)?;
    let (x, clamped) = pair.integrate(x, substeps.max(1));
    if clamped {
        log::warn!("trajectory clamped at the box wall near x={x}");
    }
    Ok(x)
}

/// A set of particles advanced together through a sequence of frames.
#[derive(Debug, Clone)]
pub struct Ensemble {
    p0: Vec<f64>,
    method: Method,
    substeps: usize,
    record_stride: usize,
    exec: Execution,
    positions: Vec<f64>,
    times: Vec<f64>,
    paths: Vec<Vec<f64>>,
    quantile_drift: Vec<f64>,
    frames: usize,
    last_recorded: Option<usize>,
    last_t: f64,
    clamp_events: usize,
}

/// Finished ensemble: trajectories plus per-member diagnostics.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub trajectories: Vec<Trajectory>,
    /// `max_k |P_{ψ(t_k)}[x < x_k] - P₀|` for each member.
    pub max_quantile_drift: Vec<f64>,
    pub clamp_events: usize,
}

impl Ensemble {
    pub fn new(spec: &EnsembleSpec, method: Method, substeps: usize) -> Self {
        let n = spec.len();
        Self {
            p0: spec.quantiles.clone(),
            method,
            substeps: substeps.max(1),
            record_stride: 1,
            exec: Execution::default(),
            positions: vec![0.0; n],
            times: Vec::new(),
            paths: vec![Vec::new(); n],
            quantile_drift: vec![0.0; n],
            frames: 0,
            last_recorded: None,
            last_t: 0.0,
            clamp_events: 0,
        }
    }

    /// Record every `stride`-th frame; the first and last are always kept.
    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.p0
    }

    /// Places every member at its quantile of the first frame.
    pub fn start(&mut self, fields: &DensityFields) {
        for (x, &p) in self.positions.iter_mut().zip(&self.p0) {
            *x = fields.quantile_unchecked(p);
        }
        self.frames = 1;
        self.last_t = fields.t();
        self.quantile_drift.iter_mut().for_each(|d| *d = 0.0);
        self.record(0);
    }

    /// Moves every member from frame `prev` to frame `next`.
    pub fn step(&mut self, prev: &DensityFields, next: &DensityFields) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::MissingFrame(0));
        }
        let p0 = &self.p0;
        match self.method {
            Method::QuantileOracle => {
                par::for_each_mut(self.exec, &mut self.positions, |i, x| {
                    *x = next.quantile_unchecked(p0[i]);
                });
            }
            Method::VelocityOde => {
                let pair = FramePair::new(prev, next)?;
                let substeps = self.substeps;
                let mut work: Vec<(f64, bool)> = self.positions.iter().map(|&x| (x, false)).collect();
                par::for_each_mut(self.exec, &mut work, |_, item| {
                    *item = pair.integrate(item.0, substeps);
                });
                for (dst, (x, _)) in self.positions.iter_mut().zip(&work) {
                    *dst = *x;
                }
                let clamped = work.iter().filter(|(_, c)| *c).count();
                if clamped > 0 {
                    self.clamp_events += clamped;
                    log::warn!("{clamped} trajectories clamped at the box wall at t={}", next.t());
                }
            }
        }
        for ((d, &x), &p) in self.quantile_drift.iter_mut().zip(&self.positions).zip(p0) {
            *d = d.max((next.cdf_at(x) - p).abs());
        }
        let index = self.frames;
        self.frames += 1;
        self.last_t = next.t();
        if index % self.record_stride == 0 {
            self.record(index);
        }
        Ok(())
    }

    fn record(&mut self, index: usize) {
        self.times.push(self.last_t);
        for (path, &x) in self.paths.iter_mut().zip(&self.positions) {
            path.push(x);
        }
        self.last_recorded = Some(index);
    }

    pub fn finish(mut self) -> EnsembleRun {
        if self.frames > 0 && self.last_recorded != Some(self.frames - 1) {
            self.record(self.frames - 1);
        }
        let method = self.method;
        let times = self.times;
        let trajectories = self
            .p0
            .iter()
            .zip(self.paths)
            .map(|(&p0, positions)| Trajectory { p0, method, times: times.clone(), positions })
            .collect();
        EnsembleRun { trajectories, max_quantile_drift: self.quantile_drift, clamp_events: self.clamp_events }
    }
}

fn drive(mut ensemble: Ensemble, trace: &EvolutionTrace) -> Result<EnsembleRun> {
    let mut prev = trace.fields(0)?;
    ensemble.start(&prev);
    for k in 1..trace.len() {
        let next = trace.fields(k)?;
        ensemble.step(&prev, &next)?;
        prev = next;
    }
    Ok(ensemble.finish())
}

fn single(p0: f64) -> Result<EnsembleSpec> {
    EnsembleSpec::from_quantiles(vec![p0])
}

/// Integrates the guidance equation from the `p0` quantile of the first frame.
pub fn trajectory_ode(p0: f64, trace: &EvolutionTrace, substeps: usize) -> Result<Trajectory> {
    let run = drive(Ensemble::new(&single(p0)?, Method::VelocityOde, substeps), trace)?;
    Ok(run.trajectories.into_iter().next().expect("one member"))
}

/// `x_k = quantile(fields(t_k), p0)` at every stored frame.
pub fn trajectory_quantile(p0: f64, trace: &EvolutionTrace) -> Result<Trajectory> {
    let run = drive(Ensemble::new(&single(p0)?, Method::QuantileOracle, 1), trace)?;
    Ok(run.trajectories.into_iter().next().expect("one member"))
}

pub fn run_ensemble(spec: &EnsembleSpec, trace: &EvolutionTrace, method: Method, substeps: usize) -> Result<Vec<Trajectory>> {
    Ok(drive(Ensemble::new(spec, method, substeps), trace)?.trajectories)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub entered: bool,
    pub first_entry: Option<f64>,
    /// Fraction of the run spent inside the interval (trapezoid in time).
    pub occupancy_fraction: f64,
}

pub fn crossing_report(traj: &Trajectory, interval: &Interval) -> Result<CrossingReport> {
    Interval::new(interval.lo, interval.hi)?;
    if traj.positions.is_empty() {
        return Err(Error::EmptyTrajectory(0));
    }
    let first = traj.positions.iter().position(|&x| interval.contains(x));
    let occupancy_fraction = if traj.positions.len() == 1 {
        interval.indicator(traj.positions[0])
    } else {
        time_weighted_mean(&traj.times, traj.positions.iter().map(|&x| interval.indicator(x)))
    };
    Ok(CrossingReport {
        entered: first.is_some(),
        first_entry: first.map(|k| traj.times[k]),
        occupancy_fraction,
    })
}

/// Trapezoid-in-time mean of samples taken at `times`.
pub(crate) fn time_weighted_mean(times: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (&t, v) in times.iter().zip(values) {
        if let Some((tp, vp)) = prev {
            acc += 0.5 * (t - tp) * (v + vp);
        }
        prev = Some((t, v));
    }
    let span = times[times.len() - 1] - times[0];
    if span > 0.0 {
        acc / span
    } else {
        acc
    }
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// the CDF carried by `fields`.
pub fn ks_distance(samples: &[f64], fields: &DensityFields) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = fields.cdf_at(x);
        d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{propagate_with, Bump, PotentialSchedule, RampSchedule, RampShape, TraceOptions};
    use crate::field::{build_grid, density_current, normalize, Grid, PhysicalConstants, Wavefunction};
    use crate::spectral::{ground_state, PotentialSample};
    use num_complex::Complex64;
    use proptest::prelude::*;

    /// Freely spreading Gaussian with ρ of width σ(t) = σ₀√(1 + τ²), τ = ħt/(2mσ₀²).
    fn free_gaussian(grid: Grid, sigma0: f64, t: f64, consts: &PhysicalConstants) -> Wavefunction {
        let tau = consts.hbar * t / (2.0 * consts.mass * sigma0 * sigma0);
        let z = Complex64::new(1.0, tau);
        let psi = Wavefunction::from_fn(grid, t, |x| {
            (-(x * x) / (4.0 * sigma0 * sigma0 * z)).exp() / z.sqrt()
        });
        normalize(psi).unwrap()
    }

    fn sigma(sigma0: f64, t: f64, consts: &PhysicalConstants) -> f64 {
        let tau = consts.hbar * t / (2.0 * consts.mass * sigma0 * sigma0);
        sigma0 * (1.0 + tau * tau).sqrt()
    }

    fn sigma_dot(sigma0: f64, t: f64, consts: &PhysicalConstants) -> f64 {
        let a = consts.hbar / (2.0 * consts.mass * sigma0 * sigma0);
        sigma0 * a * a * t / (1.0 + (a * t).powi(2)).sqrt()
    }

    fn oscillator_trace(lambda: f64, total: f64, n: usize, dt: f64) -> EvolutionTrace {
        let consts = PhysicalConstants::default();
        let g = build_grid(-8.0, 8.0, n).unwrap();
        let v = PotentialSample::from_fn(g, |x| 0.5 * x * x).unwrap();
        let (_, phi) = ground_state(&v, &consts).unwrap();
        let iv = Interval::new(0.1, 1.9).unwrap();
        let b = PotentialSample::from_fn(g, |x| if iv.contains(x) { (-(x - 1.0).powi(2) / 0.18).exp() } else { 0.0 }).unwrap();
        let sched = PotentialSchedule::new(v, Bump::new(b, iv).unwrap(), lambda, RampSchedule::new(total, RampShape::SinSquared).unwrap()).unwrap();
        propagate_with(phi, &sched, dt, &consts, TraceOptions { store_stride: 1, fidelity: false }).unwrap()
    }

    #[test]
    fn eigenstate_velocity_vanishes() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-8.0, 8.0, 801).unwrap();
        let (_, phi) = ground_state(&PotentialSample::from_fn(g, |x| 0.5 * x * x).unwrap(), &consts).unwrap();
        let f = density_current(&phi, &consts);
        for x in [-3.0, -0.37, 0.0, 1.234, 5.0] {
            assert!(velocity(&f, x, default_floor(&f)).unwrap().abs() < 1e-10);
        }
        assert!(matches!(velocity(&f, 9.0, 1e-12), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn spreading_gaussian_velocity() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-12.0, 12.0, 2401).unwrap();
        let t = 0.8;
        let f = density_current(&free_gaussian(g, 1.0, t, &consts), &consts);
        for x in [-2.0, -0.5, 0.7, 1.5, 3.0] {
            let expect = x * sigma_dot(1.0, t, &consts) / sigma(1.0, t, &consts);
            let got = velocity(&f, x, default_floor(&f)).unwrap();
            assert!(((got - expect) / expect).abs() < 0.01, "x={x} got={got} expect={expect}");
        }
    }

    #[test]
    fn floor_keeps_velocity_finite() {
        let g = build_grid(0.0, 1.0, 64).unwrap();
        let rho = vec![0.0; 64];
        let j = vec![1.0; 64];
        let f = DensityFields::from_parts(g, 0.0, rho, j);
        let v = velocity(&f, 0.5, 1e-12).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn static_frames_leave_particle_in_place() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-8.0, 8.0, 801).unwrap();
        let (_, phi) = ground_state(&PotentialSample::from_fn(g, |x| 0.5 * x * x).unwrap(), &consts).unwrap();
        let a = density_current(&phi, &consts);
        let mut later = phi.clone().scaled(Complex64::from_polar(1.0, -0.3));
        later.t = 0.6;
        let b = density_current(&later, &consts);
        for x0 in [-1.5, 0.2, 2.0] {
            assert!((advance(x0, &a, &b, 4).unwrap() - x0).abs() < 1e-10);
        }
    }

    #[test]
    fn spreading_gaussian_advance() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-12.0, 12.0, 2401).unwrap();
        let steps = 100;
        let frames: Vec<DensityFields> = (0..=steps)
            .map(|k| density_current(&free_gaussian(g, 1.0, k as f64 / steps as f64, &consts), &consts))
            .collect();
        let run = |substeps: usize| {
            let mut x = 1.0;
            for w in frames.windows(2) {
                x = advance(x, &w[0], &w[1], substeps).unwrap();
            }
            x
        };
        let x1 = run(2);
        assert!((x1 - sigma(1.0, 1.0, &consts)).abs() < 1e-3, "{x1}");
        assert!((run(4) - x1).abs() < 1e-6);
    }

    #[test]
    fn advance_rejects_disordered_frames() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-12.0, 12.0, 241).unwrap();
        let a = density_current(&free_gaussian(g, 1.0, 0.5, &consts), &consts);
        let b = density_current(&free_gaussian(g, 1.0, 0.2, &consts), &consts);
        assert!(advance(0.0, &a, &b, 1).is_err());
        assert!(matches!(advance(20.0, &b, &a, 1), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn equispaced_and_sampled_specs() {
        assert_eq!(EnsembleSpec::equispaced(3).unwrap().quantiles(), &[0.25, 0.5, 0.75]);
        let a = EnsembleSpec::sampled(100, 7).unwrap();
        let b = EnsembleSpec::sampled(100, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.quantiles().windows(2).all(|w| w[0] <= w[1]));
        assert!(a.quantiles().iter().all(|p| *p > 0.0 && *p < 1.0));
        assert_ne!(a, EnsembleSpec::sampled(100, 8).unwrap());
        assert!(EnsembleSpec::from_quantiles(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn static_state_gives_constant_symmetric_paths() {
        let trace = oscillator_trace(0.0, 1.0, 401, 1e-2);
        let spec = EnsembleSpec::equispaced(3).unwrap();
        let dx = trace.states[0].grid().dx();
        for method in [Method::VelocityOde, Method::QuantileOracle] {
            let trajs = run_ensemble(&spec, &trace, method, 1).unwrap();
            assert!((trajs[0].initial() + trajs[2].initial()).abs() < dx);
            assert!(trajs[1].initial().abs() < dx);
            for t in &trajs {
                assert_eq!(t.positions.len(), trace.len());
                assert!(t.max_drift() < 1e-10, "{method}: {}", t.max_drift());
            }
        }
        let ode = trajectory_ode(0.5, &trace, 2).unwrap();
        assert!(ode.positions.iter().all(|x| x.abs() < dx));
    }

    #[test]
    fn methods_agree_and_refine() {
        let sup = |n: usize, dt: f64| {
            let trace = oscillator_trace(1.0, 2.0, n, dt);
            [0.2, 0.5, 0.8]
                .iter()
                .map(|&p| {
                    let a = trajectory_ode(p, &trace, 1).unwrap();
                    let b = trajectory_quantile(p, &trace).unwrap();
                    sup_difference(&a, &b)
                })
                .fold(0.0, f64::max)
        };
        let coarse = sup(401, 4e-3);
        let fine = sup(801, 2e-3);
        assert!(coarse < 5e-3, "{coarse}");
        assert!(fine < coarse / 2.0, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn ensemble_modes_agree_bitwise() {
        let trace = oscillator_trace(1.0, 0.5, 401, 1e-2);
        let spec = EnsembleSpec::sampled(600, 3).unwrap();
        let run = |exec| {
            let mut e = Ensemble::new(&spec, Method::VelocityOde, 2).with_execution(exec);
            let mut prev = trace.fields(0).unwrap();
            e.start(&prev);
            for k in 1..trace.len() {
                let next = trace.fields(k).unwrap();
                e.step(&prev, &next).unwrap();
                prev = next;
            }
            e.finish().trajectories
        };
        assert_eq!(run(Execution::Parallel), run(Execution::Sequential));
    }

    #[test]
    fn record_stride_keeps_endpoints() {
        let trace = oscillator_trace(1.0, 0.5, 401, 1e-2);
        let spec = EnsembleSpec::equispaced(4).unwrap();
        let mut e = Ensemble::new(&spec, Method::QuantileOracle, 1).with_record_stride(20);
        let mut prev = trace.fields(0).unwrap();
        e.start(&prev);
        for k in 1..trace.len() {
            let next = trace.fields(k).unwrap();
            e.step(&prev, &next).unwrap();
            prev = next;
        }
        let run = e.finish();
        let t = &run.trajectories[0];
        assert_eq!(t.times, vec![0.0, 0.2, 0.4, 0.5]);
        let full = trajectory_quantile(0.2, &trace).unwrap();
        assert_eq!(t.last(), full.last());
    }

    #[test]
    fn crossing_examples() {
        let iv = Interval::new(1.0, 2.0).unwrap();
        let mk = |xs: Vec<f64>| Trajectory {
            p0: 0.5,
            method: Method::QuantileOracle,
            times: (0..xs.len()).map(|k| k as f64).collect(),
            positions: xs,
        };
        let outside = crossing_report(&mk(vec![0.5; 5]), &iv).unwrap();
        assert!(!outside.entered);
        assert_eq!(outside.first_entry, None);
        assert_eq!(outside.occupancy_fraction, 0.0);

        let inside = crossing_report(&mk(vec![1.5; 5]), &iv).unwrap();
        assert!(inside.entered);
        assert_eq!(inside.first_entry, Some(0.0));
        assert_eq!(inside.occupancy_fraction, 1.0);

        let visit = crossing_report(&mk(vec![0.0, 0.5, 1.5, 1.5, 0.5]), &iv).unwrap();
        assert_eq!(visit.first_entry, Some(2.0));
        assert!((visit.occupancy_fraction - 0.5).abs() < 1e-15);

        assert!(crossing_report(&mk(vec![0.0]), &Interval { lo: 2.0, hi: 1.0 }).is_err());
        assert!(crossing_report(&mk(vec![]), &iv).is_err());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let consts = PhysicalConstants::default();
        let g = build_grid(-12.0, 12.0, 2401).unwrap();
        let f = density_current(&free_gaussian(g, 1.0, 0.0, &consts), &consts);
        let xs: Vec<f64> = (0..1000).map(|k| quantile_of(&f, (k as f64 + 0.5) / 1000.0)).collect();
        assert!(ks_distance(&xs, &f) < 1e-3 + 1e-9);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_distance(&shifted, &f) > 0.3);
    }

    fn quantile_of(f: &DensityFields, p: f64) -> f64 {
        crate::field::quantile(f, p).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        // Non-crossing: a short, strongly driven run with arbitrary bump
        // strength keeps both methods' ensembles ordered at every frame.
        #[test]
        fn trajectories_never_cross(lambda in -2.0..4.0f64, count in 3usize..20) {
            let trace = oscillator_trace(lambda, 0.6, 201, 1e-2);
            let spec = EnsembleSpec::equispaced(count).unwrap();
            for method in [Method::VelocityOde, Method::QuantileOracle] {
                let trajs = run_ensemble(&spec, &trace, method, 2).unwrap();
                for k in 0..trace.len() {
                    for w in trajs.windows(2) {
                        prop_assert!(w[0].positions[k] <= w[1].positions[k]);
                    }
                }
            }
        }
    }
}
