//! Crank–Nicolson propagation under `V(x,t) = V₀(x) + λ g(t) b(x)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{density_current, overlap, DensityFields, Grid, Interval, PhysicalConstants, Wavefunction};
use crate::spectral::{ground_state, PotentialSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampShape {
    /// `sin²(πt/T)`
    #[serde(alias = "sin2")]
    SinSquared,
    /// Triangular ramp up to `T/2` and back down.
    Linear,
    /// `3u² - 2u³` of the triangular ramp `u`.
    Smoothstep,
}

/// Dimensionless switching function `g(t)` with `g(0) = g(T) = 0` and `g(T/2) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RampSchedule {
    pub total_time: f64,
    pub shape: RampShape,
}

impl RampSchedule {
    pub fn new(total_time: f64, shape: RampShape) -> Result<Self> {
        if !(total_time > 0.0 && total_time.is_finite()) {
            return Err(Error::InvalidSchedule(format!("total time {total_time} must be positive")));
        }
        Ok(Self { total_time, shape })
    }

    pub fn sample(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < self.total_time) {
            return 0.0;
        }
        let s = t / self.total_time;
        let tent = 1.0 - (2.0 * s - 1.0).abs();
        match self.shape {
            RampShape::SinSquared => (std::f64::consts::PI * s).sin().powi(2),
            RampShape::Linear => tent,
            RampShape::Smoothstep => tent * tent * (3.0 - 2.0 * tent),
        }
    }
}

/// Unit-peak perturbation profile together with the interval that holds its support.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    sample: PotentialSample,
    interval: Interval,
}

/// Values below this count as outside a bump's support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

impl Bump {
    pub fn new(sample: PotentialSample, interval: Interval) -> Result<Self> {
        let grid = *sample.grid();
        for (i, v) in sample.values().iter().enumerate() {
            if v.abs() > SUPPORT_THRESHOLD && !interval.contains(grid.x(i)) {
                return Err(Error::InvalidConfig(format!(
                    "bump is nonzero at x={} outside [{}, {}]",
                    grid.x(i),
                    interval.lo,
                    interval.hi
                )));
            }
        }
        Ok(Self { sample, interval })
    }

    pub fn sample(&self) -> &PotentialSample {
        &self.sample
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }
}

#[derive(Debug, Clone)]
pub struct PotentialSchedule {
    base: PotentialSample,
    bump: Option<Bump>,
    lambda: f64,
    ramp: RampSchedule,
}

impl PotentialSchedule {
    pub fn new(base: PotentialSample, bump: Bump, lambda: f64, ramp: RampSchedule) -> Result<Self> {
        if bump.sample.grid() != base.grid() {
            return Err(Error::GridMismatch);
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda {lambda} not finite")));
        }
        Ok(Self { base, bump: Some(bump), lambda, ramp })
    }

    /// Time-independent `V₀` over `[0, total_time]`.
    pub fn stationary(base: PotentialSample, total_time: f64) -> Result<Self> {
        let ramp = RampSchedule::new(total_time, RampShape::SinSquared)?;
        Ok(Self { base, bump: None, lambda: 0.0, ramp })
    }

    pub fn grid(&self) -> &Grid {
        self.base.grid()
    }

    pub fn base(&self) -> &PotentialSample {
        &self.base
    }

    pub fn bump(&self) -> Option<&Bump> {
        self.bump.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn ramp(&self) -> &RampSchedule {
        &self.ramp
    }

    pub fn total_time(&self) -> f64 {
        self.ramp.total_time
    }

    /// Strength multiplying the bump at time `t`: `λ g(t)`.
    pub fn strength(&self, t: f64) -> f64 {
        match self.bump {
            Some(_) => self.lambda * self.ramp.sample(t),
            None => 0.0,
        }
    }

    pub fn fill(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(self.base.values());
        let s = self.strength(t);
        if let (Some(b), true) = (&self.bump, s != 0.0) {
            out.iter_mut().zip(b.sample.values()).for_each(|(v, b)| *v += s * b);
        }
    }

    pub fn potential_at(&self, t: f64) -> PotentialSample {
        let mut v = vec![0.0; self.grid().len()];
        self.fill(t, &mut v);
        PotentialSample::new(*self.grid(), v).expect("finite by construction")
    }
}

/// Reusable buffers for the tridiagonal Cayley solve.
#[derive(Debug, Default, Clone)]
struct CrankNicolson {
    gamma: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl CrankNicolson {
    /// Solves `(1 + i dt H/2ħ) ψ' = (1 - i dt H/2ħ) ψ` in place; the end
    /// points are held at zero.
    fn step(&mut self, amp: &mut [Complex64], v: &[f64], dx: f64, dt: f64, consts: &PhysicalConstants) -> Result<()> {
        let n = amp.len();
        let m = n - 2;
        self.gamma.resize(m, Complex64::default());
        self.rhs.resize(m, Complex64::default());

        let zero = Complex64::new(0.0, 0.0);
        amp[0] = zero;
        amp[n - 1] = zero;

        let kinetic = consts.hbar * consts.hbar / (consts.mass * dx * dx);
        let off = -0.5 * kinetic;
        let alpha = Complex64::new(0.0, 0.5 * dt / consts.hbar);
        let c = alpha * off;

        for i in 0..m {
            let k = i + 1;
            let h = (kinetic + v[k]) * amp[k] + off * (amp[k - 1] + amp[k + 1]);
            self.rhs[i] = amp[k] - alpha * h;
        }

        let mut prev_gamma = zero;
        let mut prev_y = zero;
        for i in 0..m {
            let diag = Complex64::new(1.0, 0.0) + alpha * (kinetic + v[i + 1]);
            let w = diag - c * prev_gamma;
            if w.norm() < f64::MIN_POSITIVE.sqrt() {
                return Err(Error::SolverSingular(i));
            }
            let inv = w.inv();
            prev_gamma = c * inv;
            prev_y = (self.rhs[i] - c * prev_y) * inv;
            self.gamma[i] = prev_gamma;
            self.rhs[i] = prev_y;
        }
        for i in (0..m - 1).rev() {
            let next = self.rhs[i + 1];
            self.rhs[i] -= self.gamma[i] * next;
        }
        amp[1..n - 1].copy_from_slice(&self.rhs);
        Ok(())
    }
}

/// One Crank–Nicolson step with the potential `v_mid` sampled at `t + dt/2`.
///
/// Negative `dt` runs the exact inverse step.
pub fn step(psi: &Wavefunction, v_mid: &PotentialSample, dt: f64, consts: &PhysicalConstants) -> Result<Wavefunction> {
    if psi.grid() != v_mid.grid() {
        return Err(Error::GridMismatch);
    }
    if !(dt != 0.0 && dt.is_finite()) {
        return Err(Error::InvalidSchedule(format!("time step {dt} must be nonzero")));
    }
    let mut out = psi.clone();
    CrankNicolson::default().step(out.amp_mut(), v_mid.values(), psi.grid().dx(), dt, consts)?;
    out.t = psi.t + dt;
    Ok(out)
}

/// Default bound on `dt ħ / (m dx²)` accepted by [`Propagator`].
pub const DEFAULT_RESOLUTION_FACTOR: f64 = 100.0;

/// Steps a wavefunction through a [`PotentialSchedule`] from `t = 0` to `T`.
///
/// The number of steps is `round(T / dt)`; the step actually taken is
/// `T / steps` so the last frame lands on `T` exactly.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    sched: &'a PotentialSchedule,
    consts: PhysicalConstants,
    psi: Wavefunction,
    dt: f64,
    steps: usize,
    index: usize,
    cn: CrankNicolson,
    v_mid: Vec<f64>,
}

impl<'a> Propagator<'a> {
    pub fn new(psi0: Wavefunction, sched: &'a PotentialSchedule, dt: f64, consts: PhysicalConstants) -> Result<Self> {
        Self::with_resolution_factor(psi0, sched, dt, consts, DEFAULT_RESOLUTION_FACTOR)
    }

    pub fn with_resolution_factor(
        mut psi0: Wavefunction,
        sched: &'a PotentialSchedule,
        dt: f64,
        consts: PhysicalConstants,
        factor: f64,
    ) -> Result<Self> {
        if psi0.grid() != sched.grid() {
            return Err(Error::GridMismatch);
        }
        let total = sched.total_time();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSchedule(format!("time step {dt} must be positive")));
        }
        let steps = (total / dt).round();
        if steps < 1.0 || (steps * dt - total).abs() > 1e-9 * total.max(1.0) {
            return Err(Error::InvalidSchedule(format!("time step {dt} does not divide total time {total}")));
        }
        let dx = sched.grid().dx();
        let limit = factor * dx * dx * consts.mass / consts.hbar;
        if dt > limit {
            return Err(Error::Resolution { dt, dx, limit });
        }
        let steps = steps as usize;
        let n = psi0.grid().len();
        let zero = Complex64::new(0.0, 0.0);
        psi0.amp_mut()[0] = zero;
        psi0.amp_mut()[n - 1] = zero;
        psi0.t = 0.0;
        Ok(Self {
            sched,
            consts,
            psi: psi0,
            dt: total / steps as f64,
            steps,
            index: 0,
            cn: CrankNicolson::default(),
            v_mid: vec![0.0; n],
        })
    }

    pub fn state(&self) -> &Wavefunction {
        &self.psi
    }

    pub fn into_state(self) -> Wavefunction {
        self.psi
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_total(&self) -> usize {
        self.steps
    }

    pub fn steps_done(&self) -> usize {
        self.index
    }

    pub fn is_done(&self) -> bool {
        self.index >= self.steps
    }

    pub fn time_of(&self, index: usize) -> f64 {
        if index == self.steps {
            self.sched.total_time()
        } else {
            index as f64 * self.dt
        }
    }

    /// Advances one step; returns `false` once the schedule is exhausted.
    pub fn advance(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        let t_mid = (self.index as f64 + 0.5) * self.dt;
        self.sched.fill(t_mid, &mut self.v_mid);
        let dx = self.psi.grid().dx();
        self.cn.step(self.psi.amp_mut(), &self.v_mid, dx, self.dt, &self.consts)?;
        self.index += 1;
        self.psi.t = self.time_of(self.index);
        Ok(true)
    }

    pub fn fields(&self) -> DensityFields {
        density_current(&self.psi, &self.consts)
    }
}

/// `|⟨φ₀(t)|ψ(t)⟩|²` against the ground state of the instantaneous Hamiltonian at `psi.t`.
pub fn adiabatic_fidelity(psi: &Wavefunction, sched: &PotentialSchedule, consts: &PhysicalConstants) -> Result<f64> {
    let (_, phi) = ground_state(&sched.potential_at(psi.t), consts)?;
    Ok(overlap(&phi, psi)?.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    /// Store every `store_stride`-th step (the first and last are always kept).
    pub store_stride: usize,
    /// Compute the instantaneous ground-state fidelity at every stored frame.
    pub fidelity: bool,
}

/// Stored frames of one propagation run.
#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub states: Vec<Wavefunction>,
    pub norms: Vec<f64>,
    /// Empty when fidelities were not requested.
    pub fidelities: Vec<f64>,
    pub consts: PhysicalConstants,
}

impl EvolutionTrace {
    /// Trace assembled from externally produced frames.
    pub fn from_states(states: Vec<Wavefunction>, consts: PhysicalConstants) -> Self {
        Self {
            times: states.iter().map(|s| s.t).collect(),
            norms: states.iter().map(Wavefunction::norm_sqr).collect(),
            states,
            fidelities: Vec::new(),
            consts,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn fields(&self, k: usize) -> Result<DensityFields> {
        let psi = self.states.get(k).ok_or(Error::MissingFrame(k))?;
        Ok(density_current(psi, &self.consts))
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.norms.iter().fold(0.0, |m, n| m.max((n - 1.0).abs()))
    }

    pub fn min_fidelity(&self) -> Option<f64> {
        self.fidelities.iter().copied().reduce(f64::min)
    }

    pub fn final_fidelity(&self) -> Option<f64> {
        self.fidelities.last().copied()
    }
}

/// Propagates with fidelities at every stored frame.
pub fn propagate(
    psi0: Wavefunction,
    sched: &PotentialSchedule,
    dt: f64,
    store_stride: usize,
    consts: &PhysicalConstants,
) -> Result<EvolutionTrace> {
    propagate_with(psi0, sched, dt, consts, TraceOptions { store_stride, fidelity: true })
}

pub fn propagate_with(
    psi0: Wavefunction,
    sched: &PotentialSchedule,
    dt: f64,
    consts: &PhysicalConstants,
    opts: TraceOptions,
) -> Result<EvolutionTrace> {
    if opts.store_stride == 0 {
        return Err(Error::InvalidSchedule("store stride must be at least 1".into()));
    }
    let mut prop = Propagator::new(psi0, sched, dt, *consts)?;
    let mut trace = EvolutionTrace {
        times: Vec::new(),
        states: Vec::new(),
        norms: Vec::new(),
        fidelities: Vec::new(),
        consts: *consts,
    };
    let record = |psi: &Wavefunction, trace: &mut EvolutionTrace| -> Result<()> {
        trace.times.push(psi.t);
        trace.norms.push(psi.norm_sqr());
        if opts.fidelity {
            trace.fidelities.push(adiabatic_fidelity(psi, sched, consts)?);
        }
        trace.states.push(psi.clone());
        Ok(())
    };
    record(prop.state(), &mut trace)?;
    while prop.advance()? {
        let k = prop.steps_done();
        if k % opts.store_stride == 0 || prop.is_done() {
            record(prop.state(), &mut trace)?;
        }
    }
    Ok(trace)
}

/// `max_i |(ρ_{k+1} - ρ_k)/Δt + ∂j/∂x|` over interior points, with `j`
/// averaged between the two frames and differentiated centrally.
pub fn continuity_residual(trace: &EvolutionTrace, k: usize) -> Result<f64> {
    let a = trace.fields(k)?;
    let b = trace.fields(k + 1)?;
    Ok(continuity_residual_fields(&a, &b))
}

pub fn continuity_residual_fields(a: &DensityFields, b: &DensityFields) -> f64 {
    let dt = b.t() - a.t();
    let dx = a.grid().dx();
    let n = a.rho().len();
    let j_mid: Vec<f64> = a.j().iter().zip(b.j()).map(|(x, y)| 0.5 * (x + y)).collect();
    let mut worst: f64 = 0.0;
    for i in 1..n - 1 {
        let drho = (b.rho()[i] - a.rho()[i]) / dt;
        let dj = (j_mid[i + 1] - j_mid[i - 1]) / (2.0 * dx);
        let r = (drho + dj).abs();
        if r.is_finite() {
            worst = worst.max(r);
        } else {
            worst = f64::MAX;
        }
    }
    worst
}
