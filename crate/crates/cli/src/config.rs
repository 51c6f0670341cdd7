//! Run configuration: a TOML document with one level of sections.
//!
//! Every key is optional and defaults to the canonical protective run.
//! Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use bohmlab::bohm::EnsembleSpec;
use bohmlab::evolve::{RampSchedule, RampShape};
use bohmlab::protect::{BasePotential, MethodSelection, ProtectiveConfig};
use bohmlab::{build_grid, PhysicalConstants};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub potential: BasePotential,
    pub bump: BumpSection,
    pub ramp: RampSection,
    pub numerics: NumericsSection,
    pub ensemble: EnsembleSection,
    pub eigen: EigenSection,
    pub lemma: LemmaSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { x_min: -12.0, x_max: 12.0, n: 2401 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpSection {
    pub center: f64,
    pub width: f64,
    pub lambda: f64,
}

impl Default for BumpSection {
    fn default() -> Self {
        let c = ProtectiveConfig::canonical();
        Self { center: c.bump_center, width: c.bump_width, lambda: c.lambda }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampSection {
    pub total_time: f64,
    pub shape: RampShape,
}

impl Default for RampSection {
    fn default() -> Self {
        Self { total_time: 200.0, shape: RampShape::SinSquared }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    pub dt: f64,
    pub substeps: usize,
    /// Steps between rows of frames.csv and trajectories.csv.
    pub output_stride: usize,
    /// Steps between density snapshots; 0 disables density.csv.
    pub density_stride: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self { dt: 2e-3, substeps: 1, output_stride: 100, density_stride: 1000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub count: usize,
    /// When set, quantiles are drawn uniformly with this seed instead of equispaced.
    pub seed: Option<u64>,
    /// Explicit quantiles; overrides `count` and `seed`.
    pub quantiles: Option<Vec<f64>>,
    pub method: MethodSelection,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { count: 33, seed: None, quantiles: None, method: MethodSelection::Both }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub count: usize,
}

impl Default for EigenSection {
    fn default() -> Self {
        Self { count: 4 }
    }
}

/// Non-adiabatic schedule for the dual-method check.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSection {
    pub total_time: f64,
    pub lambda: f64,
    pub count: usize,
    /// Also run at doubled resolution in space, time and substeps.
    pub refine: bool,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self { total_time: 5.0, lambda: 0.5, count: 9, refine: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub total_times: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambdas: vec![0.05, 0.025, 0.0125], total_times: vec![50.0, 100.0, 200.0] }
    }
}

/// Command-line overrides applied after the file is read.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub method: Option<MethodSelection>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        match toml::from_str(text) {
            Ok(cfg) => Ok(cfg),
            Err(e) => {
                let msg = one_line(e.message());
                let line = e.span().map(|span| error_line(text, span, &msg));
                match line {
                    Some(l) => bail!("line {l}: {msg}"),
                    None => bail!("{msg}"),
                }
            }
        }
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(m) = o.method {
            self.ensemble.method = m;
        }
        if let Some(seed) = o.seed {
            self.ensemble.seed = Some(seed);
        }
    }

    pub fn consts(&self) -> Result<PhysicalConstants> {
        Ok(PhysicalConstants::new(self.physics.hbar, self.physics.mass)?)
    }

    pub fn ensemble_spec(&self, count: usize) -> Result<EnsembleSpec> {
        let e = &self.ensemble;
        Ok(match (&e.quantiles, e.seed) {
            (Some(q), _) => EnsembleSpec::from_quantiles(q.clone())?,
            (None, Some(seed)) => EnsembleSpec::sampled(count, seed)?,
            (None, None) => EnsembleSpec::equispaced(count)?,
        })
    }

    /// The protective experiment described by this document.
    pub fn protective(&self) -> Result<ProtectiveConfig> {
        let n = &self.numerics;
        let cfg = ProtectiveConfig {
            base: self.potential,
            bump_center: self.bump.center,
            bump_width: self.bump.width,
            lambda: self.bump.lambda,
            ramp: RampSchedule::new(self.ramp.total_time, self.ramp.shape)?,
            ensemble: self.ensemble_spec(self.ensemble.count)?,
            grid: build_grid(self.grid.x_min, self.grid.x_max, self.grid.n)?,
            dt: n.dt,
            substeps: n.substeps,
            output_stride: n.output_stride,
            density_stride: n.density_stride,
            methods: self.ensemble.method,
            consts: self.consts()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The non-adiabatic dual-method run, and its refinement when requested.
    pub fn lemma(&self) -> Result<Vec<ProtectiveConfig>> {
        let l = &self.lemma;
        let base = ProtectiveConfig {
            lambda: l.lambda,
            ramp: RampSchedule::new(l.total_time, RampShape::SinSquared)?,
            ensemble: self.ensemble_spec(l.count)?,
            methods: MethodSelection::Both,
            density_stride: 0,
            ..self.protective()?
        };
        let mut out = vec![base.clone()];
        if l.refine {
            out.push(ProtectiveConfig {
                grid: base.grid.refined(2)?,
                dt: base.dt / 2.0,
                substeps: base.substeps * 2,
                output_stride: base.output_stride * 2,
                ..base
            });
        }
        Ok(out)
    }

    pub fn sweep(&self) -> Result<Vec<ProtectiveConfig>> {
        let s = &self.sweep;
        if s.lambdas.is_empty() || s.total_times.is_empty() {
            bail!("sweep needs at least one entry in both lambdas and total_times");
        }
        let base = ProtectiveConfig { density_stride: 0, ..self.protective()? };
        let mut out = Vec::new();
        for &lambda in &s.lambdas {
            for &t in &s.total_times {
                let cfg = ProtectiveConfig { lambda, ramp: RampSchedule::new(t, base.ramp.shape)?, ..base.clone() };
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

/// 1-based line of a parse error. Unknown fields are reported with the span
/// of their whole table, so the key itself is looked up inside it.
fn error_line(text: &str, span: std::ops::Range<usize>, msg: &str) -> usize {
    let line_of = |offset: usize| text[..offset].matches('\n').count() + 1;
    let key = msg.strip_prefix("unknown field `").and_then(|rest| rest.split('`').next());
    if let Some(key) = key {
        let mut offset = span.start;
        for l in text[span.clone()].split_inclusive('\n') {
            let rest = l.trim_start().strip_prefix(key).map(str::trim_start);
            if rest.is_some_and(|r| r.starts_with('=')) {
                return line_of(offset);
            }
            offset += l.len();
        }
    }
    line_of(span.start)
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
