//! Bound states of `H = -(ħ²/2m) ∂²/∂x² + V(x)` on a hard-wall grid.
//!
//! The Laplacian is the three-point stencil on the `n - 2` interior points;
//! the two end points are pinned to zero. Eigenvalues come from Sturm-count
//! bisection, eigenvectors from inverse iteration with a pivoting
//! tridiagonal solver.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Grid, PhysicalConstants, Wavefunction};

/// Real potential energy sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSample {
    grid: Grid,
    v: Vec<f64>,
}

impl PotentialSample {
    pub fn new(grid: Grid, v: Vec<f64>) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: v.len() });
        }
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "potential not finite at x={}",
                grid.x(bad)
            )));
        }
        Ok(Self { grid, v })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, v: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.v.iter_mut().for_each(|x| *x += c);
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Symmetric tridiagonal matrix: `diag` has length `m`, `off` length `m - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for i in 0..m - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm sequence count).
    pub fn count_below(&self, sigma: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE * 1e4;
        let mut count = 0;
        let mut q = self.diag[0] - sigma;
        for i in 0.. {
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
            if i + 1 == self.len() {
                break;
            }
            q = self.diag[i + 1] - sigma - self.off[i] * self.off[i] / q;
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let m = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < m { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k` smallest eigenvalues, ascending.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let (g_lo, g_hi) = self.gershgorin();
        let pad = f64::EPSILON * g_lo.abs().max(g_hi.abs()) * 4.0 + f64::MIN_POSITIVE;
        let mut out = Vec::with_capacity(k);
        let mut floor = g_lo - pad;
        for j in 0..k {
            let (mut lo, mut hi) = (floor, g_hi + pad);
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                    break;
                }
                if self.count_below(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let lambda = 0.5 * (lo + hi);
            out.push(lambda);
            floor = lo;
        }
        out
    }

    /// Solves `(self - shift) x = b` by Gaussian elimination with partial
    /// pivoting; exactly vanishing pivots are replaced by a tiny value so
    /// the solve can serve inverse iteration at an eigenvalue.
    pub fn solve_shifted(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let m = self.len();
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(1.0);
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - shift).collect();
        let mut du: Vec<f64> = self.off.clone();
        let dl: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut x = b.to_vec();
        let guard = |p: &mut f64| {
            if *p == 0.0 {
                *p = tiny;
            }
        };

        for i in 0..m - 1 {
            if d[i].abs() >= dl[i].abs() {
                guard(&mut d[i]);
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                x[i + 1] -= fact * x[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < m {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du2[i];
                }
                du[i] = temp;
                x.swap(i, i + 1);
                x[i + 1] -= fact * x[i];
            }
        }
        guard(&mut d[m - 1]);

        x[m - 1] /= d[m - 1];
        if m > 1 {
            x[m - 2] = (x[m - 2] - du[m - 2] * x[m - 1]) / d[m - 2];
        }
        for i in (0..m.saturating_sub(2)).rev() {
            x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        x
    }
}

/// Three-point finite-difference Hamiltonian on the interior grid points.
///
/// `diag[i] = ħ²/(m dx²) + v[i + 1]`, `off[i] = -ħ²/(2 m dx²)`.
pub fn discretize_hamiltonian(v: &PotentialSample, consts: &PhysicalConstants) -> Tridiagonal {
    let dx = v.grid.dx();
    let kinetic = consts.hbar * consts.hbar / (consts.mass * dx * dx);
    let interior = &v.v[1..v.v.len() - 1];
    Tridiagonal {
        diag: interior.iter().map(|vi| kinetic + vi).collect(),
        off: vec![-0.5 * kinetic; interior.len() - 1],
    }
}

/// `⟨ψ|H|ψ⟩` with the hard-wall Hamiltonian (trapezoid weights).
pub fn energy_expectation(psi: &Wavefunction, v: &PotentialSample, consts: &PhysicalConstants) -> f64 {
    let h = discretize_hamiltonian(v, consts);
    let amp = &psi.amp()[1..psi.amp().len() - 1];
    let re: Vec<f64> = amp.iter().map(|a| a.re).collect();
    let im: Vec<f64> = amp.iter().map(|a| a.im).collect();
    let (hre, him) = (h.apply(&re), h.apply(&im));
    let e: f64 = re.iter().zip(&hre).map(|(a, b)| a * b).sum::<f64>()
        + im.iter().zip(&him).map(|(a, b)| a * b).sum::<f64>();
    e * psi.grid().dx()
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub energies: Vec<f64>,
    pub states: Vec<Wavefunction>,
}

impl SpectralResult {
    /// `E₁ - E₀`, when at least two states were computed.
    pub fn gap(&self) -> Option<f64> {
        (self.energies.len() >= 2).then(|| self.energies[1] - self.energies[0])
    }
}

const DEGENERACY_RTOL: f64 = 1e-10;
const INVERSE_ITERATIONS: usize = 3;

/// The `k` lowest normalized eigenpairs, with each state's largest-magnitude
/// amplitude made real and positive.
pub fn eigenstates(v: &PotentialSample, k: usize, consts: &PhysicalConstants) -> Result<SpectralResult> {
    let grid = v.grid;
    if k == 0 || k > grid.len() / 4 {
        return Err(Error::InvalidRequest(format!(
            "k={k} must lie in 1..={} for a {}-point grid",
            grid.len() / 4,
            grid.len()
        )));
    }
    let h = discretize_hamiltonian(v, consts);
    let energies = h.lowest_eigenvalues(k);
    for (index, w) in energies.windows(2).enumerate() {
        if w[1] - w[0] < DEGENERACY_RTOL * w[0].abs().max(1.0) {
            return Err(Error::Degenerate { index, lower: w[0], upper: w[1] });
        }
    }

    let dx = grid.dx();
    let m = h.len();
    let weighted_norm = |x: &[f64]| (dx * x.iter().map(|a| a * a).sum::<f64>()).sqrt();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &e in &energies {
        let mut x: Vec<f64> = (0..m).map(|i| 0.5 + ((i + 1) as f64 * 0.618_033_988_749_894_9).fract()).collect();
        for _ in 0..INVERSE_ITERATIONS {
            x = h.solve_shifted(e, &x);
            for prev in &vectors {
                let proj = dx * prev.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                x.iter_mut().zip(prev).for_each(|(a, b)| *a -= proj * b);
            }
            let s = weighted_norm(&x);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::SolverSingular(0));
            }
            x.iter_mut().for_each(|a| *a /= s);
        }
        let peak = x.iter().copied().fold(0.0f64, |p, a| if a.abs() > p.abs() { a } else { p });
        if peak < 0.0 {
            x.iter_mut().for_each(|a| *a = -*a);
        }
        vectors.push(x);
    }

    let states = vectors
        .into_iter()
        .map(|x| {
            let mut amp = Vec::with_capacity(grid.len());
            amp.push(Complex64::new(0.0, 0.0));
            amp.extend(x.into_iter().map(|a| Complex64::new(a, 0.0)));
            amp.push(Complex64::new(0.0, 0.0));
            Wavefunction::new(grid, amp, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SpectralResult { energies, states })
}

pub fn ground_state(v: &PotentialSample, consts: &PhysicalConstants) -> Result<(f64, Wavefunction)> {
    let mut r = eigenstates(v, 1, consts)?;
    Ok((r.energies[0], r.states.pop().expect("one state")))
}
