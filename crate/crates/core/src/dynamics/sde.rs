//! Monte-Carlo kernels for price dynamics without a closed-form covariance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{clip_to_psd, KernelKind, KernelMatrix};
use crate::error::{PovError, Result};
use crate::profiles::TimeGrid;

/// Euler steps per grid interval unless told otherwise.
pub const DEFAULT_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeModel {
    Brownian,
    MeanReversion,
    /// Asymmetric stochastic volatility: diffusion
    /// `sigma0 * min(exp(-beta * delta * 1{delta <= 0}), cap)`.
    Asv,
}

/// Zero-drift dynamics of the homogenized price change `delta = (p - p0) / p0`.
/// Rates are per minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeSpec {
    pub model: SdeModel,
    pub sigma0: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub cap: f64,
}

impl SdeSpec {
    pub fn brownian(sigma0: f64) -> Result<Self> {
        Self {
            model: SdeModel::Brownian,
            sigma0,
            kappa: 0.0,
            alpha: sigma0,
            beta: 0.0,
            cap: 1.0,
        }
        .validated()
    }

    pub fn mean_reversion(kappa: f64, alpha: f64) -> Result<Self> {
        Self {
            model: SdeModel::MeanReversion,
            sigma0: alpha,
            kappa,
            alpha,
            beta: 0.0,
            cap: 1.0,
        }
        .validated()
    }

    pub fn asv(sigma0: f64, beta: f64, cap: f64) -> Result<Self> {
        Self {
            model: SdeModel::Asv,
            sigma0,
            kappa: 0.0,
            alpha: sigma0,
            beta,
            cap,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(PovError::Parameter(msg));
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return bad(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !(self.cap >= 1.0) || !self.cap.is_finite() {
            return bad(format!("cap must be >= 1, got {}", self.cap));
        }
        if !self.beta.is_finite() {
            return bad(format!("beta must be finite, got {}", self.beta));
        }
        if self.model == SdeModel::MeanReversion && self.kappa == 0.0 {
            return bad("mean reversion needs kappa > 0".into());
        }
        Ok(self)
    }

    pub fn drift(&self, delta: f64) -> f64 {
        match self.model {
            SdeModel::MeanReversion => -self.kappa * delta,
            _ => 0.0,
        }
    }

    /// Instantaneous diffusion coefficient at state `delta`.
    pub fn diffusion(&self, delta: f64) -> f64 {
        match self.model {
            SdeModel::Brownian => self.sigma0,
            SdeModel::MeanReversion => self.alpha,
            SdeModel::Asv => {
                let exponent = if delta <= 0.0 { -self.beta * delta } else { 0.0 };
                self.sigma0 * exponent.exp().min(self.cap)
            }
        }
    }
}

/// Simulated paths of `delta` sampled at grid boundaries and at interval
/// midpoints (the kernel evaluation times). Storage is time-major: all paths
/// for one sample time are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    at_boundaries: Vec<f64>,
    at_midpoints: Vec<f64>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Values of every path at boundary `k` (`k = 0..=N`).
    pub fn at_boundary(&self, k: usize) -> &[f64] {
        &self.at_boundaries[k * self.n_paths..(k + 1) * self.n_paths]
    }

    /// Values of every path at the midpoint of interval `k`.
    pub fn at_midpoint(&self, k: usize) -> &[f64] {
        &self.at_midpoints[k * self.n_paths..(k + 1) * self.n_paths]
    }

    /// Build from explicit samples (`[path][time]` layout); mainly for tests.
    pub fn from_samples(
        grid: TimeGrid,
        boundaries: Vec<Vec<f64>>,
        midpoints: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_paths = boundaries.len();
        let n = grid.n_intervals();
        if midpoints.len() != n_paths
            || boundaries.iter().any(|p| p.len() != n + 1)
            || midpoints.iter().any(|p| p.len() != n)
        {
            return Err(PovError::Parameter("ensemble shape does not match the grid".into()));
        }
        let mut at_boundaries = vec![0.0; (n + 1) * n_paths];
        let mut at_midpoints = vec![0.0; n * n_paths];
        for p in 0..n_paths {
            for k in 0..=n {
                at_boundaries[k * n_paths + p] = boundaries[p][k];
            }
            for k in 0..n {
                at_midpoints[k * n_paths + p] = midpoints[p][k];
            }
        }
        Ok(Self {
            grid,
            n_paths,
            at_boundaries,
            at_midpoints,
        })
    }
}

/// Euler-Maruyama simulation from `delta_0 = 0`.
///
/// Each interval takes `substeps` Euler steps, rounded up to an even count so
/// the midpoint falls on a step. Path `p` draws from ChaCha8 stream `p` keyed
/// by `seed`, so the ensemble does not depend on the thread count.
pub fn simulate_paths(
    spec: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let spec = spec.validated()?;
    if n_paths < 2 {
        return Err(PovError::Parameter(format!("need at least 2 paths, got {n_paths}")));
    }
    if substeps < 1 {
        return Err(PovError::Parameter("substeps must be >= 1".into()));
    }
    let half = substeps.div_ceil(2);
    let n = grid.n_intervals();
    let widths: Vec<f64> = (0..n).map(|k| grid.width(k)).collect();

    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut bounds = Vec::with_capacity(n + 1);
            let mut mids = Vec::with_capacity(n);
            let mut x = 0.0f64;
            bounds.push(x);
            for &w in &widths {
                let dt = w / (2 * half) as f64;
                let sqrt_dt = dt.sqrt();
                for step in 0..2 * half {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += spec.drift(x) * dt + spec.diffusion(x) * sqrt_dt * z;
                    if step + 1 == half {
                        mids.push(x);
                    }
                }
                bounds.push(x);
            }
            (bounds, mids)
        })
        .collect();

    let mut at_boundaries = vec![0.0; (n + 1) * n_paths];
    let mut at_midpoints = vec![0.0; n * n_paths];
    for (p, (b, m)) in paths.into_iter().enumerate() {
        for k in 0..=n {
            at_boundaries[k * n_paths + p] = b[k];
        }
        for k in 0..n {
            at_midpoints[k * n_paths + p] = m[k];
        }
    }
    Ok(PathEnsemble {
        grid: grid.clone(),
        n_paths,
        at_boundaries,
        at_midpoints,
    })
}

/// Outcome of the spectral PSD repair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsdRepair {
    pub clipped: usize,
    pub clipped_mass: f64,
}

/// Uncentered second moment `p0^2 E[delta_i delta_j]` at interval midpoints,
/// repaired to PSD when sampling noise leaves negative eigenvalues.
pub fn mc_estimate_kernel(ensemble: &PathEnsemble, p0: f64) -> Result<(KernelMatrix, PsdRepair)> {
    if ensemble.n_paths < 2 {
        return Err(PovError::Parameter("need at least 2 paths".into()));
    }
    if !(p0 > 0.0) {
        return Err(PovError::Parameter(format!("p0 must be positive, got {p0}")));
    }
    let n = ensemble.grid.n_intervals();
    let scale = p0 * p0 / ensemble.n_paths as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = ensemble.at_midpoint(i);
            (i..n)
                .map(|j| {
                    let xj = ensemble.at_midpoint(j);
                    xi.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect()
        })
        .collect();
    let raw = KernelMatrix::from_fn(ensemble.grid.clone(), KernelKind::PriceRisk, |i, j| {
        rows[i][j - i]
    });
    let report = raw.check_psd(0.0);
    if report.pass {
        return Ok((raw, PsdRepair::default()));
    }
    let (values, repair) = clip_to_psd(raw.values());
    Ok((
        KernelMatrix {
            grid: raw.grid.clone(),
            values,
            kind: KernelKind::PriceRisk,
        },
        repair,
    ))
}

/// Standard error of each entry of [`mc_estimate_kernel`] (before repair):
/// sample standard deviation of `p0^2 delta_i delta_j` over `sqrt(n_paths)`.
pub fn mc_standard_errors(ensemble: &PathEnsemble, p0: f64) -> KernelMatrix {
    let n = ensemble.grid.n_intervals();
    let m = ensemble.n_paths as f64;
    let p2 = p0 * p0;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = ensemble.at_midpoint(i);
            (i..n)
                .map(|j| {
                    let xj = ensemble.at_midpoint(j);
                    let (mut s, mut ss) = (0.0, 0.0);
                    for (a, b) in xi.iter().zip(xj) {
                        let v = p2 * a * b;
                        s += v;
                        ss += v * v;
                    }
                    let mean = s / m;
                    let var = ((ss - m * mean * mean) / (m - 1.0)).max(0.0);
                    (var / m).sqrt()
                })
                .collect()
        })
        .collect();
    KernelMatrix::from_fn(ensemble.grid.clone(), KernelKind::PriceRisk, |i, j| rows[i][j - i])
}

/// Simulate and estimate in one call.
pub fn estimate_kernel(
    spec: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    substeps: usize,
    seed: u64,
    p0: f64,
) -> Result<(KernelMatrix, PsdRepair)> {
    let paths = simulate_paths(spec, grid, n_paths, substeps, seed)?;
    mc_estimate_kernel(&paths, p0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asv_diffusion_regimes() {
        let spec = SdeSpec::asv(0.001, 50.0, 2.0).unwrap();
        assert_eq!(spec.diffusion(0.01), 0.001);
        assert_eq!(spec.diffusion(1e-9), 0.001);
        assert_eq!(spec.diffusion(0.0), 0.001);
        assert_eq!(spec.diffusion(-1.0), 0.002);
        let mid = spec.diffusion(-0.005);
        assert!((mid - 0.001 * (0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(SdeSpec::brownian(0.0).is_err());
        assert!(SdeSpec::mean_reversion(0.0, 0.1).is_err());
        assert!(SdeSpec::mean_reversion(-1.0, 0.1).is_err());
        assert!(SdeSpec::asv(0.001, 1.0, 0.5).is_err());
    }

    #[test]
    fn paths_start_at_zero_and_are_reproducible() {
        let g = TimeGrid::uniform(0.0, 20.0, 1.0).unwrap();
        let spec = SdeSpec::asv(0.001, 80.0, 2.0).unwrap();
        let a = simulate_paths(&spec, &g, 64, 4, 11).unwrap();
        let b = simulate_paths(&spec, &g, 64, 4, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.at_boundary(0).iter().all(|&x| x == 0.0));
        let c = simulate_paths(&spec, &g, 64, 4, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let g = TimeGrid::uniform(0.0, 10.0, 1.0).unwrap();
        let spec = SdeSpec::brownian(0.001).unwrap();
        let a = simulate_paths(&spec, &g, 200, 3, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_paths(&spec, &g, 200, 3, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn brownian_terminal_mean_is_near_zero() {
        let g = TimeGrid::uniform(0.0, 90.0, 1.0).unwrap();
        let sigma = 0.001;
        let n_paths = 4000;
        let e = simulate_paths(&SdeSpec::brownian(sigma).unwrap(), &g, n_paths, 2, 3).unwrap();
        let mean = e.at_boundary(90).iter().sum::<f64>() / n_paths as f64;
        assert!(mean.abs() <= 3.0 * sigma * 90f64.sqrt() / (n_paths as f64).sqrt());
    }

    #[test]
    fn zero_paths_give_zero_kernel() {
        let g = TimeGrid::uniform(0.0, 3.0, 1.0).unwrap();
        let e = PathEnsemble::from_samples(
            g,
            vec![vec![0.0; 4]; 5],
            vec![vec![0.0; 3]; 5],
        )
        .unwrap();
        let (k, repair) = mc_estimate_kernel(&e, 30.0).unwrap();
        assert!(k.values().iter().all(|&v| v == 0.0));
        assert_eq!(repair.clipped, 0);
    }

    #[test]
    fn estimator_rejects_single_path() {
        let g = TimeGrid::uniform(0.0, 3.0, 1.0).unwrap();
        assert!(simulate_paths(&SdeSpec::brownian(0.001).unwrap(), &g, 1, 2, 0).is_err());
        let e = PathEnsemble::from_samples(g, vec![vec![0.0; 4]], vec![vec![0.0; 3]]).unwrap();
        assert!(mc_estimate_kernel(&e, 1.0).is_err());
    }
}
