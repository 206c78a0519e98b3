//! Price-risk auto-covariance kernels on a time grid.
//!
//! Every kernel is evaluated at interval midpoints measured from the start of
//! the grid, so `K[i][j] = K(tau_i, tau_j)` with `tau_k = t_{k-1/2} - t_0`.

mod sde;

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{PovError, Result};
use crate::profiles::{ensure_same_grid, fmt_num, TimeGrid};

pub use sde::{
    estimate_kernel, mc_estimate_kernel, mc_standard_errors, simulate_paths, PathEnsemble,
    PsdRepair, SdeModel, SdeSpec, DEFAULT_SUBSTEPS,
};

/// Relative tolerance used when a kernel must be positive.
pub const DEFAULT_PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    PriceRisk,
    Spread,
    Transient,
    Permanent,
    Combined,
}

/// Symmetric `N x N` kernel housed on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: TimeGrid,
    values: DMatrix<f64>,
    kind: KernelKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub pass: bool,
}

impl KernelMatrix {
    /// Build from an entry function; only `j >= i` is evaluated and mirrored.
    pub fn from_fn(grid: TimeGrid, kind: KernelKind, f: impl Fn(usize, usize) -> f64) -> Self {
        let n = grid.n_intervals();
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        Self { grid, values, kind }
    }

    /// Wrap an externally produced matrix. Entries that differ from their
    /// transpose by more than `sym_tol * max|K|` are rejected; the rest is
    /// symmetrized by averaging.
    pub fn from_matrix(
        grid: TimeGrid,
        kind: KernelKind,
        values: DMatrix<f64>,
        sym_tol: f64,
    ) -> Result<Self> {
        let n = grid.n_intervals();
        if values.nrows() != n || values.ncols() != n {
            return Err(PovError::GridMismatch(format!(
                "kernel is {}x{} but the grid has {n} intervals",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some((i, j, gap)) = symmetry_violations(&values, sym_tol).first() {
            return Err(PovError::Parameter(format!(
                "kernel is not symmetric: |K[{i}][{j}] - K[{j}][{i}]| = {gap:.3e}"
            )));
        }
        let values = (&values + values.transpose()) * 0.5;
        Ok(Self { grid, values, kind })
    }

    pub fn zeros(grid: TimeGrid, kind: KernelKind) -> Self {
        let n = grid.n_intervals();
        Self {
            grid,
            values: DMatrix::zeros(n, n),
            kind,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn with_kind(mut self, kind: KernelKind) -> Self {
        self.kind = kind;
        self
    }

    /// `x^T K x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(x.len(), n, "vector length must match the kernel");
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.values[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Weighted sum `sum_k w_k K_k` over kernels on the same grid.
    pub fn weighted_sum(terms: &[(f64, &KernelMatrix)], kind: KernelKind) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| PovError::Parameter("empty kernel sum".into()))?;
        let mut values = DMatrix::zeros(first.dim(), first.dim());
        for (w, k) in terms {
            ensure_same_grid(first.grid(), k.grid(), "kernel sum")?;
            if *w != 0.0 {
                values += &k.values * *w;
            }
        }
        Ok(Self {
            grid: first.grid.clone(),
            values,
            kind,
        })
    }

    pub(crate) fn sub_block(&self, i0: usize, i1: usize) -> Self {
        let n = i1 - i0;
        Self {
            grid: self.grid.sub_grid(i0, i1),
            values: self.values.view((i0, i0), (n, n)).into_owned(),
            kind: self.kind,
        }
    }

    /// Eigenvalue test: passes when `min_eig >= -tol * max(max_eig, 1)`.
    pub fn check_psd(&self, tol: f64) -> PsdReport {
        check_psd_matrix(&self.values, tol)
    }

    /// Clip negative eigenvalues to zero and rebuild the matrix.
    pub fn nearest_psd(&self) -> (Self, PsdRepair) {
        let (values, repair) = clip_to_psd(&self.values);
        (
            Self {
                grid: self.grid.clone(),
                values,
                kind: self.kind,
            },
            repair,
        )
    }

    /// Row-major `i,j,value` CSV with zero-based indices.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "value"])?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                w.write_record([i.to_string(), j.to_string(), fmt_num(self.values[(i, j)])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read an `i,j,value` CSV onto `grid`, rejecting asymmetric input.
    pub fn read_csv(path: impl AsRef<Path>, grid: TimeGrid, kind: KernelKind) -> Result<Self> {
        let values = read_kernel_csv(path)?;
        Self::from_matrix(grid, kind, values, 1e-12)
    }
}

/// Index pairs `(i, j)`, `i < j`, where the matrix is asymmetric beyond
/// `rel_tol * max|K|`, with the size of the gap.
pub fn symmetry_violations(values: &DMatrix<f64>, rel_tol: f64) -> Vec<(usize, usize, f64)> {
    let scale = values.amax().max(f64::MIN_POSITIVE);
    let n = values.nrows().min(values.ncols());
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let gap = (values[(i, j)] - values[(j, i)]).abs();
            if gap > rel_tol * scale {
                out.push((i, j, gap));
            }
        }
    }
    out
}

pub fn check_psd_matrix(values: &DMatrix<f64>, tol: f64) -> PsdReport {
    if values.nrows() == 0 {
        return PsdReport {
            min_eig: 0.0,
            max_eig: 0.0,
            pass: true,
        };
    }
    let eig = SymmetricEigen::new(values.clone()).eigenvalues;
    let min_eig = eig.min();
    let max_eig = eig.max();
    PsdReport {
        min_eig,
        max_eig,
        pass: min_eig >= -tol * max_eig.max(1.0),
    }
}

pub(crate) fn clip_to_psd(values: &DMatrix<f64>) -> (DMatrix<f64>, PsdRepair) {
    let eig = SymmetricEigen::new(values.clone());
    let mut repair = PsdRepair::default();
    let clipped = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            repair.clipped += 1;
            repair.clipped_mass += -l;
            0.0
        } else {
            l
        }
    });
    if repair.clipped == 0 {
        return (values.clone(), repair);
    }
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
    (rebuilt, repair)
}

/// Read a square matrix from an `i,j,value` CSV. Missing entries are errors.
pub fn read_kernel_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["i", "j", "value"] {
        return Err(PovError::File {
            path: path.into(),
            message: "expected header `i,j,value`".into(),
        });
    }
    let mut entries = Vec::new();
    let mut n = 0usize;
    for (k, rec) in reader.deserialize::<(usize, usize, f64)>().enumerate() {
        let (i, j, v) = rec.map_err(|e| PovError::Row {
            path: path.into(),
            row: k + 2,
            message: e.to_string(),
        })?;
        if !v.is_finite() {
            return Err(PovError::Row {
                path: path.into(),
                row: k + 2,
                message: format!("non-finite value {v}"),
            });
        }
        n = n.max(i + 1).max(j + 1);
        entries.push((i, j, v));
    }
    if entries.len() != n * n {
        return Err(PovError::File {
            path: path.into(),
            message: format!("expected {} entries for a {n}x{n} kernel, found {}", n * n, entries.len()),
        });
    }
    let mut values = DMatrix::from_element(n, n, f64::NAN);
    for (i, j, v) in entries {
        values[(i, j)] = v;
    }
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        return Err(PovError::File {
            path: path.into(),
            message: format!("missing entry ({}, {})", pos % n, pos / n),
        });
    }
    Ok(values)
}

/// `K(t, s) = p0^2 sigma^2 min(t, s)`.
pub fn brownian_kernel(grid: &TimeGrid, sigma: f64, p0: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) || !(p0 > 0.0) {
        return Err(PovError::Parameter(format!(
            "brownian kernel needs sigma > 0 and p0 > 0 (got {sigma}, {p0})"
        )));
    }
    let tau = grid.relative_midpoints();
    Ok(KernelMatrix::from_fn(grid.clone(), KernelKind::PriceRisk, |i, j| {
        brownian_cov(tau[i], tau[j], sigma, p0)
    }))
}

fn brownian_cov(t: f64, s: f64, sigma: f64, p0: f64) -> f64 {
    p0 * p0 * sigma * sigma * t.min(s)
}

fn mean_reversion_cov(t: f64, s: f64, kappa: f64, alpha: f64, p0: f64) -> f64 {
    let scale = p0 * p0 * alpha * alpha / (2.0 * kappa);
    scale * (-kappa * (t - s).abs()).exp() * -(-2.0 * kappa * t.min(s)).exp_m1()
}

/// Ornstein-Uhlenbeck auto-covariance started from zero:
/// `p0^2 alpha^2/(2 kappa) exp(-kappa|t-s|) (1 - exp(-2 kappa min(t,s)))`.
pub fn mean_reversion_kernel(
    grid: &TimeGrid,
    kappa: f64,
    alpha: f64,
    p0: f64,
) -> Result<KernelMatrix> {
    if kappa == 0.0 {
        return Err(PovError::Parameter(
            "kappa = 0 is pure Brownian motion; use brownian_kernel".into(),
        ));
    }
    if !(kappa > 0.0) || !(alpha > 0.0) || !(p0 > 0.0) {
        return Err(PovError::Parameter(format!(
            "mean-reversion kernel needs kappa, alpha, p0 > 0 (got {kappa}, {alpha}, {p0})"
        )));
    }
    let tau = grid.relative_midpoints();
    Ok(KernelMatrix::from_fn(grid.clone(), KernelKind::PriceRisk, |i, j| {
        mean_reversion_cov(tau[i], tau[j], kappa, alpha, p0)
    }))
}

/// `K_delta + alpha0^2 K_theta`; a missing spread kernel means constant spreads.
pub fn combined_risk_kernel(
    k_delta: &KernelMatrix,
    k_theta: Option<&KernelMatrix>,
    alpha0: f64,
) -> Result<KernelMatrix> {
    match k_theta {
        None => Ok(k_delta.clone().with_kind(KernelKind::Combined)),
        Some(theta) => KernelMatrix::weighted_sum(
            &[(1.0, k_delta), (alpha0 * alpha0, theta)],
            KernelKind::Combined,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_two_point() {
        let tau = [0.25, 0.5];
        let k = |i: usize, j: usize| brownian_cov(tau[i], tau[j], 1.0, 1.0);
        assert_eq!([k(0, 0), k(0, 1), k(1, 0), k(1, 1)], [0.25, 0.25, 0.25, 0.5]);

        let g = TimeGrid::from_boundaries(vec![0.0, 0.5, 1.0]).unwrap();
        let m = brownian_kernel(&g, 1.0, 1.0).unwrap();
        assert_eq!([m.get(0, 0), m.get(0, 1), m.get(1, 1)], [0.25, 0.25, 0.75]);
    }

    #[test]
    fn brownian_diagonal_and_psd() {
        let g = TimeGrid::uniform(105.0, 195.0, 1.0).unwrap();
        let k = brownian_kernel(&g, 0.001, 30.0).unwrap();
        let tau = g.relative_midpoints();
        for i in 0..90 {
            assert_relative_eq!(k.get(i, i), 900.0 * 1e-6 * tau[i], max_relative = 1e-14);
            if i > 0 {
                assert!(k.get(i, i) >= k.get(i - 1, i - 1));
            }
        }
        let r = k.check_psd(1e-10);
        assert!(r.pass, "{r:?}");
        assert!(r.min_eig >= -1e-10 * r.max_eig);
    }

    #[test]
    fn brownian_rejects_bad_params() {
        let g = TimeGrid::uniform(0.0, 10.0, 1.0).unwrap();
        assert!(brownian_kernel(&g, 0.0, 1.0).is_err());
        assert!(brownian_kernel(&g, 1.0, -1.0).is_err());
    }

    #[test]
    fn mean_reversion_limits() {
        let a = 2f64.sqrt();
        assert_eq!(mean_reversion_cov(0.0, 0.0, 1.0, a, 1.0), 0.0);
        assert_eq!(mean_reversion_cov(0.0, 50.0, 1.0, a, 1.0), 0.0);
        assert_relative_eq!(mean_reversion_cov(50.0, 50.0, 1.0, a, 1.0), 1.0, max_relative = 1e-15);
        // small kappa approaches the Brownian limit alpha^2 min(t, s)
        let near = mean_reversion_cov(0.3, 0.7, 1e-7, 1.0, 1.0);
        assert_relative_eq!(near, 0.3, max_relative = 1e-6);
        let g = TimeGrid::uniform(0.0, 2.0, 1.0).unwrap();
        let err = mean_reversion_kernel(&g, 0.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("brownian_kernel"));
    }

    #[test]
    fn mean_reversion_diagonal_converges_monotonically() {
        let g = TimeGrid::uniform(0.0, 90.0, 1.0).unwrap();
        let (kappa, alpha) = (0.1, 0.02);
        let k = mean_reversion_kernel(&g, kappa, alpha, 1.0).unwrap();
        let stationary = alpha * alpha / (2.0 * kappa);
        for i in 1..90 {
            assert!(k.get(i, i) >= k.get(i - 1, i - 1));
            assert!(k.get(i, i) <= stationary);
        }
        assert_relative_eq!(k.get(89, 89), stationary, max_relative = 1e-7);
        assert!(k.check_psd(DEFAULT_PSD_TOL).pass);
    }

    #[test]
    fn check_psd_detects_indefinite() {
        let g = TimeGrid::uniform(0.0, 2.0, 1.0).unwrap();
        let k = KernelMatrix::from_fn(g.clone(), KernelKind::PriceRisk, |i, j| {
            if i == j {
                1.0
            } else {
                2.0
            }
        });
        let r = k.check_psd(DEFAULT_PSD_TOL);
        assert!(!r.pass);
        assert_relative_eq!(r.min_eig, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.max_eig, 3.0, epsilon = 1e-12);
        let id = KernelMatrix::from_fn(g, KernelKind::PriceRisk, |i, j| (i == j) as u8 as f64);
        assert!(id.check_psd(DEFAULT_PSD_TOL).pass);
    }

    #[test]
    fn nearest_psd_clips_negative_eigenvalues() {
        let g = TimeGrid::uniform(0.0, 2.0, 1.0).unwrap();
        let k = KernelMatrix::from_fn(g, KernelKind::PriceRisk, |i, j| if i == j { 1.0 } else { 2.0 });
        let (fixed, repair) = k.nearest_psd();
        assert_eq!(repair.clipped, 1);
        assert_relative_eq!(repair.clipped_mass, 1.0, epsilon = 1e-12);
        assert!(fixed.check_psd(1e-12).pass);
        assert_relative_eq!(fixed.get(0, 0), 1.5, epsilon = 1e-12);
        assert_eq!(fixed.get(0, 1), fixed.get(1, 0));
    }

    #[test]
    fn combined_kernel_cases() {
        let g = TimeGrid::uniform(0.0, 30.0, 1.0).unwrap();
        let kd = brownian_kernel(&g, 0.001, 30.0).unwrap();
        let kt = mean_reversion_kernel(&g, 0.2, 0.001, 30.0).unwrap();
        assert_eq!(combined_risk_kernel(&kd, None, 0.4).unwrap().values(), kd.values());
        assert_eq!(combined_risk_kernel(&kd, Some(&kt), 0.0).unwrap().values(), kd.values());
        let both = combined_risk_kernel(&kd, Some(&kt), 0.5).unwrap();
        assert_relative_eq!(both.get(3, 7), kd.get(3, 7) + 0.25 * kt.get(3, 7));
        assert!(both.check_psd(DEFAULT_PSD_TOL).pass);
        let other = TimeGrid::uniform(0.0, 31.0, 1.0).unwrap();
        let bad = brownian_kernel(&other, 0.001, 30.0).unwrap();
        assert!(combined_risk_kernel(&kd, Some(&bad), 0.5).is_err());
    }

    #[test]
    fn kernel_csv_round_trip_and_asymmetry() {
        let g = TimeGrid::uniform(0.0, 5.0, 1.0).unwrap();
        let k = brownian_kernel(&g, 0.01, 30.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        k.write_csv(&path).unwrap();
        let back = KernelMatrix::read_csv(&path, g.clone(), KernelKind::PriceRisk).unwrap();
        assert_eq!(back.values(), k.values());

        let text = std::fs::read_to_string(&path).unwrap();
        let edited = text.replacen("0,3,", "0,3,99", 1);
        std::fs::write(&path, edited).unwrap();
        let err = KernelMatrix::read_csv(&path, g, KernelKind::PriceRisk).unwrap_err();
        assert!(err.to_string().contains("K[0][3]"), "{err}");
    }
}
