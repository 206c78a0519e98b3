//! Discrete volume and spread profiles.
//!
//! A [`VolumeProfile`] is the discretization of the market volume measure
//! over a [`TimeGrid`]: per-interval volumes `d_n` and cumulative volumes
//! `V_n`. Cumulative volume is measured from the start of the profile's own
//! horizon; the volume traded before that start is kept separately in
//! [`VolumeProfile::pre_horizon_volume`].

use std::path::Path;

use serde::Deserialize;

use crate::error::{PovError, Result};

/// Length of the regular trading session in minutes.
pub const SESSION_MINUTES: f64 = 390.0;

const ALIGN_TOL: f64 = 1e-9;

/// Interval boundaries `t_0 < t_1 < ... < t_N`, in minutes since the open.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    boundaries: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with step `dt` on `[t_start, t_end]`.
    pub fn uniform(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(PovError::Grid(format!("step must be positive, got {dt}")));
        }
        if !(t_end > t_start) {
            return Err(PovError::Grid(format!(
                "t_end ({t_end}) must exceed t_start ({t_start})"
            )));
        }
        let ratio = (t_end - t_start) / dt;
        let n = ratio.round();
        if (ratio - n).abs() > ALIGN_TOL || n < 1.0 {
            let remainder = (t_end - t_start) - ratio.floor() * dt;
            return Err(PovError::Grid(format!(
                "horizon {} is not a multiple of step {dt} (remainder {remainder})",
                t_end - t_start
            )));
        }
        let n = n as usize;
        let mut boundaries: Vec<f64> = (0..=n).map(|k| t_start + k as f64 * dt).collect();
        boundaries[n] = t_end;
        Ok(Self { boundaries })
    }

    /// Arbitrary strictly increasing boundaries (at least two).
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(PovError::Grid("need at least two boundaries".into()));
        }
        if let Some(k) = boundaries
            .windows(2)
            .position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite())
        {
            return Err(PovError::Grid(format!(
                "boundaries not strictly increasing at index {}",
                k + 1
            )));
        }
        Ok(Self { boundaries })
    }

    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn t_end(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Length of interval `k` (zero-based).
    pub fn width(&self, k: usize) -> f64 {
        self.boundaries[k + 1] - self.boundaries[k]
    }

    /// Midpoint `t_{k-1/2}` of interval `k` (zero-based), in minutes since the open.
    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.boundaries[k] + self.boundaries[k + 1])
    }

    /// Interval midpoints measured from the start of the grid. These are the
    /// evaluation times of every time-indexed kernel.
    pub fn relative_midpoints(&self) -> Vec<f64> {
        (0..self.n_intervals())
            .map(|k| self.midpoint(k) - self.t_start())
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.width(0);
        (0..self.n_intervals()).all(|k| (self.width(k) - w0).abs() <= ALIGN_TOL * w0.max(1.0))
    }

    /// Index `k` with `boundaries[k] == t` (within alignment tolerance).
    pub fn boundary_index(&self, t: f64) -> Option<usize> {
        self.boundaries
            .iter()
            .position(|&b| (b - t).abs() <= ALIGN_TOL * b.abs().max(1.0))
    }

    /// True when the two grids have the same boundaries.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.boundaries.len() == other.boundaries.len()
            && self
                .boundaries
                .iter()
                .zip(&other.boundaries)
                .all(|(a, b)| (a - b).abs() <= ALIGN_TOL * a.abs().max(1.0))
    }

    pub(crate) fn sub_grid(&self, i0: usize, i1: usize) -> TimeGrid {
        TimeGrid {
            boundaries: self.boundaries[i0..=i1].to_vec(),
        }
    }
}

pub(crate) fn ensure_same_grid(a: &TimeGrid, b: &TimeGrid, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(PovError::GridMismatch(format!(
            "{what}: [{}, {}] with {} intervals vs [{}, {}] with {} intervals",
            a.t_start(),
            a.t_end(),
            a.n_intervals(),
            b.t_start(),
            b.t_end(),
            b.n_intervals()
        )))
    }
}

/// Discretized volume measure on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    grid: TimeGrid,
    volumes: Vec<f64>,
    cumulative: Vec<f64>,
    adv: f64,
    pre_horizon_volume: f64,
}

impl VolumeProfile {
    pub fn new(grid: TimeGrid, volumes: Vec<f64>, adv: f64) -> Result<Self> {
        if volumes.len() != grid.n_intervals() {
            return Err(PovError::Profile(format!(
                "{} volumes for a grid of {} intervals",
                volumes.len(),
                grid.n_intervals()
            )));
        }
        if let Some(k) = volumes.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(PovError::Profile(format!(
                "interval {k} has invalid volume {}",
                volumes[k]
            )));
        }
        if !(adv > 0.0) {
            return Err(PovError::Profile(format!("ADV must be positive, got {adv}")));
        }
        let cumulative = accumulate(&volumes);
        if !(cumulative[volumes.len()] > 0.0) {
            return Err(PovError::Profile("total horizon volume is zero".into()));
        }
        Ok(Self {
            grid,
            volumes,
            cumulative,
            adv,
            pre_horizon_volume: 0.0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    /// Per-interval volumes `d_n`.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Cumulative volumes `V_0 = 0, V_1, ..., V_N`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Total horizon volume `V_N`.
    pub fn total(&self) -> f64 {
        self.cumulative[self.volumes.len()]
    }

    pub fn adv(&self) -> f64 {
        self.adv
    }

    /// Market volume traded between the open and the start of this horizon.
    pub fn pre_horizon_volume(&self) -> f64 {
        self.pre_horizon_volume
    }

    /// Cumulative volume at interval midpoints, `(V_{n-1} + V_n) / 2`.
    pub fn midpoint_cumulative(&self) -> Vec<f64> {
        self.cumulative
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn with_adv(mut self, adv: f64) -> Result<Self> {
        if !(adv > 0.0) {
            return Err(PovError::Profile(format!("ADV must be positive, got {adv}")));
        }
        self.adv = adv;
        Ok(self)
    }

    /// Restrict to `[t0, t1]`. Cumulative volume restarts at zero at `t0`.
    pub fn slice(&self, t0: f64, t1: f64) -> Result<VolumeProfile> {
        if !(t1 > t0) {
            return Err(PovError::Profile(format!(
                "slice end {t1} must exceed start {t0}"
            )));
        }
        let i0 = self.grid.boundary_index(t0).ok_or_else(|| {
            PovError::Profile(format!(
                "slice start {t0} is not a grid boundary of [{}, {}]",
                self.grid.t_start(),
                self.grid.t_end()
            ))
        })?;
        let i1 = self.grid.boundary_index(t1).ok_or_else(|| {
            PovError::Profile(format!(
                "slice end {t1} is not a grid boundary of [{}, {}]",
                self.grid.t_start(),
                self.grid.t_end()
            ))
        })?;
        let volumes = self.volumes[i0..i1].to_vec();
        let cumulative = accumulate(&volumes);
        if !(cumulative[volumes.len()] > 0.0) {
            return Err(PovError::Profile(format!(
                "no market volume in [{t0}, {t1}]"
            )));
        }
        Ok(VolumeProfile {
            grid: self.grid.sub_grid(i0, i1),
            volumes,
            cumulative,
            adv: self.adv,
            pre_horizon_volume: self.pre_horizon_volume + self.cumulative[i0],
        })
    }

    /// Load a `minute,volume` CSV. `adv` defaults to the column total.
    pub fn load_csv(path: impl AsRef<Path>, adv: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let rows: Vec<(f64, f64)> = read_two_column(path, "volume")?;
        for (k, &(_, v)) in rows.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PovError::Row {
                    path: path.into(),
                    row: k + 2,
                    message: format!("negative or invalid volume {v}"),
                });
            }
        }
        let grid = grid_from_starts(path, &rows)?;
        let volumes: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let total: f64 = volumes.iter().sum();
        Self::new(grid, volumes, adv.unwrap_or(total)).map_err(|e| PovError::File {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["minute", "volume"])?;
        for (k, v) in self.volumes.iter().enumerate() {
            w.write_record([fmt_num(self.grid.boundaries()[k]), fmt_num(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn accumulate(volumes: &[f64]) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(volumes.len() + 1);
    let mut acc = 0.0;
    cumulative.push(acc);
    for &v in volumes {
        acc += v;
        cumulative.push(acc);
    }
    cumulative
}

/// U-shaped intraday volume over the full session.
///
/// The intensity is `1 + skew * (2t/T - 1)^2`, integrated exactly over each
/// interval and normalized so the session total equals `adv`.
pub fn synth_u_shape_volume(grid: &TimeGrid, adv: f64, skew: f64) -> Result<VolumeProfile> {
    if !(adv > 0.0) {
        return Err(PovError::Parameter(format!("ADV must be positive, got {adv}")));
    }
    if !(skew >= 0.0) || !skew.is_finite() {
        return Err(PovError::Parameter(format!("skew must be >= 0, got {skew}")));
    }
    if grid.t_start().abs() > ALIGN_TOL || (grid.t_end() - SESSION_MINUTES).abs() > ALIGN_TOL {
        return Err(PovError::Parameter(format!(
            "U-shape profile needs a grid spanning [0, {SESSION_MINUTES}], got [{}, {}]",
            grid.t_start(),
            grid.t_end()
        )));
    }
    let t = SESSION_MINUTES;
    // antiderivative of 1 + skew*u^2 with u = 2s/T - 1
    let primitive = |s: f64| {
        let u = 2.0 * s / t - 1.0;
        s + skew * t / 6.0 * u * u * u
    };
    let b = grid.boundaries();
    let raw: Vec<f64> = b.windows(2).map(|w| primitive(w[1]) - primitive(w[0])).collect();
    let mass = primitive(t) - primitive(0.0);
    let volumes = raw.iter().map(|r| adv * r / mass).collect();
    VolumeProfile::new(grid.clone(), volumes, adv)
}

/// Mean spread per interval (currency units), with an optional spread
/// auto-covariance kernel.
#[derive(Debug, Clone)]
pub struct SpreadProfile {
    grid: TimeGrid,
    theta_bar: Vec<f64>,
    kernel: Option<crate::dynamics::KernelMatrix>,
}

impl SpreadProfile {
    pub fn new(grid: TimeGrid, theta_bar: Vec<f64>) -> Result<Self> {
        if theta_bar.len() != grid.n_intervals() {
            return Err(PovError::Profile(format!(
                "{} spreads for a grid of {} intervals",
                theta_bar.len(),
                grid.n_intervals()
            )));
        }
        if let Some(k) = theta_bar.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(PovError::Profile(format!(
                "interval {k} has invalid spread {}",
                theta_bar[k]
            )));
        }
        Ok(Self {
            grid,
            theta_bar,
            kernel: None,
        })
    }

    pub fn constant(grid: TimeGrid, theta: f64) -> Result<Self> {
        let n = grid.n_intervals();
        Self::new(grid, vec![theta; n])
    }

    /// Attach a spread auto-covariance kernel; it must live on the same grid
    /// and pass the PSD check.
    pub fn with_kernel(mut self, kernel: crate::dynamics::KernelMatrix) -> Result<Self> {
        ensure_same_grid(&self.grid, kernel.grid(), "spread kernel")?;
        let report = kernel.check_psd(crate::dynamics::DEFAULT_PSD_TOL);
        if !report.pass {
            return Err(PovError::Profile(format!(
                "spread kernel is not PSD (min eigenvalue {:.3e})",
                report.min_eig
            )));
        }
        self.kernel = Some(kernel);
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn kernel(&self) -> Option<&crate::dynamics::KernelMatrix> {
        self.kernel.as_ref()
    }

    pub fn slice(&self, t0: f64, t1: f64) -> Result<SpreadProfile> {
        let i0 = self
            .grid
            .boundary_index(t0)
            .ok_or_else(|| PovError::Profile(format!("slice start {t0} is not a grid boundary")))?;
        let i1 = self
            .grid
            .boundary_index(t1)
            .ok_or_else(|| PovError::Profile(format!("slice end {t1} is not a grid boundary")))?;
        if i1 <= i0 {
            return Err(PovError::Profile(format!("empty spread slice [{t0}, {t1}]")));
        }
        let kernel = self.kernel.as_ref().map(|k| k.sub_block(i0, i1));
        Ok(SpreadProfile {
            grid: self.grid.sub_grid(i0, i1),
            theta_bar: self.theta_bar[i0..i1].to_vec(),
            kernel,
        })
    }

    /// Load a `minute,theta_bar` CSV.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_two_column(path, "theta_bar")?;
        for (k, &(_, v)) in rows.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PovError::Row {
                    path: path.into(),
                    row: k + 2,
                    message: format!("negative or invalid spread {v}"),
                });
            }
        }
        let grid = grid_from_starts(path, &rows)?;
        Self::new(grid, rows.iter().map(|r| r.1).collect())
    }
}

#[derive(Deserialize)]
struct ProfileRow {
    minute: f64,
    #[serde(alias = "theta_bar")]
    volume: f64,
}

fn read_two_column(path: &Path, value_column: &str) -> Result<Vec<(f64, f64)>> {
    let file_err = |message: String| PovError::File {
        path: path.into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| file_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| file_err(e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(file_err("empty file".into()));
    }
    for required in ["minute", value_column] {
        if !headers.iter().any(|h| h == required) {
            return Err(file_err(format!(
                "missing column `{required}` (expected header `minute,{value_column}`)"
            )));
        }
    }
    let mut rows = Vec::new();
    for (k, record) in reader.deserialize::<ProfileRow>().enumerate() {
        let row = record.map_err(|e| PovError::Row {
            path: path.into(),
            row: k + 2,
            message: e.to_string(),
        })?;
        rows.push((row.minute, row.volume));
    }
    if rows.is_empty() {
        return Err(file_err("no data rows".into()));
    }
    Ok(rows)
}

/// Rows carry interval start minutes; the final interval gets the width of
/// the one before it (one minute for a single row).
fn grid_from_starts(path: &Path, rows: &[(f64, f64)]) -> Result<TimeGrid> {
    let mut boundaries: Vec<f64> = rows.iter().map(|r| r.0).collect();
    for k in 1..boundaries.len() {
        if !(boundaries[k] > boundaries[k - 1]) {
            return Err(PovError::Row {
                path: path.into(),
                row: k + 2,
                message: format!(
                    "minute {} does not increase over previous {}",
                    boundaries[k],
                    boundaries[k - 1]
                ),
            });
        }
    }
    let last_width = match boundaries.len() {
        1 => 1.0,
        n => boundaries[n - 1] - boundaries[n - 2],
    };
    let end = boundaries[boundaries.len() - 1] + last_width;
    boundaries.push(end);
    TimeGrid::from_boundaries(boundaries)
}

pub fn fmt_num(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x:?}")
}
