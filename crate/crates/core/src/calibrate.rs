//! Regression features, heteroskedastic WLS calibration and synthetic trades.
//!
//! The expected IS of a schedule in bps is linear in the normalized
//! coefficients: `E[IS_bps] = sum_i alpha_i C_i[h]`. The features `C_i` here
//! are the single definition shared with the optimizer's cost decomposition.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{brownian_kernel, KernelMatrix};
use crate::error::{PovError, Result};
use crate::impact::{permanent_denominator, PermanentRegularizer, Side, VolumeOrigin, BPS};
use crate::profiles::{
    ensure_same_grid, fmt_num, synth_u_shape_volume, SpreadProfile, TimeGrid, VolumeProfile,
    SESSION_MINUTES,
};

pub const FEATURE_NAMES: [&str; 4] = ["C0_spread", "C1_instantaneous", "C2_transient", "C3_permanent"];

/// Minimum trade length kept for calibration, minutes.
pub const MIN_DURATION: f64 = 5.0;
/// Minimum average PoV kept for calibration.
pub const MIN_AVG_POV: f64 = 0.001;
/// Allowed relative gap between executed and ordered shares.
pub const COMPLETION_TOL: f64 = 0.005;

/// Kernel scales entering the transient and permanent features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub v_star: f64,
    pub eps0: f64,
    pub regularizer: PermanentRegularizer,
    pub volume_origin: VolumeOrigin,
}

impl FeatureParams {
    pub fn with_adv_defaults(adv: f64) -> Self {
        Self {
            v_star: 0.01 * adv,
            eps0: 0.01 * adv,
            regularizer: PermanentRegularizer::Soft,
            volume_origin: VolumeOrigin::HorizonStart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Features {
    pub c: [f64; 4],
}

/// `C0..C3` for the PoV vector `h` of an order of `x1` shares.
///
/// With `x_n = h_n d_n` and midpoint cumulative volumes `V_n`:
/// `C0 = sum theta_n x_n / X1` (spread in bps of `p0`),
/// `C1 = sum h_n x_n / |X1|`,
/// `C2 = sum_i x_i (sum_{j<i} e^{-(V_i - V_j)/V*} x_j + x_i / 2) / (V* |X1|)`,
/// `C3 = sum_i x_i (X_{i-1} + x_i / 2) / ((V_i + eps0) |X1|)`.
/// The half-weight on the diagonal makes the lower-triangular sums equal half
/// of the symmetric double sums.
pub fn schedule_features(
    profile: &VolumeProfile,
    spread: &SpreadProfile,
    h: &[f64],
    x1: f64,
    p0: f64,
    params: &FeatureParams,
) -> Features {
    let d = profile.volumes();
    let v = profile.midpoint_cumulative();
    let shift = match params.volume_origin {
        VolumeOrigin::HorizonStart => 0.0,
        VolumeOrigin::MarketOpen => profile.pre_horizon_volume(),
    };
    let abs_x1 = x1.abs();
    let theta_unit = p0 * BPS;

    let mut c = [0.0; 4];
    let mut decayed = 0.0;
    let mut executed = 0.0;
    for n in 0..d.len() {
        let x = h[n] * d[n];
        if n > 0 {
            decayed = (decayed + h[n - 1] * d[n - 1]) * (-(v[n] - v[n - 1]) / params.v_star).exp();
        }
        c[0] += spread.theta_bar()[n] / theta_unit * x;
        c[1] += h[n] * x;
        c[2] += x * (decayed + 0.5 * x);
        let den = permanent_denominator(v[n] + shift, params.eps0, params.regularizer);
        c[3] += x * (executed + 0.5 * x) / den;
        executed += x;
    }
    Features {
        c: [
            c[0] / x1,
            c[1] / abs_x1,
            c[2] / (params.v_star * abs_x1),
            c[3] / abs_x1,
        ],
    }
}

/// One executed trade.
#[derive(Debug, Clone)]
pub struct TradeRecord {
    pub id: String,
    pub profile: VolumeProfile,
    pub spread: SpreadProfile,
    pub h: Vec<f64>,
    pub x1: f64,
    pub p0: f64,
    pub realized_is_bps: f64,
}

impl TradeRecord {
    /// Structural checks: shapes, grids, monotone fills and completion.
    pub fn new(
        id: impl Into<String>,
        profile: VolumeProfile,
        spread: SpreadProfile,
        h: Vec<f64>,
        x1: f64,
        p0: f64,
        realized_is_bps: f64,
    ) -> Result<Self> {
        let id = id.into();
        ensure_same_grid(profile.grid(), spread.grid(), "trade spread")?;
        if h.len() != profile.len() {
            return Err(PovError::Parameter(format!(
                "trade {id}: {} PoV values for {} intervals",
                h.len(),
                profile.len()
            )));
        }
        if x1 == 0.0 || !(p0 > 0.0) {
            return Err(PovError::Parameter(format!("trade {id}: need X1 != 0 and p0 > 0")));
        }
        let side = Side::of(x1).sign();
        if let Some(k) = h.iter().position(|v| side * v < 0.0 || !v.is_finite()) {
            return Err(PovError::Parameter(format!(
                "trade {id}: interval {k} trades against the order side"
            )));
        }
        let trade = Self {
            id,
            profile,
            spread,
            h,
            x1,
            p0,
            realized_is_bps,
        };
        let executed = trade.executed();
        if (executed - x1).abs() > COMPLETION_TOL * x1.abs() {
            return Err(PovError::Filtered(format!(
                "trade {}: executed {executed:.1} of {x1} shares (partial fill)",
                trade.id
            )));
        }
        Ok(trade)
    }

    pub fn side(&self) -> Side {
        Side::of(self.x1)
    }

    pub fn executed(&self) -> f64 {
        self.h.iter().zip(self.profile.volumes()).map(|(h, d)| h * d).sum()
    }

    pub fn duration_minutes(&self) -> f64 {
        self.profile.grid().t_end() - self.profile.grid().t_start()
    }

    pub fn avg_pov(&self) -> f64 {
        self.x1.abs() / self.profile.total()
    }

    /// Why the trade is excluded from calibration, if it is.
    pub fn filter_reason(&self) -> Option<String> {
        if self.duration_minutes() < MIN_DURATION {
            return Some(format!(
                "duration {:.1} min below {MIN_DURATION} min",
                self.duration_minutes()
            ));
        }
        if self.avg_pov() < MIN_AVG_POV {
            return Some(format!(
                "average PoV {:.5} below {MIN_AVG_POV}",
                self.avg_pov()
            ));
        }
        None
    }

    pub fn shares(&self) -> Vec<f64> {
        self.h.iter().zip(self.profile.volumes()).map(|(h, d)| h * d).collect()
    }
}

pub fn compute_features(trade: &TradeRecord, params: &FeatureParams) -> Result<Features> {
    if let Some(reason) = trade.filter_reason() {
        return Err(PovError::Filtered(format!("trade {}: {reason}", trade.id)));
    }
    Ok(schedule_features(
        &trade.profile,
        &trade.spread,
        &trade.h,
        trade.x1,
        trade.p0,
        params,
    ))
}

/// Variance of the trade's IS in bps: `x^T K x / (p0 |X1| bps)^2`, floored.
pub fn trade_weight(trade: &TradeRecord, k_risk: &KernelMatrix, floor: f64) -> Result<f64> {
    ensure_same_grid(trade.profile.grid(), k_risk.grid(), "risk kernel")?;
    let var = k_risk.quadratic_form(&trade.shares());
    let notional = trade.p0 * trade.x1.abs() * BPS;
    Ok((var / (notional * notional)).max(floor))
}

/// Default variance floor for [`trade_weight`], bps squared.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub alpha: [f64; 4],
    pub covariance: [[f64; 4]; 4],
    pub r_squared: f64,
    pub n_trades: usize,
    pub condition_number: f64,
    pub sigma2: f64,
}

impl CalibrationResult {
    pub fn std_errors(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.covariance[i][i].max(0.0).sqrt())
    }

    /// `coefficient,estimate,std_error`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["coefficient", "estimate", "std_error"])?;
        let se = self.std_errors();
        for (i, name) in ["alpha0", "alpha1", "alpha2", "alpha3"].iter().enumerate() {
            w.write_record([name.to_string(), fmt_num(self.alpha[i]), fmt_num(se[i])])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Design matrices beyond this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// Weighted least squares of `y ~ sum alpha_i C_i` with weights
/// `1 / variance`. The covariance is `(X^T W X)^{-1} sigma2` with
/// `sigma2 = weighted RSS / (n - 4)`; with exactly four trades `sigma2 = 1`.
pub fn wls_fit(features: &[Features], is_bps: &[f64], variances: &[f64]) -> Result<CalibrationResult> {
    let n = features.len();
    if is_bps.len() != n || variances.len() != n {
        return Err(PovError::Parameter("features, IS and variances differ in length".into()));
    }
    if n < 4 {
        return Err(PovError::Parameter(format!("need at least 4 trades, got {n}")));
    }
    if let Some(k) = variances.iter().position(|v| !(*v > 0.0)) {
        return Err(PovError::Parameter(format!("trade {k} has non-positive variance")));
    }
    let sw: Vec<f64> = variances.iter().map(|v| 1.0 / v.sqrt()).collect();
    let x = DMatrix::from_fn(n, 4, |r, c| features[r].c[c] * sw[r]);
    let y = DVector::from_fn(n, |r, _| is_bps[r] * sw[r]);

    // condition number of the column-equilibrated design
    let norms: Vec<f64> = (0..4).map(|c| x.column(c).norm()).collect();
    if let Some(c) = norms.iter().position(|&v| v == 0.0) {
        let other = if c == 0 { 1 } else { 0 };
        return Err(PovError::RankDeficient {
            condition: f64::INFINITY,
            first: FEATURE_NAMES[c],
            second: FEATURE_NAMES[other],
        });
    }
    let xn = DMatrix::from_fn(n, 4, |r, c| x[(r, c)] / norms[c]);
    let sv = xn.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        let mut pair = (0, 1);
        let mut best = -1.0;
        for a in 0..4 {
            for b in a + 1..4 {
                let cos = xn.column(a).dot(&xn.column(b)).abs();
                if cos > best {
                    best = cos;
                    pair = (a, b);
                }
            }
        }
        return Err(PovError::RankDeficient {
            condition,
            first: FEATURE_NAMES[pair.0],
            second: FEATURE_NAMES[pair.1],
        });
    }

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| PovError::Parameter("singular triangular factor".into()))?;
    let _ = xty;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = if n > 4 { rss / (n - 4) as f64 } else { 1.0 };
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| PovError::Parameter("normal matrix is singular".into()))?;

    let wsum: f64 = sw.iter().map(|s| s * s).sum();
    let ybar = is_bps.iter().zip(&sw).map(|(y, s)| y * s * s).sum::<f64>() / wsum;
    let tss: f64 = is_bps
        .iter()
        .zip(&sw)
        .map(|(y, s)| (y - ybar).powi(2) * s * s)
        .sum();
    let mut covariance = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = 0.5 * (inv[(i, j)] + inv[(j, i)]) * sigma2;
        }
    }
    Ok(CalibrationResult {
        alpha: std::array::from_fn(|i| beta[i]),
        covariance,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        n_trades: n,
        condition_number: condition,
        sigma2,
    })
}

/// A trade left out of a calibration run, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub result: CalibrationResult,
    pub excluded: Vec<Exclusion>,
    pub mixed_sides: bool,
}

/// Filter, featurize, weight and fit. `risk` builds the price-risk kernel for
/// a trade's grid and arrival price.
pub fn calibrate<F>(
    trades: &[TradeRecord],
    params: &FeatureParams,
    risk: F,
    variance_floor: f64,
) -> Result<CalibrationRun>
where
    F: Fn(&TimeGrid, f64) -> Result<KernelMatrix> + Sync,
{
    let rows: Vec<std::result::Result<(Features, f64, f64, Side), Exclusion>> = trades
        .par_iter()
        .map(|t| {
            let exclude = |reason: String| Exclusion {
                id: t.id.clone(),
                reason,
            };
            if let Some(r) = t.filter_reason() {
                return Err(exclude(r));
            }
            let f = compute_features(t, params).map_err(|e| exclude(e.to_string()))?;
            let k = risk(t.profile.grid(), t.p0).map_err(|e| exclude(e.to_string()))?;
            let w = trade_weight(t, &k, variance_floor).map_err(|e| exclude(e.to_string()))?;
            Ok((f, t.realized_is_bps, w, t.side()))
        })
        .collect();
    let mut features = Vec::new();
    let mut is_bps = Vec::new();
    let mut variances = Vec::new();
    let mut sides = Vec::new();
    let mut excluded = Vec::new();
    for row in rows {
        match row {
            Ok((f, y, w, s)) => {
                features.push(f);
                is_bps.push(y);
                variances.push(w);
                sides.push(s);
            }
            Err(e) => excluded.push(e),
        }
    }
    if features.is_empty() {
        return Err(PovError::Filtered(format!(
            "no trades left after filtering ({} excluded)",
            excluded.len()
        )));
    }
    let mixed_sides = sides.iter().any(|&s| s != sides[0]);
    let result = wls_fit(&features, &is_bps, &variances)?;
    Ok(CalibrationRun {
        result,
        excluded,
        mixed_sides,
    })
}

/// Settings for [`synth_trades`].
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Full-session volume profile the trade horizons are cut from.
    pub day_volume: VolumeProfile,
    /// Full-session mean spread (currency units at `p0_reference`).
    pub spread_bps: Vec<f64>,
    pub params: FeatureParams,
    /// Brownian volatility per sqrt-minute used for the IS noise.
    pub sigma0: f64,
    /// Multiplies the noise standard deviation; 0 gives noiseless trades.
    pub noise_scale: f64,
    pub p0_range: (f64, f64),
    pub duration_range: (usize, usize),
    pub pov_range: (f64, f64),
    /// Probability that a trade is a sell.
    pub sell_fraction: f64,
}

impl SynthConfig {
    /// U-shaped day (skew 1, 5M ADV), spreads of 4-10 bps higher at the
    /// open, sigma0 = 5e-5 per sqrt-minute.
    pub fn standard() -> Self {
        let grid = TimeGrid::uniform(0.0, SESSION_MINUTES, 1.0).expect("static grid");
        let adv = 5_000_000.0;
        let day_volume = synth_u_shape_volume(&grid, adv, 1.0).expect("static profile");
        let spread_bps = (0..grid.n_intervals())
            .map(|k| {
                let u = 2.0 * grid.midpoint(k) / SESSION_MINUTES - 1.0;
                4.0 + 6.0 * u * u * (if u < 0.0 { 1.0 } else { 0.5 })
            })
            .collect();
        Self {
            day_volume,
            spread_bps,
            params: FeatureParams::with_adv_defaults(adv),
            sigma0: 5e-5,
            noise_scale: 1.0,
            p0_range: (20.0, 80.0),
            duration_range: (30, 390),
            pov_range: (0.005, 0.25),
            sell_fraction: 0.5,
        }
    }

    pub fn risk_kernel(&self, grid: &TimeGrid, p0: f64) -> Result<KernelMatrix> {
        brownian_kernel(grid, self.sigma0, p0)
    }

    /// The day's mean spread in currency at arrival price `p0`.
    pub fn day_spread(&self, p0: f64) -> Result<SpreadProfile> {
        let theta = self.spread_bps.iter().map(|b| b * p0 * BPS).collect();
        SpreadProfile::new(self.day_volume.grid().clone(), theta)
    }
}

/// Execution shapes drawn by the generator.
fn shape_weights(kind: u32, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pos = |k: usize| (k as f64 + 0.5) / n as f64;
    match kind {
        0 => vec![1.0; n],
        1 => {
            let tilt = rng.random_range(0.5..4.0);
            (0..n).map(|k| (-tilt * pos(k)).exp()).collect()
        }
        2 => {
            let tilt = rng.random_range(0.5..4.0);
            (0..n).map(|k| (tilt * pos(k)).exp()).collect()
        }
        3 => {
            let edge = rng.random_range(2.0..8.0);
            (0..n)
                .map(|k| 1.0 + edge * ((-20.0 * pos(k)).exp() + (-20.0 * (1.0 - pos(k))).exp()))
                .collect()
        }
        4 => {
            let centre = rng.random_range(0.2..0.8);
            (0..n)
                .map(|k| 0.1 + (-((pos(k) - centre) / 0.15).powi(2)).exp())
                .collect()
        }
        5 => {
            // front burst: most of the order in an opening block
            let block = rng.random_range(0.05..0.3);
            (0..n).map(|k| if pos(k) < block { 1.0 } else { 0.1 }).collect()
        }
        _ => {
            let blocks = rng.random_range(3..8usize);
            let levels: Vec<f64> = (0..blocks).map(|_| rng.random_range(0.05..1.0)).collect();
            (0..n).map(|k| levels[(pos(k) * blocks as f64) as usize % blocks]).collect()
        }
    }
}

/// Deterministic synthetic trade database. Trade `k` uses ChaCha8 stream `k`
/// keyed by `seed`. Realized IS is the model value plus Gaussian noise with
/// the Brownian IS variance scaled by `noise_scale^2`.
pub fn synth_trades(
    alpha_true: [f64; 4],
    n: usize,
    config: &SynthConfig,
    seed: u64,
) -> Result<Vec<TradeRecord>> {
    if n == 0 {
        return Err(PovError::Parameter("need at least one trade".into()));
    }
    let day_grid = config.day_volume.grid().clone();
    let minutes = day_grid.n_intervals();
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (dmin, dmax) = config.duration_range;
            let duration = rng.random_range(dmin.max(5)..=dmax.min(minutes));
            let start = rng.random_range(0..=minutes - duration);
            let t0 = day_grid.boundaries()[start];
            let t1 = day_grid.boundaries()[start + duration];
            let profile = config.day_volume.slice(t0, t1)?;
            let p0 = rng.random_range(config.p0_range.0..=config.p0_range.1);
            let spread_theta: Vec<f64> = config.spread_bps[start..start + duration]
                .iter()
                .map(|b| b * p0 * BPS)
                .collect();
            let spread = SpreadProfile::new(profile.grid().clone(), spread_theta)?;

            let (plo, phi) = config.pov_range;
            let pov = (plo.ln() + rng.random::<f64>() * (phi / plo).ln()).exp();
            let side = if rng.random::<f64>() < config.sell_fraction { -1.0 } else { 1.0 };
            let x_abs = pov * profile.total();
            let shape = shape_weights(rng.random_range(0..7), duration, &mut rng);
            let d = profile.volumes();
            // blend toward uniform until no interval exceeds 60% PoV
            let mut h = Vec::new();
            for blend in 0..=10 {
                let t = blend as f64 / 10.0;
                let w: Vec<f64> = shape.iter().map(|s| (1.0 - t) * s + t).collect();
                let mass: f64 = w.iter().zip(d).map(|(w, d)| w * d).sum();
                h = w.iter().map(|w| w * x_abs / mass).collect();
                if h.iter().all(|&v| v <= 0.6) {
                    break;
                }
            }
            let h: Vec<f64> = h.into_iter().map(|v| side * v).collect();
            let x1: f64 = side * h.iter().zip(d).map(|(h, d)| h.abs() * d).sum::<f64>();

            let f = schedule_features(&profile, &spread, &h, x1, p0, &config.params);
            let model: f64 = (0..4).map(|i| alpha_true[i] * f.c[i]).sum();
            let noise = if config.noise_scale > 0.0 {
                let k_risk = config.risk_kernel(profile.grid(), p0)?;
                let x: Vec<f64> = h.iter().zip(d).map(|(h, d)| h * d).collect();
                let notional = p0 * x1.abs() * BPS;
                let sd = (k_risk.quadratic_form(&x)).max(0.0).sqrt() / notional;
                let z: f64 = StandardNormal.sample(&mut rng);
                config.noise_scale * sd * z
            } else {
                0.0
            };
            TradeRecord::new(format!("T{k:05}"), profile, spread, h, x1, p0, model + noise)
        })
        .collect()
}

/// Write the two-table trade database: `trades.csv`
/// (`trade_id,X1,side,p0,is_bps`) and `intervals.csv`
/// (`trade_id,interval_index,minute,d_n,h_n`).
pub fn write_trade_db(trades: &[TradeRecord], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut head = csv::Writer::from_path(dir.join("trades.csv"))?;
    head.write_record(["trade_id", "X1", "side", "p0", "is_bps"])?;
    let mut rows = csv::Writer::from_path(dir.join("intervals.csv"))?;
    rows.write_record(["trade_id", "interval_index", "minute", "d_n", "h_n"])?;
    for t in trades {
        head.write_record([
            t.id.clone(),
            fmt_num(t.x1),
            (t.side().sign() as i32).to_string(),
            fmt_num(t.p0),
            fmt_num(t.realized_is_bps),
        ])?;
        for (k, (h, d)) in t.h.iter().zip(t.profile.volumes()).enumerate() {
            rows.write_record([
                t.id.clone(),
                k.to_string(),
                fmt_num(t.profile.grid().boundaries()[k]),
                fmt_num(*d),
                fmt_num(*h),
            ])?;
        }
    }
    head.flush()?;
    rows.flush()?;
    Ok(())
}

/// Result of reading a trade database: valid trades plus the ones that could
/// not be built, each with a reason.
#[derive(Debug, Clone)]
pub struct TradeDb {
    pub trades: Vec<TradeRecord>,
    pub rejected: Vec<Exclusion>,
}

#[derive(serde::Deserialize)]
struct HeaderRow {
    trade_id: String,
    #[serde(rename = "X1")]
    x1: f64,
    side: f64,
    p0: f64,
    is_bps: f64,
}

#[derive(serde::Deserialize)]
struct IntervalRow {
    trade_id: String,
    interval_index: usize,
    minute: f64,
    d_n: f64,
    h_n: f64,
}

/// Read a trade database written by [`write_trade_db`]. `spread_at` gives
/// the mean spread (currency units) for a trade's arrival price and a
/// minute since the open.
pub fn read_trade_db(
    dir: impl AsRef<Path>,
    spread_at: impl Fn(f64, f64) -> f64,
) -> Result<TradeDb> {
    let dir = dir.as_ref();
    let head_path = dir.join("trades.csv");
    let rows_path = dir.join("intervals.csv");
    let mut rejected = Vec::new();

    let mut headers: BTreeMap<String, HeaderRow> = BTreeMap::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&head_path)?;
    for (k, rec) in reader.deserialize::<HeaderRow>().enumerate() {
        let row = rec.map_err(|e| PovError::Row {
            path: head_path.clone(),
            row: k + 2,
            message: e.to_string(),
        })?;
        headers.insert(row.trade_id.clone(), row);
    }
    if headers.is_empty() {
        return Err(PovError::File {
            path: head_path,
            message: "no trades".into(),
        });
    }

    let mut intervals: BTreeMap<String, Vec<(usize, IntervalRow)>> = BTreeMap::new();
    let mut broken: BTreeMap<String, String> = BTreeMap::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&rows_path)?;
    for (k, rec) in reader.deserialize::<IntervalRow>().enumerate() {
        let line = k + 2;
        match rec {
            Ok(row) => {
                if !(row.d_n >= 0.0) {
                    broken
                        .entry(row.trade_id.clone())
                        .or_insert(format!("intervals.csv row {line}: negative volume {}", row.d_n));
                }
                intervals.entry(row.trade_id.clone()).or_default().push((line, row));
            }
            Err(e) => {
                return Err(PovError::Row {
                    path: rows_path.clone(),
                    row: line,
                    message: e.to_string(),
                })
            }
        }
    }

    let mut trades = Vec::new();
    for (id, head) in headers {
        if let Some(reason) = broken.remove(&id) {
            rejected.push(Exclusion { id, reason });
            continue;
        }
        let Some(mut rows) = intervals.remove(&id) else {
            rejected.push(Exclusion {
                id,
                reason: "no interval rows".into(),
            });
            continue;
        };
        rows.sort_by_key(|(_, r)| r.interval_index);
        let built = (|| -> Result<TradeRecord> {
            if (head.side - Side::of(head.x1).sign()).abs() > 0.0 {
                return Err(PovError::Parameter(format!(
                    "side {} disagrees with X1 {}",
                    head.side, head.x1
                )));
            }
            if let Some((line, _)) = rows
                .iter()
                .enumerate()
                .find(|(k, (_, r))| r.interval_index != *k)
                .map(|(_, r)| r)
            {
                return Err(PovError::Parameter(format!(
                    "intervals.csv row {line}: interval indices are not contiguous"
                )));
            }
            let starts: Vec<f64> = rows.iter().map(|(_, r)| r.minute).collect();
            let last_width = if starts.len() > 1 {
                starts[starts.len() - 1] - starts[starts.len() - 2]
            } else {
                1.0
            };
            let mut bounds = starts.clone();
            bounds.push(starts[starts.len() - 1] + last_width);
            let grid = TimeGrid::from_boundaries(bounds)?;
            let d: Vec<f64> = rows.iter().map(|(_, r)| r.d_n).collect();
            let total: f64 = d.iter().sum();
            let profile = VolumeProfile::new(grid.clone(), d, total)?;
            let theta = (0..grid.n_intervals())
                .map(|k| spread_at(head.p0, grid.midpoint(k)))
                .collect();
            let spread = SpreadProfile::new(grid, theta)?;
            let h = rows.iter().map(|(_, r)| r.h_n).collect();
            TradeRecord::new(id.clone(), profile, spread, h, head.x1, head.p0, head.is_bps)
        })();
        match built {
            Ok(t) => trades.push(t),
            Err(e) => rejected.push(Exclusion {
                id,
                reason: e.to_string(),
            }),
        }
    }
    for (id, _) in intervals {
        rejected.push(Exclusion {
            id,
            reason: "interval rows without a header row".into(),
        });
    }
    Ok(TradeDb { trades, rejected })
}
