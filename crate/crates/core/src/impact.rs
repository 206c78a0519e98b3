//! Impact kernels, the combined operator, QP assembly and schedule evaluation.
//!
//! The discrete objective is `c^T H + H^T Q H` with
//! `Q = alpha1 D + D K_lambda D` and no extra factor of one half: the halves
//! of the transient and permanent terms already live inside `K_lambda`.
//! Its value equals `E[IS_$] + lambda VAR[IS_$]`.

use nalgebra::DMatrix;

use crate::calibrate::{schedule_features, FeatureParams, Features};
use crate::dynamics::{combined_risk_kernel, KernelKind, KernelMatrix};
use crate::error::{PovError, Result};
use crate::profiles::{ensure_same_grid, SpreadProfile, VolumeProfile};
use crate::qpsolve::QpProblem;

/// One basis point.
pub const BPS: f64 = 1e-4;

/// Default medium risk aversion.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// How the permanent-impact denominator is kept away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermanentRegularizer {
    /// `V + eps0`
    #[default]
    Soft,
    /// `max(V, eps0)`
    Hard,
}

/// Where cumulative volume in the permanent kernel starts counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolumeOrigin {
    #[default]
    HorizonStart,
    /// Include the market volume traded before the horizon began.
    MarketOpen,
}

/// Normalized cost coefficients plus the kernel scales.
///
/// `alpha0` is dimensionless; `alpha1..alpha3` are in bps of the arrival
/// price, i.e. the dollar coefficient is `alpha_i * p0 * BPS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCoefficients {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub v_star: f64,
    pub eps0: f64,
    pub p0: f64,
    pub regularizer: PermanentRegularizer,
    pub volume_origin: VolumeOrigin,
}

impl CostCoefficients {
    pub fn new(alpha: [f64; 4], v_star: f64, eps0: f64, p0: f64) -> Result<Self> {
        Self {
            alpha0: alpha[0],
            alpha1: alpha[1],
            alpha2: alpha[2],
            alpha3: alpha[3],
            v_star,
            eps0,
            p0,
            regularizer: PermanentRegularizer::Soft,
            volume_origin: VolumeOrigin::HorizonStart,
        }
        .validated()
    }

    /// `V* = eps0 = 1% ADV`.
    pub fn with_adv_defaults(alpha: [f64; 4], adv: f64, p0: f64) -> Result<Self> {
        Self::new(alpha, 0.01 * adv, 0.01 * adv, p0)
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |m: String| Err(PovError::Parameter(m));
        if !(self.alpha1 > 0.0) {
            return bad(format!("alpha1 must be > 0 for strict convexity, got {}", self.alpha1));
        }
        for (name, v) in [("alpha0", self.alpha0), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        for (name, v) in [("V*", self.v_star), ("eps0", self.eps0), ("p0", self.p0)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(self)
    }

    pub fn normalized(&self) -> [f64; 4] {
        [self.alpha0, self.alpha1, self.alpha2, self.alpha3]
    }

    /// Dollar-unit coefficients `[alpha0, alpha1 p0 bps, alpha2 p0 bps, alpha3 p0 bps]`.
    pub fn dollar(&self) -> [f64; 4] {
        let k = self.p0 * BPS;
        [self.alpha0, self.alpha1 * k, self.alpha2 * k, self.alpha3 * k]
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            v_star: self.v_star,
            eps0: self.eps0,
            regularizer: self.regularizer,
            volume_origin: self.volume_origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }

    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Side::Sell
        } else {
            Side::Buy
        }
    }
}

/// Client order over the horizon `[t0, t1]` (minutes since the open).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionOrder {
    pub x1: f64,
    pub side: Side,
    pub t0: f64,
    pub t1: f64,
    pub max_pov: f64,
    pub lambda: f64,
}

impl ExecutionOrder {
    pub fn new(x1: f64, t0: f64, t1: f64, max_pov: f64, lambda: f64) -> Result<Self> {
        if x1 == 0.0 || !x1.is_finite() {
            return Err(PovError::Parameter(format!("order size must be non-zero, got {x1}")));
        }
        if !(max_pov > 0.0 && max_pov <= 1.0) {
            return Err(PovError::Parameter(format!("maxPoV must lie in (0, 1], got {max_pov}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(PovError::Parameter(format!("risk aversion must be >= 0, got {lambda}")));
        }
        if !(t1 > t0) {
            return Err(PovError::Parameter(format!("horizon end {t1} must exceed start {t0}")));
        }
        Ok(Self {
            x1,
            side: Side::of(x1),
            t0,
            t1,
            max_pov,
            lambda,
        })
    }

    /// `maxPoV >= |X1| / V1`.
    pub fn check_compatibility(&self, horizon_volume: f64) -> Result<()> {
        let capacity = self.max_pov * horizon_volume;
        let required = self.x1.abs();
        if capacity < required * (1.0 - 1e-12) {
            return Err(PovError::Infeasible {
                capacity,
                required,
                min_pov: required / horizon_volume,
            });
        }
        Ok(())
    }
}

/// Cumulative volume at interval midpoints plus the configured origin shift.
fn midpoint_volumes(profile: &VolumeProfile, origin: VolumeOrigin) -> Vec<f64> {
    let shift = match origin {
        VolumeOrigin::HorizonStart => 0.0,
        VolumeOrigin::MarketOpen => profile.pre_horizon_volume(),
    };
    profile
        .midpoint_cumulative()
        .into_iter()
        .map(|v| v + shift)
        .collect()
}

/// `K2[i][j] = exp(-|V_i - V_j| / V*) / V*` at midpoint cumulative volumes.
pub fn transient_kernel(profile: &VolumeProfile, v_star: f64) -> Result<KernelMatrix> {
    if !(v_star > 0.0) {
        return Err(PovError::Parameter(format!("V* must be positive, got {v_star}")));
    }
    let v = profile.midpoint_cumulative();
    Ok(KernelMatrix::from_fn(profile.grid().clone(), KernelKind::Transient, |i, j| {
        (-(v[i] - v[j]).abs() / v_star).exp() / v_star
    }))
}

/// `K3[i][j] = 1 / (max(V_i, V_j) + eps0)`, or `1 / max(V_i, V_j, eps0)` for
/// the hard regularizer.
pub fn permanent_kernel(
    profile: &VolumeProfile,
    eps0: f64,
    regularizer: PermanentRegularizer,
    origin: VolumeOrigin,
) -> Result<KernelMatrix> {
    if !(eps0 > 0.0) {
        return Err(PovError::Parameter(format!("eps0 must be positive, got {eps0}")));
    }
    let v = midpoint_volumes(profile, origin);
    Ok(KernelMatrix::from_fn(profile.grid().clone(), KernelKind::Permanent, |i, j| {
        1.0 / permanent_denominator(v[i].max(v[j]), eps0, regularizer)
    }))
}

pub(crate) fn permanent_denominator(v: f64, eps0: f64, regularizer: PermanentRegularizer) -> f64 {
    match regularizer {
        PermanentRegularizer::Soft => v + eps0,
        PermanentRegularizer::Hard => v.max(eps0),
    }
}

/// `K_lambda = (alpha2/2) K2 + (alpha3/2) K3 + lambda K_risk`, dollar units.
pub fn combined_operator(
    k2: &KernelMatrix,
    k3: &KernelMatrix,
    k_risk: &KernelMatrix,
    coeffs: &CostCoefficients,
    lambda: f64,
) -> Result<KernelMatrix> {
    let [_, _, a2, a3] = coeffs.dollar();
    KernelMatrix::weighted_sum(
        &[(0.5 * a2, k2), (0.5 * a3, k3), (lambda, k_risk)],
        KernelKind::Combined,
    )
}

/// Build the QP over PoV rates `H`.
pub fn assemble_qp(
    order: &ExecutionOrder,
    profile: &VolumeProfile,
    spread: &SpreadProfile,
    k_lambda: &KernelMatrix,
    coeffs: &CostCoefficients,
) -> Result<QpProblem> {
    ensure_same_grid(profile.grid(), spread.grid(), "spread profile")?;
    ensure_same_grid(profile.grid(), k_lambda.grid(), "combined operator")?;
    order.check_compatibility(profile.total())?;

    let d = profile.volumes();
    let n = d.len();
    let fixed_zero: Vec<bool> = d.iter().map(|&v| v == 0.0).collect();
    if fixed_zero.iter().all(|&f| f) {
        return Err(PovError::Profile("no interval with market volume".into()));
    }
    let side = order.side.sign();
    let [a0, a1, _, _] = coeffs.dollar();

    let k = k_lambda.values();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = d[i] * k[(i, j)] * d[j];
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
        q[(i, i)] += a1 * d[i];
    }
    let c = (0..n)
        .map(|i| d[i] * a0 * side * spread.theta_bar()[i])
        .collect();
    let (lo, hi) = match order.side {
        Side::Buy => (0.0, order.max_pov),
        Side::Sell => (-order.max_pov, 0.0),
    };
    let lower = fixed_zero.iter().map(|&f| if f { 0.0 } else { lo }).collect();
    let upper = fixed_zero.iter().map(|&f| if f { 0.0 } else { hi }).collect();
    Ok(QpProblem {
        q,
        c,
        a_eq: d.to_vec(),
        b_eq: order.x1,
        lower,
        upper,
        fixed_zero,
    })
}

/// Expected-IS decomposition in bps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IsComponents {
    pub spread: f64,
    pub instantaneous: f64,
    pub transient: f64,
    pub permanent: f64,
}

impl IsComponents {
    pub fn total(&self) -> f64 {
        self.spread + self.instantaneous + self.transient + self.permanent
    }
}

/// A PoV schedule and its cost/risk evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub h: Vec<f64>,
    pub shares: Vec<f64>,
    /// Executed shares at the end of each interval.
    pub x_cum: Vec<f64>,
    pub features: Features,
    pub components: IsComponents,
    pub expected_is_bps: f64,
    pub expected_is_dollar: f64,
    pub variance_dollar: f64,
    pub stdev_bps: f64,
    pub objective: f64,
}

impl Schedule {
    /// Execution-volume centroid in minutes since the horizon start.
    pub fn centroid(&self, grid: &crate::profiles::TimeGrid) -> f64 {
        let tau = grid.relative_midpoints();
        let total: f64 = self.shares.iter().sum();
        self.shares.iter().zip(&tau).map(|(x, t)| x * t).sum::<f64>() / total
    }
}

/// Everything needed to price and optimize one order.
#[derive(Debug, Clone)]
pub struct ExecutionModel {
    pub order: ExecutionOrder,
    pub profile: VolumeProfile,
    pub spread: SpreadProfile,
    pub coeffs: CostCoefficients,
    /// `K_delta + alpha0^2 K_theta`, currency squared.
    pub risk: KernelMatrix,
    pub transient: KernelMatrix,
    pub permanent: KernelMatrix,
    pub k_lambda: KernelMatrix,
}

impl ExecutionModel {
    /// `profile` and `spread` must already cover the order horizon; `k_delta`
    /// is the price-risk kernel on the same grid.
    pub fn new(
        order: ExecutionOrder,
        profile: VolumeProfile,
        spread: SpreadProfile,
        k_delta: &KernelMatrix,
        coeffs: CostCoefficients,
    ) -> Result<Self> {
        let coeffs = coeffs.validated()?;
        ensure_same_grid(profile.grid(), spread.grid(), "spread profile")?;
        ensure_same_grid(profile.grid(), k_delta.grid(), "price-risk kernel")?;
        let risk = combined_risk_kernel(k_delta, spread.kernel(), coeffs.alpha0)?;
        let transient = transient_kernel(&profile, coeffs.v_star)?;
        let permanent =
            permanent_kernel(&profile, coeffs.eps0, coeffs.regularizer, coeffs.volume_origin)?;
        let k_lambda = combined_operator(&transient, &permanent, &risk, &coeffs, order.lambda)?;
        Ok(Self {
            order,
            profile,
            spread,
            coeffs,
            risk,
            transient,
            permanent,
            k_lambda,
        })
    }

    pub fn assemble_qp(&self) -> Result<QpProblem> {
        assemble_qp(&self.order, &self.profile, &self.spread, &self.k_lambda, &self.coeffs)
    }

    /// Price a PoV vector. Evaluation is total: it does not require `h` to
    /// complete the order.
    pub fn evaluate(&self, h: &[f64]) -> Schedule {
        let d = self.profile.volumes();
        assert_eq!(h.len(), d.len(), "schedule length must match the profile");
        let shares: Vec<f64> = h.iter().zip(d).map(|(h, d)| h * d).collect();
        let x_cum: Vec<f64> = shares
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        let features = schedule_features(
            &self.profile,
            &self.spread,
            h,
            self.order.x1,
            self.coeffs.p0,
            &self.coeffs.feature_params(),
        );
        let a = self.coeffs.normalized();
        let components = IsComponents {
            spread: a[0] * features.c[0],
            instantaneous: a[1] * features.c[1],
            transient: a[2] * features.c[2],
            permanent: a[3] * features.c[3],
        };
        let expected_is_bps = components.total();
        let notional_bps = self.coeffs.p0 * self.order.x1.abs() * BPS;
        let expected_is_dollar = expected_is_bps * notional_bps;
        let variance_dollar = self.risk.quadratic_form(&shares);
        Schedule {
            h: h.to_vec(),
            shares,
            x_cum,
            features,
            components,
            expected_is_bps,
            expected_is_dollar,
            variance_dollar,
            stdev_bps: variance_dollar.max(0.0).sqrt() / notional_bps,
            objective: expected_is_dollar + self.order.lambda * variance_dollar,
        }
    }
}
