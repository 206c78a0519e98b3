//! Scenario configuration: a flat `key = value` text format with dotted
//! section keys, built-in presets, and the glue that turns a scenario into a
//! solved schedule.
//!
//! ```text
//! # comments start with '#'
//! preset = ra_medium        # optional: start from a built-in scenario
//! order.x1 = 90000          # signed shares, negative sells
//! order.t0 = 105            # minutes since the open
//! order.duration = 90
//! order.max_pov = 0.2
//! order.lambda = 1e-3       # 1 / currency
//! market.p0 = 30
//! market.adv = 5000000
//! market.skew = 1.0         # U-shape bowl depth, 0 is flat
//! market.spread_bps = 5.5   # constant mean spread, bps of p0
//! cost.alpha0 = 0.35        # normalized coefficients
//! dynamics.model = brownian # brownian | mean_reversion | asv | file
//! dynamics.sigma0 = 5e-5    # per sqrt-minute
//! ```
//!
//! The full key list is in [`KEYS`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::calibrate::FeatureParams;
use crate::dynamics::{
    brownian_kernel, estimate_kernel, mean_reversion_kernel, KernelKind, KernelMatrix, PsdRepair,
    SdeModel, SdeSpec, DEFAULT_SUBSTEPS,
};
use crate::error::{PovError, Result};
use crate::impact::{
    CostCoefficients, ExecutionModel, ExecutionOrder, PermanentRegularizer, Schedule,
    VolumeOrigin, BPS,
};
use crate::profiles::{synth_u_shape_volume, SpreadProfile, TimeGrid, VolumeProfile, SESSION_MINUTES};
use crate::qpsolve::{solve, QpSolution, SolverSettings};

/// Every accepted key with its meaning.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "built-in scenario to start from"),
    ("name", "label used in reports"),
    ("order.x1", "signed order size in shares (negative sells)"),
    ("order.t0", "horizon start, minutes since the open"),
    ("order.duration", "horizon length in minutes"),
    ("order.max_pov", "participation cap in (0, 1]"),
    ("order.lambda", "risk aversion, 1/currency"),
    ("market.p0", "arrival price"),
    ("market.adv", "average daily volume in shares"),
    ("market.skew", "U-shape depth of the synthetic volume profile"),
    ("market.dt", "grid step in minutes for the synthetic profile"),
    ("market.volume_csv", "full-session volume profile (minute,volume); overrides skew"),
    ("market.spread_bps", "constant mean spread in bps of p0"),
    ("market.spread_csv", "full-session mean spread (minute,theta_bar) in currency"),
    ("cost.alpha0", "spread coefficient"),
    ("cost.alpha1", "instantaneous impact, bps (must be > 0)"),
    ("cost.alpha2", "transient impact, bps"),
    ("cost.alpha3", "permanent impact, bps"),
    ("cost.v_star", "transient decay window in shares (default 1% ADV)"),
    ("cost.eps0", "permanent regularizer in shares (default 1% ADV)"),
    ("cost.regularizer", "soft | hard"),
    ("cost.volume_origin", "horizon | open: where cumulative volume starts"),
    ("dynamics.model", "brownian | mean_reversion | asv | file"),
    ("dynamics.method", "closed_form | monte_carlo (brownian, mean_reversion)"),
    ("dynamics.sigma0", "volatility per sqrt-minute"),
    ("dynamics.kappa", "mean-reversion speed per minute"),
    ("dynamics.alpha", "mean-reversion diffusion per sqrt-minute"),
    ("dynamics.beta", "ASV asymmetry"),
    ("dynamics.cap", "ASV volatility cap multiple"),
    ("dynamics.kernel_csv", "price-risk kernel (i,j,value) on the horizon grid"),
    ("dynamics.paths", "Monte-Carlo paths"),
    ("dynamics.substeps", "Euler steps per interval"),
    ("dynamics.seed", "Monte-Carlo seed"),
    ("solver.tol_kkt", "stationarity tolerance"),
    ("solver.max_iter", "iteration limit"),
    ("calibrate.variance_floor", "minimum trade IS variance in bps^2"),
    ("output.dir", "output directory"),
];

const BASELINE: &str = "\
name = baseline
order.x1 = 90000
order.t0 = 105
order.duration = 90
order.max_pov = 0.2
order.lambda = 1e-3
market.p0 = 30
market.adv = 5000000
market.skew = 1.0
market.dt = 1
market.spread_bps = 5.5
cost.alpha0 = 0.35
cost.alpha1 = 8
cost.alpha2 = 5
cost.alpha3 = 3
cost.regularizer = soft
cost.volume_origin = horizon
dynamics.model = brownian
dynamics.method = closed_form
dynamics.sigma0 = 5e-5
dynamics.kappa = 0.05
dynamics.beta = 1000
dynamics.cap = 2.0
dynamics.paths = 40000
dynamics.substeps = 10
dynamics.seed = 20240101
";

/// Built-in scenarios as overrides of the baseline.
pub const PRESETS: &[(&str, &str)] = &[
    ("baseline", ""),
    ("ra_low", "order.lambda = 1e-5"),
    ("ra_medium", "order.lambda = 1e-3"),
    ("ra_high", "order.lambda = 1e-1"),
    ("vol_morning", "order.t0 = 0"),
    ("vol_noon", "order.t0 = 150"),
    ("vol_afternoon", "order.t0 = 300"),
    ("boost_inst", "cost.alpha1 = 80"),
    ("boost_tran", "cost.alpha2 = 50"),
    ("boost_perm", "cost.alpha3 = 30"),
    // alpha chosen so alpha^2 / (2 kappa) = sigma0^2 * 90 min
    ("dyn_mr", "dynamics.model = mean_reversion\ndynamics.alpha = 1.5e-4"),
    ("dyn_asv", "dynamics.model = asv"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Parsed key-value pairs with their source line numbers.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
    base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text, true)?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let overrides = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                PovError::Parameter(format!(
                    "unknown preset '{name}' (available: {})",
                    preset_names().collect::<Vec<_>>().join(", ")
                ))
            })?;
        let mut cfg = Self::default();
        cfg.merge_text(BASELINE, false)?;
        cfg.merge_text(overrides, false)?;
        cfg.entries.insert("name".into(), (name.into(), 0));
        Ok(cfg)
    }

    /// A preset name or a config file path. Relative file paths inside a
    /// config resolve against the config's directory.
    pub fn load(source: &str) -> Result<Self> {
        if PRESETS.iter().any(|(n, _)| *n == source) && !Path::new(source).exists() {
            return Self::preset(source);
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| PovError::File {
            path: path.into(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            PovError::Config { line, message } => PovError::File {
                path: path.into(),
                message: format!("line {line}: {message}"),
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        let named = text
            .lines()
            .any(|l| l.split('=').next().is_some_and(|k| k.trim() == "name"));
        if !named {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            cfg.entries.insert("name".into(), (stem.into(), 0));
        }
        Ok(cfg)
    }

    fn merge_text(&mut self, text: &str, allow_preset: bool) -> Result<()> {
        let mut parsed = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| PovError::Config {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(PovError::Config {
                    line,
                    message: format!("unknown key '{key}'"),
                });
            }
            if value.is_empty() {
                return Err(PovError::Config {
                    line,
                    message: format!("empty value for '{key}'"),
                });
            }
            if parsed.iter().any(|(k, _, _): &(String, String, usize)| k == key) {
                return Err(PovError::Config {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
            parsed.push((key.to_string(), value.to_string(), line));
        }
        if let Some((_, name, line)) = parsed.iter().find(|(k, _, _)| k == "preset") {
            if !allow_preset {
                return Err(PovError::Config {
                    line: *line,
                    message: "presets cannot be nested".into(),
                });
            }
            *self = Self::preset(name).map_err(|e| PovError::Config {
                line: *line,
                message: e.to_string(),
            })?;
        }
        for (key, value, line) in parsed {
            if key != "preset" {
                self.entries.insert(key, (value, line));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(PovError::Parameter(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.into(), (value.to_string(), 0));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn err(&self, key: &str, message: String) -> PovError {
        match self.entries.get(key) {
            Some((_, line)) if *line > 0 => PovError::Config {
                line: *line,
                message: format!("{key}: {message}"),
            },
            _ => PovError::Parameter(format!("{key}: {message}")),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| self.err(key, format!("'{v}' is not a number")))
            })
            .transpose()
    }

    pub fn require(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| PovError::Parameter(format!("missing required key '{key}'")))
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| self.err(key, format!("'{v}' is not a non-negative integer")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| match &self.base_dir {
            Some(dir) if Path::new(v).is_relative() => dir.join(v),
            _ => PathBuf::from(v),
        })
    }

    fn choice<'a>(&self, key: &str, options: &[&'a str], default: &'a str) -> Result<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => options.iter().find(|o| **o == v).copied().ok_or_else(|| {
                self.err(key, format!("'{v}' is not one of {}", options.join(" | ")))
            }),
        }
    }

    /// Canonical text form, sorted by key.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, (v, _))| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Where the full-session volume profile comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeSource {
    UShape { skew: f64, dt: f64 },
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpreadSource {
    ConstantBps(f64),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub p0: f64,
    pub adv: f64,
    pub volume: VolumeSource,
    pub spread: SpreadSource,
}

impl MarketSpec {
    pub fn day_volume(&self) -> Result<VolumeProfile> {
        match &self.volume {
            VolumeSource::UShape { skew, dt } => {
                let grid = TimeGrid::uniform(0.0, SESSION_MINUTES, *dt)?;
                synth_u_shape_volume(&grid, self.adv, *skew)
            }
            VolumeSource::Csv(path) => VolumeProfile::load_csv(path, Some(self.adv)),
        }
    }

    pub fn day_spread(&self, grid: &TimeGrid) -> Result<SpreadProfile> {
        match &self.spread {
            SpreadSource::ConstantBps(bps) => SpreadProfile::constant(grid.clone(), bps * self.p0 * BPS),
            SpreadSource::Csv(path) => SpreadProfile::load_csv(path),
        }
    }
}

/// Price-risk kernel source.
#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsSource {
    ClosedForm(SdeSpec),
    MonteCarlo {
        spec: SdeSpec,
        paths: usize,
        substeps: usize,
        seed: u64,
    },
    KernelFile(PathBuf),
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub order: ExecutionOrder,
    pub coeffs: CostCoefficients,
    pub market: MarketSpec,
    pub dynamics: DynamicsSource,
    pub solver: SolverSettings,
    pub variance_floor: f64,
    pub output_dir: Option<PathBuf>,
}

/// A built model and, for simulated kernels, the PSD repair applied.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub model: ExecutionModel,
    pub repair: Option<PsdRepair>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub model: ExecutionModel,
    pub solution: QpSolution,
    pub schedule: Schedule,
    pub repair: Option<PsdRepair>,
}

impl Scenario {
    pub fn load(source: &str) -> Result<Self> {
        Self::from_config(&Config::load(source)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_config(&Config::preset(name)?)
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let p0 = cfg.require("market.p0")?;
        let adv = cfg.require("market.adv")?;
        let volume = match cfg.path("market.volume_csv") {
            Some(path) => VolumeSource::Csv(path),
            None => VolumeSource::UShape {
                skew: cfg.f64("market.skew")?.unwrap_or(1.0),
                dt: cfg.f64("market.dt")?.unwrap_or(1.0),
            },
        };
        let spread = match cfg.path("market.spread_csv") {
            Some(path) => SpreadSource::Csv(path),
            None => SpreadSource::ConstantBps(cfg.require("market.spread_bps")?),
        };
        for path in [cfg.path("market.volume_csv"), cfg.path("market.spread_csv"), cfg.path("dynamics.kernel_csv")]
            .into_iter()
            .flatten()
        {
            if !path.is_file() {
                return Err(PovError::File {
                    path,
                    message: "referenced file does not exist".into(),
                });
            }
        }

        let t0 = cfg.require("order.t0")?;
        let order = ExecutionOrder::new(
            cfg.require("order.x1")?,
            t0,
            t0 + cfg.require("order.duration")?,
            cfg.require("order.max_pov")?,
            cfg.f64("order.lambda")?.unwrap_or(crate::impact::DEFAULT_LAMBDA),
        )?;

        let alpha = [
            cfg.require("cost.alpha0")?,
            cfg.require("cost.alpha1")?,
            cfg.require("cost.alpha2")?,
            cfg.require("cost.alpha3")?,
        ];
        let mut coeffs = CostCoefficients::new(
            alpha,
            cfg.f64("cost.v_star")?.unwrap_or(0.01 * adv),
            cfg.f64("cost.eps0")?.unwrap_or(0.01 * adv),
            p0,
        )?;
        coeffs.regularizer = match cfg.choice("cost.regularizer", &["soft", "hard"], "soft")? {
            "hard" => PermanentRegularizer::Hard,
            _ => PermanentRegularizer::Soft,
        };
        coeffs.volume_origin = match cfg.choice("cost.volume_origin", &["horizon", "open"], "horizon")? {
            "open" => VolumeOrigin::MarketOpen,
            _ => VolumeOrigin::HorizonStart,
        };

        let model = cfg.choice(
            "dynamics.model",
            &["brownian", "mean_reversion", "asv", "file"],
            "brownian",
        )?;
        let method = cfg.choice("dynamics.method", &["closed_form", "monte_carlo"], "closed_form")?;
        let sigma0 = || cfg.require("dynamics.sigma0");
        let spec = match model {
            "brownian" => Some(SdeSpec::brownian(sigma0()?)?),
            "mean_reversion" => Some(SdeSpec::mean_reversion(
                cfg.require("dynamics.kappa")?,
                cfg.require("dynamics.alpha")?,
            )?),
            "asv" => Some(SdeSpec::asv(
                sigma0()?,
                cfg.require("dynamics.beta")?,
                cfg.f64("dynamics.cap")?.unwrap_or(2.0),
            )?),
            _ => None,
        };
        let dynamics = match spec {
            None => DynamicsSource::KernelFile(cfg.path("dynamics.kernel_csv").ok_or_else(|| {
                PovError::Parameter("dynamics.model = file needs dynamics.kernel_csv".into())
            })?),
            Some(spec) if spec.model == SdeModel::Asv || method == "monte_carlo" => {
                DynamicsSource::MonteCarlo {
                    spec,
                    paths: cfg.usize("dynamics.paths")?.unwrap_or(40_000),
                    substeps: cfg.usize("dynamics.substeps")?.unwrap_or(DEFAULT_SUBSTEPS),
                    seed: cfg.usize("dynamics.seed")?.unwrap_or(0) as u64,
                }
            }
            Some(spec) => DynamicsSource::ClosedForm(spec),
        };

        let defaults = SolverSettings::default();
        let solver = SolverSettings {
            tol_kkt: cfg.f64("solver.tol_kkt")?.unwrap_or(defaults.tol_kkt),
            max_iter: cfg.usize("solver.max_iter")?.unwrap_or(defaults.max_iter),
            ..defaults
        };
        if !(solver.tol_kkt > 0.0) {
            return Err(PovError::Parameter("solver.tol_kkt must be > 0".into()));
        }

        Ok(Self {
            name: cfg.get("name").unwrap_or("scenario").to_string(),
            order,
            coeffs,
            market: MarketSpec {
                p0,
                adv,
                volume,
                spread,
            },
            dynamics,
            solver,
            variance_floor: cfg
                .f64("calibrate.variance_floor")?
                .unwrap_or(crate::calibrate::DEFAULT_VARIANCE_FLOOR),
            output_dir: cfg.path("output.dir"),
        })
    }

    /// Override the Monte-Carlo seed and path count where they apply.
    pub fn with_mc_overrides(mut self, seed: Option<u64>, paths: Option<usize>) -> Self {
        if let DynamicsSource::MonteCarlo {
            seed: s, paths: p, ..
        } = &mut self.dynamics
        {
            if let Some(seed) = seed {
                *s = seed;
            }
            if let Some(paths) = paths {
                *p = paths;
            }
        }
        self
    }

    pub fn feature_params(&self) -> FeatureParams {
        self.coeffs.feature_params()
    }

    /// Horizon volume and spread profiles.
    pub fn horizon_profiles(&self) -> Result<(VolumeProfile, SpreadProfile)> {
        let day = self.market.day_volume()?;
        let profile = day.slice(self.order.t0, self.order.t1)?;
        let spread = self.market.day_spread(day.grid())?.slice(self.order.t0, self.order.t1)?;
        Ok((profile, spread))
    }

    /// Price-risk kernel on `grid` for arrival price `p0`.
    pub fn risk_kernel(&self, grid: &TimeGrid, p0: f64) -> Result<(KernelMatrix, Option<PsdRepair>)> {
        match &self.dynamics {
            DynamicsSource::ClosedForm(spec) => {
                let k = match spec.model {
                    SdeModel::MeanReversion => mean_reversion_kernel(grid, spec.kappa, spec.alpha, p0)?,
                    _ => brownian_kernel(grid, spec.sigma0, p0)?,
                };
                Ok((k, None))
            }
            DynamicsSource::MonteCarlo {
                spec,
                paths,
                substeps,
                seed,
            } => {
                let (k, repair) = estimate_kernel(spec, grid, *paths, *substeps, *seed, p0)?;
                Ok((k, Some(repair)))
            }
            DynamicsSource::KernelFile(path) => Ok((
                KernelMatrix::read_csv(path, grid.clone(), KernelKind::PriceRisk)?,
                None,
            )),
        }
    }

    /// Closed-form risk kernel for calibration weights; simulated or file
    /// kernels are tied to one grid and are rejected here.
    pub fn closed_form_risk(&self, grid: &TimeGrid, p0: f64) -> Result<KernelMatrix> {
        match &self.dynamics {
            DynamicsSource::ClosedForm(_) => Ok(self.risk_kernel(grid, p0)?.0),
            _ => Err(PovError::Parameter(
                "calibration weights need closed-form dynamics (brownian or mean_reversion)".into(),
            )),
        }
    }

    /// Mean spread in currency for a trade with arrival price `p0` at a
    /// minute since the open. Spread CSVs are quoted at `market.p0` and
    /// rescale proportionally.
    pub fn spread_lookup(&self) -> Result<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        match &self.market.spread {
            SpreadSource::ConstantBps(bps) => {
                let bps = *bps;
                Ok(Box::new(move |p0, _| bps * p0 * BPS))
            }
            SpreadSource::Csv(path) => {
                let day = SpreadProfile::load_csv(path)?;
                let reference = self.market.p0;
                Ok(Box::new(move |p0, minute| {
                    let b = day.grid().boundaries();
                    let k = b.partition_point(|t| *t <= minute).clamp(1, b.len() - 1) - 1;
                    day.theta_bar()[k] * p0 / reference
                }))
            }
        }
    }

    /// Profiles, kernel and model, after the compatibility check.
    pub fn build(&self) -> Result<BuiltScenario> {
        let (profile, spread) = self.horizon_profiles()?;
        self.order.check_compatibility(profile.total())?;
        let (k_delta, repair) = self.risk_kernel(profile.grid(), self.coeffs.p0)?;
        let model = ExecutionModel::new(self.order, profile, spread, &k_delta, self.coeffs)?;
        Ok(BuiltScenario { model, repair })
    }

    pub fn run(&self) -> Result<ScenarioOutcome> {
        let BuiltScenario { model, repair } = self.build()?;
        let solution = solve(&model.assemble_qp()?, &self.solver)?;
        let schedule = model.evaluate(&solution.h);
        Ok(ScenarioOutcome {
            model,
            solution,
            schedule,
            repair,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for name in preset_names() {
            let s = Scenario::preset(name).unwrap();
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn baseline_values() {
        let s = Scenario::preset("baseline").unwrap();
        assert_eq!(s.order.x1, 90_000.0);
        assert_eq!((s.order.t0, s.order.t1), (105.0, 195.0));
        assert_eq!(s.order.max_pov, 0.2);
        assert_eq!(s.order.lambda, 1e-3);
        assert_eq!(s.coeffs.p0, 30.0);
        assert_eq!(s.coeffs.v_star, 50_000.0);
        assert!(matches!(s.dynamics, DynamicsSource::ClosedForm(_)));
    }

    #[test]
    fn boost_presets_scale_by_ten() {
        let base = Scenario::preset("baseline").unwrap().coeffs;
        assert_eq!(Scenario::preset("boost_inst").unwrap().coeffs.alpha1, 10.0 * base.alpha1);
        assert_eq!(Scenario::preset("boost_tran").unwrap().coeffs.alpha2, 10.0 * base.alpha2);
        assert_eq!(Scenario::preset("boost_perm").unwrap().coeffs.alpha3, 10.0 * base.alpha3);
    }

    #[test]
    fn mr_preset_matches_brownian_variance_over_horizon() {
        let s = Scenario::preset("dyn_mr").unwrap();
        let DynamicsSource::ClosedForm(spec) = s.dynamics else {
            panic!("closed form expected")
        };
        let sigma0 = Scenario::preset("baseline").unwrap();
        let DynamicsSource::ClosedForm(b) = sigma0.dynamics else { unreachable!() };
        let stationary = spec.alpha * spec.alpha / (2.0 * spec.kappa);
        let brownian_end = b.sigma0 * b.sigma0 * 90.0;
        assert!((stationary / brownian_end - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Config::parse("order.x1 = 1\n\nbogus.key = 3\n").unwrap_err();
        assert!(matches!(err, PovError::Config { line: 3, .. }), "{err}");
        let err = Config::parse("order.x1 1\n").unwrap_err();
        assert!(matches!(err, PovError::Config { line: 1, .. }));
        let err = Config::parse("order.x1 = 1\norder.x1 = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let cfg = Config::parse("preset = baseline\norder.max_pov = abc\n").unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err();
        assert!(matches!(err, PovError::Config { line: 2, .. }), "{err}");
    }

    #[test]
    fn file_overrides_preset() {
        let cfg = Config::parse("preset = ra_high  # strong\norder.max_pov = 0.3\n").unwrap();
        let s = Scenario::from_config(&cfg).unwrap();
        assert_eq!(s.order.lambda, 1e-1);
        assert_eq!(s.order.max_pov, 0.3);
    }

    #[test]
    fn missing_file_is_reported() {
        let cfg = Config::parse("preset = baseline\nmarket.volume_csv = /nonexistent/v.csv\n").unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn tight_cap_is_infeasible_at_build() {
        let mut cfg = Config::preset("baseline").unwrap();
        cfg.set("order.max_pov", 0.01).unwrap();
        let err = Scenario::from_config(&cfg).unwrap().build().unwrap_err();
        assert!(matches!(err, PovError::Infeasible { .. }));
        assert!(err.to_string().contains("maxPoV >= |X1| / V1"));
    }
}
