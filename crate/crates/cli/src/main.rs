use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use povsched::calibrate::{calibrate, read_trade_db, Exclusion};
use povsched::dynamics::{
    check_psd_matrix, estimate_kernel, read_kernel_csv, symmetry_violations, DEFAULT_PSD_TOL,
};
use povsched::impact::ExecutionModel;
use povsched::profiles::fmt_num;
use povsched::qpsolve::SolveStatus;
use povsched::scenario::{preset_names, DynamicsSource, Scenario, ScenarioOutcome};
use povsched::PovError;

/// Mean-variance PoV execution scheduler.
#[derive(Parser)]
#[command(name = "povsched", version, about)]
struct Cli {
    /// Monte-Carlo seed (overrides dynamics.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir; default is the current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Monte-Carlo path count (overrides dynamics.paths).
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Solver stationarity tolerance (overrides solver.tol_kkt).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario (preset name or config file); writes schedule.csv and summary.csv.
    Solve { scenario: String },
    /// Fit cost coefficients from a trade database directory.
    Calibrate { db: PathBuf, config: String },
    /// Monte-Carlo price-risk kernel for a scenario's dynamics on its horizon grid.
    EstimateKernel { config: String },
    /// Validate a scenario, or a kernel CSV (i,j,value).
    Check { path: String },
    /// Schedule CSVs for every built-in preset, for external plotting.
    Figures,
}

/// Failure with an exit code: 2 validation, 3 infeasible, 4 non-convergence.
struct Failure {
    code: u8,
    message: String,
}

impl From<PovError> for Failure {
    fn from(e: PovError) -> Self {
        let code = match e {
            PovError::Infeasible { .. } => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        PovError::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("POVSCHED_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Solve { scenario } => cmd_solve(cli, scenario),
        Command::Calibrate { db, config } => cmd_calibrate(cli, db, config),
        Command::EstimateKernel { config } => cmd_estimate_kernel(cli, config),
        Command::Check { path } => cmd_check(cli, path),
        Command::Figures => cmd_figures(cli),
    }
}

fn load_scenario(cli: &Cli, source: &str) -> CliResult<Scenario> {
    let mut s = Scenario::load(source)?.with_mc_overrides(cli.seed, cli.paths);
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(PovError::Parameter(format!("--tol must be > 0, got {tol}")).into());
        }
        s.solver.tol_kkt = tol;
    }
    Ok(s)
}

fn out_dir(cli: &Cli, scenario: Option<&Scenario>) -> CliResult<PathBuf> {
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| scenario.and_then(|s| s.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn solve_checked(s: &Scenario) -> CliResult<ScenarioOutcome> {
    let outcome = s.run()?;
    match outcome.solution.status {
        SolveStatus::Optimal => Ok(outcome),
        SolveStatus::MaxIter => Err(Failure {
            code: 4,
            message: format!(
                "solver did not converge in {} iterations (stationarity {:.3e})",
                outcome.solution.iterations, outcome.solution.kkt.stationarity
            ),
        }),
        SolveStatus::Infeasible => Err(Failure {
            code: 3,
            message: "solver reported an infeasible problem".into(),
        }),
    }
}

fn write_schedule(model: &ExecutionModel, h: &[f64], path: &Path) -> CliResult<()> {
    let schedule = model.evaluate(h);
    let grid = model.profile.grid();
    let cap = model.order.side.sign() * model.order.max_pov;
    let mut w = csv::Writer::from_path(path).map_err(PovError::from)?;
    let write = |w: &mut csv::Writer<fs::File>, rec: &[String]| w.write_record(rec).map_err(PovError::from);
    write(
        &mut w,
        &["minute", "d_n", "h_n", "shares", "X_cum", "max_pov"].map(String::from),
    )?;
    for n in 0..h.len() {
        write(
            &mut w,
            &[
                fmt_num(grid.boundaries()[n]),
                fmt_num(model.profile.volumes()[n]),
                fmt_num(h[n]),
                fmt_num(schedule.shares[n]),
                fmt_num(schedule.x_cum[n]),
                fmt_num(cap),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_key_values(path: &Path, rows: &[(&str, String)]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(PovError::from)?;
    w.write_record(["key", "value"]).map_err(PovError::from)?;
    for (k, v) in rows {
        w.write_record([*k, v.as_str()]).map_err(PovError::from)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(cli: &Cli, source: &str) -> CliResult<()> {
    let s = load_scenario(cli, source)?;
    let dir = out_dir(cli, Some(&s))?;
    let o = solve_checked(&s)?;
    write_schedule(&o.model, &o.solution.h, &dir.join("schedule.csv"))?;
    let sch = &o.schedule;
    let kkt = &o.solution.kkt;
    let mut rows = vec![
        ("scenario", s.name.clone()),
        ("objective", fmt_num(sch.objective)),
        ("expected_is_bps", fmt_num(sch.expected_is_bps)),
        ("is_spread_bps", fmt_num(sch.components.spread)),
        ("is_instantaneous_bps", fmt_num(sch.components.instantaneous)),
        ("is_transient_bps", fmt_num(sch.components.transient)),
        ("is_permanent_bps", fmt_num(sch.components.permanent)),
        ("stdev_is_bps", fmt_num(sch.stdev_bps)),
        ("variance_dollar", fmt_num(sch.variance_dollar)),
        ("centroid_minutes", fmt_num(sch.centroid(o.model.profile.grid()))),
        ("kkt_stationarity", fmt_num(kkt.stationarity)),
        ("kkt_equality_residual", fmt_num(kkt.equality_residual)),
        ("kkt_bound_violation", fmt_num(kkt.bound_violation)),
        ("kkt_complementarity", fmt_num(kkt.complementarity)),
        ("iterations", o.solution.iterations.to_string()),
    ];
    if let Some(r) = &o.repair {
        rows.push(("psd_clipped_eigenvalues", r.clipped.to_string()));
        rows.push(("psd_clipped_mass", fmt_num(r.clipped_mass)));
    }
    write_key_values(&dir.join("summary.csv"), &rows)?;
    println!(
        "{}: E[IS] {:.4} bps, stdev {:.4} bps, {} iterations -> {}",
        s.name,
        sch.expected_is_bps,
        sch.stdev_bps,
        o.solution.iterations,
        dir.display()
    );
    Ok(())
}

fn cmd_calibrate(cli: &Cli, db: &Path, config: &str) -> CliResult<()> {
    let s = load_scenario(cli, config)?;
    let dir = out_dir(cli, Some(&s))?;
    let spread = s.spread_lookup()?;
    let loaded = read_trade_db(db, spread)?;
    let params = s.feature_params();
    let fit = calibrate(
        &loaded.trades,
        &params,
        |grid, p0| s.closed_form_risk(grid, p0),
        s.variance_floor,
    );
    // the filter report is written even when the fit fails
    let mut excluded: Vec<Exclusion> = loaded.rejected.clone();
    let run = match fit {
        Ok(run) => {
            excluded.extend(run.excluded.iter().cloned());
            write_filter_report(&dir.join("filter_report.csv"), &excluded)?;
            run
        }
        Err(e) => {
            if let PovError::Filtered(_) = e {
                let reasons: Vec<Exclusion> = loaded
                    .trades
                    .iter()
                    .filter_map(|t| {
                        t.filter_reason().map(|reason| Exclusion {
                            id: t.id.clone(),
                            reason,
                        })
                    })
                    .collect();
                excluded.extend(reasons);
            }
            write_filter_report(&dir.join("filter_report.csv"), &excluded)?;
            return Err(e.into());
        }
    };
    run.result.write_csv(dir.join("coefficients.csv"))?;
    let r = &run.result;
    write_key_values(
        &dir.join("calibration_summary.csv"),
        &[
            ("n_trades", r.n_trades.to_string()),
            ("n_excluded", excluded.len().to_string()),
            ("r_squared", fmt_num(r.r_squared)),
            ("sigma2", fmt_num(r.sigma2)),
            ("condition_number", fmt_num(r.condition_number)),
            ("mixed_sides", run.mixed_sides.to_string()),
        ],
    )?;
    for e in &excluded {
        eprintln!("excluded {}: {}", e.id, e.reason);
    }
    let se = r.std_errors();
    println!("fitted {} trades ({} excluded), R^2 {:.4}", r.n_trades, excluded.len(), r.r_squared);
    for i in 0..4 {
        println!("  alpha{i} = {:.6} +/- {:.6}", r.alpha[i], se[i]);
    }
    if run.mixed_sides {
        println!("  note: buys and sells are mixed in this database");
    }
    Ok(())
}

fn write_filter_report(path: &Path, excluded: &[Exclusion]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(PovError::from)?;
    w.write_record(["trade_id", "reason"]).map_err(PovError::from)?;
    for e in excluded {
        w.write_record([e.id.as_str(), e.reason.as_str()]).map_err(PovError::from)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_estimate_kernel(cli: &Cli, config: &str) -> CliResult<()> {
    let s = load_scenario(cli, config)?;
    let dir = out_dir(cli, Some(&s))?;
    let (spec, paths, substeps, seed) = match &s.dynamics {
        DynamicsSource::ClosedForm(spec) => (
            *spec,
            40_000,
            povsched::dynamics::DEFAULT_SUBSTEPS,
            0,
        ),
        DynamicsSource::MonteCarlo {
            spec,
            paths,
            substeps,
            seed,
        } => (*spec, *paths, *substeps, *seed),
        DynamicsSource::KernelFile(path) => {
            return Err(PovError::Parameter(format!(
                "scenario reads its kernel from {}; nothing to simulate",
                path.display()
            ))
            .into())
        }
    };
    let paths = cli.paths.unwrap_or(paths);
    let seed = cli.seed.unwrap_or(seed);
    let (profile, _) = s.horizon_profiles()?;
    let (kernel, repair) = estimate_kernel(&spec, profile.grid(), paths, substeps, seed, s.coeffs.p0)?;
    kernel.write_csv(dir.join("kernel.csv"))?;
    write_key_values(
        &dir.join("kernel_report.csv"),
        &[
            ("paths", paths.to_string()),
            ("substeps", substeps.to_string()),
            ("seed", seed.to_string()),
            ("clipped_eigenvalues", repair.clipped.to_string()),
            ("clipped_mass", fmt_num(repair.clipped_mass)),
        ],
    )?;
    println!(
        "{}x{} kernel from {paths} paths; clipped {} eigenvalues (mass {:.3e})",
        kernel.dim(),
        kernel.dim(),
        repair.clipped,
        repair.clipped_mass
    );
    Ok(())
}

struct Report {
    lines: Vec<(bool, String, String)>,
    infeasible: bool,
}

impl Report {
    fn item(&mut self, pass: bool, name: &str, detail: String) {
        self.lines.push((pass, name.into(), detail));
    }
}

fn cmd_check(cli: &Cli, path: &str) -> CliResult<()> {
    let mut report = Report {
        lines: Vec::new(),
        infeasible: false,
    };
    if path.ends_with(".csv") {
        check_kernel_file(Path::new(path), &mut report);
    } else {
        check_scenario(cli, path, &mut report);
    }
    let mut failed = 0;
    for (pass, name, detail) in &report.lines {
        println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed == 0 {
        return Ok(());
    }
    let only_compat = report.infeasible && failed == 1;
    Err(Failure {
        code: if only_compat { 3 } else { 2 },
        message: format!("{failed} check(s) failed"),
    })
}

fn check_kernel_file(path: &Path, report: &mut Report) {
    let values = match read_kernel_csv(path) {
        Ok(v) => v,
        Err(e) => return report.item(false, "parse", e.to_string()),
    };
    report.item(true, "parse", format!("{}x{} kernel", values.nrows(), values.ncols()));
    let bad = symmetry_violations(&values, 1e-12);
    if bad.is_empty() {
        report.item(true, "symmetry", "K[i][j] == K[j][i]".into());
    } else {
        let listed: Vec<String> = bad
            .iter()
            .take(10)
            .map(|(i, j, gap)| format!("({i},{j}) differs by {gap:.3e}"))
            .collect();
        report.item(
            false,
            "symmetry",
            format!("{} asymmetric pairs: {}", bad.len(), listed.join("; ")),
        );
    }
    let sym = (&values + values.transpose()) * 0.5;
    let psd = check_psd_matrix(&sym, DEFAULT_PSD_TOL);
    report.item(
        psd.pass,
        "positivity",
        format!("eigenvalues in [{:.3e}, {:.3e}]", psd.min_eig, psd.max_eig),
    );
}

fn check_scenario(cli: &Cli, source: &str, report: &mut Report) {
    let s = match load_scenario(cli, source) {
        Ok(s) => s,
        Err(f) => return report.item(false, "scenario", f.message),
    };
    report.item(true, "scenario", format!("'{}' parsed", s.name));
    let (profile, _spread) = match s.horizon_profiles() {
        Ok(p) => p,
        Err(e) => return report.item(false, "profiles", e.to_string()),
    };
    report.item(
        true,
        "profiles",
        format!(
            "{} intervals, V1 = {:.1} shares, all volumes >= 0",
            profile.len(),
            profile.total()
        ),
    );
    match s.order.check_compatibility(profile.total()) {
        Ok(()) => report.item(
            true,
            "compatibility",
            format!(
                "maxPoV {} >= |X1| / V1 = {:.6}",
                s.order.max_pov,
                s.order.x1.abs() / profile.total()
            ),
        ),
        Err(e) => {
            report.infeasible = true;
            return report.item(false, "compatibility", e.to_string());
        }
    }
    let built = match s.build() {
        Ok(b) => b,
        Err(e) => return report.item(false, "model", e.to_string()),
    };
    let m = &built.model;
    for (name, k) in [
        ("risk kernel", &m.risk),
        ("transient kernel", &m.transient),
        ("permanent kernel", &m.permanent),
        ("combined operator", &m.k_lambda),
    ] {
        let bad = symmetry_violations(k.values(), 1e-12);
        report.item(
            bad.is_empty(),
            &format!("{name} symmetry"),
            match bad.first() {
                None => "symmetric".into(),
                Some((i, j, gap)) => format!("({i},{j}) differs by {gap:.3e}"),
            },
        );
        let psd = k.check_psd(DEFAULT_PSD_TOL);
        report.item(
            psd.pass,
            &format!("{name} positivity"),
            format!("eigenvalues in [{:.3e}, {:.3e}]", psd.min_eig, psd.max_eig),
        );
    }
}

/// Figure panels and the preset behind each.
const FIGURES: &[(&str, &str)] = &[
    ("1", "ra_medium"),
    ("2-left", "ra_high"),
    ("2-right", "ra_low"),
    ("3", "vol_noon"),
    ("4-left", "vol_morning"),
    ("4-right", "vol_afternoon"),
    ("5", "boost_inst"),
    ("6", "boost_tran"),
    ("7", "boost_perm"),
    ("8-left", "dyn_mr"),
    ("8-right", "dyn_asv"),
];

fn cmd_figures(cli: &Cli) -> CliResult<()> {
    use rayon::prelude::*;
    let dir = out_dir(cli, None)?;
    debug_assert!(FIGURES.iter().all(|(_, p)| preset_names().any(|n| n == *p)));
    let results: Vec<CliResult<(String, ScenarioOutcome)>> = FIGURES
        .par_iter()
        .map(|(_, preset)| {
            let s = load_scenario(cli, preset)?;
            Ok((preset.to_string(), solve_checked(&s)?))
        })
        .collect();
    let mut index = csv::Writer::from_path(dir.join("figures.csv")).map_err(PovError::from)?;
    index
        .write_record(["figure", "preset", "file", "expected_is_bps", "stdev_is_bps", "centroid_minutes"])
        .map_err(PovError::from)?;
    for ((figure, _), result) in FIGURES.iter().zip(results) {
        let (preset, o) = result?;
        let file = format!("{preset}.csv");
        write_schedule(&o.model, &o.solution.h, &dir.join(&file))?;
        index
            .write_record([
                figure.to_string(),
                preset,
                file,
                fmt_num(o.schedule.expected_is_bps),
                fmt_num(o.schedule.stdev_bps),
                fmt_num(o.schedule.centroid(o.model.profile.grid())),
            ])
            .map_err(PovError::from)?;
    }
    index.flush()?;
    println!("wrote {} figure series to {}", FIGURES.len(), dir.display());
    Ok(())
}
