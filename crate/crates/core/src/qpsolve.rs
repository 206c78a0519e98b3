//! Dense convex QP with box bounds and a single linear equality:
//!
//! ```text
//!     minimize    c^T h + h^T Q h
//!     subject to  a^T h = b,   lower <= h <= upper,   h_i = 0 on pinned indices
//! ```
//!
//! The solver is a primal active-set method. Each iteration fixes the working
//! bounds, eliminates the equality through its multiplier, takes the exact
//! minimizer of the quadratic on the remaining face (Cholesky on the free
//! block) and shortens the step at the first blocking bound. Iterates stay
//! feasible and the objective never increases. All work happens on a
//! diagonally equilibrated copy with unit diagonal; the KKT tolerances refer
//! to that scaling.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{PovError, Result};
use crate::profiles::fmt_num;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub a_eq: Vec<f64>,
    pub b_eq: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed_zero: Vec<bool>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `c^T h + h^T Q h`.
    pub fn objective(&self, h: &[f64]) -> f64 {
        let n = self.dim();
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.q[(i, j)] * h[j];
            }
            quad += h[i] * row;
        }
        quad + self.c.iter().zip(h).map(|(c, h)| c * h).sum::<f64>()
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.fixed_zero[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.q.nrows() != n
            || self.q.ncols() != n
            || self.a_eq.len() != n
            || self.lower.len() != n
            || self.upper.len() != n
            || self.fixed_zero.len() != n
        {
            return Err(PovError::Parameter("QP dimensions disagree".into()));
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(PovError::Parameter(format!(
                    "bounds cross at index {i}: {} > {}",
                    self.lower[i], self.upper[i]
                )));
            }
            if self.fixed_zero[i] && (self.lower[i] != 0.0 || self.upper[i] != 0.0) {
                return Err(PovError::Parameter(format!(
                    "pinned index {i} must have zero bounds"
                )));
            }
            if !self.fixed_zero[i] && !(self.q[(i, i)] > 0.0) {
                return Err(PovError::Parameter(format!(
                    "Q[{i}][{i}] = {} must be positive on free indices",
                    self.q[(i, i)]
                )));
            }
        }
        if self.free_indices().is_empty() {
            return Err(PovError::Parameter("no free variables".into()));
        }
        Ok(())
    }

    /// Range `[min a^T h, max a^T h]` over the box.
    pub fn equality_range(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in self.free_indices() {
            let (x, y) = (self.a_eq[i] * self.lower[i], self.a_eq[i] * self.upper[i]);
            lo += x.min(y);
            hi += x.max(y);
        }
        (lo, hi)
    }

    /// Write `q.csv` (`i,j,value`), `vectors.csv`
    /// (`index,c,a_eq,lower,upper,fixed_zero`) and `rhs.csv` (`b_eq`).
    pub fn write_csv_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("q.csv"))?;
        w.write_record(["i", "j", "value"])?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                w.write_record([i.to_string(), j.to_string(), fmt_num(self.q[(i, j)])])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("vectors.csv"))?;
        w.write_record(["index", "c", "a_eq", "lower", "upper", "fixed_zero"])?;
        for i in 0..self.dim() {
            w.write_record([
                i.to_string(),
                fmt_num(self.c[i]),
                fmt_num(self.a_eq[i]),
                fmt_num(self.lower[i]),
                fmt_num(self.upper[i]),
                (self.fixed_zero[i] as u8).to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("rhs.csv"))?;
        w.write_record(["b_eq"])?;
        w.write_record([fmt_num(self.b_eq)])?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Absolute stationarity tolerance on the equilibrated problem.
    pub tol_kkt: f64,
    /// Relative tolerance on `a^T h = b`.
    pub completion_tol: f64,
    /// Absolute tolerance on bound violations.
    pub bound_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            completion_tol: 1e-10,
            bound_tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    pub stationarity: f64,
    pub equality_residual: f64,
    pub bound_violation: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn within(&self, s: &SolverSettings) -> bool {
        self.stationarity <= s.tol_kkt
            && self.equality_residual <= s.completion_tol
            && self.bound_violation <= s.bound_tol
            && self.complementarity <= s.tol_kkt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub h: Vec<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective after every step, starting with the initial point. The
    /// equilibration leaves objective values unchanged.
    pub trace: Vec<f64>,
    /// For infeasible problems: the attainable range of `a^T h` over the box.
    pub attainable: Option<(f64, f64)>,
}

/// Equilibrated copy restricted to the free indices.
struct Scaled {
    idx: Vec<usize>,
    scale: Vec<f64>,
    q: DMatrix<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
    b: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Scaled {
    fn new(p: &QpProblem) -> Self {
        let idx = p.free_indices();
        let m = idx.len();
        let scale: Vec<f64> = idx.iter().map(|&i| 1.0 / p.q[(i, i)].sqrt()).collect();
        let q = DMatrix::from_fn(m, m, |r, s| {
            if r == s {
                1.0
            } else {
                scale[r] * p.q[(idx[r], idx[s])] * scale[s]
            }
        });
        let c = idx.iter().zip(&scale).map(|(&i, s)| p.c[i] * s).collect();
        let a = idx.iter().zip(&scale).map(|(&i, s)| p.a_eq[i] * s).collect();
        let lo = idx.iter().zip(&scale).map(|(&i, s)| p.lower[i] / s).collect();
        let hi = idx.iter().zip(&scale).map(|(&i, s)| p.upper[i] / s).collect();
        Self {
            idx,
            scale,
            q,
            c,
            a,
            b: p.b_eq,
            lo,
            hi,
        }
    }

    fn to_scaled(&self, h: &[f64]) -> Vec<f64> {
        self.idx.iter().zip(&self.scale).map(|(&i, s)| h[i] / s).collect()
    }

    /// Back to original units, clamped to the original bounds so that
    /// rescaling round-off cannot leave the box.
    fn to_original(&self, z: &[f64], p: &QpProblem) -> Vec<f64> {
        let mut h = vec![0.0; p.dim()];
        for (k, &i) in self.idx.iter().enumerate() {
            h[i] = (z[k] * self.scale[k]).clamp(p.lower[i], p.upper[i]);
        }
        h
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let m = z.len();
        (0..m)
            .map(|r| {
                let mut acc = 0.0;
                for s in 0..m {
                    acc += self.q[(r, s)] * z[s];
                }
                2.0 * acc + self.c[r]
            })
            .collect()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let m = z.len();
        let mut quad = 0.0;
        for r in 0..m {
            let mut acc = 0.0;
            for s in 0..m {
                acc += self.q[(r, s)] * z[s];
            }
            quad += z[r] * acc;
        }
        quad + self.c.iter().zip(z).map(|(c, z)| c * z).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Euclidean projection onto `{lo <= z <= hi, a^T z = b}`:
/// `z(t) = clip(z0 + t a)` with `t` found by bisection.
fn project_feasible(z0: &[f64], a: &[f64], b: f64, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let at = |t: f64| -> (Vec<f64>, f64) {
        let z: Vec<f64> = (0..z0.len())
            .map(|k| (z0[k] + t * a[k]).clamp(lo[k], hi[k]))
            .collect();
        let s = z.iter().zip(a).map(|(z, a)| z * a).sum();
        (z, s)
    };
    let (z, s) = at(0.0);
    if (s - b).abs() <= 1e-15 * b.abs().max(1.0) {
        return z;
    }
    let mut span = 1.0;
    while at(span).1 < b || at(-span).1 > b {
        span *= 2.0;
        if span > 1e300 {
            break;
        }
    }
    let (mut tl, mut th) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (tl + th);
        if at(mid).1 < b {
            tl = mid;
        } else {
            th = mid;
        }
        if th - tl <= f64::EPSILON * th.abs().max(tl.abs()) {
            break;
        }
    }
    let (mut z, s) = at(0.5 * (tl + th));
    // put the last sliver of the residual on the most interior coordinate
    let r = b - s;
    if r != 0.0 {
        let k = (0..z.len())
            .filter(|&k| a[k] != 0.0)
            .max_by(|&i, &j| {
                let room = |k: usize| (z[k] - lo[k]).min(hi[k] - z[k]);
                room(i).total_cmp(&room(j))
            });
        if let Some(k) = k {
            z[k] = (z[k] + r / a[k]).clamp(lo[k], hi[k]);
        }
    }
    z
}

/// Constant-rate start `h_i = b / sum(a)` on free indices, projected onto
/// the feasible set.
pub fn default_start(p: &QpProblem) -> Vec<f64> {
    let free = p.free_indices();
    let total: f64 = free.iter().map(|&i| p.a_eq[i]).sum();
    let rate = if total != 0.0 { p.b_eq / total } else { 0.0 };
    let mut h = vec![0.0; p.dim()];
    for i in free {
        h[i] = rate;
    }
    h
}

pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    solve_from(problem, settings, &default_start(problem))
}

/// Solve starting from `start` (projected onto the feasible set first).
pub fn solve_from(
    problem: &QpProblem,
    settings: &SolverSettings,
    start: &[f64],
) -> Result<QpSolution> {
    problem.validate()?;
    if start.len() != problem.dim() {
        return Err(PovError::Parameter("start vector has the wrong length".into()));
    }
    let n = problem.dim();
    let (reach_lo, reach_hi) = problem.equality_range();
    let slack = 1e-12 * problem.b_eq.abs().max(1.0);
    if problem.b_eq < reach_lo - slack || problem.b_eq > reach_hi + slack {
        let h = vec![0.0; n];
        return Ok(QpSolution {
            objective: problem.objective(&h),
            kkt: kkt_residuals(problem, &h),
            h,
            iterations: 0,
            status: SolveStatus::Infeasible,
            trace: Vec::new(),
            attainable: Some((reach_lo, reach_hi)),
        });
    }

    let sp = Scaled::new(problem);
    let m = sp.idx.len();
    let mut z = project_feasible(&sp.to_scaled(start), &sp.a, sp.b, &sp.lo, &sp.hi);
    let mut state: Vec<Bound> = (0..m)
        .map(|k| {
            if sp.lo[k] == sp.hi[k] || z[k] <= sp.lo[k] {
                Bound::Lower
            } else if z[k] >= sp.hi[k] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let dual_tol = 0.1 * settings.tol_kkt;
    let mut trace = vec![sp.objective(&z)];
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;
    // set after an unblocked step: the iterate minimizes the current face
    let mut face_minimum = false;

    while iterations < settings.max_iter {
        iterations += 1;
        let g = sp.gradient(&z);
        let free: Vec<usize> = (0..m).filter(|&k| state[k] == Bound::Free).collect();

        let (step, mu) = if free.is_empty() {
            (None, None)
        } else {
            face_step(&sp, &free, &g)?
        };

        let moving = !face_minimum && step.as_ref().is_some_and(|p| {
            let zmax = free.iter().map(|&k| z[k].abs()).fold(1.0, f64::max);
            p.iter().any(|v| v.abs() > 1e-14 * zmax)
        });

        if moving {
            let p = step.unwrap();
            let mut alpha = 1.0;
            let mut blocking = None;
            for (r, &k) in free.iter().enumerate() {
                let room = if p[r] < 0.0 {
                    (z[k] - sp.lo[k]) / -p[r]
                } else if p[r] > 0.0 {
                    (sp.hi[k] - z[k]) / p[r]
                } else {
                    continue;
                };
                if room < alpha {
                    alpha = room.max(0.0);
                    blocking = Some((k, if p[r] < 0.0 { Bound::Lower } else { Bound::Upper }));
                }
            }
            for (r, &k) in free.iter().enumerate() {
                z[k] = (z[k] + alpha * p[r]).clamp(sp.lo[k], sp.hi[k]);
            }
            match blocking {
                Some((k, side)) => {
                    z[k] = if side == Bound::Lower { sp.lo[k] } else { sp.hi[k] };
                    state[k] = side;
                }
                None => face_minimum = true,
            }
            restore_equality(&sp, &mut z, &state);
            trace.push(sp.objective(&z));
            continue;
        }

        // stationary on the current face: test bound multipliers
        let mu = match mu {
            Some(mu) => mu,
            None => vertex_multiplier(&sp, &state, &g),
        };
        let mut worst: Option<(usize, f64)> = None;
        for k in 0..m {
            if sp.lo[k] == sp.hi[k] {
                continue;
            }
            let r = g[k] - mu * sp.a[k];
            let violation = match state[k] {
                Bound::Lower => -r,
                Bound::Upper => r,
                Bound::Free => continue,
            };
            if violation > dual_tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((k, violation));
            }
        }
        match worst {
            Some((k, _)) => {
                state[k] = Bound::Free;
                face_minimum = false;
            }
            None => {
                status = SolveStatus::Optimal;
                break;
            }
        }
    }

    let h = sp.to_original(&z, problem);
    let kkt = kkt_residuals(problem, &h);
    if status == SolveStatus::Optimal && !kkt.within(settings) {
        status = SolveStatus::MaxIter;
    }
    Ok(QpSolution {
        objective: problem.objective(&h),
        kkt,
        h,
        iterations,
        status,
        trace,
        attainable: None,
    })
}

/// Minimizer of the quadratic over the face spanned by `free` subject to
/// `a^T p = 0`. Returns the step and the equality multiplier.
fn face_step(sp: &Scaled, free: &[usize], g: &[f64]) -> Result<(Option<Vec<f64>>, Option<f64>)> {
    let f = free.len();
    let qff = DMatrix::from_fn(f, f, |r, s| 2.0 * sp.q[(free[r], free[s])]);
    let chol = Cholesky::new(qff).ok_or_else(|| {
        PovError::Parameter("quadratic term is not positive definite on the free face".into())
    })?;
    let gf = DVector::from_iterator(f, free.iter().map(|&k| g[k]));
    let af = DVector::from_iterator(f, free.iter().map(|&k| sp.a[k]));
    let mg = chol.solve(&gf);
    let ma = chol.solve(&af);
    let denom = af.dot(&ma);
    let mu = if denom > 0.0 { af.dot(&mg) / denom } else { 0.0 };
    let p = (ma * mu - mg).iter().copied().collect();
    Ok((Some(p), Some(mu)))
}

/// Equality multiplier at a vertex (every variable on a bound): the point of
/// the dual interval closest to feasibility.
fn vertex_multiplier(sp: &Scaled, state: &[Bound], g: &[f64]) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..state.len() {
        if sp.a[k] == 0.0 || sp.lo[k] == sp.hi[k] {
            continue;
        }
        let ratio = g[k] / sp.a[k];
        // lower bound needs g - mu a >= 0, upper needs <= 0
        let upper_limit = (state[k] == Bound::Lower) == (sp.a[k] > 0.0);
        if upper_limit {
            hi = hi.min(ratio);
        } else {
            lo = lo.max(ratio);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn restore_equality(sp: &Scaled, z: &mut [f64], state: &[Bound]) {
    let r = sp.b - sp.a.iter().zip(z.iter()).map(|(a, z)| a * z).sum::<f64>();
    if r == 0.0 {
        return;
    }
    let free: Vec<usize> = (0..z.len()).filter(|&k| state[k] == Bound::Free).collect();
    let norm: f64 = free.iter().map(|&k| sp.a[k] * sp.a[k]).sum();
    if norm > 0.0 {
        for &k in &free {
            z[k] = (z[k] + r * sp.a[k] / norm).clamp(sp.lo[k], sp.hi[k]);
        }
    }
}

/// KKT residuals of `h`, measured on the equilibrated problem.
///
/// Active bounds are those within `1e-9` (scaled units) of `h`. The
/// equality multiplier is the least-squares fit on the inactive indices;
/// bound multipliers are the sign-clipped remainders.
pub fn kkt_residuals(problem: &QpProblem, h: &[f64]) -> KktReport {
    let n = problem.dim();
    let mut bound_violation: f64 = 0.0;
    for i in 0..n {
        let v = if problem.fixed_zero[i] {
            h[i].abs()
        } else {
            (problem.lower[i] - h[i]).max(h[i] - problem.upper[i]).max(0.0)
        };
        bound_violation = bound_violation.max(v);
    }
    let ah: f64 = problem.a_eq.iter().zip(h).map(|(a, h)| a * h).sum();
    let equality_residual = (ah - problem.b_eq).abs() / problem.b_eq.abs().max(f64::MIN_POSITIVE);
    if problem.free_indices().is_empty() {
        return KktReport {
            equality_residual,
            bound_violation,
            ..Default::default()
        };
    }

    let sp = Scaled::new(problem);
    let z = sp.to_scaled(h);
    let g = sp.gradient(&z);
    let m = z.len();
    const ACTIVE: f64 = 1e-9;
    let state: Vec<Bound> = (0..m)
        .map(|k| {
            let width = (sp.hi[k] - sp.lo[k]).abs().max(1.0);
            if z[k] - sp.lo[k] <= ACTIVE * width {
                Bound::Lower
            } else if sp.hi[k] - z[k] <= ACTIVE * width {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let (num, den) = (0..m)
        .filter(|&k| state[k] == Bound::Free)
        .fold((0.0, 0.0), |(n, d), k| (n + sp.a[k] * g[k], d + sp.a[k] * sp.a[k]));
    let mu = if den > 0.0 {
        num / den
    } else {
        vertex_multiplier(&sp, &state, &g)
    };
    let mut stationarity: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for k in 0..m {
        let r = g[k] - mu * sp.a[k];
        let (res, comp) = match state[k] {
            Bound::Free => (r.abs(), 0.0),
            Bound::Lower if sp.lo[k] == sp.hi[k] => (0.0, 0.0),
            Bound::Lower => ((-r).max(0.0), r.max(0.0) * (z[k] - sp.lo[k]).abs()),
            Bound::Upper => (r.max(0.0), (-r).max(0.0) * (sp.hi[k] - z[k]).abs()),
        };
        stationarity = stationarity.max(res);
        complementarity = complementarity.max(comp);
    }
    KktReport {
        stationarity,
        equality_residual,
        bound_violation,
        complementarity,
    }
}

/// Result of the exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub h: Vec<f64>,
    pub objective: f64,
    /// Upper bound on how far the grid minimum can sit above the true one.
    pub error_bound: f64,
}

/// Exhaustive search over a box grid for problems with at most four free
/// variables. One variable (largest `|a_i|`) is eliminated through the
/// equality; the others run over `resolution` evenly spaced values.
pub fn brute_force_oracle(problem: &QpProblem, resolution: usize) -> Result<OracleResult> {
    problem.validate()?;
    let free = problem.free_indices();
    if free.len() > 4 {
        return Err(PovError::Parameter(format!(
            "oracle handles at most 4 free variables, got {}",
            free.len()
        )));
    }
    if resolution < 2 {
        return Err(PovError::Parameter("oracle resolution must be >= 2".into()));
    }
    let pivot = *free
        .iter()
        .max_by(|&&i, &&j| problem.a_eq[i].abs().total_cmp(&problem.a_eq[j].abs()))
        .unwrap();
    if problem.a_eq[pivot] == 0.0 {
        return Err(PovError::Parameter("equality row is zero".into()));
    }
    let others: Vec<usize> = free.iter().copied().filter(|&i| i != pivot).collect();
    let step: Vec<f64> = others
        .iter()
        .map(|&i| (problem.upper[i] - problem.lower[i]) / (resolution - 1) as f64)
        .collect();
    let n = problem.dim();
    let total = resolution.pow(others.len() as u32);
    let width = problem.upper[pivot] - problem.lower[pivot];
    let slack = 1e-12 * width.max(1.0);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut h = vec![0.0; n];
    for code in 0..total {
        let mut rem = code;
        let mut partial = 0.0;
        for (r, &i) in others.iter().enumerate() {
            let m = rem % resolution;
            rem /= resolution;
            h[i] = problem.lower[i] + m as f64 * step[r];
            partial += problem.a_eq[i] * h[i];
        }
        let hp = (problem.b_eq - partial) / problem.a_eq[pivot];
        if hp < problem.lower[pivot] - slack || hp > problem.upper[pivot] + slack {
            continue;
        }
        h[pivot] = hp.clamp(problem.lower[pivot], problem.upper[pivot]);
        let f = problem.objective(&h);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, h.clone()));
        }
    }
    let (objective, h) = best.ok_or_else(|| {
        PovError::Parameter("no feasible grid point; increase the resolution".into())
    })?;

    // f(grid point) - f* <= G * diam + L * diam^2 for a cell of diameter diam
    let a_rest: f64 = others.iter().map(|&i| problem.a_eq[i].powi(2)).sum::<f64>().sqrt();
    let cell: f64 = step.iter().map(|s| s * s).sum::<f64>().sqrt();
    let diam = cell * (1.0 + a_rest / problem.a_eq[pivot].abs());
    let q_norm = problem.q.norm();
    let box_norm: f64 = free
        .iter()
        .map(|&i| problem.lower[i].abs().max(problem.upper[i].abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let c_norm: f64 = free.iter().map(|&i| problem.c[i].powi(2)).sum::<f64>().sqrt();
    let grad = 2.0 * q_norm * box_norm + c_norm;
    Ok(OracleResult {
        h,
        objective,
        error_bound: grad * diam + q_norm * diam * diam,
    })
}

/// Write `h` with its KKT report and status as CSV.
pub fn write_solution_csv(sol: &QpSolution, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "h"])?;
    for (i, h) in sol.h.iter().enumerate() {
        w.write_record([i.to_string(), fmt_num(*h)])?;
    }
    w.flush()?;
    Ok(())
}
