//! Monte Carlo studies: moment convergence over an ε ladder and tail
//! probabilities against the action certificate.
//!
//! Every path draws from its own indexed stream, so a given path index sees
//! the same Brownian increments at every ε (common random numbers) and the
//! results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{minimize_action_endpoint, OptimizerOptions, OptimizerStatus};
use crate::backward::{solve_bsde_grid, solve_limit_bsde, SpaceLattice};
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{integrate_reflected_sde, integrate_skeleton_ode, ReflectedTrajectory, TimeGrid};
use crate::geometry::Domain;
use crate::linalg::dist;
use crate::rng::{self, Purpose};
use crate::table::{Table, Cell};

/// Largest accepted relative standard error of a moment estimate.
pub const MAX_REL_SE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum Target {
    /// `E sup_t |X^ε_t - φ_t|⁴`
    X4,
    /// `E sup_t |K^ε_t - K_t|⁴`
    K4,
    /// `E sup_t |Y^ε_t - ψ_t|⁴` with `Y^ε_t = u^ε(t, X^ε_t)`.
    Y4,
    /// `E (K^ε_T)^p`
    Kmoment { p: f64 },
    /// `E exp(β K^ε_T)`
    Kexp { beta: f64 },
}

impl Target {
    fn has_slope(&self) -> bool {
        matches!(self, Target::X4 | Target::K4 | Target::Y4)
    }
}

/// Lattice settings for the `Y4` target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsdeSettings {
    pub lattice_points: usize,
    pub mc_per_node: usize,
}

impl Default for BsdeSettings {
    fn default() -> Self {
        BsdeSettings { lattice_points: 65, mc_per_node: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares on `(ln x, ln y)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidInput("log-log fit needs at least 3 paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("log-log fit needs finite positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub target: Target,
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Standard error of each estimate.
    pub ci_halfwidth: Vec<f64>,
    pub n_paths: usize,
    /// Absent for bounded-moment targets and when every error is zero.
    pub fit: Option<LogLogFit>,
    /// `max / min` of the estimates, for bounded-moment targets.
    pub spread: Option<f64>,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["epsilon", "estimate", "std_error"]);
        for i in 0..self.epsilons.len() {
            t.push(vec![self.epsilons[i].into(), self.errors[i].into(), self.ci_halfwidth[i].into()]);
        }
        t
    }
}

fn check_ladder(ladder: &[f64], min_len: usize, halving: bool) -> Result<()> {
    if ladder.len() < min_len {
        return Err(Error::InvalidInput(format!("epsilon ladder needs at least {min_len} levels")));
    }
    if ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidInput("epsilon ladder values must lie in (0, 1)".into()));
    }
    for w in ladder.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidInput("epsilon ladder must be strictly decreasing".into()));
        }
        if halving && ((w[1] / w[0]) - 0.5).abs() > 1e-9 {
            return Err(Error::InvalidInput("epsilon ladder must halve at each level".into()));
        }
    }
    Ok(())
}

/// Mean and standard error, reduced in index order.
fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Run `f` on every path index in parallel and return the samples in index
/// order (the first error by index wins).
fn per_path<F>(n_paths: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    let results: Vec<Result<f64>> = (0..n_paths as u64).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

fn sup_state_gap(a: &ReflectedTrajectory, b: &ReflectedTrajectory) -> f64 {
    (0..a.grid.n_nodes()).map(|i| dist(a.x(i), b.x(i))).fold(0.0, f64::max)
}

/// Estimate the target moment at every ε of the ladder and fit the log-log
/// slope for the difference targets.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    target: Target,
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    eps_ladder: &[f64],
    n_paths: usize,
    grid: TimeGrid,
    rng_seed: u64,
    bsde: &BsdeSettings,
) -> Result<ConvergenceReport> {
    check_ladder(eps_ladder, 4, true)?;
    if n_paths < 1000 {
        return Err(Error::InvalidInput("convergence studies need at least 1000 paths".into()));
    }
    let skeleton = integrate_skeleton_ode(coeffs, domain, x, grid)?;
    let psi = match target {
        Target::Y4 => Some(solve_limit_bsde(coeffs, &skeleton)?),
        _ => None,
    };
    let lattice = match target {
        Target::Y4 => Some(SpaceLattice::covering(domain, bsde.lattice_points)?),
        _ => None,
    };
    let k = coeffs.dims.k;
    let mut errors = Vec::with_capacity(eps_ladder.len());
    let mut ses = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let field = match &lattice {
            Some(lat) => Some(solve_bsde_grid(coeffs, domain, eps, grid, lat, bsde.mc_per_node, rng_seed)?),
            None => None,
        };
        let samples = per_path(n_paths, |idx| {
            let mut r = rng::trajectory_stream(rng_seed, idx);
            let traj = integrate_reflected_sde(coeffs, domain, x, eps, grid, &mut r)?;
            Ok(match target {
                Target::X4 => sup_state_gap(&traj, &skeleton).powi(4),
                Target::K4 => traj
                    .k_path
                    .iter()
                    .zip(&skeleton.k_path)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    .powi(4),
                Target::Kmoment { p } => traj.final_k().powf(p),
                Target::Kexp { beta } => (beta * traj.final_k()).exp(),
                Target::Y4 => {
                    let (field, psi) = (field.as_ref().unwrap(), psi.as_ref().unwrap());
                    let mut y = vec![0.0; k];
                    let mut worst = 0.0_f64;
                    for i in 0..grid.n_nodes() {
                        field.interpolate(i, traj.x(i), &mut y)?;
                        worst = worst.max(dist(&y, psi.y(i)));
                    }
                    worst.powi(4)
                }
            })
        })?;
        let (mean, se) = mean_se(&samples);
        if !mean.is_finite() {
            return Err(Error::NumericalBlowup { what: "moment estimate".into(), t: grid.t_end() });
        }
        if mean > 0.0 && se / mean > MAX_REL_SE {
            return Err(Error::InsufficientPaths { epsilon: eps, rel_se: se / mean, limit: MAX_REL_SE });
        }
        errors.push(mean);
        ses.push(se);
    }
    let (fit, spread) = if target.has_slope() {
        let fit = if errors.iter().all(|&e| e > 0.0) { Some(fit_loglog(eps_ladder, &errors)?) } else { None };
        (fit, None)
    } else {
        let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        (None, Some(max / min))
    };
    Ok(ConvergenceReport {
        target,
        epsilons: eps_ladder.to_vec(),
        errors,
        ci_halfwidth: ses,
        n_paths,
        fit,
        spread,
    })
}

// ---------------------------------------------------------------------------
// Tail study

#[derive(Debug, Clone, PartialEq)]
pub struct TailOptions {
    pub pilot_paths: usize,
    /// Steps of the path grid used for the action certificate.
    pub action_steps: usize,
    pub optimizer: OptimizerOptions,
    /// Slack on the lower bound `-S*`.
    pub tolerance: f64,
    /// Acceptable range of the tail probability at the smallest ε.
    pub p_range: (f64, f64),
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            pilot_paths: 1000,
            action_steps: 100,
            optimizer: OptimizerOptions::default(),
            tolerance: 0.05,
            p_range: (1e-4, 1e-1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LevelStatus {
    Estimated,
    /// No exceedance observed; the level is not estimable.
    ZeroHits,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub epsilons: Vec<f64>,
    pub delta_requested: f64,
    /// Threshold actually used (after the pilot adjustment).
    pub delta: f64,
    pub pilot_p: f64,
    pub hits: Vec<u64>,
    pub p_hat: Vec<f64>,
    pub p_se: Vec<f64>,
    /// `ε ln p̂`; `None` where no exceedance was seen.
    pub eps_log_p: Vec<Option<f64>>,
    pub status: Vec<LevelStatus>,
    /// Minimal action over paths ending at distance `δ` from the skeleton
    /// endpoint; `None` when no such endpoint lies in the domain.
    pub s_star: Option<f64>,
    pub s_star_status: Option<OptimizerStatus>,
    pub rate_bound: Option<f64>,
    pub n_paths: usize,
    /// `ε ln p̂` decreases as ε decreases over the estimable levels.
    pub decreasing: bool,
    /// Every estimable `ε ln p̂` is at least `-S* - tolerance`.
    pub above_bound: bool,
}

impl TailReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["epsilon", "hits", "p_hat", "p_se", "eps_log_p"]);
        for i in 0..self.epsilons.len() {
            t.push(vec![
                self.epsilons[i].into(),
                self.hits[i].into(),
                self.p_hat[i].into(),
                self.p_se[i].into(),
                Cell::Num(self.eps_log_p[i].unwrap_or(f64::NAN)),
            ]);
        }
        t
    }
}

/// Sup distance to the skeleton for every path at one ε.
#[allow(clippy::too_many_arguments)]
fn sup_gaps(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    eps: f64,
    grid: TimeGrid,
    skeleton: &ReflectedTrajectory,
    n_paths: usize,
    stream: impl Fn(u64) -> rand_chacha::ChaCha8Rng + Sync + Send,
) -> Result<Vec<f64>> {
    per_path(n_paths, |idx| {
        let mut r = stream(idx);
        let traj = integrate_reflected_sde(coeffs, domain, x, eps, grid, &mut r)?;
        Ok(sup_state_gap(&traj, skeleton))
    })
}

/// Crude Monte Carlo for `P(sup_t |X^ε_t - φ_t| ≥ δ)` over the ladder, with
/// the action certificate `S*` from endpoint minimization.
#[allow(clippy::too_many_arguments)]
pub fn tail_study(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    delta: f64,
    eps_ladder: &[f64],
    n_paths: usize,
    grid: TimeGrid,
    rng_seed: u64,
    opts: &TailOptions,
) -> Result<TailReport> {
    check_ladder(eps_ladder, 1, false)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    if n_paths == 0 || opts.pilot_paths < 2 {
        return Err(Error::InvalidInput("tail study needs paths".into()));
    }
    let skeleton = integrate_skeleton_ode(coeffs, domain, x, grid)?;

    // Pilot at the smallest ε. δ moves only when the pilot is clearly outside
    // the range and the event is possible at all.
    let eps_min = *eps_ladder.last().unwrap();
    let mut pilot = sup_gaps(coeffs, domain, x, eps_min, grid, &skeleton, opts.pilot_paths, |i| {
        rng::stream(rng_seed, Purpose::Pilot, i)
    })?;
    let hits = pilot.iter().filter(|&&g| g >= delta).count();
    let pilot_p = hits as f64 / pilot.len() as f64;
    let pilot_se = (pilot_p * (1.0 - pilot_p) / pilot.len() as f64).sqrt();
    let (lo, hi) = opts.p_range;
    let mut used = delta;
    let outside = hits == 0 || pilot_p - 3.0 * pilot_se > hi || pilot_p + 3.0 * pilot_se < lo;
    if outside && delta < domain.diameter() {
        pilot.sort_by(f64::total_cmp);
        let target = (lo * hi).sqrt().max(1.0 / pilot.len() as f64);
        let idx = ((1.0 - target) * pilot.len() as f64) as usize;
        let q = pilot[idx.min(pilot.len() - 1)];
        if q > 0.0 {
            used = q;
        }
    }

    let mut report = TailReport {
        epsilons: eps_ladder.to_vec(),
        delta_requested: delta,
        delta: used,
        pilot_p,
        hits: Vec::new(),
        p_hat: Vec::new(),
        p_se: Vec::new(),
        eps_log_p: Vec::new(),
        status: Vec::new(),
        s_star: None,
        s_star_status: None,
        rate_bound: None,
        n_paths,
        decreasing: true,
        above_bound: true,
    };
    for &eps in eps_ladder {
        let gaps = sup_gaps(coeffs, domain, x, eps, grid, &skeleton, n_paths, |i| rng::trajectory_stream(rng_seed, i))?;
        let h = gaps.iter().filter(|&&g| g >= used).count() as u64;
        let p = h as f64 / n_paths as f64;
        report.hits.push(h);
        report.p_hat.push(p);
        report.p_se.push((p * (1.0 - p) / n_paths as f64).sqrt());
        if h == 0 {
            report.eps_log_p.push(None);
            report.status.push(LevelStatus::ZeroHits);
        } else {
            report.eps_log_p.push(Some(eps * p.ln()));
            report.status.push(LevelStatus::Estimated);
        }
    }

    // Certificate: cheapest path ending at distance δ from the skeleton
    // endpoint along a coordinate direction.
    let action_grid = TimeGrid::new(grid.s(), grid.t_end(), opts.action_steps)?;
    let end = skeleton.final_x();
    let d = end.len();
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut y = end.to_vec();
            y[j] += sign * used;
            if !domain.contains(&y) {
                continue;
            }
            let r = minimize_action_endpoint(coeffs, domain, x, &y, action_grid, &opts.optimizer)?;
            if report.s_star.is_none_or(|s| r.best.action < s) {
                report.s_star = Some(r.best.action);
                report.s_star_status = Some(r.status);
            }
        }
    }
    report.rate_bound = report.s_star.map(|s| -s);

    let estimable: Vec<f64> = report.eps_log_p.iter().flatten().copied().collect();
    report.decreasing = estimable.windows(2).all(|w| w[1] < w[0]);
    report.above_bound = match report.rate_bound {
        Some(b) => estimable.iter().all(|&v| v >= b - opts.tolerance),
        None => estimable.is_empty(),
    };
    Ok(report)
}
