//! Freidlin–Wentzell action of discretized constrained paths, minimization
//! over paths with pinned or free endpoints, and the contracted rate through
//! a limit value field.

use serde::Serialize;

use crate::backward::ValueField;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{integrate_skeleton_ode, Path, TimeGrid};
use crate::geometry::Domain;
use crate::linalg::{dot, gram, min_eigenvalue_sym, solve_spd};
use crate::table::{Cell, Table};

/// Smallest admissible eigenvalue of `σσ*` along an evaluated path.
pub const MIN_DIFFUSION_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionResult {
    pub psi: Path,
    /// Recovered free path `Φ = Ψ - ρ`.
    pub phi: Path,
    pub action: f64,
    /// `½ (Φ̇ - b)ᵀ (σσ*)⁻¹ (Φ̇ - b)` per step.
    pub integrand: Vec<f64>,
    /// Boundary multiplier per step (`Φ̇ = Ψ̇ - λ ∇φ(Ψ_{i+1})`).
    pub lambda: Vec<f64>,
    pub feasible: bool,
}

/// Workspace for one step of the discrete action.
struct SegmentEval<'a> {
    coeffs: &'a CoefficientSet,
    domain: &'a dyn Domain,
    dt: f64,
    b: Vec<f64>,
    sigma: Vec<f64>,
    cov: Vec<f64>,
    v: Vec<f64>,
    n: Vec<f64>,
    a_v: Vec<f64>,
    a_n: Vec<f64>,
}

impl<'a> SegmentEval<'a> {
    fn new(coeffs: &'a CoefficientSet, domain: &'a dyn Domain, dt: f64) -> Self {
        let (d, m) = (coeffs.dims.d, coeffs.dims.m);
        SegmentEval {
            coeffs,
            domain,
            dt,
            b: vec![0.0; d],
            sigma: vec![0.0; d * m],
            cov: vec![0.0; d * d],
            v: vec![0.0; d],
            n: vec![0.0; d],
            a_v: vec![0.0; d],
            a_n: vec![0.0; d],
        }
    }

    /// Integrand and multiplier of the step `a -> b` starting at `t`, node
    /// index `i` (for error reporting). Leaves `Φ̇` in `self.v`.
    fn eval(&mut self, i: usize, t: f64, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        let (d, m) = (self.coeffs.dims.d, self.coeffs.dims.m);
        (self.coeffs.b)(t, a, &mut self.b);
        (self.coeffs.sigma)(t, a, &mut self.sigma);
        gram(&self.sigma, d, m, &mut self.cov);
        let lam_min = min_eigenvalue_sym(&self.cov, d);
        if !(lam_min >= MIN_DIFFUSION_EIGENVALUE) {
            return Err(Error::SingularDiffusion { node: i, min_eigenvalue: lam_min });
        }
        for j in 0..d {
            self.v[j] = (b[j] - a[j]) / self.dt - self.b[j];
        }
        let mut lambda = 0.0;
        if self.domain.phi(b) <= self.domain.boundary_tol() {
            self.domain.grad_phi(b, &mut self.n);
            solve_spd(&self.cov, d, &self.v, &mut self.a_v)
                .ok_or(Error::SingularDiffusion { node: i, min_eigenvalue: lam_min })?;
            solve_spd(&self.cov, d, &self.n, &mut self.a_n)
                .ok_or(Error::SingularDiffusion { node: i, min_eigenvalue: lam_min })?;
            let nan = dot(&self.n, &self.a_n);
            if nan > 0.0 {
                lambda = (dot(&self.n, &self.a_v) / nan).max(0.0);
            }
            for j in 0..d {
                self.v[j] -= lambda * self.n[j];
            }
        }
        solve_spd(&self.cov, d, &self.v, &mut self.a_v)
            .ok_or(Error::SingularDiffusion { node: i, min_eigenvalue: lam_min })?;
        let value = 0.5 * dot(&self.v, &self.a_v);
        if !value.is_finite() {
            return Err(Error::NumericalBlowup { what: "action integrand".into(), t });
        }
        for j in 0..d {
            self.v[j] += self.b[j];
        }
        Ok((value.max(0.0), lambda))
    }
}

/// Discrete action `Δ Σ_i ½ (Φ̇_i - b)ᵀ (σσ*)⁻¹ (Φ̇_i - b)` with `b, σ` at
/// `(t_i, Ψ_i)`. On steps ending at the boundary the free increment is
/// `Ψ̇ - λ ∇φ`, with `λ ≥ 0` minimizing the quadratic form.
pub fn evaluate_action(coeffs: &CoefficientSet, domain: &dyn Domain, psi: &Path) -> Result<ActionResult> {
    let d = coeffs.dims.d;
    if psi.dim != d || domain.dim() != d {
        return Err(Error::InvalidInput("path, domain and model dimensions differ".into()));
    }
    for (i, p) in psi.points().enumerate() {
        if !domain.contains(p) {
            return Err(Error::InfeasiblePath { node: i });
        }
    }
    let grid = psi.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut seg = SegmentEval::new(coeffs, domain, dt);
    let mut integrand = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut phi = vec![0.0; (n + 1) * d];
    phi[..d].copy_from_slice(psi.point(0));
    for i in 0..n {
        let (val, lam) = seg.eval(i, grid.time(i), psi.point(i), psi.point(i + 1))?;
        integrand[i] = val;
        lambda[i] = lam;
        for j in 0..d {
            phi[(i + 1) * d + j] = phi[i * d + j] + dt * seg.v[j];
        }
    }
    let action = dt * integrand.iter().sum::<f64>();
    Ok(ActionResult {
        psi: psi.clone(),
        phi: Path { grid, dim: d, values: phi },
        action,
        integrand,
        lambda,
        feasible: true,
    })
}

// ---------------------------------------------------------------------------
// Optimizer

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient entry falls below this.
    pub gtol: f64,
    /// Finite-difference step; defaults to `1e-6 · diam`.
    pub fd_step: Option<f64>,
    /// Consecutive failed line searches before giving up.
    pub stall_limit: usize,
    /// Starting path; defaults to the straight line (endpoint problems) or
    /// the skeleton (contraction problems).
    pub initial: Option<Path>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { max_iter: 5000, gtol: 1e-9, fd_step: None, stall_limit: 50, initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
    /// The line search failed `stall_limit` times in a row.
    NoDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Penalized objective for contraction problems, the action otherwise.
    pub objective: f64,
    pub action: f64,
    pub step: f64,
    /// Constraint violation in sup norm, 0 for endpoint problems.
    pub violation: f64,
}

pub fn iteration_log_table(log: &[IterRecord]) -> Table {
    let mut t = Table::new(["iter", "objective", "action", "step", "violation"]);
    for r in log {
        t.push(vec![r.iter.into(), r.objective.into(), r.action.into(), r.step.into(), r.violation.into()]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub best: ActionResult,
    pub log: Vec<IterRecord>,
    pub status: OptimizerStatus,
}

/// Additive node penalty of a path objective.
trait NodeTerm {
    fn eval(&self, i: usize, t: f64, p: &[f64]) -> Result<f64>;
    fn violation(&self, i: usize, t: f64, p: &[f64]) -> Result<f64>;
}

struct NoPenalty;

impl NodeTerm for NoPenalty {
    fn eval(&self, _: usize, _: f64, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    fn violation(&self, _: usize, _: f64, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

struct Problem<'a, N: NodeTerm> {
    coeffs: &'a CoefficientSet,
    domain: &'a dyn Domain,
    grid: TimeGrid,
    free_end: bool,
    penalty: N,
}

impl<N: NodeTerm> Problem<'_, N> {
    fn last_free(&self) -> usize {
        let n = self.grid.n_steps();
        if self.free_end { n } else { n - 1 }
    }

    /// (objective, action)
    fn total(&self, seg: &mut SegmentEval, path: &[f64]) -> Result<(f64, f64)> {
        let d = self.coeffs.dims.d;
        let n = self.grid.n_steps();
        let mut action = 0.0;
        for i in 0..n {
            action += seg.eval(i, self.grid.time(i), &path[i * d..(i + 1) * d], &path[(i + 1) * d..(i + 2) * d])?.0;
        }
        action *= self.grid.dt();
        let mut pen = 0.0;
        for i in 1..=n {
            pen += self.penalty.eval(i, self.grid.time(i), &path[i * d..(i + 1) * d])?;
        }
        Ok((action + pen, action))
    }

    fn violation(&self, path: &[f64]) -> Result<f64> {
        let d = self.coeffs.dims.d;
        let mut worst = 0.0_f64;
        for i in 0..self.grid.n_nodes() {
            worst = worst.max(self.penalty.violation(i, self.grid.time(i), &path[i * d..(i + 1) * d])?);
        }
        Ok(worst)
    }

    /// The part of the objective that depends on node `j`, evaluated with
    /// node `j` replaced by `p`.
    fn local(&self, seg: &mut SegmentEval, path: &[f64], j: usize, p: &[f64]) -> Result<f64> {
        let d = self.coeffs.dims.d;
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let mut v = dt * seg.eval(j - 1, self.grid.time(j - 1), &path[(j - 1) * d..j * d], p)?.0;
        if j < n {
            v += dt * seg.eval(j, self.grid.time(j), p, &path[(j + 1) * d..(j + 2) * d])?.0;
        }
        Ok(v + self.penalty.eval(j, self.grid.time(j), p)?)
    }

    fn gradient(&self, seg: &mut SegmentEval, path: &[f64], h: f64, grad: &mut [f64]) -> Result<()> {
        let d = self.coeffs.dims.d;
        grad.fill(0.0);
        let mut p = vec![0.0; d];
        for j in 1..=self.last_free() {
            for c in 0..d {
                p.copy_from_slice(&path[j * d..(j + 1) * d]);
                p[c] += h;
                let up = self.local(seg, path, j, &p)?;
                p[c] -= 2.0 * h;
                let down = self.local(seg, path, j, &p)?;
                grad[j * d + c] = (up - down) / (2.0 * h);
            }
        }
        Ok(())
    }

    /// Projected gradient descent with a Barzilai–Borwein trial step and
    /// monotone Armijo backtracking.
    fn minimize(&self, start: &[f64], opts: &OptimizerOptions, log: &mut Vec<IterRecord>) -> Result<(Vec<f64>, OptimizerStatus)> {
        let d = self.coeffs.dims.d;
        let dt = self.grid.dt();
        let diam = self.domain.diameter();
        let mut seg = SegmentEval::new(self.coeffs, self.domain, dt);
        let mut h = opts.fd_step.unwrap_or(1e-6 * diam);
        let mut path = start.to_vec();
        let (mut obj, mut act) = self.total(&mut seg, &path)?;
        let iter0 = log.len();
        log.push(IterRecord { iter: iter0, objective: obj, action: act, step: 0.0, violation: self.violation(&path)? });
        let mut grad = vec![0.0; path.len()];
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut stalls = 0;
        let mut trial = path.clone();
        let mut proj = vec![0.0; d];
        for _ in 0..opts.max_iter {
            self.gradient(&mut seg, &path, h, &mut grad)?;
            let gmax = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
            if gmax <= opts.gtol {
                return Ok((path, OptimizerStatus::Converged));
            }
            let mut alpha = match &prev {
                Some((p0, g0)) => {
                    let (mut ss, mut sy) = (0.0, 0.0);
                    for i in 0..path.len() {
                        let s = path[i] - p0[i];
                        ss += s * s;
                        sy += s * (grad[i] - g0[i]);
                    }
                    if sy > 0.0 { ss / sy } else { dt }
                }
                None => dt,
            };
            alpha = alpha.min(0.25 * diam / gmax);
            let mut accepted = None;
            for _ in 0..60 {
                for j in 1..=self.last_free() {
                    for c in 0..d {
                        proj[c] = path[j * d + c] - alpha * grad[j * d + c];
                    }
                    self.domain.project(&proj, &mut trial[j * d..(j + 1) * d]);
                }
                let decrease: f64 = path.iter().zip(&trial).zip(&grad).map(|((p, q), g)| g * (p - q)).sum();
                if decrease <= 0.0 {
                    alpha *= 0.5;
                    continue;
                }
                let (o, a) = self.total(&mut seg, &trial)?;
                if o <= obj - 1e-4 * decrease && o < obj {
                    accepted = Some((o, a));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((o, a)) => {
                    stalls = 0;
                    prev = Some((path.clone(), grad.clone()));
                    std::mem::swap(&mut path, &mut trial);
                    trial.copy_from_slice(&path);
                    obj = o;
                    act = a;
                    log.push(IterRecord {
                        iter: log.len(),
                        objective: obj,
                        action: act,
                        step: alpha,
                        violation: self.violation(&path)?,
                    });
                }
                None => {
                    stalls += 1;
                    trial.copy_from_slice(&path);
                    if stalls >= opts.stall_limit {
                        return Ok((path, OptimizerStatus::NoDescent));
                    }
                    // a finer difference step may recover a descent direction
                    h = (h * 0.5).max(1e-12 * diam);
                    prev = None;
                }
            }
        }
        Ok((path, OptimizerStatus::MaxIterations))
    }
}

fn straight_line(grid: TimeGrid, x: &[f64], y: &[f64]) -> Path {
    let (s, t) = (grid.s(), grid.t_end());
    Path::from_fn(grid, x.len(), |r| {
        let w = (r - s) / (t - s);
        x.iter().zip(y).map(|(a, b)| a + w * (b - a)).collect()
    })
}

fn check_endpoint(domain: &dyn Domain, p: &[f64], what: &str) -> Result<()> {
    if p.len() != domain.dim() {
        return Err(Error::InvalidInput(format!("{what} has dimension {}, domain {}", p.len(), domain.dim())));
    }
    if !domain.contains(p) {
        return Err(Error::InvalidInput(format!("{what} {p:?} lies outside the closed domain")));
    }
    Ok(())
}

/// Minimize the action over paths on `grid` from `x` to `y`. The returned
/// action is an upper bound of the discrete infimum; the log holds every
/// accepted iterate.
pub fn minimize_action_endpoint(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    y: &[f64],
    grid: TimeGrid,
    opts: &OptimizerOptions,
) -> Result<MinimizeResult> {
    check_endpoint(domain, x, "start point")?;
    check_endpoint(domain, y, "target")?;
    let start = match &opts.initial {
        Some(p) => {
            if p.grid != grid || p.point(0) != x || p.point(grid.n_steps()) != y {
                return Err(Error::InvalidInput("initial path must share the grid and endpoints".into()));
            }
            p.clone()
        }
        None => straight_line(grid, x, y),
    };
    let problem = Problem { coeffs, domain, grid, free_end: false, penalty: NoPenalty };
    let mut log = Vec::new();
    let (path, status) = problem.minimize(&start.values, opts, &mut log)?;
    let best = evaluate_action(coeffs, domain, &Path { grid, dim: x.len(), values: path })?;
    Ok(MinimizeResult { best, log, status })
}

struct Contraction<'a> {
    domain: &'a dyn Domain,
    field: &'a ValueField,
    gamma: &'a [f64],
    mu: f64,
}

impl Contraction<'_> {
    /// `u(t, P(p))`: difference probes may step just outside the domain.
    fn u(&self, t: f64, p: &[f64]) -> Result<Vec<f64>> {
        let mut q = vec![0.0; p.len()];
        self.domain.project(p, &mut q);
        let mut u = vec![0.0; self.field.k];
        self.field.eval(t, &q, &mut u)?;
        Ok(u)
    }
}

impl NodeTerm for Contraction<'_> {
    fn eval(&self, i: usize, t: f64, p: &[f64]) -> Result<f64> {
        let k = self.field.k;
        let u = self.u(t, p)?;
        let g = &self.gamma[i * k..(i + 1) * k];
        Ok(self.mu * u.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }

    fn violation(&self, i: usize, t: f64, p: &[f64]) -> Result<f64> {
        let k = self.field.k;
        let u = self.u(t, p)?;
        let g = &self.gamma[i * k..(i + 1) * k];
        Ok(u.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionOptions {
    pub optimizer: OptimizerOptions,
    pub mu0: f64,
    pub growth: f64,
    pub stages: usize,
    /// Largest admissible final violation (sup norm).
    pub tolerance: f64,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions {
            optimizer: OptimizerOptions { max_iter: 1000, ..OptimizerOptions::default() },
            mu0: 10.0,
            growth: 10.0,
            stages: 5,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractedRate {
    /// Action of the final path; an upper bound of the contracted rate when
    /// the violation is within tolerance.
    pub s_prime: f64,
    pub argmin: ActionResult,
    pub violation: f64,
    pub stage_status: Vec<OptimizerStatus>,
    pub log: Vec<IterRecord>,
}

/// Minimize `S(Ψ) + μ Σ_i |u(t_i, Ψ_i) - Γ_i|²` over paths from `x` with a free
/// endpoint, raising `μ` by `growth` over `stages` stages. `gamma` holds
/// `(n + 1) x k` values on `grid`; `field` is the limit field `u`.
pub fn contracted_rate(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    field: &ValueField,
    x: &[f64],
    gamma: &[f64],
    grid: TimeGrid,
    opts: &ContractionOptions,
) -> Result<ContractedRate> {
    check_endpoint(domain, x, "start point")?;
    if gamma.len() != grid.n_nodes() * field.k {
        return Err(Error::InvalidInput(format!(
            "gamma has {} values, expected {}",
            gamma.len(),
            grid.n_nodes() * field.k
        )));
    }
    if opts.stages == 0 || !(opts.mu0 > 0.0) || !(opts.growth >= 1.0) {
        return Err(Error::InvalidInput("penalty schedule needs stages >= 1, mu0 > 0, growth >= 1".into()));
    }
    let start = match &opts.optimizer.initial {
        Some(p) => {
            if p.grid != grid || p.point(0) != x {
                return Err(Error::InvalidInput("initial path must share the grid and start point".into()));
            }
            p.clone()
        }
        None => integrate_skeleton_ode(coeffs, domain, x, grid)?.state_path(),
    };
    let mut path = start.values;
    let mut log = Vec::new();
    let mut stage_status = Vec::new();
    let mut mu = opts.mu0;
    let mut violation = f64::INFINITY;
    for _ in 0..opts.stages {
        let problem = Problem {
            coeffs,
            domain,
            grid,
            free_end: true,
            penalty: Contraction { domain, field, gamma, mu },
        };
        let (next, status) = problem.minimize(&path, &opts.optimizer, &mut log)?;
        path = next;
        stage_status.push(status);
        violation = problem.violation(&path)?;
        mu *= opts.growth;
    }
    let argmin = evaluate_action(coeffs, domain, &Path { grid, dim: x.len(), values: path })?;
    if !(violation <= opts.tolerance) {
        return Err(Error::ConstraintInfeasible { violation, tolerance: opts.tolerance });
    }
    Ok(ContractedRate { s_prime: argmin.action, argmin, violation, stage_status, log })
}

impl ActionResult {
    /// Columns `t, psi_1.., phi_1.., integrand, lambda` (last two blank-free:
    /// the final node repeats 0).
    pub fn to_table(&self) -> Table {
        let d = self.psi.dim;
        let mut t = Table::new(
            std::iter::once("t".to_string())
                .chain(crate::table::indexed("psi", d))
                .chain(crate::table::indexed("phi", d))
                .chain(["integrand".to_string(), "lambda".to_string()]),
        );
        let n = self.psi.grid.n_steps();
        for i in 0..=n {
            let mut row = vec![Cell::from(self.psi.grid.time(i))];
            row.extend(self.psi.point(i).iter().map(|&v| Cell::from(v)));
            row.extend(self.phi.point(i).iter().map(|&v| Cell::from(v)));
            row.push(self.integrand.get(i).copied().unwrap_or(0.0).into());
            row.push(self.lambda.get(i).copied().unwrap_or(0.0).into());
            t.push(row);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{apply_pi, solve_limit_field, SpaceLattice};
    use crate::coefficients::preset;
    use crate::geometry::DomainSpec;
    use std::collections::BTreeMap;

    fn bm() -> CoefficientSet {
        preset("zero-drift-unit-noise", &BTreeMap::new()).unwrap()
    }

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn straight_interior_path() {
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let psi = Path::from_fn(grid, 1, |t| vec![0.25 + 0.5 * t]);
        let r = evaluate_action(&bm(), &unit(), &psi).unwrap();
        assert!((r.action - 0.125).abs() < 1e-10);
        let sum: f64 = r.integrand.iter().sum();
        assert!((r.action - grid.dt() * sum).abs() < 1e-12);
        assert!(r.phi.sup_dist(&psi) < 1e-12);
    }

    #[test]
    fn skeleton_has_zero_action() {
        let c = preset("constant-drift", &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let sk = integrate_skeleton_ode(&c, &unit(), &[0.5], grid).unwrap();
        let r = evaluate_action(&c, &unit(), &sk.state_path()).unwrap();
        assert!(r.action < 1e-10, "{}", r.action);
        // λ recovers dK/dt on the boundary
        for i in 150..200 {
            assert!((r.lambda[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_and_singular_paths() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let psi = Path::from_fn(grid, 1, |t| vec![0.5 + t]);
        assert_eq!(evaluate_action(&bm(), &unit(), &psi).unwrap_err(), Error::InfeasiblePath { node: 3 });
        let flat = preset("zero-drift-unit-noise", &[("sigma".to_string(), 0.0)].into()).unwrap();
        let psi = Path::from_fn(grid, 1, |t| vec![0.5 + 0.1 * t]);
        assert!(matches!(evaluate_action(&flat, &unit(), &psi), Err(Error::SingularDiffusion { node: 0, .. })));
    }

    #[test]
    fn scaling_sigma_divides_action() {
        let c = preset("ou-in-ball", &BTreeMap::new()).unwrap();
        let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let psi = Path::from_fn(grid, 2, |t| vec![0.3 * t, -0.2 + 0.1 * t * t]);
        let a = evaluate_action(&c, &ball, &psi).unwrap().action;
        let b = evaluate_action(&c.scale_diffusion(2.0), &ball, &psi).unwrap().action;
        assert!((a / 4.0 - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn endpoint_minimization_brownian() {
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        // start from a bent path so the optimizer has work to do
        let init = Path::from_fn(grid, 1, |t| vec![0.5 + 0.4 * t + 0.2 * (std::f64::consts::PI * t).sin()]);
        let opts = OptimizerOptions { initial: Some(init), ..OptimizerOptions::default() };
        let r = minimize_action_endpoint(&bm(), &unit(), &[0.5], &[0.9], grid, &opts).unwrap();
        assert!((r.best.action - 0.08).abs() < 0.0008, "{}", r.best.action);
        let line = straight_line(grid, &[0.5], &[0.9]);
        assert!(r.best.psi.sup_dist(&line) < 1e-3);
        assert!(r.log.windows(2).all(|w| w[1].objective <= w[0].objective));
    }

    #[test]
    fn contraction_of_skeleton_is_free() {
        let c = preset("linear-bsde", &[("g0".to_string(), 1.0)].into()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let lat = SpaceLattice::covering(&unit(), 41).unwrap();
        let field = solve_limit_field(&c, &unit(), grid, &lat).unwrap();
        let sk = integrate_skeleton_ode(&c, &unit(), &[0.3], grid).unwrap();
        let gamma = apply_pi(&field, &sk.state_path()).unwrap();
        let r = contracted_rate(&c, &unit(), &field, &[0.3], &gamma, grid, &ContractionOptions::default()).unwrap();
        assert!(r.s_prime <= 1e-6);
        assert!(r.violation <= 1e-6);
    }

    #[test]
    fn unattainable_target_is_infeasible() {
        let c = bm();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let lat = SpaceLattice::covering(&unit(), 11).unwrap();
        let field = solve_limit_field(&c, &unit(), grid, &lat).unwrap();
        let gamma = vec![5.0; grid.n_nodes()];
        let opts = ContractionOptions {
            optimizer: OptimizerOptions { max_iter: 50, ..OptimizerOptions::default() },
            ..ContractionOptions::default()
        };
        let err = contracted_rate(&c, &unit(), &field, &[0.5], &gamma, grid, &opts).unwrap_err();
        assert!(matches!(err, Error::ConstraintInfeasible { .. }));
    }
}
