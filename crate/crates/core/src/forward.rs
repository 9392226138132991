//! Forward dynamics: the projection Euler scheme for the reflected SDE, its
//! noise-free skeleton, the unconstrained Euler–Maruyama path and the
//! discrete Skorokhod map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{dist, dot};
use crate::rng;
use crate::table::{indexed, Cell, Table};

/// Projection corrections below this size at interior points are rounding
/// noise and do not count towards `K`.
pub const INTERIOR_CORRECTION_FLOOR: f64 = 1e-14;

/// Uniform grid `s = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    s: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(s: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs at least one step".into()));
        }
        if !(s.is_finite() && t_end.is_finite() && s < t_end) {
            return Err(Error::InvalidInput(format!("time grid needs s < T, got s = {s}, T = {t_end}")));
        }
        Ok(TimeGrid { s, t_end, n_steps })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.s) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.s + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.time(i)).collect()
    }

    /// The grid from node `i` to the end.
    pub fn tail(&self, i: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.time(i), self.t_end, self.n_steps - i)
    }
}

/// A discretized path in `ℝ^d`, one point per grid node, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
}

/// An unconstrained path (input of the Skorokhod map).
pub type FreePath = Path;

impl Path {
    pub fn from_points(grid: TimeGrid, points: &[Vec<f64>]) -> Result<Self> {
        if points.len() != grid.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "path has {} points, grid has {} nodes",
                points.len(),
                grid.n_nodes()
            )));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("path points have inconsistent dimension".into()));
        }
        Ok(Path { grid, dim, values: points.concat() })
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        for t in grid.times() {
            let p = f(t);
            assert_eq!(p.len(), dim);
            values.extend(p);
        }
        Path { grid, dim, values }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// `sup_i |self_i - other_i|`.
    pub fn sup_dist(&self, other: &Path) -> f64 {
        self.points().zip(other.points()).map(|(a, b)| dist(a, b)).fold(0.0, f64::max)
    }

    pub fn to_table(&self, prefix: &str) -> Table {
        let mut t = Table::new(std::iter::once("t".to_string()).chain(indexed(prefix, self.dim)));
        for (i, p) in self.points().enumerate() {
            let mut row = vec![Cell::from(self.grid.time(i))];
            row.extend(p.iter().map(|&v| Cell::from(v)));
            t.push(row);
        }
        t
    }
}

/// State path and reflection budget of the projection Euler scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedTrajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    pub noise_dim: usize,
    /// `(n + 1) x d`.
    pub x_path: Vec<f64>,
    /// `n + 1` values, nondecreasing, starting at 0.
    pub k_path: Vec<f64>,
    /// `n x d`; unit direction of each correction, zero where none was applied.
    pub k_dirs: Vec<f64>,
    /// `n x m` Brownian increments; empty when `epsilon == 0`.
    pub noise: Vec<f64>,
    pub epsilon: f64,
}

impl ReflectedTrajectory {
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x_path[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dir(&self, i: usize) -> &[f64] {
        &self.k_dirs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dw(&self, i: usize) -> &[f64] {
        &self.noise[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    pub fn final_x(&self) -> &[f64] {
        self.x(self.grid.n_steps())
    }

    pub fn final_k(&self) -> f64 {
        self.k_path[self.grid.n_steps()]
    }

    pub fn state_path(&self) -> Path {
        Path { grid: self.grid, dim: self.dim, values: self.x_path.clone() }
    }

    /// Columns `t, x_1..x_d, K`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            std::iter::once("t".to_string())
                .chain(indexed("x", self.dim))
                .chain(std::iter::once("K".to_string())),
        );
        for i in 0..self.grid.n_nodes() {
            let mut row = vec![Cell::from(self.grid.time(i))];
            row.extend(self.x(i).iter().map(|&v| Cell::from(v)));
            row.push(self.k_path[i].into());
            t.push(row);
        }
        t
    }

    /// Human-readable list of broken structural invariants: containment,
    /// `K(0) = 0`, monotone `K`, and `K` flat away from the boundary.
    pub fn invariant_violations(&self, domain: &dyn Domain) -> Vec<String> {
        let mut out = Vec::new();
        if self.k_path[0] != 0.0 {
            out.push(format!("K(0) = {} != 0", self.k_path[0]));
        }
        for i in 0..self.grid.n_nodes() {
            if !domain.contains(self.x(i)) {
                out.push(format!("node {i} outside the closed domain: {:?}", self.x(i)));
            }
            if i > 0 {
                let dk = self.k_path[i] - self.k_path[i - 1];
                if dk < 0.0 {
                    out.push(format!("K decreases at node {i}"));
                }
                if dk > 0.0 && !domain.on_boundary(self.x(i)) {
                    out.push(format!("K increases at interior node {i} (phi = {:e})", domain.phi(self.x(i))));
                }
            }
        }
        out
    }
}

/// One step of the projection Euler scheme with reusable buffers.
pub struct Stepper<'a> {
    coeffs: &'a CoefficientSet,
    domain: &'a dyn Domain,
    b: Vec<f64>,
    sigma: Vec<f64>,
    proposal: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(coeffs: &'a CoefficientSet, domain: &'a dyn Domain) -> Self {
        let d = coeffs.dims.d;
        Stepper {
            coeffs,
            domain,
            b: vec![0.0; d],
            sigma: vec![0.0; d * coeffs.dims.m],
            proposal: vec![0.0; d],
        }
    }

    /// Euler proposal `x + b Δ + √ε σ ΔW`; without noise the diffusion is not
    /// evaluated at all.
    pub fn propose(&mut self, t: f64, dt: f64, x: &[f64], noise: Option<(f64, &[f64])>) -> Result<&[f64]> {
        (self.coeffs.b)(t, x, &mut self.b);
        if !self.b.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowup { what: "drift".into(), t });
        }
        for ((p, xi), bi) in self.proposal.iter_mut().zip(x).zip(&self.b) {
            *p = xi + bi * dt;
        }
        if let Some((sqrt_eps, dw)) = noise {
            (self.coeffs.sigma)(t, x, &mut self.sigma);
            if !self.sigma.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericalBlowup { what: "diffusion".into(), t });
            }
            let m = dw.len();
            for (j, p) in self.proposal.iter_mut().enumerate() {
                *p += sqrt_eps * dot(&self.sigma[j * m..(j + 1) * m], dw);
            }
        }
        if !self.proposal.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowup { what: "state".into(), t });
        }
        Ok(&self.proposal)
    }

    /// Proposal followed by projection. Writes the new state and the
    /// correction direction; returns the increment of `K`.
    pub fn step(
        &mut self,
        t: f64,
        dt: f64,
        x: &[f64],
        noise: Option<(f64, &[f64])>,
        out: &mut [f64],
        dir: &mut [f64],
    ) -> Result<f64> {
        self.propose(t, dt, x, noise)?;
        self.domain.project(&self.proposal, out);
        let mut dk = dist(out, &self.proposal);
        if dk < INTERIOR_CORRECTION_FLOOR && !self.domain.on_boundary(out) {
            dk = 0.0;
        }
        if dk > 0.0 {
            for ((o, xo), p) in dir.iter_mut().zip(out.iter()).zip(&self.proposal) {
                *o = (xo - p) / dk;
            }
        } else {
            dir.fill(0.0);
        }
        Ok(dk)
    }
}

fn check_start(coeffs: &CoefficientSet, domain: &dyn Domain, x: &[f64]) -> Result<()> {
    if x.len() != coeffs.dims.d || domain.dim() != coeffs.dims.d {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: start point {}, domain {}, model {}",
            x.len(),
            domain.dim(),
            coeffs.dims.d
        )));
    }
    if !domain.contains(x) {
        return Err(Error::StartOutsideDomain);
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Projection Euler scheme driven by a given increment record (`n x m`,
/// ignored when `epsilon == 0`).
pub fn integrate_reflected_with_noise(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    epsilon: f64,
    grid: TimeGrid,
    noise: Vec<f64>,
) -> Result<ReflectedTrajectory> {
    check_start(coeffs, domain, x)?;
    check_epsilon(epsilon)?;
    let (d, m, n) = (coeffs.dims.d, coeffs.dims.m, grid.n_steps());
    let noise = if epsilon == 0.0 { Vec::new() } else { noise };
    if epsilon > 0.0 && noise.len() != n * m {
        return Err(Error::MissingNoise(epsilon));
    }
    let sqrt_eps = epsilon.sqrt();
    let dt = grid.dt();
    let mut x_path = vec![0.0; (n + 1) * d];
    let mut k_path = vec![0.0; n + 1];
    let mut k_dirs = vec![0.0; n * d];
    x_path[..d].copy_from_slice(x);
    let mut stepper = Stepper::new(coeffs, domain);
    for i in 0..n {
        let (done, rest) = x_path.split_at_mut((i + 1) * d);
        let xi = &done[i * d..];
        let dw = (epsilon > 0.0).then(|| (sqrt_eps, &noise[i * m..(i + 1) * m]));
        let dk = stepper.step(grid.time(i), dt, xi, dw, &mut rest[..d], &mut k_dirs[i * d..(i + 1) * d])?;
        k_path[i + 1] = k_path[i] + dk;
    }
    Ok(ReflectedTrajectory { grid, dim: d, noise_dim: m, x_path, k_path, k_dirs, noise, epsilon })
}

/// Projection Euler scheme for the reflected SDE. Increments are drawn from
/// `rng` only when `epsilon > 0`, so `epsilon == 0` reproduces the skeleton
/// bitwise.
pub fn integrate_reflected_sde<R: Rng + ?Sized>(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    epsilon: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<ReflectedTrajectory> {
    check_epsilon(epsilon)?;
    let mut noise = Vec::new();
    if epsilon > 0.0 {
        noise = vec![0.0; grid.n_steps() * coeffs.dims.m];
        rng::fill_normal(rng, grid.dt(), &mut noise);
    }
    integrate_reflected_with_noise(coeffs, domain, x, epsilon, grid, noise)
}

/// The reflected ODE `dφ ∈ b dt + ∇φ dK`, i.e. the scheme without noise.
pub fn integrate_skeleton_ode(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    grid: TimeGrid,
) -> Result<ReflectedTrajectory> {
    integrate_reflected_with_noise(coeffs, domain, x, 0.0, grid, Vec::new())
}

/// Plain Euler–Maruyama without projection. Draws the same increments as
/// [`integrate_reflected_sde`] for the same stream.
pub fn integrate_free_sde<R: Rng + ?Sized>(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    x: &[f64],
    epsilon: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<FreePath> {
    check_start(coeffs, domain, x)?;
    check_epsilon(epsilon)?;
    let (d, m, n) = (coeffs.dims.d, coeffs.dims.m, grid.n_steps());
    let mut noise = Vec::new();
    if epsilon > 0.0 {
        noise = vec![0.0; n * m];
        rng::fill_normal(rng, grid.dt(), &mut noise);
    }
    let sqrt_eps = epsilon.sqrt();
    let dt = grid.dt();
    let mut values = vec![0.0; (n + 1) * d];
    values[..d].copy_from_slice(x);
    let mut stepper = Stepper::new(coeffs, domain);
    for i in 0..n {
        let dw = (epsilon > 0.0).then(|| (sqrt_eps, &noise[i * m..(i + 1) * m]));
        let next = stepper.propose(grid.time(i), dt, &values[i * d..(i + 1) * d], dw)?.to_vec();
        values[(i + 1) * d..(i + 2) * d].copy_from_slice(&next);
    }
    Ok(Path { grid, dim: d, values })
}

/// `Ψ = Φ + ρ` with `Ψ` constrained to the closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SkorokhodDecomposition {
    pub psi: Path,
    pub rho: Path,
    /// `|ρ|` accumulated up to each node.
    pub total_variation: Vec<f64>,
}

/// Discrete Skorokhod map: `ψ_{i+1} = P(ψ_i + Φ_{i+1} - Φ_i)`, with `ρ` the
/// sum of the applied corrections.
pub fn skorokhod_map(domain: &dyn Domain, phi: &FreePath) -> Result<SkorokhodDecomposition> {
    let d = phi.dim;
    if domain.dim() != d {
        return Err(Error::InvalidInput("path and domain dimensions differ".into()));
    }
    if !domain.contains(phi.point(0)) {
        return Err(Error::StartOutsideDomain);
    }
    let n = phi.grid.n_steps();
    let mut psi = phi.values.clone();
    let mut rho = vec![0.0; (n + 1) * d];
    let mut tv = vec![0.0; n + 1];
    let mut proposal = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            proposal[j] = psi[i * d + j] + (phi.values[(i + 1) * d + j] - phi.values[i * d + j]);
        }
        let next = &mut psi[(i + 1) * d..(i + 2) * d];
        domain.project(&proposal, next);
        let mut c = dist(next, &proposal);
        if c < INTERIOR_CORRECTION_FLOOR && !domain.on_boundary(next) {
            c = 0.0;
        }
        tv[i + 1] = tv[i] + c;
        for j in 0..d {
            rho[(i + 1) * d + j] = rho[i * d + j] + (next[j] - proposal[j]);
        }
    }
    Ok(SkorokhodDecomposition {
        psi: Path { grid: phi.grid, dim: d, values: psi },
        rho: Path { grid: phi.grid, dim: d, values: rho },
        total_variation: tv,
    })
}

/// Sup over nodes of `|K_t - R_t|`, where `R_t` is the Itô expansion of
/// `φ(X_t) - φ(x)` evaluated with left-point sums and the recorded increments.
pub fn reflection_budget_identity(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    traj: &ReflectedTrajectory,
) -> Result<f64> {
    let (d, m, n) = (traj.dim, traj.noise_dim, traj.grid.n_steps());
    let eps = traj.epsilon;
    if eps > 0.0 && traj.noise.len() != n * m {
        return Err(Error::MissingNoise(eps));
    }
    let dt = traj.grid.dt();
    let sqrt_eps = eps.sqrt();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * m];
    let phi0 = domain.phi(traj.x(0));
    let mut integral = 0.0;
    let mut worst = 0.0_f64;
    for i in 0..n {
        let t = traj.grid.time(i);
        let x = traj.x(i);
        domain.grad_phi(x, &mut grad);
        (coeffs.b)(t, x, &mut b);
        integral += dot(&grad, &b) * dt;
        if eps > 0.0 {
            (coeffs.sigma)(t, x, &mut sigma);
            domain.hess_phi(x, &mut hess);
            let mut trace = 0.0;
            for l in 0..m {
                for a in 0..d {
                    for c in 0..d {
                        trace += sigma[a * m + l] * hess[a * d + c] * sigma[c * m + l];
                    }
                }
            }
            integral += 0.5 * eps * trace * dt;
            let dw = traj.dw(i);
            let mut sdw = 0.0;
            for a in 0..d {
                sdw += grad[a] * dot(&sigma[a * m..(a + 1) * m], dw);
            }
            integral += sqrt_eps * sdw;
        }
        let rhs = domain.phi(traj.x(i + 1)) - phi0 - integral;
        worst = worst.max((traj.k_path[i + 1] - rhs).abs());
    }
    if !worst.is_finite() {
        return Err(Error::NumericalBlowup { what: "reflection identity".into(), t: traj.grid.t_end() });
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{preset, CoefficientSet, Dims};
    use crate::geometry::DomainSpec;
    use std::collections::BTreeMap;

    fn constant_drift() -> CoefficientSet {
        preset("constant-drift", &BTreeMap::new()).unwrap()
    }

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert_eq!(g.tail(2).unwrap().times(), vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn skeleton_constant_drift_interval() {
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let traj = integrate_skeleton_ode(&constant_drift(), &unit(), &[0.5], grid).unwrap();
        let dt = grid.dt();
        for i in 0..grid.n_nodes() {
            let t = grid.time(i);
            assert!((traj.x(i)[0] - (0.5 + t).min(1.0)).abs() <= 2.0 * dt);
            assert!((traj.k_path[i] - (t - 0.5).max(0.0)).abs() <= 2.0 * dt);
        }
        assert!(traj.noise.is_empty());
    }

    #[test]
    fn skeleton_ball_outward_drift_stays_put() {
        let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let dims = Dims { d: 2, m: 2, k: 2 };
        let c = CoefficientSet::zero(dims, 1.0).with_drift(|_, x, o| {
            let n = crate::linalg::norm(x);
            o[0] = x[0] / n;
            o[1] = x[1] / n;
        });
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let x0 = [0.6, 0.8];
        let traj = integrate_skeleton_ode(&c, &ball, &x0, grid).unwrap();
        for i in 0..grid.n_nodes() {
            assert!(dist(traj.x(i), &x0) < 1e-12);
            assert!((traj.k_path[i] - grid.time(i)).abs() <= 2.0 * grid.dt());
        }
    }

    #[test]
    fn zero_drift_is_static() {
        let c = preset("zero-drift-unit-noise", &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let traj = integrate_skeleton_ode(&c, &unit(), &[0.3], grid).unwrap();
        assert!(traj.x_path.iter().all(|&v| v == 0.3));
        assert!(traj.k_path.iter().all(|&v| v == 0.0));
        assert_eq!(reflection_budget_identity(&c, &unit(), &traj).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_zero_matches_skeleton_bitwise() {
        let c = preset("ou-in-ball", &BTreeMap::new()).unwrap();
        let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let mut r = rng::trajectory_stream(1, 0);
        let a = integrate_reflected_sde(&c, &ball, &[0.9, 0.1], 0.0, grid, &mut r).unwrap();
        let b = integrate_skeleton_ode(&c, &ball, &[0.9, 0.1], grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_paths_keep_invariants() {
        let c = preset("zero-drift-unit-noise", &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        for idx in 0..200 {
            let mut r = rng::trajectory_stream(3, idx);
            let traj = integrate_reflected_sde(&c, &unit(), &[0.5], 0.01, grid, &mut r).unwrap();
            assert!(traj.invariant_violations(&unit()).is_empty());
        }
    }

    #[test]
    fn free_path_is_exact_for_constant_drift() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let mut r = rng::trajectory_stream(0, 0);
        let free = integrate_free_sde(&constant_drift(), &unit(), &[0.0], 0.0, grid, &mut r).unwrap();
        for i in 0..grid.n_nodes() {
            assert_eq!(free.point(i)[0], grid.time(i));
        }
    }

    #[test]
    fn skorokhod_map_of_linear_path() {
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let phi = Path::from_fn(grid, 1, |t| vec![0.5 + t]);
        let dec = skorokhod_map(&unit(), &phi).unwrap();
        let dt = grid.dt();
        for i in 0..grid.n_nodes() {
            let t = grid.time(i);
            assert!((dec.psi.point(i)[0] - (0.5 + t).min(1.0)).abs() <= 2.0 * dt);
            assert!((dec.rho.point(i)[0] + (t - 0.5).max(0.0)).abs() <= 2.0 * dt);
            assert!((dec.psi.point(i)[0] - dec.rho.point(i)[0] - phi.point(i)[0]).abs() <= 1e-12);
        }
        assert!((dec.total_variation[1000] - 0.5).abs() <= 2.0 * dt);
    }

    #[test]
    fn skorokhod_identity_on_interior_path() {
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let phi = Path::from_fn(grid, 1, |t| vec![0.25 + 0.5 * t]);
        let dec = skorokhod_map(&unit(), &phi).unwrap();
        assert!(dec.psi.sup_dist(&phi) < 1e-15);
        assert!(dec.rho.values.iter().all(|&v| v == 0.0));
        let outside = Path::from_fn(grid, 1, |t| vec![-1.0 + t]);
        assert_eq!(skorokhod_map(&unit(), &outside), Err(Error::StartOutsideDomain));
    }

    #[test]
    fn budget_identity_deterministic_constant_drift() {
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let c = constant_drift();
        let traj = integrate_skeleton_ode(&c, &unit(), &[0.5], grid).unwrap();
        let r = reflection_budget_identity(&c, &unit(), &traj).unwrap();
        assert!(r <= 5.0 * grid.dt(), "{r}");
    }

    #[test]
    fn budget_identity_requires_noise() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let c = constant_drift();
        let mut r = rng::trajectory_stream(0, 0);
        let mut traj = integrate_reflected_sde(&c, &unit(), &[0.5], 0.1, grid, &mut r).unwrap();
        traj.noise.clear();
        assert_eq!(reflection_budget_identity(&c, &unit(), &traj), Err(Error::MissingNoise(0.1)));
    }

    #[test]
    fn blowup_is_reported() {
        let c = constant_drift().with_drift(|t, _, o| o[0] = 1.0 / (t - 0.5));
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let err = integrate_skeleton_ode(&c, &unit(), &[0.5], grid).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { .. }));
    }
}
