//! Backward equations: the limit ODE along the skeleton, the generalized BSDE
//! on a space lattice by dynamic programming, and evaluation of value fields
//! along paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{integrate_skeleton_ode, Path, ReflectedTrajectory, Stepper, TimeGrid};
use crate::geometry::Domain;
use crate::rng;
use crate::table::{indexed, Cell, Table};

const FIXED_POINT_MAX_ITER: usize = 20;
const FIXED_POINT_TOL: f64 = 1e-10;
/// Relative slack when deciding whether a point lies in the lattice hull.
const HULL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BsdeSource {
    StochasticGrid,
    DeterministicLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsdePath {
    pub grid: TimeGrid,
    pub k: usize,
    pub m: usize,
    /// `(n + 1) x k`.
    pub y_path: Vec<f64>,
    /// `(n + 1) x k x m`; empty for the limit equation.
    pub z_path: Vec<f64>,
    pub source: BsdeSource,
}

impl BsdePath {
    pub fn y(&self, i: usize) -> &[f64] {
        &self.y_path[i * self.k..(i + 1) * self.k]
    }

    pub fn to_table(&self) -> Table {
        let z_cols = if self.z_path.is_empty() { 0 } else { self.k * self.m };
        let mut t = Table::new(
            std::iter::once("t".to_string())
                .chain(indexed("y", self.k))
                .chain(indexed("z", z_cols)),
        );
        for i in 0..self.grid.n_nodes() {
            let mut row = vec![Cell::from(self.grid.time(i))];
            row.extend(self.y(i).iter().map(|&v| Cell::from(v)));
            if z_cols > 0 {
                row.extend(self.z_path[i * z_cols..(i + 1) * z_cols].iter().map(|&v| Cell::from(v)));
            }
            t.push(row);
        }
        t
    }
}

/// Backward recursion along a noise-free trajectory:
/// `ψ_i = ψ_{i+1} + f(t_{i+1}, φ_{i+1}, ψ_{i+1}, 0) Δ + g(t_{i+1}, φ_{i+1}, ψ_{i+1}) ΔK_i`
/// from `ψ_n = h(φ_n)`.
pub fn solve_limit_bsde(coeffs: &CoefficientSet, skeleton: &ReflectedTrajectory) -> Result<BsdePath> {
    if skeleton.epsilon != 0.0 {
        return Err(Error::InvalidInput("the limit equation needs a noise-free trajectory".into()));
    }
    let (k, m) = (coeffs.dims.k, coeffs.dims.m);
    let grid = skeleton.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut y = vec![0.0; (n + 1) * k];
    let z0 = vec![0.0; k * m];
    let (mut fv, mut gv) = (vec![0.0; k], vec![0.0; k]);
    (coeffs.h)(skeleton.final_x(), &mut y[n * k..]);
    for i in (0..n).rev() {
        let t = grid.time(i + 1);
        let x = skeleton.x(i + 1);
        let dk = skeleton.k_path[i + 1] - skeleton.k_path[i];
        let next = &y[(i + 1) * k..(i + 2) * k];
        (coeffs.f)(t, x, next, &z0, &mut fv);
        (coeffs.g)(t, x, next, &mut gv);
        for a in 0..k {
            fv[a] = next[a] + fv[a] * dt + gv[a] * dk;
        }
        if !fv.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowup { what: "limit backward equation".into(), t });
        }
        y[i * k..(i + 1) * k].copy_from_slice(&fv);
    }
    Ok(BsdePath { grid, k, m, y_path: y, z_path: Vec::new(), source: BsdeSource::DeterministicLimit })
}

/// Tensor lattice of points in `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceLattice {
    axes: Vec<Vec<f64>>,
}

impl SpaceLattice {
    /// `n` equispaced points per axis on the box `[lo, hi]`.
    pub fn uniform(lo: &[f64], hi: &[f64], n: usize) -> Result<Self> {
        if n < 2 || lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidInput("lattice needs a box and at least 2 points per axis".into()));
        }
        let axes = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| {
                if !(a < b) {
                    return Err(Error::InvalidInput(format!("empty lattice axis [{a}, {b}]")));
                }
                let h = (b - a) / (n - 1) as f64;
                Ok((0..n).map(|i| if i == n - 1 { b } else { a + i as f64 * h }).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(SpaceLattice { axes })
    }

    /// Uniform lattice on the bounding box of the domain.
    pub fn covering(domain: &dyn Domain, n: usize) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        Self::uniform(&lo, &hi, n)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, j: usize) -> &[f64] {
        &self.axes[j]
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Coordinates of node `idx` (row-major, last axis fastest).
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            let n = self.axes[j].len();
            out[j] = self.axes[j][idx % n];
            idx /= n;
        }
        out
    }

    /// Corner indices and weights of the multilinear stencil at `x`, or
    /// `None` outside the hull.
    fn stencil(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let d = self.dim();
        let mut cells = Vec::with_capacity(d);
        for (j, axis) in self.axes.iter().enumerate() {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            let slack = HULL_SLACK * (hi - lo);
            let xj = x[j];
            if !(xj >= lo - slack && xj <= hi + slack) {
                return None;
            }
            let xj = xj.clamp(lo, hi);
            let h = (hi - lo) / (axis.len() - 1) as f64;
            let mut c = (((xj - lo) / h) as usize).min(axis.len() - 2);
            // guard against rounding in the cell guess
            while c > 0 && xj < axis[c] {
                c -= 1;
            }
            while c + 2 < axis.len() && xj >= axis[c + 1] {
                c += 1;
            }
            let w = (xj - axis[c]) / (axis[c + 1] - axis[c]);
            cells.push((c, w));
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut weight = 1.0;
            for (j, &(c, w)) in cells.iter().enumerate() {
                let upper = (corner >> (d - 1 - j)) & 1 == 1;
                idx = idx * self.axes[j].len() + c + upper as usize;
                weight *= if upper { w } else { 1.0 - w };
            }
            if weight != 0.0 {
                out.push((idx, weight));
            }
        }
        Some(out)
    }
}

/// Values `u(t_i, x_j)` on a time grid times a space lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub times: TimeGrid,
    pub lattice: SpaceLattice,
    pub k: usize,
    /// 0 marks the limit field.
    pub epsilon: f64,
    /// `[time][node][k]`.
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn value(&self, time_index: usize, node: usize) -> &[f64] {
        let off = (time_index * self.lattice.n_nodes() + node) * self.k;
        &self.values[off..off + self.k]
    }

    /// Multilinear interpolation in space on time slice `time_index`.
    pub fn interpolate(&self, time_index: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let stencil = self.lattice.stencil(x).ok_or_else(|| Error::OutOfLattice {
            t: self.times.time(time_index),
            point: x.to_vec(),
        })?;
        out.fill(0.0);
        for (node, w) in stencil {
            for (o, v) in out.iter_mut().zip(self.value(time_index, node)) {
                *o += w * v;
            }
        }
        Ok(())
    }

    /// Interpolation linear in time and multilinear in space.
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (s, tn) = (self.times.s(), self.times.t_end());
        let slack = HULL_SLACK * (tn - s);
        if !(t >= s - slack && t <= tn + slack) {
            return Err(Error::OutOfLattice { t, point: x.to_vec() });
        }
        let t = t.clamp(s, tn);
        let n = self.times.n_steps();
        let dt = self.times.dt();
        let mut i = (((t - s) / dt) as usize).min(n);
        while i > 0 && t < self.times.time(i) {
            i -= 1;
        }
        let w = if i == n { 0.0 } else { (t - self.times.time(i)) / dt };
        self.interpolate(i, x, out)?;
        if w > 0.0 {
            let mut upper = vec![0.0; self.k];
            self.interpolate(i + 1, x, &mut upper)?;
            for (o, u) in out.iter_mut().zip(&upper) {
                *o = (1.0 - w) * *o + w * u;
            }
        }
        Ok(())
    }

    /// Largest difference quotient between neighbouring lattice nodes over all
    /// time slices.
    pub fn lattice_lipschitz(&self) -> f64 {
        let d = self.lattice.dim();
        let mut worst = 0.0_f64;
        let n_nodes = self.lattice.n_nodes();
        for node in 0..n_nodes {
            let p = self.lattice.node(node);
            let mut stride = 1;
            for j in (0..d).rev() {
                let len = self.lattice.axes[j].len();
                let pos = (node / stride) % len;
                if pos + 1 < len {
                    let h = self.lattice.axes[j][pos + 1] - p[j];
                    for ti in 0..self.times.n_nodes() {
                        let a = self.value(ti, node);
                        let b = self.value(ti, node + stride);
                        worst = worst.max(crate::linalg::dist(a, b) / h);
                    }
                }
                stride *= len;
            }
        }
        worst
    }

    /// Columns `t, x_1..x_d, u_1..u_k`.
    pub fn to_table(&self) -> Table {
        let d = self.lattice.dim();
        let mut t = Table::new(
            std::iter::once("t".to_string())
                .chain(indexed("x", d))
                .chain(indexed("u", self.k)),
        );
        for ti in 0..self.times.n_nodes() {
            for node in 0..self.lattice.n_nodes() {
                let mut row = vec![Cell::from(self.times.time(ti))];
                row.extend(self.lattice.node(node).into_iter().map(Cell::from));
                row.extend(self.value(ti, node).iter().map(|&v| Cell::from(v)));
                t.push(row);
            }
        }
        t
    }
}

/// One-step transitions from a lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    /// `count x d`.
    pub x_next: Vec<f64>,
    pub dk: Vec<f64>,
    /// `count x m`; empty for noise-free transitions.
    pub dw: Vec<f64>,
}

impl Transitions {
    pub fn count(&self) -> usize {
        self.dk.len()
    }
}

/// The transitions used by [`solve_bsde_grid`] at time index `step` from
/// lattice node `node`, started at the projection of `x` onto the domain.
/// Increments come in antithetic pairs; `epsilon == 0` gives one noise-free
/// transition.
#[allow(clippy::too_many_arguments)]
pub fn sample_transitions(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    epsilon: f64,
    times: &TimeGrid,
    step: usize,
    node: usize,
    x: &[f64],
    mc_per_node: usize,
    rng_seed: u64,
) -> Result<Transitions> {
    let (d, m) = (coeffs.dims.d, coeffs.dims.m);
    let t = times.time(step);
    let dt = times.dt();
    let mut start = vec![0.0; d];
    domain.project(x, &mut start);
    let mut stepper = Stepper::new(coeffs, domain);
    let mut dir = vec![0.0; d];
    if epsilon == 0.0 {
        let mut x_next = vec![0.0; d];
        let dk = stepper.step(t, dt, &start, None, &mut x_next, &mut dir)?;
        return Ok(Transitions { x_next, dk: vec![dk], dw: Vec::new() });
    }
    let sqrt_eps = epsilon.sqrt();
    let mut r = rng::node_stream(rng_seed, step, node);
    let mut dw = vec![0.0; mc_per_node * m];
    for pair in 0..mc_per_node / 2 {
        let (a, b) = dw[2 * pair * m..(2 * pair + 2) * m].split_at_mut(m);
        rng::fill_normal(&mut r, dt, a);
        for (bi, ai) in b.iter_mut().zip(a.iter()) {
            *bi = -*ai;
        }
    }
    let mut x_next = vec![0.0; mc_per_node * d];
    let mut dk = vec![0.0; mc_per_node];
    for j in 0..mc_per_node {
        dk[j] = stepper.step(
            t,
            dt,
            &start,
            Some((sqrt_eps, &dw[j * m..(j + 1) * m])),
            &mut x_next[j * d..(j + 1) * d],
            &mut dir,
        )?;
    }
    Ok(Transitions { x_next, dk, dw })
}

/// Dynamic programming for the generalized BSDE on `times x lattice`.
///
/// At each node the conditional expectation is a Monte Carlo mean over
/// `mc_per_node` one-step reflected transitions (antithetic pairs), the value
/// is implicit in `y` and found by fixed-point iteration, and `Z` is the
/// regression `mean[u' ΔWᵀ] / Δ`. Nodes outside the closed domain start from
/// their projection. `epsilon == 0` uses noise-free transitions.
pub fn solve_bsde_grid(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    epsilon: f64,
    times: TimeGrid,
    lattice: &SpaceLattice,
    mc_per_node: usize,
    rng_seed: u64,
) -> Result<ValueField> {
    solve_bsde_grid_with_z(coeffs, domain, epsilon, times, lattice, mc_per_node, rng_seed).map(|(f, _)| f)
}

/// As [`solve_bsde_grid`], also returning the `Z` field (`[time][node][k x m]`,
/// zero on the terminal slice).
pub fn solve_bsde_grid_with_z(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    epsilon: f64,
    times: TimeGrid,
    lattice: &SpaceLattice,
    mc_per_node: usize,
    rng_seed: u64,
) -> Result<(ValueField, Vec<f64>)> {
    let (d, m, k) = (coeffs.dims.d, coeffs.dims.m, coeffs.dims.k);
    if lattice.dim() != d || domain.dim() != d {
        return Err(Error::InvalidInput("lattice, domain and model dimensions differ".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if epsilon > 0.0 && (mc_per_node < 64 || mc_per_node % 2 == 1) {
        return Err(Error::InvalidInput("mc_per_node must be even and at least 64".into()));
    }
    let n = times.n_steps();
    let n_nodes = lattice.n_nodes();
    let mut values = vec![0.0; (n + 1) * n_nodes * k];
    let mut z_field = vec![0.0; (n + 1) * n_nodes * k * m];
    for node in 0..n_nodes {
        let off = (n * n_nodes + node) * k;
        (coeffs.h)(&lattice.node(node), &mut values[off..off + k]);
    }
    let mut field = ValueField { times, lattice: lattice.clone(), k, epsilon, values };
    let dt = times.dt();
    for step in (0..n).rev() {
        let t = times.time(step);
        let slice: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_nodes)
            .into_par_iter()
            .map(|node| {
                let x = lattice.node(node);
                let tr = sample_transitions(coeffs, domain, epsilon, &times, step, node, &x, mc_per_node, rng_seed)?;
                let mut x0 = vec![0.0; d];
                domain.project(&x, &mut x0);
                dp_node(coeffs, &field, step, t, dt, &x0, &tr)
            })
            .collect();
        for (node, res) in slice.into_iter().enumerate() {
            let (y, z) = res?;
            let off = (step * n_nodes + node) * k;
            field.values[off..off + k].copy_from_slice(&y);
            let zoff = (step * n_nodes + node) * k * m;
            z_field[zoff..zoff + k * m].copy_from_slice(&z);
        }
    }
    Ok((field, z_field))
}

fn dp_node(
    coeffs: &CoefficientSet,
    field: &ValueField,
    step: usize,
    t: f64,
    dt: f64,
    x0: &[f64],
    tr: &Transitions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, m, k) = (coeffs.dims.d, coeffs.dims.m, coeffs.dims.k);
    let count = tr.count();
    let inv = 1.0 / count as f64;
    let mut mean_v = vec![0.0; k];
    let mut z = vec![0.0; k * m];
    let mut v = vec![0.0; k];
    let mut mean_dk = 0.0;
    for j in 0..count {
        field.interpolate(step + 1, &tr.x_next[j * d..(j + 1) * d], &mut v)?;
        for a in 0..k {
            mean_v[a] += v[a];
        }
        mean_dk += tr.dk[j];
        if !tr.dw.is_empty() {
            let dw = &tr.dw[j * m..(j + 1) * m];
            for a in 0..k {
                for l in 0..m {
                    z[a * m + l] += v[a] * dw[l];
                }
            }
        }
    }
    mean_v.iter_mut().for_each(|x| *x *= inv);
    mean_dk *= inv;
    z.iter_mut().for_each(|x| *x *= inv / dt);

    let mut y = mean_v.clone();
    let (mut fv, mut gv, mut next) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for _ in 0..FIXED_POINT_MAX_ITER {
        (coeffs.f)(t, x0, &y, &z, &mut fv);
        (coeffs.g)(t, x0, &y, &mut gv);
        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        for a in 0..k {
            next[a] = mean_v[a] + fv[a] * dt + gv[a] * mean_dk;
            change = change.max((next[a] - y[a]).abs());
            scale = scale.max(next[a].abs());
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowup { what: "backward dynamic programming".into(), t });
        }
        std::mem::swap(&mut y, &mut next);
        if change <= FIXED_POINT_TOL * scale {
            return Ok((y, z));
        }
    }
    Err(Error::FixedPointDivergence { t, x: x0.to_vec() })
}

/// The limit field `u(t, x) = ψ_t^{t,x}`: for every time slice and node, the
/// skeleton started there followed by the limit backward recursion. Nodes
/// outside the closed domain start from their projection; the terminal slice
/// is `h` at the nodes.
pub fn solve_limit_field(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    times: TimeGrid,
    lattice: &SpaceLattice,
) -> Result<ValueField> {
    let (d, k) = (coeffs.dims.d, coeffs.dims.k);
    if lattice.dim() != d || domain.dim() != d {
        return Err(Error::InvalidInput("lattice, domain and model dimensions differ".into()));
    }
    let n = times.n_steps();
    let n_nodes = lattice.n_nodes();
    let cells: Vec<Result<Vec<f64>>> = (0..(n + 1) * n_nodes)
        .into_par_iter()
        .map(|cell| {
            let (step, node) = (cell / n_nodes, cell % n_nodes);
            let x = lattice.node(node);
            let mut out = vec![0.0; k];
            if step == n {
                (coeffs.h)(&x, &mut out);
                return Ok(out);
            }
            let mut x0 = vec![0.0; d];
            domain.project(&x, &mut x0);
            let skeleton = integrate_skeleton_ode(coeffs, domain, &x0, times.tail(step)?)?;
            let psi = solve_limit_bsde(coeffs, &skeleton)?;
            out.copy_from_slice(psi.y(0));
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity((n + 1) * n_nodes * k);
    for c in cells {
        values.extend(c?);
    }
    Ok(ValueField { times, lattice: lattice.clone(), k, epsilon: 0.0, values })
}

/// `Π(ϱ)(t_i) = u(t_i, ϱ_i)`: the field evaluated along a path. Returns
/// `(n + 1) x k` values.
pub fn apply_pi(field: &ValueField, rho: &Path) -> Result<Vec<f64>> {
    let k = field.k;
    if rho.dim != field.lattice.dim() {
        return Err(Error::InvalidInput("path and lattice dimensions differ".into()));
    }
    let mut out = vec![0.0; rho.grid.n_nodes() * k];
    for (i, p) in rho.points().enumerate() {
        field.eval(rho.grid.time(i), p, &mut out[i * k..(i + 1) * k])?;
    }
    Ok(out)
}
