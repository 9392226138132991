//! Model functions `b, σ, f, g, h`, a registry of preset models, and sampled
//! audits of the standing Lipschitz, ellipticity and driver assumptions.
//!
//! Audits are certificates by sampling: they can falsify an assumption, never
//! prove it. Every estimated constant is a supremum over the sampled set and
//! therefore a lower bound of the true constant.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{dist, dot, gram, min_eigenvalue_sym, norm};
use crate::rng::{self, Purpose};

/// `(t, x) -> out`; used for the drift (`out` of length d) and the diffusion
/// (`out` row-major d x m).
pub type StateMap = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `f(t, x, y, z) -> out` with `z` row-major k x m.
pub type DriverMap = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `g(t, x, y) -> out`.
pub type BoundaryMap = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `h(x) -> out`.
pub type TerminalMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Declared partial derivatives of `g` at `(t, x, y)`.
pub type BoundaryPartialsMap = Arc<dyn Fn(f64, &[f64], &[f64], &mut BoundaryPartials) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    /// State dimension.
    pub d: usize,
    /// Noise dimension.
    pub m: usize,
    /// Value dimension of the backward equation.
    pub k: usize,
}

/// Partial derivatives of `g`: `dt` (k), `dx` (k x d row-major), `dy` (k x k).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPartials {
    pub dt: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl BoundaryPartials {
    pub fn zeros(dims: Dims) -> Self {
        BoundaryPartials {
            dt: vec![0.0; dims.k],
            dx: vec![0.0; dims.k * dims.d],
            dy: vec![0.0; dims.k * dims.k],
        }
    }
}

/// Constants a model claims to satisfy. Audits check sampled estimates
/// against them when present.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DeclaredConstants {
    pub l1: Option<f64>,
    pub l3: Option<f64>,
    pub iota: Option<f64>,
}

#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub dims: Dims,
    pub horizon: f64,
    pub b: StateMap,
    pub sigma: StateMap,
    pub f: DriverMap,
    pub g: BoundaryMap,
    pub h: TerminalMap,
    pub g_partials: Option<BoundaryPartialsMap>,
    pub declared: DeclaredConstants,
    /// `b` and `σ` do not depend on the state.
    pub state_independent: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("declared", &self.declared)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// All-zero model (`b = 0, σ = 0, f = 0, g = 0, h = 0`) to be filled in
    /// with the `with_*` builders.
    pub fn zero(dims: Dims, horizon: f64) -> Self {
        CoefficientSet {
            name: "custom".into(),
            params: BTreeMap::new(),
            dims,
            horizon,
            b: Arc::new(|_, _, o| o.fill(0.0)),
            sigma: Arc::new(|_, _, o| o.fill(0.0)),
            f: Arc::new(|_, _, _, _, o| o.fill(0.0)),
            g: Arc::new(|_, _, _, o| o.fill(0.0)),
            h: Arc::new(|_, o| o.fill(0.0)),
            g_partials: None,
            declared: DeclaredConstants::default(),
            state_independent: false,
        }
    }

    pub fn with_drift(mut self, b: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.b = Arc::new(b);
        self
    }

    pub fn with_diffusion(mut self, sigma: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(sigma);
        self
    }

    pub fn with_driver(
        mut self,
        f: impl Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_boundary_driver(
        mut self,
        g: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.g = Arc::new(g);
        self.g_partials = None;
        self
    }

    pub fn with_terminal(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.h = Arc::new(h);
        self
    }

    pub fn with_declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = declared;
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Same model with `σ` replaced by `c σ`.
    pub fn scale_diffusion(&self, c: f64) -> Self {
        let sigma = self.sigma.clone();
        let mut out = self.clone();
        out.sigma = Arc::new(move |t, x, o| {
            sigma(t, x, o);
            o.iter_mut().for_each(|v| *v *= c);
        });
        out.declared = DeclaredConstants {
            iota: self.declared.iota.map(|i| i * c * c),
            l1: None,
            ..self.declared
        };
        out
    }
}

// ---------------------------------------------------------------------------
// Presets

/// A registry entry.
#[derive(Debug, Clone, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Accepted parameters and their defaults.
    pub params: &'static [(&'static str, f64)],
}

const COMMON: [(&str, f64); 2] = [("d", 1.0), ("T", 1.0)];

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "zero-drift-unit-noise",
        description: "b = 0, σ = s·I, f = 0, g = 0, h(x) = x. Skeleton is constant; u(t,x) = x.",
        params: &[("d", 1.0), ("T", 1.0), ("sigma", 1.0)],
    },
    PresetInfo {
        name: "constant-drift",
        description: "b = v·e1, σ = s·I, f = 0, g = 0, h(x) = x. On [0,1] from 0.5 with v = 1 the \
                      skeleton is min(0.5 + t, 1) and K_t = (t - 0.5)+.",
        params: &[("d", 1.0), ("T", 1.0), ("v", 1.0), ("sigma", 1.0)],
    },
    PresetInfo {
        name: "linear-drift",
        description: "b(x) = a·x + c (componentwise), σ = s·I, f = 0, g = 0, h(x) = x.",
        params: &[("d", 1.0), ("T", 1.0), ("a", -1.0), ("c", 0.0), ("sigma", 1.0)],
    },
    PresetInfo {
        name: "ou-in-ball",
        description: "b(x) = -θ(x - μ), σ = s·I, f = 0, g = 0, h(x) = x; meant for ball domains.",
        params: &[("d", 2.0), ("T", 1.0), ("theta", 1.0), ("mu", 0.0), ("sigma", 0.5)],
    },
    PresetInfo {
        name: "linear-bsde",
        description: "b = v·e1, σ = s·I, f = -λy, g = g0, h(x) = x. Limit value along the \
                      skeleton: ψ_t = e^{-λ(T-t)} h(φ_T) + g0 ∫_t^T e^{-λ(r-t)} dK_r.",
        params: &[("d", 1.0), ("T", 1.0), ("lambda", 1.0), ("g0", 0.0), ("v", 1.0), ("sigma", 1.0)],
    },
    PresetInfo {
        name: "boundary-g-constant",
        description: "b = v·e1, σ = s·I, f = 0, g = g0, h(x) = x. ψ_t = h(φ_T) + g0 (K_T - K_t).",
        params: &[("d", 1.0), ("T", 1.0), ("g0", 1.0), ("v", 1.0), ("sigma", 1.0)],
    },
    PresetInfo {
        name: "boundary-g-linear",
        description: "b = v·e1, σ = s·I, f = 0, g(y) = g0 - γy, h(x) = x.",
        params: &[("d", 1.0), ("T", 1.0), ("g0", 1.0), ("gamma", 1.0), ("v", 1.0), ("sigma", 1.0)],
    },
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.name)
}

fn resolve_params(info: &PresetInfo, given: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = info.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        if !out.contains_key(k) {
            return Err(Error::InvalidParameter {
                name: k.clone(),
                reason: format!("not a parameter of preset `{}`", info.name),
            });
        }
        if !v.is_finite() {
            return Err(Error::InvalidParameter {
                name: k.clone(),
                reason: "must be finite".into(),
            });
        }
        out.insert(k.clone(), *v);
    }
    let d = out["d"];
    if d < 1.0 || d.fract() != 0.0 || d > 8.0 {
        return Err(Error::InvalidParameter {
            name: "d".into(),
            reason: "must be an integer in 1..=8".into(),
        });
    }
    if out["T"] <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "T".into(),
            reason: "must be positive".into(),
        });
    }
    Ok(out)
}

/// Build a preset model by registry name. Unlisted parameter names are
/// rejected; missing ones take the registry defaults.
pub fn preset(name: &str, params: &BTreeMap<String, f64>) -> Result<CoefficientSet> {
    let info = PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    debug_assert!(COMMON.iter().all(|(c, _)| info.params.iter().any(|(p, _)| p == c)));
    let p = resolve_params(info, params)?;
    let d = p["d"] as usize;
    let dims = Dims { d, m: d, k: d };
    let s = p["sigma"];
    let sqrt_d = (d as f64).sqrt();

    let mut set = CoefficientSet::zero(dims, p["T"])
        .with_diffusion(move |_, _, o| {
            o.fill(0.0);
            for i in 0..d {
                o[i * d + i] = s;
            }
        })
        .with_terminal(|x, o| o.copy_from_slice(x));
    set.state_independent = true;
    set.g_partials = Some(Arc::new(|_, _, _, out: &mut BoundaryPartials| {
        out.dt.fill(0.0);
        out.dx.fill(0.0);
        out.dy.fill(0.0);
    }));
    let iota = Some(s * s);
    let noise_norm = s.abs() * sqrt_d;

    match name {
        "zero-drift-unit-noise" => {
            set.declared = DeclaredConstants { l1: Some(noise_norm), l3: Some(1.0), iota };
        }
        "constant-drift" => {
            let v = p["v"];
            set = set.with_drift(move |_, _, o| {
                o.fill(0.0);
                o[0] = v;
            });
            set.state_independent = true;
            set.declared = DeclaredConstants { l1: Some(v.abs() + noise_norm), l3: Some(1.0), iota };
        }
        "linear-drift" => {
            let (a, c) = (p["a"], p["c"]);
            set = set.with_drift(move |_, x, o| {
                for (oi, xi) in o.iter_mut().zip(x) {
                    *oi = a * xi + c;
                }
            });
            set.state_independent = a == 0.0;
            set.declared = DeclaredConstants {
                l1: Some(a.abs() + c.abs() * sqrt_d + noise_norm),
                l3: Some(1.0),
                iota,
            };
        }
        "ou-in-ball" => {
            let (theta, mu) = (p["theta"], p["mu"]);
            set = set.with_drift(move |_, x, o| {
                for (oi, xi) in o.iter_mut().zip(x) {
                    *oi = -theta * (xi - mu);
                }
            });
            set.state_independent = theta == 0.0;
            set.declared = DeclaredConstants {
                l1: Some(theta.abs() * (1.0 + mu.abs() * sqrt_d) + noise_norm),
                l3: Some(1.0),
                iota,
            };
        }
        "linear-bsde" | "boundary-g-constant" | "boundary-g-linear" => {
            let v = p["v"];
            let g0 = p["g0"];
            let lambda = p.get("lambda").copied().unwrap_or(0.0);
            let gamma = p.get("gamma").copied().unwrap_or(0.0);
            set = set
                .with_drift(move |_, _, o| {
                    o.fill(0.0);
                    o[0] = v;
                })
                .with_driver(move |_, _, y, _, o| {
                    for (oi, yi) in o.iter_mut().zip(y) {
                        *oi = -lambda * yi;
                    }
                })
                .with_boundary_driver(move |_, _, y, o| {
                    for (oi, yi) in o.iter_mut().zip(y) {
                        *oi = g0 - gamma * yi;
                    }
                });
            set.g_partials = Some(Arc::new(move |_, _, _, out: &mut BoundaryPartials| {
                out.dt.fill(0.0);
                out.dx.fill(0.0);
                out.dy.fill(0.0);
                let k = out.dt.len();
                for i in 0..k {
                    out.dy[i * k + i] = -gamma;
                }
            }));
            set.state_independent = true;
            let growth = lambda.abs() + gamma.abs() + g0.abs() * sqrt_d;
            set.declared = DeclaredConstants {
                l1: Some(v.abs() + noise_norm),
                l3: Some(growth.max(1.0)),
                iota,
            };
        }
        _ => unreachable!("registry and constructor disagree on `{name}`"),
    }
    set.name = name.to_string();
    set.params = p;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Audits

/// Sample sizes and ranges for [`audit_assumptions`].
///
/// Samples are indexed streams, so a larger grid is a superset of a smaller
/// one with the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditGrid {
    /// Spatial samples are `points_per_axis^d` points of the closure.
    pub points_per_axis: usize,
    pub time_points: usize,
    /// Number of random `(y, z)` samples.
    pub yz_pairs: usize,
    /// `y` and `z` entries are drawn from `[-y_radius, y_radius]`.
    pub y_radius: f64,
    /// Minimum ellipticity for the check to pass.
    pub iota_floor: f64,
    /// Step for finite-difference checks of declared `g` partials.
    pub fd_step: f64,
}

impl Default for AuditGrid {
    fn default() -> Self {
        AuditGrid {
            points_per_axis: 32,
            time_points: 16,
            yz_pairs: 64,
            y_radius: 10.0,
            iota_floor: 1e-8,
            fd_step: 1e-5,
        }
    }
}

/// Spatial pairs `(i, j)` are restricted to `j - i <= PAIR_WINDOW`.
const PAIR_WINDOW: usize = 64;
/// Driver inequalities over `(y, z)` pairs use at most this many spatial points.
const DRIVER_POINTS: usize = 64;
/// The x-Lipschitz checks of `f`, `g`, `h` use at most this many spatial points.
const DRIVER_PAIR_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Assumption {
    /// Lipschitz and linear growth of `b, σ`.
    LipschitzGrowth,
    /// Uniform ellipticity of `σσ*`.
    Ellipticity,
    /// Lipschitz, one-sided monotonicity and growth of `f, g, h`.
    DriverRegularity,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assumption::LipschitzGrowth => "lipschitz-growth(b,sigma)",
            Assumption::Ellipticity => "ellipticity(sigma)",
            Assumption::DriverRegularity => "driver-regularity(f,g,h)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub inequality: String,
    pub witness: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionPass {
    pub lipschitz: bool,
    pub ellipticity: bool,
    pub driver: bool,
}

impl AssumptionPass {
    pub fn all(&self) -> bool {
        self.lipschitz && self.ellipticity && self.driver
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionAudit {
    /// `max(l1_lipschitz, l1_growth)`.
    pub l1: f64,
    pub l1_lipschitz: f64,
    pub l1_growth: f64,
    /// Largest of the driver constants in `l3_terms`, floored at 0.
    pub l3: f64,
    pub l3_terms: BTreeMap<String, f64>,
    /// Smallest sampled eigenvalue of `σσ*`.
    pub iota: f64,
    pub pass: AssumptionPass,
    pub sample_count: usize,
    /// The growth ratio of `f, g` changes with `x` at fixed `(t, y, z)`.
    pub x_dependent_growth: bool,
    /// Largest mismatch between declared `g` partials and finite differences.
    pub g_partials_error: Option<f64>,
    pub violations: Vec<Violation>,
}

impl AssumptionAudit {
    /// `Err(AuditFailure)` carrying the first violation, if any.
    pub fn require_pass(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::AuditFailure {
                assumption: v.assumption.to_string(),
                inequality: v.inequality.clone(),
                witness: v.witness.clone(),
                lhs: v.lhs,
                rhs: v.rhs,
            }),
        }
    }
}

fn exceeds(estimate: f64, declared: Option<f64>) -> Option<f64> {
    match declared {
        Some(c) if estimate > c * (1.0 + 1e-9) + 1e-12 => Some(c),
        _ => None,
    }
}

struct Tracker {
    value: f64,
    witness: String,
}

impl Tracker {
    fn new() -> Self {
        Tracker { value: f64::NEG_INFINITY, witness: String::new() }
    }
    fn offer(&mut self, v: f64, witness: impl FnOnce() -> String) {
        if v > self.value || v.is_nan() && !self.value.is_nan() {
            self.value = v;
            self.witness = witness();
        }
    }
    fn get(&self) -> f64 {
        if self.value == f64::NEG_INFINITY { 0.0 } else { self.value }
    }
}

/// Estimate the regularity, ellipticity and driver constants on sampled points
/// and check them against the model's declared constants.
pub fn audit_assumptions(
    coeffs: &CoefficientSet,
    domain: &dyn Domain,
    grid: &AuditGrid,
    rng_seed: u64,
) -> Result<AssumptionAudit> {
    if grid.points_per_axis < 10 {
        return Err(Error::InvalidInput("audit grid needs at least 10 points per axis".into()));
    }
    if grid.time_points < 1 || grid.yz_pairs < 2 {
        return Err(Error::InvalidInput("audit grid needs time points and at least 2 (y, z) samples".into()));
    }
    let Dims { d, m, k } = coeffs.dims;
    if domain.dim() != d {
        return Err(Error::InvalidInput(format!(
            "domain dimension {} does not match model dimension {d}",
            domain.dim()
        )));
    }
    let n_x = grid.points_per_axis.saturating_pow(d as u32).min(1 << 16);

    let times: Vec<f64> = (0..grid.time_points)
        .map(|j| {
            let mut r = rng::stream(rng_seed, Purpose::Audit, j as u64);
            coeffs.horizon * r.random::<f64>()
        })
        .collect();
    let points: Vec<Vec<f64>> = (0..n_x)
        .map(|i| {
            let mut r = rng::stream(rng_seed, Purpose::Audit, (1 << 32) | i as u64);
            if i % 4 == 3 {
                domain.sample_boundary(&mut r)
            } else {
                domain.sample_closure(&mut r)
            }
        })
        .collect();
    let yz: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.yz_pairs)
        .map(|p| {
            let mut r = rng::stream(rng_seed, Purpose::Audit, (2 << 32) | p as u64);
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| grid.y_radius * (2.0 * r.random::<f64>() - 1.0)).collect()
            };
            let y = draw(k);
            let z = draw(k * m);
            (y, z)
        })
        .collect();

    let mut violations = Vec::new();
    let pairs = |n: usize| (0..n).flat_map(move |i| (i + 1..n.min(i + 1 + PAIR_WINDOW)).map(move |j| (i, j)));

    // b and σ
    let mut lip = Tracker::new();
    let mut growth = Tracker::new();
    let mut iota = f64::INFINITY;
    let mut iota_witness = String::new();
    let mut bvals = vec![0.0; n_x * d];
    let mut svals = vec![0.0; n_x * d * m];
    let mut ss = vec![0.0; d * d];
    for &t in &times {
        for (i, x) in points.iter().enumerate() {
            (coeffs.b)(t, x, &mut bvals[i * d..(i + 1) * d]);
            (coeffs.sigma)(t, x, &mut svals[i * d * m..(i + 1) * d * m]);
            let bn = norm(&bvals[i * d..(i + 1) * d]);
            let sn = norm(&svals[i * d * m..(i + 1) * d * m]);
            growth.offer((bn + sn) / (1.0 + norm(x)), || format!("t = {t}, x = {x:?}"));
            gram(&svals[i * d * m..(i + 1) * d * m], d, m, &mut ss);
            let lam = min_eigenvalue_sym(&ss, d);
            if lam < iota || lam.is_nan() {
                iota = lam;
                iota_witness = format!("t = {t}, x = {x:?}");
            }
        }
        for (i, j) in pairs(n_x) {
            let sep = dist(&points[i], &points[j]);
            if sep <= 1e-12 {
                continue;
            }
            let db = dist(&bvals[i * d..(i + 1) * d], &bvals[j * d..(j + 1) * d]);
            let ds = dist(&svals[i * d * m..(i + 1) * d * m], &svals[j * d * m..(j + 1) * d * m]);
            lip.offer((db + ds) / sep, || format!("t = {t}, x = {:?}, x' = {:?}", points[i], points[j]));
        }
    }
    let l1_lipschitz = lip.get();
    let l1_growth = growth.get();
    let l1 = l1_lipschitz.max(l1_growth);
    let mut lipschitz = l1.is_finite();
    for (est, tracker, ineq) in [
        (l1_lipschitz, &lip, "|b(t,x)-b(t,x')| + ||sigma(t,x)-sigma(t,x')|| <= L1 |x-x'|"),
        (l1_growth, &growth, "|b(t,x)| + ||sigma(t,x)|| <= L1 (1+|x|)"),
    ] {
        if let Some(c) = exceeds(est, coeffs.declared.l1) {
            lipschitz = false;
            violations.push(Violation {
                assumption: Assumption::LipschitzGrowth,
                inequality: ineq.into(),
                witness: tracker.witness.clone(),
                lhs: est,
                rhs: c,
            });
        }
        if !est.is_finite() {
            violations.push(Violation {
                assumption: Assumption::LipschitzGrowth,
                inequality: ineq.into(),
                witness: tracker.witness.clone(),
                lhs: est,
                rhs: f64::INFINITY,
            });
        }
    }
    let floor = coeffs.declared.iota.map_or(grid.iota_floor, |c| grid.iota_floor.max(c * (1.0 - 1e-9)));
    let ellipticity = iota.is_finite() && iota >= floor;
    if !ellipticity {
        violations.push(Violation {
            assumption: Assumption::Ellipticity,
            inequality: "<sigma sigma^T h, h> >= iota |h|^2".into(),
            witness: iota_witness,
            lhs: floor,
            rhs: iota,
        });
    }

    // f, g and h
    let mut fx = Tracker::new();
    let mut fy = Tracker::new();
    let mut fz = Tracker::new();
    let mut gx = Tracker::new();
    let mut gy = Tracker::new();
    let mut hx = Tracker::new();
    let mut fg_growth = Tracker::new();
    let mut x_dependent_growth = false;
    let (mut f1, mut f2, mut g1, mut g2) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut diff = vec![0.0; k];
    let sub = |a: &[f64], b: &[f64], out: &mut [f64]| {
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x - y;
        }
    };

    let n_drv = n_x.min(DRIVER_POINTS);
    let n_pairs = n_x.min(DRIVER_PAIR_POINTS);
    for (i, j) in pairs(n_pairs) {
        let (x, xp) = (&points[i], &points[j]);
        let sep = dist(x, xp);
        if sep <= 1e-12 {
            continue;
        }
        (coeffs.h)(x, &mut f1);
        (coeffs.h)(xp, &mut f2);
        hx.offer(dist(&f1, &f2) / sep, || format!("x = {x:?}, x' = {xp:?}"));
    }
    for &t in &times {
        for (i, j) in pairs(n_pairs) {
            let (x, xp) = (&points[i], &points[j]);
            let sep = dist(x, xp);
            if sep <= 1e-12 {
                continue;
            }
            for (y, z) in &yz {
                (coeffs.f)(t, x, y, z, &mut f1);
                (coeffs.f)(t, xp, y, z, &mut f2);
                fx.offer(dist(&f1, &f2) / sep, || format!("t = {t}, x = {x:?}, x' = {xp:?}, y = {y:?}"));
                (coeffs.g)(t, x, y, &mut g1);
                (coeffs.g)(t, xp, y, &mut g2);
                gx.offer(dist(&g1, &g2) / sep, || format!("t = {t}, x = {x:?}, x' = {xp:?}, y = {y:?}"));
            }
        }
        for x in &points[..n_drv] {
            for (p, (y, z)) in yz.iter().enumerate() {
                (coeffs.f)(t, x, y, z, &mut f1);
                (coeffs.g)(t, x, y, &mut g1);
                let ratio = (norm(&f1) + norm(&g1)) / (1.0 + norm(y) + norm(z));
                fg_growth.offer(ratio, || format!("t = {t}, x = {x:?}, y = {y:?}, z = {z:?}"));
                if !x_dependent_growth && n_drv > 1 {
                    let x0 = &points[0];
                    (coeffs.f)(t, x0, y, z, &mut f2);
                    (coeffs.g)(t, x0, y, &mut g2);
                    let r0 = (norm(&f2) + norm(&g2)) / (1.0 + norm(y) + norm(z));
                    x_dependent_growth = (ratio - r0).abs() > 1e-12 * (1.0 + r0.abs());
                }
                for (yp, zp) in &yz[p + 1..] {
                    sub(y, yp, &mut diff);
                    let sep2 = dot(&diff, &diff);
                    if sep2 > 1e-24 {
                        // one-sided monotonicity in y at fixed z
                        (coeffs.f)(t, x, yp, z, &mut f2);
                        sub(&f1, &f2, &mut g2);
                        fy.offer(dot(&diff, &g2) / sep2, || format!("t = {t}, x = {x:?}, y = {y:?}, y' = {yp:?}"));
                        (coeffs.g)(t, x, yp, &mut f2);
                        sub(&g1, &f2, &mut g2);
                        gy.offer(dot(&diff, &g2) / sep2, || format!("t = {t}, x = {x:?}, y = {y:?}, y' = {yp:?}"));
                    }
                    let zsep = dist(z, zp);
                    if zsep > 1e-12 {
                        (coeffs.f)(t, x, y, zp, &mut f2);
                        fz.offer(dist(&f1, &f2) / zsep, || format!("t = {t}, x = {x:?}, z = {z:?}, z' = {zp:?}"));
                    }
                }
            }
        }
    }

    let mut l3_terms = BTreeMap::new();
    let checks: [(&str, &Tracker, &str); 7] = [
        ("f_x_lipschitz", &fx, "|f(t,x,y,z)-f(t,x',y,z)| <= L3 |x-x'|"),
        ("f_y_monotone", &fy, "<y-y', f(t,x,y,z)-f(t,x,y',z)> <= L3 |y-y'|^2"),
        ("f_z_lipschitz", &fz, "|f(t,x,y,z)-f(t,x,y,z')| <= L3 ||z-z'||"),
        ("g_x_lipschitz", &gx, "|g(t,x,y)-g(t,x',y)| <= L3 |x-x'|"),
        ("g_y_monotone", &gy, "<y-y', g(t,x,y)-g(t,x,y')> <= L3 |y-y'|^2"),
        ("h_lipschitz", &hx, "|h(x)-h(x')| <= L3 |x-x'|"),
        ("fg_growth", &fg_growth, "|f(t,x,y,z)| + |g(t,x,y)| <= L3 (1+|y|+||z||)"),
    ];
    let mut driver = true;
    for (key, tracker, ineq) in checks {
        let est = tracker.get();
        l3_terms.insert(key.to_string(), est);
        let bad_declared = exceeds(est, coeffs.declared.l3);
        if !est.is_finite() || bad_declared.is_some() {
            driver = false;
            violations.push(Violation {
                assumption: Assumption::DriverRegularity,
                inequality: ineq.into(),
                witness: tracker.witness.clone(),
                lhs: est,
                rhs: bad_declared.unwrap_or(f64::INFINITY),
            });
        }
    }
    let l3 = l3_terms.values().fold(0.0_f64, |a, &b| a.max(b));

    let g_partials_error = coeffs
        .g_partials
        .as_ref()
        .map(|partials| g_partials_mismatch(coeffs, partials, &times, &points[..n_drv], &yz, grid.fd_step));
    if let Some(err) = g_partials_error {
        if !(err <= 1e-4) {
            driver = false;
            violations.push(Violation {
                assumption: Assumption::DriverRegularity,
                inequality: "declared partial derivatives of g match finite differences".into(),
                witness: String::new(),
                lhs: err,
                rhs: 1e-4,
            });
        }
    }

    violations.sort_by_key(|v| v.assumption);
    Ok(AssumptionAudit {
        l1,
        l1_lipschitz,
        l1_growth,
        l3,
        l3_terms,
        iota,
        pass: AssumptionPass { lipschitz, ellipticity, driver },
        sample_count: times.len() * (n_x + grid.yz_pairs),
        x_dependent_growth,
        g_partials_error,
        violations,
    })
}

/// Max relative mismatch of declared `g` partials against central differences.
fn g_partials_mismatch(
    coeffs: &CoefficientSet,
    partials: &BoundaryPartialsMap,
    times: &[f64],
    points: &[Vec<f64>],
    yz: &[(Vec<f64>, Vec<f64>)],
    step: f64,
) -> f64 {
    let Dims { d, k, .. } = coeffs.dims;
    let mut declared = BoundaryPartials::zeros(coeffs.dims);
    let (mut gp, mut gm) = (vec![0.0; k], vec![0.0; k]);
    let mut worst = 0.0_f64;
    let mut compare = |fd: f64, decl: f64| {
        let e = (fd - decl).abs() / (1.0 + decl.abs());
        worst = if e.is_nan() { f64::NAN } else { worst.max(e) };
    };
    for &t in times.iter().take(4) {
        for x in points.iter().take(8) {
            for (y, _) in yz.iter().take(8) {
                partials(t, x, y, &mut declared);
                (coeffs.g)(t + step, x, y, &mut gp);
                (coeffs.g)(t - step, x, y, &mut gm);
                for i in 0..k {
                    compare((gp[i] - gm[i]) / (2.0 * step), declared.dt[i]);
                }
                for j in 0..d {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[j] += step;
                    xm[j] -= step;
                    (coeffs.g)(t, &xp, y, &mut gp);
                    (coeffs.g)(t, &xm, y, &mut gm);
                    for i in 0..k {
                        compare((gp[i] - gm[i]) / (2.0 * step), declared.dx[i * d + j]);
                    }
                }
                for j in 0..k {
                    let (mut yp, mut ym) = (y.clone(), y.clone());
                    yp[j] += step;
                    ym[j] -= step;
                    (coeffs.g)(t, x, &yp, &mut gp);
                    (coeffs.g)(t, x, &ym, &mut gm);
                    for i in 0..k {
                        compare((gp[i] - gm[i]) / (2.0 * step), declared.dy[i * k + j]);
                    }
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn unit_interval() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_drift_unit_noise_preset() {
        let c = preset("zero-drift-unit-noise", &BTreeMap::new()).unwrap();
        assert_eq!(c.dims, Dims { d: 1, m: 1, k: 1 });
        let mut o = [9.0];
        (c.b)(0.3, &[0.2], &mut o);
        assert_eq!(o, [0.0]);
        (c.sigma)(0.3, &[0.2], &mut o);
        assert_eq!(o, [1.0]);
        (c.f)(0.3, &[0.2], &[4.0], &[1.0], &mut o);
        assert_eq!(o, [0.0]);
        (c.g)(0.3, &[0.2], &[4.0], &mut o);
        assert_eq!(o, [0.0]);
        (c.h)(&[0.7], &mut o);
        assert_eq!(o, [0.7]);
    }

    #[test]
    fn constant_drift_and_linear_bsde_presets() {
        let c = preset("constant-drift", &params(&[("v", 1.0)])).unwrap();
        let mut o = [0.0];
        (c.b)(0.0, &[0.9], &mut o);
        assert_eq!(o, [1.0]);
        let c = preset("linear-bsde", &params(&[("lambda", 1.0)])).unwrap();
        (c.f)(0.0, &[0.9], &[2.0], &[0.0], &mut o);
        assert_eq!(o, [-2.0]);
        (c.g)(0.0, &[0.9], &[2.0], &mut o);
        assert_eq!(o, [0.0]);
        (c.h)(&[0.25], &mut o);
        assert_eq!(o, [0.25]);
    }

    #[test]
    fn unknown_preset_and_parameter() {
        assert!(matches!(preset("nope", &BTreeMap::new()), Err(Error::UnknownPreset(_))));
        assert!(matches!(
            preset("constant-drift", &params(&[("lambda", 1.0)])),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            preset("constant-drift", &params(&[("d", 1.5)])),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn constant_coefficients_audit() {
        let c = preset("zero-drift-unit-noise", &BTreeMap::new()).unwrap();
        let a = audit_assumptions(&c, &unit_interval(), &AuditGrid::default(), 1).unwrap();
        assert_eq!(a.l1_lipschitz, 0.0);
        assert_eq!(a.iota, 1.0);
        assert!(a.pass.all(), "{:?}", a.violations);
        a.require_pass().unwrap();
    }

    #[test]
    fn degenerate_diffusion_fails_ellipticity() {
        let c = preset("zero-drift-unit-noise", &params(&[("sigma", 0.0)])).unwrap();
        let a = audit_assumptions(&c, &unit_interval(), &AuditGrid::default(), 1).unwrap();
        assert_eq!(a.iota, 0.0);
        assert!(!a.pass.ellipticity);
        assert!(a.pass.lipschitz);
        assert!(matches!(a.require_pass(), Err(Error::AuditFailure { .. })));
    }

    #[test]
    fn cubic_driver_monotone_but_not_linear_growth() {
        let c = preset("zero-drift-unit-noise", &BTreeMap::new())
            .unwrap()
            .with_driver(|_, _, y, _, o| o[0] = -y[0] * y[0] * y[0]);
        let declared = DeclaredConstants { l3: Some(1.0), ..c.declared };
        let c = c.with_declared(declared);
        let grid = AuditGrid::default();
        let a = audit_assumptions(&c, &unit_interval(), &grid, 5).unwrap();
        // <y-y', -y^3+y'^3> <= 0: the one-sided constant is not positive.
        assert!(a.l3_terms["f_y_monotone"] <= 0.0);
        assert!(!a.pass.driver);
        let growth = a
            .violations
            .iter()
            .find(|v| v.inequality.starts_with("|f(t,x,y,z)| + |g(t,x,y)|"))
            .expect("growth violation reported");
        assert!(!growth.witness.is_empty());
        assert!(a.violations.iter().all(|v| !v.inequality.starts_with("<y-y', f")));

        // oracle: direct evaluation on the same sampled y values
        let max_ratio = (0..grid.yz_pairs)
            .map(|p| {
                let mut r = rng::stream(5, Purpose::Audit, (2 << 32) | p as u64);
                let y: f64 = grid.y_radius * (2.0 * r.random::<f64>() - 1.0);
                let z: f64 = grid.y_radius * (2.0 * r.random::<f64>() - 1.0);
                y.abs().powi(3) / (1.0 + y.abs() + z.abs())
            })
            .fold(0.0, f64::max);
        assert!((a.l3_terms["fg_growth"] - max_ratio).abs() < 1e-9 * max_ratio);
    }

    #[test]
    fn every_preset_passes_its_own_audit() {
        for info in PRESETS {
            let c = preset(info.name, &BTreeMap::new()).unwrap();
            let dom: DomainSpec = if c.dims.d == 1 {
                unit_interval()
            } else {
                DomainSpec::ball(vec![0.0; c.dims.d], 1.0).unwrap()
            };
            let grid = AuditGrid { points_per_axis: 12, ..AuditGrid::default() };
            let a = audit_assumptions(&c, &dom, &grid, 2).unwrap();
            assert!(a.pass.all(), "{}: {:?}", info.name, a.violations);
            assert!(a.g_partials_error.unwrap() < 1e-6);
        }
    }

    #[test]
    fn enlarging_grid_is_monotone() {
        let c = preset("linear-drift", &params(&[("a", -2.0), ("c", 0.5)])).unwrap()
            .with_driver(|_, x, y, z, o| o[0] = (x[0] * y[0]).sin() + 0.3 * z[0]);
        let dom = unit_interval();
        let small = AuditGrid { points_per_axis: 10, time_points: 3, yz_pairs: 8, ..AuditGrid::default() };
        let large = AuditGrid { points_per_axis: 40, time_points: 9, yz_pairs: 30, ..AuditGrid::default() };
        let a = audit_assumptions(&c, &dom, &small, 3).unwrap();
        let b = audit_assumptions(&c, &dom, &large, 3).unwrap();
        assert!(b.l1 >= a.l1);
        assert!(b.l3 >= a.l3);
        assert!(b.iota <= a.iota);
    }

    #[test]
    fn wrong_g_partials_are_caught() {
        let mut c = preset("boundary-g-linear", &BTreeMap::new()).unwrap();
        c.g_partials = Some(Arc::new(|_, _, _, p: &mut BoundaryPartials| {
            p.dt.fill(0.0);
            p.dx.fill(0.0);
            p.dy.fill(0.0);
        }));
        let a = audit_assumptions(&c, &unit_interval(), &AuditGrid::default(), 1).unwrap();
        assert!(!a.pass.driver);
    }

    #[test]
    fn small_grid_rejected() {
        let c = preset("constant-drift", &BTreeMap::new()).unwrap();
        let grid = AuditGrid { points_per_axis: 5, ..AuditGrid::default() };
        assert!(audit_assumptions(&c, &unit_interval(), &grid, 0).is_err());
    }
}
