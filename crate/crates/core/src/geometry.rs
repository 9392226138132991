//! Convex domains `Θ = {φ > 0}` with `∂Θ = {φ = 0}` and `|∇φ| = 1` on the
//! boundary, together with Euclidean projection onto the closure.
//!
//! The shipped shapes (interval, ball) use the signed distance to the
//! boundary, which is exact within half a radius of `∂Θ`. Deeper inside it is
//! replaced by an even quartic in the distance to the center so that `φ` is
//! C² everywhere. Writing `u = |x - c|`, `u0 = r/2`:
//!
//! ```text
//! φ(x) = r - q(u),   q(u) = u                                  for u >= u0
//!                    q(u) = 3u0/8 + 3u²/(4u0) - u⁴/(8u0³)      for u <  u0
//! ```
//!
//! `q` matches value, slope and curvature at `u0`, is increasing and convex,
//! so `φ` is concave and its positive set is the open ball.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm};
use crate::rng::{self, Purpose};

/// A closed convex domain as seen by the solvers.
///
/// Implementations must be pure; a domain is shared read-only across workers.
pub trait Domain: Send + Sync {
    fn dim(&self) -> usize;
    fn phi(&self, x: &[f64]) -> f64;
    fn grad_phi(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `d x d` Hessian of `φ`.
    fn hess_phi(&self, x: &[f64], out: &mut [f64]);
    /// Euclidean nearest point of the closure. Points already in the closure
    /// are returned unchanged, so projection is idempotent.
    fn project(&self, p: &[f64], out: &mut [f64]);
    /// Exact closure membership, consistent with [`Domain::project`].
    fn contains(&self, x: &[f64]) -> bool;
    /// Declared constant of the boundary convexity inequality.
    fn alpha(&self) -> f64;
    fn boundary_tol(&self) -> f64;
    fn diameter(&self) -> f64;
    /// Axis-aligned bounding box `(lower, upper)` of the closure.
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);
    /// A point of the closure drawn from `rng`.
    fn sample_closure(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// A boundary point drawn from `rng`.
    fn sample_boundary(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;

    fn on_boundary(&self, x: &[f64]) -> bool {
        self.phi(x).abs() <= self.boundary_tol()
    }
}

/// Serializable description of a shipped shape, as found in config files:
/// `{"kind":"interval","a":0,"b":1}` or `{"kind":"ball","center":[0,0],"radius":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainDescriptor {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

/// A shipped convex domain. Intervals are one-dimensional balls internally;
/// only projection differs (exact clamping to the endpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    shape: Shape,
    center: Vec<f64>,
    radius: f64,
    alpha: f64,
    boundary_tol: f64,
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidShape(format!("empty interval [{a}, {b}]")));
        }
        let radius = 0.5 * (b - a);
        Ok(DomainSpec {
            shape: Shape::Interval { a, b },
            center: vec![0.5 * (a + b)],
            radius,
            alpha: 0.0,
            boundary_tol: 1e-9 * (b - a),
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidShape("ball center has no coordinates".into()));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape(format!("nonpositive radius {radius}")));
        }
        Ok(DomainSpec {
            shape: Shape::Ball { center: center.clone(), radius },
            center,
            radius,
            alpha: 0.0,
            boundary_tol: 2e-9 * radius,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_boundary_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        match &self.shape {
            Shape::Interval { a, b } => DomainDescriptor::Interval { a: *a, b: *b },
            Shape::Ball { center, radius } => DomainDescriptor::Ball {
                center: center.clone(),
                radius: *radius,
            },
        }
    }

    fn inner_radius(&self) -> f64 {
        0.5 * self.radius
    }

    /// `q'(u)/u` on the smoothed core, a polynomial in `u²`.
    fn core_slope_ratio(&self, u2: f64) -> f64 {
        let u0 = self.inner_radius();
        1.5 / u0 - u2 / (2.0 * u0 * u0 * u0)
    }
}

/// Build a shipped domain from its description.
pub fn make_domain(descriptor: &DomainDescriptor) -> Result<DomainSpec> {
    match descriptor {
        DomainDescriptor::Interval { a, b } => DomainSpec::interval(*a, *b),
        DomainDescriptor::Ball { center, radius } => DomainSpec::ball(center.clone(), *radius),
    }
}

impl Domain for DomainSpec {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn phi(&self, x: &[f64]) -> f64 {
        let u = dist(x, &self.center);
        let u0 = self.inner_radius();
        let q = if u >= u0 {
            u
        } else {
            let u2 = u * u;
            0.375 * u0 + 0.75 * u2 / u0 - u2 * u2 / (8.0 * u0 * u0 * u0)
        };
        self.radius - q
    }

    fn grad_phi(&self, x: &[f64], out: &mut [f64]) {
        let u = dist(x, &self.center);
        let scale = if u >= self.inner_radius() {
            1.0 / u
        } else {
            self.core_slope_ratio(u * u)
        };
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = -scale * (xi - ci);
        }
    }

    fn hess_phi(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let u = dist(x, &self.center);
        let u0 = self.inner_radius();
        // Exact region: -(I - n n^T)/u. Core: -g(u²) I + (x-c)(x-c)^T / u0³.
        let (diag, outer) = if u >= u0 {
            (-1.0 / u, 1.0 / (u * u * u))
        } else {
            (-self.core_slope_ratio(u * u), 1.0 / (u0 * u0 * u0))
        };
        for i in 0..d {
            for j in 0..d {
                let yi = x[i] - self.center[i];
                let yj = x[j] - self.center[j];
                out[i * d + j] = outer * yi * yj + if i == j { diag } else { 0.0 };
            }
        }
    }

    fn project(&self, p: &[f64], out: &mut [f64]) {
        if let Shape::Interval { a, b } = self.shape {
            out[0] = p[0].clamp(a, b);
            return;
        }
        let u = dist(p, &self.center);
        if u <= self.radius {
            out.copy_from_slice(p);
            return;
        }
        let mut scale = self.radius / u;
        loop {
            for ((o, pi), ci) in out.iter_mut().zip(p).zip(&self.center) {
                *o = ci + (pi - ci) * scale;
            }
            if dist(out, &self.center) <= self.radius {
                break;
            }
            scale = scale.next_down();
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self.shape {
            Shape::Interval { a, b } => x[0] >= a && x[0] <= b,
            Shape::Ball { .. } => dist(x, &self.center) <= self.radius,
        }
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn boundary_tol(&self) -> f64 {
        self.boundary_tol
    }

    fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self.shape {
            Shape::Interval { a, b } => (vec![a], vec![b]),
            Shape::Ball { .. } => (
                self.center.iter().map(|c| c - self.radius).collect(),
                self.center.iter().map(|c| c + self.radius).collect(),
            ),
        }
    }

    fn sample_closure(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let d = self.dim();
        if let Shape::Interval { a, b } = self.shape {
            return vec![a + (b - a) * rng.random::<f64>()];
        }
        let dir = random_direction(rng, d);
        let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
        let p: Vec<f64> = self.center.iter().zip(&dir).map(|(c, v)| c + r * v).collect();
        let mut out = vec![0.0; d];
        self.project(&p, &mut out);
        out
    }

    fn sample_boundary(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let d = self.dim();
        if let Shape::Interval { a, b } = self.shape {
            return vec![if rng.random::<bool>() { a } else { b }];
        }
        let dir = random_direction(rng, d);
        let p: Vec<f64> = self
            .center
            .iter()
            .zip(&dir)
            .map(|(c, v)| c + self.radius * v)
            .collect();
        let mut out = vec![0.0; d];
        self.project(&p, &mut out);
        out
    }
}

fn random_direction(rng: &mut dyn rand::RngCore, d: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; d];
        rng::fill_normal(rng, 1.0, &mut v);
        let n = norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Result of sampling the boundary convexity inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// Smallest `α >= 0` making the inequality hold over all sampled pairs.
    pub alpha_min: f64,
    /// Boundary point and closure point attaining `alpha_min`.
    pub worst_pair: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
}

/// Tolerance on `alpha_min - alpha` before an audit failure is declared.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Sample `2<x'-x, ∇φ(x)> + α|x-x'|² >= 0` over boundary points `x` and
/// closure points `x'`, and report the smallest admissible `α`.
pub fn verify_convexity(domain: &dyn Domain, n_samples: usize, rng_seed: u64) -> Result<ConvexityReport> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("verify_convexity needs at least 2 samples".into()));
    }
    let d = domain.dim();
    let mut rng = rng::stream(rng_seed, Purpose::Convexity, 0);
    let boundary: Vec<Vec<f64>> = (0..n_samples).map(|_| domain.sample_boundary(&mut rng)).collect();
    let closure: Vec<Vec<f64>> = (0..n_samples)
        .map(|i| {
            if i % 4 == 0 {
                domain.sample_boundary(&mut rng)
            } else {
                domain.sample_closure(&mut rng)
            }
        })
        .collect();

    let min_sep = 1e-12 * domain.diameter();
    let mut grad = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let mut alpha_min = 0.0_f64;
    let mut worst = (boundary[0].clone(), closure[0].clone());
    let mut pairs = 0;
    for x in &boundary {
        domain.grad_phi(x, &mut grad);
        for xp in &closure {
            for ((o, a), b) in diff.iter_mut().zip(xp).zip(x) {
                *o = a - b;
            }
            let sep2 = dot(&diff, &diff);
            if sep2.sqrt() <= min_sep {
                continue;
            }
            pairs += 1;
            let needed = -2.0 * dot(&diff, &grad) / sep2;
            if needed > alpha_min {
                alpha_min = needed;
                worst = (x.clone(), xp.clone());
            }
        }
    }
    if alpha_min > domain.alpha() + CONVEXITY_SLACK {
        return Err(Error::AuditFailure {
            assumption: "convexity".into(),
            inequality: "2<x'-x, grad phi(x)> + alpha |x-x'|^2 >= 0".into(),
            witness: format!("x = {:?}, x' = {:?}", worst.0, worst.1),
            lhs: alpha_min,
            rhs: domain.alpha(),
        });
    }
    Ok(ConvexityReport {
        alpha_min,
        worst_pair: worst,
        pairs,
    })
}

/// Consistency of `φ`, `∇φ`, `D²φ` on sampled points of the closure.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiConsistency {
    /// `max | |∇φ(x)| - 1 |` over sampled boundary points.
    pub boundary_grad_defect: f64,
    /// Max abs error of central differences of `φ` against `∇φ`.
    pub grad_fd_error: f64,
    /// Max abs error of central differences of `∇φ` against `D²φ`.
    pub hess_fd_error: f64,
}

pub fn check_phi_consistency(domain: &dyn Domain, n_samples: usize, step: f64, rng_seed: u64) -> PhiConsistency {
    let d = domain.dim();
    let mut rng = rng::stream(rng_seed, Purpose::Convexity, 1);
    let mut g = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut out = PhiConsistency {
        boundary_grad_defect: 0.0,
        grad_fd_error: 0.0,
        hess_fd_error: 0.0,
    };
    for _ in 0..n_samples {
        let xb = domain.sample_boundary(&mut rng);
        domain.grad_phi(&xb, &mut g);
        out.boundary_grad_defect = out.boundary_grad_defect.max((norm(&g) - 1.0).abs());

        let x = domain.sample_closure(&mut rng);
        domain.grad_phi(&x, &mut g);
        domain.hess_phi(&x, &mut hess);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let fd = (domain.phi(&xp) - domain.phi(&xm)) / (2.0 * step);
            out.grad_fd_error = out.grad_fd_error.max((fd - g[j]).abs());
            domain.grad_phi(&xp, &mut gp);
            domain.grad_phi(&xm, &mut gm);
            for i in 0..d {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                out.hess_fd_error = out.hess_fd_error.max((fd - hess[i * d + j]).abs());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball() -> DomainSpec {
        DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn interval_signed_distance_at_endpoints() {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let mut g = [0.0];
        assert_eq!(dom.phi(&[0.0]), 0.0);
        assert_eq!(dom.phi(&[1.0]), 0.0);
        dom.grad_phi(&[0.0], &mut g);
        assert_eq!(g[0], 1.0);
        dom.grad_phi(&[1.0], &mut g);
        assert_eq!(g[0], -1.0);
        // exact signed distance near the boundary
        assert!((dom.phi(&[0.2]) - 0.2).abs() < 1e-15);
        assert!((dom.phi(&[-0.1]) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn ball_inward_normal() {
        let dom = unit_ball();
        let mut g = [0.0; 2];
        assert_eq!(dom.phi(&[1.0, 0.0]), 0.0);
        dom.grad_phi(&[1.0, 0.0], &mut g);
        assert_eq!(g, [-1.0, 0.0]);
    }

    #[test]
    fn invalid_shapes() {
        assert!(matches!(DomainSpec::interval(1.0, 1.0), Err(Error::InvalidShape(_))));
        assert!(matches!(DomainSpec::interval(2.0, 1.0), Err(Error::InvalidShape(_))));
        assert!(matches!(DomainSpec::ball(vec![0.0], 0.0), Err(Error::InvalidShape(_))));
        assert!(matches!(DomainSpec::ball(vec![0.0], -1.0), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn projection_examples() {
        let ball = unit_ball();
        let mut out = [0.0; 2];
        ball.project(&[2.0, 0.0], &mut out);
        assert_eq!(out, [1.0, 0.0]);
        let iv = DomainSpec::interval(0.0, 1.0).unwrap();
        let mut o = [0.0];
        iv.project(&[0.4], &mut o);
        assert_eq!(o[0], 0.4);
        iv.project(&[-0.3], &mut o);
        assert_eq!(o[0], 0.0);
    }

    #[test]
    fn convexity_of_shipped_shapes() {
        let r = verify_convexity(&unit_ball(), 1000, 3).unwrap();
        assert!(r.alpha_min <= 1e-9, "{}", r.alpha_min);
        let r = verify_convexity(&DomainSpec::interval(0.0, 1.0).unwrap(), 1000, 3).unwrap();
        assert!(r.alpha_min <= 1e-9);
        let r = verify_convexity(&DomainSpec::ball(vec![1.0, -2.0, 0.5], 0.3).unwrap(), 300, 9).unwrap();
        assert!(r.alpha_min <= 1e-9);
    }

    /// Outward instead of inward normal.
    struct FlippedGradient(DomainSpec);

    impl Domain for FlippedGradient {
        fn dim(&self) -> usize { self.0.dim() }
        fn phi(&self, x: &[f64]) -> f64 { self.0.phi(x) }
        fn grad_phi(&self, x: &[f64], out: &mut [f64]) {
            self.0.grad_phi(x, out);
            out.iter_mut().for_each(|g| *g = -*g);
        }
        fn hess_phi(&self, x: &[f64], out: &mut [f64]) { self.0.hess_phi(x, out) }
        fn project(&self, p: &[f64], out: &mut [f64]) { self.0.project(p, out) }
        fn contains(&self, x: &[f64]) -> bool { self.0.contains(x) }
        fn alpha(&self) -> f64 { self.0.alpha() }
        fn boundary_tol(&self) -> f64 { self.0.boundary_tol() }
        fn diameter(&self) -> f64 { self.0.diameter() }
        fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) { self.0.bounding_box() }
        fn sample_closure(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> { self.0.sample_closure(rng) }
        fn sample_boundary(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> { self.0.sample_boundary(rng) }
    }

    #[test]
    fn corrupted_gradient_fails_audit() {
        let bad = FlippedGradient(unit_ball());
        match verify_convexity(&bad, 200, 1) {
            Err(Error::AuditFailure { lhs, .. }) => assert!(lhs > 0.5),
            other => panic!("expected AuditFailure, got {other:?}"),
        }
        let bad = FlippedGradient(DomainSpec::interval(0.0, 1.0).unwrap());
        assert!(verify_convexity(&bad, 50, 1).is_err());
    }

    #[test]
    fn phi_derivatives_are_consistent() {
        for dom in [unit_ball(), DomainSpec::interval(-1.0, 3.0).unwrap()] {
            let c = check_phi_consistency(&dom, 500, 1e-5, 11);
            assert!(c.boundary_grad_defect <= 10.0 * dom.boundary_tol());
            assert!(c.grad_fd_error < 1e-8, "{c:?}");
            assert!(c.hess_fd_error < 1e-6, "{c:?}");
        }
    }

    #[test]
    fn phi_is_c2_across_the_core_radius() {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let u0 = 0.25;
        let e = 1e-9;
        let mut h1 = [0.0];
        let mut h2 = [0.0];
        dom.hess_phi(&[0.5 + u0 - e], &mut h1);
        dom.hess_phi(&[0.5 + u0 + e], &mut h2);
        assert!((h1[0] - h2[0]).abs() < 1e-6);
        assert!((dom.phi(&[0.5 + u0 - e]) - dom.phi(&[0.5 + u0 + e])).abs() < 1e-8);
    }

    #[test]
    fn descriptor_round_trip() {
        let text = r#"{"kind":"ball","center":[0.0,1.0],"radius":2.0}"#;
        let desc: DomainDescriptor = serde_json::from_str(text).unwrap();
        let dom = make_domain(&desc).unwrap();
        assert_eq!(dom.descriptor(), desc);
        let desc: DomainDescriptor = serde_json::from_str(r#"{"kind":"interval","a":0,"b":1}"#).unwrap();
        assert_eq!(make_domain(&desc).unwrap().dim(), 1);
    }
}
