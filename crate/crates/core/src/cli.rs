//! Batch runner: JSON experiment configs in, CSV tables plus a manifest out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::action::{
    contracted_rate, evaluate_action, iteration_log_table, minimize_action_endpoint, ContractionOptions,
    OptimizerOptions,
};
use crate::backward::{apply_pi, solve_bsde_grid, solve_limit_bsde, solve_limit_field, SpaceLattice};
use crate::coefficients::{audit_assumptions, preset, AuditGrid, CoefficientSet};
use crate::error::{Error, Result};
use crate::forward::{
    integrate_reflected_sde, integrate_skeleton_ode, reflection_budget_identity, Path, TimeGrid,
};
use crate::geometry::{make_domain, verify_convexity, Domain, DomainDescriptor, DomainSpec};
use crate::harness::{convergence_study, tail_study, BsdeSettings, Target, TailOptions};
use crate::linalg::dist;
use crate::rng;
use crate::table::{indexed, Cell, Table};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
/// Largest distance between the start point and its projection.
const START_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Audit,
    Skeleton,
    SimulateForward,
    BsdeLimit,
    BsdeGrid,
    ActionEval,
    ActionMin,
    ContractedRate,
    Convergence,
    Tail,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::Skeleton => "skeleton",
            Command::SimulateForward => "simulate-forward",
            Command::BsdeLimit => "bsde-limit",
            Command::BsdeGrid => "bsde-grid",
            Command::ActionEval => "action-eval",
            Command::ActionMin => "action-min",
            Command::ContractedRate => "contracted-rate",
            Command::Convergence => "convergence",
            Command::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest constraint violation accepted by `contracted-rate`.
    pub constraint: f64,
    /// Slack on the lower bound in `tail`.
    pub tail: f64,
    pub iota_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { constraint: 1e-3, tail: 0.05, iota_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub points_per_axis: usize,
    pub time_points: usize,
    pub yz_pairs: usize,
    pub convexity_samples: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        let g = AuditGrid::default();
        AuditSettings {
            points_per_axis: g.points_per_axis,
            time_points: g.time_points,
            yz_pairs: g.yz_pairs,
            convexity_samples: 1000,
        }
    }
}

fn default_t() -> f64 {
    1.0
}
fn default_n_steps() -> usize {
    1000
}
fn default_eps() -> f64 {
    0.01
}
fn default_ladder() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}
fn default_n_paths() -> usize {
    1000
}
fn default_output_dir() -> String {
    "out".into()
}
fn default_target() -> Target {
    Target::X4
}
fn default_delta() -> f64 {
    0.2
}
fn default_lattice_points() -> usize {
    33
}
fn default_mc() -> usize {
    256
}
fn default_action_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub domain: DomainDescriptor,
    pub preset: PresetRef,
    #[serde(default)]
    pub s: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    pub x: Vec<f64>,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_ladder")]
    pub eps_ladder: Vec<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_target")]
    pub target: Target,
    /// Endpoint for `action-min`.
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    /// Exceedance threshold for `tail`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Path for `action-eval`; defaults to the skeleton.
    #[serde(default)]
    pub path: Option<Vec<Vec<f64>>>,
    /// Value path for `contracted-rate`; defaults to `Π(skeleton)`.
    #[serde(default)]
    pub gamma: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_lattice_points")]
    pub lattice_points: usize,
    #[serde(default = "default_mc")]
    pub mc_per_node: usize,
    /// Path grid of the action certificate in `tail`.
    #[serde(default = "default_action_steps")]
    pub action_steps: usize,
    #[serde(default)]
    pub audit: AuditSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.to_string(), reason: reason.into() }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// The domain and coefficients a validated config refers to.
pub struct Resolved {
    pub domain: DomainSpec,
    pub coeffs: CoefficientSet,
    pub grid: TimeGrid,
}

/// Build domain, coefficients and grid, reporting problems at their field.
pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    if !(config.s.is_finite() && config.t_end.is_finite() && config.s < config.t_end) {
        return Err(invalid("/s", format!("need s < T, got s = {}, T = {}", config.s, config.t_end)));
    }
    if config.n_steps == 0 {
        return Err(invalid("/n_steps", "must be at least 1"));
    }
    let grid = TimeGrid::new(config.s, config.t_end, config.n_steps)?;
    let domain = make_domain(&config.domain).map_err(|e| invalid("/domain", e.to_string()))?;
    let mut coeffs = preset(&config.preset.name, &config.preset.params).map_err(|e| match &e {
        Error::UnknownPreset(_) => invalid("/preset/name", e.to_string()),
        Error::InvalidParameter { name, .. } => invalid(&format!("/preset/params/{name}"), e.to_string()),
        _ => invalid("/preset", e.to_string()),
    })?;
    if let Some(&t) = config.preset.params.get("T") {
        if t != config.t_end {
            return Err(invalid("/preset/params/T", "differs from the config horizon T"));
        }
    }
    coeffs.horizon = config.t_end;
    let d = domain.dim();
    if coeffs.dims.d != d {
        return Err(invalid("/preset/params/d", format!("model dimension {} but domain dimension {d}", coeffs.dims.d)));
    }
    let check_point = |p: &[f64], field: &str| -> Result<()> {
        if p.len() != d {
            return Err(invalid(field, format!("expected {d} coordinates, got {}", p.len())));
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(invalid(field, "coordinates must be finite"));
        }
        let mut q = vec![0.0; d];
        domain.project(p, &mut q);
        if dist(p, &q) > START_TOL {
            return Err(invalid(field, format!("point lies {:e} outside the closed domain", dist(p, &q))));
        }
        Ok(())
    };
    check_point(&config.x, "/x")?;
    if !(config.eps >= 0.0 && config.eps.is_finite()) {
        return Err(invalid("/eps", "must be finite and >= 0"));
    }
    if config.eps_ladder.is_empty()
        || config.eps_ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        || config.eps_ladder.windows(2).any(|w| !(w[1] < w[0]))
    {
        return Err(invalid("/eps_ladder", "must be a nonempty strictly decreasing list in (0, 1)"));
    }
    if config.n_paths == 0 {
        return Err(invalid("/n_paths", "must be at least 1"));
    }
    if !(config.delta > 0.0 && config.delta.is_finite()) {
        return Err(invalid("/delta", "must be positive"));
    }
    if config.lattice_points < 2 {
        return Err(invalid("/lattice_points", "must be at least 2"));
    }
    if config.action_steps < 2 {
        return Err(invalid("/action_steps", "must be at least 2"));
    }
    if let Some(y) = &config.y {
        check_point(y, "/y")?;
    } else if config.command == Command::ActionMin {
        return Err(invalid("/y", "action-min needs a target point"));
    }
    if let Some(path) = &config.path {
        if path.len() != config.n_steps + 1 {
            return Err(invalid("/path", format!("expected {} points", config.n_steps + 1)));
        }
        for (i, p) in path.iter().enumerate() {
            check_point(p, &format!("/path/{i}"))?;
        }
    }
    if let Some(gamma) = &config.gamma {
        if gamma.len() != config.n_steps + 1 {
            return Err(invalid("/gamma", format!("expected {} values", config.n_steps + 1)));
        }
        for (i, g) in gamma.iter().enumerate() {
            if g.len() != coeffs.dims.k {
                return Err(invalid(&format!("/gamma/{i}"), format!("expected {} components", coeffs.dims.k)));
            }
        }
    }
    let t = &config.tolerances;
    if !(t.constraint > 0.0 && t.tail >= 0.0 && t.iota_floor >= 0.0) {
        return Err(invalid("/tolerances", "tolerances must be nonnegative (constraint positive)"));
    }
    if config.audit.points_per_axis < 10 {
        return Err(invalid("/audit/points_per_axis", "must be at least 10"));
    }
    Ok(Resolved { domain, coeffs, grid })
}

/// Parse a JSON config, apply defaults and check it.
pub fn validate(config_text: &[u8]) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_slice(config_text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = pointer(e.path());
        Error::ConfigInvalid { field, reason: e.into_inner().to_string() }
    })?;
    de.end().map_err(|e| invalid("/", e.to_string()))?;
    resolve(&config)?;
    Ok(config)
}

/// SHA-256 of the canonical JSON serialization of the config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
    pub version: String,
    pub summary: Value,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn path_from_points(grid: TimeGrid, points: &[Vec<f64>]) -> Result<Path> {
    Path::from_points(grid, points)
}

/// Execute the command; returns the output tables and a JSON summary.
fn execute(config: &ExperimentConfig, r: &Resolved) -> Result<(Vec<(String, Table)>, Value)> {
    let (domain, coeffs, grid) = (&r.domain, &r.coeffs, r.grid);
    let name = config.command.name();
    let x = &config.x;
    let lattice = || SpaceLattice::covering(domain, config.lattice_points);
    Ok(match config.command {
        Command::Audit => {
            let grid = AuditGrid {
                points_per_axis: config.audit.points_per_axis,
                time_points: config.audit.time_points,
                yz_pairs: config.audit.yz_pairs,
                iota_floor: config.tolerances.iota_floor,
                ..AuditGrid::default()
            };
            let audit = audit_assumptions(coeffs, domain, &grid, config.seed)?;
            let convexity = verify_convexity(domain, config.audit.convexity_samples, config.seed);
            let mut t = Table::new(["quantity", "value"]);
            t.push(vec!["L1".into(), audit.l1.into()]);
            t.push(vec!["L1_lipschitz".into(), audit.l1_lipschitz.into()]);
            t.push(vec!["L1_growth".into(), audit.l1_growth.into()]);
            t.push(vec!["L3".into(), audit.l3.into()]);
            for (k, v) in &audit.l3_terms {
                t.push(vec![Cell::Text(format!("L3_{k}")), (*v).into()]);
            }
            t.push(vec!["iota".into(), audit.iota.into()]);
            t.push(vec!["pass_lipschitz".into(), Cell::Int(audit.pass.lipschitz as u64)]);
            t.push(vec!["pass_ellipticity".into(), Cell::Int(audit.pass.ellipticity as u64)]);
            t.push(vec!["pass_driver".into(), Cell::Int(audit.pass.driver as u64)]);
            let convexity_value = match &convexity {
                Ok(rep) => to_value(rep),
                Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
            };
            (
                vec![(format!("{name}.csv"), t)],
                json!({ "assumptions": to_value(&audit), "convexity": convexity_value }),
            )
        }
        Command::Skeleton => {
            let sk = integrate_skeleton_ode(coeffs, domain, x, grid)?;
            let summary = json!({ "final_x": sk.final_x(), "final_k": sk.final_k() });
            (vec![(format!("{name}.csv"), sk.to_table())], summary)
        }
        Command::SimulateForward => {
            let d = coeffs.dims.d;
            let mut t = Table::new(
                ["path".to_string(), "t".to_string()]
                    .into_iter()
                    .chain(indexed("x", d))
                    .chain(std::iter::once("K".to_string())),
            );
            let mut violations = 0usize;
            let mut residual = 0.0_f64;
            for idx in 0..config.n_paths {
                let mut rs = rng::trajectory_stream(config.seed, idx as u64);
                let traj = integrate_reflected_sde(coeffs, domain, x, config.eps, grid, &mut rs)?;
                violations += traj.invariant_violations(domain).len();
                residual = residual.max(reflection_budget_identity(coeffs, domain, &traj)?);
                for i in 0..grid.n_nodes() {
                    let mut row = vec![Cell::from(idx), grid.time(i).into()];
                    row.extend(traj.x(i).iter().map(|&v| Cell::from(v)));
                    row.push(traj.k_path[i].into());
                    t.push(row);
                }
            }
            let summary = json!({ "invariant_violations": violations, "max_budget_residual": residual });
            (vec![(format!("{name}.csv"), t)], summary)
        }
        Command::BsdeLimit => {
            let sk = integrate_skeleton_ode(coeffs, domain, x, grid)?;
            let psi = solve_limit_bsde(coeffs, &sk)?;
            let summary = json!({ "y0": psi.y(0) });
            (vec![(format!("{name}.csv"), psi.to_table())], summary)
        }
        Command::BsdeGrid => {
            let field = solve_bsde_grid(coeffs, domain, config.eps, grid, &lattice()?, config.mc_per_node, config.seed)?;
            let mut u0 = vec![0.0; field.k];
            field.eval(grid.s(), x, &mut u0)?;
            let summary = json!({ "u_at_start": u0, "lattice_lipschitz": field.lattice_lipschitz() });
            (vec![(format!("{name}.csv"), field.to_table())], summary)
        }
        Command::ActionEval => {
            let psi = match &config.path {
                Some(p) => path_from_points(grid, p)?,
                None => integrate_skeleton_ode(coeffs, domain, x, grid)?.state_path(),
            };
            let res = evaluate_action(coeffs, domain, &psi)?;
            let summary = json!({ "action": res.action, "feasible": res.feasible });
            (vec![(format!("{name}.csv"), res.to_table())], summary)
        }
        Command::ActionMin => {
            let y = config.y.as_ref().expect("validated");
            let res = minimize_action_endpoint(coeffs, domain, x, y, grid, &OptimizerOptions::default())?;
            let summary = json!({
                "action": res.best.action,
                "status": to_value(&res.status),
                "iterations": res.log.len(),
            });
            (
                vec![
                    (format!("{name}.csv"), res.best.to_table()),
                    (format!("{name}-log.csv"), iteration_log_table(&res.log)),
                ],
                summary,
            )
        }
        Command::ContractedRate => {
            let field = solve_limit_field(coeffs, domain, grid, &lattice()?)?;
            let gamma = match &config.gamma {
                Some(g) => g.concat(),
                None => apply_pi(&field, &integrate_skeleton_ode(coeffs, domain, x, grid)?.state_path())?,
            };
            let opts = ContractionOptions { tolerance: config.tolerances.constraint, ..ContractionOptions::default() };
            let res = contracted_rate(coeffs, domain, &field, x, &gamma, grid, &opts)?;
            let summary = json!({
                "s_prime": res.s_prime,
                "violation": res.violation,
                "stage_status": to_value(&res.stage_status),
            });
            (
                vec![
                    (format!("{name}.csv"), res.argmin.to_table()),
                    (format!("{name}-log.csv"), iteration_log_table(&res.log)),
                ],
                summary,
            )
        }
        Command::Convergence => {
            let bsde = BsdeSettings { lattice_points: config.lattice_points, mc_per_node: config.mc_per_node };
            let rep = convergence_study(
                config.target,
                coeffs,
                domain,
                x,
                &config.eps_ladder,
                config.n_paths,
                grid,
                config.seed,
                &bsde,
            )?;
            (vec![(format!("{name}.csv"), rep.to_table())], to_value(&rep))
        }
        Command::Tail => {
            let opts = TailOptions {
                action_steps: config.action_steps,
                tolerance: config.tolerances.tail,
                ..TailOptions::default()
            };
            let rep = tail_study(
                coeffs,
                domain,
                x,
                config.delta,
                &config.eps_ladder,
                config.n_paths,
                grid,
                config.seed,
                &opts,
            )?;
            (vec![(format!("{name}.csv"), rep.to_table())], to_value(&rep))
        }
    })
}

fn output_names(command: Command) -> Vec<String> {
    let name = command.name();
    let mut v = vec![format!("{name}.csv"), "manifest.json".to_string()];
    if matches!(command, Command::ActionMin | Command::ContractedRate) {
        v.push(format!("{name}-log.csv"));
    }
    v
}

/// Machine-readable failure record.
pub fn error_json(err: &Error) -> Value {
    let mut v = json!({ "kind": err.kind(), "message": err.to_string() });
    if let Error::ConfigInvalid { field, reason } = err {
        v["field"] = json!(field);
        v["reason"] = json!(reason);
    }
    v
}

/// Write `error.json` into `dir`, removing any outputs of `command` left from
/// earlier runs.
pub fn write_error(dir: &FsPath, command: Option<Command>, err: &Error) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(c) = command {
        for f in output_names(c) {
            let _ = fs::remove_file(dir.join(f));
        }
    }
    let text = serde_json::to_string_pretty(&error_json(err)).expect("error serializes");
    fs::write(dir.join("error.json"), text + "\n")?;
    Ok(())
}

fn write_atomic(dir: &FsPath, staging: &FsPath, name: &str, content: &[u8]) -> Result<()> {
    let tmp = staging.join(name);
    fs::write(&tmp, content)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Run the configured command and write its outputs and `manifest.json` into
/// `config.output_dir`. Outputs are staged under a temporary name and moved
/// in place only on success; on failure the directory receives `error.json`
/// instead.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    let dir = PathBuf::from(&config.output_dir);
    let result = run_inner(config, &dir);
    if let Err(e) = &result {
        write_error(&dir, Some(config.command), e)?;
    }
    result
}

fn run_inner(config: &ExperimentConfig, dir: &FsPath) -> Result<RunManifest> {
    let started = now();
    let resolved = resolve(config)?;
    let (tables, summary) = execute(config, &resolved)?;
    fs::create_dir_all(dir)?;
    let staging = dir.join(format!(".staging-{}", std::process::id()));
    fs::create_dir_all(&staging)?;
    let outcome = (|| -> Result<RunManifest> {
        let rendered: Vec<(String, String, usize)> =
            tables.iter().map(|(n, t)| (n.clone(), t.to_csv(), t.len())).collect();
        // write everything first, then move into place
        for (n, csv, _) in &rendered {
            fs::write(staging.join(n), csv)?;
        }
        let manifest = RunManifest {
            config: config.clone(),
            config_hash: config_hash(config),
            seed: config.seed,
            started_unix: started,
            finished_unix: now(),
            outputs: rendered.iter().map(|(n, _, rows)| OutputFile { file: n.clone(), rows: *rows }).collect(),
            version: VERSION.to_string(),
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(staging.join("manifest.json"), &text)?;
        let _ = fs::remove_file(dir.join("error.json"));
        for (n, _, _) in &rendered {
            fs::rename(staging.join(n), dir.join(n))?;
        }
        write_atomic(dir, &staging, "manifest.json", text.as_bytes())?;
        Ok(manifest)
    })();
    let _ = fs::remove_dir_all(&staging);
    outcome
}

/// Command-line entry point shared by the binary and the tests. Returns the
/// process exit code.
pub fn run_cli(command: Command, config_path: &FsPath, workers: Option<usize>, out: Option<&FsPath>) -> i32 {
    let fail_dir = |cfg_dir: Option<&str>| -> PathBuf {
        out.map(FsPath::to_path_buf).unwrap_or_else(|| PathBuf::from(cfg_dir.unwrap_or("out")))
    };
    let report = |dir: PathBuf, e: &Error| {
        eprintln!("error: {e}");
        if let Err(w) = write_error(&dir, Some(command), e) {
            eprintln!("error: could not write error.json: {w}");
        }
        1
    };
    let text = match fs::read(config_path) {
        Ok(t) => t,
        Err(e) => return report(fail_dir(None), &Error::from(e)),
    };
    // the output directory is needed even when validation fails
    let cfg_dir = serde_json::from_slice::<Value>(&text)
        .ok()
        .and_then(|v| v.get("output_dir").and_then(Value::as_str).map(String::from));
    let mut patched: Value = match serde_json::from_slice(&text) {
        Ok(v) => v,
        Err(e) => return report(fail_dir(cfg_dir.as_deref()), &invalid("/", e.to_string())),
    };
    if let Some(obj) = patched.as_object_mut() {
        obj.insert("command".into(), json!(command));
    }
    let mut config = match validate(patched.to_string().as_bytes()) {
        Ok(c) => c,
        Err(e) => return report(fail_dir(cfg_dir.as_deref()), &e),
    };
    if let Ok(seed) = std::env::var("REFLECTAL_SEED") {
        match seed.trim().parse::<u64>() {
            Ok(s) => config.seed = s,
            Err(_) => {
                return report(fail_dir(Some(&config.output_dir)), &invalid("/seed", "REFLECTAL_SEED is not a u64"))
            }
        }
    }
    if let Some(o) = out {
        config.output_dir = o.to_string_lossy().into_owned();
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report(fail_dir(Some(&config.output_dir)), &Error::InvalidInput(e.to_string())),
    };
    match pool.install(|| run(&config)) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}/{} ({} rows)", config.output_dir, o.file, o.rows);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
