//! Batch front end: configuration parsing, experiment orchestration, CSV
//! emission, and the exit-code contract (0 all-pass, 1 tolerance failure,
//! 2 usage, 3 numerical breakdown).

use crate::bem::{
    alpha_normal_matrix, assemble_cauchy, assemble_lambda, assemble_single_layer, ps_interior,
    random_smooth_field, write_operator, BoundaryOperator, OperatorLabel,
};
use crate::clifford::Sign;
use crate::error::{OperatorError, SpectralError};
use crate::geometry::{mesh_from_file, sphere_mesh, Chart, SurfaceMesh};
use crate::kernels::KernelParams;
use crate::linalg::{CMat, C};
use crate::spectral::{
    ball_grid, bs_scan, eigentrace, krein_blocks, mkj_matrix, radial_eigenvalues, rate_fit,
    refine_eigenvalue, scan_minima, BallResolvent, RadialProfile, SpectralScan, VolumeField,
};
use crate::symbols::{parametrix_term, wavepacket_compare, SymbolKind};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    CheckIdentities,
    Assemble,
    PsCompare,
    EigMit,
    EigStep,
    RateResolvent,
    RateEig,
    Parametrix,
}

impl Command {
    fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "check-identities" => Command::CheckIdentities,
            "assemble" => Command::Assemble,
            "ps-compare" => Command::PsCompare,
            "eig-mit" => Command::EigMit,
            "eig-step" => Command::EigStep,
            "rate-resolvent" => Command::RateResolvent,
            "rate-eig" => Command::RateEig,
            "parametrix" => Command::Parametrix,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshSpec {
    Sphere { radius_milli: u64, order: usize },
    File(String),
}

/// Fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub mesh: MeshSpec,
    pub m: f64,
    pub coupling_list: Vec<f64>,
    pub z: Complex64,
    pub interval: (f64, f64),
    pub steps: usize,
    pub frequencies: Vec<usize>,
    pub output: String,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// Usage problems exit with code 2; numerical breakdowns with 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical breakdown: {m}"),
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

const KNOWN_KEYS: &[&str] = &[
    "command", "mesh", "radius", "order", "path", "m", "M", "z", "interval", "steps",
    "frequencies", "output", "seed", "threads",
];

/// Parses a JSON configuration object (strict: unknown keys are rejected,
/// ranges validated before any computation starts).
pub fn parse_config_value(v: &Value) -> Result<RunConfig, CliError> {
    let obj = v.as_object().ok_or_else(|| usage("config must be a JSON object"))?;
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("unknown key `{key}`")));
        }
    }
    let command_str = obj
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| usage("missing required field `command`"))?;
    let command = Command::parse(command_str)
        .ok_or_else(|| usage(format!("unknown command `{command_str}`")))?;
    let mesh = match obj.get("mesh").and_then(Value::as_str).unwrap_or("sphere") {
        "sphere" => {
            let radius = get_f64(obj, "radius")?.unwrap_or(1.0);
            let order = get_f64(obj, "order")?.unwrap_or(12.0);
            if !(radius > 0.0) {
                return Err(usage("`radius` must be positive"));
            }
            if order < 4.0 || order.fract() != 0.0 || (order as usize) % 2 != 0 {
                return Err(usage("`order` must be an even integer >= 4"));
            }
            MeshSpec::Sphere { radius_milli: (radius * 1e6).round() as u64, order: order as usize }
        }
        "file" => {
            let path = obj
                .get("path")
                .and_then(Value::as_str)
                .ok_or_else(|| usage("mesh kind `file` requires `path`"))?;
            MeshSpec::File(path.to_string())
        }
        other => return Err(usage(format!("unknown mesh kind `{other}`"))),
    };
    let m = get_f64(obj, "m")?.unwrap_or(1.0);
    if !(m > 0.0) {
        return Err(usage("`m` must be positive"));
    }
    let coupling_list = match obj.get("M") {
        None => Vec::new(),
        Some(Value::Number(n)) => vec![n.as_f64().unwrap()],
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| usage("`M` entries must be numbers")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(usage("`M` must be a number or array of numbers")),
    };
    if coupling_list.iter().any(|v| !(*v > 0.0)) {
        return Err(usage("`M` must be positive"));
    }
    let z = match obj.get("z") {
        None => Complex64::new(0.0, 0.0),
        Some(Value::Array(pair)) if pair.len() == 2 => {
            let re = pair[0].as_f64().ok_or_else(|| usage("`z` entries must be numbers"))?;
            let im = pair[1].as_f64().ok_or_else(|| usage("`z` entries must be numbers"))?;
            Complex64::new(re, im)
        }
        Some(_) => return Err(usage("`z` must be a two-element array [re, im]")),
    };
    let interval = match obj.get("interval") {
        None => (1.0, 2.5),
        Some(Value::Array(pair)) if pair.len() == 2 => {
            let lo = pair[0].as_f64().ok_or_else(|| usage("`interval` entries must be numbers"))?;
            let hi = pair[1].as_f64().ok_or_else(|| usage("`interval` entries must be numbers"))?;
            if !(hi > lo) {
                return Err(usage("`interval` must be increasing"));
            }
            (lo, hi)
        }
        Some(_) => return Err(usage("`interval` must be a two-element array [lo, hi]")),
    };
    let steps = get_f64(obj, "steps")?.unwrap_or(64.0);
    if steps < 8.0 || steps.fract() != 0.0 {
        return Err(usage("`steps` must be an integer >= 8"));
    }
    let frequencies = match obj.get("frequencies") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| {
                x.as_u64()
                    .filter(|l| *l >= 1)
                    .map(|l| l as usize)
                    .ok_or_else(|| usage("`frequencies` must be positive integers"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(usage("`frequencies` must be an array of integers")),
    };
    let output = obj
        .get("output")
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| usage("`output` must be a string")))
        .transpose()?
        .unwrap_or_else(|| "steklov-out".to_string());
    let seed = match obj.get("seed") {
        None => 7,
        Some(v) => v.as_u64().ok_or_else(|| usage("`seed` must be a nonnegative integer"))?,
    };
    let threads = match obj.get("threads") {
        None => std::env::var("STEKLOV_THREADS").ok().and_then(|s| s.parse().ok()),
        Some(v) => Some(v.as_u64().ok_or_else(|| usage("`threads` must be a positive integer"))? as usize),
    };
    Ok(RunConfig {
        command,
        mesh,
        m,
        coupling_list,
        z,
        interval,
        steps: steps as usize,
        frequencies,
        output,
        seed,
        threads,
    })
}

fn get_f64(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Option<f64>, CliError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| usage(format!("`{key}` must be a number"))),
    }
}

/// Parses command-line arguments: either `--config file.json`, or a command
/// name followed by `--key value` flags mirroring the JSON schema (`z`,
/// `interval`, and `M` lists are comma-separated).
pub fn parse_config_args(args: &[String]) -> Result<RunConfig, CliError> {
    if args.is_empty() {
        return Err(usage(
            "expected a command (check-identities | assemble | ps-compare | eig-mit | eig-step | rate-resolvent | rate-eig | parametrix) or --config <file>",
        ));
    }
    if args[0] == "--config" {
        let path = args.get(1).ok_or_else(|| usage("--config requires a path"))?;
        if args.len() > 2 {
            return Err(usage("--config takes no further flags"));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("config is not valid JSON: {e}")))?;
        return parse_config_value(&v);
    }
    let mut map = serde_json::Map::new();
    map.insert("command".into(), Value::String(args[0].clone()));
    let mut i = 1;
    while i < args.len() {
        let flag = args[i]
            .strip_prefix("--")
            .ok_or_else(|| usage(format!("expected a --flag, got `{}`", args[i])))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| usage(format!("flag --{flag} requires a value")))?;
        let parsed: Value = match flag {
            "mesh" | "path" | "output" => Value::String(value.clone()),
            "z" | "interval" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 2 {
                    return Err(usage(format!("--{flag} expects `a,b`")));
                }
                let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
                let nums = nums.map_err(|_| usage(format!("--{flag} expects two numbers")))?;
                Value::Array(nums.into_iter().map(|x| serde_json::json!(x)).collect())
            }
            "M" | "frequencies" => {
                let nums: Result<Vec<f64>, _> = value.split(',').map(|p| p.trim().parse::<f64>()).collect();
                let nums = nums.map_err(|_| usage(format!("--{flag} expects a comma-separated list")))?;
                if nums.len() == 1 && flag == "M" {
                    serde_json::json!(nums[0])
                } else {
                    Value::Array(nums.into_iter().map(|x| serde_json::json!(x)).collect())
                }
            }
            "R" | "radius" => serde_json::json!(value
                .parse::<f64>()
                .map_err(|_| usage("--radius expects a number"))?),
            _ => match value.parse::<f64>() {
                Ok(x) => serde_json::json!(x),
                Err(_) => Value::String(value.clone()),
            },
        };
        let key = if flag == "R" { "radius" } else { flag };
        map.insert(key.to_string(), parsed);
        i += 2;
    }
    parse_config_value(&Value::Object(map))
}

/// One named check with its measured value and tolerance.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of a run: the per-check lines and emitted files.
#[derive(Debug, Default)]
pub struct RunReport {
    pub checks: Vec<CheckLine>,
    pub files: Vec<String>,
}

impl RunReport {
    fn push(&mut self, name: impl Into<String>, measured: f64, tolerance: f64) {
        let name = name.into();
        let pass = measured.is_finite() && measured <= tolerance;
        self.checks.push(CheckLine { name, measured, tolerance, pass });
    }

    /// Pass iff the measured value lies inside `[lo, hi]`.
    fn push_band(&mut self, name: impl Into<String>, measured: f64, lo: f64, hi: f64) {
        let name = name.into();
        let pass = measured.is_finite() && measured >= lo && measured <= hi;
        // encode the band check as distance-to-band against zero tolerance slack
        let distance = if pass { 0.0 } else { (measured - hi).max(lo - measured) };
        self.checks.push(CheckLine {
            name: format!("{name} (value {measured:.6}, band [{lo}, {hi}])"),
            measured: distance,
            tolerance: 0.0,
            pass,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn build_mesh(cfg: &RunConfig) -> Result<Arc<SurfaceMesh>, CliError> {
    match &cfg.mesh {
        MeshSpec::Sphere { radius_milli, order } => {
            let radius = *radius_milli as f64 / 1e6;
            Ok(Arc::new(sphere_mesh(radius, *order).map_err(|e| usage(e.to_string()))?))
        }
        MeshSpec::File(path) => Ok(Arc::new(
            mesh_from_file(Path::new(path)).map_err(|e| usage(format!("mesh load: {e}")))?,
        )),
    }
}

fn mesh_radius(cfg: &RunConfig) -> f64 {
    match &cfg.mesh {
        MeshSpec::Sphere { radius_milli, .. } => *radius_milli as f64 / 1e6,
        MeshSpec::File(_) => 1.0,
    }
}

/// Formats a CSV with `.` decimals, `,` separators, LF endings, and
/// round-trip-exact doubles.
fn write_csv(path: &str, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                text.push(',');
            }
            let _ = write!(text, "{v:.17e}");
            first = false;
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {path}: {e}")))?;
    Ok(())
}

/// Executes a validated configuration. Returns the report; the binary maps
/// it to the exit-code contract.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    if let Some(n) = cfg.threads {
        // ignore the error if a global pool already exists (tests, repeat runs)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cfg.command {
        Command::CheckIdentities => run_check_identities(cfg),
        Command::Assemble => run_assemble(cfg),
        Command::PsCompare => run_ps_compare(cfg),
        Command::EigMit => run_eig_mit(cfg),
        Command::EigStep => run_eig_step(cfg),
        Command::RateResolvent => run_rate_resolvent(cfg),
        Command::RateEig => run_rate_eig(cfg),
        Command::Parametrix => run_parametrix(cfg),
    }
}

fn run_check_identities(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let p = KernelParams::new(cfg.m, cfg.z);
    let mut report = RunReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // exact algebra spot checks (the full randomized suite lives in the tests)
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        use crate::clifford::*;
        use rand::Rng;
        let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let y = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let lhs = (alpha_dot(x) * alpha_dot(y)).scaled(Complex64::new(0.0, 1.0));
        let rhs = SpinorMatrix::identity().scaled(Complex64::new(0.0, x.dot(y))) + spin_dot(x.cross(y));
        worst = worst.max((lhs - rhs).max_abs());
    }
    report.push("spin-algebra identity", worst, 1e-13);

    let c = assemble_cauchy(&mesh, p)?;
    let an = alpha_normal_matrix(&mesh);
    let anc = an.matmul(&c.matrix);
    let sq = anc.matmul(&anc);
    let defect = BoundaryOperator {
        matrix: sq.add(&CMat::identity(sq.rows).scaled(C::new(0.25, 0.0))),
        mesh: mesh.clone(),
        label: OperatorLabel::Composite("defect".into()),
        params: p,
    };
    let sq_defect = defect.banded_l2_norm()?;
    report.push("cauchy square identity", sq_defect, 5e-3);
    if p.k.im > 1e-14 && cfg.z.im == 0.0 {
        report.push("cauchy hermiticity", c.band_hermiticity_defect()?, 1e-8);
    }

    let lambda = assemble_lambda(&mesh, p)?;
    let s_layer = assemble_single_layer(&mesh, p)?;
    let mzb = {
        let mut b = crate::clifford::dirac_beta().scaled(cfg.z);
        for r in 0..4 {
            b[(r, r)] += C::new(cfg.m, 0.0);
        }
        b
    };
    let mzb_mat = crate::bem::blockdiag(&mesh, &mzb);
    let mut lam_worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_smooth_field(&mesh, 2, &mut rng);
        let lhs = lambda.apply(&lambda.apply(&f));
        let c2 = c.apply(&c.apply(&f));
        let sz = crate::bem::TraceField::from_flat(&mesh, &mzb_mat.matvec(&s_layer.apply(&f).flat()));
        let rhs = f.scaled(C::new(0.25, 0.0)).add(&c2).add(&sz);
        lam_worst = lam_worst.max(lhs.sub(&rhs).l2_norm() / f.l2_norm());
    }
    report.push("lambda squared identity", lam_worst, 1e-2);

    let a_ps = ps_interior(&mesh, p)?;
    let pm = crate::bem::projector_matrix(&mesh, Sign::Minus);
    let pp = crate::bem::projector_matrix(&mesh, Sign::Plus);
    report.push("ps range condition", pm.matmul(&a_ps.matrix).max_abs(), 1e-10);
    report.push("ps kernel condition", a_ps.matrix.matmul(&pp).max_abs(), 1e-10);

    let rows: Vec<Vec<f64>> = report
        .checks
        .iter()
        .map(|c| vec![c.measured, c.tolerance, if c.pass { 1.0 } else { 0.0 }])
        .collect();
    let path = format!("{}-identities.csv", cfg.output);
    write_named_csv(&path, "name,measured,tolerance,pass", &report.checks, &rows)?;
    let mut report = report;
    report.files.push(path);
    Ok(report)
}

fn write_named_csv(
    path: &str,
    header: &str,
    checks: &[CheckLine],
    rows: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for (c, row) in checks.iter().zip(rows) {
        let mut line = c.name.replace(',', ";");
        for v in row {
            let _ = write!(line, ",{v:.17e}");
        }
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {path}: {e}")))?;
    Ok(())
}

fn run_assemble(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let p = KernelParams::new(cfg.m, cfg.z);
    let mut report = RunReport::default();
    for (label, op) in [
        ("cauchy", assemble_cauchy(&mesh, p)?),
        ("lambda", assemble_lambda(&mesh, p)?),
        ("single-layer", assemble_single_layer(&mesh, p)?),
    ] {
        let path = format!("{}-{label}.op", cfg.output);
        write_operator(&op, &path).map_err(|e| CliError::Usage(format!("cannot write {path}: {e}")))?;
        report.files.push(path);
        let (smin, smax) = op.matrix.sigma_extremes();
        report.push(format!("{label} finite entries"), if smax.is_finite() { 0.0 } else { 1.0 }, 0.5);
        if label == "lambda" {
            report.push("lambda invertibility (sigma_min)", 0.05 / smin.max(1e-300), 1.0 / 0.05);
        }
    }
    Ok(report)
}

fn run_ps_compare(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let order = match cfg.mesh {
        MeshSpec::Sphere { order, .. } => order,
        _ => return Err(usage("ps-compare requires a sphere mesh")),
    };
    let freqs = if cfg.frequencies.is_empty() {
        vec![order / 4, order / 2]
    } else {
        cfg.frequencies.clone()
    };
    for l in &freqs {
        if order < 2 * l {
            return Err(usage(format!("frequency {l} needs mesh order >= {}", 2 * l)));
        }
    }
    let p = KernelParams::new(cfg.m, cfg.z);
    let op = ps_interior(&mesh, p)?;
    let mut report = RunReport::default();
    let mut rows = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for &l in &freqs {
        let e_classical = wavepacket_compare(&op, l, SymbolKind::Classical)?;
        let e_semi = wavepacket_compare(&op, l, SymbolKind::Semiclassical)?;
        rows.push(vec![l as f64, e_classical, e_semi]);
        report.push(format!("packet l={l} classical error"), e_classical, 0.75);
        if let Some((l0, e0)) = prev {
            let slope = (e_classical / e0).ln() / (l as f64 / l0 as f64).ln();
            report.push_band(format!("packet order {l0}->{l}"), slope, -3.0, -0.5);
        }
        prev = Some((l, e_classical));
    }
    let path = format!("{}-ps-compare.csv", cfg.output);
    write_csv(&path, "l,classical_error,semiclassical_error", &rows)?;
    report.files.push(path);
    Ok(report)
}

/// Confining-wall eigenvalues detected from the boundary operator (the
/// factorization of `Lambda(a)` loses invertibility exactly at the
/// spectrum) cross-checked against the radial oracle.
fn run_eig_mit(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let radius = mesh_radius(cfg);
    let (lo, hi) = cfg.interval;
    let steps = cfg.steps;
    let mut grid = Vec::with_capacity(steps);
    let mut sig = Vec::with_capacity(steps);
    for i in 0..steps {
        let a = lo + (hi - lo) * (i as f64 + 0.5) / steps as f64;
        let lam = assemble_lambda(&mesh, KernelParams::real_z(cfg.m, a))?;
        grid.push(a);
        sig.push(lam.weighted_matrix().sigma_min());
    }
    // oracle eigenvalues over the window
    let mut oracle = Vec::new();
    for kappa in [-1i32, 1, -2, 2, -3, 3] {
        oracle.extend(radial_eigenvalues(radius, cfg.m, None, kappa, (lo, hi), 8).map_err(|e| usage(e.to_string()))?);
    }
    oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
    oracle.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    // detected minima refined by parabolic interpolation on the grid
    let mut detected = Vec::new();
    for i in 1..steps - 1 {
        if sig[i] < sig[i - 1] && sig[i] < sig[i + 1] && sig[i] < 0.25 * sig.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300) + 0.05 {
            let denom = sig[i - 1] - 2.0 * sig[i] + sig[i + 1];
            let shift = if denom.abs() > 1e-300 { 0.5 * (sig[i - 1] - sig[i + 1]) / denom } else { 0.0 };
            detected.push(grid[i] + shift.clamp(-1.0, 1.0) * (grid[1] - grid[0]));
        }
    }
    let mut report = RunReport::default();
    let mut rows = Vec::new();
    for (idx, a) in detected.iter().enumerate() {
        let nearest = oracle
            .iter()
            .cloned()
            .min_by(|x, y| (x - a).abs().partial_cmp(&(y - a).abs()).unwrap())
            .unwrap_or(f64::NAN);
        let delta = (a - nearest).abs();
        rows.push(vec![*a, nearest, delta]);
        report.push(format!("detected root {idx} vs oracle"), delta, 5e-3);
    }
    report.push_band(
        "detected vs oracle count",
        detected.len() as f64 - oracle.len() as f64,
        0.0,
        0.0,
    );
    let path = format!("{}-eig-mit.csv", cfg.output);
    write_csv(&path, "a,oracle,delta", &rows)?;
    report.files.push(path);
    Ok(report)
}

fn run_eig_step(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let radius = mesh_radius(cfg);
    let coupling = *cfg
        .coupling_list
        .first()
        .ok_or_else(|| usage("eig-step requires `M`"))?;
    let scan = bs_scan(&mesh, cfg.m, coupling, cfg.interval, cfg.steps)?;
    let mut rows: Vec<Vec<f64>> = scan
        .grid
        .iter()
        .zip(&scan.sigma_min)
        .map(|(a, s)| vec![*a, *s])
        .collect();
    let path = format!("{}-scan.csv", cfg.output);
    write_csv(&path, "a,sigma_min", &rows)?;
    let mut report = RunReport::default();
    report.files.push(path);
    // oracle spectrum in the window
    let mut oracle = Vec::new();
    for kappa in [-1i32, 1, -2, 2, -3, 3] {
        oracle.extend(
            radial_eigenvalues(radius, cfg.m, Some(cfg.m + coupling), kappa, cfg.interval, 8)
                .map_err(|e| usage(e.to_string()))?,
        );
    }
    oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
    oracle.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let minima = scan_minima(&scan, 0.2);
    let mut refined = Vec::new();
    for bracket in minima {
        match refine_eigenvalue(&mesh, &scan, bracket) {
            Ok(res) => refined.push(res),
            Err(SpectralError::Bracket(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    rows = Vec::new();
    for (idx, r) in refined.iter().enumerate() {
        let nearest = oracle
            .iter()
            .cloned()
            .min_by(|x, y| (x - r.value).abs().partial_cmp(&(y - r.value).abs()).unwrap())
            .unwrap_or(f64::NAN);
        let delta = (r.value - nearest).abs();
        rows.push(vec![r.value, r.residual, nearest, delta, r.multiplicity_hint as f64]);
        report.push(format!("refined root {idx} vs oracle"), delta, 5e-3);
    }
    report.push_band(
        "refined vs oracle count",
        refined.len() as f64 - oracle.len() as f64,
        0.0,
        0.0,
    );
    let path = format!("{}-eig-step.csv", cfg.output);
    write_csv(&path, "a,sigma_min,oracle,delta,multiplicity", &rows)?;
    report.files.push(path);
    Ok(report)
}

/// Fixed smooth interior data; the coupled resolvent differs from the
/// confined one by `O(1/M)` in the interior.
fn run_rate_resolvent(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let radius = mesh_radius(cfg);
    if cfg.coupling_list.len() < 3 {
        return Err(usage("rate-resolvent requires an `M` list with at least 3 entries"));
    }
    let grid = Arc::new(ball_grid(radius, 12, 10));
    let p = KernelParams::new(cfg.m, cfg.z);
    let ball = BallResolvent::new(&mesh, &grid, p)?;
    let s2 = (radius / 2.8).powi(2);
    let f = VolumeField::from_fn(&grid, |x| {
        let env = (-x.dot(x) / (2.0 * s2)).exp();
        [
            C::new(env, 0.0),
            C::new(0.5 * env * x.x / radius, 0.0),
            C::new(0.0, -0.3 * env),
            C::new(0.2 * env * x.z / radius, 0.1 * env),
        ]
    });
    let (mit_vol, mit_trace) = ball.confined_apply(&f)?;
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for &coupling in &cfg.coupling_list {
        let blocks = krein_blocks(&mesh, cfg.m, coupling, cfg.z)?;
        let psi_inv = blocks.psi_inverse()?;
        let driven = crate::bem::TraceField::from_flat(&mesh, &psi_inv.matvec(&mit_trace.flat()));
        let correction = ball.lift(&driven.project(Sign::Minus))?;
        let residual = correction.l2_norm() / mit_vol.l2_norm();
        pairs.push((coupling, residual));
        rows.push(vec![coupling, residual]);
    }
    let fit = rate_fit(&pairs).map_err(|e| usage(e.to_string()))?;
    let mut report = RunReport::default();
    report.push_band("resolvent rate slope", fit.slope, -1.15, -0.85);
    let path = format!("{}-rate.csv", cfg.output);
    write_csv(&path, "M,residual", &rows)?;
    report.files.push(path);
    Ok(report)
}

fn run_rate_eig(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mesh = build_mesh(cfg)?;
    let radius = mesh_radius(cfg);
    if cfg.coupling_list.len() < 3 {
        return Err(usage("rate-eig requires an `M` list with at least 3 entries"));
    }
    let kappa = -1i32;
    let window = (cfg.m * 1.0 + 1e-6, cfg.interval.1.max(cfg.m * 4.0));
    let mit =
        radial_eigenvalues(radius, cfg.m, None, kappa, window, 1).map_err(|e| usage(e.to_string()))?;
    let mit = *mit.first().ok_or_else(|| CliError::Numerical("no confined state in window".into()))?;
    let profile = RadialProfile::interior(kappa, mit, cfg.m, radius);
    let traces: Vec<_> = [-1i64, 1].iter().map(|mj2| eigentrace(&profile, *mj2, &mesh)).collect();
    let (_, mu) = mkj_matrix(&traces)?;
    let mut rows = Vec::new();
    let mut scaled_shifts = Vec::new();
    for &coupling in &cfg.coupling_list {
        let lam = radial_eigenvalues(radius, cfg.m, Some(cfg.m + coupling), kappa, window, 1)
            .map_err(|e| usage(e.to_string()))?;
        let lam = *lam
            .first()
            .ok_or_else(|| CliError::Numerical("no coupled state in window".into()))?;
        let shift = coupling * (lam - mit);
        scaled_shifts.push(shift);
        rows.push(vec![coupling, lam, shift]);
    }
    let mut report = RunReport::default();
    let first = scaled_shifts[0];
    let last = *scaled_shifts.last().unwrap();
    report.push(
        "scaled shift stabilization",
        (last - first).abs() / last.abs().max(1e-300),
        0.1,
    );
    let mu_mean = mu.iter().sum::<f64>() / mu.len() as f64;
    report.push(
        "scaled shift vs coupling matrix",
        (last - mu_mean).abs() / mu_mean.abs().max(1e-300),
        0.1,
    );
    let path = format!("{}-rate-eig.csv", cfg.output);
    write_csv(&path, "M,lambda,residual", &rows)?;
    report.files.push(path);
    Ok(report)
}

fn run_parametrix(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let h = if cfg.m > 1.0 { 1.0 / cfg.m } else { 0.25 };
    let chart = Chart::new(|x, y| 0.2 * x * x - 0.1 * x * y + 0.15 * y * y)
        .with_gradient(|x, y| [0.4 * x - 0.1 * y, -0.1 * x + 0.3 * y]);
    let mut report = RunReport::default();
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::Rng;
    for j in 0..=2usize {
        let term = parametrix_term(j, &chart, h, cfg.z)?;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let y = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)];
            let xi = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let tau = rng.gen_range(0.0..0.4);
            worst = worst.max(term.ode_residual(y, xi, tau));
            worst = worst.max(term.boundary_defect(y, xi));
        }
        let tol = match j {
            0 => 1e-12,
            1 => 1e-8,
            _ => 1e-6,
        };
        report.push(format!("parametrix term {j} residual"), worst, tol);
        rows.push(vec![j as f64, worst, tol]);
    }
    let path = format!("{}-parametrix.csv", cfg.output);
    write_csv(&path, "j,residual,tolerance", &rows)?;
    report.files.push(path);
    Ok(report)
}
