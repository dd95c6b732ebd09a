//! Command implementations for the `hvsinglet` binary.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hvsinglet_core::models::{
    recipe_bound, Family, ModelSpec, QuadratureConfig, ScalarMeasureKind, SupSearch,
};
use hvsinglet_core::simulator::{
    chsh, estimate_all, find_hv_chsh_witness, random_settings, write_csv, ChshSettings,
    EstimatorMode, ExperimentConfig,
};
use hvsinglet_core::validator::{overall_status, run_full_suite, SuiteConfig};
use hvsinglet_core::{
    dot, HiddenVariableModel, ModelError, RandomStream, SpecError, Status, UnitVector,
};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_IO: u8 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: SpecError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hvsinglet",
    version,
    about = "Hidden-variable models of the spin singlet: validation and simulation"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Random seed.
    #[arg(long, global = true, env = "HV_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every constraint check on a model and write a JSON report.
    Validate(ValidateArgs),
    /// Estimate correlators at a list of settings and write CSV.
    Simulate(SimulateArgs),
    /// CHSH value at the optimal preset settings, plus a fixed-λ search.
    Chsh(ChshArgs),
    /// Sweep a·b over [-1, 1] and write λ-averaged C and table extremes.
    Scan(ScanArgs),
    /// Build a recipe model from a registry function and write its spec.
    BuildRecipe(BuildRecipeArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model spec (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Polar nodes of the sphere quadrature.
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    /// λ samples per scanned setting.
    #[arg(long, default_value_t = 1000)]
    pub lambda_n: usize,
    /// Settings pairs in the table scans.
    #[arg(long, default_value_t = 1000)]
    pub settings_n: usize,
    /// Monte Carlo samples when no quadrature is available.
    #[arg(long, value_parser = parse_count, default_value = "1000000")]
    pub mc_samples: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Settings file (one pair per line: ax ay az bx by bz) or random:N.
    #[arg(long)]
    pub settings: String,
    /// Shots per settings pair; accepts forms like 1e6.
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    pub shots: u64,
    #[arg(long, default_value = "analytic")]
    pub mode: EstimatorMode,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    pub shots: u64,
    #[arg(long, default_value = "analytic")]
    pub mode: EstimatorMode,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    /// Random coplanar quadruples tried in the fixed-λ search.
    #[arg(long, default_value_t = 200)]
    pub witness_trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Points in the a·b sweep (at least 2).
    #[arg(long, default_value_t = 201)]
    pub n_points: usize,
    /// λ samples per point when the measure has no quadrature.
    #[arg(long, default_value_t = 10_000)]
    pub lambda_n: usize,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildRecipeArgs {
    /// Registry function name.
    pub f_name: String,
    /// Frobenius exponent s (at least 1).
    pub s: f64,
    /// Scalar measure of g.
    #[arg(long, default_value = "two_point", value_parser = parse_measure)]
    pub measure: ScalarMeasureKind,
    /// Support half-width of g.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Integer counts, also written as `1e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if !(x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64) {
        return Err(format!("'{s}' is not a non-negative integer"));
    }
    Ok(x as u64)
}

fn parse_measure(s: &str) -> Result<ScalarMeasureKind, String> {
    match s {
        "two_point" | "two-point" => Ok(ScalarMeasureKind::TwoPoint),
        "uniform" => Ok(ScalarMeasureKind::Uniform),
        _ => Err(format!(
            "unknown measure '{s}' (expected two_point or uniform)"
        )),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Validate(a) => cmd_validate(a, cli.seed),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Chsh(a) => cmd_chsh(a, cli.seed),
        Command::Scan(a) => cmd_scan(a, cli.seed),
        Command::BuildRecipe(a) => cmd_build_recipe(a, cli.seed),
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.to_owned(),
            source,
        }),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn quadrature(grid_n: usize) -> Result<QuadratureConfig, CliError> {
    if grid_n == 0 {
        return Err(CliError::Usage("--grid-n must be at least 1".into()));
    }
    Ok(QuadratureConfig {
        sphere_polar: grid_n,
        ..QuadratureConfig::default()
    })
}

pub fn load_model(path: &Path, grid_n: usize) -> Result<HiddenVariableModel, CliError> {
    let spec = ModelSpec::from_json(&read(path)?).map_err(|source| CliError::Spec {
        path: path.to_owned(),
        source,
    })?;
    Ok(spec.build(&quadrature(grid_n)?)?)
}

pub fn cmd_validate(args: &ValidateArgs, seed: u64) -> Result<u8, CliError> {
    let model = load_model(&args.model, args.grid_n)?;
    let config = SuiteConfig {
        n_lambda: args.lambda_n.max(1),
        n_settings: args.settings_n.max(1),
        mc_samples: args.mc_samples.max(1) as usize,
        ..SuiteConfig::default()
    };
    let reports = run_full_suite(&model, &config, &RandomStream::new(seed, 0));
    let mut json = serde_json::to_vec_pretty(&reports).expect("reports serialize");
    json.push(b'\n');
    emit(args.out.as_deref(), &json)?;
    for r in &reports {
        eprintln!(
            "{:<20} {:?}",
            serde_json::to_value(r.constraint_id)
                .unwrap()
                .as_str()
                .unwrap_or(""),
            r.status
        );
    }
    Ok(match overall_status(&reports) {
        Status::Pass | Status::NotApplicable => EXIT_PASS,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
        Status::Fail => EXIT_FAIL,
    })
}

/// `random:N`, or a file with one `ax ay az bx by bz` pair per line
/// (commas or whitespace; `#` starts a comment). Vectors are normalized.
pub fn parse_settings(source: &str, seed: u64) -> Result<Vec<(UnitVector, UnitVector)>, CliError> {
    if let Some(n) = source.strip_prefix("random:") {
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Usage(format!("bad settings count in '{source}'")))?;
        if n == 0 {
            return Err(CliError::Usage("random:N needs N >= 1".into()));
        }
        return Ok(random_settings(n, seed));
    }
    let path = Path::new(source);
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect();
        let bad = || CliError::Usage(format!("{}:{}: expected six numbers", source, i + 1));
        let v = nums.map_err(|_| bad())?;
        if v.len() != 6 {
            return Err(bad());
        }
        let unit = |x: f64, y: f64, z: f64| {
            UnitVector::normalize(x, y, z)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", source, i + 1)))
        };
        out.push((unit(v[0], v[1], v[2])?, unit(v[3], v[4], v[5])?));
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{source}: no settings")));
    }
    Ok(out)
}

fn shots(n: u64) -> Result<usize, CliError> {
    if n < 1 {
        return Err(CliError::Usage("--shots must be at least 1".into()));
    }
    Ok(n as usize)
}

pub fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<u8, CliError> {
    let shots = shots(args.shots)?;
    let model = load_model(&args.model, args.grid_n)?;
    let settings = parse_settings(&args.settings, seed)?;
    let config = ExperimentConfig::new(model, settings, shots, seed, args.mode)?;
    let rows = estimate_all(&config);
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, None).expect("write to memory");
    emit(args.out.as_deref(), &buf)?;
    Ok(EXIT_PASS)
}

pub fn cmd_chsh(args: &ChshArgs, seed: u64) -> Result<u8, CliError> {
    let shots = shots(args.shots)?;
    let model = load_model(&args.model, args.grid_n)?;
    let config = ExperimentConfig::new(
        model,
        ChshSettings::optimal().pairs(),
        shots,
        seed,
        args.mode,
    )?;
    let result = chsh(&config)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &result.correlators, Some(&result)).expect("write to memory");
    emit(args.out.as_deref(), &buf)?;
    eprintln!(
        "S = {:.6} ± {:.2e} (quantum {:.6})",
        result.s, result.stderr, result.s_qm
    );
    let mut rng = RandomStream::new(seed, 1);
    if let Some(w) = find_hv_chsh_witness(&config.model, args.witness_trials, &mut rng) {
        eprintln!(
            "largest fixed-λ S found: {:.6} at λ = {:?}",
            w.s,
            w.lambda.scalars.as_slice()
        );
    }
    Ok(EXIT_PASS)
}

pub fn cmd_scan(args: &ScanArgs, seed: u64) -> Result<u8, CliError> {
    if args.n_points < 2 {
        return Err(CliError::Usage("--n-points must be at least 2".into()));
    }
    let model = load_model(&args.model, args.grid_n)?;
    let mut rng = RandomStream::new(seed, 0);
    let a = rng.unit_vector();
    let e = a.any_orthogonal();
    let (points, weights): (Vec<_>, Vec<f64>) = match model.lambda_space().quadrature() {
        Some(q) => (q.points.clone(), q.weights.clone()),
        None => {
            let n = args.lambda_n.max(1);
            (
                (0..n)
                    .map(|_| model.lambda_space().sample(&mut rng))
                    .collect(),
                vec![1.0 / n as f64; n],
            )
        }
    };
    let mut buf = String::from("a_dot_b,mean_C,min_entry,max_entry\n");
    for i in 0..args.n_points {
        let x = -1.0 + 2.0 * i as f64 / (args.n_points - 1) as f64;
        let b = a.at_inner_product(&e, x);
        let bound = model.bind(a, b);
        let (mut mean, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for (l, w) in points.iter().zip(&weights) {
            let Some(t) = bound.table(l) else { continue };
            mean += w * bound.excess(l).unwrap_or(0.0);
            lo = lo.min(t.min_cell().2);
            hi = hi.max(t.max_cell().2);
        }
        buf.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            dot(&a, &b),
            mean,
            lo,
            hi
        ));
    }
    emit(args.out.as_deref(), buf.as_bytes())?;
    Ok(EXIT_PASS)
}

pub fn cmd_build_recipe(args: &BuildRecipeArgs, seed: u64) -> Result<u8, CliError> {
    recipe_bound(args.s)?;
    let spec = ModelSpec {
        scalar_measure: args.measure,
        gamma: Some(args.gamma),
        s: Some(args.s),
        seed: Some(seed),
        parameters: hvsinglet_core::models::Parameters {
            f: Some(args.f_name.clone()),
            ..Default::default()
        },
        ..ModelSpec::new(Family::Recipe)
    };
    let (resolved, summary) = spec.resolve_recipe(&SupSearch::default())?;
    let mut text = resolved.to_json();
    text.push('\n');
    emit(args.out.as_deref(), text.as_bytes())?;
    eprintln!(
        "sup g = {:.6}, inf g = {:.6}, bound = {:.6}, scale = {:.6}",
        summary.sup_g, summary.inf_g, summary.bound, summary.scale
    );
    Ok(EXIT_PASS)
}
