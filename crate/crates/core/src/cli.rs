//! Command-line front end. `run` parses arguments, merges an optional JSON
//! config file under the flags, executes one subcommand inside a worker pool
//! of the requested size and writes CSV artifacts plus a run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{sample_named, save_field, Domain, Grid, MagneticPotential};
use crate::lab::{run_standard_suites, write_rows};
use crate::limits::{bbm_sweep, pointwise_bbm, DEFAULT_LADDER};
use crate::modulars::{evaluate, write_trace, ModularKind, ModularSpec, QuadratureConfig, ShellPolicy};
use crate::orlicz::{limit_function, log_grid, OrliczFunction, SphericalLimit};
use crate::selftest::{run_selftest, write_checks};
use crate::solver::{convergence_study, DirichletProblem, Order, SolverOptions};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for input and runtime errors.
pub const EXIT_INPUT: i32 = 1;
/// Exit status when a lab or selftest assertion fails.
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "morlicz", version, about = "Magnetic fractional Orlicz-Sobolev modulars and their s → 1 limits")]
struct Cli {
    /// JSON file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV artifacts and the run manifest.
    #[arg(long, global = true, default_value = "morlicz-out")]
    out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the spherical limit G̃.
    Gtilde(Opts),
    /// Evaluate a modular of a sampled field.
    Modular(Opts),
    /// Sweep (1 − s)·I_{s,G}^A(u) over an s ladder.
    Bbm(Opts),
    /// Pointwise limit at one node.
    Pointwise(Opts),
    /// Solve one Dirichlet problem.
    Solve(Opts),
    /// Fractional solutions over a ladder against the local solution.
    Study(Opts),
    /// Inequality suites.
    Lab(Opts),
    /// The full invariant battery.
    Selftest(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Gtilde(_) => "gtilde",
            Self::Modular(_) => "modular",
            Self::Bbm(_) => "bbm",
            Self::Pointwise(_) => "pointwise",
            Self::Solve(_) => "solve",
            Self::Study(_) => "study",
            Self::Lab(_) => "lab",
            Self::Selftest(_) => "selftest",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Self::Gtilde(o)
            | Self::Modular(o)
            | Self::Bbm(o)
            | Self::Pointwise(o)
            | Self::Solve(o)
            | Self::Study(o)
            | Self::Lab(o)
            | Self::Selftest(o) => o,
        }
    }
}

/// Flags shared by every subcommand; each one reads the subset it needs.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Opts {
    /// Orlicz family: power:p, powerp:p, powerp_half:p or blend:p:q.
    #[arg(long)]
    family: Option<String>,
    /// Space dimension, 1 or 2.
    #[arg(long)]
    dim: Option<usize>,
    /// Grid half width L.
    #[arg(long = "half-width")]
    half_width: Option<f64>,
    /// Grid points per axis N.
    #[arg(long)]
    points: Option<usize>,
    /// Test field, e.g. gaussian:1, bump:1, parabola, phase:1:bump:1.
    #[arg(long)]
    field: Option<String>,
    /// Magnetic potential: zero, const:a[,b] or shear:m[,..].
    #[arg(long)]
    potential: Option<String>,
    /// Modular kind: ig, ig_tilde, iga, iga_tilde, isg, isg_tilde, isga, isga_tilde.
    #[arg(long)]
    kind: Option<String>,
    /// Fractional order for modular or solve.
    #[arg(long)]
    s: Option<f64>,
    /// Comma separated s ladder.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    /// Near-diagonal shell policy: taylor or omit.
    #[arg(long = "shell-policy")]
    shell_policy: Option<String>,
    /// Comma separated arguments of G̃.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    a: Option<Vec<f64>>,
    /// Evaluation point of pointwise, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x: Option<Vec<f64>>,
    /// Source term of solve and study.
    #[arg(long = "f")]
    source: Option<String>,
    /// Domain, a:b or a:b,c:d.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    /// Solve the local problem instead of the fractional one.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    local: Option<bool>,
    /// Reduced selftest grids.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    fast: Option<bool>,
    /// Seed of the randomized checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Opts {
    /// Fields of `self` win over those of `base`.
    fn over(self, base: Opts) -> Opts {
        Opts {
            family: self.family.or(base.family),
            dim: self.dim.or(base.dim),
            half_width: self.half_width.or(base.half_width),
            points: self.points.or(base.points),
            field: self.field.or(base.field),
            potential: self.potential.or(base.potential),
            kind: self.kind.or(base.kind),
            s: self.s.or(base.s),
            ladder: self.ladder.or(base.ladder),
            shell_policy: self.shell_policy.or(base.shell_policy),
            a: self.a.or(base.a),
            x: self.x.or(base.x),
            source: self.source.or(base.source),
            omega: self.omega.or(base.omega),
            local: self.local.or(base.local),
            fast: self.fast.or(base.fast),
            seed: self.seed.or(base.seed),
        }
    }
}

/// Fully resolved inputs; their digest identifies a run.
#[derive(Debug, Clone, Serialize)]
struct Resolved {
    command: String,
    family: String,
    dim: usize,
    half_width: f64,
    points: usize,
    field: String,
    potential: String,
    kind: String,
    s: Option<f64>,
    ladder: Vec<f64>,
    shell_policy: String,
    a: Vec<f64>,
    x: Vec<f64>,
    source: String,
    omega: String,
    local: bool,
    fast: bool,
    seed: u64,
}

/// Default seed of the randomized checks.
pub const DEFAULT_SEED: u64 = 0x005e_ed0f_0b1c_2024;

fn resolve(command: &str, o: Opts) -> Resolved {
    let dim = o.dim.unwrap_or(1);
    let default_field = match command {
        "solve" | "study" => "const:1",
        _ => "gaussian:1",
    };
    let default_omega = if dim == 1 { "-1:1" } else { "-1:1,-1:1" };
    Resolved {
        command: command.to_string(),
        family: o.family.unwrap_or_else(|| "power:2".into()),
        dim,
        half_width: o.half_width.unwrap_or(6.0),
        points: o.points.unwrap_or(if matches!(command, "solve" | "study") { 256 } else { 512 }),
        field: o.field.unwrap_or_else(|| default_field.into()),
        potential: o.potential.unwrap_or_else(|| "zero".into()),
        kind: o.kind.unwrap_or_else(|| "isga".into()),
        s: o.s,
        ladder: o.ladder.unwrap_or_else(|| DEFAULT_LADDER.to_vec()),
        shell_policy: o.shell_policy.unwrap_or_else(|| "taylor".into()),
        a: o.a.unwrap_or_else(|| vec![1.0]),
        x: o.x.unwrap_or_else(|| vec![0.0, 0.0]),
        source: o.source.unwrap_or_else(|| "const:1".into()),
        omega: o.omega.unwrap_or_else(|| default_omega.into()),
        local: o.local.unwrap_or(false),
        fast: o.fast.unwrap_or(false),
        seed: o.seed.unwrap_or(DEFAULT_SEED),
    }
}

impl Resolved {
    fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    fn orlicz(&self) -> Result<OrliczFunction> {
        OrliczFunction::parse(&self.family)
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.half_width, self.points)
    }

    fn potential_on(&self, grid: &Grid) -> Result<MagneticPotential> {
        MagneticPotential::parse(&self.potential, self.dim, grid.half_width())
    }

    fn quadrature(&self) -> Result<QuadratureConfig> {
        let shell_policy = match self.shell_policy.as_str() {
            "taylor" => ShellPolicy::Taylor,
            "omit" => ShellPolicy::Omit,
            other => return Err(Error::Input(format!("unknown shell policy '{other}'"))),
        };
        Ok(QuadratureConfig { shell_policy, ..QuadratureConfig::default() })
    }

    fn point(&self) -> [f64; 2] {
        [self.x.first().copied().unwrap_or(0.0), self.x.get(1).copied().unwrap_or(0.0)]
    }

    fn domain(&self) -> Result<Domain> {
        Domain::parse(&self.omega, self.dim)
    }

    /// Grid with nodes on `±max|∂Ω|` and three nodes beyond.
    fn solver_grid(&self, omega: &Domain) -> Result<Grid> {
        let (lo, hi) = omega.bounds();
        let extent = (0..self.dim).map(|k| lo[k].abs().max(hi[k].abs())).fold(0.0, f64::max);
        Grid::with_boundary_nodes(self.dim, self.points, extent, 3)
    }
}

#[derive(Debug, Serialize)]
struct GridInfo {
    n: usize,
    #[serde(rename = "L")]
    half_width: f64,
    #[serde(rename = "N")]
    points: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha: String,
    grid: GridInfo,
    family: &'a str,
    potential: &'a str,
    s_ladder: &'a [f64],
    outputs: Vec<String>,
    wall_ms: u128,
}

/// What a subcommand produced.
struct Outcome {
    outputs: Vec<String>,
    grid: Grid,
    passed: bool,
}

/// Runs the CLI on `args` (program name first), printing to `stdout`.
/// Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(std::io::stderr(), "{e}") };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_ASSERTION,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            EXIT_INPUT
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<bool> {
    let start = Instant::now();
    let command = cli.command.name();
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Opts>(&text).map_err(|e| Error::Input(format!("bad config file: {e}")))?
        }
        None => Opts::default(),
    };
    let cfg = resolve(command, cli.command.opts().clone().over(file));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Input("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::Input(e.to_string()))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Input(format!("cannot create {}: {e}", cli.out.display())))?;

    let mut buf: Vec<u8> = Vec::new();
    let outcome = pool.install(|| dispatch(&cfg, &cli.out, &mut buf));
    stdout.write_all(&buf).map_err(|e| Error::Input(e.to_string()))?;
    let outcome = outcome?;

    let manifest = Manifest {
        command,
        config_sha: cfg.digest(),
        grid: GridInfo { n: outcome.grid.dim(), half_width: outcome.grid.half_width(), points: outcome.grid.points() },
        family: &cfg.family,
        potential: &cfg.potential,
        s_ladder: &cfg.ladder,
        outputs: outcome.outputs,
        wall_ms: start.elapsed().as_millis(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    write_file(&cli.out, "manifest.json", |w| w.write_all(text.as_bytes()))?;
    Ok(outcome.passed)
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<String> {
    let io = |e: std::io::Error| Error::Input(format!("{name}: {e}"));
    let file = std::fs::File::create(dir.join(name)).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(name.to_string())
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(line).and_then(|_| out.write_all(b"\n")).map_err(|e| Error::Input(e.to_string()))
}

fn dispatch(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    match cfg.command.as_str() {
        "gtilde" => gtilde(cfg, dir, out),
        "modular" => modular(cfg, dir, out),
        "bbm" => bbm(cfg, dir, out),
        "pointwise" => pointwise(cfg, dir, out),
        "solve" => solve(cfg, dir, out),
        "study" => study(cfg, dir, out),
        "lab" => lab(cfg, dir, out),
        "selftest" => selftest(cfg, dir, out),
        other => Err(Error::Input(format!("unknown command '{other}'"))),
    }
}

fn gtilde(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let limit = limit_function(&f, cfg.dim)?;
    for &a in &cfg.a {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Domain(format!("G̃ argument {a} must be nonnegative")));
        }
        say(out, format_args!("{:?}", limit.value(a)))?;
    }
    let table = SphericalLimit::new(&f, cfg.dim)?;
    let name = write_file(dir, "gtilde.csv", |w| table.write_csv(w, &log_grid(1e-3, 1e3, 61)))?;
    Ok(Outcome { outputs: vec![name], grid: cfg.grid()?, passed: true })
}

fn modular(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let grid = cfg.grid()?;
    let u = sample_named(&cfg.field, &grid)?;
    let a = cfg.potential_on(&grid)?;
    let kind = ModularKind::parse(&cfg.kind)?;
    let spec = ModularSpec { kind, s: cfg.s, potential: Some(a), cfg: cfg.quadrature()? };
    let report = evaluate(&f, &u, &spec)?;
    say(out, format_args!("{} {:?} error_estimate {:?}", kind.name(), report.value, report.error_estimate))?;
    let name = write_file(dir, "modular.csv", |w| write_trace(&[report], w))?;
    Ok(Outcome { outputs: vec![name], grid, passed: true })
}

fn bbm(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let grid = cfg.grid()?;
    let u = sample_named(&cfg.field, &grid)?;
    let a = cfg.potential_on(&grid)?;
    let r = bbm_sweep(&f, &u, &a, &cfg.ladder, &cfg.quadrature()?)?;
    for (s, v) in r.s_ladder.iter().zip(&r.scaled_values) {
        say(out, format_args!("s {s:?} scaled {v:?}"))?;
    }
    say(out, format_args!("extrapolated {:?} target {:?} rel_gap {:?}", r.extrapolated, r.target, r.rel_gap))?;
    let name = write_file(dir, "bbm.csv", |w| r.write_csv(w))?;
    Ok(Outcome { outputs: vec![name], grid, passed: true })
}

fn pointwise(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let grid = cfg.grid()?;
    let u = sample_named(&cfg.field, &grid)?;
    let a = cfg.potential_on(&grid)?;
    let r = pointwise_bbm(&f, &u, &a, cfg.point(), &cfg.ladder, &cfg.quadrature()?)?;
    say(out, format_args!("re_limit {:?} re_target {:?}", r.re_limit, r.re_target))?;
    say(out, format_args!("im_limit {:?} im_target {:?}", r.im_limit, r.im_target))?;
    let name = write_file(dir, "pointwise.csv", |w| {
        writeln!(w, "s,re,im")?;
        for ((s, re), im) in r.s_ladder.iter().zip(&r.re_values).zip(&r.im_values) {
            writeln!(w, "{s},{re:.17e},{im:.17e}")?;
        }
        Ok(())
    })?;
    Ok(Outcome { outputs: vec![name], grid, passed: true })
}

#[derive(Serialize)]
struct SolveSummary {
    energy: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

fn solve(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let omega = cfg.domain()?;
    let grid = cfg.solver_grid(&omega)?;
    let source = sample_named(&cfg.source, &grid)?;
    let a = cfg.potential_on(&grid)?;
    let order = if cfg.local {
        Order::Local
    } else {
        Order::Fractional(cfg.s.ok_or_else(|| Error::Input("solve needs --s or --local".into()))?)
    };
    let problem = DirichletProblem::new(f, a, &source, omega, order)?.with_quadrature(cfg.quadrature()?);
    let r = problem.solve()?;
    say(out, format_args!("energy {:?}", r.energy))?;
    say(out, format_args!("iterations {} gradient_norm {:?} converged {}", r.iterations, r.gradient_norm, r.converged))?;
    save_field(&r.minimizer, dir, "solution")?;
    let summary = SolveSummary {
        energy: r.energy,
        gradient_norm: r.gradient_norm,
        iterations: r.iterations,
        converged: r.converged,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Numeric(e.to_string()))?;
    let name = write_file(dir, "solve.json", |w| w.write_all(text.as_bytes()))?;
    Ok(Outcome { outputs: vec!["solution.csv".into(), "solution.json".into(), name], grid, passed: true })
}

fn study(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let omega = cfg.domain()?;
    let grid = cfg.solver_grid(&omega)?;
    let source = sample_named(&cfg.source, &grid)?;
    let a = cfg.potential_on(&grid)?;
    let t = convergence_study(&f, &a, &source, omega, &cfg.ladder, SolverOptions::default())?;
    for r in &t.rows {
        match &r.failure {
            None => say(out, format_args!("s {:?} distance {:?} energy {:?}", r.s, r.lux_distance, r.frac_energy))?,
            Some(msg) => say(out, format_args!("s {:?} failed: {msg}", r.s))?,
        }
    }
    say(
        out,
        format_args!(
            "local {:?} extrapolated {:?} gap {:?} decreasing {}",
            t.local.energy, t.extrapolated_energy, t.energy_gap, t.distances_decreasing
        ),
    )?;
    let name = write_file(dir, "study.csv", |w| t.write_csv(w))?;
    Ok(Outcome { outputs: vec![name], grid, passed: true })
}

fn lab(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let f = cfg.orlicz()?;
    let points2d = (cfg.points / 8).max(16) & !1;
    let outcome = run_standard_suites(&f, cfg.points, points2d)?;
    let mut outputs = Vec::new();
    for (suite, rows) in &outcome.suites {
        outputs.push(write_file(dir, &format!("{suite}.csv"), |w| write_rows(rows, w))?);
    }
    for s in &outcome.summaries {
        say(
            out,
            format_args!("{} checks {} failures {} worst_margin {:?}", s.suite, s.checks, s.failures, s.worst_margin),
        )?;
    }
    let text = serde_json::to_string_pretty(&outcome.summaries).map_err(|e| Error::Numeric(e.to_string()))?;
    outputs.push(write_file(dir, "lab_summary.json", |w| w.write_all(text.as_bytes()))?);
    Ok(Outcome { outputs, grid: Grid::new(1, 6.0, cfg.points)?, passed: outcome.passed() })
}

fn selftest(cfg: &Resolved, dir: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let checks = run_selftest(cfg.fast, cfg.seed)?;
    for c in &checks {
        say(out, format_args!("{} {:?} {}", c.name, c.value, if c.pass { "PASS" } else { "FAIL" }))?;
    }
    let passed = checks.iter().all(|c| c.pass);
    let name = write_file(dir, "selftest.csv", |w| write_checks(&checks, w))?;
    let points = if cfg.fast { 64 } else { 256 };
    Ok(Outcome { outputs: vec![name], grid: Grid::new(1, 6.0, points)?, passed })
}
