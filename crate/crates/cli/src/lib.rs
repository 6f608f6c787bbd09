//! Command implementations behind the `flatpath` binary.

pub mod svg;

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use flatpath::distributions::TGrid;
use flatpath::{
    approximation_check, compute_decomposition_with, convergence_sweep, estimate_F,
    estimate_Ftilde, estimate_ftilde, parse_ccdf_csv, renormalization_check, write_ccdf_csv,
    CsvMetadata, DistError, EmpiricalCCDF, IoError, SamplePlan, Surface, SurfaceError, SurfaceSpec,
    ThetaMode, TraceError, ZipperedConfig, ZipperedError,
};

/// Environment variable capping the number of sampling threads.
pub const THREADS_ENV: &str = "FLATPATH_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        match e {
            DistError::InvalidPlan(_)
            | DistError::Surface(_)
            | DistError::Trace(TraceError::InvalidState(_)) => CliError::Validation(e.to_string()),
            DistError::Trace(TraceError::InvalidEpsilon { .. }) => {
                CliError::Validation(format!("--epsilon: {e}"))
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ZipperedError> for CliError {
    fn from(e: ZipperedError) -> Self {
        match e {
            ZipperedError::OverlappingTransversals { .. }
            | ZipperedError::Trace(TraceError::InvalidEpsilon { .. }) => {
                CliError::Validation(format!("--epsilon: {e}"))
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "flatpath",
    version,
    about = "Free path lengths on translation surfaces with obstacles at cone points"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Circular,
    Segment,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print stratum, area and shortest saddle connection of a surface.
    Validate {
        /// TOML file or `builtin:NAME[:p1,p2,...]`.
        surface: String,
        /// Search radius for the shortest saddle connection.
        #[arg(long, default_value_t = 10.0)]
        separation_bound: f64,
    },
    /// Monte Carlo survivor functions of the scaled free path 2ε·τ.
    Simulate {
        surface: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = Mode::Segment)]
        mode: Mode,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `lo:hi:points`.
        #[arg(long, default_value = "0:4:401")]
        grid: String,
        /// `uniform`, an angle in radians, or `deg:ANGLE`.
        #[arg(long, default_value = "uniform", allow_hyphen_values = true)]
        theta: String,
        /// Output CSV; `both` writes `<stem>_circular.csv` and `<stem>_segment.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zippered rectangles over horizontal transversals for the downward flow.
    Zr {
        surface: String,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e3)]
        height_bound: f64,
        #[arg(long, default_value = "0:4:401")]
        grid: String,
        /// Exact survivor function CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pathwise check that 2ε·τ̃_ε(S,p,θ) equals τ̃_{1/2}(gS,gp,−π/2).
    RenormCheck {
        surface: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value = "uniform", allow_hyphen_values = true)]
        theta: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// KS distances between successive ε and the circular/segment comparison.
    Sweep {
        surface: String,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "0:4:401")]
        grid: String,
        /// Skip the circular/segment comparison.
        #[arg(long)]
        no_approximation: bool,
    },
    /// Draw result CSVs as an SVG chart.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "survivor functions")]
        title: String,
    },
}

/// `builtin:NAME[:p1,p2,...]` or a TOML file path.
pub fn load_surface(arg: &str) -> Result<(String, Surface), CliError> {
    let spec = if let Some(rest) = arg.strip_prefix("builtin:") {
        let (name, params) = match rest.split_once(':') {
            Some((name, list)) => {
                let params = list
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|e| {
                            CliError::Validation(format!("surface `{arg}`: parameter `{p}`: {e}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                (name, params)
            }
            None => (rest, Vec::new()),
        };
        SurfaceSpec::builtin(name, &params)
    } else {
        let text = fs::read_to_string(arg)
            .map_err(|e| CliError::Validation(format!("cannot read surface file `{arg}`: {e}")))?;
        SurfaceSpec::from_toml_str(&text)
            .map_err(|e| CliError::Validation(format!("`{arg}`: {e}")))?
    };
    let surface = spec
        .build::<f64>()
        .map_err(|e| CliError::Validation(format!("surface `{arg}`: {e}")))?;
    Ok((spec.display_name(), surface))
}

/// Radians, or degrees with a `deg:` prefix.
pub fn parse_angle(s: &str) -> Result<f64, CliError> {
    let bad = |e: std::num::ParseFloatError| CliError::Validation(format!("--theta `{s}`: {e}"));
    let v = match s.strip_prefix("deg:") {
        Some(d) => d.trim().parse::<f64>().map_err(bad)?.to_radians(),
        None => s.trim().parse::<f64>().map_err(bad)?,
    };
    if !v.is_finite() {
        return Err(CliError::Validation(format!("--theta `{s}` is not finite")));
    }
    Ok(v)
}

pub fn parse_theta_mode(s: &str) -> Result<ThetaMode, CliError> {
    if s.eq_ignore_ascii_case("uniform") {
        Ok(ThetaMode::Uniform)
    } else {
        parse_angle(s).map(ThetaMode::Fixed)
    }
}

pub fn parse_grid(s: &str) -> Result<TGrid, CliError> {
    let bad = || CliError::Validation(format!("--grid `{s}`: expected lo:hi:points"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    let points = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
    if points == 0 || !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() || (points > 1 && hi == lo) {
        return Err(bad());
    }
    Ok(TGrid { lo, hi, points })
}

fn positive(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!(
            "--{flag} must be positive, got {v}"
        )))
    }
}

fn positive_count(flag: &str, v: usize) -> Result<usize, CliError> {
    if v > 0 {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("--{flag} must be positive")))
    }
}

/// Worker cap from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!(
                "{THREADS_ENV}=`{v}` is not a positive integer"
            ))),
        },
        _ => Ok(None),
    }
}

/// Rounds to 12 decimals for human-facing reports.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = (x * 1e12).round() / 1e12;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn theta_label(mode: ThetaMode) -> String {
    match mode {
        ThetaMode::Uniform => "uniform".into(),
        ThetaMode::Fixed(t) => t.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("result");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate {
            surface,
            separation_bound,
        } => cmd_validate(&surface, separation_bound, out),
        Command::Simulate {
            surface,
            epsilon,
            mode,
            samples,
            seed,
            grid,
            theta,
            out: path,
        } => {
            let (name, s) = load_surface(&surface)?;
            let plan = SamplePlan::new(
                positive_count("samples", samples)?,
                seed,
                positive("epsilon", epsilon)?,
            )
            .with_grid(parse_grid(&grid)?)
            .with_theta(parse_theta_mode(&theta)?)
            .with_workers(workers_from_env()?);
            cmd_simulate(&name, &s, mode, &plan, path.as_deref(), out)
        }
        Command::Zr {
            surface,
            epsilon,
            height_bound,
            grid,
            out: path,
        } => {
            let (name, s) = load_surface(&surface)?;
            let config = ZipperedConfig {
                epsilon: positive("epsilon", epsilon)?,
                height_bound: positive("height-bound", height_bound)?,
            };
            cmd_zr(
                &name,
                &s,
                &config,
                &parse_grid(&grid)?,
                path.as_deref(),
                out,
            )
        }
        Command::RenormCheck {
            surface,
            epsilon,
            theta,
            samples,
            seed,
        } => {
            let (_, s) = load_surface(&surface)?;
            let plan = SamplePlan::new(
                positive_count("samples", samples)?,
                seed,
                positive("epsilon", epsilon)?,
            )
            .with_theta(parse_theta_mode(&theta)?)
            .with_workers(workers_from_env()?);
            cmd_renorm_check(&s, &plan, out)
        }
        Command::Sweep {
            surface,
            epsilons,
            samples,
            seed,
            grid,
            no_approximation,
        } => {
            let (_, s) = load_surface(&surface)?;
            for &e in &epsilons {
                positive("epsilons", e)?;
            }
            let plan = SamplePlan::new(positive_count("samples", samples)?, seed, epsilons[0])
                .with_grid(parse_grid(&grid)?)
                .with_workers(workers_from_env()?);
            cmd_sweep(&s, &epsilons, &plan, !no_approximation, out)
        }
        Command::Plot {
            csv,
            out: path,
            title,
        } => cmd_plot(&csv, &path, &title, out),
    }
}

pub fn cmd_validate(surface: &str, bound: f64, out: &mut dyn Write) -> Result<(), CliError> {
    let (_, s) = load_surface(surface)?;
    let separation = match s.shortest_singularity_separation(positive("separation-bound", bound)?) {
        Ok(d) => fmt_num(d),
        Err(SurfaceError::NotFoundWithinBound { bound }) => format!(">{bound}"),
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };
    let st = s.stratum();
    emit(
        out,
        &format!(
            "alphas={:?} kappa={} area={} separation={}\n",
            st.alphas,
            st.kappa,
            fmt_num(s.total_area()),
            separation
        ),
    )
}

fn base_metadata(name: &str, plan: &SamplePlan, obstacle: &str) -> CsvMetadata {
    CsvMetadata::new()
        .with("surface", name)
        .with("epsilon", plan.epsilon)
        .with("theta", theta_label(plan.theta_mode))
        .with("seed", plan.seed)
        .with("obstacle", obstacle)
}

pub fn cmd_simulate(
    name: &str,
    surface: &Surface,
    mode: Mode,
    plan: &SamplePlan,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let segment = |plan: &SamplePlan| -> Result<EmpiricalCCDF, CliError> {
        Ok(match plan.theta_mode {
            ThetaMode::Uniform => estimate_Ftilde(surface, plan)?,
            ThetaMode::Fixed(_) => estimate_ftilde(surface, plan)?,
        })
    };
    match mode {
        Mode::Circular | Mode::Segment => {
            let (obstacle, ccdf) = if mode == Mode::Circular {
                ("circular", estimate_F(surface, plan)?)
            } else {
                ("segment", segment(plan)?)
            };
            let csv = write_ccdf_csv(&base_metadata(name, plan, obstacle), &ccdf);
            match path {
                Some(p) => {
                    write_file(p, &csv)?;
                    emit(out, &format!("wrote {}\n", p.display()))
                }
                None => emit(out, &csv),
            }
        }
        Mode::Both => {
            let path =
                path.ok_or_else(|| CliError::Validation("--mode both needs --out".into()))?;
            let circ = estimate_F(surface, plan)?;
            let seg = segment(plan)?;
            for (obstacle, ccdf) in [("circular", &circ), ("segment", &seg)] {
                let p = sibling(path, obstacle);
                write_file(
                    &p,
                    &write_ccdf_csv(&base_metadata(name, plan, obstacle), ccdf),
                )?;
                emit(out, &format!("wrote {}\n", p.display()))?;
            }
            Ok(())
        }
    }
}

pub fn cmd_zr(
    name: &str,
    surface: &Surface,
    config: &ZipperedConfig<f64>,
    grid: &TGrid,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let d = compute_decomposition_with(surface, config)?;
    let mut table = String::from("width,height\n");
    for r in &d.rectangles {
        table.push_str(&format!("{},{}\n", r.width, r.height));
    }
    emit(out, &table)?;
    let t = grid.values();
    let ccdf = EmpiricalCCDF {
        values: t.iter().map(|&x| d.exact_distribution(x)).collect(),
        stderr: vec![0.0; t.len()],
        grid: t,
        n_samples: 0,
        n_censored: 0,
        n_aborted: 0,
    };
    let meta = CsvMetadata::new()
        .with("surface", name)
        .with("epsilon", config.epsilon)
        .with("theta", -PI / 2.0)
        .with("obstacle", "segment")
        .with("source", "zippered")
        .with("rectangles", d.rectangles.len())
        .with("covered_area", d.covered_area);
    let csv = write_ccdf_csv(&meta, &ccdf);
    match path {
        Some(p) => {
            write_file(p, &csv)?;
            emit(out, &format!("wrote {}\n", p.display()))
        }
        None => emit(out, &format!("\n{csv}")),
    }
}

pub fn cmd_renorm_check(
    surface: &Surface,
    plan: &SamplePlan,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let r = renormalization_check(surface, plan)?;
    let verdict = if r.passed() { "PASS" } else { "FAIL" };
    emit(
        out,
        &format!(
            "{verdict} epsilon={} checked={} censored={} aborted={} max_relative_difference={:e} tolerance={:e} failures={}\n",
            r.epsilon, r.checked, r.censored, r.aborted, r.max_relative_difference, r.tolerance, r.failures
        ),
    )?;
    if r.passed() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "renormalization identity failed on {} samples",
            r.failures
        )))
    }
}

pub fn cmd_sweep(
    surface: &Surface,
    epsilons: &[f64],
    plan: &SamplePlan,
    with_approximation: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let report = convergence_sweep(surface, epsilons, plan)?;
    let mut text = String::from("epsilon_a,epsilon_b,ks_distance,pooled_sigma\n");
    for row in &report.rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.epsilon_a, row.epsilon_b, row.distance, row.pooled_sigma
        ));
    }
    if with_approximation {
        text.push_str("\nepsilon,sup_gap,sigma,bound,r10_volume,r01_volume,disc_volume,domination_violations\n");
        for &e in epsilons {
            let a = approximation_check(surface, &plan.clone().with_epsilon(e))?;
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e,
                a.sup_gap,
                a.sigma,
                a.bound,
                a.r10_volume,
                a.r01_volume,
                a.disc_volume,
                a.domination_violations
            ));
        }
    }
    emit(out, &text)
}

pub fn cmd_plot(
    paths: &[PathBuf],
    svg_path: &Path,
    title: &str,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut series = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Validation(format!("cannot read `{}`: {e}", p.display())))?;
        let (meta, ccdf) = parse_ccdf_csv(&text)
            .map_err(|e| CliError::Validation(format!("`{}`: {e}", p.display())))?;
        let mut label = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("series")
            .to_string();
        if let (Some(o), Some(e)) = (meta.get("obstacle"), meta.get("epsilon")) {
            label = format!("{label} ({o}, ε={e})");
        }
        series.push(svg::Series {
            label,
            points: ccdf
                .grid
                .iter()
                .copied()
                .zip(ccdf.values.iter().copied())
                .collect(),
        });
    }
    write_file(svg_path, &svg::render(&series, title, "t", "vol{2ε·τ > t}"))?;
    emit(out, &format!("wrote {}\n", svg_path.display()))
}
