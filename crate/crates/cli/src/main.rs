use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsparse::bench::{emit_density_plot, emit_success_grid, run_grid, ExperimentConfig, SPARSITY_TOL};
use tsparse::certify::{build_certificate, GolfingSchedule, LogBase, SignPattern};
use tsparse::solver::{rsnr, solve};
use tsparse::spectra::{group_incoherence, incoherence, two_step_profile, DensityDocument};
use tsparse::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CELL_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "tsparse", version, about = "Transform-domain compressed sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct Draw {
    /// Sparsity level; omit to use the configured signal as given.
    #[arg(long)]
    s: Option<usize>,
    /// Number of samples; defaults to the first configured value.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Incoherence profile and sampling density.
    Density {
        #[command(flatten)]
        common: Common,
    },
    /// Draw a sampling pattern.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        draw: Draw,
    },
    /// Recover one signal from one pattern.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        draw: Draw,
    },
    /// Build a golfing certificate for one instance.
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        draw: Draw,
        /// Reuse the whole pattern for this many stages instead of the
        /// standard disjoint-block schedule.
        #[arg(long)]
        reuse: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        log2: bool,
    },
    /// Monte Carlo success-rate grid.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(common: &Common) -> tsparse::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&common.out_dir)?;
    Ok(cfg)
}

fn first_m(cfg: &ExperimentConfig, draw: &Draw) -> tsparse::Result<usize> {
    match draw.m {
        Some(m) => Ok(m),
        None => Ok(cfg.m_values()?[0]),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> tsparse::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn grid_shape(cfg: &ExperimentConfig) -> Option<(usize, usize)> {
    (cfg.transform.n2 > 1).then_some((cfg.transform.n1, cfg.transform.n2))
}

fn density_cmd(common: &Common) -> tsparse::Result<u8> {
    let cfg = load(common)?;
    let t = cfg.transform.t()?;
    let partition = cfg.transform.partition();
    // profile of the configured transform, restricted when it has null columns
    let profile = if t.null_columns()?.is_empty() {
        match &partition {
            Some(p) => group_incoherence(&t, p)?,
            None => incoherence(&t)?,
        }
    } else {
        two_step_profile(&t, partition.as_ref())?.0
    };
    let density = cfg.sampling_density(&t)?;
    write_json(&common.out_dir.join("density.json"), &DensityDocument::new(&profile, &density))?;
    let svg = common.out_dir.join("density.svg");
    emit_density_plot(&density, grid_shape(&cfg), &svg)?;
    println!("wrote {}", svg.display());
    println!("mu = {:.6}, mu_bar = {:.6}, gamma = {:.6}", profile.mu, profile.mu_bar, profile.gamma);
    Ok(0)
}

fn sample_cmd(common: &Common, draw: &Draw) -> tsparse::Result<u8> {
    let cfg = load(common)?;
    let inst = cfg.instance(draw.s, first_m(&cfg, draw)?, draw.trial)?;
    write_json(&common.out_dir.join("pattern.json"), &inst.pattern)?;
    if let Some((n1, n2)) = grid_shape(&cfg) {
        let pgm = common.out_dir.join("mask.pgm");
        inst.pattern.write_mask_pgm(n1, n2, &pgm)?;
        println!("wrote {}", pgm.display());
    }
    println!("m = {}, distinct = {}", inst.pattern.m(), inst.pattern.omega_prime().len());
    Ok(0)
}

fn solve_cmd(common: &Common, draw: &Draw) -> tsparse::Result<u8> {
    let cfg = load(common)?;
    let inst = cfg.instance(draw.s, first_m(&cfg, draw)?, draw.trial)?;
    let report = solve(&inst.problem()?, &cfg.admm)?;
    let bin = common.out_dir.join("x_hat.bin");
    report.write_x_hat(&bin)?;
    println!("wrote {}", bin.display());
    write_json(&common.out_dir.join("report.json"), &report)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    println!("rsnr = {:.2} dB", rsnr(&report.x_hat, &inst.x)?);
    Ok(0)
}

fn certify_cmd(common: &Common, draw: &Draw, reuse: Option<usize>, beta: f64, log2: bool) -> tsparse::Result<u8> {
    let cfg = load(common)?;
    // without --s the signal is fixed and its support size sets the schedule
    let probe = cfg.instance(draw.s, first_m(&cfg, draw)?, draw.trial)?;
    let s = match draw.s {
        Some(s) => s,
        None => SignPattern::of_signal(&probe.t, &probe.x, SPARSITY_TOL)?.support.len(),
    };
    let schedule = match reuse {
        Some(ell) => GolfingSchedule::reuse(ell, first_m(&cfg, draw)?, 0.5, 0.5),
        None => {
            let profile = incoherence(&probe.t)?;
            let base = if log2 { LogBase::Two } else { LogBase::Natural };
            GolfingSchedule::standard(
                s,
                probe.t.in_dim(),
                probe.t.out_dim(),
                beta,
                profile.mu,
                probe.t.column_norms()?.norm_product(),
                base,
            )?
        }
    };
    let m = match (reuse, draw.m) {
        (None, None) => schedule.draw_size(),
        _ => first_m(&cfg, draw)?,
    };
    let inst = cfg.instance(draw.s, m, draw.trial)?;
    let sign = SignPattern::of_signal(&inst.t, &inst.x, SPARSITY_TOL)?;
    let report = build_certificate(&inst.t, &sign, &inst.pattern, &schedule)?;
    write_json(&common.out_dir.join("certificate.json"), &report)?;
    println!(
        "s = {}, m = {m}, passed = {}: sign {:.3e} (≤ {:.3e}), off-support {:.4}, local isometry {:.4}",
        sign.support.len(),
        report.passed,
        report.sign_deviation,
        report.thresholds.sign,
        report.offsupport_max,
        report.local_isometry_dev
    );
    Ok(0)
}

fn grid_cmd(common: &Common, threads: Option<usize>) -> tsparse::Result<u8> {
    let cfg = load(common)?;
    let result = run_grid(&cfg, threads)?;
    let base = common.out_dir.join("grid");
    emit_success_grid(&result, &base)?;
    println!("wrote {} and {}", base.with_extension("csv").display(), base.with_extension("svg").display());
    write_json(&common.out_dir.join("grid.json"), &result)?;
    for c in &result.cells {
        println!("s = {:>5}  m = {:>6}  rate = {:.2}  mean rsnr = {:.1} dB", c.s, c.m, c.rate, c.mean_rsnr_db);
        for f in &c.failures {
            eprintln!("cell (s = {}, m = {}): {f}", c.s, c.m);
        }
    }
    Ok(if result.has_failures() { EXIT_CELL_FAILURE } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Density { common } => density_cmd(common),
        Command::Sample { common, draw } => sample_cmd(common, draw),
        Command::Solve { common, draw } => solve_cmd(common, draw),
        Command::Certify { common, draw, reuse, beta, log2 } => certify_cmd(common, draw, *reuse, *beta, *log2),
        Command::Grid { common, threads } => grid_cmd(common, *threads),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}
