//! Command line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{ErrorTable, ERROR_COLUMNS};
use crate::assembly::assemble_mass_stiffness;
use crate::check::{run_checks, CheckOptions};
use crate::error::Result;
use crate::experiments::{run_experiment, ExperimentConfig, ExperimentId};
use crate::mesh::{generate_ball_mesh, generate_disk_mesh, mesh_size};

#[derive(Parser, Debug)]
#[command(
    name = "evolvefem",
    version,
    about = "Evolving finite elements on harmonically moved domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a convergence experiment and write CSV/JSON results.
    Run(RunArgs),
    /// Print convergence slopes of an error table.
    Eoc { path: PathBuf },
    /// Run the seeded property suites.
    Check {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_a21_sign_error: bool,
    },
    /// Write an initial mesh in the plain-text listing format.
    Mesh {
        #[arg(long, value_enum)]
        domain: Domain,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also dump mass and stiffness matrices as coordinate lists.
        #[arg(long)]
        dump_matrices: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Domain {
    Disk,
    Ball,
}

#[derive(clap::Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Flat key = value file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "tau-ref")]
    pub tau_ref: Option<f64>,
    #[arg(long)]
    pub bdf: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replace the boundary velocity by zero.
    #[arg(long)]
    pub stationary: bool,
}

/// Builds the configuration: experiment defaults, then the config file,
/// then command-line flags.
pub fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let file_text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p)?),
        None => None,
    };
    let id = match &args.experiment {
        Some(e) => e.parse()?,
        None => ExperimentId::Ex1,
    };
    let mut config = ExperimentConfig::defaults(id);
    if let Some(text) = &file_text {
        config.apply_config_text(text)?;
    }
    if let Some(e) = &args.experiment {
        config.set("experiment", e)?;
    }
    if let Some(l) = args.levels {
        config.set("levels", &l.to_string())?;
    }
    if let Some(k) = args.degree {
        config.degree = k;
    }
    if let Some(t) = args.tau {
        config.tau = t;
    }
    if let Some(t) = args.tau_ref {
        config.tau_ref = Some(t);
    }
    if let Some(q) = args.bdf {
        config.bdf = q;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if args.stationary {
        config.stationary = true;
    }
    config.validate()?;
    Ok(config)
}

/// Slope table of every error column present in `table`.
pub fn format_eoc_report(table: &ErrorTable) -> Result<String> {
    if table.rows.len() < 2 {
        return Err(crate::FemError::Invalid("need ≥ 2 rows".into()));
    }
    let mut out = String::new();
    for (c, name) in ERROR_COLUMNS.iter().enumerate() {
        let col = table.column(c);
        if col.is_empty() {
            continue;
        }
        let fit = crate::analysis::eoc(&col)?;
        let pairs: Vec<String> = fit.pairwise.iter().map(|s| format!("{s:.3}")).collect();
        out.push_str(&format!(
            "{name:<14} pairwise [{}]  least-squares {:.3}\n",
            pairs.join(", "),
            fit.least_squares
        ));
    }
    Ok(out)
}

fn default_out(config: &ExperimentConfig) -> PathBuf {
    PathBuf::from(format!("results/{}_k{}.csv", config.experiment.name(), config.degree))
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let config = resolve_config(args)?;
    let result = run_experiment(&config)?;
    let out = args.out.clone().unwrap_or_else(|| default_out(&config));
    let (csv, json, timing) = result.write(&out)?;
    print!("{}", result.table.to_csv());
    if result.table.rows.len() >= 2 {
        if let Ok(report) = format_eoc_report(&result.table) {
            print!("{report}");
        }
    }
    println!("wrote {} {} {}", csv.display(), json.display(), timing.display());
    let failures: Vec<_> = result.levels.iter().filter_map(|l| l.failure.as_ref()).collect();
    for f in &failures {
        eprintln!("level failed: {f}");
    }
    Ok(failures.is_empty())
}

fn cmd_check(suite: Option<String>, seed: u64, flip: bool) -> Result<bool> {
    let opts = CheckOptions {
        suite,
        seed,
        flip_a21_sign: flip,
        ..Default::default()
    };
    let reports = run_checks(&opts)?;
    let mut ok = true;
    for r in &reports {
        print!("{r}");
        ok &= r.passed();
    }
    println!("overall: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn cmd_mesh(domain: Domain, h: f64, degree: usize, out: &PathBuf, dump: Option<&PathBuf>) -> Result<bool> {
    let (topo, x) = match domain {
        Domain::Disk => generate_disk_mesh(h, degree)?,
        Domain::Ball => generate_ball_mesh(h, degree)?,
    };
    topo.export_text(&x, std::io::BufWriter::new(std::fs::File::create(out)?))?;
    if let Some(prefix) = dump {
        let (m, a) = assemble_mass_stiffness(&topo, &x)?;
        m.write_coo(std::fs::File::create(prefix.with_extension("mass.coo"))?)?;
        a.write_coo(std::fs::File::create(prefix.with_extension("stiffness.coo"))?)?;
    }
    println!(
        "nodes {} boundary {} elements {} h {:.6}",
        topo.n_nodes,
        topo.n_boundary,
        topo.n_elements(),
        mesh_size(&topo, &x)
    );
    Ok(true)
}

pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Eoc { path } => {
            let table = ErrorTable::from_csv(&std::fs::read_to_string(path)?)?;
            print!("{}", format_eoc_report(&table)?);
            Ok(true)
        }
        Command::Check {
            suite,
            seed,
            inject_a21_sign_error,
        } => cmd_check(suite, seed, inject_a21_sign_error),
        Command::Mesh {
            domain,
            h,
            degree,
            out,
            dump_matrices,
        } => cmd_mesh(domain, h, degree, &out, dump_matrices.as_ref()),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_cubic_slopes() {
        let mut csv = String::from(crate::analysis::CSV_HEADER);
        csv.push('\n');
        for h in [0.4f64, 0.2, 0.1] {
            csv.push_str(&format!("{h},0.001,,,,,{},\n", h.powi(3)));
        }
        let table = ErrorTable::from_csv(&csv).unwrap();
        let fit = crate::analysis::eoc(&table.column(4)).unwrap();
        assert!((fit.least_squares - 3.0).abs() < 1e-12);
        assert!(fit.pairwise.iter().all(|s| (s - 3.0).abs() < 1e-12));
        assert!(format_eoc_report(&table).unwrap().contains("3.000"));
    }

    #[test]
    fn single_row_rejected() {
        let csv = format!("{}\n0.1,0.001,1,,,,,\n", crate::analysis::CSV_HEADER);
        let table = ErrorTable::from_csv(&csv).unwrap();
        let err = format_eoc_report(&table).unwrap_err();
        assert!(err.to_string().contains("need ≥ 2 rows"));
    }

    #[test]
    fn published_velocity_h1_fit() {
        let h = [
            0.344185, 0.262248, 0.183512, 0.134654, 0.0995855, 0.0735033, 0.0547825, 0.0408425, 0.0304952, 0.0227682,
        ];
        let e = [
            0.0105518, 0.00602758, 0.00234563, 0.00132874, 5.14077e-4, 2.39662e-4, 1.24568e-4, 7.49187e-5, 3.08597e-5,
            1.55904e-5,
        ];
        let mut csv = format!("{}\n", crate::analysis::CSV_HEADER);
        for (a, b) in h.iter().zip(e) {
            csv.push_str(&format!("{a},0.008,,,,{b},,\n"));
        }
        let table = ErrorTable::from_csv(&csv).unwrap();
        let fit = crate::analysis::eoc(&table.column(3)).unwrap();
        assert!((fit.least_squares - 2.4).abs() < 0.1, "{}", fit.least_squares);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "experiment = ex3\ntau = 0.002\nbdf = 2\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            bdf: Some(3),
            levels: Some(2),
            ..Default::default()
        };
        let c = resolve_config(&args).unwrap();
        assert_eq!(c.experiment, ExperimentId::Ex3);
        assert_eq!((c.tau, c.bdf, c.h_targets.len()), (0.002, 3, 2));
    }
}
