//! Command-line front end.
//!
//! Subcommands: `plm` and `irm` estimate on CSV data driven by a TOML
//! config (flags override config values; the resolved configuration is
//! echoed into every output for reproducibility), `sim-plm` / `sim-irm`
//! write synthetic datasets, `bench-plm` / `bench-irm` run the
//! replication harness, and `check` runs the diagnostic suites.
//!
//! Exit codes: 0 success, 2 config/schema violation, 3 estimation
//! failure, 4 I/O failure. Failures print one machine-parsable line
//! `error[<class>]: <detail>` to stderr.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{run_irm_bench, run_plm_bench, write_bench_outputs};
use crate::config::{AnalysisConfig, IrmBenchFile, PlmBenchFile};
use crate::error::{Error, ErrorClass, Result};
use crate::io::{read_dataset, write_dataset_csv};
use crate::irm::{estimate_irm, IrmOptions};
use crate::plm::{repeat_splits, PlmOptions};
use crate::report::EstimateReport;
use crate::simgen::{gen_irm, gen_plm, IrmSimConfig, PlmSimConfig};

#[derive(Parser)]
#[command(
    name = "multidml",
    version,
    about = "Double machine learning for multiple treatments, interactions, and multi-valued regimens"
)]
struct Cli {
    /// Worker threads (0 = automatic). `--threads 1` reproduces
    /// parallel results exactly.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Input CSV (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Analysis config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report files.
    #[arg(long, default_value = "multidml_out")]
    out: PathBuf,
    /// Override: fold count.
    #[arg(long)]
    k: Option<usize>,
    /// Override: number of repeated fold splits.
    #[arg(long)]
    splits: Option<usize>,
    /// Override: seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: probability clip for propensity denominators.
    #[arg(long)]
    clip_eps: Option<f64>,
    /// Override: learner family for every nuisance (by name).
    #[arg(long)]
    learner: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate treatment and interaction coefficients (partial linear model).
    Plm(EstimateArgs),
    /// Estimate the ATE between two regimen categories (interactive model).
    Irm {
        #[command(flatten)]
        common: EstimateArgs,
        /// Regimen categories to contrast: b c (effect of b relative to c).
        #[arg(long, num_args = 2, value_names = ["B", "C"])]
        arms: Vec<usize>,
    },
    /// Write a synthetic two-treatment dataset as CSV.
    SimPlm {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Preset: default | null | linear.
        #[arg(long, default_value = "default")]
        preset: String,
    },
    /// Write a synthetic three-regimen dataset as CSV.
    SimIrm {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Preset: default | uniform.
        #[arg(long, default_value = "default")]
        preset: String,
    },
    /// Replication harness for the partial linear model.
    BenchPlm {
        /// Bench config (TOML); defaults reproduce the standard run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "multidml_bench")]
        out: PathBuf,
        /// Override: replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override: master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replication harness for the interactive model.
    BenchIrm {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "multidml_bench")]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the diagnostic suites (orthogonality, FWL, identities,
    /// double robustness); nonzero exit on any violation.
    Check {
        #[arg(long, default_value_t = 20240903)]
        seed: u64,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap prints its own help/version on stdout with code 0
            let code = if e.use_stderr() { ErrorClass::Config.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        // ignore failure when a pool was already installed in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let class = e.class();
            eprintln!("error[{}]: {}", class.label(), e);
            class.exit_code()
        }
    }
}

#[derive(Serialize)]
struct ResolvedEstimateConfig {
    mode: String,
    data: String,
    k: usize,
    n_splits: usize,
    seed: u64,
    clip_eps: f64,
    learners: Vec<String>,
    arms: Option<[usize; 2]>,
    treatments: Vec<String>,
    interactions: Vec<String>,
    outcome: String,
    regimen: Option<String>,
}

#[derive(Serialize)]
struct ReportEnvelope<'a> {
    payload: ReportPayload<'a>,
    meta: ReportMeta,
}

#[derive(Serialize)]
struct ReportPayload<'a> {
    config: &'a ResolvedEstimateConfig,
    report: &'a EstimateReport,
}

#[derive(Serialize)]
struct ReportMeta {
    created_unix_ms: u128,
    wall_secs: f64,
}

fn write_report_files(
    out_dir: &Path,
    resolved: &ResolvedEstimateConfig,
    report: &EstimateReport,
    wall_secs: f64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let envelope = ReportEnvelope {
        payload: ReportPayload { config: resolved, report },
        meta: ReportMeta {
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            wall_secs,
        },
    };
    let json = serde_json::to_string_pretty(&envelope).expect("report serialization");
    std::fs::write(out_dir.join("report.json"), json)?;

    let mut tsv = std::fs::File::create(out_dir.join("estimates.tsv"))?;
    writeln!(tsv, "coefficient\testimate\tse\tci95_low\tci95_high")?;
    for j in 0..report.theta.len() {
        writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}",
            report.coef_names[j], report.theta[j], report.se[j], report.ci95[j][0], report.ci95[j][1]
        )?;
    }
    Ok(())
}

fn print_report_summary(report: &EstimateReport) {
    println!(
        "n_obs={} folds={} splits={} learners=[{}]",
        report.n_obs,
        report.n_folds,
        report.n_splits,
        report.learner_ids.join(", ")
    );
    for j in 0..report.theta.len() {
        println!(
            "{:<24} {:>12.6}  se {:>10.6}  ci95 [{:.6}, {:.6}]",
            report.coef_names[j],
            report.theta[j],
            report.se[j],
            report.ci95[j][0],
            report.ci95[j][1]
        );
    }
    for w in &report.warnings {
        println!("warning: {}", w);
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Plm(args) => run_plm(args),
        Command::Irm { common, arms } => run_irm(common, arms),
        Command::SimPlm { n, seed, out, preset } => {
            let preset = crate::bench::parse_plm_preset(&preset)?;
            let (ds, _) = gen_plm(&PlmSimConfig { n, seed, preset, ..Default::default() })?;
            write_dataset_csv(&ds, &out)?;
            println!("wrote {} rows to {}", ds.n_obs(), out.display());
            Ok(())
        }
        Command::SimIrm { n, seed, out, preset } => {
            let preset = crate::bench::parse_irm_preset(&preset)?;
            let (ds, _) = gen_irm(&IrmSimConfig { n, seed, preset })?;
            write_dataset_csv(&ds, &out)?;
            println!("wrote {} rows to {}", ds.n_obs(), out.display());
            Ok(())
        }
        Command::BenchPlm { config, out, replicates, seed } => {
            let mut file = match config {
                Some(p) => PlmBenchFile::from_path(&p)?,
                None => PlmBenchFile::default(),
            };
            if let Some(r) = replicates {
                file.n_replicates = r;
            }
            if let Some(s) = seed {
                file.master_seed = s;
            }
            let cfg = file.resolve()?;
            let result = run_plm_bench(&cfg)?;
            write_bench_outputs(&result, &out)?;
            let echo = serde_json::to_string_pretty(&cfg).expect("config echo");
            std::fs::write(out.join("effective_config.json"), echo)?;
            println!("bench complete: {} records -> {}", result.records.len(), out.display());
            Ok(())
        }
        Command::BenchIrm { config, out, replicates, seed } => {
            let mut file = match config {
                Some(p) => IrmBenchFile::from_path(&p)?,
                None => IrmBenchFile::default(),
            };
            if let Some(r) = replicates {
                file.n_replicates = r;
            }
            if let Some(s) = seed {
                file.master_seed = s;
            }
            let cfg = file.resolve()?;
            let result = run_irm_bench(&cfg)?;
            write_bench_outputs(&result, &out)?;
            let echo = serde_json::to_string_pretty(&cfg).expect("config echo");
            std::fs::write(out.join("effective_config.json"), echo)?;
            println!("bench complete: {} records -> {}", result.records.len(), out.display());
            Ok(())
        }
        Command::Check { seed } => {
            let outcomes = crate::checks::run_all(seed)?;
            let mut all_ok = true;
            for o in &outcomes {
                let tag = if o.passed { "[pass]" } else { "[FAIL]" };
                println!("{} {}: {}", tag, o.name, o.detail);
                all_ok &= o.passed;
            }
            if all_ok {
                Ok(())
            } else {
                Err(Error::Estimation("one or more checks failed".into()))
            }
        }
    }
}

fn run_plm(args: EstimateArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = AnalysisConfig::from_path(&args.config)?;
    let ds = read_dataset(&args.data, &cfg, false)?;
    if cfg.treatments.is_empty() {
        return Err(Error::Invalid("plm requires at least one declared treatment".into()));
    }
    let interactions: Vec<crate::data::InteractionSpec> = cfg
        .interactions
        .iter()
        .map(|i| crate::data::InteractionSpec::new(i.factors.clone()))
        .collect();

    let k = args.k.unwrap_or(cfg.estimate.k);
    let n_splits = args.splits.unwrap_or(cfg.estimate.n_splits);
    let seed = args.seed.unwrap_or(cfg.estimate.seed);
    let clip_eps = args.clip_eps.unwrap_or(cfg.estimate.clip_eps);
    let treatment_name =
        args.learner.clone().unwrap_or_else(|| cfg.estimate.treatment_learner.clone());
    let outcome_name = args.learner.unwrap_or_else(|| cfg.estimate.outcome_learner.clone());
    let opts = PlmOptions {
        k,
        treatment_learner: cfg.learners.resolve(&treatment_name)?,
        outcome_learner: cfg.learners.resolve(&outcome_name)?,
        clip_eps,
        ..Default::default()
    };
    let report = repeat_splits(&ds, &interactions, &opts, n_splits, seed)?;

    let resolved = ResolvedEstimateConfig {
        mode: "plm".into(),
        data: args.data.display().to_string(),
        k,
        n_splits,
        seed,
        clip_eps,
        learners: report.learner_ids.clone(),
        arms: None,
        treatments: cfg.treatments.iter().map(|t| format!("{}:{}", t.name, t.kind)).collect(),
        interactions: interactions.iter().map(|i| i.name()).collect(),
        outcome: cfg.outcome.clone(),
        regimen: cfg.regimen.clone(),
    };
    write_report_files(&args.out, &resolved, &report, start.elapsed().as_secs_f64())?;
    print_report_summary(&report);
    println!("report written to {}", args.out.join("report.json").display());
    Ok(())
}

fn run_irm(args: EstimateArgs, arms: Vec<usize>) -> Result<()> {
    let start = Instant::now();
    if arms.len() != 2 {
        return Err(Error::Invalid("--arms expects exactly two categories".into()));
    }
    let (b, c) = (arms[0], arms[1]);
    let cfg = AnalysisConfig::from_path(&args.config)?;
    let ds = read_dataset(&args.data, &cfg, true)?;

    let k = args.k.unwrap_or(cfg.estimate.k);
    let n_splits = args.splits.unwrap_or(cfg.estimate.n_splits);
    let seed = args.seed.unwrap_or(cfg.estimate.seed);
    let clip_eps = args.clip_eps.unwrap_or(cfg.estimate.clip_eps);
    let propensity_name = args.learner.clone().unwrap_or_else(|| {
        cfg.estimate
            .propensity_learner
            .clone()
            .unwrap_or_else(|| cfg.estimate.treatment_learner.clone())
    });
    let outcome_name = args.learner.unwrap_or_else(|| cfg.estimate.outcome_learner.clone());
    let opts = IrmOptions {
        k,
        propensity_learner: cfg.learners.resolve(&propensity_name)?,
        outcome_learner: cfg.learners.resolve(&outcome_name)?,
        clip_eps,
    };
    let report = estimate_irm(&ds, b, c, &opts, n_splits, seed)?;

    let resolved = ResolvedEstimateConfig {
        mode: "irm".into(),
        data: args.data.display().to_string(),
        k,
        n_splits,
        seed,
        clip_eps,
        learners: report.learner_ids.clone(),
        arms: Some([b, c]),
        treatments: vec![],
        interactions: vec![],
        outcome: cfg.outcome.clone(),
        regimen: cfg.regimen.clone(),
    };
    write_report_files(&args.out, &resolved, &report, start.elapsed().as_secs_f64())?;
    print_report_summary(&report);
    println!("report written to {}", args.out.join("report.json").display());
    Ok(())
}
