use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ghzcs::circuit::{attach_flag_checks, build_ghz_tree, circuit_from_tree, PrepTree};
use ghzcs::coverage::greedy_flag_placement;
use ghzcs::experiment::{
    accuracy_sweep, execute_run, flag_sweep, qem_sweep, report_for, success_sweep, Backend, ExperimentConfig,
    Mitigations, RunOutput, RunSpec, SampleRule, Sizes, ACCURACY_SCHEMA, ACCURACY_SUMMARY_SCHEMA, FLAG_SCHEMA,
    FLAG_SUMMARY_SCHEMA, QEM_SCHEMA, QEM_SUMMARY_SCHEMA, SUCCESS_SCHEMA,
};
use ghzcs::fidelity::{bootstrap_ci, Pipeline};
use ghzcs::io::{parity_samples_from_csv, parity_samples_to_csv, read_file, write_csv, write_file};
use ghzcs::mitigate::ConfusionModel;
use ghzcs::recover::{default_n_max, recover_coherence, RecoveryConfig};
use ghzcs::simulate::{CountsTable, ParitySample};
use ghzcs::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ghzcs", version, about = "GHZ fidelity estimation with compressed sensing")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a preparation circuit with greedily placed flags.
    Build(BuildArgs),
    /// Sample angles, simulate, post-select and estimate the fidelity.
    Run(RunArgs),
    /// Recover coherence from a parity-sample CSV.
    Recover(RecoverArgs),
    /// Fidelity report from parity samples and Z-basis counts.
    Fidelity(FidelityArgs),
    /// Run a parameter sweep.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeKind {
    /// Layered doubling tree of minimal depth.
    Ghz,
    /// Perfect binary tree; `n` must be 2^L − 1.
    Perfect,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    flags: usize,
    #[arg(long, value_enum, default_value = "ghz")]
    tree: TreeKind,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Options shared by `run` and `experiment`; each overrides the config file.
#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GHZ size, or a comma list for sweeps.
    #[arg(long)]
    n: Option<String>,
    /// Flag count, or a comma list for sweeps.
    #[arg(long)]
    flags: Option<String>,
    #[arg(long)]
    shots: Option<u64>,
    /// Explicit count or `5lnN`.
    #[arg(long)]
    m_samples: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend: Option<String>,
    /// `none`, `rem`, `dd` or `rem+dd`.
    #[arg(long)]
    mitigation: Option<String>,
    #[arg(long)]
    p1q: Option<f64>,
    #[arg(long)]
    p2q: Option<f64>,
    #[arg(long)]
    pro: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phase_offset: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Bootstrap resamples (0 disables).
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RecoverArgs {
    /// Parity-sample CSV.
    samples: PathBuf,
    #[arg(long)]
    n_max: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha_ratio: f64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FidelityArgs {
    /// Parity-sample CSV.
    #[arg(long)]
    samples: PathBuf,
    /// Z-basis counts JSON.
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    n_max: Option<usize>,
    /// Symmetric readout flip probability for REM.
    #[arg(long)]
    rem: Option<f64>,
    #[arg(long, default_value_t = 0)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)]
enum SweepKind {
    AccuracySweep,
    SuccessSweep,
    FlagSweep,
    QemSweep,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    kind: SweepKind,
    #[command(flatten)]
    config: ConfigArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceLimit(_) => 3,
        Error::EmptyPostselection { .. } => 4,
        Error::DegenerateAngles { .. } => 5,
        Error::Io { .. } | Error::EmptyInput(_) | Error::MalformedCircuit(_) | Error::AlreadyMeasured => 1,
        _ => 2,
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::InvalidConfig(format!("expected a count, got {p:?}"))))
        .collect()
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json(&read_file(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = &self.n {
            let sizes = parse_list(n)?;
            cfg.n = if sizes.len() == 1 { Sizes::One(sizes[0]) } else { Sizes::Many(sizes) };
        }
        if let Some(k) = &self.flags {
            cfg.flags_k = parse_list(k)?;
        }
        if let Some(s) = self.shots {
            cfg.shots = s;
        }
        if let Some(m) = &self.m_samples {
            cfg.m_samples = SampleRule::parse(m)?;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = &self.backend {
            cfg.backend = match b.as_str() {
                "trajectory" => Backend::Trajectory,
                "emulator" => Backend::Emulator,
                other => return Err(Error::InvalidConfig(format!("unknown backend {other:?}"))),
            };
        }
        if let Some(m) = &self.mitigation {
            cfg.mitigation = Mitigations::parse(m)?.kinds();
        }
        if let Some(p) = self.p1q {
            cfg.noise.p_1q = p;
        }
        if let Some(p) = self.p2q {
            cfg.noise.p_2q = p;
        }
        if let Some(p) = self.pro {
            cfg.noise.p_ro = p;
        }
        if let Some(t) = self.phase_offset {
            cfg.noise.phase_offset = t;
        }
        if self.n_max.is_some() {
            cfg.n_max = self.n_max;
        }
        if let Some(r) = self.resamples {
            cfg.resamples = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_build(args: &BuildArgs) -> Result<()> {
    let (circuit, tree) = match args.tree {
        TreeKind::Ghz => build_ghz_tree(args.n)?,
        TreeKind::Perfect => {
            let levels = (args.n + 1).trailing_zeros();
            if args.n < 3 || (args.n + 1).count_ones() != 1 {
                return Err(Error::InvalidSize(format!("a perfect binary tree needs 2^L - 1 qubits, got {}", args.n)));
            }
            circuit_from_tree(&PrepTree::perfect_binary(levels)?)?
        }
    };
    let plan = greedy_flag_placement(&tree, args.flags);
    if plan.pairs.len() < args.flags {
        return Err(Error::InvalidConfig(format!(
            "only {} flags add coverage on {} qubits, {} requested",
            plan.pairs.len(),
            args.n,
            args.flags
        )));
    }
    let flagged = attach_flag_checks(&circuit, &tree, &plan.pairs)?;
    write_file(&args.out_dir.join("circuit.json"), &(flagged.to_json() + "\n"))?;
    write_file(&args.out_dir.join("plan.json"), &(plan.to_json() + "\n"))?;

    println!("{:<4} {:<10} {:>6} {:>9} {:>9}", "flag", "pair", "gain", "covered", "ratio");
    let mut covered = 0;
    for (i, (&(a, b), &gain)) in plan.pairs.iter().zip(&plan.marginal_gains).enumerate() {
        covered += gain;
        let pair = format!("({a}, {b})");
        let ratio = 100.0 * covered as f64 / tree.n() as f64;
        println!("{:<4} {pair:<10} {gain:>6} {covered:>5}/{:<3} {ratio:>8.2}%", i + 1, tree.n());
    }
    println!("total coverage {}/{} = {:.2}%", plan.covered_count(), tree.n(), 100.0 * plan.total_ratio);
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a ExperimentConfig,
    spec: &'a RunSpec,
    plan: &'a ghzcs::coverage::FlagPlan,
    gate_counts: &'a ghzcs::circuit::GateCounts,
    retained_fraction: f64,
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let spec = RunSpec::from_config(&cfg)?;
    let out_dir = &args.config.out_dir;
    let output: RunOutput = execute_run(&spec)?;
    write_file(&out_dir.join("samples.csv"), &parity_samples_to_csv(&output.samples)?)?;
    let record = RunRecord {
        config: &cfg,
        spec: &spec,
        plan: &output.plan,
        gate_counts: &output.gate_counts,
        retained_fraction: output.retained_fraction,
    };
    write_file(&out_dir.join("run.json"), &to_json(&record))?;

    let pipeline = cfg.pipeline(spec.n, spec.mitigations)?;
    let samples = match &output.population_counts {
        Some(counts) => pipeline.parities(&output.samples, counts.bit_layout.data.len())?,
        None => pipeline.parities(&output.samples, spec.n)?,
    };
    let recovery = recover_coherence(&samples, pipeline.n_max, &pipeline.recovery)?;
    write_file(&out_dir.join("recovery.json"), &(recovery.to_json() + "\n"))?;

    println!("N = {}, k = {}, M = {}, backend {:?}", spec.n, spec.k, spec.m_samples, spec.backend);
    println!("retained fraction {:.4}", output.retained_fraction);
    println!("n_rec = {}, C = {:.6}, theta = {:.6}", recovery.n_rec, recovery.coherence, recovery.theta);
    if let Some(counts) = &output.population_counts {
        write_file(&out_dir.join("population.json"), &(counts.to_json() + "\n"))?;
        let report = report_for(&output, &pipeline, cfg.resamples)?;
        write_file(&out_dir.join("report.json"), &(report.to_json() + "\n"))?;
        println!(
            "P = {:.6}, F_std = {:.6}, F_rot = {:.6}, GME certified: {}",
            report.population, report.f_standard, report.f_rotated, report.gme_certified
        );
    }
    Ok(())
}

fn cmd_recover(args: &RecoverArgs) -> Result<()> {
    let samples: Vec<ParitySample> = parity_samples_from_csv(&read_file(&args.samples)?)?;
    let config = RecoveryConfig { alpha_ratio: args.alpha_ratio, ..Default::default() };
    let result = recover_coherence(&samples, args.n_max, &config)?;
    emit(args.out.as_deref(), &(result.to_json() + "\n"))
}

fn cmd_fidelity(args: &FidelityArgs) -> Result<()> {
    let samples: Vec<ParitySample> = parity_samples_from_csv(&read_file(&args.samples)?)?;
    let counts = CountsTable::from_json(&read_file(&args.population)?)?;
    let n = counts.bit_layout.data.len();
    let pipeline = Pipeline {
        recovery: RecoveryConfig::default(),
        n_max: args.n_max.unwrap_or_else(|| default_n_max(n)),
        readout: args.rem.map(ConfusionModel::symmetric).transpose()?,
    };
    let mut report = pipeline.run(&samples, &counts)?;
    if args.resamples > 0 {
        report = report.with_intervals(&bootstrap_ci(&samples, &counts, args.resamples, args.seed, &pipeline)?);
    }
    emit(args.out.as_deref(), &(report.to_json() + "\n"))
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let dir = &args.config.out_dir;
    let (name, rows) = match args.kind {
        SweepKind::AccuracySweep => {
            let (rows, summary) = accuracy_sweep(&cfg)?;
            write_file(&dir.join("accuracy_sweep_summary.csv"), &write_csv(ACCURACY_SUMMARY_SCHEMA, &summary)?)?;
            ("accuracy_sweep", write_csv(ACCURACY_SCHEMA, &rows)?)
        }
        SweepKind::SuccessSweep => ("success_sweep", write_csv(SUCCESS_SCHEMA, &success_sweep(&cfg)?)?),
        SweepKind::FlagSweep => {
            let (rows, summary) = flag_sweep(&cfg)?;
            write_file(&dir.join("flag_sweep_summary.csv"), &write_csv(FLAG_SUMMARY_SCHEMA, &summary)?)?;
            ("flag_sweep", write_csv(FLAG_SCHEMA, &rows)?)
        }
        SweepKind::QemSweep => {
            let (rows, summary) = qem_sweep(&cfg)?;
            write_file(&dir.join("qem_sweep_summary.csv"), &write_csv(QEM_SUMMARY_SCHEMA, &summary)?)?;
            ("qem_sweep", write_csv(QEM_SCHEMA, &rows)?)
        }
    };
    let path = dir.join(format!("{name}.csv"));
    write_file(&path, &rows)?;
    write_file(&dir.join(format!("{name}_config.json")), &(cfg.to_json() + "\n"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Run(a) => cmd_run(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Fidelity(a) => cmd_fidelity(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidProbability("x".into())), 2);
        assert_eq!(exit_code(&Error::ResourceLimit("x".into())), 3);
        assert_eq!(exit_code(&Error::EmptyPostselection { total: 10 }), 4);
        assert_eq!(exit_code(&Error::DegenerateAngles { frequency: 3, condition: 1e9 }), 5);
        let io = Error::Io { path: "a".into(), source: std::io::Error::other("x") };
        assert_eq!(exit_code(&io), 1);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("5, 10,20").unwrap(), [5, 10, 20]);
        assert!(parse_list("5,x").is_err());
    }
}
