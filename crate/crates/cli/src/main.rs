//! `semimo` command-line front end.
//!
//! Every subcommand writes into `--out` (default `$SEMIMO_OUT_DIR`, else
//! `results/`): `manifest.json` first, then `config.cfg` (the effective
//! configuration in config-file form, so `--config out/config.cfg`
//! repeats the run), then the result files.

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semimo::config::{build_config, load_pairs, render_pairs, to_pairs};
use semimo::harness::{
    choose_convention, evaluate_conventions, reference_rows, run_end_to_end,
    run_equivalent_snr_table, run_estimation_sweep, with_workers, ExperimentConfig, MetricsRecord,
};
use semimo::report::{read_reference, write_calibration, write_csv, write_json, write_snr_table};
use semimo::{Error, Result};

use manifest::{now_unix_s, write_atomic, Calibrated, RunManifest};

#[derive(Parser)]
#[command(
    name = "semimo",
    version,
    about = "Importance-aware SU/MU-MIMO link simulator"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean equivalent SNR per subchannel.
    SnrTable(RunArgs),
    /// Weighted and unweighted feature MSE through the full link.
    EndToEnd(RunArgs),
    /// End-to-end metrics for every channel estimator.
    EstimationSweep(RunArgs),
    /// Pick the channel convention and averaging that best match a reference table.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "SEMIMO_OUT_DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

/// Experiment flags. Each one becomes a `key = value` pair applied after
/// the config file, so flags win.
#[derive(Args)]
struct ExperimentArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// su-4x4 | mu-16x4x4
    #[arg(long)]
    preset: Option<String>,
    /// su | mu
    #[arg(long)]
    mode: Option<String>,
    /// Transmit antennas.
    #[arg(long)]
    n: Option<String>,
    /// Receive antennas per user.
    #[arg(long)]
    m: Option<String>,
    /// Users.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated SNRs in dB; `inf` means noiseless.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// start:stop:step in dB, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    snr_range: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Select factor in [0, 1].
    #[arg(long)]
    mu: Option<String>,
    /// importance | random | unsorted
    #[arg(long)]
    policy: Option<String>,
    /// perfect | ls | mmse | refined
    #[arg(long)]
    estimator: Option<String>,
    /// unit | half | per-tx
    #[arg(long)]
    convention: Option<String>,
    /// db-domain | linear-domain
    #[arg(long)]
    averaging: Option<String>,
    /// Features per user.
    #[arg(long)]
    b: Option<String>,
    /// Reals per feature.
    #[arg(long)]
    d: Option<String>,
    /// exponential[:decay] | uniform | step[:fraction[:low]]
    #[arg(long)]
    importance: Option<String>,
    #[arg(long)]
    pilot_length: Option<String>,
    /// decomposed | full-matrix
    #[arg(long)]
    path: Option<String>,
    /// isolated | superposed
    #[arg(long)]
    non_target_rx: Option<String>,
}

impl ExperimentArgs {
    fn flag_pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("preset", &self.preset),
            ("mode", &self.mode),
            ("n", &self.n),
            ("m", &self.m),
            ("k", &self.k),
            ("snr", &self.snr),
            ("snr_range", &self.snr_range),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("mu", &self.mu),
            ("policy", &self.policy),
            ("estimator", &self.estimator),
            ("convention", &self.convention),
            ("averaging", &self.averaging),
            ("b", &self.b),
            ("d", &self.d),
            ("importance", &self.importance),
            ("pilot_length", &self.pilot_length),
            ("path", &self.path),
            ("non_target_rx", &self.non_target_rx),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Manifest of an earlier `calibrate` run; its convention and
    /// averaging are applied before the flags.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Reference CSV `n_tx,m_rx,snr_db,subchannel,value`; defaults to the
    /// built-in square-link table at -8 dB.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn manifest_for(
    command: &str,
    pairs: &[(String, String)],
    seed: u64,
    output: &OutputArgs,
) -> RunManifest {
    RunManifest {
        tool: "semimo".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: pairs.iter().cloned().collect::<BTreeMap<_, _>>(),
        seed,
        workers: output.workers,
        calibrated: None,
        reference: None,
        started_unix_s: now_unix_s(),
        finished_unix_s: None,
        outputs: Vec::new(),
    }
}

fn resolve_config(args: &RunArgs) -> Result<(ExperimentConfig, Option<Calibrated>)> {
    let mut pairs = match &args.experiment.config {
        Some(path) => load_pairs(path)?,
        None => Vec::new(),
    };
    let calibrated = match &args.calibration {
        Some(path) => {
            let m = manifest::RunManifest::read(path)?;
            let c = m.calibrated.ok_or_else(|| {
                Error::config(
                    "calibration",
                    format!("{} records no calibrated convention", path.display()),
                )
            })?;
            pairs.push(("convention".into(), c.convention.to_string()));
            pairs.push(("averaging".into(), c.averaging.to_string()));
            Some(c)
        }
        None => None,
    };
    pairs.extend(args.experiment.flag_pairs());
    Ok((build_config(&pairs)?, calibrated))
}

fn write_records(
    dir: &Path,
    format: Format,
    records: &[MetricsRecord],
    wide_table: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format != Format::Json {
        let p = dir.join("metrics.csv");
        write_atomic(&p, |t| write_csv(t, records))?;
        written.push(p);
        if wide_table {
            let p = dir.join("snr_table.csv");
            write_atomic(&p, |t| write_snr_table(t, records))?;
            written.push(p);
        }
    }
    if format != Format::Csv {
        let p = dir.join("metrics.json");
        write_atomic(&p, |t| write_json(t, records))?;
        written.push(p);
    }
    Ok(written)
}

fn run_experiment(command: &Command, args: &RunArgs) -> Result<Vec<PathBuf>> {
    let (cfg, calibrated) = resolve_config(args)?;
    let out = &args.output;
    prepare_dir(&out.out)?;
    let pairs = to_pairs(&cfg);
    let name = match command {
        Command::SnrTable(_) => "snr-table",
        Command::EndToEnd(_) => "end-to-end",
        Command::EstimationSweep(_) => "estimation-sweep",
        Command::Calibrate(_) => unreachable!("handled by run_calibrate"),
    };
    let mut m = manifest_for(name, &pairs, cfg.seed, out);
    m.calibrated = calibrated;
    let config_path = out.out.join("config.cfg");
    m.outputs = vec![config_path.clone()];
    m.write(&out.out)?;
    write_atomic(&config_path, |t| {
        std::fs::write(t, render_pairs(&pairs)).map_err(|source| Error::Io {
            path: t.to_path_buf(),
            source,
        })
    })?;

    let records = with_workers(out.workers, || match command {
        Command::SnrTable(_) => run_equivalent_snr_table(&cfg),
        Command::EndToEnd(_) => run_end_to_end(&cfg),
        _ => run_estimation_sweep(&cfg),
    })??;
    let wide = matches!(command, Command::SnrTable(_));
    m.outputs
        .extend(write_records(&out.out, out.format, &records, wide)?);
    m.finished_unix_s = Some(now_unix_s());
    let manifest_path = m.write(&out.out)?;
    let mut shown = vec![manifest_path];
    shown.extend(m.outputs);
    Ok(shown)
}

fn run_calibrate(args: &CalibrateArgs) -> Result<Vec<PathBuf>> {
    let reference = match &args.reference {
        Some(path) => read_reference(path)?,
        None => reference_rows(),
    };
    let out = &args.output;
    prepare_dir(&out.out)?;
    let pairs = vec![
        ("trials".to_string(), args.trials.to_string()),
        ("seed".to_string(), args.seed.to_string()),
    ];
    let mut m = manifest_for("calibrate", &pairs, args.seed, out);
    m.reference = args.reference.clone();
    m.write(&out.out)?;

    let candidates = with_workers(out.workers, || {
        evaluate_conventions(&reference, args.trials, args.seed)
    })??;
    let table = out.out.join("calibration.csv");
    write_atomic(&table, |t| write_calibration(t, &reference, &candidates))?;
    m.outputs.push(table);
    let chosen = choose_convention(&reference, &candidates);
    if let Ok(c) = &chosen {
        m.calibrated = Some(Calibrated {
            convention: c.convention,
            averaging: c.averaging,
            max_deviation_db: c.max_deviation,
        });
        println!("{}", c.report);
    }
    m.finished_unix_s = Some(now_unix_s());
    let manifest_path = m.write(&out.out)?;
    chosen?;
    let mut shown = vec![manifest_path];
    shown.extend(m.outputs);
    Ok(shown)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate(args) => run_calibrate(args),
        Command::SnrTable(args) | Command::EndToEnd(args) | Command::EstimationSweep(args) => {
            run_experiment(&cli.command, args)
        }
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
