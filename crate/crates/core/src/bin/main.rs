use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use innovguard::compression::{
    compress_pipeline, decompress_pipeline, interior_mse, train_subband_models, CompressedBlob,
    SubbandPlan,
};
use innovguard::harness::{
    emit_plotdata, emit_report, run_experiment, train_relay_models, ExperimentConfig, Method,
};
use innovguard::ingest::read_waveform_csv;
use innovguard::innovation::model::{estimate_ar_model_with, ArEstimator, ArInnovationModel};
use innovguard::isfd::run_isfd_on_waveform;
use innovguard::sim::{simulate_scenario, write_scenario_csv};
use innovguard::{Error, Result, WaveformSeries};

#[derive(Parser)]
#[command(name = "innovguard", version, about = "Innovation-based fault detection toolkit", propagate_version = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config with `[experiment]` and `[compression]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo runs (overrides the config).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one case of the scenario suite and write a CSV per relay.
    Simulate {
        /// Fault case name; no fault when omitted.
        #[arg(long)]
        case: Option<String>,
    },
    /// Fit whitening models, per relay from simulation or from one CSV.
    Train {
        /// Single CSV to fit; simulates every relay when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// CSV column holding the current samples.
        #[arg(long, default_value = "current_a")]
        column: String,
    },
    /// Calibrate the overcurrent baselines to the target FPR.
    Calibrate,
    /// Run ISFD on a recorded waveform from a given start time.
    Detect {
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Input file.
        #[arg(long)]
        input: PathBuf,
        /// CSV column holding the current samples.
        #[arg(long, default_value = "current_a")]
        column: String,
        /// Test origin in seconds; defaults to the first instant with enough history.
        #[arg(long)]
        start: Option<f64>,
    },
    /// Monte-Carlo evaluation of every method on the scenario suite.
    Evaluate,
    /// Compress a waveform CSV into a subband blob.
    Compress {
        /// Input file.
        #[arg(long)]
        input: PathBuf,
        /// CSV column holding the current samples.
        #[arg(long, default_value = "current_a")]
        column: String,
        /// Target MSE as a fraction of signal power (overrides the config).
        #[arg(long)]
        relative_distortion: Option<f64>,
    },
    /// Reconstruct a waveform CSV from a blob.
    Decompress {
        /// Input file.
        #[arg(long)]
        input: PathBuf,
        /// Original CSV; when given the reconstruction MSE is reported.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// CSV column holding the current samples.
        #[arg(long, default_value = "current_a")]
        column: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompressionSettings {
    harmonics: usize,
    relative_distortion: f64,
    ar_order: usize,
}

impl Default for CompressionSettings {
    fn default() -> Self {
        Self { harmonics: 5, relative_distortion: 0.01, ar_order: 4 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    experiment: ExperimentConfig,
    compression: CompressionSettings,
}

fn load_config(common: &Common) -> Result<FileConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut cfg: FileConfig = toml::from_str(&text)?;
            if let (Some(s), Some(dir)) = (&cfg.experiment.scenario, path.parent()) {
                if s.is_relative() {
                    cfg.experiment.scenario = Some(dir.join(s));
                }
            }
            cfg
        }
        None => FileConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.experiment.master_seed = s;
    }
    if let Some(r) = common.runs {
        cfg.experiment.n_runs = r;
    }
    if let Some(o) = &common.out {
        cfg.experiment.output_dir = o.clone();
    }
    cfg.experiment.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_series(path: &Path, column: &str) -> Result<WaveformSeries> {
    Ok(read_waveform_csv(path, "time_s", column)?.series)
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    match cli.command {
        Command::Simulate { case } => {
            let cfg = load_config(&common)?;
            let suite = cfg.experiment.suite()?;
            let seed = cfg.experiment.master_seed;
            let scn = match &case {
                Some(c) => suite.scenario(c, seed)?,
                None => suite.no_fault(seed),
            };
            let waves = simulate_scenario(&scn)?;
            let dir = &cfg.experiment.output_dir;
            write_scenario_csv(dir, &waves)?;
            std::fs::write(dir.join("scenario.toml"), scn.to_toml_string()?)
                .map_err(|e| Error::Io { path: dir.join("scenario.toml"), source: e })?;
            emit(&format!("wrote {} relays to {}", waves.len(), dir.display()));
        }
        Command::Train { input, column } => {
            let cfg = load_config(&common)?;
            let exp = &cfg.experiment;
            match input {
                Some(path) => {
                    let x = read_series(&path, &column)?;
                    let model = estimate_ar_model_with(&x, exp.ar_order, None, ArEstimator::Burg)?;
                    let out = common.out.unwrap_or_else(|| PathBuf::from("model.json"));
                    model.save(&out)?;
                    emit(&format!("wrote {}", out.display()));
                }
                None => {
                    let suite = exp.suite()?;
                    for (name, model) in train_relay_models(&suite, exp)? {
                        let out = exp.output_dir.join(format!("model_{name}.json"));
                        if let Some(d) = out.parent() {
                            std::fs::create_dir_all(d).map_err(|e| Error::Io { path: d.into(), source: e })?;
                        }
                        model.save(&out)?;
                        emit(&format!("wrote {}", out.display()));
                    }
                }
            }
        }
        Command::Calibrate => {
            let mut cfg = load_config(&common)?;
            cfg.experiment.methods = vec![Method::Conventional, Method::Aocr];
            let e = run_experiment(&cfg.experiment)?;
            let out = cfg.experiment.output_dir.join("calibration.json");
            write_json(&out, &e.report.calibration)?;
            emit(&format!("wrote {}", out.display()));
        }
        Command::Detect { model, input, column, start } => {
            let cfg = load_config(&common)?;
            let model = ArInnovationModel::load(&model)?;
            let x = read_series(&input, &column)?;
            let t = start.unwrap_or_else(|| x.time_at(model.warmup()));
            let outcome = run_isfd_on_waveform(&model, &x, t, &cfg.experiment.isfd, x.sample_rate())?;
            let text = serde_json::to_string_pretty(&outcome)?;
            match &common.out {
                Some(p) => write_json(p, &outcome)?,
                None => emit(&text),
            }
        }
        Command::Evaluate => {
            let cfg = load_config(&common)?;
            let e = run_experiment(&cfg.experiment)?;
            let dir = &cfg.experiment.output_dir;
            emit_report(&e.report, dir)?;
            emit_plotdata(&e.artifacts, &cfg.experiment.methods, dir)?;
            emit(&format!("wrote report for {} runs to {}", e.report.completed_runs, dir.display()));
        }
        Command::Compress { input, column, relative_distortion } => {
            let cfg = load_config(&common)?;
            let c = &cfg.compression;
            let x = read_series(&input, &column)?;
            let plan = SubbandPlan::for_rate(cfg.experiment_f0(), x.sample_rate(), c.harmonics);
            let models = train_subband_models(&x, &plan, c.ar_order)?;
            let d = relative_distortion.unwrap_or(c.relative_distortion) * x.power();
            let blob = compress_pipeline(&x, &plan, d, &models)?;
            let bytes = blob.to_bytes();
            let back = decompress_pipeline(&blob)?;
            let mse = interior_mse(x.samples(), back.samples(), &plan)?;
            let out = common.out.unwrap_or_else(|| input.with_extension("cpw"));
            std::fs::write(&out, &bytes).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let summary = serde_json::json!({
                "blob": out,
                "bytes": bytes.len(),
                "d_target": d,
                "mse": mse,
                "mse_over_target": mse / d,
                "bits_per_sample": 8.0 * bytes.len() as f64 / x.len() as f64,
            });
            emit(&serde_json::to_string_pretty(&summary)?);
        }
        Command::Decompress { input, reference, column } => {
            let bytes = std::fs::read(&input).map_err(|e| Error::Io { path: input.clone(), source: e })?;
            let blob = CompressedBlob::from_bytes(&bytes)?;
            let y = decompress_pipeline(&blob)?;
            let out = common.out.unwrap_or_else(|| input.with_extension("csv"));
            y.write_csv(&out)?;
            let mut summary = serde_json::json!({ "csv": out, "samples": y.len(), "d_target": blob.header.d_target });
            if let Some(r) = reference {
                let x = read_series(&r, &column)?;
                let mse = interior_mse(x.samples(), y.samples(), &blob.header.plan)?;
                summary["mse"] = mse.into();
                summary["mse_over_target"] = (mse / blob.header.d_target).into();
            }
            emit(&serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

impl FileConfig {
    fn experiment_f0(&self) -> f64 {
        self.experiment
            .suite()
            .map(|s| s.feeder.fundamental_freq)
            .unwrap_or(60.0)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
