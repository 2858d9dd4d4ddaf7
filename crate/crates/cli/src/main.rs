//! `aom`: pretraining, probing, ablations and verification checks.
//!
//! Exit codes: 0 success, 1 invalid input or runtime error, 2 a check ran but
//! did not pass.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use aom_core::data::{generate_split, save_band_stack, Split, SyntheticDatasetConfig};
use aom_core::eval::{
    band_ablation, checkpoint_id, encoding_ablation, export_channel_features, linear_probe_on, loss_ablation,
    patch_ablation, pi_resize_report, AblationReport, FeatureStage, ProbeConfig, ProbeData,
};
use aom_core::net::{load_checkpoint, save_checkpoint, AomModel, Checkpoint};
use aom_core::pretrain::{grad_check_config, TrainConfig, Trainer};

#[derive(Parser)]
#[command(
    name = "aom",
    version,
    about = "Multispectral pretraining, probing and verification checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain from a TrainConfig JSON and write a checkpoint.
    ///
    /// The step log CSV has columns: step,scale_recon_0..scale_recon_{n-1},
    /// recon_mean,align,total,lr,seed
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override `steps` from the config.
        #[arg(long)]
        steps: Option<u64>,
        /// Per-step loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Linear probe on frozen features of one band subset and patch size.
    ///
    /// CSV columns: axis,setting,seed,band_count,bands,patch_size,accuracy,
    /// train_accuracy,checkpoint_id,class_0..class_{K-1}
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated band indices; all bands if omitted.
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<usize>>,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One probe per band subset.
    ///
    /// The subsets file is a JSON array of index arrays, or one
    /// comma-separated subset per line. CSV columns as for `probe`.
    AblateBands {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        subsets: PathBuf,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One probe per patch size; footer `# spread=` is max minus min accuracy.
    AblatePatch {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain reconstruction-only and dual-objective models per seed and probe both.
    AblateLoss {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain channel-index and wavelength encoded models per seed and probe both.
    AblateEncoding {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distortion of PI vs bilinear kernel resizing vs a least-squares fit.
    ///
    /// CSV columns: batch,pi_distortion,bilinear_distortion,oracle_distortion
    /// (relative to the native response energy). Exits 2 if the check fails.
    CheckPiResize {
        #[arg(long)]
        pin: usize,
        #[arg(long)]
        pt: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Central-difference gradient check of the total loss in 64-bit mode.
    ///
    /// CSV columns: name,offset,analytic,numeric,rel_error. Exits 2 if the
    /// max relative error exceeds the threshold.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<usize>>,
        #[arg(long, default_value_t = 2)]
        images: usize,
        #[arg(long, default_value_t = 200)]
        params: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write labelled synthetic scenes as band-stack files plus labels.csv
    /// (columns: file,label).
    GenData {
        /// SyntheticDatasetConfig JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Pretrain)]
        split: SplitArg,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-channel N_H x N_W CSV heatmaps of token L2 norms for one scene.
    ExportFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        /// A band-stack file; the first probe-test scene if omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        patch: usize,
        #[arg(long, value_enum, default_value_t = StageArg::Encoder)]
        stage: StageArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Clone)]
struct ProbeArgs {
    /// ProbeConfig JSON; defaults to the checkpoint's pretraining data.
    #[arg(long)]
    probe_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Pretrain,
    ProbeTrain,
    ProbeTest,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Tokenizer,
    Encoder,
}

/// A check that ran to completion but failed.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<(Checkpoint, AomModel<f32>)> {
    let ckpt = load_checkpoint(path)?;
    let model = ckpt.to_model::<f32>()?;
    Ok((ckpt, model))
}

fn probe_config(args: &ProbeArgs, ckpt: &Checkpoint) -> Result<ProbeConfig> {
    let config = match &args.probe_config {
        Some(p) => read_json(p)?,
        None => {
            let data = match &ckpt.train {
                Some(v) => serde_json::from_value::<TrainConfig>(v.clone())?.data,
                None => SyntheticDatasetConfig::desk_default(),
            };
            ProbeConfig::with_data(data)
        }
    };
    config.validate()?;
    Ok(config)
}

fn parse_subsets(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .with_context(|| format!("bad band index {v:?}"))
                })
                .collect()
        })
        .collect()
}

fn merge(reports: Vec<AblationReport>) -> Option<AblationReport> {
    let mut it = reports.into_iter();
    let mut first = it.next()?;
    for r in it {
        first.rows.extend(r.rows);
    }
    Some(first)
}

fn per_seed<F>(seeds: &[u64], probe: &ProbeConfig, mut f: F) -> Result<AblationReport>
where
    F: FnMut(&ProbeData) -> aom_core::Result<AblationReport>,
{
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let mut reports = Vec::new();
    for &seed in seeds {
        reports.push(f(&ProbeData::generate(probe, seed)?)?);
    }
    let footer = reports.last().map(|r| r.footer.clone()).unwrap_or_default();
    let mut merged = merge(reports).expect("non-empty");
    merged.footer = footer;
    if seeds.len() > 1 && merged.footer.iter().any(|(k, _)| k == "spread") {
        merged.footer = vec![("spread".into(), format!("{:.6}", merged.spread()))];
    }
    Ok(merged)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain {
            config,
            out,
            steps,
            log,
        } => {
            let mut config = TrainConfig::load(&config)?;
            if let Some(s) = steps {
                config.steps = s;
            }
            let mut trainer = Trainer::<f32>::new(config.clone())?;
            let mut log_file = match &log {
                Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => None,
            };
            let metrics = trainer.run(config.steps, log_file.as_mut().map(|f| f as &mut dyn Write))?;
            save_checkpoint(&trainer.checkpoint()?, &out)?;
            if let Some(last) = metrics.last() {
                eprintln!("step {} total loss {:.6}", last.step, last.loss.total);
            }
            println!("{}", checkpoint_id(trainer.model()));
        }
        Command::Probe {
            ckpt,
            bands,
            patch,
            seed,
            probe,
            out,
        } => {
            let (c, model) = load_model(&ckpt)?;
            let pc = probe_config(&probe, &c)?;
            let data = ProbeData::generate(&pc, seed)?;
            let result = linear_probe_on(
                &model,
                &checkpoint_id(&model),
                &data,
                bands.as_deref(),
                patch,
                pc.fit_options(),
            )?;
            let report = AblationReport {
                axis: aom_core::eval::AblationAxis::Bands,
                rows: vec![aom_core::eval::AblationRow {
                    setting: "probe".into(),
                    result,
                }],
                footer: Vec::new(),
            };
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::AblateBands {
            ckpt,
            subsets,
            patch,
            seeds,
            probe,
            out,
        } => {
            let (c, model) = load_model(&ckpt)?;
            let pc = probe_config(&probe, &c)?;
            let subsets = parse_subsets(&subsets)?;
            if subsets.is_empty() {
                bail!("no band subsets given");
            }
            let report = per_seed(&seeds, &pc, |d| {
                band_ablation(&model, d, &subsets, patch, pc.fit_options())
            })?;
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::AblatePatch {
            ckpt,
            sizes,
            bands,
            seeds,
            probe,
            out,
        } => {
            let (c, model) = load_model(&ckpt)?;
            let pc = probe_config(&probe, &c)?;
            let report = per_seed(&seeds, &pc, |d| {
                patch_ablation(&model, d, &sizes, bands.as_deref(), pc.fit_options())
            })?;
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::AblateLoss {
            config,
            seeds,
            patch,
            probe,
            out,
        } => {
            let base = TrainConfig::load(&config)?;
            let pc = match &probe.probe_config {
                Some(p) => read_json(p)?,
                None => ProbeConfig::with_data(base.data.clone()),
            };
            let report = loss_ablation(&base, &pc, &seeds, None, patch)?;
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::AblateEncoding {
            config,
            seeds,
            patch,
            probe,
            out,
        } => {
            let base = TrainConfig::load(&config)?;
            let pc = match &probe.probe_config {
                Some(p) => read_json(p)?,
                None => ProbeConfig::with_data(base.data.clone()),
            };
            let report = encoding_ablation(&base, &pc, &seeds, None, patch)?;
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::CheckPiResize {
            pin,
            pt,
            trials,
            batches,
            seed,
            out,
        } => {
            let report = pi_resize_report(pin, pt, trials, batches, seed)?;
            emit(&report.to_csv(), out.as_deref())?;
            if !report.pass {
                return Err(CheckFailed(report.rule).into());
            }
        }
        Command::Gradcheck {
            config,
            bands,
            images,
            params,
            eps,
            threshold,
            out,
        } => {
            let config = TrainConfig::load(&config)?;
            let report = grad_check_config(&config, bands.as_deref(), images, params, eps)?;
            let mut csv = String::from("name,offset,analytic,numeric,rel_error\n");
            for e in &report.entries {
                csv.push_str(&format!(
                    "{},{},{:.12e},{:.12e},{:.6e}\n",
                    e.name, e.offset, e.analytic, e.numeric, e.rel_error
                ));
            }
            csv.push_str(&format!(
                "# eps={:e}\n# max_rel_error={:.6e}\n",
                report.eps, report.max_rel_error
            ));
            emit(&csv, out.as_deref())?;
            if !(report.max_rel_error <= threshold) {
                return Err(CheckFailed(format!(
                    "max relative error {:.3e} > {threshold:e}",
                    report.max_rel_error
                ))
                .into());
            }
        }
        Command::GenData {
            config,
            out,
            split,
            count,
            seed,
        } => {
            let config: SyntheticDatasetConfig = read_json(&config)?;
            let split = match split {
                SplitArg::Pretrain => Split::Pretrain,
                SplitArg::ProbeTrain => Split::ProbeTrain,
                SplitArg::ProbeTest => Split::ProbeTest,
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut labels = String::from("file,label\n");
            for (i, (stack, label)) in generate_split(&config, split, count, seed)?.into_iter().enumerate() {
                let name = format!("scene_{i:05}.aomb");
                save_band_stack(&stack, out.join(&name))?;
                labels.push_str(&format!("{name},{label}\n"));
            }
            fs::write(out.join("labels.csv"), labels)?;
        }
        Command::ExportFeatures {
            ckpt,
            input,
            patch,
            stage,
            out,
        } => {
            let (c, model) = load_model(&ckpt)?;
            let stack = match input {
                Some(p) => aom_core::data::load_band_stack(p)?,
                None => {
                    let pc = probe_config(&ProbeArgs { probe_config: None }, &c)?;
                    generate_split(&pc.data, Split::ProbeTest, 1, 0)?.remove(0).0
                }
            };
            let stage = match stage {
                StageArg::Tokenizer => FeatureStage::Tokenizer,
                StageArg::Encoder => FeatureStage::Encoder,
            };
            for p in export_channel_features(&model, &stack, patch, stage, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("aom: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("aom: {e:#}");
            ExitCode::from(1)
        }
    }
}
