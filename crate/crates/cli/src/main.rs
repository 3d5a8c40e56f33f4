use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kshape::dataio::SynthStyle;
use kshape::geomlayers::{DmlVariant, GtlVariant};
use kshape::model::Preset;

mod commands;
mod config;
mod gradcheck;
mod output;

use config::{parse_dml, parse_gtl, FlagOverrides, LayerChoice};

#[derive(Parser, Debug)]
#[command(name = "kshape", version, about = "Train and analyse skeleton-motion classifiers on Kendall pre-shape space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that builds or trains a model.
#[derive(Args, Debug, Clone)]
struct ModelFlags {
    /// JSON config file; keys are the model fields plus preset/data/out/folds/fold.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain preset supplying the defaults.
    #[arg(long)]
    preset: Option<Preset>,
    /// Transformation layer variant, or `none`.
    #[arg(long, value_parser = parse_gtl)]
    gtl: Option<LayerChoice<GtlVariant>>,
    /// Distortion layer variant, or `none`.
    #[arg(long, value_parser = parse_dml)]
    dml: Option<LayerChoice<DmlVariant>>,
    /// Frame whose tangent space hosts the log map.
    #[arg(long)]
    ref_index: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset manifest, or a directory holding `manifest.json`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides (value parsed as JSON when possible).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ModelFlags {
    fn overrides(&self) -> FlagOverrides {
        FlagOverrides {
            preset: self.preset,
            gtl: self.gtl.map(|c| c.0),
            dml: self.dml.map(|c| c.0),
            ref_index: self.ref_index,
            seed: self.seed,
            data: self.data.clone(),
            out: self.out.clone(),
            sets: self.sets.clone(),
        }
    }

    fn resolve(&self) -> Result<config::RunConfig> {
        config::resolve(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (manifest + one CSV per sequence).
    Synth {
        #[arg(long, default_value = "rehab")]
        style: SynthStyle,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        /// Nominal recording length; each subject's tempo stretches it.
        #[arg(long, default_value_t = 150)]
        frames: usize,
        #[arg(long, default_value_t = 12)]
        joints: usize,
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        /// Standard deviation of per-coordinate sensor noise.
        #[arg(long, default_value_t = 0.005)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train on the training folds, score the held-out fold.
    Train(ModelFlags),
    /// Score a saved model on a dataset.
    Eval {
        #[command(flatten)]
        flags: ModelFlags,
        /// Model manifest written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Optional reference scores (`index,score` CSV) to compare against.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Class whose probability is used as the model score.
        #[arg(long, default_value_t = 0)]
        score_class: usize,
    },
    /// Full transformation x distortion grid plus baseline rows.
    Ablate(ModelFlags),
    /// Frame-wise features vs transported displacements vs distortion layer.
    ComparePt(ModelFlags),
    /// Angles between the learned rotations of consecutive frames.
    Coherence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Projection distortion of one sequence, before and after a model's layers.
    Distortion {
        #[command(flatten)]
        flags: ModelFlags,
        /// Sequence index in the manifest.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Optional trained model whose geometric layers are applied.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Finite-difference checks of every layer and variant.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("KSHAPE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("KSHAPE_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

pub(crate) fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.json")
    } else {
        data.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Synth {
            style,
            classes,
            per_class,
            frames,
            joints,
            subjects,
            noise,
            seed,
            out,
        } => {
            let mut spec = kshape::dataio::SyntheticSpec::new(style, classes, per_class, frames, joints, seed);
            spec.noise_sd = noise;
            spec.n_subjects = subjects;
            commands::synth(&spec, &out)?;
        }
        Command::Train(flags) => commands::train(&flags.resolve()?)?,
        Command::Eval {
            flags,
            model,
            scores,
            score_class,
        } => commands::eval(&flags.resolve()?, &model, scores.as_deref(), score_class)?,
        Command::Ablate(flags) => commands::ablate(&flags.resolve()?)?,
        Command::ComparePt(flags) => commands::compare_pt(&flags.resolve()?)?,
        Command::Coherence { model, out } => commands::coherence(&model, &out)?,
        Command::Distortion { flags, index, model } => {
            commands::distortion(&flags.resolve()?, index, model.as_deref())?
        }
        Command::Gradcheck { seed, out } => return gradcheck::run(seed, &out),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
