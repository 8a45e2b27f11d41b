use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcfl_core::config::SPLIT_MANIFEST;
use fcfl_core::data::{
    read_split_manifest, synth_dataset, write_image_dir, write_split_manifest, LabeledDataset, LabeledImage, Split,
};
use fcfl_core::diagnostics::{gradient_suite, SUITE_OPS};
use fcfl_core::train::{ablate, evaluate, train, AblationKind, Checkpoint, ABLATION_EPOCHS};
use fcfl_core::{Error, GradCheckOptions, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "fcfl",
    version,
    about = "Train, evaluate and ablate the dual-scale cross-fusion classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and evaluate it on the test split.
    Train(RunArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train and evaluate every variant of one or all ablations.
    ///
    /// Each variant trains for 100 epochs unless --epochs is given.
    Ablate(AblateArgs),
    /// Write a synthetic three-class image tree.
    SynthData(SynthArgs),
    /// Finite-difference check of every differentiable op at float64.
    Gradcheck(GradArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with [model], [train] and [data] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image root laid out as <root>/<label>/<image>; synthetic data without it.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Seed for initialization, training and the split.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Start from the desk-scale preset instead of the full-size defaults.
    #[arg(long)]
    toy: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Split manifest to apply; defaults to the one next to the checkpoint.
    #[arg(long)]
    splits: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "all")]
    which: WhichArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 48)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random shapes per op.
    #[arg(long, default_value_t = 5)]
    cases: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    PatchSize,
    Nrca,
    Head,
    All,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let base = if self.toy {
            RunConfig::toy()
        } else {
            RunConfig::default()
        };
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, &base)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.reseed(s);
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let data = cfg.dataset(args.data.as_deref())?;
    create_dir(&args.out)?;
    write(&args.out.join("config.toml"), &cfg.to_toml()?)?;
    write_split_manifest(&data.images, args.out.join(SPLIT_MANIFEST))?;
    eprintln!(
        "training on {} images ({} train / {} val / {} test) for {} epochs",
        data.len(),
        data.count(Split::Train),
        data.count(Split::Val),
        data.count(Split::Test),
        cfg.train.epochs
    );
    let outcome = train(&cfg.model, &cfg.train, &data, Some(&args.out))?;
    println!("epoch\tlr\ttrain_loss\tval_acc");
    for l in &outcome.log {
        println!("{}", l.tsv_line());
    }
    if data.count(Split::Test) > 0 {
        let ckpt = outcome.best.as_ref().unwrap_or(&outcome.last);
        let report = evaluate(ckpt, &data, Split::Test)?;
        report.write(args.out.join("report"))?;
        println!(
            "test accuracy {:.4}, macro F1 {:.4}",
            report.accuracy, report.metrics.macro_avg.f1
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let mut cfg = args.run.config()?;
    cfg.model = ckpt.model_config.clone();
    let mut data = cfg.dataset(args.run.data.as_deref())?;
    let manifest = args.splits.clone().or_else(|| {
        args.checkpoint
            .parent()
            .map(|p| p.join(SPLIT_MANIFEST))
            .filter(|p| p.is_file())
    });
    if let Some(m) = manifest {
        data = LabeledDataset::with_manifest(data.images, &read_split_manifest(&m)?)?;
    }
    let report = evaluate(&ckpt, &data, args.split.into())?;
    report.write(&args.run.out)?;
    println!(
        "{} accuracy {:.4}, macro F1 {:.4}, macro AUC {}",
        Split::from(args.split),
        report.accuracy,
        report.metrics.macro_avg.f1,
        report
            .roc
            .macro_auc
            .map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"))
    );
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let mut cfg = args.run.config()?;
    cfg.train.epochs = args.run.epochs.unwrap_or(ABLATION_EPOCHS);
    let data = cfg.dataset(args.run.data.as_deref())?;
    let kinds = match args.which {
        WhichArg::PatchSize => vec![AblationKind::PatchSize],
        WhichArg::Nrca => vec![AblationKind::Nrca],
        WhichArg::Head => vec![AblationKind::Head],
        WhichArg::All => vec![AblationKind::PatchSize, AblationKind::Nrca, AblationKind::Head],
    };
    create_dir(&args.run.out)?;
    for kind in kinds {
        let table = ablate(&cfg.model, &cfg.train, kind, &data)?;
        let tsv = table.to_tsv();
        write(&args.run.out.join(format!("ablation_{kind}.tsv")), &tsv)?;
        write(&args.run.out.join(format!("ablation_{kind}.json")), &table.to_json()?)?;
        print!("{tsv}");
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let ds = synth_dataset(args.per_class, args.size, args.seed);
    // `<label>/<index>.png` so the tree reads back with the same labels
    let images: Vec<LabeledImage> = ds
        .images
        .into_iter()
        .enumerate()
        .map(|(i, im)| LabeledImage {
            source_id: format!("{}/{i:05}.png", im.label),
            ..im
        })
        .collect();
    write_image_dir(&images, &args.out)?;
    println!("wrote {} images to {}", images.len(), args.out.display());
    Ok(())
}

fn cmd_gradcheck(args: &GradArgs) -> Result<bool> {
    let results = gradient_suite(args.seed, args.cases, GradCheckOptions::default())?;
    let mut ok = true;
    for op in SUITE_OPS {
        let rs: Vec<_> = results.iter().filter(|r| r.op_name.starts_with(op)).collect();
        let worst = rs.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
        let pass = rs.iter().all(|r| r.pass);
        ok &= pass;
        println!(
            "{}\t{op}\t{} cases\tmax rel err {worst:.3e}",
            if pass { "ok" } else { "FAIL" },
            rs.len()
        );
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Ablate(a) => cmd_ablate(a).map(|_| true),
        Command::SynthData(a) => cmd_synth(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
