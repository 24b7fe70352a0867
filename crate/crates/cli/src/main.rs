//! `seqc` — synthesize, ingest, split, train and evaluate sequence
//! classification datasets and models.
//!
//! Exit codes: 0 success, 2 usage/configuration/format error, 3 numeric
//! abort (non-finite loss or gradients during training).

mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use config::RunConfigFile;
use seqc_core::data::{
    read_container, read_text_dataset, synth_generate, write_container, Dataset, SplitTag,
};
use seqc_core::error::{Error, Result};
use seqc_core::metrics::{emit_report, ReportFormat};
use seqc_core::model::{ArchKind, Model};
use seqc_core::rng;
use seqc_core::train::{evaluate_indices, load_checkpoint, save_checkpoint, train};

#[derive(Parser)]
#[command(name = "seqc", version, about = "Sequence classification engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic four-class dataset container.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Samples per class.
        #[arg(long)]
        per_class: usize,
        /// Samples per signal.
        #[arg(long, default_value_t = 15000)]
        length: usize,
        /// Nominal sample rate in Hz.
        #[arg(long, default_value_t = 5000.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingest a text dataset (one `label:v1,v2,...` record per line).
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated class names defining the label ids.
        #[arg(long, default_value = "Noise,Artifacts,Physiological,Pathological")]
        classes: String,
    },
    /// Assign a train/validation/test split inside a container.
    Split {
        #[arg(long)]
        data: PathBuf,
        /// Output path; rewrites the input container when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated fractions summing to 1.
        #[arg(long, default_value = "0.7,0.2,0.1")]
        fractions: String,
    },
    /// Train a model on a split container.
    Train {
        /// Run configuration file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset container (overrides the config file).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory (overrides the config file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Model kind: wavenet | tcn (overrides the config file).
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed_data: Option<u64>,
        #[arg(long)]
        seed_init: Option<u64>,
        #[arg(long)]
        seed_dropout: Option<u64>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on one split of a container.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train | val | test | all
        #[arg(long, default_value = "test")]
        split: String,
        /// table | structured
        #[arg(long, default_value = "table")]
        format: String,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Numeric(_) => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            per_class,
            length,
            rate,
            seed,
        } => cmd_synth(&out, per_class, length, rate, seed),
        Command::Ingest { input, out, classes } => cmd_ingest(&input, &out, &classes),
        Command::Split {
            data,
            out,
            seed,
            fractions,
        } => cmd_split(&data, out.as_deref(), seed, &fractions),
        Command::Train {
            config,
            data,
            out,
            model,
            seed_data,
            seed_init,
            seed_dropout,
            max_epochs,
        } => cmd_train(
            config.as_deref(),
            data.as_deref(),
            out.as_deref(),
            model.as_deref(),
            [seed_data, seed_init, seed_dropout],
            max_epochs,
        ),
        Command::Eval {
            checkpoint,
            data,
            split,
            format,
        } => cmd_eval(&checkpoint, &data, &split, &format),
    }
}

fn print_class_counts(ds: &Dataset) {
    for (name, count) in ds.class_names.iter().zip(ds.class_counts()) {
        println!("{name}: {count}");
    }
    println!("total: {} samples of length {}", ds.len(), ds.seq_len);
}

fn cmd_synth(out: &Path, per_class: usize, length: usize, rate: f64, seed: u64) -> Result<()> {
    let ds = synth_generate(per_class, length, rate, seed)?;
    write_container(&ds, out)?;
    print_class_counts(&ds);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_ingest(input: &Path, out: &Path, classes: &str) -> Result<()> {
    let names: Vec<String> = classes.split(',').map(|s| s.trim().to_string()).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(Error::Config("empty class name in --classes".into()));
    }
    let ds = read_text_dataset(input, &names)?;
    write_container(&ds, out)?;
    print_class_counts(&ds);
    println!("wrote {}", out.display());
    Ok(())
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad fraction '{p}'")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected three fractions, got {}",
            parts.len()
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn cmd_split(data: &Path, out: Option<&Path>, seed: u64, fractions: &str) -> Result<()> {
    let mut ds = read_container(data)?;
    ds.assign_split(parse_fractions(fractions)?, seed)?;
    let target = out.unwrap_or(data);
    write_container(&ds, target)?;
    let count = |t: SplitTag| {
        ds.split
            .as_ref()
            .map(|s| s.tags.iter().filter(|&&x| x == t).count())
            .unwrap_or(0)
    };
    println!(
        "train: {}  val: {}  test: {}",
        count(SplitTag::Train),
        count(SplitTag::Val),
        count(SplitTag::Test)
    );
    println!("wrote {}", target.display());
    Ok(())
}

fn cmd_train(
    config_path: Option<&Path>,
    data_flag: Option<&Path>,
    out_flag: Option<&Path>,
    model_flag: Option<&str>,
    seed_flags: [Option<u64>; 3],
    max_epochs_flag: Option<usize>,
) -> Result<()> {
    let file = match config_path {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    let data_path: PathBuf = data_flag
        .map(Path::to_path_buf)
        .or_else(|| file.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no dataset given (--data or config `data`)".into()))?;
    let out_dir: PathBuf = out_flag
        .map(Path::to_path_buf)
        .or_else(|| file.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("seqc-run"));
    let kind: ArchKind = match model_flag {
        Some(m) => m.parse()?,
        None => file.model_kind()?.unwrap_or(ArchKind::Wavenet),
    };

    let ds = read_container(&data_path)?;
    let arch = file.arch_config(kind, ds.seq_len)?;
    if arch.num_classes() != ds.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, container has {}",
            arch.num_classes(),
            ds.num_classes()
        )));
    }
    let mut tcfg = file.train_config(kind, &arch);
    if let Some(s) = seed_flags[0] {
        tcfg.seeds.data = s;
    }
    if let Some(s) = seed_flags[1] {
        tcfg.seeds.init = s;
    }
    if let Some(s) = seed_flags[2] {
        tcfg.seeds.dropout = s;
    }
    if let Some(e) = max_epochs_flag {
        tcfg.max_epochs = e;
    }

    std::fs::create_dir_all(&out_dir)?;
    let mut model = Model::<f32>::build(arch, &mut rng::stream(tcfg.seeds.init))?;
    println!(
        "training {kind} ({} parameters) on {} [{} samples]",
        model.params.param_count(),
        data_path.display(),
        ds.len()
    );

    let mut log = String::new();
    let outcome = train(&mut model, &ds, &tcfg, &mut |line| {
        println!("{line}");
        log.push_str(line);
        log.push('\n');
    })?;

    std::fs::write(out_dir.join("train_log.txt"), &log)?;
    std::fs::write(out_dir.join("batch_audit.txt"), outcome.audit.render())?;
    let ckpt = out_dir.join("best.ckpt");
    save_checkpoint(
        &outcome.best.model,
        &ckpt,
        Some(outcome.best.macro_f1),
        Some(outcome.best.epoch),
    )?;
    println!(
        "best epoch {} (macro-F1 {:.4}); checkpoint {}",
        outcome.best.epoch,
        outcome.best.macro_f1,
        ckpt.display()
    );
    if outcome.stopped_early {
        println!("stopped early after {} epochs", outcome.records.len());
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, split: &str, format: &str) -> Result<()> {
    let format = match format {
        "table" => ReportFormat::Table,
        "structured" => ReportFormat::Structured,
        other => return Err(Error::Config(format!("unknown format '{other}'"))),
    };
    let (model, meta) = load_checkpoint(checkpoint)?;
    let ds = read_container(data)?;
    if model.config.num_classes() != ds.num_classes() {
        return Err(Error::Config(format!(
            "checkpoint ({}) has {} classes, container has {}",
            meta.architecture,
            model.config.num_classes(),
            ds.num_classes()
        )));
    }
    let indices: Vec<usize> = if split == "all" {
        (0..ds.len()).collect()
    } else {
        ds.split_indices(split.parse()?)?
    };
    let eval = evaluate_indices(&model, &ds, &indices, None, 32)?;
    print!("{}", eval.confusion.render(&ds.class_names));
    print!("{}", emit_report(&eval.report, format));
    Ok(())
}
