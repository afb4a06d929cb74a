mod config;
mod failure;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankrel_core::corpus::{
    load_embeddings, load_mentions, IngestConfig, PreparedDataset, RelationSchema,
};
use rankrel_core::encoder::EncoderShape;
use rankrel_core::evaluator::{
    gold_facts, pr_curve, precision_summary, score_bags, DEFAULT_CUTOFFS,
};
use rankrel_core::numeric::mix_seed;
use rankrel_core::synth::{self, SynthConfig};
use rankrel_core::trainer::{
    grad_check, init_params, load_checkpoint, save_checkpoint, train_epoch, Checkpoint, EpochLog,
    GradCheckConfig, ModelDims, TrainConfig,
};
use rankrel_core::{LossConfig, LossVariant, SeededRng};

use config::{ConfigFile, Cutoffs, Switch};
use failure::Failure;

pub const DATASET_FILE: &str = "dataset.bin";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(
    name = "rankrel",
    version,
    about = "Ranking-based multi-label relation extraction"
)]
struct Cli {
    /// Flat key = value file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary and bags and cache the featurised dataset.
    Prepare(PrepareArgs),
    /// Train a model and write per-epoch checkpoints and an epoch log.
    Train(TrainArgs),
    /// Score the held-out split and write pr.csv and pn.txt.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
    /// Write the bundled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Relation list, one `name<TAB>id` per line.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    clip: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long)]
    variant: Option<LossVariant>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// on or off
    #[arg(long)]
    regularize: Option<Switch>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Prepared dataset file or the directory holding it.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    p_keep: Option<f64>,
    /// Pretrained word vectors in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// on or off: report the best F on the held-out split each epoch.
    #[arg(long)]
    validate: Option<Switch>,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    pos_dim: Option<usize>,
    #[arg(long)]
    kernels: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated P@N cut-offs.
    #[arg(long)]
    cutoffs: Option<Cutoffs>,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    bags: usize,
    #[arg(long, default_value_t = 1000)]
    test_bags: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
}

fn dataset_path(p: PathBuf) -> PathBuf {
    if p.is_dir() {
        p.join(DATASET_FILE)
    } else {
        p
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn cmd_prepare(cfg: &ConfigFile, a: PrepareArgs) -> Result<(), Failure> {
    let schema_path: PathBuf = cfg.require(a.schema, "schema")?;
    let train_path: PathBuf = cfg.require(a.train, "train")?;
    let test_path: Option<PathBuf> = cfg.pick(a.test, "test")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let defaults = IngestConfig::default();
    let ingest = IngestConfig {
        min_count: cfg.pick_or(a.min_count, "min_count", defaults.min_count)?,
        max_len: cfg.pick_or(a.max_len, "max_len", defaults.max_len)?,
        position_clip: cfg.pick_or(a.clip, "clip", defaults.position_clip)?,
    };
    let schema = RelationSchema::load(&schema_path)?;
    let train = load_mentions(&train_path, &schema, ingest.max_len)?;
    let test = test_path
        .map(|p| load_mentions(&p, &schema, ingest.max_len))
        .transpose()?;
    let ds = PreparedDataset::from_mentions(schema, &train, test.as_deref(), ingest);
    create_dir(&out)?;
    let path = out.join(DATASET_FILE);
    ds.save(&path)?;
    print!("{}", ds.train_stats);
    if let Some(s) = &ds.test_stats {
        println!();
        print!("{s}");
    }
    println!();
    println!("vocabulary {}", ds.vocab.len());
    println!("wrote {}", path.display());
    Ok(())
}

fn loss_config(cfg: &ConfigFile, a: &LossArgs) -> Result<LossConfig, Failure> {
    let d = LossConfig::default();
    let variant = cfg.pick_or(a.variant, "variant", d.variant)?;
    let lambda = cfg.pick(a.lambda, "lambda")?;
    let gamma = cfg.pick(a.gamma, "gamma")?;
    if variant != LossVariant::CostAtt && (lambda.is_some() || gamma.is_some()) {
        return Err(Failure::usage(
            "lambda and gamma apply only to the cost_att variant",
        ));
    }
    let loss = LossConfig {
        variant,
        lambda: lambda.unwrap_or(d.lambda),
        gamma: gamma.unwrap_or(d.gamma),
        regularize: cfg
            .pick_or(a.regularize, "regularize", Switch(d.regularize))?
            .0,
        rho: cfg.pick_or(None, "rho", d.rho)?,
        sigma_pos: cfg.pick_or(None, "sigma_pos", d.sigma_pos)?,
        sigma_neg: cfg.pick_or(None, "sigma_neg", d.sigma_neg)?,
        epsilon: cfg.pick_or(None, "epsilon", d.epsilon)?,
        eta: cfg.pick_or(None, "eta", d.eta)?,
    };
    loss.validate()?;
    Ok(loss)
}

fn cmd_train(cfg: &ConfigFile, a: TrainArgs) -> Result<(), Failure> {
    let data = dataset_path(cfg.require(a.data.clone(), "data")?);
    let out: PathBuf = cfg.require(a.out.clone(), "out")?;
    let d = TrainConfig::default();
    let train_cfg = TrainConfig {
        batch_size: cfg.pick_or(a.batch, "batch", d.batch_size)?,
        learning_rate: cfg.pick_or(a.lr, "lr", d.learning_rate)?,
        epochs: cfg.require(a.epochs, "epochs")?,
        seed: cfg.pick_or(a.seed, "seed", d.seed)?,
        p_keep: cfg.pick_or(a.p_keep, "p_keep", d.p_keep)?,
        loss: loss_config(cfg, &a.loss)?,
        shuffle: cfg.pick_or(None, "shuffle", Switch(d.shuffle))?.0,
    };
    train_cfg.validate()?;
    let validate = cfg.pick_or(a.validate, "validate", Switch(false))?.0;
    let embeddings: Option<PathBuf> = cfg.pick(a.embeddings, "embeddings")?;

    let ds = PreparedDataset::load(&data)?;
    if ds.train.is_empty() {
        return Err(Failure::data(format!(
            "{}: no training bags",
            data.display()
        )));
    }
    if validate && ds.test.is_empty() {
        return Err(Failure::usage(
            "validate is on but the dataset has no held-out split",
        ));
    }
    let pretrained = embeddings
        .map(|p| {
            let mut rng = SeededRng::new(mix_seed(train_cfg.seed, &[4]));
            load_embeddings(&p, &ds.vocab, &mut rng)
        })
        .transpose()?;
    let word_dim = match (&pretrained, cfg.pick(a.word_dim, "word_dim")?) {
        (Some(v), Some(w)) if v.cols() != w => {
            return Err(Failure::usage(format!(
                "word_dim {w} disagrees with {}-dimensional embeddings",
                v.cols()
            )))
        }
        (Some(v), _) => v.cols(),
        (None, w) => w.unwrap_or(50),
    };
    let dims = ModelDims {
        encoder: EncoderShape {
            word_dim,
            pos_dim: cfg.pick_or(a.pos_dim, "pos_dim", 5)?,
            kernels: cfg.pick_or(a.kernels, "kernels", 230)?,
            window: cfg.pick_or(a.window, "window", 3)?,
        },
        vocab_size: ds.vocab.len(),
        pos_rows: ds.position_featurizer().table_rows(),
        relations: ds.schema.len(),
        nr: ds.schema.nr(),
    };
    if dims.encoder.word_dim == 0 || dims.encoder.kernels == 0 || dims.encoder.window == 0 {
        return Err(Failure::usage(
            "word_dim, kernels and window must be positive",
        ));
    }
    let mut model = init_params(dims, train_cfg.seed, pretrained)?;
    let (vocab_hash, schema_hash) = (ds.vocab.hash(), ds.schema.hash());
    create_dir(&out)?;
    let mut log = EpochLog::new(
        BufWriter::new(File::create(out.join("epochs.csv"))?),
        validate,
    )?;
    let gold = gold_facts(&ds.test, ds.schema.nr());
    for epoch in 0..train_cfg.epochs {
        let mut report = train_epoch(&mut model, &ds.train, &train_cfg, epoch)?;
        if validate {
            let scored = score_bags(&ds.test, &model, train_cfg.loss.variant)?;
            report.val_f = Some(pr_curve(&scored.records, &gold)?.max_f_measure());
        }
        log.record(&report)?;
        log::info!(
            "epoch {} loss {:.6} ({:.1}s)",
            epoch + 1,
            report.mean_loss,
            report.wall_seconds
        );
        let ckpt = Checkpoint::from_model(&model, &vocab_hash, &schema_hash, train_cfg, epoch + 1);
        save_checkpoint(&out.join(format!("epoch-{:04}.ckpt", epoch + 1)), &ckpt)?;
    }
    let final_ckpt = Checkpoint::from_model(
        &model,
        &vocab_hash,
        &schema_hash,
        train_cfg,
        train_cfg.epochs,
    );
    let path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&path, &final_ckpt)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_eval(cfg: &ConfigFile, a: EvalArgs) -> Result<(), Failure> {
    let data = dataset_path(cfg.require(a.data, "data")?);
    let ckpt_path: PathBuf = cfg.require(a.checkpoint, "checkpoint")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let cutoffs = cfg
        .pick_or(a.cutoffs, "cutoffs", Cutoffs(DEFAULT_CUTOFFS.to_vec()))?
        .0;
    let ckpt = load_checkpoint(&ckpt_path)?;
    let ds = PreparedDataset::load(&data)?;
    ckpt.verify(&ds.vocab.hash(), &ds.schema.hash())?;
    if ds.test.is_empty() {
        return Err(Failure::data(format!(
            "{}: no held-out split",
            data.display()
        )));
    }
    let model = ckpt.model_f64();
    let scored = score_bags(&ds.test, &model, ckpt.config.loss.variant)?;
    let gold = gold_facts(&ds.test, ds.schema.nr());
    let curve = pr_curve(&scored.records, &gold)?;
    let summary = precision_summary(&scored.records, &gold, &cutoffs)?;
    create_dir(&out)?;
    curve.write_csv(BufWriter::new(File::create(out.join("pr.csv"))?))?;
    summary.write_txt(File::create(out.join("pn.txt"))?)?;
    summary.write_txt(std::io::stdout().lock())?;
    println!(
        "max F {:.4} over {} gold facts",
        curve.max_f_measure(),
        curve.gold
    );
    Ok(())
}

fn cmd_grad_check(cfg: &ConfigFile, a: GradCheckArgs) -> Result<(), Failure> {
    let d = GradCheckConfig::default();
    let gc = GradCheckConfig {
        trials: cfg.pick_or(a.trials, "trials", d.trials)?,
        seed: cfg.pick_or(a.seed, "seed", d.seed)?,
        ..d
    };
    if gc.trials == 0 {
        return Err(Failure::usage("trials must be positive"));
    }
    let report = grad_check(&gc);
    println!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::numeric(format!(
            "gradient check failed in: {}",
            report.failing_groups().join(", ")
        )))
    }
}

fn cmd_synth(cfg: &ConfigFile, a: SynthArgs) -> Result<(), Failure> {
    let out: PathBuf = cfg.require(a.out, "out")?;
    if a.bags == 0 || a.test_bags == 0 {
        return Err(Failure::usage("bag counts must be positive"));
    }
    let train = SynthConfig {
        bags: a.bags,
        seed: a.seed,
    };
    let test = SynthConfig {
        bags: a.test_bags,
        seed: a.seed + 1,
    };
    let files = synth::write_corpus(&out, &train, &test)?;
    print!("{}", synth::expected_stats("train", &train));
    println!();
    print!("{}", synth::expected_stats("test", &test));
    println!();
    for p in [&files.schema, &files.train, &files.test] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::GradCheck(a) => cmd_grad_check(&cfg, a),
        Command::Synth(a) => cmd_synth(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                failure::EXIT_USAGE
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
