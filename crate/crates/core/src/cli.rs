//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use plantar_autodiff::GradCheck;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{
    binfmt::write_atomic, generate_synthetic_dataset, load_checkpoint, load_dataset, load_raw_trial, save_checkpoint,
    save_dataset, DatasetContainer, SynthConfig,
};
use crate::model::{ModelConfig, Variant};
use crate::preprocess::{process_trial, FootSide, PreprocessConfig, CHANNEL_LABELS};
use crate::priors::{build_priors, PartitionOptions, REGION_NAMES};
use crate::train::{
    compute_metrics, cross_validate, gradcheck_variant, predict_all, stack_targets, validation_split, Aggregation,
    ConstantPredictor, CvOptions, FoldMode, FoldModel, MetricsOptions, NetworkModel, Normalizer, TrainConfig, Trainer,
};

#[derive(Debug, Parser)]
#[command(name = "plantar-grf", version, about = "Ground reaction forces and moments from plantar pressure")]
struct Cli {
    /// TOML file with [model], [train], [synth], [preprocess] and [cv] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Raw delimited-text trials to a stance container.
    Preprocess(PreprocessArgs),
    /// Partition map and temporal prior from a container.
    Priors(PriorsArgs),
    /// Synthetic walking dataset.
    Synth(SynthArgs),
    /// Train one model with an internal validation split.
    Train(TrainArgs),
    /// k-fold cross-validation.
    Eval(EvalArgs),
    /// Predictions of a checkpoint on a container.
    Predict(PredictArgs),
    /// Finite-difference check of the training loss gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Pressure table, one row per frame (repeat once per trial).
    #[arg(long, required = true)]
    pressure: Vec<PathBuf>,
    /// Force-plate table, six columns (one per trial).
    #[arg(long, required = true)]
    plate: Vec<PathBuf>,
    /// Trial metadata TOML (one per trial).
    #[arg(long, required = true)]
    meta: Vec<PathBuf>,
    #[arg(long)]
    stance_len: Option<usize>,
    #[arg(long)]
    cutoff_hz: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PriorsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory for partition.txt, temporal_prior.csv and mean_map.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    foot_side: Option<FootSide>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    grid_h: Option<usize>,
    #[arg(long)]
    grid_w: Option<usize>,
    #[arg(long)]
    stance_len: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Include a too-short contact per subject.
    #[arg(long)]
    adversarial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Clone)]
struct ModelFlags {
    #[arg(long)]
    variant: Option<Variant>,
    /// desk, table2 or table3; grid and stance length always follow the data.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    min_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight of the temporal-prior term.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    /// Continue the run stored in this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Fraction of samples held out for validation.
    #[arg(long, default_value_t = 0.15)]
    val_fraction: f64,
    /// Per-epoch history as JSON lines.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Take model and training settings from this checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    mode: Option<FoldMode>,
    /// Evaluate a constant predictor (zero or mean) instead of a network.
    #[arg(long)]
    constant: Option<String>,
    #[arg(long)]
    normalizer: Option<String>,
    #[arg(long)]
    per_step: bool,
    /// Full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// CSV with one row per (sample, frame).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Omit to check every variant.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Report plain central differences only, without extrapolating tiny gradients.
    #[arg(long)]
    no_refine: bool,
}

/// Configuration file contents: each table overrides its defaults.
#[derive(Debug, Default)]
struct FileConfig {
    root: toml::Table,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path)?;
        let root: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(FileConfig { root })
    }

    /// `base` with the keys of table `[name]` replaced.
    fn overlay<T: Serialize + DeserializeOwned>(&self, name: &str, base: T) -> Result<T> {
        let Some(section) = self.root.get(name) else { return Ok(base) };
        let section = section
            .as_table()
            .ok_or_else(|| Error::Config(format!("[{name}] must be a table")))?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in section {
            if !merged.contains_key(k) {
                return Err(Error::Config(format!("unknown key `{k}` in [{name}]")));
            }
            merged.insert(k.clone(), v.clone());
        }
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(format!("[{name}]: {e}")))
    }
}

fn resolve_model(files: &FileConfig, flags: &ModelFlags, data: &DatasetContainer) -> Result<ModelConfig> {
    let variant = flags.variant.unwrap_or(Variant::Dprgnet);
    let preset = flags.preset.as_deref().unwrap_or("desk");
    let mut cfg = files.overlay("model", ModelConfig::preset(preset, variant)?)?;
    if let Some(v) = flags.variant {
        cfg.variant = v;
    }
    let h = &data.header;
    cfg.grid_h = h.grid_h;
    cfg.grid_w = h.grid_w;
    cfg.stance_len = h.stance_len;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_train(files: &FileConfig, flags: &ModelFlags) -> Result<TrainConfig> {
    let mut cfg = files.overlay("train", TrainConfig::default())?;
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.base_lr, flags.lr);
    set(&mut cfg.min_lr, flags.min_lr);
    set(&mut cfg.prior_coeff, flags.beta);
    if let Some(v) = flags.epochs {
        cfg.max_epochs = v;
        cfg.patience = cfg.patience.min(v);
    }
    if let Some(v) = flags.patience {
        cfg.patience = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_preprocess(files: &FileConfig, a: &PreprocessArgs) -> Result<()> {
    if a.pressure.len() != a.plate.len() || a.plate.len() != a.meta.len() {
        return Err(Error::Config("--pressure, --plate and --meta must be given once per trial".into()));
    }
    let mut cfg = files.overlay("preprocess", PreprocessConfig::default())?;
    if let Some(l) = a.stance_len {
        cfg.stance_len = l;
    }
    if let Some(c) = a.cutoff_hz {
        cfg.cutoff_hz = c;
    }
    let mut samples = Vec::new();
    let mut subjects: Vec<crate::preprocess::SubjectMeta> = Vec::new();
    let mut skipped = 0;
    let mut foot = None;
    for ((p, f), m) in a.pressure.iter().zip(&a.plate).zip(&a.meta) {
        let trial = load_raw_trial(p, f, m)?;
        let side = trial.pressure.foot_side;
        if *foot.get_or_insert(side) != side {
            return Err(Error::Config("all trials in one container must share a foot side".into()));
        }
        let out = process_trial(&trial, &cfg)?;
        info!(
            "{}: {} stances, {} skipped, plate offset {} frames",
            p.display(),
            out.segmentation.samples.len(),
            out.segmentation.skipped,
            out.offset_frames
        );
        skipped += out.segmentation.skipped;
        samples.extend(out.segmentation.samples);
        if !subjects.iter().any(|s| s.id == trial.pressure.subject.id) {
            subjects.push(trial.pressure.subject.clone());
        }
    }
    let c = DatasetContainer::new(subjects, foot.unwrap_or_default(), samples, skipped)?;
    save_dataset(&c, &a.out)?;
    println!("wrote {} stances ({} skipped) to {}", c.samples.len(), skipped, a.out.display());
    Ok(())
}

fn cmd_priors(a: &PriorsArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let opts = PartitionOptions {
        foot_side: a.foot_side.unwrap_or(data.header.foot_side),
        ..Default::default()
    };
    let pr = build_priors(&data.samples, &opts)?;
    fs::create_dir_all(&a.out_dir)?;
    write_atomic(&a.out_dir.join("partition.txt"), pr.partition.to_text().as_bytes())?;
    let mut csv = REGION_NAMES.join(",");
    csv.push('\n');
    for t in 0..pr.temporal.stance_len() {
        let row: Vec<String> = pr.temporal.row(t).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    write_atomic(&a.out_dir.join("temporal_prior.csv"), csv.as_bytes())?;
    let (h, w) = pr.mean_map.dims();
    let mut mm = String::new();
    for r in 0..h {
        let row: Vec<String> = (0..w).map(|c| format!("{:?}", pr.mean_map.grid.at(&[r, c]))).collect();
        let _ = writeln!(mm, "{}", row.join(","));
    }
    write_atomic(&a.out_dir.join("mean_map.csv"), mm.as_bytes())?;
    println!("{}", pr.partition.summary().trim_end());
    println!("otsu threshold {:.6}, {} active cells", pr.mask.threshold, pr.mask.count());
    Ok(())
}

fn cmd_synth(files: &FileConfig, a: &SynthArgs) -> Result<()> {
    let mut cfg = files.overlay("synth", SynthConfig::default())?;
    macro_rules! take {
        ($($f:ident <- $v:expr),*) => {$(if let Some(v) = $v { cfg.$f = v; })*};
    }
    take!(seed <- a.seed, num_subjects <- a.subjects, steps_per_subject <- a.steps, grid_h <- a.grid_h,
          grid_w <- a.grid_w, stance_len <- a.stance_len, noise <- a.noise);
    cfg.adversarial |= a.adversarial;
    info!("synth config {}", serde_json::to_string(&cfg).unwrap_or_default());
    let c = generate_synthetic_dataset(&cfg)?;
    save_dataset(&c, &a.out)?;
    println!(
        "wrote {} stances from {} subjects ({} skipped) to {}",
        c.samples.len(),
        c.header.subjects.len(),
        c.header.skipped_stances,
        a.out.display()
    );
    Ok(())
}

fn write_history(path: &Path, records: &[crate::train::EpochRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
        let _ = writeln!(s, "{line}");
    }
    write_atomic(path, s.as_bytes())
}

fn cmd_train(files: &FileConfig, a: &TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let seed_hint = match &a.resume {
        Some(p) => load_checkpoint(p)?.seed,
        None => resolve_train(files, &a.model)?.seed,
    };
    let (tr, va) = validation_split(data.samples.len(), a.val_fraction, seed_hint)?;
    let train_set: Vec<_> = tr.iter().map(|&i| data.samples[i].clone()).collect();
    let val_set: Vec<_> = va.iter().map(|&i| data.samples[i].clone()).collect();

    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            info!("resuming {} after epoch {}", p.display(), ck.train_state.as_ref().map_or(0, |s| s.epochs_completed));
            Trainer::resume(&ck, &train_set, &val_set)?
        }
        None => {
            let model_cfg = resolve_model(files, &a.model, &data)?;
            let train_cfg = resolve_train(files, &a.model)?;
            info!("model config {}", serde_json::to_string(&model_cfg).unwrap_or_default());
            info!("train config {}", serde_json::to_string(&train_cfg).unwrap_or_default());
            let opts = PartitionOptions {
                foot_side: data.header.foot_side,
                ..Default::default()
            };
            let priors = build_priors(&train_set, &opts)?;
            Trainer::new(model_cfg, &train_set, &val_set, &priors.partition, &priors.temporal, train_cfg)?
        }
    };
    while !trainer.is_finished() {
        match trainer.run_epoch() {
            Ok(r) => println!("{}", serde_json::to_string(&r).unwrap_or_default()),
            Err(Error::Diverged { epoch, last_good }) => {
                save_checkpoint(&last_good, &a.out)?;
                return Err(Error::Diverged { epoch, last_good });
            }
            Err(e) => return Err(e),
        }
    }
    let ck = trainer.checkpoint();
    save_checkpoint(&ck, &a.out)?;
    if let Some(h) = &a.history {
        write_history(h, trainer.history())?;
    }
    let st = trainer.state();
    println!(
        "best epoch {} (val loss {:.6}) of {}; checkpoint {}",
        st.best_epoch,
        st.best_val_loss,
        st.epochs_completed,
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(files: &FileConfig, a: &EvalArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut cv = files.overlay("cv", CvOptions::default())?;
    if let Some(k) = a.folds {
        cv.k = k;
    }
    if let Some(m) = a.mode {
        cv.mode = m;
    }
    if let Some(n) = &a.normalizer {
        cv.metrics.normalizer = match n.as_str() {
            "range" => Normalizer::Range,
            "mean" => Normalizer::Mean,
            other => return Err(Error::Config(format!("unknown normalizer `{other}` (range, mean)"))),
        };
    }
    if a.per_step {
        cv.metrics.aggregation = Aggregation::PerStep;
    }

    let model: Box<dyn FoldModel> = match a.constant.as_deref() {
        Some("zero") => Box::new(ConstantPredictor::Zero),
        Some("mean") => Box::new(ConstantPredictor::TrainMean),
        Some(other) => return Err(Error::Config(format!("unknown constant predictor `{other}` (zero, mean)"))),
        None => {
            let (model_cfg, train_cfg) = match &a.ckpt {
                Some(p) => {
                    let ck = load_checkpoint(p)?;
                    let tc = match ck.train_state {
                        Some(s) => s.config,
                        None => resolve_train(files, &a.model)?,
                    };
                    (ck.model_config, tc)
                }
                None => (resolve_model(files, &a.model, &data)?, resolve_train(files, &a.model)?),
            };
            cv.seed = train_cfg.seed;
            let mut nm = NetworkModel::new(model_cfg, train_cfg);
            nm.partition.foot_side = data.header.foot_side;
            Box::new(nm)
        }
    };
    let report = cross_validate(model.as_ref(), &data.samples, &cv)?;
    println!("{} | {}-fold {:?}", report.model, cv.k, cv.mode);
    print!("{}", report.metrics.to_table());
    let (m, sd) = report.metrics.overall_nrmse();
    println!("six-channel mean NRMSE {m:.3}% ({sd:.3})");
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&report.metrics).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(p, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let model = crate::model::Model::new(ck.model_config.clone(), &ck.partition)?;
    let pred = predict_all(&model, &ck, &data.samples, 32)?;
    let target = stack_targets(&data.samples)?;
    let mut s = String::from("sample,subject,frame");
    for l in CHANNEL_LABELS {
        let _ = write!(s, ",{l}_pred,{l}_true");
    }
    s.push('\n');
    let l = data.header.stance_len;
    for (i, smp) in data.samples.iter().enumerate() {
        for t in 0..l {
            let _ = write!(s, "{i},{},{t}", smp.subject_id);
            for c in 0..CHANNEL_LABELS.len() {
                let _ = write!(s, ",{:?},{:?}", pred.at(&[i, t, c]), target.at(&[i, t, c]));
            }
            s.push('\n');
        }
    }
    write_atomic(&a.out, s.as_bytes())?;
    if data.samples.len() >= 2 {
        let m = compute_metrics(&pred, &target, MetricsOptions::default())?;
        let mut summary = String::from("channel,r,rmse,nrmse_percent\n");
        for (k, lab) in CHANNEL_LABELS.iter().enumerate() {
            let _ = writeln!(summary, "{lab},{:?},{:?},{:?}", m.r[k], m.rmse[k], m.nrmse[k]);
        }
        write_atomic(&crate::io::binfmt::sidecar_path(&a.out), summary.as_bytes())?;
        print!("{}", summary);
    }
    println!("wrote predictions for {} stances to {}", data.samples.len(), a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let variants: Vec<Variant> = match a.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let check = GradCheck {
        step: a.step,
        max_elements_per_input: None,
        refine_above: (!a.no_refine).then_some(a.tolerance * 1e-2),
    };
    let mut ok = true;
    for v in variants {
        let (names, rep) = gradcheck_variant(v, a.seed, check)?;
        let worst = rep
            .per_input
            .iter()
            .zip(&names)
            .fold((0.0, ""), |b, (&e, n)| if e > b.0 { (e, n.as_str()) } else { b });
        let pass = rep.max_relative_error < a.tolerance;
        ok &= pass;
        println!(
            "{:<12} max relative error {:.3e} over {} elements ({} extrapolated, worst {}) {}",
            v.name(),
            rep.max_relative_error,
            rep.elements_checked,
            rep.elements_refined,
            worst.1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<i32> {
    let files = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(&files, a)?,
        Command::Priors(a) => cmd_priors(a)?,
        Command::Synth(a) => cmd_synth(&files, a)?,
        Command::Train(a) => cmd_train(&files, a)?,
        Command::Eval(a) => cmd_eval(&files, a)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Gradcheck(a) => return Ok(if cmd_gradcheck(a)? { 0 } else { 1 }),
    }
    Ok(0)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Usage errors exit with 2; other failures print one
/// line to stderr and exit with 1.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
