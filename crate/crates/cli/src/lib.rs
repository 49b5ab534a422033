//! The `cohortgate` command line.
//!
//! Every subcommand reads from and writes into `--out` (default: the current
//! directory) unless an explicit input path is given. Output artifacts carry
//! the invocation's flags and the effective configuration, so any artifact
//! can be regenerated from its own metadata.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use cohortgate::dataio::io::{load_dataset, raw_paths, read_bytes, sha256_hex, write_guarded};
use cohortgate::dataio::{
    generate_synthetic, preprocess, processed_snapshot_bytes, raw_snapshot_bytes, read_processed_snapshot,
    read_raw_snapshot, AgeGroup, Dataset, Gender, Indicator, Participant, RawDataset, SynthConfig,
};
use cohortgate::interpret::{
    aggregate_importance, influence_categorical, influence_motion_window, influence_numeric, personal_importance,
    ImportanceReport, Importance, InfluenceCurve, Level, DEFAULT_STEPS, DEFAULT_TOP_K,
};
use cohortgate::model::{
    evaluate_auc, mean_auc, stratified_split, train_with_progress, HpModel, ModelConfig, Progress, TrainConfig,
};
use cohortgate::seed::derive_seed;
use cohortgate::{Error, Result};
use cohortgate_service::{model_file_name, ServiceConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const RAW_SNAPSHOT: &str = "raw.snap";
pub const PROCESSED_SNAPSHOT: &str = "processed.snap";
pub const PREPROCESS_REPORT: &str = "preprocess_report.json";
pub const EVALUATION: &str = "evaluation.json";

pub fn train_report_name(indicator: Indicator) -> String {
    format!("train_report_{}.json", indicator.name())
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "cohortgate", version, about = "Gated health-profile models over questionnaire and accelerometer data")]
pub struct Cli {
    /// Seeds synthesis and model initialization; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON with optional `synth`, `model` and `train` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    #[serde(skip)]
    pub quiet: bool,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelArg {
    Overall,
    Group,
    Individual,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::Overall => Level::Overall,
            LevelArg::Group => Level::Group,
            LevelArg::Individual => Level::Individual,
        }
    }
}

/// Who an importance or influence export is computed over.
#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Subjects {
    #[arg(long, value_enum, default_value = "overall")]
    pub level: LevelArg,
    /// Participant id for `--level individual`.
    #[arg(long)]
    pub id: Option<String>,
    /// Comma-separated genders for `--level group`; empty means all.
    #[arg(long, value_delimiter = ',')]
    pub genders: Vec<String>,
    /// Comma-separated age groups (child, adolescent) for `--level group`.
    #[arg(long, value_delimiter = ',')]
    pub ages: Vec<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic raw cohort with planted effects.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        wear_days: Option<u32>,
    },
    /// Impute, scale, encode and extract weekly motion patterns.
    Preprocess {
        /// Raw snapshot or raw directory; defaults to `<out>/raw.snap`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = cohortgate::dataio::DEFAULT_KNN_K)]
        k: usize,
    },
    /// Train one model per indicator.
    Train {
        /// `all` or one of MVPA, PHYF, VVAS, PSYF, RESI, CONN.
        #[arg(long, default_value = "all")]
        indicator: String,
        /// Train indicators concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Held-out AUC per indicator and their mean.
    Evaluate {
        #[arg(long, default_value = "all")]
        indicator: String,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Export ranked feature importance.
    Importance {
        #[arg(long)]
        indicator: String,
        #[arg(long, default_value_t = 30)]
        window: usize,
        #[command(flatten)]
        subjects: Subjects,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Export a perturbation influence curve.
    Influence {
        #[arg(long)]
        indicator: String,
        /// Context feature id.
        #[arg(long, conflicts_with_all = ["motion_start", "motion_w"])]
        feature: Option<String>,
        #[arg(long, requires = "motion_w")]
        motion_start: Option<usize>,
        #[arg(long, requires = "motion_start")]
        motion_w: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[command(flatten)]
        subjects: Subjects,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        cache_size: usize,
        #[arg(long, default_value_t = 120)]
        timeout: u64,
    },
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => serde_json::from_slice::<FileConfig>(&read_bytes(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => FileConfig::default(),
        };
        if let Some(s) = seed {
            cfg.synth.seed = s;
            cfg.model.seed = s;
        }
        Ok(cfg)
    }
}

/// Provenance block attached to every JSON output.
#[derive(Debug, Clone, Serialize)]
struct Meta {
    tool_version: &'static str,
    invocation: serde_json::Value,
    config: FileConfig,
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: T,
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: FileConfig,
    meta: Meta,
}

impl Ctx<'_> {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out(default))
    }

    /// Refuses before any work is done if an output already exists.
    fn claim(&self, paths: &[PathBuf]) -> Result<()> {
        if self.cli.force {
            return Ok(());
        }
        match paths.iter().find(|p| p.exists()) {
            Some(p) => Err(Error::Argument(format!("{} already exists; pass --force to overwrite", p.display()))),
            None => Ok(()),
        }
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_guarded(path, bytes, self.cli.force)?;
        self.note(format!("wrote {}", path.display()));
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, body: T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&WithMeta { meta: &self.meta, body })?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    fn echo_into(&self, model: &mut HpModel) -> Result<()> {
        model.metadata.insert("tool_version".into(), self.meta.tool_version.into());
        model.metadata.insert("invocation".into(), self.meta.invocation.to_string());
        model.metadata.insert("config".into(), serde_json::to_string(&self.cfg)?);
        model
            .metadata
            .insert("test_fraction".into(), self.cfg.train.test_fraction.to_string());
        Ok(())
    }
}

pub fn parse_indicators(s: &str) -> Result<Vec<Indicator>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Indicator::ALL.to_vec());
    }
    Indicator::from_str(s)
        .map(|i| vec![i])
        .map_err(|_| Error::Argument(format!("unknown indicator `{s}`; expected all, MVPA, PHYF, VVAS, PSYF, RESI or CONN")))
}

fn load_processed(path: &Path) -> Result<(Dataset, String)> {
    let bytes = read_bytes(path)?;
    Ok((read_processed_snapshot(&bytes)?, sha256_hex(&bytes)))
}

pub fn load_model(dir: &Path, indicator: Indicator) -> Result<HpModel> {
    let path = dir.join(model_file_name(indicator));
    let bytes = read_bytes(&path)?;
    let m = HpModel::from_bytes(&bytes).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    if m.indicator() != indicator {
        return Err(Error::Artifact(format!("{} holds a {} model", path.display(), m.indicator())));
    }
    Ok(m)
}

fn select<'a>(ds: &'a Dataset, s: &Subjects) -> Result<Vec<&'a Participant>> {
    let members: Vec<&Participant> = match s.level {
        LevelArg::Overall => ds.participants.iter().collect(),
        LevelArg::Group => {
            let genders = s.genders.iter().map(|g| Gender::from_str(g)).collect::<Result<Vec<_>>>()?;
            let ages = s.ages.iter().map(|a| AgeGroup::from_str(a)).collect::<Result<Vec<_>>>()?;
            ds.select(&genders, &ages).into_iter().map(|i| &ds.participants[i]).collect()
        }
        LevelArg::Individual => {
            let id = s
                .id
                .as_deref()
                .ok_or_else(|| Error::Argument("--level individual needs --id".into()))?;
            vec![ds
                .participant(id)
                .ok_or_else(|| Error::Argument(format!("unknown participant `{id}`")))?]
        }
    };
    if members.is_empty() {
        return Err(Error::Argument("no participant matches the selection".into()));
    }
    Ok(members)
}

fn subject_tag(s: &Subjects) -> String {
    match (s.level, &s.id) {
        (LevelArg::Individual, Some(id)) => format!("individual_{id}"),
        (l, _) => serde_json::to_value(l).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
    }
}

/// One evaluated indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub indicator: Indicator,
    pub auc: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub mauc: f64,
}

impl Evaluation {
    /// Fixed-width table with four decimals.
    pub fn table(&self) -> String {
        let mut s = String::from("indicator  auc     n_test\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:<10} {:.4}  {}", r.indicator.name(), r.auc, r.n_test);
        }
        let _ = writeln!(s, "{:<10} {:.4}", "mAUC", self.mauc);
        s
    }
}

/// Test-split AUC of `model`, reproducing the split used at training time.
pub fn held_out_auc(model: &HpModel, ds: &Dataset, default_fraction: f64) -> Result<(f64, usize)> {
    model.require_trained()?;
    let fraction = match model.metadata.get("test_fraction") {
        Some(f) => f
            .parse::<f64>()
            .map_err(|_| Error::Artifact(format!("bad test_fraction `{f}` in model metadata")))?,
        None => default_fraction,
    };
    let labels = ds.labels(model.indicator());
    let (_, test) = stratified_split(&labels, fraction, derive_seed(model.training_seed(), "split"));
    if test.is_empty() {
        return Err(Error::Evaluation(format!("{} has an empty test split", model.indicator())));
    }
    let scores = test
        .par_iter()
        .map(|&i| model.predict_participant(&ds.participants[i]))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    Ok((evaluate_auc(&scores, &y)?, test.len()))
}

fn cmd_synth(ctx: &Ctx, n: Option<usize>, wear_days: Option<u32>) -> Result<()> {
    let mut cfg = ctx.cfg.synth.clone();
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(d) = wear_days {
        cfg.wear_days = d;
    }
    let path = ctx.out(RAW_SNAPSHOT);
    let meta_path = ctx.out(&format!("{RAW_SNAPSHOT}.meta.json"));
    ctx.claim(&[path.clone(), meta_path.clone()])?;
    ctx.note(format!("synthesizing {} participants (seed {})", cfg.n, cfg.seed));
    let raw = generate_synthetic(&cfg)?;
    let bytes = raw_snapshot_bytes(&raw)?;
    ctx.write(&path, &bytes)?;
    ctx.write_json(&meta_path, serde_json::json!({ "sha256": sha256_hex(&bytes), "participants": raw.len() }))
}

fn read_raw(input: &Path) -> Result<RawDataset> {
    if input.is_dir() {
        let (c, m, l, s) = raw_paths(input);
        load_dataset(&c, &m, &l, &s)
    } else {
        read_raw_snapshot(&read_bytes(input)?)
    }
}

fn cmd_preprocess(ctx: &Ctx, input: &Option<PathBuf>, k: usize) -> Result<()> {
    let input = ctx.input(input, RAW_SNAPSHOT);
    let (snap, report_path, meta_path) = (
        ctx.out(PROCESSED_SNAPSHOT),
        ctx.out(PREPROCESS_REPORT),
        ctx.out(&format!("{PROCESSED_SNAPSHOT}.meta.json")),
    );
    ctx.claim(&[snap.clone(), report_path.clone(), meta_path.clone()])?;
    let raw = read_raw(&input)?;
    let (ds, report) = preprocess(&raw, k)?;
    let bytes = processed_snapshot_bytes(&ds)?;
    ctx.write(&snap, &bytes)?;
    ctx.write_json(&report_path, &report)?;
    ctx.write_json(&meta_path, serde_json::json!({ "sha256": sha256_hex(&bytes), "participants": ds.len() }))
}

fn cmd_train(ctx: &Ctx, indicator: &str, parallel: bool, epochs: Option<usize>, data: &Option<PathBuf>) -> Result<()> {
    let inds = parse_indicators(indicator)?;
    let mut tcfg = ctx.cfg.train.clone();
    if let Some(e) = epochs {
        tcfg.epochs = e;
    }
    tcfg.validate()?;
    ctx.cfg.model.validate()?;
    let outputs: Vec<PathBuf> = inds
        .iter()
        .flat_map(|&i| [ctx.out(&model_file_name(i)), ctx.out(&train_report_name(i))])
        .collect();
    ctx.claim(&outputs)?;
    let (ds, hash) = load_processed(&ctx.input(data, PROCESSED_SNAPSHOT))?;
    let quiet = ctx.cli.quiet;
    let one = |ind: Indicator| -> Result<(HpModel, cohortgate::model::TrainReport)> {
        let mut progress = |p: Progress| {
            if quiet {
                return;
            }
            match p {
                Progress::Fold { hyper, fold, auc } => eprintln!(
                    "{ind} cv lr={} dropout={} wd={} fold {fold}: auc {auc:.4}",
                    hyper.learning_rate, hyper.dropout, hyper.weight_decay
                ),
                Progress::Epoch { epoch, loss } => eprintln!("{ind} epoch {epoch}: loss {loss:.5}"),
            }
        };
        train_with_progress(&ds, ind, &tcfg, &ctx.cfg.model, &mut progress)
    };
    let results: Vec<_> = if parallel {
        inds.par_iter().map(|&i| one(i)).collect()
    } else {
        inds.iter().map(|&i| one(i)).collect()
    };
    for (ind, r) in inds.iter().zip(results) {
        let (mut model, report) = r?;
        ctx.echo_into(&mut model)?;
        model.metadata.insert("dataset_sha256".into(), hash.clone());
        model.metadata.insert("epochs".into(), tcfg.epochs.to_string());
        ctx.write(&ctx.out(&model_file_name(*ind)), &model.to_bytes())?;
        ctx.write_json(&ctx.out(&train_report_name(*ind)), &report)?;
        if let Some(auc) = report.test_auc {
            ctx.note(format!("{ind}: test auc {auc:.4}"));
        }
    }
    Ok(())
}

fn cmd_evaluate(ctx: &Ctx, indicator: &str, data: &Option<PathBuf>, models: &Option<PathBuf>) -> Result<()> {
    let inds = parse_indicators(indicator)?;
    let out = ctx.out(EVALUATION);
    ctx.claim(&[out.clone()])?;
    let (ds, _) = load_processed(&ctx.input(data, PROCESSED_SNAPSHOT))?;
    let dir = models.clone().unwrap_or_else(|| ctx.cli.out.clone());
    let mut rows = Vec::new();
    for ind in inds {
        let m = load_model(&dir, ind)?;
        let (auc, n_test) = held_out_auc(&m, &ds, ctx.cfg.train.test_fraction)?;
        rows.push(EvalRow { indicator: ind, auc, n_test });
    }
    let aucs: Vec<f64> = rows.iter().map(|r| r.auc).collect();
    let eval = Evaluation { mauc: mean_auc(&aucs)?, rows };
    print!("{}", eval.table());
    println!("{}", serde_json::to_string(&eval)?);
    ctx.write_json(&out, &eval)
}

fn importance_of(model: &HpModel, members: &[&Participant]) -> Result<Importance> {
    let items = members
        .par_iter()
        .map(|p| personal_importance(model, p))
        .collect::<Result<Vec<_>>>()?;
    aggregate_importance(&items)
}

fn cmd_importance(
    ctx: &Ctx,
    indicator: &str,
    window: usize,
    subjects: &Subjects,
    data: &Option<PathBuf>,
    models: &Option<PathBuf>,
) -> Result<()> {
    let ind = Indicator::from_str(indicator)?;
    let out = ctx.out(&format!("importance_{}_{}_w{window}.json", ind.name(), subject_tag(subjects)));
    ctx.claim(&[out.clone()])?;
    let (ds, _) = load_processed(&ctx.input(data, PROCESSED_SNAPSHOT))?;
    let model = load_model(&models.clone().unwrap_or_else(|| ctx.cli.out.clone()), ind)?;
    let members = select(&ds, subjects)?;
    let imp = importance_of(&model, &members)?;
    let report = ImportanceReport::build(
        &ds.schema,
        &imp,
        ind,
        subjects.level.into(),
        members.len(),
        window,
        DEFAULT_TOP_K,
    )?;
    ctx.write_json(&out, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_influence(
    ctx: &Ctx,
    indicator: &str,
    feature: &Option<String>,
    motion: Option<(usize, usize)>,
    steps: usize,
    subjects: &Subjects,
    data: &Option<PathBuf>,
    models: &Option<PathBuf>,
) -> Result<()> {
    let ind = Indicator::from_str(indicator)?;
    let what = match (feature, motion) {
        (Some(f), None) => f.clone(),
        (None, Some((s, w))) => format!("motion_{s}_{w}"),
        _ => return Err(Error::Argument("give either --feature or --motion-start with --motion-w".into())),
    };
    let out = ctx.out(&format!("influence_{}_{}_{what}.json", ind.name(), subject_tag(subjects)));
    ctx.claim(&[out.clone()])?;
    let (ds, _) = load_processed(&ctx.input(data, PROCESSED_SNAPSHOT))?;
    let model = load_model(&models.clone().unwrap_or_else(|| ctx.cli.out.clone()), ind)?;
    let members = select(&ds, subjects)?;
    let level: Level = subjects.level.into();
    let curve: InfluenceCurve = match (feature, motion) {
        (Some(f), _) => {
            if ds.schema.get(f)?.is_numeric() {
                influence_numeric(&model, &ds.schema, f, &members, level, steps)?
            } else {
                influence_categorical(&model, &ds.schema, f, &members, level)?
            }
        }
        (None, Some((s, w))) => {
            cohortgate::interpret::validate_window_minutes(w)?;
            influence_motion_window(&model, s, w, &members, level, steps)?
        }
        (None, None) => unreachable!("checked above"),
    };
    ctx.write_json(&out, &curve)
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(
    ctx: &Ctx,
    listen: SocketAddr,
    data: &Option<PathBuf>,
    models: &Option<PathBuf>,
    cache_size: usize,
    timeout: u64,
) -> Result<()> {
    let config = ServiceConfig {
        listen,
        dataset: ctx.input(data, PROCESSED_SNAPSHOT),
        model_dir: models.clone().unwrap_or_else(|| ctx.cli.out.clone()),
        cache_size,
        request_timeout_secs: timeout,
    };
    cohortgate_service::serve_blocking(config, |addr| ctx.note(format!("serving on http://{addr}")))
}

/// Runs a parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref(), cli.seed)?;
    let meta = Meta {
        tool_version: env!("CARGO_PKG_VERSION"),
        invocation: serde_json::to_value(cli)?,
        config: cfg.clone(),
    };
    let ctx = Ctx { cli, cfg, meta };
    match &cli.command {
        Command::Synth { n, wear_days } => cmd_synth(&ctx, *n, *wear_days),
        Command::Preprocess { input, k } => cmd_preprocess(&ctx, input, *k),
        Command::Train { indicator, parallel, epochs, data } => cmd_train(&ctx, indicator, *parallel, *epochs, data),
        Command::Evaluate { indicator, data, models } => cmd_evaluate(&ctx, indicator, data, models),
        Command::Importance { indicator, window, subjects, data, models } => {
            cmd_importance(&ctx, indicator, *window, subjects, data, models)
        }
        Command::Influence { indicator, feature, motion_start, motion_w, steps, subjects, data, models } => {
            let motion = motion_start.zip(*motion_w);
            cmd_influence(&ctx, indicator, feature, motion, *steps, subjects, data, models)
        }
        Command::Serve { listen, data, models, cache_size, timeout } => {
            cmd_serve(&ctx, *listen, data, models, *cache_size, *timeout)
        }
    }
}

/// One-line JSON error for stderr.
pub fn error_line(code: &str, message: &str) -> String {
    serde_json::json!({ "error": { "code": code, "message": message } }).to_string()
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.code(), &e.to_string()));
            1
        }
    }
}
