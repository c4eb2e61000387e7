//! The `umfdet` command line: one subcommand per pipeline stage, all outputs
//! written as files under `--out`, each run recorded in `run.json`.

mod runlog;

pub use runlog::{hash_path, hash_paths, sha256_hex, FileHash, RunRecord, RUN_FILE};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cot::{
    extract_entities, generate_all, parse_cot, validate_cot, CotRecord, GenClient, MockClient, QcConfig, RemoteClient,
    RemoteConfig, DEFAULT_ATTEMPTS,
};
use crate::data::{
    load_manifest, save_manifest, split, synth_toy_corpus, verify_omnifake, Category, CorpusStats, ManipulationAnnotation,
    ManipulationKind, NewsSample, SplitSpec,
};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalReport, RoutingReport};
use crate::kv::KvMap;
use crate::model::Model;
use crate::par::Exec;
use crate::rng::{rng_for, stream_id};
use crate::textforge::{distort_or_rewrite, pure_fake_rewrite, AntonymLexicon, DistortMode, RewriteStrategy};
use crate::trainer::{ablate, ablation_to_csv, history_to_csv, init_model, TrainConfig, Trainer, HISTORY_FILE};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Parser, Debug)]
#[command(name = "umfdet", version, about = "Multimodal fake-news attribution toolkit")]
pub struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic toy corpus with train/val/test manifests.
    SynthToy(SynthArgs),
    /// Add entity-preserving fabricated titles for the real samples of a manifest.
    FabricateText(FabricateArgs),
    /// Generate and quality-check rationales for a manifest.
    CotGen(CotGenArgs),
    /// Re-check the rationales stored in a manifest.
    CotValidate(DataOutArgs),
    /// Train a detector.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Expert routing distribution of a checkpoint on a manifest.
    RouteReport(EvalArgs),
    /// Train and score the MoE × depth × CoT ablation grid.
    Ablate(AblateArgs),
    /// Category counts of a manifest, or a check of a stats file.
    Stats(StatsArgs),
    /// Re-run the command recorded in a run.json.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 900)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub cue_strength: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Mock,
    Remote,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FabricateStrategy {
    Keywords,
    Phrase,
    PureFake,
}

#[derive(Args, Debug)]
pub struct FabricateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FabricateStrategy::Keywords)]
    pub strategy: FabricateStrategy,
    #[arg(long, value_enum, default_value_t = ClientKind::Mock)]
    pub client: ClientKind,
    /// Antonym lexicon (`word<TAB>antonym` lines); the bundled one by default.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ATTEMPTS)]
    pub attempts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CotGenArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ClientKind::Mock)]
    pub client: ClientKind,
    #[arg(long, default_value_t = DEFAULT_ATTEMPTS)]
    pub attempts: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Args, Debug)]
pub struct DataOutArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lambda_cot=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Directory holding train.jsonl and val.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint in `--out` if one exists.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest file, or a directory holding test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory, or a `.json` file path for the report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Directory holding train.jsonl and test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Manifest (`.jsonl`) or stats file (`.json`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Check the counts against the published OmniFake totals.
    #[arg(long)]
    pub omnifake: bool,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Write to this directory instead of the recorded `--out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 runtime.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::SynthToy(a) => synth_toy(a, argv),
        Command::FabricateText(a) => fabricate_text(a, argv),
        Command::CotGen(a) => cot_gen(a, argv, exec),
        Command::CotValidate(a) => cot_validate(a, argv),
        Command::Train(a) => train(a, argv, exec),
        Command::Eval(a) => eval(a, argv, exec),
        Command::RouteReport(a) => route_report(a, argv, exec),
        Command::Ablate(a) => ablate_cmd(a, argv, exec),
        Command::Stats(a) => stats(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPath(path.to_path_buf()))
    }
}

struct Run {
    command: &'static str,
    argv: Vec<String>,
    seed: u64,
    config: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, argv: Vec<String>, seed: u64) -> Self {
        Run {
            command,
            argv,
            seed,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    fn finish(&self, dir: &Path) -> Result<()> {
        RunRecord {
            command: self.command.to_string(),
            argv: self.argv.clone(),
            seed: self.seed,
            config: self.config.clone(),
            inputs: hash_paths(&self.inputs)?,
            outputs: hash_paths(&self.outputs)?,
        }
        .write(dir)
    }
}

fn synth_toy(a: SynthArgs, argv: Vec<String>) -> Result<()> {
    let corpus = synth_toy_corpus(a.n, a.cue_strength, a.seed)?;
    let parts = split(
        &corpus,
        &SplitSpec {
            ratios: (8, 1, 1),
            seed: a.seed,
        },
    )?;
    create_dir(&a.out)?;
    let mut run = Run::new("synth-toy", argv, a.seed);
    run.set("n", a.n).set("seed", a.seed).set("cue_strength", a.cue_strength).set("ratios", "8:1:1");
    let mut stats = BTreeMap::new();
    for (file, part) in [(TRAIN_FILE, &parts.train), (VAL_FILE, &parts.val), (TEST_FILE, &parts.test)] {
        let p = a.out.join(file);
        save_manifest(&p, part)?;
        stats.insert(file.trim_end_matches(".jsonl").to_string(), CorpusStats::from_samples(part));
        run.outputs.push(p);
    }
    stats.insert("all".to_string(), CorpusStats::from_samples(&corpus));
    let sp = a.out.join("stats.json");
    write_json(&sp, &stats)?;
    run.outputs.push(sp);
    run.finish(&a.out)
}

fn make_client(kind: ClientKind) -> Result<Box<dyn GenClient>> {
    Ok(match kind {
        ClientKind::Mock => Box::new(MockClient::new()),
        ClientKind::Remote => Box::new(RemoteClient::new(RemoteConfig::from_env()?)),
    })
}

#[derive(Serialize)]
struct FabricationSummary {
    sources: usize,
    fabricated: usize,
    failed: Vec<String>,
    keyword_distortion: usize,
    pure_fake: usize,
}

fn fabricate_text(a: FabricateArgs, argv: Vec<String>) -> Result<()> {
    let samples = load_manifest(&a.data)?;
    let lex = match &a.lexicon {
        Some(p) => AntonymLexicon::load(p)?,
        None => AntonymLexicon::default(),
    };
    let client = make_client(a.client)?;
    let gaz = QcConfig::default().gazetteer;
    let mut out = Vec::new();
    let mut summary = FabricationSummary {
        sources: 0,
        fabricated: 0,
        failed: Vec::new(),
        keyword_distortion: 0,
        pure_fake: 0,
    };
    for s in samples.iter().filter(|s| s.label == Category::Real) {
        summary.sources += 1;
        let id = format!("{}-fab", s.id);
        let m = extract_entities(&s.title, &gaz);
        let mut rng = rng_for(a.seed, &[stream_id("fabricate"), stream_id(&s.id)]);
        let res = match a.strategy {
            FabricateStrategy::PureFake => pure_fake_rewrite(&id, &s.title, &m, client.as_ref(), a.attempts),
            FabricateStrategy::Keywords | FabricateStrategy::Phrase => {
                let mode = if a.strategy == FabricateStrategy::Phrase {
                    DistortMode::Phrase
                } else {
                    DistortMode::Keywords
                };
                distort_or_rewrite(&id, &s.title, &m, &lex, mode, &mut rng, client.as_ref(), a.attempts)
            }
        };
        let (title, log) = match res {
            Ok(r) => r,
            Err(Error::Fabrication { id, reason }) => {
                log::warn!("skipping {id}: {reason}");
                summary.failed.push(id);
                continue;
            }
            Err(e) => return Err(e),
        };
        let kind = match log.strategy {
            RewriteStrategy::PureFake => {
                summary.pure_fake += 1;
                ManipulationKind::PureFakeText
            }
            RewriteStrategy::KeywordDistortion => {
                summary.keyword_distortion += 1;
                ManipulationKind::KeywordDistortion
            }
        };
        let mut manipulation = ManipulationAnnotation::of(kind);
        manipulation.rewrite_log = Some(log);
        out.push(NewsSample {
            id,
            title,
            image: s.image.clone(),
            label: Category::AiSynthesized,
            manipulation,
            cot: None,
        });
    }
    summary.fabricated = out.len();
    create_dir(&a.out)?;
    let mut run = Run::new("fabricate-text", argv, a.seed);
    run.set("strategy", format!("{:?}", a.strategy).to_lowercase())
        .set("client", format!("{:?}", a.client).to_lowercase())
        .set("attempts", a.attempts)
        .set("lexicon", a.lexicon.as_ref().map_or("bundled".into(), |p| p.display().to_string()));
    run.inputs.push(a.data.clone());
    if let Some(l) = &a.lexicon {
        run.inputs.push(l.clone());
    }
    let mp = a.out.join("fabricated.jsonl");
    save_manifest(&mp, &out)?;
    let sp = a.out.join("fabrication_summary.json");
    write_json(&sp, &summary)?;
    run.outputs.extend([mp, sp]);
    run.finish(&a.out)
}

#[derive(Serialize, Default)]
struct CotSummary {
    total: usize,
    accepted: usize,
    verdicts: BTreeMap<String, usize>,
    attempts: BTreeMap<usize, usize>,
}

fn summarize(records: &[CotRecord]) -> CotSummary {
    let mut s = CotSummary {
        total: records.len(),
        ..CotSummary::default()
    };
    for r in records {
        s.accepted += usize::from(r.verdict.is_accepted());
        *s.verdicts.entry(r.verdict.to_string()).or_default() += 1;
        *s.attempts.entry(r.attempts_used).or_default() += 1;
    }
    s
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    write_file(path, text)
}

fn cot_gen(a: CotGenArgs, argv: Vec<String>, exec: Exec) -> Result<()> {
    let mut samples = load_manifest(&a.data)?;
    let client = make_client(a.client)?;
    let qc = QcConfig::default();
    let records = generate_all(&samples, client.as_ref(), &qc, a.attempts, a.max_in_flight.max(1), exec)?;
    for (s, r) in samples.iter_mut().zip(&records) {
        s.cot = r.verdict.is_accepted().then(|| r.to_manifest());
    }
    create_dir(&a.out)?;
    let mut run = Run::new("cot-gen", argv, 0);
    run.set("client", format!("{:?}", a.client).to_lowercase())
        .set("attempts", a.attempts)
        .set("max_in_flight", a.max_in_flight)
        .set("l_min", qc.l_min)
        .set("l_max", qc.l_max);
    run.inputs.push(a.data.clone());
    let mp = a.out.join("with_cot.jsonl");
    save_manifest(&mp, &samples)?;
    let rp = a.out.join("cot_records.jsonl");
    write_jsonl(&rp, &records)?;
    let sp = a.out.join("cot_summary.json");
    write_json(&sp, &summarize(&records))?;
    run.outputs.extend([mp, rp, sp]);
    run.finish(&a.out)
}

#[derive(Serialize)]
struct CotValidation {
    summary: CotSummary,
    missing: Vec<String>,
    records: Vec<CotRecord>,
}

fn cot_validate(a: DataOutArgs, argv: Vec<String>) -> Result<()> {
    let samples = load_manifest(&a.data)?;
    let qc = QcConfig::default();
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for s in &samples {
        let Some(c) = &s.cot else {
            missing.push(s.id.clone());
            continue;
        };
        let raw = format!("<think>{}</think><answer>{}</answer>", c.think, c.answer);
        let m = extract_entities(&s.title, &qc.gazetteer);
        let mut rec = validate_cot(&parse_cot(&raw), &s.title, s.label, &m, &qc);
        rec.sample_id = s.id.clone();
        records.push(rec);
    }
    create_dir(&a.out)?;
    let mut run = Run::new("cot-validate", argv, 0);
    run.set("l_min", qc.l_min).set("l_max", qc.l_max);
    run.inputs.push(a.data.clone());
    let p = a.out.join("cot_validation.json");
    write_json(
        &p,
        &CotValidation {
            summary: summarize(&records),
            missing,
            records,
        },
    )?;
    run.outputs.push(p);
    run.finish(&a.out)
}

/// Config file, then `--set` overrides, then dedicated flags.
fn effective_config(a: &ConfigArgs) -> Result<TrainConfig> {
    let mut kv = match &a.config {
        Some(p) => KvMap::load(p)?,
        None => KvMap::default(),
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(s) = a.steps {
        kv.set("steps", s);
    }
    if let Some(s) = a.seed {
        kv.set("seed", s);
    }
    let mut cfg = TrainConfig::default();
    cfg.take_from(&mut kv)?;
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_map(cfg: &TrainConfig) -> BTreeMap<String, String> {
    cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn train(a: TrainArgs, argv: Vec<String>, exec: Exec) -> Result<()> {
    let cfg = effective_config(&a.cfg)?;
    let (tp, vp) = (a.data.join(TRAIN_FILE), a.data.join(VAL_FILE));
    require(&tp)?;
    let train_set = load_manifest(&tp)?;
    let val_set = if vp.exists() { load_manifest(&vp)? } else { Vec::new() };
    create_dir(&a.out)?;
    let ckpt = a.out.join(CHECKPOINT_DIR);
    let hist_path = a.out.join(HISTORY_FILE);
    let resuming = a.resume && ckpt.join(crate::model::WEIGHTS_FILE).exists();
    let mut trainer = if resuming {
        Trainer::resume(cfg.clone(), &ckpt, exec)?
    } else {
        Trainer::new(cfg.clone(), init_model(&cfg, &train_set)?, exec)?
    };
    let mut run = Run::new("train", argv, cfg.model.seed);
    run.config = config_map(&cfg);
    run.set("resumed_from_step", trainer.state.step);
    run.inputs.push(tp);
    if vp.exists() {
        run.inputs.push(vp);
    }
    if let Some(c) = &a.cfg.config {
        run.inputs.push(c.clone());
    }
    if resuming {
        run.inputs.push(ckpt.clone());
    }
    let previous = if resuming && hist_path.exists() {
        std::fs::read_to_string(&hist_path).map_err(|e| Error::io(&hist_path, e))?
    } else {
        String::new()
    };
    let run_inputs = hash_paths(&run.inputs)?;
    let history = trainer.run(&train_set, &val_set, Some(&ckpt))?;
    let mut csv = history_to_csv(&history);
    if !previous.is_empty() {
        csv = previous + csv.split_once('\n').map_or("", |x| x.1);
    }
    write_file(&hist_path, csv)?;
    let cp = a.out.join("train.cfg");
    write_file(&cp, cfg.to_file_string())?;
    run.outputs.extend([ckpt, hist_path, cp]);
    RunRecord {
        command: run.command.to_string(),
        argv: run.argv.clone(),
        seed: run.seed,
        config: run.config.clone(),
        inputs: run_inputs,
        outputs: hash_paths(&run.outputs)?,
    }
    .write(&a.out)
}

fn eval_data(path: &Path) -> Result<(PathBuf, Vec<NewsSample>)> {
    let p = if path.is_dir() { path.join(TEST_FILE) } else { path.to_path_buf() };
    require(&p)?;
    let samples = load_manifest(&p)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{} has no samples", p.display())));
    }
    Ok((p, samples))
}

/// Directory for `run.json` and the report path for an `--out` value.
fn report_paths(out: &Path, default_name: &str) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "json") {
        let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        (dir.to_path_buf(), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.join(default_name))
    }
}

fn load_and_evaluate(a: &EvalArgs, exec: Exec) -> Result<(Model, PathBuf, EvalReport)> {
    let model = Model::load(&a.checkpoint)?;
    let (data_path, samples) = eval_data(&a.data)?;
    let max_len = a.max_len.unwrap_or(model.cfg.max_len);
    let report = evaluate(&model, &samples, max_len, exec)?;
    Ok((model, data_path, report))
}

fn eval(a: EvalArgs, argv: Vec<String>, exec: Exec) -> Result<()> {
    let (model, data_path, report) = load_and_evaluate(&a, exec)?;
    let (dir, report_path) = report_paths(&a.out, "report.json");
    create_dir(&dir)?;
    write_json(&report_path, &report)?;
    println!(
        "accuracy {:.4} macro_f1 {:.4} unparseable {}",
        report.metrics.accuracy, report.metrics.macro_f1, report.metrics.n_unparseable
    );
    let mut run = Run::new("eval", argv, model.cfg.seed);
    run.set("max_len", a.max_len.unwrap_or(model.cfg.max_len));
    run.inputs.extend([a.checkpoint.clone(), data_path]);
    run.outputs.push(report_path);
    run.finish(&dir)
}

fn routing_csv(r: &RoutingReport) -> String {
    let mut s = String::from("layer,category,expert,count,percent\n");
    for l in &r.layers {
        for c in Category::ALL {
            for (e, name) in crate::cmoe::EXPERT_NAMES.iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    l.layer,
                    c.as_str(),
                    name,
                    l.counts[c.index()][e],
                    l.percentages[c.index()][e]
                ));
            }
        }
    }
    s
}

fn route_report(a: EvalArgs, argv: Vec<String>, exec: Exec) -> Result<()> {
    let (model, data_path, report) = load_and_evaluate(&a, exec)?;
    let (dir, json_path) = report_paths(&a.out, "routing.json");
    create_dir(&dir)?;
    write_json(&json_path, &report.routing)?;
    let csv_path = json_path.with_extension("csv");
    write_file(&csv_path, routing_csv(&report.routing))?;
    let mut run = Run::new("route-report", argv, model.cfg.seed);
    run.set("max_len", a.max_len.unwrap_or(model.cfg.max_len));
    run.inputs.extend([a.checkpoint.clone(), data_path]);
    run.outputs.extend([json_path, csv_path]);
    run.finish(&dir)
}

fn ablate_cmd(a: AblateArgs, argv: Vec<String>, exec: Exec) -> Result<()> {
    let cfg = effective_config(&a.cfg)?;
    let (tp, sp) = (a.data.join(TRAIN_FILE), a.data.join(TEST_FILE));
    require(&tp)?;
    require(&sp)?;
    let rows = ablate(&cfg, &load_manifest(&tp)?, &load_manifest(&sp)?, exec)?;
    create_dir(&a.out)?;
    let jp = a.out.join("ablation.json");
    write_json(&jp, &rows)?;
    let cp = a.out.join("ablation.csv");
    write_file(&cp, ablation_to_csv(&rows))?;
    let mut run = Run::new("ablate", argv, cfg.model.seed);
    run.config = config_map(&cfg);
    run.inputs.extend([tp, sp]);
    if let Some(c) = &a.cfg.config {
        run.inputs.push(c.clone());
    }
    run.outputs.extend([jp, cp]);
    run.finish(&a.out)
}

fn stats(a: StatsArgs, argv: Vec<String>) -> Result<()> {
    require(&a.data)?;
    let counts = if a.data.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(&a.data).map_err(|e| Error::io(&a.data, e))?;
        serde_json::from_str::<CorpusStats>(&text).map_err(|e| Error::Data(format!("{}: {e}", a.data.display())))?
    } else {
        CorpusStats::from_samples(&load_manifest(&a.data)?)
    };
    if !counts.is_consistent() {
        return Err(Error::Data("category counts do not sum to total".into()));
    }
    create_dir(&a.out)?;
    let mut run = Run::new("stats", argv, 0);
    run.set("omnifake", a.omnifake);
    run.inputs.push(a.data.clone());
    let p = a.out.join("stats.json");
    write_json(&p, &counts)?;
    run.outputs.push(p);
    if a.omnifake {
        let acc = verify_omnifake(&counts)?;
        println!("{acc}");
        let vp = a.out.join("omnifake_check.txt");
        write_file(&vp, format!("{acc}\n"))?;
        run.outputs.push(vp);
    } else {
        println!(
            "real {} human_crafted {} ai_synthesized {} total {}",
            counts.real, counts.human_crafted, counts.ai_synthesized, counts.total
        );
    }
    run.finish(&a.out)
}

fn replay(a: ReplayArgs) -> Result<()> {
    let rec = RunRecord::load(&a.run)?;
    let mut argv = rec.argv.clone();
    if argv.first().is_some_and(|c| c == "replay") {
        return Err(Error::Config("a replay record cannot be replayed".into()));
    }
    if let Some(out) = &a.out {
        match argv.iter().position(|x| x == "--out") {
            Some(i) if i + 1 < argv.len() => argv[i + 1] = out.display().to_string(),
            _ => return Err(Error::Config("recorded command has no --out to redirect".into())),
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("umfdet".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Error::Config(format!("recorded argv no longer parses: {}", e.kind())))?;
    dispatch(cli, argv)
}
