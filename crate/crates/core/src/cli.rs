//! `spkdlg` subcommands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::synth::{save_tables, tables_path};
use crate::corpus::{generate_synthetic, load_corpus, load_embeddings, save_corpus, SplitSpec, SynthSpec};
use crate::diagnostics::{model_check, primitive_suite};
use crate::error::{Error, Result};
use crate::eval::{evaluate, label_sets, predict_all, tune_threshold, EvalReport, Head};
use crate::experiment::{prepare, run, Prepared};
use crate::model::checkpoint::{Checkpoint, CheckpointMeta};
use crate::model::{build_examples, DialogueModel, HistoryMode, HistoryWindow, ModelConfig, Task};
use crate::training::{AdamConfig, TrainConfig};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "spkdlg", version, about = "Role-based contextual dialogue understanding and policy learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint, epoch log and manifest.
    Train(TrainArgs),
    /// Report test (or other split) F1 for a checkpoint.
    Evaluate(EvalArgs),
    /// Print predicted label sets per utterance.
    Predict(EvalArgs),
    /// Finite-difference check of every primitive and a toy model.
    Gradcheck,
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Search the decision threshold on the dev split.
    TuneThreshold(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    None,
    Sem,
    Nl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Lu,
    Policy,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

fn parse_window(s: &str) -> std::result::Result<HistoryWindow, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(HistoryWindow::All);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(HistoryWindow::Last(n)),
        _ => Err(format!("expected a positive integer or `all`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "nl")]
    pub mode: ModeArg,
    #[arg(long)]
    pub role_split: bool,
    #[arg(long)]
    pub guidance: bool,
    #[arg(long, default_value = "5", value_parser = parse_window)]
    pub history_window: HistoryWindow,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Session split seed (defaults to --seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value = "runs/synth/corpus.jsonl")]
    pub corpus: PathBuf,
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "lu")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 200)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub cnn_filters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Disable global-norm gradient clipping.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub early_stop: bool,
    /// Keep pretrained embeddings fixed.
    #[arg(long)]
    pub freeze_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value = "runs/train/model.ckpt")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "runs/synth/corpus.jsonl")]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Override the checkpoint's decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the report as TSV into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub sessions: usize,
    #[arg(long, default_value_t = 12)]
    pub turns: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 8)]
    pub labels: usize,
    #[arg(long, default_value_t = 4)]
    pub topics: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "runs/synth")]
    pub out: PathBuf,
}

/// Git blob hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub corpus: PathBuf,
    pub corpus_hash: String,
    pub embeddings: Option<PathBuf>,
    pub embeddings_hash: Option<String>,
    pub split: SplitSpec,
    /// Hash over the corpus, embeddings and both resolved configurations.
    pub inputs_hash: String,
    pub out: PathBuf,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl TrainArgs {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            history_mode: match self.mode {
                ModeArg::None => HistoryMode::None,
                ModeArg::Sem => HistoryMode::Semantic,
                ModeArg::Nl => HistoryMode::NaturalLanguage,
            },
            role_split: self.role_split,
            intermediate_guidance: self.guidance,
            history_window: self.history_window,
            threshold: self.threshold,
            hidden_dim: self.hidden_dim,
            embedding_dim: self.embedding_dim,
            cnn_filters: self.cnn_filters,
            task: match self.task {
                TaskArg::Lu => Task::Lu,
                TaskArg::Policy => Task::Policy,
                TaskArg::Joint => Task::Joint,
            },
            train_embeddings: !self.freeze_embeddings,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            early_stop: self.early_stop,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            clip_norm: if self.no_clip { None } else { Some(5.0) },
            ..TrainConfig::default()
        }
    }
}

fn fmt_f1(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

fn report_text(name: &str, r: &EvalReport) -> String {
    format!(
        "split\texamples\tLU_F1\tpolicy_F1\n{name}\t{}\t{}\t{}\n",
        r.examples,
        fmt_f1(r.lu_f1),
        fmt_f1(r.policy_f1)
    )
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = a.model_config();
    config.validate()?;
    let tc = a.train_config();
    tc.validate()?;
    let dialogues = load_corpus(&a.corpus)?;
    let corpus_hash = hash_file(&a.corpus)?;
    let embeddings_hash = a.embeddings.as_deref().map(hash_file).transpose()?;
    let split = SplitSpec { seed: a.split_seed.unwrap_or(a.seed), ..SplitSpec::default() };

    let inputs = serde_json::to_vec(&(&corpus_hash, &embeddings_hash, &config, &tc, &split))?;
    let manifest = RunManifest {
        model: config.clone(),
        training: tc.clone(),
        corpus: a.corpus.clone(),
        corpus_hash: corpus_hash.clone(),
        embeddings: a.embeddings.clone(),
        embeddings_hash,
        split,
        inputs_hash: content_hash(&inputs),
        out: a.out.clone(),
    };
    create_dir(&a.out)?;
    write_file(&a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let data = prepare(&dialogues, &split, config.history_window)?;
    let embeddings = match &a.embeddings {
        Some(p) => {
            let e = load_embeddings(p, &data.tokens, config.embedding_dim, a.seed)?;
            writeln!(out, "embeddings: {:.1}% of vocabulary found", 100.0 * e.hit_rate).map_err(stdout_err)?;
            Some(e)
        }
        None => None,
    };
    let mut log = String::from("epoch\ttrain_loss\tdev_LU_F1\tdev_policy_F1\n");
    let outcome = run::<f64>(&data, &config, &tc, a.seed, embeddings.as_ref(), |e| {
        let line = e.log_line();
        let _ = writeln!(out, "{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    write_file(&a.out.join("epochs.tsv"), log.as_bytes())?;
    let ckpt = Checkpoint {
        model: outcome.model,
        tokens: data.tokens,
        labels: data.labels,
        meta: CheckpointMeta { split, seed: a.seed, corpus_hash },
    };
    ckpt.save(a.out.join("model.ckpt"))?;
    let report = report_text("test", &outcome.test);
    write_file(&a.out.join("report.tsv"), report.as_bytes())?;
    out.write_all(report.as_bytes()).map_err(stdout_err)?;
    Ok(())
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

struct Loaded {
    ckpt: Checkpoint<f64>,
    data: Prepared,
}

fn load_for_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<Loaded> {
    let ckpt = Checkpoint::<f64>::load(&a.checkpoint)?;
    let dialogues = load_corpus(&a.corpus)?;
    if hash_file(&a.corpus)? != ckpt.meta.corpus_hash {
        writeln!(out, "warning: corpus differs from the one the checkpoint was trained on").map_err(stdout_err)?;
    }
    let window = ckpt.model.config().history_window;
    let split = ckpt.meta.split.split(dialogues.len());
    let build = |ids: &[usize]| {
        build_examples(
            crate::corpus::SessionSplit::select(&dialogues, ids),
            &ckpt.tokens,
            &ckpt.labels,
            window,
        )
    };
    let data = Prepared {
        train: build(&split.train),
        dev: build(&split.dev),
        test: build(&split.test),
        split,
        tokens: ckpt.tokens.clone(),
        labels: ckpt.labels.clone(),
    };
    Ok(Loaded { ckpt, data })
}

fn select(data: &Prepared, split: SplitArg) -> &[crate::model::Example] {
    match split {
        SplitArg::Train => &data.train,
        SplitArg::Dev => &data.dev,
        SplitArg::Test => &data.test,
    }
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Train => "train",
        SplitArg::Dev => "dev",
        SplitArg::Test => "test",
    }
}

fn threshold_of(model: &DialogueModel<f64>, a: &EvalArgs) -> Result<f64> {
    let t = a.threshold.unwrap_or(model.config().threshold);
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Precondition("threshold must lie in (0, 1)".into()));
    }
    Ok(t)
}

fn cmd_evaluate(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_for_eval(a, out)?;
    let split = a.split.unwrap_or(SplitArg::Test);
    let examples = select(&l.data, split);
    let r = evaluate(&l.ckpt.model, examples, &l.data.labels, threshold_of(&l.ckpt.model, a)?)?;
    if r.lu_f1.is_none() && r.policy_f1.is_none() {
        return Err(Error::Contract(format!("no scorable utterances in the {} split", split_name(split))));
    }
    let text = report_text(split_name(split), &r);
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join("evaluation.tsv"), text.as_bytes())?;
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn join(set: &std::collections::BTreeSet<String>) -> String {
    if set.is_empty() {
        "-".into()
    } else {
        set.iter().cloned().collect::<Vec<_>>().join(",")
    }
}

fn cmd_predict(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_for_eval(a, out)?;
    let examples = select(&l.data, a.split.unwrap_or(SplitArg::Test));
    let t = threshold_of(&l.ckpt.model, a)?;
    let probs = predict_all(&l.ckpt.model, examples)?;
    let lu = label_sets(Head::Lu, examples, &probs, &l.data.labels, t);
    let policy = label_sets(Head::Policy, examples, &probs, &l.data.labels, t);
    let mut text = String::from("session\tturn\tLU\tpolicy\n");
    for (i, ex) in examples.iter().enumerate() {
        let find = |v: &[(usize, _, _)]| v.iter().find(|(j, _, _)| *j == i).map(|(_, p, _)| join(p));
        let lu = find(&lu).unwrap_or_else(|| "NA".into());
        let pol = find(&policy).unwrap_or_else(|| "NA".into());
        text.push_str(&format!("{}\t{}\t{lu}\t{pol}\n", ex.session, ex.turn));
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join("predictions.tsv"), text.as_bytes())?;
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn cmd_tune(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let l = load_for_eval(a, out)?;
    let examples = select(&l.data, a.split.unwrap_or(SplitArg::Dev));
    let (t, f1) = tune_threshold(&l.ckpt.model, examples, &l.data.labels)?;
    writeln!(out, "threshold\t{t:.2}\ndev_F1\t{f1:.4}").map_err(stdout_err)
}

/// Runs the primitive suite and a full-loss check on a three-turn toy example.
/// Returns whether every entry passed.
pub fn gradcheck_report(out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    writeln!(out, "op\tmax_rel_err\tstatus").map_err(stdout_err)?;
    for case in primitive_suite(0)? {
        let e = case.max_rel_err();
        let pass = e <= GRADCHECK_TOLERANCE;
        ok &= pass;
        writeln!(out, "{}\t{e:.3e}\t{}", case.case, if pass { "PASS" } else { "FAIL" }).map_err(stdout_err)?;
    }
    let (model, example) = toy_model()?;
    for c in model_check(&model, &example, crate::autodiff::gradcheck::DEFAULT_STEP)? {
        let pass = c.passes(GRADCHECK_TOLERANCE);
        ok &= pass;
        writeln!(out, "model:{}\t{:.3e}\t{}", c.name, c.max_rel_err, if pass { "PASS" } else { "FAIL" })
            .map_err(stdout_err)?;
    }
    Ok(ok)
}

/// A tiny role-split NL model with guidance and one tourist turn preceded by
/// two history turns.
pub fn toy_model() -> Result<(DialogueModel<f64>, crate::model::Example)> {
    use crate::corpus::{Dialogue, LabelVocab, Role, TokenVocab, Turn};
    let t = |r, s: &str, l: &[&str]| Turn::new(r, s, l.iter().map(|x| x.to_string()));
    let d = Dialogue {
        session_id: "toy".into(),
        turns: vec![
            t(Role::Guide, "hello there friend", &["FOL_INFO"]),
            t(Role::Tourist, "where is the park", &["QST_WHERE"]),
            t(Role::Tourist, "is it open now", &["QST_WHEN", "QST_INFO"]),
        ],
    };
    let tokens = TokenVocab::build([&d], 1);
    let labels = LabelVocab::build([&d]);
    let config = ModelConfig {
        history_mode: HistoryMode::NaturalLanguage,
        role_split: true,
        intermediate_guidance: true,
        hidden_dim: 3,
        embedding_dim: 4,
        cnn_widths: vec![2, 3],
        cnn_filters: 2,
        ..ModelConfig::default()
    };
    let model = DialogueModel::new(config, tokens.len(), labels.len(), 11)?;
    let examples = build_examples([&d], &tokens, &labels, HistoryWindow::Last(5));
    let ex = examples.into_iter().last().ok_or_else(|| Error::Contract("toy dialogue has no example".into()))?;
    Ok((model, ex))
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        sessions: a.sessions,
        turns_per_session: a.turns,
        delta: a.delta,
        labels: a.labels,
        topics: a.topics,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec)?;
    create_dir(&a.out)?;
    let path = a.out.join("corpus.jsonl");
    save_corpus(&path, &corpus.dialogues)?;
    save_tables(tables_path(&path), &spec, &corpus)?;
    let turns: usize = corpus.dialogues.iter().map(|d| d.turns.len()).sum();
    writeln!(out, "wrote {} sessions, {turns} turns to {}", corpus.dialogues.len(), path.display()).map_err(stdout_err)
}

/// Executes a parsed command; returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out)?,
        Command::Evaluate(a) => cmd_evaluate(a, out)?,
        Command::Predict(a) => cmd_predict(a, out)?,
        Command::TuneThreshold(a) => cmd_tune(a, out)?,
        Command::Synth(a) => cmd_synth(a, out)?,
        Command::Gradcheck => return Ok(if gradcheck_report(out)? { 0 } else { 1 }),
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
