//! The `recsteal` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recsteal_core::attack::{execute_attack, AttackInputs, CloneModel};
use recsteal_core::metrics::mean_agreement;
use recsteal_core::train::train_model_observed;
use recsteal_core::{AttackMethod, EmbeddingModel, IdMap, InteractionDataset, QueryOracle};

use crate::checkpoint::{self, Checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{AppError, Result};
use crate::experiment::{self, ResultRow, SeedSplit};
use crate::io::{load_interactions, write_interactions, Format, LoadOptions};
use crate::{querylog, report};

const RESULT_HELP: &str = "\
Result CSV columns, in order:
  experiment, seed, method, target_kind, clone_kind, k, available_fraction,
  aux_fraction, overlap_ratio, query_budget (empty = every available user),
  mix_count (0 = no defense), agreement, recall_raw, recall_defended,
  queries_spent, wall_seconds (0 unless record_wall_time), error

Rows are ordered by sweep point, then seed, then attack. RECSTEAL_THREADS
caps the number of seeds run in parallel.";

#[derive(Debug, Parser)]
#[command(
    name = "recsteal",
    version,
    about = "Model-stealing attacks on embedding recommenders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset and print a summary.
    Ingest(IngestArgs),
    /// Fit a target or auxiliary model for one seed and checkpoint it.
    Train(TrainArgs),
    /// Run one attack against a target checkpoint.
    Attack(AttackArgs),
    /// Run a full config-driven experiment.
    #[command(after_help = RESULT_HELP)]
    Run(RunArgs),
    /// Aggregate result CSVs into mean ± std tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Interaction file: user_id,item_id[,rating,timestamp,...].
    path: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    delimiter: Option<String>,
    /// Force header handling instead of detecting it.
    #[arg(long)]
    header: Option<bool>,
    /// Drop users and items with fewer interactions (applied repeatedly).
    #[arg(long, default_value_t = 0)]
    min_interactions: usize,
    /// Write the filtered interactions as user_id,item_id CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Target,
    Auxiliary,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Role::Target)]
    role: Role,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long)]
    config: PathBuf,
    /// Target checkpoint written by `train --role target` with the same seed.
    #[arg(long)]
    target: PathBuf,
    /// Auxiliary checkpoint; trained on the fly when omitted.
    #[arg(long)]
    aux: Option<PathBuf>,
    #[arg(long, default_value = "ptaq")]
    method: AttackMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clone checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Query log CSV path.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Result CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the rows as a JSON array.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Result CSVs written by `run`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Markdown table path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the groups as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 usage error, 2 runtime failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Attack(a) => attack(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn ids(map: &IdMap) -> Vec<String> {
    (0..map.len())
        .map(|i| map.raw(i).map_or_else(|| i.to_string(), str::to_string))
        .collect()
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| AppError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| AppError::io("<stdout>", e))
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| AppError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json).map_err(|e| AppError::io(path, e))
}

fn summarize(ds: &InteractionDataset) -> String {
    let cells = ds.num_users() as f64 * ds.num_items() as f64;
    format!(
        "users: {}\nitems: {}\ninteractions: {}\nmean per user: {:.2}\ndensity: {:.6}\n",
        ds.user_count(),
        ds.num_items(),
        ds.num_interactions(),
        ds.mean_interactions_per_user(),
        if cells > 0.0 {
            ds.num_interactions() as f64 / cells
        } else {
            0.0
        }
    )
}

fn ingest(a: IngestArgs) -> Result<()> {
    let opts = LoadOptions {
        format: a.format,
        delimiter: a.delimiter,
        header: a.header,
    };
    let mut ds = load_interactions(&a.path, &opts)?;
    if a.min_interactions > 0 {
        ds = ds.filter_min_interactions(a.min_interactions)?;
    }
    print!("{}", summarize(&ds));
    if let Some(out) = a.out {
        write_interactions(&out, &ds)?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let ds = experiment::prepare_dataset(&cfg)?;
    let split = SeedSplit::new(&ds, &cfg, a.seed)?;
    let (kind, data, tc) = match a.role {
        Role::Target => (
            cfg.target_kind,
            split.target_train.clone(),
            experiment::target_train_config(&cfg, a.seed),
        ),
        Role::Auxiliary => (
            cfg.clone_kind,
            split.aux_subset(cfg.aux_fraction)?,
            experiment::aux_train_config(&cfg, a.seed),
        ),
    };
    let (model, summary) = train_model_observed(kind, &data, &tc, &mut |_| {})?;
    let mut ckpt = Checkpoint::new(model, ids(ds.user_ids()), ids(ds.item_ids()));
    ckpt.summary = Some(summary.clone());
    checkpoint::save(&a.out, &ckpt)?;
    println!(
        "{} {} model: {} epochs, final loss {:.6}",
        kind,
        match a.role {
            Role::Target => "target",
            Role::Auxiliary => "auxiliary",
        },
        summary.epochs_run,
        summary.final_loss
    );
    Ok(())
}

fn load_model(path: &Path, ds: &InteractionDataset) -> Result<EmbeddingModel> {
    let ckpt: Checkpoint<EmbeddingModel> = checkpoint::load(path)?;
    if ckpt.user_ids != ids(ds.user_ids()) || ckpt.item_ids != ids(ds.item_ids()) {
        return Err(AppError::Config(format!(
            "{}: checkpoint ids do not match the configured dataset",
            path.display()
        )));
    }
    Ok(ckpt.model)
}

fn attack(a: AttackArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let ds = experiment::prepare_dataset(&cfg)?;
    let split = SeedSplit::new(&ds, &cfg, a.seed)?;
    let target = Arc::new(load_model(&a.target, &ds)?);
    let aux = if a.method.uses_auxiliary() {
        Some(match &a.aux {
            Some(p) => load_model(p, &ds)?,
            None => recsteal_core::train::train_model(
                cfg.clone_kind,
                &split.aux_subset(cfg.aux_fraction)?,
                &experiment::aux_train_config(&cfg, a.seed),
            )?,
        })
    } else {
        None
    };
    let available = split.available(cfg.available_fraction)?;
    let (query_users, budget) = split.query_users(&available, cfg.query_budget);
    let mask = split.overlap_mask(cfg.overlap_ratio)?;
    let clone_cfg = experiment::clone_train_config(&cfg, a.seed);
    let finetune_cfg = experiment::finetune_config(&cfg, a.seed);
    let inputs = AttackInputs {
        available: &available,
        aux_items: aux.as_ref().map(EmbeddingModel::item_embeddings),
        mask: Some(&mask),
        clone_kind: cfg.clone_kind,
        clone_cfg: &clone_cfg,
        finetune_cfg: &finetune_cfg,
        spec: &cfg.stealing_loss,
        qsd_spec: &cfg.qsd_loss,
        query_users: &query_users,
        train_attention: cfg.train_attention,
    };
    let train = Arc::new(split.target_train.clone());
    let mut oracle = QueryOracle::new(Arc::clone(&target), Arc::clone(&train), cfg.k, budget)?;
    if let Some(d) = cfg.defense {
        oracle = oracle.with_defense(experiment::defense_config(d, a.seed))?;
    }
    let outcome = execute_attack(a.method, &inputs, &mut oracle)?;
    let users: Vec<usize> = available.users().collect();
    let agr = mean_agreement(&*target, &outcome.clone, &users, cfg.k, &train)?;
    println!(
        "{}: agreement@{} {:.4} over {} users, {} queries",
        a.method,
        cfg.k,
        agr,
        users.len(),
        outcome.queries_spent
    );
    if let Some(p) = a.log {
        querylog::write(
            &p,
            &querylog::rows(oracle.log(), ds.user_ids(), ds.item_ids()),
        )?;
    }
    if let Some(p) = a.out {
        let ckpt: Checkpoint<CloneModel> =
            Checkpoint::new(outcome.clone, ids(ds.user_ids()), ids(ds.item_ids()));
        checkpoint::save(&p, &ckpt)?;
    }
    Ok(())
}

fn rows_csv(rows: &[ResultRow], path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    experiment::write_csv(&mut buf, rows).map_err(|e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    let rows = experiment::run_experiment(&cfg)?;
    let out = a.out.as_deref();
    let text = rows_csv(&rows, out.unwrap_or(Path::new("<stdout>")))?;
    write_text(out, &text)?;
    if let Some(p) = a.json {
        write_json(&p, &rows)?;
    }
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} rows carry an error", rows.len());
    }
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    experiment::read_csv(file).map_err(|e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        rows.extend(read_results(p)?);
    }
    let groups = report::aggregate(&rows);
    write_text(a.out.as_deref(), &report::render_table(&groups))?;
    if let Some(p) = a.json {
        write_json(&p, &groups)?;
    }
    Ok(())
}
