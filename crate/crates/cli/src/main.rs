//! `formfactor`: corpus generation, training, evaluation, extraction and learning-curve
//! experiments driven by one experiment config file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use formfactor::config::ExperimentConfig;
use formfactor::docmodel::{parse_document, parse_schema, Corpus, TargetSchema};
use formfactor::evaluation::{aggregate, curve_csv, curve_svg, evaluate, CellMetrics};
use formfactor::pipeline::{extract, ModelScorer};
use formfactor::synthcorpus::generate_corpus;
use formfactor::training::Checkpoint;
use formfactor::transfer::{learning_curve, persist_cell, run_id, run_regime, DomainPair, Regime, METRICS_FILE};

#[derive(Parser)]
#[command(name = "formfactor", version, about = "Form-document field extraction experiments")]
struct Cli {
    /// Experiment config (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Source,
    Target,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the source and/or target corpus.
    GenCorpus {
        #[arg(long, value_enum, default_value = "both")]
        which: Which,
        /// Write here instead of the config's corpus directories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one learning-curve cell.
    Train {
        #[arg(long)]
        regime: String,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        /// Runs directory; defaults to `<output_dir>/runs`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the target test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Corpus directory; defaults to the config's target corpus.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Also write a learning-curve SVG from every metrics file under the runs directory.
        #[arg(long)]
        plot: bool,
        /// Report file (stdout when absent); with --plot the SVG goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract fields from documents (files or directories of `.json` files).
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Schema JSON; defaults to the config's target schema.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// JSON-lines output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        documents: Vec<PathBuf>,
    },
    /// Run every (regime, size, seed) cell and aggregate.
    Curve {
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        plot: bool,
        /// Output directory; defaults to `<output_dir>/runs`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure before any work starts: bad flags, bad config values.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn report_error(kind: &str, message: &str) {
    let err = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{err}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FORMFACTOR_LOG_LEVEL", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                report_error("usage", &message);
                ExitCode::from(2)
            } else {
                report_error("runtime", &message);
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let path = path.ok_or_else(|| usage("--config is required for this command"))?;
    ExperimentConfig::load(path).map_err(|e| match e {
        formfactor::config::ConfigError::Io { .. } => anyhow!(e),
        other => usage(other.to_string()),
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::GenCorpus { which, out } => cmd_gen_corpus(&load_config(cfg_path)?, which, out),
        Command::Train {
            regime,
            size,
            seed,
            out,
        } => {
            let regime: Regime = regime.parse().map_err(|e: formfactor::transfer::TransferError| usage(e.to_string()))?;
            cmd_train(&load_config(cfg_path)?, regime, size, seed, out)
        }
        Command::Eval {
            checkpoint,
            test,
            plot,
            out,
        } => cmd_eval(&load_config(cfg_path)?, checkpoint, test, plot, out),
        Command::Extract {
            checkpoint,
            schema,
            out,
            documents,
        } => {
            let cfg = cfg_path.map(|p| load_config(Some(p))).transpose()?;
            let schema = match (schema, &cfg) {
                (Some(p), _) => read_schema(&p)?,
                (None, Some(c)) => c.target.schema(),
                (None, None) => return Err(usage("extract needs --schema or --config")),
            };
            let features = cfg.map(|c| c.features).unwrap_or_default();
            cmd_extract(&checkpoint, &schema, &features, &documents, out)
        }
        Command::Curve {
            seeds,
            jobs,
            plot,
            out,
        } => {
            let mut cfg = load_config(cfg_path)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
                cfg.validate().map_err(|e| usage(e.to_string()))?;
            }
            if jobs == 0 {
                return Err(usage("--jobs must be >= 1"));
            }
            cmd_curve(&cfg, jobs, plot, out)
        }
    }
}

fn read_schema(path: &Path) -> Result<TargetSchema> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_schema(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Timestamps and invocation details live here so every other output stays diffable.
fn write_run_metadata(dir: &Path, command: &str, started: chrono::DateTime<chrono::Utc>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_at": started.to_rfc3339(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
    });
    let path = dir.join("run_metadata.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen_corpus(cfg: &ExperimentConfig, which: Which, out: Option<PathBuf>) -> Result<()> {
    let jobs: Vec<(&str, _, PathBuf)> = match which {
        Which::Source => vec![("source", &cfg.source, cfg.source_dir())],
        Which::Target => vec![("target", &cfg.target, cfg.target_dir())],
        Which::Both => vec![
            ("source", &cfg.source, cfg.source_dir()),
            ("target", &cfg.target, cfg.target_dir()),
        ],
    };
    for (label, spec, default_dir) in jobs {
        let dir = match (&out, which) {
            (Some(o), Which::Both) => o.join(label),
            (Some(o), _) => o.clone(),
            (None, _) => default_dir,
        };
        let corpus = generate_corpus(spec).with_context(|| format!("generating {label} corpus"))?;
        let docs = dir.join("docs");
        if docs.exists() {
            fs::remove_dir_all(&docs).with_context(|| format!("clearing {}", docs.display()))?;
        }
        corpus
            .write_to(&dir)
            .with_context(|| format!("writing {label} corpus"))?;
        log::info!(
            "{label}: {} train + {} test documents in {}",
            corpus.train.len(),
            corpus.test.len(),
            dir.display()
        );
    }
    Ok(())
}

fn read_corpus(dir: &Path, label: &str) -> Result<Corpus> {
    Corpus::read_from(dir).with_context(|| {
        format!(
            "reading {label} corpus at {} (run `formfactor gen-corpus` first)",
            dir.display()
        )
    })
}

fn cmd_train(cfg: &ExperimentConfig, regime: Regime, size: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let started = chrono::Utc::now();
    let source = read_corpus(&cfg.source_dir(), "source")?;
    let target = read_corpus(&cfg.target_dir(), "target")?;
    let rcfg = cfg.regime_config();
    let pair = DomainPair {
        source: &source,
        target: &target,
        target_train_size: size,
    };
    let run = run_regime(regime, &pair, &rcfg, seed)?;
    let scorer = ModelScorer::from_checkpoint(&run.checkpoint);
    let report = evaluate(&scorer, &target.test, &target.schema, &cfg.features, &cfg.eval)?;
    let metrics = CellMetrics::new(regime.as_str(), size, seed, report);
    let runs = out.unwrap_or_else(|| cfg.runs_dir());
    let cell_dir = persist_cell(&runs, &run, &metrics)?;
    write_run_metadata(&cell_dir, &format!("train {}", run_id(regime, size, seed)), started)?;
    println!("{}", json!({ "run_dir": cell_dir, "macro_f1": metrics.macro_f1 }));
    Ok(())
}

fn collect_metrics(runs: &Path) -> Result<Vec<CellMetrics>> {
    let mut cells = Vec::new();
    if !runs.is_dir() {
        return Ok(cells);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_FILE).is_file())
        .collect();
    dirs.sort();
    for d in dirs {
        let path = d.join(METRICS_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        cells.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(cells)
}

fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<PathBuf>,
    test: Option<PathBuf>,
    plot: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    if checkpoint.is_none() && !plot {
        return Err(usage("eval needs --checkpoint, --plot or both"));
    }
    if let Some(ckpt_path) = checkpoint {
        let ckpt = Checkpoint::load(&ckpt_path)
            .with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;
        let corpus = read_corpus(&test.unwrap_or_else(|| cfg.target_dir()), "test")?;
        let scorer = ModelScorer::from_checkpoint(&ckpt);
        scorer.check_schema(&corpus.schema)?;
        let report = evaluate(&scorer, &corpus.test, &corpus.schema, &cfg.features, &cfg.eval)?;
        write_output(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    if plot {
        let cells = collect_metrics(&cfg.runs_dir())?;
        if cells.is_empty() {
            bail!("no metrics files under {}", cfg.runs_dir().display());
        }
        let reports = aggregate(&cells)?;
        let svg_path = match &out {
            Some(p) => p.with_extension("svg"),
            None => cfg.output_dir.join("curve.svg"),
        };
        write_output(Some(&svg_path), &curve_svg(&reports, &curve_title(cfg)))?;
    }
    Ok(())
}

fn curve_title(cfg: &ExperimentConfig) -> String {
    format!("{} → {}", cfg.source.name(), cfg.target.name())
}

fn cmd_extract(
    checkpoint: &Path,
    schema: &TargetSchema,
    features: &formfactor::neighborhood::FeatureConfig,
    documents: &[PathBuf],
    out: Option<PathBuf>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let scorer = ModelScorer::from_checkpoint(&ckpt);
    scorer.check_schema(schema)?;
    let mut files = Vec::new();
    for p in documents {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    let mut lines = String::new();
    let mut failures = 0;
    for f in &files {
        let result = fs::read(f)
            .map_err(anyhow::Error::from)
            .and_then(|b| parse_document(&b).map_err(anyhow::Error::from))
            .and_then(|doc| extract(&doc, schema, &scorer, features).map_err(anyhow::Error::from));
        match result {
            Ok(ex) => {
                lines.push_str(&serde_json::to_string(&ex)?);
                lines.push('\n');
            }
            Err(e) => {
                failures += 1;
                let err = json!({ "error": { "kind": "document", "path": f, "message": format!("{e:#}") } });
                eprintln!("{err}");
            }
        }
    }
    write_output(out.as_deref(), &lines)?;
    if failures > 0 {
        bail!("{failures} of {} documents failed", files.len());
    }
    Ok(())
}

fn cmd_curve(cfg: &ExperimentConfig, jobs: usize, plot: bool, out: Option<PathBuf>) -> Result<()> {
    let started = chrono::Utc::now();
    let source = read_corpus(&cfg.source_dir(), "source")?;
    let target = read_corpus(&cfg.target_dir(), "target")?;
    let runs = out.unwrap_or_else(|| cfg.runs_dir());
    let (reports, _) = learning_curve(
        &source,
        &target,
        &cfg.regime_config(),
        &cfg.eval,
        &cfg.regimes,
        &cfg.sizes,
        &cfg.seeds,
        Some(&runs),
        jobs,
    )?;
    write_output(Some(&runs.join("curve.csv")), &curve_csv(&reports))?;
    write_output(
        Some(&runs.join("report.json")),
        &(serde_json::to_string_pretty(&reports)? + "\n"),
    )?;
    if plot {
        write_output(Some(&runs.join("curve.svg")), &curve_svg(&reports, &curve_title(cfg)))?;
    }
    write_run_metadata(&runs, "curve", started)?;
    print!("{}", curve_csv(&reports));
    Ok(())
}
