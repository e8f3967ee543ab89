use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use uml_core::experiments::{self, ExperimentConfig, LabelMap, MetricsRecord, Workbench};
use uml_core::simenv::{self, DatasetBundle, ScenarioSpec, SimFrame, SimWorld};
use uml_core::store;
use uml_core::{Learner, LearningMode};

/// Uncertainty-modulated lifelong learning: data generation, training,
/// evaluation and experiment protocols.
#[derive(Parser)]
#[command(name = "uml", version)]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration as JSON.
    Config,
    /// Generate the ground and aerial datasets into a directory.
    GenData {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on one or more streams.
    Train {
        /// Start from this model instead of an empty one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Stream files (JSON lines), presented in seeded random order.
        #[arg(long = "stream", required = true)]
        streams: Vec<PathBuf>,
        /// supervised, unsupervised or frozen.
        #[arg(long, default_value = "supervised")]
        mode: String,
        /// Model output path. Defaults to --model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model on streams without modifying it.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "stream", required = true)]
        streams: Vec<PathBuf>,
        /// Metrics JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a stream and score test streams at each checkpoint.
    Curve {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Training stream.
        #[arg(long)]
        stream: PathBuf,
        /// Test stream as `name=path`. Repeatable.
        #[arg(long = "test", value_parser = parse_test)]
        tests: Vec<(String, PathBuf)>,
        #[arg(long, default_value = "supervised")]
        mode: String,
        /// Output directory for metrics.csv and the trained model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised training on the ground stream.
    ExpGround(ExpArgs),
    /// Ground model to aerial views of sets A and O.
    ExpTransfer(ExpArgs),
    /// Transfer followed by aerial views of set B.
    ExpBoundary(ExpArgs),
    /// Unsupervised learning of the novel set, then labeling.
    ExpOneshot {
        #[command(flatten)]
        exp: ExpArgs,
        /// Label map (JSON object of class index or "*" to label).
        /// Defaults to mapping every flagged class to the configured label.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Ground model retrained at single and multiple altitudes.
    ExpHeights(ExpArgs),
    /// Scripted self-supervised mission over two intersections.
    ExpMission(ExpArgs),
    /// Assign labels to classes flagged for labeling.
    Label {
        #[arg(long)]
        model: PathBuf,
        /// Label map file. Without it, each class is prompted for on stdin
        /// and a blank answer leaves it flagged.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Model output path. Defaults to --model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ExpArgs {
    /// Input model. Not used by exp-ground.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset directory from gen-data. Generated in memory when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for metrics.csv, summary.json and model.uml.json.
    #[arg(long)]
    out: PathBuf,
}

/// Config file: an experiment configuration whose scenario may live in a
/// separate file.
#[derive(Deserialize)]
struct ConfigFile {
    #[serde(flatten)]
    config: ExperimentConfig,
    scenario_path: Option<PathBuf>,
}

fn parse_test(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_owned(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            let file: ConfigFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?;
            let mut cfg = file.config;
            if let Some(sp) = file.scenario_path {
                let sp = p.parent().unwrap_or(Path::new(".")).join(sp);
                cfg.scenario = ScenarioSpec::load(&sp)
                    .with_context(|| format!("loading scenario {}", sp.display()))?;
            }
            cfg
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_mode(s: &str) -> Result<LearningMode> {
    let mode: LearningMode = s.parse()?;
    if mode == LearningMode::SelfSupervised {
        bail!("self-supervised learning needs spatial memory; use exp-mission");
    }
    Ok(mode)
}

fn load_streams(paths: &[PathBuf]) -> Result<Vec<SimFrame>> {
    let mut frames = Vec::new();
    for p in paths {
        frames.extend(simenv::load_stream(p).with_context(|| format!("loading {}", p.display()))?);
    }
    Ok(frames)
}

fn stream_name(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".jsonl").to_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_model(path: &Path, cfg: &ExperimentConfig) -> Result<Learner> {
    store::load_expecting(path, cfg.scenario.raw_dimension())
        .with_context(|| format!("loading model {}", path.display()))
}

fn save_model(learner: &Learner, path: &Path) -> Result<()> {
    store::save(learner, path).with_context(|| format!("saving model {}", path.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    experiments::write_metrics_csv(records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn print_records(records: &[MetricsRecord]) {
    for r in records {
        let accs: Vec<String> = r
            .accuracies
            .iter()
            .map(|(k, v)| format!("{k}={v:.2}"))
            .collect();
        println!(
            "{} {} {:>5.1}% {}",
            r.experiment,
            r.phase,
            r.fraction,
            accs.join(" ")
        );
    }
}

fn workbench(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Workbench> {
    match data {
        None => Ok(Workbench::build(cfg)?),
        Some(dir) => Ok(Workbench {
            world: SimWorld::build(&cfg.scenario)?,
            data: DatasetBundle::load(dir)
                .with_context(|| format!("loading datasets from {}", dir.display()))?,
        }),
    }
}

fn required_model(args: &ExpArgs, cfg: &ExperimentConfig) -> Result<Learner> {
    let path = args
        .model
        .as_deref()
        .context("--model is required for this experiment")?;
    load_model(path, cfg)
}

/// Writes metrics.csv, summary.json and model.uml.json into `out`.
fn finish(
    out: &Path,
    cfg: &ExperimentConfig,
    name: &str,
    learner: &Learner,
    records: &[MetricsRecord],
    extra: Value,
) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&out.join("metrics.csv"), records)?;
    save_model(
        learner,
        &out.join(format!("model.{}", store::MODEL_EXTENSION)),
    )?;
    let summary = json!({
        "experiment": name,
        "seed": cfg.seed,
        "scenario_seed": cfg.scenario.seed,
        "state_digest": store::state_digest(learner)?,
        "classes": learner.registry.len(),
        "label_requests": learner.registry.flag_label_requests(),
        "records": records,
        "details": extra,
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_records(records);
    Ok(())
}

fn prompt_labels(learner: &mut Learner) -> Result<Vec<(u32, String)>> {
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut applied = Vec::new();
    for class in learner.registry.flag_label_requests() {
        let rec = learner
            .registry
            .get(class)
            .context("flagged class is missing from the registry")?;
        print!(
            "class {} support {} exemplar {}\nlabel (blank to skip)> ",
            class, rec.support, rec.exemplar
        );
        io::stdout().flush()?;
        let Some(line) = lines.next().transpose()? else {
            println!();
            break;
        };
        let label = line.trim();
        if label.is_empty() {
            continue;
        }
        learner.assign_human_label(&[class], label)?;
        applied.push((class.0, label.to_owned()));
    }
    Ok(applied)
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Config => {
            let cfg = load_config(cfg_path, cli.seed)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::GenData { out } => {
            let mut cfg = load_config(cfg_path, None)?;
            if let Some(s) = cli.seed {
                cfg.scenario.seed = s;
            }
            let world = SimWorld::build(&cfg.scenario)?;
            let data = world.generate_datasets();
            data.save(&out)
                .with_context(|| format!("writing datasets to {}", out.display()))?;
            for (name, entry) in &data.manifest {
                println!("{name} {}", entry.count);
            }
        }
        Command::Train {
            model,
            streams,
            mode,
            out,
        } => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let mode = parse_mode(&mode)?;
            let out = out
                .or_else(|| model.clone())
                .context("--out or --model is required")?;
            let mut learner = match &model {
                Some(p) => load_model(p, &cfg)?,
                None => cfg.new_learner()?,
            };
            let frames = load_streams(&streams)?;
            let order = experiments::shuffled_order(frames.len(), cfg.seed);
            let stats =
                experiments::train_frames(&mut learner, order.iter().map(|&i| &frames[i]), mode)?;
            save_model(&learner, &out)?;
            println!(
                "samples {} new_classes {} resets {} match_tracks {}",
                stats.samples, stats.new_classes, stats.resets, stats.match_tracks
            );
        }
        Command::Eval {
            model,
            streams,
            out,
        } => {
            let learner = store::load(&model)
                .with_context(|| format!("loading model {}", model.display()))?;
            let mut scores = BTreeMap::new();
            for p in &streams {
                let frames = load_streams(std::slice::from_ref(p))?;
                let s = experiments::score(&learner, &frames)?;
                println!(
                    "{} {:.2} ({}/{}, {} unknown)",
                    stream_name(p),
                    s.accuracy(),
                    s.correct,
                    s.total,
                    s.unknown
                );
                scores.insert(
                    stream_name(p),
                    json!({
                        "accuracy": s.accuracy(),
                        "correct": s.correct,
                        "unknown": s.unknown,
                        "total": s.total,
                    }),
                );
            }
            if let Some(out) = out {
                write_json(&out, &json!({ "scores": scores }))?;
            }
        }
        Command::Curve {
            model,
            stream,
            tests,
            mode,
            out,
        } => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let mode = parse_mode(&mode)?;
            let mut learner = match &model {
                Some(p) => load_model(p, &cfg)?,
                None => cfg.new_learner()?,
            };
            let train = load_streams(std::slice::from_ref(&stream))?;
            let mut loaded = Vec::with_capacity(tests.len());
            for (name, path) in &tests {
                loaded.push((name.as_str(), load_streams(std::slice::from_ref(path))?));
            }
            let sets: Vec<(&str, &[SimFrame])> =
                loaded.iter().map(|(n, f)| (*n, f.as_slice())).collect();
            let (records, stats) = experiments::train_curve(
                &mut learner,
                &train,
                mode,
                &cfg.checkpoints,
                &sets,
                "curve",
                &stream_name(&stream),
                cfg.seed,
            )?;
            finish(
                &out,
                &cfg,
                "curve",
                &learner,
                &records,
                json!({ "stats": stats }),
            )?;
        }
        Command::ExpGround(args) => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let bench = workbench(&cfg, args.data.as_deref())?;
            let r = experiments::train_ground(&cfg, &bench)?;
            finish(
                &args.out,
                &cfg,
                "ground",
                &r.learner,
                &[r.record],
                json!({ "stats": r.stats }),
            )?;
        }
        Command::ExpTransfer(args) => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let ground = required_model(&args, &cfg)?;
            let bench = workbench(&cfg, args.data.as_deref())?;
            let r = experiments::exp_transfer(&cfg, &bench, &ground)?;
            finish(
                &args.out,
                &cfg,
                "transfer",
                &r.learner,
                &r.records,
                Value::Null,
            )?;
        }
        Command::ExpBoundary(args) => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let ground = required_model(&args, &cfg)?;
            let bench = workbench(&cfg, args.data.as_deref())?;
            let r = experiments::exp_boundary(&cfg, &bench, &ground)?;
            finish(
                &args.out,
                &cfg,
                "boundary",
                &r.learner,
                &r.records,
                Value::Null,
            )?;
        }
        Command::ExpOneshot { exp, map } => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let model = required_model(&exp, &cfg)?;
            let labels = match &map {
                Some(p) => LabelMap::from_json(
                    &std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => LabelMap::all(&cfg.oneshot.label),
            };
            let bench = workbench(&cfg, exp.data.as_deref())?;
            let r = experiments::exp_oneshot(&cfg, &bench, &model, &labels)?;
            let extra = json!({
                "stats": r.stats,
                "flagged": r.flagged,
                "applied": r.applied,
                "unknown_before_labeling": r.unknown_before_labeling,
            });
            finish(&exp.out, &cfg, "oneshot", &r.learner, &r.records, extra)?;
        }
        Command::ExpHeights(args) => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let ground = required_model(&args, &cfg)?;
            let bench = workbench(&cfg, args.data.as_deref())?;
            let r = experiments::exp_heights(&cfg, &bench, &ground)?;
            finish(
                &args.out,
                &cfg,
                "heights",
                &ground,
                &r.records,
                json!({ "curves": r.curves }),
            )?;
        }
        Command::ExpMission(args) => {
            let cfg = load_config(cfg_path, cli.seed)?;
            let ground = required_model(&args, &cfg)?;
            let bench = workbench(&cfg, args.data.as_deref())?;
            let r = experiments::exp_mission(&cfg, &bench, &ground)?;
            let extra = json!({ "learning": r.learning, "passes": r.passes });
            finish(&args.out, &cfg, "mission", &r.learner, &r.records, extra)?;
        }
        Command::Label { model, map, out } => {
            let mut learner = store::load(&model)
                .with_context(|| format!("loading model {}", model.display()))?;
            if learner.registry.flag_label_requests().is_empty() {
                println!("none");
                return Ok(());
            }
            let applied: Vec<(u32, String)> = match &map {
                Some(p) => LabelMap::from_json(
                    &std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?
                .apply(&mut learner)?
                .into_iter()
                .map(|(c, l)| (c.0, l))
                .collect(),
                None => prompt_labels(&mut learner)?,
            };
            for (class, label) in &applied {
                println!("class {class} -> {label}");
            }
            let remaining = learner.registry.flag_label_requests();
            println!("still flagged {}", remaining.len());
            save_model(&learner, out.as_deref().unwrap_or(&model))?;
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
