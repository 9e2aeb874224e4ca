use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use udnsim::campaign::{run_campaign, CampaignGrid, CampaignTable, ModelSet, PredictorKind, Simulator, Variant};
use udnsim::config::ScenarioConfig;
use udnsim::ml::{self, ModelKind, RoutePredictor, METRICS_HEADER};
use udnsim::mobility::{build_route_network, generate_dataset, TrajectoryDataset};

#[derive(Parser, Debug)]
#[command(name = "udnsim", version, about = "Handover simulation for ultra-dense small-cell networks")]
struct Cli {
    /// Scenario file; the built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the labelled trajectory dataset.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `mobility.dataset_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a route classifier and record its scores.
    Train(TrainArgs),
    /// Run the configured simulation over all iterations.
    Simulate(SimulateArgs),
    /// Sweep velocities, time-to-trigger values and predictors.
    Campaign(CampaignArgs),
    /// Rebuild the aggregate and summary tables from a campaign results file.
    Report {
        /// Long-format results file written by `campaign`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: String,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Metrics file; a row is appended per run.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Overrides the model seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Tree depth limit, an integer or `unlimited`.
    #[arg(long)]
    max_depth: Option<String>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    regularization: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `simulation.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    velocity: Option<f64>,
    #[arg(long)]
    ttt: Option<u32>,
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Trained model file; repeat for several kinds.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Per-tic trace of the first iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CampaignArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `simulation.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    velocities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ttt: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "model")]
    models: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_path: Option<&'a Path>,
    config: &'a ScenarioConfig,
    master_seed: u64,
    outputs: Vec<&'a Path>,
    started_unix_s: u64,
    finished_unix_s: u64,
    wall_time_s: f64,
}

struct Run {
    config_path: Option<PathBuf>,
    config: ScenarioConfig,
    started: u64,
    clock: Instant,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Run {
    fn write_manifest(&self, command: &str, seed: u64, outputs: &[&Path], path: &Path) -> anyhow::Result<()> {
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_path: self.config_path.as_deref(),
            config: &self.config,
            master_seed: seed,
            outputs: outputs.to_vec(),
            started_unix_s: self.started,
            finished_unix_s: unix_now(),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
        };
        write_file(path, &serde_json::to_string_pretty(&m)?)
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `<file>.manifest.json` next to a single-file output.
fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_models(paths: &[PathBuf]) -> anyhow::Result<ModelSet> {
    let mut set = ModelSet::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading model file {}", p.display()))?;
        set.insert(RoutePredictor::from_json(&text)?);
    }
    Ok(set)
}

fn generate_data(run: &Run, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let cfg = &run.config;
    let seed = seed.unwrap_or(cfg.mobility.dataset_seed);
    let network = build_route_network(&cfg.area()?)?;
    let ds = generate_dataset(&network, &cfg.mobility.demands, &cfg.dataset_spec(), seed)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    write_file(out, std::str::from_utf8(&buf)?)?;
    run.write_manifest("generate-data", seed, &[out], &manifest_path(out))?;
    println!("wrote {} rows to {}", ds.len(), out.display());
    Ok(())
}

fn parse_depth(s: &str) -> anyhow::Result<Option<usize>> {
    if s == "unlimited" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| udnsim::Error::InvalidArgument(format!("--max-depth must be an integer or `unlimited`, got `{s}`")).into())
}

fn train(run: &Run, a: &TrainArgs) -> anyhow::Result<()> {
    let kind: ModelKind = a.model.parse()?;
    let ml_cfg = &run.config.ml;
    let file = File::open(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let data = TrajectoryDataset::read_csv(std::io::BufReader::new(file))?;
    let (train, test) = ml::split_dataset(&data, ml_cfg.train_fraction, ml_cfg.split_seed)?;
    let depth = a.max_depth.as_deref().map(parse_depth).transpose()?;

    let model = match kind {
        ModelKind::Svm => {
            let mut p = ml_cfg.svm();
            p.epochs = a.epochs.unwrap_or(p.epochs);
            p.learning_rate = a.learning_rate.unwrap_or(p.learning_rate);
            p.regularization = a.regularization.unwrap_or(p.regularization);
            p.seed = a.seed.unwrap_or(p.seed);
            ml::train_svm(&train, &p)?
        }
        ModelKind::Dtc => {
            let mut p = ml_cfg.dtc();
            p.max_depth = depth.unwrap_or(p.max_depth);
            p.min_samples_leaf = a.min_samples_leaf.unwrap_or(p.min_samples_leaf);
            p.seed = a.seed.unwrap_or(p.seed);
            ml::train_dtc(&train, &p)?
        }
        ModelKind::Rfc => {
            let mut p = ml_cfg.rfc();
            p.max_depth = depth.unwrap_or(p.max_depth);
            p.min_samples_leaf = a.min_samples_leaf.unwrap_or(p.min_samples_leaf);
            p.n_trees = a.n_trees.unwrap_or(p.n_trees);
            p.max_features = a.max_features.or(p.max_features);
            p.seed = a.seed.unwrap_or(p.seed);
            ml::train_rfc(&train, &p)?
        }
        ModelKind::Oracle => bail!(udnsim::Error::InvalidArgument(
            "the oracle is built in and cannot be trained".into()
        )),
    };
    let metrics = ml::evaluate(&model, &train, &test)?;
    write_file(&a.out, &model.to_json()?)?;
    let row = metrics.csv_row(kind.name());
    if let Some(path) = &a.metrics {
        let fresh = !path.exists();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        if fresh {
            writeln!(f, "{METRICS_HEADER}")?;
        }
        writeln!(f, "{row}")?;
    }
    let seed = a.seed.unwrap_or(match kind {
        ModelKind::Svm => ml_cfg.svm_seed,
        ModelKind::Dtc => ml_cfg.dtc_seed,
        _ => ml_cfg.rfc_seed,
    });
    run.write_manifest("train", seed, &[&a.out], &manifest_path(&a.out))?;
    println!("{METRICS_HEADER}\n{row}");
    Ok(())
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> anyhow::Result<()> {
    let sim_cfg = &mut run.config.simulation;
    if let Some(v) = a.velocity {
        sim_cfg.velocity_kmh = v;
    }
    if let Some(p) = &a.predictor {
        sim_cfg.predictor = p.parse()?;
    }
    if let Some(n) = a.iterations {
        sim_cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        sim_cfg.master_seed = s;
    }
    if let Some(t) = a.ttt {
        run.config.handover.ttt_tics = t;
    }
    run.config.validate()?;
    let cfg = run.config.sim_config()?;
    let mut sim = Simulator::new(cfg.clone(), load_models(&a.models)?)?;
    let report = sim.simulate()?;

    if let Some(path) = &a.trace {
        let variant = Variant {
            predictor: cfg.predictor,
            ttt_tics: cfg.handover.ttt_tics,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        sim.run_iteration(cfg.velocity_kmh, &[variant], cfg.iteration_seed(0), None, Some(&mut w))?;
        w.flush()?;
    }

    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            let mut outputs = vec![path.as_path()];
            outputs.extend(a.trace.as_deref());
            run.write_manifest("simulate", cfg.master_seed, &outputs, &manifest_path(path))?;
            println!(
                "{} iterations: ho_times {} (mean {:.2}), rlf {}",
                report.iterations, report.ho_times, report.mean_ho_times, report.rlf_count
            );
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn print_summary(table: &CampaignTable) {
    let summaries = table.predictor_summaries();
    if summaries.is_empty() {
        println!("no reduction ratios: the grid has no `none` baseline to compare against");
        return;
    }
    println!("{:<10} {:>16} {:>18}", "predictor", "mean reduction %", "pooled reduction %");
    for s in &summaries {
        println!("{:<10} {:>16.2} {:>18.2}", s.predictor.name(), s.mean_reduction_pct, s.pooled_reduction_pct);
    }
    if let Some(s) = table.overall_reduction() {
        println!("{:<10} {:>16.2} {:>18.2}", "overall", s.mean_reduction_pct, s.pooled_reduction_pct);
    }
}

fn campaign(run: &mut Run, a: &CampaignArgs) -> anyhow::Result<()> {
    let c = &mut run.config.campaign;
    if let Some(v) = &a.velocities {
        c.velocities_kmh = v.clone();
    }
    if let Some(t) = &a.ttt {
        c.ttt_tics = t.clone();
    }
    if let Some(p) = &a.predictors {
        c.predictors = p.iter().map(|s| s.parse()).collect::<udnsim::Result<Vec<PredictorKind>>>()?;
    }
    if let Some(n) = a.iterations {
        run.config.simulation.iterations = n;
    }
    if let Some(s) = a.seed {
        run.config.simulation.master_seed = s;
    }
    run.config.validate()?;
    let cfg = run.config.sim_config()?;
    let grid = CampaignGrid {
        velocities_kmh: run.config.campaign.velocities_kmh.clone(),
        ttt_tics: run.config.campaign.ttt_tics.clone(),
        predictors: run.config.campaign.predictors.clone(),
        iterations: cfg.iterations,
    };
    let models = load_models(&a.models)?;
    for p in &grid.predictors {
        models.get(*p)?;
    }
    let mut sim = Simulator::new(cfg.clone(), models)?;
    let table = run_campaign(&mut sim, &grid)?;

    let results = a.out.join("campaign.csv");
    let aggregate = a.out.join("aggregate.csv");
    let summary = a.out.join("summary.csv");
    write_file(&results, &table.to_csv())?;
    write_file(&aggregate, &table.aggregate_csv())?;
    write_file(&summary, &table.summary_csv())?;
    run.write_manifest(
        "campaign",
        cfg.master_seed,
        &[&results, &aggregate, &summary],
        &a.out.join("manifest.json"),
    )?;
    println!("{} cells x {} iterations written to {}", table.aggregate().len(), grid.iterations, a.out.display());
    print_summary(&table);
    Ok(())
}

fn report(run: &Run, results: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(results).with_context(|| format!("reading {}", results.display()))?;
    let table = CampaignTable::from_csv(&text)?;
    let aggregate = out.join("aggregate.csv");
    let summary = out.join("summary.csv");
    write_file(&aggregate, &table.aggregate_csv())?;
    write_file(&summary, &table.summary_csv())?;
    run.write_manifest(
        "report",
        run.config.simulation.master_seed,
        &[&aggregate, &summary],
        &out.join("manifest.json"),
    )?;
    print_summary(&table);
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let mut run = Run {
        config_path: cli.config.clone(),
        config,
        started: unix_now(),
        clock: Instant::now(),
    };
    match &cli.command {
        Command::GenerateData { out, seed } => generate_data(&run, out, *seed),
        Command::Train(a) => train(&run, a),
        Command::Simulate(a) => simulate(&mut run, a),
        Command::Campaign(a) => campaign(&mut run, a),
        Command::Report { results, out } => report(&run, results, out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<udnsim::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
