use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use skytrail_core::ingest::{
    load_ground_truth, load_sequence, load_timestamps, load_trajectory, save_ground_truth,
    save_sequence, save_trajectory, SequenceFormat,
};
use skytrail_core::synth::{self, SceneSpec};
use skytrail_core::{eval, Error, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "skytrail",
    version,
    about = "Unsupervised micro-UAV trajectory extraction from LiDAR sequences"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect the UAV and write its trajectory.
    Detect(DetectArgs),
    /// Generate a synthetic scene.
    Synth(SynthArgs),
    /// Score a predicted trajectory against ground truth.
    Eval(EvalArgs),
    /// Dump clusters and their scores as JSON.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set cluster.eps=1.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => json!({}),
        };
        Ok(PipelineConfig::default().layered(file, &self.overrides)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

impl From<Format> for SequenceFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => SequenceFormat::Csv,
            Format::Bin => SequenceFormat::Bin,
        }
    }
}

fn input_format(path: &Path, explicit: Option<Format>) -> SequenceFormat {
    explicit.map_or_else(|| SequenceFormat::from_path(path), Into::into)
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sequence format (default: from extension, `.bin` is binary).
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Query timestamps, first CSV column (default: frame timestamps).
    #[arg(long)]
    timestamps: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    spec: Option<PathBuf>,
    /// A named scene from the built-in suite.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also write per-point source labels.
    #[arg(long)]
    provenance: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Write the report as JSON here as well.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Write one `cluster_<id>.csv` per cluster into this directory.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn detect(a: &DetectArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let (seq, stats) = load_sequence(&a.input, input_format(&a.input, a.format))
        .with_context(|| format!("loading {}", a.input.display()))?;
    let queries = a
        .timestamps
        .as_ref()
        .map(|p| load_timestamps(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let det = skytrail_core::detect(&seq, &cfg, queries.as_deref())?;
    save_trajectory(&det.trajectory, &a.out)?;

    let mut report = serde_json::to_value(&det.report)?;
    report["rejected_non_finite"] = json!(stats.rejected_non_finite);
    report["paths"] = json!({
        "input": a.input,
        "timestamps": a.timestamps,
        "out": a.out,
    });
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    eprintln!(
        "selected cluster {} ({} points), sda {:.4}",
        det.report.selected_cluster.unwrap_or_default(),
        det.report.selected_points,
        det.report.sda.unwrap_or_default()
    );
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = match (&a.spec, &a.scene) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SceneSpec::from_json(&text)?
        }
        (None, Some(name)) => match synth::suite_scene(name) {
            Some(s) => s,
            None => {
                let names: Vec<String> = synth::standard_suite()
                    .into_iter()
                    .map(|s| s.name)
                    .collect();
                bail!("unknown scene `{name}` (known: {})", names.join(", "));
            }
        },
        (None, None) => unreachable!("clap requires one of --spec/--scene"),
    };
    let scene = synth::generate(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let seq_name = match a.format {
        Format::Csv => "sequence.csv",
        Format::Bin => "sequence.bin",
    };
    save_sequence(&scene.sequence, &a.out.join(seq_name), a.format.into())?;
    save_ground_truth(&scene.gt, &a.out.join("gt.csv"))?;
    write_json(&a.out.join("scene.json"), &serde_json::to_value(&spec)?)?;
    if a.provenance {
        let mut text = String::from("index,source\n");
        for (i, p) in scene.provenance.iter().enumerate() {
            let _ = writeln!(text, "{i},{}", p.label());
        }
        fs::write(a.out.join("provenance.csv"), text)?;
    }
    eprintln!(
        "{} frames, {} points ({} target) -> {}",
        scene.sequence.n(),
        scene.sequence.point_count(),
        scene.target_count(),
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: &EvalArgs) -> Result<()> {
    let pred = load_trajectory(&a.pred).with_context(|| format!("loading {}", a.pred.display()))?;
    let gt = load_ground_truth(&a.gt).with_context(|| format!("loading {}", a.gt.display()))?;
    let report = eval::evaluate(&pred, &gt)?;
    print!("{}", report.table());
    if let Some(p) = &a.json {
        write_json(p, &serde_json::to_value(&report)?)?;
    }
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let (seq, _) = load_sequence(&a.input, input_format(&a.input, a.format))
        .with_context(|| format!("loading {}", a.input.display()))?;
    let mut report = skytrail_core::inspect(&seq, &cfg, a.export_dir.is_some())?;
    if let Some(dir) = &a.export_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for c in &report.clusters {
            let mut text = String::from("x,y,z,t,frame\n");
            for p in report.points.iter().filter(|p| p.cluster == Some(c.id)) {
                let _ = writeln!(text, "{},{},{},{},{}", p.x, p.y, p.z, p.t, p.frame);
            }
            let path = dir.join(format!("cluster_{}.csv", c.id));
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        report.points.clear();
    }
    write_json(&a.out, &serde_json::to_value(&report)?)?;
    eprintln!("{} clusters", report.clusters.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match &cli.cmd {
        Command::Detect(a) => detect(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => evaluate(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let no_detection = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e.root(), Error::NoCandidate));
            ExitCode::from(if no_detection { 2 } else { 1 })
        }
    }
}
