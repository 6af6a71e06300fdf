use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use focustrack_core::dataio::{
    format_assignment_table, format_mot, generate_scene, parse_assign_scene, read_mot, write_mot, DescriptorFile,
    MotionModel, OcclusionWindow, SceneSpec,
};
use focustrack_core::label_assign::{assign, loss_suite};
use focustrack_core::lifting::{CompletionMethod, UnfilledReason};
use focustrack_core::pipeline::{complete_trajectories, eval_frames, mot_to_trajectories, track_lines, trajectories_to_mot};
use focustrack_core::{evaluate, Error, RunConfig};

/// Multi-object tracking with appearance/motion association, iterated
/// Kalman updates and SE(3) gap filling.
#[derive(Parser, Debug)]
#[command(name = "focustrack", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track detections and write MOT-format results.
    Track(TrackArgs),
    /// Fill gaps in a result file.
    Interpolate(InterpolateArgs),
    /// Score a result file against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene: gt.txt, det.txt and det.ftfv.
    Simulate(SimulateArgs),
    /// Run label assignment on a scene description and print the table.
    Assign(AssignArgs),
    /// Print the effective configuration as a config file.
    Config,
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Detection file (MOT text).
    #[arg(required_unless_present = "batch")]
    detections: Option<PathBuf>,
    /// Descriptor sidecar keyed by (frame, detection index).
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
    /// Read head keypoints from the three trailing MOT fields.
    #[arg(long)]
    head_format: bool,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Manifest of sequences, one `DETS OUT [FEATURES]` line each; relative
    /// paths are taken from the manifest's directory.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["detections", "features", "out"])]
    batch: Option<PathBuf>,
    /// Sequences tracked concurrently in batch mode.
    #[arg(long, default_value_t = 1, requires = "batch")]
    jobs: usize,
}

#[derive(Args, Debug)]
struct InterpolateArgs {
    /// Result file (MOT text).
    result: PathBuf,
    /// linear2d, linear3d, se3_linear or se3_kalman.
    #[arg(long, default_value = "se3_linear")]
    method: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    gt: PathBuf,
    result: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    targets: usize,
    #[arg(long, default_value_t = 100)]
    frames: u32,
    /// linear, crossing or circular.
    #[arg(long, default_value = "crossing")]
    motion: String,
    /// Occlusion window `target:start:len` (0-based target, 1-based frame);
    /// may be repeated.
    #[arg(long = "occlusion", value_name = "T:S:L")]
    occlusions: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 16)]
    descriptor_dim: u32,
    #[arg(long, default_value_t = 0.0)]
    descriptor_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    false_positive_rate: f64,
}

#[derive(Args, Debug)]
struct AssignArgs {
    scene: PathBuf,
}

/// Failure with its exit code: 1 usage, 2 data, 3 internal.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 1,
            Error::SingularInnovation => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        Failure { code: f.code, message: format!("{}: {}", path.display(), f.message) }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| with_path(path)(e.into()))?;
        cfg.apply_text(&text).map_err(with_path(path))?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| with_path(path)(e.into())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::from(Error::from(e))),
    }
}

fn track_one(cfg: &RunConfig, dets: &Path, features: Option<&Path>, head_format: bool) -> Result<String, Failure> {
    let lines = read_mot(dets).map_err(with_path(dets))?;
    let descriptors = features
        .map(|p| DescriptorFile::load(p).map_err(with_path(p)))
        .transpose()?;
    let result = track_lines(&lines, descriptors.as_ref(), head_format, &cfg.tracker_config()).map_err(with_path(dets))?;
    Ok(format_mot(&result))
}

struct BatchEntry {
    dets: PathBuf,
    out: PathBuf,
    features: Option<PathBuf>,
}

fn read_manifest(path: &Path) -> Result<Vec<BatchEntry>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| with_path(path)(e.into()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&words.len()) {
            return Err(Failure {
                code: 2,
                message: format!("{}:{}: expected DETS OUT [FEATURES]", path.display(), i + 1),
            });
        }
        entries.push(BatchEntry {
            dets: base.join(words[0]),
            out: base.join(words[1]),
            features: words.get(2).map(|w| base.join(w)),
        });
    }
    Ok(entries)
}

fn run_batch(cfg: &RunConfig, manifest: &Path, jobs: usize, head_format: bool) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let entries = read_manifest(manifest)?;
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<(usize, Failure)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(entries.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(e) = entries.get(i) else { break };
                let result = track_one(cfg, &e.dets, e.features.as_deref(), head_format)
                    .and_then(|text| emit(Some(&e.out), &text));
                if let Err(f) = result {
                    failures.lock().expect("failure list lock").push((i, f));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("failure list lock");
    failures.sort_by_key(|(i, _)| *i);
    for (_, f) in &failures {
        eprintln!("error: {}", f.message);
    }
    match failures.into_iter().next() {
        Some((_, f)) => Err(f),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Track(a) => match &a.batch {
            Some(manifest) => run_batch(&cfg, manifest, a.jobs, a.head_format),
            None => {
                let dets = a.detections.as_deref().expect("clap requires detections without --batch");
                let text = track_one(&cfg, dets, a.features.as_deref(), a.head_format)?;
                emit(a.out.as_deref(), &text)
            }
        },
        Command::Interpolate(a) => {
            let method: CompletionMethod = a.method.parse().map_err(|e: Error| usage(e.to_string()))?;
            let lines = read_mot(&a.result).map_err(with_path(&a.result))?;
            let trajectories = mot_to_trajectories(&lines).map_err(with_path(&a.result))?;
            let (filled, open) = complete_trajectories(&trajectories, method, &cfg.completion_config())?;
            for (id, gap) in open {
                let reason = match gap.reason {
                    UnfilledReason::MissingAnchor => "missing anchor",
                    UnfilledReason::TooLong => "longer than max_gap",
                    UnfilledReason::RotationBranch => "rotation at the branch cut",
                };
                let (first, last) = (gap.frames[0], gap.frames[gap.frames.len() - 1]);
                eprintln!("note: track {id} frames {first}-{last} left open ({reason})");
            }
            emit(a.out.as_deref(), &format_mot(&trajectories_to_mot(&filled)))
        }
        Command::Evaluate(a) => {
            let gt = read_mot(&a.gt).map_err(with_path(&a.gt))?;
            let hyp = read_mot(&a.result).map_err(with_path(&a.result))?;
            let report = evaluate(&eval_frames(&gt, &hyp)?, cfg.iou_threshold)?;
            emit(None, &report.to_key_values())
        }
        Command::Simulate(a) => {
            let occlusions = a
                .occlusions
                .iter()
                .map(|s| s.parse::<OcclusionWindow>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(e.to_string()))?;
            let motion: MotionModel = a.motion.parse().map_err(|e: Error| usage(e.to_string()))?;
            let spec = SceneSpec {
                targets: a.targets,
                frames: a.frames,
                motion,
                occlusions,
                noise_std: a.noise_std,
                descriptor_dim: a.descriptor_dim,
                descriptor_noise: a.descriptor_noise,
                false_positive_rate: a.false_positive_rate,
                width: cfg.image_width,
                height: cfg.image_height,
                seed: cfg.seed,
                ..SceneSpec::default()
            };
            let scene = generate_scene(&spec)?;
            fs::create_dir_all(&a.out_dir).map_err(|e| with_path(&a.out_dir)(e.into()))?;
            write_mot(&a.out_dir.join("gt.txt"), &scene.gt)?;
            write_mot(&a.out_dir.join("det.txt"), &scene.detections)?;
            scene.descriptors.save(&a.out_dir.join("det.ftfv"))?;
            Ok(())
        }
        Command::Assign(a) => {
            let text = fs::read_to_string(&a.scene).map_err(|e| with_path(&a.scene)(e.into()))?;
            let scene = parse_assign_scene(&text).map_err(with_path(&a.scene))?;
            let (cost, assignment) = assign(&scene.anchors, &scene.gts, &cfg.assign);
            let losses = loss_suite(&scene.anchors, &scene.gts, &assignment, cfg.use_l1);
            let mut out = format_assignment_table(&cost, &assignment);
            out.push_str(&format!(
                "loss cls={:.6} box={:.6} head={:.6} total={:.6}\n",
                losses.cls,
                losses.box_loss(),
                losses.head_loss(),
                losses.total()
            ));
            emit(None, &out)
        }
        Command::Config => emit(None, &cfg.to_text()),
    }
}

fn main() -> ExitCode {
    let command = Cli::command().after_help(format!(
        "Config keys (name, default, meaning):\n{}",
        RunConfig::describe_keys()
    ));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(3),
    }
}
