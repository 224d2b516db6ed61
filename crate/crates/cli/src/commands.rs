use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use imu_gesture::fsutil::write_atomic;
use imu_gesture::ingest::{load_recordings, read_sensor_samples, GestureRecording};
use imu_gesture::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams, Variant};
use imu_gesture::preprocess::{select_low_variance_participants, split_by_participant, Preprocessor};
use imu_gesture::synth::{generate_dataset, SynthConfig};
use imu_gesture::train::{
    evaluate, gesture_accuracy_from_windows, metrics_csv, predict_probabilities, stream_infer, train_observed,
    TrainConfig,
};

use crate::args::{EvalArgs, InferArgs, SynthArgs, TrainArgs, VariantArg};
use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PIPELINE_FILE: &str = "pipeline.toml";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
struct RunManifest<C: Serialize> {
    command: &'static str,
    tool_version: &'static str,
    inputs: Vec<String>,
    outputs: Vec<String>,
    config: C,
}

fn write_manifest<C: Serialize>(
    path: &Path,
    command: &'static str,
    inputs: &[&Path],
    outputs: &[&Path],
    config: C,
) -> Result<(), Failure> {
    let manifest = RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config,
    };
    write_atomic(path, toml::to_string(&manifest)?.as_bytes())?;
    Ok(())
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("missing required flag --{flag}")))
}

fn seed_in_range(seed: u64) -> Result<u64, Failure> {
    // Manifests are TOML, whose integers are signed 64-bit.
    if seed > i64::MAX as u64 {
        return Err(Failure::usage(format!("seed {seed} exceeds {}", i64::MAX)));
    }
    Ok(seed)
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let out = required(args.out, "out")?;
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        seed: seed_in_range(args.seed.unwrap_or(defaults.seed))?,
        noise_std_acc: args.noise_acc.unwrap_or(defaults.noise_std_acc),
        noise_std_gyro: args.noise_gyro.unwrap_or(defaults.noise_std_gyro),
        amplitude: args.amplitude.unwrap_or(defaults.amplitude),
        sample_rate: args.sample_rate.unwrap_or(defaults.sample_rate),
        duration_mean: args.duration.unwrap_or(defaults.duration_mean),
        pivot_radius: args.pivot_radius.unwrap_or(defaults.pivot_radius),
        ..defaults
    };
    config.validate().map_err(Failure::usage)?;
    let participants = args.participants.unwrap_or(4);
    let sessions = args.sessions.unwrap_or(10);
    if participants == 0 || sessions == 0 {
        return Err(Failure::usage("--participants and --sessions must be at least 1"));
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        participants: usize,
        sessions: usize,
        synth: &'a SynthConfig,
    }
    write_manifest(
        &out.join(MANIFEST_FILE),
        "synth",
        &[],
        &[&out],
        Resolved {
            participants,
            sessions,
            synth: &config,
        },
    )?;
    generate_dataset(&config, participants, sessions, &out)?;
    println!("wrote {} sessions to {}", participants * sessions, out.display());
    Ok(())
}

fn load_dataset(data: &Path, clock_offset_ms: i64, skip_corrupt: bool) -> Result<Vec<GestureRecording>, Failure> {
    let (recordings, report) = load_recordings(data, clock_offset_ms)
        .with_context(|| format!("reading recordings under {}", data.display()))?;
    if !report.is_empty() {
        eprint!("{report}");
        if !skip_corrupt {
            return Err(Failure::Data(anyhow::anyhow!(
                "{} file(s) rejected under {} (use --skip-corrupt to continue without them)",
                report.rejected.len(),
                data.display()
            )));
        }
        log::warn!("continuing without {} rejected file(s)", report.rejected.len());
    }
    if recordings.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!(
            "no recordings found under {}",
            data.display()
        )));
    }
    Ok(recordings)
}

fn aliases(recordings: &[GestureRecording]) -> BTreeSet<String> {
    recordings.iter().map(|r| r.participant.alias.clone()).collect()
}

#[derive(Debug, Serialize)]
struct ResolvedTrain {
    data: PathBuf,
    out: PathBuf,
    clock_offset_ms: i64,
    skip_corrupt: bool,
    validation_aliases: Vec<String>,
    limited_k: Option<usize>,
    training_aliases: Vec<String>,
    preprocessing: Preprocessor,
    model: ModelConfig,
    training: TrainConfig,
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let data = required(args.data, "data")?;
    let out = required(args.out, "out")?;
    let variant = match args.variant.unwrap_or(VariantArg::B) {
        VariantArg::A => Variant::A,
        VariantArg::B => Variant::B,
    };
    let preprocessor = Preprocessor {
        window_len: args.window.unwrap_or(Preprocessor::default().window_len),
        step: args.step.unwrap_or(Preprocessor::default().step),
        gravity_samples: args.gravity_samples,
        dropped_axis: args.drop_axis,
        stats: None,
    };
    preprocessor.validate().map_err(Failure::usage)?;
    let base = ModelConfig::for_variant(variant);
    let model = ModelConfig {
        input_dim: preprocessor.channel_names().len(),
        window_len: preprocessor.window_len,
        dropout_rate: args.dropout.unwrap_or(base.dropout_rate),
        ..base
    };
    model.validate().map_err(Failure::usage)?;
    let defaults = TrainConfig::for_variant(variant);
    let training = TrainConfig {
        batch_size: args.batch.unwrap_or(defaults.batch_size),
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        seed: seed_in_range(args.seed.unwrap_or(defaults.seed))?,
        early_stop_patience: args.patience,
        ..defaults
    };
    training.validate().map_err(Failure::usage)?;
    let clock_offset_ms = args.clock_offset_ms.unwrap_or(0);

    let recordings = load_dataset(&data, clock_offset_ms, args.skip_corrupt)?;
    let validation: BTreeSet<String> = args.val_aliases.unwrap_or_default().into_iter().collect();
    let (mut train_recs, val_recs) = split_by_participant(&recordings, &validation)?;
    if let Some(k) = args.limited_k {
        let available = aliases(&train_recs).len();
        if k == 0 || k > available {
            return Err(Failure::Data(anyhow::anyhow!(
                "--limited-k {k} but {available} training participant(s) available"
            )));
        }
        let keep = select_low_variance_participants(&train_recs, k);
        train_recs.retain(|r| keep.contains(&r.participant.alias));
    }
    if validation.is_empty() {
        log::warn!("no --val-aliases given; training without a validation set");
    }

    let best_path = out.join(BEST_CHECKPOINT);
    let final_path = out.join(FINAL_CHECKPOINT);
    let metrics_path = out.join(METRICS_FILE);
    let pipeline_path = out.join(PIPELINE_FILE);
    let confusion_path = out.join(CONFUSION_FILE);
    let mut outputs = vec![
        best_path.as_path(),
        final_path.as_path(),
        metrics_path.as_path(),
        pipeline_path.as_path(),
    ];
    if !val_recs.is_empty() {
        outputs.push(&confusion_path);
    }
    write_manifest(
        &out.join(MANIFEST_FILE),
        "train",
        &[&data],
        &outputs,
        ResolvedTrain {
            data: data.clone(),
            out: out.clone(),
            clock_offset_ms,
            skip_corrupt: args.skip_corrupt,
            validation_aliases: validation.iter().cloned().collect(),
            limited_k: args.limited_k,
            training_aliases: aliases(&train_recs).into_iter().collect(),
            preprocessing: preprocessor.clone(),
            model: model.clone(),
            training: training.clone(),
        },
    )?;

    let mut fitted = preprocessor;
    fitted.fit(&train_recs)?;
    let train_set = fitted.windows(&train_recs);
    let val_set = (!val_recs.is_empty()).then(|| fitted.windows(&val_recs));
    log::info!(
        "{} training windows from {} recordings, {} validation windows",
        train_set.len(),
        train_recs.len(),
        val_set.as_ref().map_or(0, |v| v.len())
    );
    let outcome = train_observed(&train_set, val_set.as_ref(), &model, &training, |m| {
        log::info!(
            "epoch {}: loss {:.4}, train acc {:.4}, val window acc {}, val gesture acc {}",
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.val_window_acc.map_or("-".into(), |a| format!("{a:.4}")),
            m.val_gesture_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
    })?;

    write_atomic(&pipeline_path, toml::to_string(&fitted)?.as_bytes())?;
    save_checkpoint(&outcome.best, &model, &best_path)?;
    save_checkpoint(&outcome.final_params, &model, &final_path)?;
    write_atomic(&metrics_path, metrics_csv(&outcome.history).as_bytes())?;
    println!("best epoch: {}", outcome.best_epoch);
    if let Some(val) = &val_set {
        if !val.is_empty() {
            let (confusion, window_acc) = evaluate(&outcome.best, &model, val)?;
            let probs = predict_probabilities(&outcome.best, &model, val)?;
            let gesture = gesture_accuracy_from_windows(&probs, val);
            write_atomic(&confusion_path, confusion.to_csv().as_bytes())?;
            println!("validation window accuracy: {window_acc}");
            println!("validation gesture accuracy: {}", gesture.accuracy);
        }
    }
    println!("wrote run to {}", out.display());
    Ok(())
}

fn load_model(
    checkpoint: &Path,
    pipeline: Option<PathBuf>,
) -> Result<(ModelParams, ModelConfig, Preprocessor, PathBuf), Failure> {
    let (params, model) =
        load_checkpoint(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let pipeline = pipeline.unwrap_or_else(|| checkpoint.with_file_name(PIPELINE_FILE));
    let text = std::fs::read_to_string(&pipeline)
        .with_context(|| format!("reading preprocessing file {}", pipeline.display()))?;
    let preprocessor: Preprocessor =
        toml::from_str(&text).with_context(|| format!("parsing preprocessing file {}", pipeline.display()))?;
    preprocessor.validate()?;
    if preprocessor.window_len != model.window_len || preprocessor.channel_names().len() != model.input_dim {
        return Err(Failure::Data(anyhow::anyhow!(
            "preprocessing file {} does not match the checkpoint's window shape",
            pipeline.display()
        )));
    }
    Ok((params, model, preprocessor, pipeline))
}

#[derive(Debug, Serialize)]
struct ResolvedEval {
    checkpoint: PathBuf,
    pipeline: PathBuf,
    data: PathBuf,
    aliases: Vec<String>,
    clock_offset_ms: i64,
    skip_corrupt: bool,
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let checkpoint = required(args.checkpoint, "checkpoint")?;
    let data = required(args.data, "data")?;
    let out = required(args.out, "out")?;
    let clock_offset_ms = args.clock_offset_ms.unwrap_or(0);
    let (params, model, preprocessor, pipeline) = load_model(&checkpoint, args.pipeline)?;
    let mut recordings = load_dataset(&data, clock_offset_ms, args.skip_corrupt)?;
    let wanted: BTreeSet<String> = args.aliases.unwrap_or_default().into_iter().collect();
    if !wanted.is_empty() {
        let (_, selected) = split_by_participant(&recordings, &wanted)?;
        recordings = selected;
    }
    let confusion_path = out.join(CONFUSION_FILE);
    write_manifest(
        &out.join(MANIFEST_FILE),
        "eval",
        &[&checkpoint, &pipeline, &data],
        &[&confusion_path],
        ResolvedEval {
            checkpoint: checkpoint.clone(),
            pipeline: pipeline.clone(),
            data: data.clone(),
            aliases: wanted.into_iter().collect(),
            clock_offset_ms,
            skip_corrupt: args.skip_corrupt,
        },
    )?;

    let windows = preprocessor.windows(&recordings);
    let skipped = recordings.len()
        - windows
            .windows
            .iter()
            .map(|w| w.recording)
            .collect::<BTreeSet<_>>()
            .len();
    if skipped > 0 {
        log::warn!("{skipped} recording(s) shorter than one window were excluded");
    }
    let (confusion, window_acc) = evaluate(&params, &model, &windows)?;
    let probs = predict_probabilities(&params, &model, &windows)?;
    let gesture = gesture_accuracy_from_windows(&probs, &windows);
    write_atomic(&confusion_path, confusion.to_csv().as_bytes())?;
    println!("windows: {}", confusion.total());
    println!("window accuracy: {window_acc}");
    println!(
        "gesture accuracy: {} ({} recordings)",
        gesture.accuracy, gesture.evaluated
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ResolvedInfer {
    checkpoint: PathBuf,
    pipeline: PathBuf,
    sensors: PathBuf,
}

pub fn infer(args: InferArgs) -> Result<(), Failure> {
    let checkpoint = required(args.checkpoint, "checkpoint")?;
    let sensors = required(args.sensors, "sensors")?;
    let (params, model, preprocessor, pipeline) = load_model(&checkpoint, args.pipeline)?;
    let file = std::fs::File::open(&sensors).with_context(|| format!("opening {}", sensors.display()))?;
    let samples = read_sensor_samples(file, &sensors)?;
    if let Some(out) = &args.out {
        let manifest = PathBuf::from(format!("{}.manifest.toml", out.display()));
        write_manifest(
            &manifest,
            "infer",
            &[&checkpoint, &pipeline, &sensors],
            &[out],
            ResolvedInfer {
                checkpoint: checkpoint.clone(),
                pipeline: pipeline.clone(),
                sensors: sensors.clone(),
            },
        )?;
    }
    let emissions = stream_infer(&params, &model, &preprocessor, samples)?;
    let mut text = String::new();
    for e in &emissions {
        let _ = writeln!(text, "{},{},{}", e.t_ms, e.label, e.confidence);
    }
    std::io::stdout().lock().write_all(text.as_bytes())?;
    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}
