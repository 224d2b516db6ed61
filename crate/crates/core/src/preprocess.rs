//! From gesture recordings to the model's window tensors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::fsutil::write_atomic;
use crate::ingest::{GestureRecording, SensorSample};
use crate::label::GestureLabel;
use crate::numerics::Array2;

pub const CHANNEL_NAMES: [&str; 6] = ["acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"];
pub const DEFAULT_STEP: usize = 50;
pub const DEFAULT_GRAVITY_SAMPLES: usize = 25;
/// Channels with a standard deviation below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-9;

/// One classifier input: `window_len` rows of channel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Array2,
    pub label: GestureLabel,
    pub participant: String,
    /// Index of the source recording within the dataset it was cut from.
    pub recording: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub window_len: usize,
    pub step: usize,
    pub channel_names: Vec<String>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.label.index()).collect()
    }
}

/// Number of windows of `window_len` samples starting every `step` samples
/// in a sequence of `n` samples.
pub fn window_count(n: usize, window_len: usize, step: usize) -> usize {
    if n < window_len {
        0
    } else {
        (n - window_len) / step + 1
    }
}

fn recording_matrix(recording: &GestureRecording) -> Array2 {
    let rows: Vec<[f64; 6]> = recording.samples.iter().map(SensorSample::channels).collect();
    Array2::from_rows(&rows).unwrap_or_else(|_| Array2::zeros(0, 6))
}

fn cut_windows(
    values: &Array2,
    window_len: usize,
    step: usize,
    label: GestureLabel,
    participant: &str,
    recording: usize,
) -> Vec<Window> {
    let count = window_count(values.rows(), window_len, step);
    let cols = values.cols();
    (0..count)
        .map(|k| {
            let start = k * step;
            let data = values.as_slice()[start * cols..(start + window_len) * cols].to_vec();
            Window {
                values: Array2::from_vec(window_len, cols, data).expect("slice has window shape"),
                label,
                participant: participant.to_string(),
                recording,
            }
        })
        .collect()
}

/// Cuts a recording into windows starting at sample 0, `step`, `2*step`, ...
/// Recordings shorter than `window_len` yield no windows.
pub fn slide_windows(recording: &GestureRecording, window_len: usize, step: usize) -> Result<Vec<Window>> {
    if window_len == 0 || step == 0 {
        return Err(contract("window length and step must be at least 1"));
    }
    if recording.samples.len() < window_len {
        log::warn!(
            "{} recording of {} ({} samples) is shorter than the {window_len}-sample window; dropped",
            recording.label,
            recording.participant.alias,
            recording.samples.len()
        );
    }
    Ok(cut_windows(
        &recording_matrix(recording),
        window_len,
        step,
        recording.label,
        &recording.participant.alias,
        0,
    ))
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn degenerate(&self) -> Vec<bool> {
        self.std.iter().map(|&s| s < DEGENERATE_STD).collect()
    }

    /// Normalizes one row of channel values in place; constant channels map
    /// to zero.
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *s < DEGENERATE_STD { 0.0 } else { (*v - m) / s };
        }
    }

    pub fn apply_array(&self, values: &mut Array2) {
        let cols = values.cols();
        for row in values.as_mut_slice().chunks_exact_mut(cols) {
            self.apply_row(row);
        }
    }
}

/// Fits per-channel statistics over every sample of every window.
pub fn zscore_fit(windows: &[Window]) -> Result<NormalizationStats> {
    let first = windows
        .first()
        .ok_or_else(|| contract("cannot fit normalization on an empty training set"))?;
    let cols = first.values.cols();
    if windows.iter().any(|w| w.values.cols() != cols) {
        return Err(contract("windows disagree on channel count"));
    }
    let mut count = 0usize;
    let mut sum = vec![0.0; cols];
    for w in windows {
        for row in w.values.as_slice().chunks_exact(cols) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(contract("cannot fit normalization on empty windows"));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; cols];
    for w in windows {
        for row in w.values.as_slice().chunks_exact(cols) {
            for ((acc, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *acc += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(NormalizationStats { mean, std })
}

pub fn zscore_apply(windows: &[Window], stats: &NormalizationStats) -> Vec<Window> {
    windows
        .iter()
        .map(|w| {
            let mut w = w.clone();
            stats.apply_array(&mut w.values);
            w
        })
        .collect()
}

/// Mean accelerometer vector over the first `k` samples (all samples when the
/// recording is shorter).
pub fn gravity_estimate(samples: &[SensorSample], k: usize) -> [f64; 3] {
    let n = k.min(samples.len());
    let mut g = [0.0; 3];
    if n == 0 {
        return g;
    }
    for s in &samples[..n] {
        for (acc, v) in g.iter_mut().zip(s.acc) {
            *acc += v;
        }
    }
    g.map(|v| v / n as f64)
}

/// Subtracts the gravity estimate of the first `k` samples from every
/// accelerometer row, assuming the device starts at rest. Gyroscope channels
/// are untouched.
pub fn remove_gravity(recording: &GestureRecording, k: usize) -> GestureRecording {
    let g = gravity_estimate(&recording.samples, k);
    let mut out = recording.clone();
    for s in &mut out.samples {
        for (a, gv) in s.acc.iter_mut().zip(g) {
            *a -= gv;
        }
    }
    out
}

/// Removes one named channel from every window.
pub fn drop_axis(dataset: &WindowedDataset, axis: &str) -> Result<WindowedDataset> {
    let col = dataset.channel_names.iter().position(|c| c == axis).ok_or_else(|| {
        contract(format!(
            "unknown channel {axis:?} (have {})",
            dataset.channel_names.join(", ")
        ))
    })?;
    let windows = dataset
        .windows
        .iter()
        .map(|w| {
            Ok(Window {
                values: w.values.without_column(col)?,
                ..w.clone()
            })
        })
        .collect::<Result<_>>()?;
    let mut channel_names = dataset.channel_names.clone();
    channel_names.remove(col);
    Ok(WindowedDataset {
        windows,
        window_len: dataset.window_len,
        step: dataset.step,
        channel_names,
    })
}

/// Splits recordings by participant: validation aliases on one side,
/// everyone else on the other.
pub fn split_by_participant(
    recordings: &[GestureRecording],
    validation_aliases: &BTreeSet<String>,
) -> Result<(Vec<GestureRecording>, Vec<GestureRecording>)> {
    let known: BTreeSet<&str> = recordings.iter().map(|r| r.participant.alias.as_str()).collect();
    if let Some(missing) = validation_aliases.iter().find(|a| !known.contains(a.as_str())) {
        return Err(contract(format!(
            "validation alias {missing:?} not present in the data"
        )));
    }
    Ok(recordings
        .iter()
        .cloned()
        .partition(|r| !validation_aliases.contains(&r.participant.alias)))
}

/// Mean over channels of each participant's per-channel population variance,
/// pooled over all of that participant's samples.
pub fn participant_variance_scores(recordings: &[GestureRecording]) -> BTreeMap<String, f64> {
    let mut pooled: BTreeMap<&str, Vec<[f64; 6]>> = BTreeMap::new();
    for r in recordings {
        pooled
            .entry(&r.participant.alias)
            .or_default()
            .extend(r.samples.iter().map(SensorSample::channels));
    }
    pooled
        .into_iter()
        .map(|(alias, rows)| {
            let n = rows.len().max(1) as f64;
            let score = (0..6)
                .map(|c| {
                    let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
                    rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n
                })
                .sum::<f64>()
                / 6.0;
            (alias.to_string(), score)
        })
        .collect()
}

/// The `k` participants with the lowest variance score; ties go to the
/// lexicographically smaller alias.
pub fn select_low_variance_participants(recordings: &[GestureRecording], k: usize) -> BTreeSet<String> {
    let mut scored: Vec<(String, f64)> = participant_variance_scores(recordings).into_iter().collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(a, _)| a).collect()
}

/// The full per-recording transform: optional gravity removal, optional
/// axis elimination, windowing, and normalization with fitted statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub window_len: usize,
    pub step: usize,
    /// Number of leading samples used to estimate gravity, if removing it.
    pub gravity_samples: Option<usize>,
    pub dropped_axis: Option<String>,
    pub stats: Option<NormalizationStats>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            window_len: crate::model::config::DEFAULT_WINDOW_LEN,
            step: DEFAULT_STEP,
            gravity_samples: None,
            dropped_axis: None,
            stats: None,
        }
    }
}

impl Preprocessor {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.step == 0 {
            return Err(contract("window length and step must be at least 1"));
        }
        if let Some(k) = self.gravity_samples {
            if k == 0 || k > self.window_len {
                return Err(contract(format!(
                    "gravity estimation window must be between 1 and the window length {}, got {k}",
                    self.window_len
                )));
            }
        }
        if let Some(axis) = &self.dropped_axis {
            if !CHANNEL_NAMES.contains(&axis.as_str()) {
                return Err(contract(format!(
                    "unknown channel {axis:?} (have {})",
                    CHANNEL_NAMES.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        CHANNEL_NAMES
            .iter()
            .filter(|c| self.dropped_axis.as_deref() != Some(**c))
            .map(|c| c.to_string())
            .collect()
    }

    fn dropped_index(&self) -> Option<usize> {
        self.dropped_axis
            .as_deref()
            .and_then(|a| CHANNEL_NAMES.iter().position(|c| *c == a))
    }

    /// Transforms one raw sample given the session's gravity estimate.
    pub fn sample_row(&self, sample: &SensorSample, gravity: [f64; 3]) -> Vec<f64> {
        let mut ch = sample.channels();
        if self.gravity_samples.is_some() {
            for (v, g) in ch.iter_mut().zip(gravity) {
                *v -= g;
            }
        }
        let mut row: Vec<f64> = match self.dropped_index() {
            Some(i) => ch
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, v)| *v)
                .collect(),
            None => ch.to_vec(),
        };
        if let Some(stats) = &self.stats {
            stats.apply_row(&mut row);
        }
        row
    }

    /// Per-sample transformed matrix of a recording.
    pub fn recording_values(&self, samples: &[SensorSample]) -> Array2 {
        let gravity = self.gravity_samples.map_or([0.0; 3], |k| gravity_estimate(samples, k));
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| self.sample_row(s, gravity)).collect();
        let cols = self.channel_names().len();
        Array2::from_rows(&rows).unwrap_or_else(|_| Array2::zeros(0, cols))
    }

    /// Windows every recording; recording indices follow slice order.
    pub fn windows(&self, recordings: &[GestureRecording]) -> WindowedDataset {
        let mut windows = Vec::new();
        for (index, r) in recordings.iter().enumerate() {
            if r.samples.len() < self.window_len {
                log::warn!(
                    "{} recording of {} ({} samples) is shorter than the {}-sample window; dropped",
                    r.label,
                    r.participant.alias,
                    r.samples.len(),
                    self.window_len
                );
                continue;
            }
            let values = self.recording_values(&r.samples);
            windows.extend(cut_windows(
                &values,
                self.window_len,
                self.step,
                r.label,
                &r.participant.alias,
                index,
            ));
        }
        WindowedDataset {
            windows,
            window_len: self.window_len,
            step: self.step,
            channel_names: self.channel_names(),
        }
    }

    /// Fits normalization statistics on the training recordings' windows.
    pub fn fit(&mut self, train: &[GestureRecording]) -> Result<()> {
        self.validate()?;
        let unnormalized = Self {
            stats: None,
            ..self.clone()
        };
        let windows = unnormalized.windows(train).windows;
        self.stats = Some(zscore_fit(&windows)?);
        Ok(())
    }
}

const DATASET_MAGIC: &str = "imu-gesture windows";
const DATASET_VERSION: u32 = 1;
pub const DATASET_MANIFEST: &str = "manifest.txt";
pub const DATASET_ARRAYS: &str = "windows.bin";

/// Writes a dataset as a text manifest plus raw little-endian `f64` window
/// values (windows in order, each row-major).
pub fn save_dataset(dataset: &WindowedDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let labels = GestureLabel::ALL
        .iter()
        .map(|l| format!("{}={}", l.index(), l.name()))
        .collect::<Vec<_>>()
        .join(",");
    let _ = write!(
        manifest,
        "{DATASET_MAGIC}\nversion: {DATASET_VERSION}\nwindow_len: {}\nstep: {}\nchannels: {}\nlabels: {labels}\n\
         count: {}\nbyte_order: little-endian\ndtype: f64\nend_header\n",
        dataset.window_len,
        dataset.step,
        dataset.channel_names.join(","),
        dataset.windows.len()
    );
    let mut bytes = Vec::new();
    for (i, w) in dataset.windows.iter().enumerate() {
        let _ = writeln!(manifest, "{i},{},{},{}", w.label.index(), w.participant, w.recording);
        for x in w.values.as_slice() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomic(&dir.join(DATASET_ARRAYS), &bytes)?;
    write_atomic(&dir.join(DATASET_MANIFEST), manifest.as_bytes())
}

pub fn load_dataset(dir: &Path) -> Result<WindowedDataset> {
    let bad = |msg: String| Error::Contract(format!("dataset cache {}: {msg}", dir.display()));
    let manifest = fs::read_to_string(dir.join(DATASET_MANIFEST))?;
    let bytes = fs::read(dir.join(DATASET_ARRAYS))?;
    let mut lines = manifest.lines();
    if lines.next() != Some(DATASET_MAGIC) {
        return Err(bad("missing magic line".into()));
    }
    let mut fields = BTreeMap::new();
    for line in lines.by_ref() {
        if line == "end_header" {
            break;
        }
        let (k, v) = line.split_once(": ").ok_or_else(|| bad(format!("bad line {line:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing {k}")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
    if num("version")? != DATASET_VERSION as usize {
        return Err(bad("unsupported version".into()));
    }
    let window_len = num("window_len")?;
    let step = num("step")?;
    let count = num("count")?;
    let channel_names: Vec<String> = get("channels")?.split(',').map(str::to_string).collect();
    let cols = channel_names.len();
    let per_window = window_len * cols;
    if bytes.len() != count * per_window * 8 {
        return Err(bad(format!(
            "array file has {} bytes, expected {}",
            bytes.len(),
            count * per_window * 8
        )));
    }
    let mut windows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 || parts[0] != i.to_string() {
            return Err(bad(format!("bad window line {line:?}")));
        }
        let label = parts[1]
            .parse::<usize>()
            .ok()
            .and_then(GestureLabel::from_index)
            .ok_or_else(|| bad(format!("bad label in {line:?}")))?;
        let recording = parts[3]
            .parse()
            .map_err(|_| bad(format!("bad recording in {line:?}")))?;
        let chunk = bytes
            .get(i * per_window * 8..(i + 1) * per_window * 8)
            .ok_or_else(|| bad("more window lines than arrays".into()))?;
        let data = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        windows.push(Window {
            values: Array2::from_vec(window_len, cols, data)?,
            label,
            participant: parts[2].to_string(),
            recording,
        });
    }
    if windows.len() != count {
        return Err(bad(format!("{} window lines for count {count}", windows.len())));
    }
    Ok(WindowedDataset {
        windows,
        window_len,
        step,
        channel_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ParticipantMeta;

    fn recording(alias: &str, n: usize, f: impl Fn(usize) -> [f64; 6]) -> GestureRecording {
        GestureRecording {
            label: GestureLabel::Circle,
            participant: ParticipantMeta::anonymous(alias),
            session_id: "s01".into(),
            samples: (0..n)
                .map(|k| {
                    let v = f(k);
                    SensorSample {
                        t_ms: 10 * k as i64,
                        acc: [v[0], v[1], v[2]],
                        gyro: [v[3], v[4], v[5]],
                    }
                })
                .collect(),
        }
    }

    fn brute_force_starts(n: usize, window_len: usize, step: usize) -> Vec<usize> {
        (0..n).filter(|s| s % step == 0 && s + window_len <= n).collect()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(612, 250, 50), 8);
        assert_eq!(window_count(250, 250, 50), 1);
        assert_eq!(window_count(249, 250, 50), 0);
        assert_eq!(brute_force_starts(300, 250, 50), vec![0, 50]);
        let r = recording("p1", 300, |k| [k as f64; 6]);
        let w = slide_windows(&r, 250, 50).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].values.get(0, 0), 50.0);
        assert_eq!(w[1].values.get(249, 5), 299.0);
    }

    #[test]
    fn short_recording_yields_nothing() {
        let r = recording("p1", 100, |_| [0.0; 6]);
        assert!(slide_windows(&r, 250, 50).unwrap().is_empty());
        assert!(slide_windows(&r, 0, 50).is_err());
    }

    #[test]
    fn zscore_hand_computed() {
        let values = Array2::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let w = Window {
            values,
            label: GestureLabel::Circle,
            participant: "p".into(),
            recording: 0,
        };
        let stats = zscore_fit(std::slice::from_ref(&w)).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = zscore_apply(&[w], &stats);
        let v = out[0].values.as_slice();
        assert!((v[0] + 1.224_744_871_391_589).abs() < 1e-12);
        assert!(v[1].abs() < 1e-15);
        assert!((v[2] - 1.224_744_871_391_589).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let r = recording("p1", 260, |k| [5.0, k as f64, 0.0, 0.0, 0.0, 0.0]);
        let w = slide_windows(&r, 250, 50).unwrap();
        let stats = zscore_fit(&w).unwrap();
        assert_eq!(stats.degenerate(), vec![true, false, true, true, true, true]);
        let out = zscore_apply(&w, &stats);
        assert!((0..250).all(|t| out[0].values.get(t, 0) == 0.0));
    }

    #[test]
    fn empty_fit_rejected() {
        assert!(zscore_fit(&[]).is_err());
    }

    #[test]
    fn fit_on_train_only_differs_from_fit_on_all() {
        let train = slide_windows(&recording("p1", 250, |k| [k as f64; 6]), 250, 50).unwrap();
        let val = slide_windows(&recording("p2", 250, |k| [1000.0 + k as f64; 6]), 250, 50).unwrap();
        let a = zscore_fit(&train).unwrap();
        let all: Vec<Window> = train.iter().chain(&val).cloned().collect();
        let b = zscore_fit(&all).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn gravity_removal() {
        let r = recording("p1", 100, |_| [0.0, 0.0, 9.81, 0.1, 0.2, 0.3]);
        let out = remove_gravity(&r, DEFAULT_GRAVITY_SAMPLES);
        assert!(out.samples.iter().all(|s| s.acc == [0.0; 3]));
        assert!(out.samples.iter().all(|s| s.gyro == [0.1, 0.2, 0.3]));

        // Zero-mean signal over the first 25 samples rides on gravity.
        let s = |k: usize| 0.5 * (2.0 * std::f64::consts::PI * k as f64 / 25.0).sin();
        let r = recording("p1", 200, |k| [s(k), -s(k), 9.81 + s(k), 0.0, 0.0, 0.0]);
        let out = remove_gravity(&r, 25);
        for (k, smp) in out.samples.iter().enumerate() {
            assert!((smp.acc[0] - s(k)).abs() < 1e-12);
            assert!((smp.acc[1] + s(k)).abs() < 1e-12);
            assert!((smp.acc[2] - s(k)).abs() < 1e-12);
        }

        let short = recording("p1", 4, |k| [k as f64, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(gravity_estimate(&short.samples, 25), [1.5, 0.0, 0.0]);
    }

    #[test]
    fn drop_axis_projects() {
        let r = recording("p1", 300, |k| [k as f64, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let ds = Preprocessor::default().windows(&[r]);
        let dropped = drop_axis(&ds, "acc_z").unwrap();
        assert_eq!(
            dropped.channel_names,
            vec!["acc_x", "acc_y", "gyro_x", "gyro_y", "gyro_z"]
        );
        assert_eq!(dropped.windows[0].values.cols(), 5);
        assert_eq!(dropped.windows[1].values.row(3), &[53.0, 1.0, 3.0, 4.0, 5.0]);
        assert!(drop_axis(&ds, "mag_x").is_err());
    }

    #[test]
    fn preprocessor_drop_matches_drop_axis() {
        let r = recording("p1", 300, |k| [k as f64, 1.0, (k * k) as f64, 3.0, 4.0, 5.0]);
        let mut full = Preprocessor::default();
        full.fit(std::slice::from_ref(&r)).unwrap();
        let ds = drop_axis(&full.windows(std::slice::from_ref(&r)), "acc_y").unwrap();
        let mut pre = Preprocessor {
            dropped_axis: Some("acc_y".into()),
            ..Preprocessor::default()
        };
        pre.fit(std::slice::from_ref(&r)).unwrap();
        let direct = pre.windows(&[r]);
        // z-scoring is per channel, so it commutes with removing a channel.
        assert_eq!(ds, direct);
    }

    #[test]
    fn split_is_participant_disjoint() {
        let recs: Vec<_> = (1..=19)
            .flat_map(|p| (0..2).map(move |_| recording(&format!("p{p}"), 10, |_| [0.0; 6])))
            .collect();
        let val: BTreeSet<String> = ["p3", "p7", "p11"].map(String::from).into();
        let (train, v) = split_by_participant(&recs, &val).unwrap();
        let tp: BTreeSet<_> = train.iter().map(|r| r.participant.alias.clone()).collect();
        let vp: BTreeSet<_> = v.iter().map(|r| r.participant.alias.clone()).collect();
        assert_eq!(tp.len(), 16);
        assert_eq!(vp.len(), 3);
        assert!(tp.is_disjoint(&vp));
        assert_eq!(train.len() + v.len(), recs.len());

        let (all, none) = split_by_participant(&recs, &BTreeSet::new()).unwrap();
        assert_eq!((all.len(), none.len()), (recs.len(), 0));
        let bad: BTreeSet<String> = ["p99".to_string()].into();
        assert!(split_by_participant(&recs, &bad).is_err());
    }

    #[test]
    fn low_variance_selection() {
        let calm = recording("b_calm", 50, |_| [1.0, 2.0, 9.81, 0.0, 0.0, 0.0]);
        let noisy = recording("a_noisy", 50, |k| [(k % 7) as f64; 6]);
        let picked = select_low_variance_participants(&[calm.clone(), noisy.clone()], 1);
        assert_eq!(picked, ["b_calm".to_string()].into());
        let all = select_low_variance_participants(&[calm.clone(), noisy], 2);
        assert_eq!(all.len(), 2);
        // Equal scores: lexicographic alias order.
        let twin = recording("a_twin", 50, |_| [3.0; 6]);
        assert_eq!(
            select_low_variance_participants(&[calm, twin], 1),
            ["a_twin".to_string()].into()
        );
    }

    #[test]
    fn variance_score_matches_brute_force() {
        let a1 = recording("a", 3, |k| [k as f64, 0.0, 0.0, 0.0, 0.0, 2.0 * k as f64]);
        let a2 = recording("a", 2, |k| [10.0 + k as f64, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = recording("b", 4, |k| [0.0, 0.0, 0.0, (k % 2) as f64, 0.0, 0.0]);
        let scores = participant_variance_scores(&[a1, a2, b]);
        // Participant a pools acc_x {0,1,2,10,11} and gyro_z {0,2,4,0,0}.
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
        };
        let expected_a = (var(&[0.0, 1.0, 2.0, 10.0, 11.0]) + var(&[0.0, 2.0, 4.0, 0.0, 0.0])) / 6.0;
        assert!((scores["a"] - expected_a).abs() < 1e-12);
        assert!((scores["b"] - 0.25 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn dataset_cache_round_trip() {
        let r = recording("p1", 320, |k| {
            [k as f64 * 0.1, 1.0 / (k as f64 + 1.0), 2.0, 3.0, 4.0, 5.0]
        });
        let ds = Preprocessor::default().windows(&[r]);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions(n in 1usize..6, pick in prop::collection::vec(any::<bool>(), 6)) {
                let recs: Vec<_> = (0..n).map(|p| recording(&format!("p{p}"), 3, |_| [0.0; 6])).collect();
                let val: BTreeSet<String> = (0..n).filter(|&p| pick[p]).map(|p| format!("p{p}")).collect();
                let (t, v) = split_by_participant(&recs, &val).unwrap();
                prop_assert_eq!(t.len() + v.len(), recs.len());
                prop_assert!(v.iter().all(|r| val.contains(&r.participant.alias)));
                prop_assert!(t.iter().all(|r| !val.contains(&r.participant.alias)));
            }

            #[test]
            fn normalized_moments(values in prop::collection::vec(-50.0f64..50.0, 20..200)) {
                let n = values.len();
                let r = recording("p", n, |k| [values[k], values[(k + 1) % n], 1.0, 0.0, 0.0, values[n - 1 - k]]);
                let w = slide_windows(&r, n / 2, 3).unwrap();
                let stats = zscore_fit(&w).unwrap();
                let out = zscore_apply(&w, &stats);
                let norm = zscore_fit(&out).unwrap();
                for (c, degenerate) in stats.degenerate().into_iter().enumerate() {
                    if !degenerate {
                        prop_assert!(norm.mean[c].abs() <= 1e-9);
                        prop_assert!((norm.std[c] - 1.0).abs() <= 1e-6);
                    }
                }
            }
        }
    }
}
