//! Synthetic gesture recordings.
//!
//! Each gesture is a planar path `p(u)`, `u ∈ [0, 1]`, traced in the device
//! xy-plane. A recording samples the path through a random monotone time
//! warp with ease-in/ease-out, so the hand starts and ends at rest, and
//! converts positions into accelerometer and gyroscope readings. Sessions
//! concatenate all ten gestures with idle gaps and are written in the
//! [`ingest`](crate::ingest) CSV formats.
//!
//! Tilde is the first half of infinity and semicircle the first half of
//! circle, by construction.

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::fsutil::write_atomic;
use crate::ingest::{
    write_events_csv, write_participant_csv, write_sensor_csv, GestureEvent, Handedness, ParticipantMeta, SensorSample,
    EVENTS_FILE, PARTICIPANT_FILE, SENSORS_FILE,
};
use crate::label::GestureLabel;
use crate::numerics::{derive_seed, Rng, Stream};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Hz.
    pub sample_rate: f64,
    /// Mean gesture duration in seconds.
    pub duration_mean: f64,
    /// Gesture durations are drawn uniformly within ± this fraction.
    pub duration_jitter: f64,
    /// m/s².
    pub noise_std_acc: f64,
    /// rad/s.
    pub noise_std_gyro: f64,
    /// Characteristic gesture size in meters.
    pub amplitude: f64,
    /// Amplitudes vary within ± this fraction.
    pub amplitude_jitter: f64,
    /// Strength of the random time warp, in `[0, 0.5)`; 0 gives a pure ease.
    pub speed_warp: f64,
    /// Gesture planes are rotated about z by up to ± this many radians.
    pub rotation_jitter: f64,
    /// Standard deviation of the slow angular wobble on every gyro axis, rad/s.
    pub wobble_std: f64,
    /// Fraction of the path's heading rate that shows up as wrist yaw for
    /// circle and semicircle.
    pub yaw_gain: f64,
    /// Distance in meters from the arm's pivot to the phone. Moving the phone
    /// by d from where a gesture started tilts it by d / radius, which shows
    /// up as gyro x/y rate and as gravity leaking into acc x/y. 0 disables
    /// the tilt.
    pub pivot_radius: f64,
    /// Idle time between gestures, seconds.
    pub idle_min: f64,
    pub idle_max: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 100.0,
            duration_mean: 6.12,
            duration_jitter: 0.1,
            noise_std_acc: 0.02,
            noise_std_gyro: 0.01,
            amplitude: 0.3,
            amplitude_jitter: 0.1,
            speed_warp: 0.2,
            rotation_jitter: 0.15,
            wobble_std: 0.02,
            yaw_gain: 0.5,
            pivot_radius: 0.6,
            idle_min: 0.5,
            idle_max: 1.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Every randomized quantity and the arm tilt switched off; the
    /// accelerometer reads the exact path plus gravity.
    pub fn noise_free() -> Self {
        Self {
            duration_jitter: 0.0,
            noise_std_acc: 0.0,
            noise_std_gyro: 0.0,
            amplitude_jitter: 0.0,
            speed_warp: 0.0,
            rotation_jitter: 0.0,
            wobble_std: 0.0,
            pivot_radius: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.sample_rate,
            self.duration_mean,
            self.duration_jitter,
            self.noise_std_acc,
            self.noise_std_gyro,
            self.amplitude,
            self.amplitude_jitter,
            self.speed_warp,
            self.rotation_jitter,
            self.wobble_std,
            self.yaw_gain,
            self.pivot_radius,
            self.idle_min,
            self.idle_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(contract("synth parameters must be finite"));
        }
        if self.sample_rate <= 0.0 || self.duration_mean <= 0.0 || self.amplitude <= 0.0 {
            return Err(contract("sample rate, duration and amplitude must be positive"));
        }
        if self.noise_std_acc < 0.0 || self.noise_std_gyro < 0.0 || self.wobble_std < 0.0 {
            return Err(contract("noise levels must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.duration_jitter) || !(0.0..1.0).contains(&self.amplitude_jitter) {
            return Err(contract("jitter fractions must lie in [0, 1)"));
        }
        if !(0.0..0.5).contains(&self.speed_warp) {
            return Err(contract("speed warp must lie in [0, 0.5)"));
        }
        if self.pivot_radius < 0.0 {
            return Err(contract("pivot radius must be non-negative"));
        }
        if self.rotation_jitter < 0.0 || self.idle_min < 0.0 || self.idle_max < self.idle_min {
            return Err(contract(
                "rotation jitter and idle range must be non-negative and ordered",
            ));
        }
        Ok(())
    }
}

/// Motion-free `3v² − 2v³` blend so polyline strokes stop at their corners.
fn smoothstep(v: f64) -> f64 {
    v * v * (3.0 - 2.0 * v)
}

fn polyline(vertices: &[[f64; 2]], u: f64) -> [f64; 2] {
    let segments = vertices.len() - 1;
    let s = (u.clamp(0.0, 1.0) * segments as f64).min(segments as f64 - 1e-12);
    let k = s.floor() as usize;
    let v = smoothstep(s - k as f64);
    let (a, b) = (vertices[k], vertices[k + 1]);
    [a[0] + v * (b[0] - a[0]), a[1] + v * (b[1] - a[1])]
}

/// Unit-amplitude path of a gesture at progress `u ∈ [0, 1]`, in meters per
/// unit amplitude.
pub fn path_point(label: GestureLabel, u: f64) -> [f64; 2] {
    use GestureLabel::*;
    match label {
        Circle => [(TAU * u).cos(), (TAU * u).sin()],
        Semicircle => path_point(Circle, u / 2.0),
        Infinity => [(TAU * u).cos(), 0.5 * (2.0 * TAU * u).sin()],
        Tilde => path_point(Infinity, u / 2.0),
        Triangle => polyline(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3f64.sqrt()], [0.0, 0.0]], u),
        Square => polyline(&[[0.0, 0.0], [1.5, 0.0], [1.5, 1.5], [0.0, 1.5], [0.0, 0.0]], u),
        Zigzag => polyline(&[[0.0, 0.0], [0.5, 1.0], [1.0, 0.0], [1.5, 1.0], [2.0, 0.0]], u),
        VLine => polyline(&[[0.0, 1.0], [0.0, -1.0]], u),
        HLine => polyline(&[[-1.0, 0.0], [1.0, 0.0]], u),
        LetterS => {
            // Upper arc counter-clockwise from its right edge to the middle,
            // then lower arc clockwise from the middle to its left edge.
            let r = 0.6;
            if u < 0.5 {
                let a = 1.5 * PI * (2.0 * u);
                [r * a.cos(), r + r * a.sin()]
            } else {
                let a = 0.5 * PI - 1.5 * PI * (2.0 * u - 1.0);
                [r * a.cos(), -r + r * a.sin()]
            }
        }
    }
}

/// Heading turn, in radians per unit progress, of the rotation-bearing
/// gestures; zero for the others.
pub fn turn_rate(label: GestureLabel) -> f64 {
    match label {
        GestureLabel::Circle => TAU,
        GestureLabel::Semicircle => PI,
        _ => 0.0,
    }
}

/// Ease-in/ease-out progress with zero speed at both ends.
fn ease(x: f64) -> f64 {
    x - (TAU * x).sin() / TAU
}

fn ease_rate(x: f64) -> f64 {
    1.0 - (TAU * x).cos()
}

/// Monotone warp `w(τ) = τ + a·sin(πτ)/π + b·sin(2πτ)/(2π)` with `|a|+|b| < 1`.
#[derive(Debug, Clone, Copy)]
struct TimeWarp {
    a: f64,
    b: f64,
}

impl TimeWarp {
    fn draw(strength: f64, rng: &mut Rng) -> Self {
        Self {
            a: rng.uniform(-strength, strength),
            b: rng.uniform(-strength, strength),
        }
    }

    fn value(&self, tau: f64) -> f64 {
        tau + self.a * (PI * tau).sin() / PI + self.b * (TAU * tau).sin() / TAU
    }

    fn rate(&self, tau: f64) -> f64 {
        1.0 + self.a * (PI * tau).cos() + self.b * (TAU * tau).cos()
    }
}

/// A gesture path sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: GestureLabel,
    pub sample_rate: f64,
    /// Planar positions in meters.
    pub positions: Vec<[f64; 2]>,
    /// Wrist yaw rate in rad/s that accompanies the motion.
    pub yaw_rate: Vec<f64>,
}

/// Samples one gesture with random duration, size, plane rotation and time
/// warp drawn from `config`.
pub fn generate_trajectory(label: GestureLabel, config: &SynthConfig, rng: &mut Rng) -> Result<Trajectory> {
    generate_scaled(label, config, 1.0, 1.0, rng)
}

fn generate_scaled(
    label: GestureLabel,
    config: &SynthConfig,
    speed: f64,
    size: f64,
    rng: &mut Rng,
) -> Result<Trajectory> {
    config.validate()?;
    let j = config.duration_jitter;
    let duration = config.duration_mean * speed * (1.0 + rng.uniform(-j, j));
    let aj = config.amplitude_jitter;
    let amplitude = config.amplitude * size * (1.0 + rng.uniform(-aj, aj));
    let rotation = if config.rotation_jitter > 0.0 {
        rng.uniform(-config.rotation_jitter, config.rotation_jitter)
    } else {
        0.0
    };
    let warp = if config.speed_warp > 0.0 {
        TimeWarp::draw(config.speed_warp, rng)
    } else {
        TimeWarp { a: 0.0, b: 0.0 }
    };

    let n = (duration * config.sample_rate).round().max(1.0) as usize;
    let (sin_r, cos_r) = rotation.sin_cos();
    let last = (n - 1).max(1) as f64;
    let mut positions = Vec::with_capacity(n);
    let mut yaw_rate = Vec::with_capacity(n);
    for k in 0..n {
        let tau = k as f64 / last;
        let w = warp.value(tau);
        let u = ease(w);
        let [x, y] = path_point(label, u);
        positions.push([amplitude * (cos_r * x - sin_r * y), amplitude * (sin_r * x + cos_r * y)]);
        // du/dt = e'(w) · w'(τ) · dτ/dt
        let du_dt = ease_rate(w) * warp.rate(tau) * config.sample_rate / last;
        yaw_rate.push(config.yaw_gain * turn_rate(label) * du_dt);
    }
    Ok(Trajectory {
        label,
        sample_rate: config.sample_rate,
        positions,
        yaw_rate,
    })
}

fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Slow zero-mean angular wobble: an AR(1) process per axis.
struct Wobble {
    state: [f64; 3],
    rho: f64,
    std: f64,
}

impl Wobble {
    fn new(std: f64) -> Self {
        Self {
            state: [0.0; 3],
            rho: 0.95,
            std,
        }
    }

    fn step(&mut self, rng: &mut Rng) -> [f64; 3] {
        if self.std > 0.0 {
            let innovation = (1.0 - self.rho * self.rho).sqrt() * self.std;
            for s in &mut self.state {
                *s = self.rho * *s + innovation * rng.normal();
            }
        }
        self.state
    }
}

fn noise(std: f64, rng: &mut Rng) -> f64 {
    if std > 0.0 {
        std * rng.normal()
    } else {
        0.0
    }
}

/// Converts a trajectory into sensor samples starting at `start_ms`.
///
/// Acceleration is the second central difference of position (end samples
/// repeat their neighbours) plus gravity, which starts on +z and follows the
/// arm tilt (see [`SynthConfig::pivot_radius`]). The gyroscope reads wobble,
/// the tilt rate on x/y and the trajectory's yaw rate on z. Both get white
/// noise, and values are rounded to 1e-6.
pub fn trajectory_to_imu(
    trajectory: &Trajectory,
    config: &SynthConfig,
    start_ms: i64,
    rng: &mut Rng,
) -> Result<Vec<SensorSample>> {
    imu_samples(trajectory, config, start_ms, &mut Wobble::new(config.wobble_std), rng)
}

fn imu_samples(
    trajectory: &Trajectory,
    config: &SynthConfig,
    start_ms: i64,
    wobble: &mut Wobble,
    rng: &mut Rng,
) -> Result<Vec<SensorSample>> {
    let p = &trajectory.positions;
    let n = p.len();
    if n < 3 {
        return Err(contract(format!("need at least 3 positions to differentiate, got {n}")));
    }
    if trajectory.yaw_rate.len() != n {
        return Err(contract("yaw rate and positions differ in length"));
    }
    let dt2 = (1.0 / trajectory.sample_rate).powi(2);
    let accel = |k: usize| {
        let k = k.clamp(1, n - 2);
        [
            (p[k + 1][0] - 2.0 * p[k][0] + p[k - 1][0]) / dt2,
            (p[k + 1][1] - 2.0 * p[k][1] + p[k - 1][1]) / dt2,
        ]
    };
    // Small-angle arm model: pitch about x follows vertical displacement,
    // roll about y follows horizontal displacement.
    let inv_r = if config.pivot_radius > 0.0 {
        1.0 / config.pivot_radius
    } else {
        0.0
    };
    let tilt = |k: usize| [-(p[k][1] - p[0][1]) * inv_r, (p[k][0] - p[0][0]) * inv_r];
    let tilt_rate = |k: usize| {
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
        let (a, b) = (tilt(hi), tilt(lo));
        let scale = trajectory.sample_rate / (hi - lo) as f64;
        [(a[0] - b[0]) * scale, (a[1] - b[1]) * scale]
    };
    Ok((0..n)
        .map(|k| {
            let [ax, ay] = accel(k);
            let [pitch, roll] = tilt(k);
            let [pitch_rate, roll_rate] = tilt_rate(k);
            let gravity = [
                -GRAVITY * roll.sin() * pitch.cos(),
                GRAVITY * pitch.sin(),
                GRAVITY * pitch.cos() * roll.cos(),
            ];
            let w = wobble.step(rng);
            let acc =
                [ax + gravity[0], ay + gravity[1], gravity[2]].map(|a| quantize(a + noise(config.noise_std_acc, rng)));
            let gyro = [w[0] + pitch_rate, w[1] + roll_rate, w[2] + trajectory.yaw_rate[k]]
                .map(|g| quantize(g + noise(config.noise_std_gyro, rng)));
            SensorSample {
                t_ms: start_ms + sample_offset_ms(k, trajectory.sample_rate),
                acc,
                gyro,
            }
        })
        .collect())
}

fn sample_offset_ms(k: usize, sample_rate: f64) -> i64 {
    (k as f64 * 1000.0 / sample_rate).round() as i64
}

/// Per-participant style, fixed by the base seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Personality {
    /// Multiplies gesture durations.
    pub speed: f64,
    /// Multiplies gesture amplitudes.
    pub size: f64,
    /// Multiplies every noise level.
    pub noise: f64,
}

impl Personality {
    pub fn draw(seed: u64, participant: usize) -> Self {
        let mut rng = Rng::for_stream(derive_seed(seed, &[0x5e55, participant as u64]), Stream::Synth);
        Self {
            speed: rng.uniform(0.85, 1.15),
            size: rng.uniform(0.85, 1.15),
            noise: rng.uniform(0.7, 1.3),
        }
    }
}

/// One generated session: samples of all ten gestures and their intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub samples: Vec<SensorSample>,
    pub events: Vec<GestureEvent>,
}

fn idle_samples(
    config: &SynthConfig,
    seconds: f64,
    start_ms: i64,
    wobble: &mut Wobble,
    rng: &mut Rng,
) -> Result<Vec<SensorSample>> {
    let n = ((seconds * config.sample_rate).round() as usize).max(3);
    let still = Trajectory {
        label: GestureLabel::Circle,
        sample_rate: config.sample_rate,
        positions: vec![[0.0, 0.0]; n],
        yaw_rate: vec![0.0; n],
    };
    imu_samples(&still, config, start_ms, wobble, rng)
}

/// Generates one session for participant index `participant` (0-based).
pub fn generate_session(config: &SynthConfig, participant: usize, session: usize) -> Result<SynthSession> {
    config.validate()?;
    let style = Personality::draw(config.seed, participant);
    let styled = SynthConfig {
        noise_std_acc: config.noise_std_acc * style.noise,
        noise_std_gyro: config.noise_std_gyro * style.noise,
        wobble_std: config.wobble_std * style.noise,
        ..config.clone()
    };
    let mut rng = Rng::for_stream(
        derive_seed(config.seed, &[participant as u64, session as u64]),
        Stream::Synth,
    );
    let mut order = GestureLabel::ALL;
    rng.shuffle(&mut order);

    let mut wobble = Wobble::new(styled.wobble_std);
    let mut samples = Vec::new();
    let mut events = Vec::with_capacity(order.len());
    let step_ms = sample_offset_ms(1, config.sample_rate).max(1);
    let mut next_ms = 0i64;
    let push = |chunk: Vec<SensorSample>, next_ms: &mut i64, samples: &mut Vec<SensorSample>| {
        let last = chunk.last().map_or(*next_ms, |s| s.t_ms);
        samples.extend(chunk);
        *next_ms = last + step_ms;
    };

    let gap = rng.uniform(config.idle_min, config.idle_max);
    push(
        idle_samples(&styled, gap, next_ms, &mut wobble, &mut rng)?,
        &mut next_ms,
        &mut samples,
    );
    for label in order {
        let trajectory = generate_scaled(label, &styled, style.speed, style.size, &mut rng)?;
        let chunk = imu_samples(&trajectory, &styled, next_ms, &mut wobble, &mut rng)?;
        events.push(GestureEvent {
            label,
            start_ms: chunk[0].t_ms,
            end_ms: chunk[chunk.len() - 1].t_ms,
        });
        push(chunk, &mut next_ms, &mut samples);
        let gap = rng.uniform(config.idle_min, config.idle_max);
        push(
            idle_samples(&styled, gap, next_ms, &mut wobble, &mut rng)?,
            &mut next_ms,
            &mut samples,
        );
    }
    Ok(SynthSession { samples, events })
}

pub fn participant_alias(participant: usize) -> String {
    format!("p{}", participant + 1)
}

pub fn session_name(session: usize) -> String {
    format!("s{:02}", session + 1)
}

fn participant_meta(seed: u64, participant: usize) -> ParticipantMeta {
    let mut rng = Rng::for_stream(derive_seed(seed, &[0xa9e, participant as u64]), Stream::Synth);
    ParticipantMeta {
        alias: participant_alias(participant),
        gender: "unspecified".into(),
        handedness: if rng.below(10) == 0 {
            Handedness::Left
        } else {
            Handedness::Right
        },
        age: Some(20 + rng.below(21) as u32),
        occupation: "synthetic".into(),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Writes `participants × sessions` session directories under `out_dir`
/// (`p1/s01/sensors.csv`, `p1/s01/events.csv`, ...) plus one
/// `participant.csv` per participant.
pub fn generate_dataset(config: &SynthConfig, participants: usize, sessions: usize, out_dir: &Path) -> Result<()> {
    config.validate()?;
    for p in 0..participants {
        let dir = out_dir.join(participant_alias(p));
        let meta = participant_meta(config.seed, p);
        write_atomic(
            &dir.join(PARTICIPANT_FILE),
            &csv_bytes(|b| write_participant_csv(b, &meta))?,
        )?;
        for s in 0..sessions {
            let session = generate_session(config, p, s)?;
            let sdir = dir.join(session_name(s));
            std::fs::create_dir_all(&sdir)?;
            let tmp = sdir.join(format!("{SENSORS_FILE}.tmp"));
            {
                let mut out = BufWriter::new(File::create(&tmp)?);
                write_sensor_csv(&mut out, &session.samples)?;
                out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            }
            std::fs::rename(&tmp, sdir.join(SENSORS_FILE))?;
            write_atomic(
                &sdir.join(EVENTS_FILE),
                &csv_bytes(|b| write_events_csv(b, &session.events))?,
            )?;
        }
    }
    log::info!(
        "wrote {} sessions for {participants} participants to {}",
        participants * sessions,
        out_dir.display()
    );
    Ok(())
}
