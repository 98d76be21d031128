//! Reference trajectories: five closed-form patterns and recorded
//! demonstrations.
//!
//! Analytic patterns return exact first and second time derivatives. Replayed
//! demonstrations only have positions, so their derivatives come from a
//! [`Differentiator`] (backward differences with an optional low-pass).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::TrajectoryError;
use crate::kin2::CartesianState;

/// Closed-form pattern parameters. Lengths in meters, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    /// `(R sin ωt, R cos ωt)`, `ω = 2π / period`.
    Circle { radius: f64, period: f64 },
    /// `(R sin ωt cos ωt, R sin ωt)`.
    FigureEight { amplitude: f64, period: f64 },
    /// Astroid `(R cos³t, R sin³t)`.
    Tetragon { radius: f64 },
    /// Hypotrochoid with fixed radius `R`, rolling radius `r`, pen distance `d`
    /// and angular rate `n`.
    Pentagram { big_r: f64, small_r: f64, d: f64, n: f64 },
    /// Rhodonea `(R cos kt cos t, R cos kt sin t)`.
    Rose { radius: f64, k: f64 },
}

impl Shape {
    pub fn circle() -> Self {
        Shape::Circle { radius: 0.08, period: 5.0 }
    }

    pub fn figure_eight() -> Self {
        Shape::FigureEight { amplitude: 0.1, period: 5.0 }
    }

    pub fn tetragon() -> Self {
        Shape::Tetragon { radius: 0.1 }
    }

    pub fn pentagram() -> Self {
        Shape::Pentagram {
            big_r: 0.08,
            small_r: 0.048,
            d: 0.064,
            n: 3.0,
        }
    }

    pub fn rose() -> Self {
        Shape::Rose { radius: 0.1, k: 4.0 }
    }

    pub fn kind(&self) -> TrajectoryKind {
        match self {
            Shape::Circle { .. } => TrajectoryKind::Circle,
            Shape::FigureEight { .. } => TrajectoryKind::FigureEight,
            Shape::Tetragon { .. } => TrajectoryKind::Tetragon,
            Shape::Pentagram { .. } => TrajectoryKind::Pentagram,
            Shape::Rose { .. } => TrajectoryKind::Rose,
        }
    }

    /// Position, velocity and acceleration at parameter time `s`.
    fn eval(&self, s: f64) -> [Vector2<f64>; 3] {
        match *self {
            Shape::Circle { radius: r, period } => {
                let w = 2.0 * PI / period;
                let (sn, cs) = (w * s).sin_cos();
                [
                    Vector2::new(r * sn, r * cs),
                    Vector2::new(r * w * cs, -r * w * sn),
                    Vector2::new(-r * w * w * sn, -r * w * w * cs),
                ]
            }
            Shape::FigureEight { amplitude: r, period } => {
                let w = 2.0 * PI / period;
                let (sn, cs) = (w * s).sin_cos();
                let (sn2, cs2) = (2.0 * w * s).sin_cos();
                [
                    Vector2::new(r * sn * cs, r * sn),
                    Vector2::new(r * w * cs2, r * w * cs),
                    Vector2::new(-2.0 * r * w * w * sn2, -r * w * w * sn),
                ]
            }
            Shape::Tetragon { radius: r } => {
                let (sn, cs) = s.sin_cos();
                [
                    Vector2::new(r * cs.powi(3), r * sn.powi(3)),
                    Vector2::new(-3.0 * r * cs * cs * sn, 3.0 * r * sn * sn * cs),
                    Vector2::new(
                        3.0 * r * cs * (2.0 * sn * sn - cs * cs),
                        3.0 * r * sn * (2.0 * cs * cs - sn * sn),
                    ),
                ]
            }
            Shape::Pentagram { big_r, small_r, d, n } => {
                let a = big_r - small_r;
                let m = a / small_r * n;
                let (sn, cn) = (n * s).sin_cos();
                let (sm, cm) = (m * s).sin_cos();
                [
                    Vector2::new(a * cn + d * cm, a * sn - d * sm),
                    Vector2::new(-a * n * sn - d * m * sm, a * n * cn - d * m * cm),
                    Vector2::new(-a * n * n * cn - d * m * m * cm, -a * n * n * sn + d * m * m * sm),
                ]
            }
            Shape::Rose { radius: r, k } => {
                let (st, ct) = s.sin_cos();
                let (sk, ck) = (k * s).sin_cos();
                let kk = k * k + 1.0;
                [
                    Vector2::new(r * ck * ct, r * ck * st),
                    Vector2::new(r * (-k * sk * ct - ck * st), r * (-k * sk * st + ck * ct)),
                    Vector2::new(
                        r * (-kk * ck * ct + 2.0 * k * sk * st),
                        r * (-kk * ck * st - 2.0 * k * sk * ct),
                    ),
                ]
            }
        }
    }

    /// Largest distance from the pattern's own origin.
    pub fn radius_bound(&self) -> f64 {
        match *self {
            Shape::Circle { radius, .. } => radius,
            Shape::FigureEight { amplitude, .. } => amplitude,
            Shape::Tetragon { radius } => radius,
            Shape::Pentagram { big_r, small_r, d, .. } => (big_r - small_r).abs() + d.abs(),
            Shape::Rose { radius, .. } => radius,
        }
    }

    /// Period in parameter time, when the pattern closes.
    pub fn period(&self) -> Option<f64> {
        match *self {
            Shape::Circle { period, .. } | Shape::FigureEight { period, .. } => Some(period),
            Shape::Tetragon { .. } => Some(2.0 * PI),
            Shape::Rose { k, .. } => (k.fract() == 0.0).then_some(2.0 * PI),
            Shape::Pentagram { big_r, small_r, n, .. } => {
                // Closes once both n·t and ((R - r)/r)·n·t are multiples of 2π.
                let ratio = (big_r - small_r) / small_r;
                (1..=1000u32)
                    .find(|q| {
                        let p = ratio * *q as f64;
                        (p - p.round()).abs() < 1e-9
                    })
                    .map(|q| 2.0 * PI * q as f64 / n)
            }
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let ok = match *self {
            Shape::Circle { radius, period } => radius > 0.0 && period > 0.0,
            Shape::FigureEight { amplitude, period } => amplitude > 0.0 && period > 0.0,
            Shape::Tetragon { radius } => radius > 0.0,
            Shape::Pentagram { big_r, small_r, d, n } => big_r > 0.0 && small_r > 0.0 && d >= 0.0 && n > 0.0,
            Shape::Rose { radius, k } => radius > 0.0 && k.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(TrajectoryError::Invalid(format!("bad parameters for {:?}", self.kind())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Circle,
    #[serde(alias = "figure8")]
    FigureEight,
    Tetragon,
    Pentagram,
    Rose,
    Replay,
}

impl TrajectoryKind {
    pub const PATTERNS: [TrajectoryKind; 5] = [
        TrajectoryKind::Circle,
        TrajectoryKind::FigureEight,
        TrajectoryKind::Tetragon,
        TrajectoryKind::Pentagram,
        TrajectoryKind::Rose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::FigureEight => "figure-eight",
            TrajectoryKind::Tetragon => "tetragon",
            TrajectoryKind::Pentagram => "pentagram",
            TrajectoryKind::Rose => "rose",
            TrajectoryKind::Replay => "replay",
        }
    }

    /// The default pattern of this kind (`None` for replay).
    pub fn default_shape(self) -> Option<Shape> {
        match self {
            TrajectoryKind::Circle => Some(Shape::circle()),
            TrajectoryKind::FigureEight => Some(Shape::figure_eight()),
            TrajectoryKind::Tetragon => Some(Shape::tetragon()),
            TrajectoryKind::Pentagram => Some(Shape::pentagram()),
            TrajectoryKind::Rose => Some(Shape::rose()),
            TrajectoryKind::Replay => None,
        }
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = TrajectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circle" => Ok(TrajectoryKind::Circle),
            "figure-eight" | "figure8" | "figure_eight" => Ok(TrajectoryKind::FigureEight),
            "tetragon" => Ok(TrajectoryKind::Tetragon),
            "pentagram" => Ok(TrajectoryKind::Pentagram),
            "rose" => Ok(TrajectoryKind::Rose),
            "replay" => Ok(TrajectoryKind::Replay),
            other => Err(TrajectoryError::Invalid(format!("unknown trajectory `{other}`"))),
        }
    }
}

/// A pattern placed in a robot's workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub shape: Shape,
    pub center: Vector2<f64>,
    /// Playback speed multiplier; 1 runs the equations on raw time.
    #[serde(default = "one")]
    pub time_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TrajectorySpec {
    pub fn new(shape: Shape, center: Vector2<f64>) -> Self {
        TrajectorySpec {
            shape,
            center,
            time_scale: 1.0,
        }
    }

    /// Reference at time `t ≥ 0`.
    pub fn sample(&self, t: f64) -> CartesianState {
        let k = self.time_scale;
        let [p, v, a] = self.shape.eval(k * t);
        CartesianState::new(p + self.center, v * k, a * (k * k))
    }

    /// Period in wall-clock seconds, if the pattern closes.
    pub fn period(&self) -> Option<f64> {
        self.shape.period().map(|p| p / self.time_scale)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        self.shape.validate()?;
        if !(self.time_scale > 0.0) {
            return Err(TrajectoryError::Invalid("time scale must be positive".into()));
        }
        Ok(())
    }
}

/// Backward-difference velocity and acceleration of a sampled position
/// stream, each through a first-order low-pass.
#[derive(Debug, Clone)]
pub struct Differentiator {
    dt: f64,
    /// Low-pass blend factor, `None` when filtering is disabled.
    blend: Option<f64>,
    prev_x: Option<Vector2<f64>>,
    prev_v_raw: Option<Vector2<f64>>,
    v: Vector2<f64>,
    a: Vector2<f64>,
}

impl Differentiator {
    /// `cutoff_hz = 0` disables the low-pass.
    pub fn new(dt: f64, cutoff_hz: f64) -> Self {
        let blend = (cutoff_hz > 0.0).then(|| {
            let tau = 1.0 / (2.0 * PI * cutoff_hz);
            dt / (dt + tau)
        });
        Differentiator {
            dt,
            blend,
            prev_x: None,
            prev_v_raw: None,
            v: Vector2::zeros(),
            a: Vector2::zeros(),
        }
    }

    fn filter(&self, y: Vector2<f64>, u: Vector2<f64>) -> Vector2<f64> {
        match self.blend {
            Some(b) => y + (u - y) * b,
            None => u,
        }
    }

    /// Push the next sample; returns the reference with derivative estimates.
    pub fn update(&mut self, x: Vector2<f64>) -> CartesianState {
        if let Some(px) = self.prev_x {
            let v_raw = (x - px) / self.dt;
            let a_raw = self.prev_v_raw.map(|pv| (v_raw - pv) / self.dt).unwrap_or_else(Vector2::zeros);
            self.v = self.filter(self.v, v_raw);
            self.a = self.filter(self.a, a_raw);
            self.prev_v_raw = Some(v_raw);
        }
        self.prev_x = Some(x);
        CartesianState::new(x, self.v, self.a)
    }

    pub fn reset(&mut self) {
        self.prev_x = None;
        self.prev_v_raw = None;
        self.v = Vector2::zeros();
        self.a = Vector2::zeros();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub tick: u64,
    pub x: Vector2<f64>,
}

/// Time-stamped end-effector positions captured from a demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedDemo {
    pub sample_rate: f64,
    /// Rate of the ticks being recorded.
    pub control_rate: f64,
    pub samples: Vec<DemoSample>,
    pub metadata: BTreeMap<String, String>,
    last_tick: Option<u64>,
}

impl RecordedDemo {
    pub const DEFAULT_SAMPLE_RATE: f64 = 500.0;

    pub fn new(sample_rate: f64, control_rate: f64) -> Self {
        RecordedDemo {
            sample_rate,
            control_rate,
            samples: Vec::new(),
            metadata: BTreeMap::new(),
            last_tick: None,
        }
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    /// Control ticks per stored sample.
    pub fn decimation(&self) -> u64 {
        ((self.control_rate / self.sample_rate).round() as u64).max(1)
    }

    /// Offer one control tick; every `decimation()`-th tick since the first is
    /// kept.
    pub fn record_append(&mut self, tick: u64, x: Vector2<f64>) -> Result<(), TrajectoryError> {
        if let Some(last) = self.last_tick {
            if tick <= last {
                return Err(TrajectoryError::NonMonotonicTick { tick, last });
            }
        }
        self.last_tick = Some(tick);
        let keep = match self.samples.first() {
            None => true,
            Some(first) => (tick - first.tick).is_multiple_of(self.decimation()),
        };
        if keep {
            self.samples.push(DemoSample { tick, x });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (b.tick - a.tick) as f64 / self.control_rate,
            _ => 0.0,
        }
    }

    /// Linearly interpolated position at `t` seconds after the first sample.
    pub fn position_at(&self, t: f64) -> Result<Vector2<f64>, TrajectoryError> {
        let first = self.samples.first().ok_or(TrajectoryError::EmptyDemo)?;
        let duration = self.duration();
        if !(t >= 0.0 && t <= duration) {
            return Err(TrajectoryError::OutOfRange { t, duration });
        }
        let mut pos = first.tick as f64 + t * self.control_rate;
        if (pos - pos.round()).abs() < 1e-9 {
            pos = pos.round();
        }
        let idx = self.samples.partition_point(|s| (s.tick as f64) <= pos);
        let a = &self.samples[idx.saturating_sub(1)];
        if a.tick as f64 == pos || idx >= self.samples.len() {
            return Ok(a.x);
        }
        let b = &self.samples[idx];
        let u = (pos - a.tick as f64) / (b.tick - a.tick) as f64;
        Ok(a.x + (b.x - a.x) * u)
    }

    /// Write as `#key=value` metadata lines, a `tick,x_m,y_m` header and one
    /// row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut meta = self.metadata.clone();
        meta.insert("sample_rate".into(), format!("{}", self.sample_rate));
        meta.insert("control_rate".into(), format!("{}", self.control_rate));
        for (k, v) in &meta {
            writeln!(w, "#{k}={v}")?;
        }
        writeln!(w, "tick,x_m,y_m")?;
        for s in &self.samples {
            writeln!(w, "{},{},{}", s.tick, s.x[0], s.x[1])?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TrajectoryError> {
        let fmt = |m: String| TrajectoryError::Format(m);
        let mut metadata = BTreeMap::new();
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| fmt(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if header_seen {
                    return Err(fmt(format!("line {}: metadata after header", n + 1)));
                }
                let (k, v) = meta
                    .split_once('=')
                    .ok_or_else(|| fmt(format!("line {}: expected #key=value", n + 1)))?;
                metadata.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if !header_seen {
                if line != "tick,x_m,y_m" {
                    return Err(fmt(format!("line {}: expected header tick,x_m,y_m", n + 1)));
                }
                header_seen = true;
                continue;
            }
            let mut parts = line.split(',');
            let mut field = |name: &str| {
                parts
                    .next()
                    .map(str::trim)
                    .ok_or_else(|| fmt(format!("line {}: missing {name}", n + 1)))
            };
            let tick: u64 = field("tick")?.parse().map_err(|_| fmt(format!("line {}: bad tick", n + 1)))?;
            let x: f64 = field("x_m")?.parse().map_err(|_| fmt(format!("line {}: bad x_m", n + 1)))?;
            let y: f64 = field("y_m")?.parse().map_err(|_| fmt(format!("line {}: bad y_m", n + 1)))?;
            rows.push((tick, Vector2::new(x, y)));
        }
        if !header_seen {
            return Err(fmt("missing header".into()));
        }
        let mut rate = |key: &str, default: f64| -> Result<f64, TrajectoryError> {
            match metadata.remove(key) {
                Some(v) => v.parse().map_err(|_| fmt(format!("bad {key}"))),
                None => Ok(default),
            }
        };
        let sample_rate = rate("sample_rate", Self::DEFAULT_SAMPLE_RATE)?;
        let control_rate = rate("control_rate", 1000.0)?;
        let mut demo = RecordedDemo::new(sample_rate, control_rate);
        demo.metadata = metadata;
        // Stored rows are already decimated; keep them verbatim.
        for (tick, x) in rows {
            if let Some(last) = demo.last_tick {
                if tick <= last {
                    return Err(TrajectoryError::NonMonotonicTick { tick, last });
                }
            }
            demo.last_tick = Some(tick);
            demo.samples.push(DemoSample { tick, x });
        }
        Ok(demo)
    }
}

/// Stateful replay of a demo at the control rate.
#[derive(Debug, Clone)]
pub struct DemoPlayer {
    diff: Differentiator,
}

impl DemoPlayer {
    pub fn new(dt: f64, filter_cutoff: f64) -> Self {
        DemoPlayer {
            diff: Differentiator::new(dt, filter_cutoff),
        }
    }

    /// Next reference; call once per control period with increasing `t`.
    pub fn sample(&mut self, demo: &RecordedDemo, t: f64) -> Result<CartesianState, TrajectoryError> {
        Ok(self.diff.update(demo.position_at(t)?))
    }
}

/// Replay reference at `t`, computed by running a fresh player from `t = 0`
/// at period `dt`.
pub fn replay_sample(demo: &RecordedDemo, t: f64, filter_cutoff: f64, dt: f64) -> Result<CartesianState, TrajectoryError> {
    let duration = demo.duration();
    if demo.is_empty() {
        return Err(TrajectoryError::EmptyDemo);
    }
    if !(t >= 0.0 && t <= duration) {
        return Err(TrajectoryError::OutOfRange { t, duration });
    }
    let steps = (t / dt).round() as u64;
    let mut player = DemoPlayer::new(dt, filter_cutoff);
    let mut out = player.sample(demo, 0.0)?;
    for k in 1..=steps {
        let tk = (k as f64 * dt).min(duration);
        out = player.sample(demo, tk)?;
    }
    Ok(out)
}
