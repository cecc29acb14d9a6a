//! Ground-truth pendulum plant, excitation signals and dataset recording.
//!
//! The plant is the discretized pendulum
//!
//! ```text
//! x1+ = (1 - b*Ts/J) x1 + (Ts/J) u - (M*L*g*Ts / (2J)) sin(x2) + d
//! x2+ = Ts x1 + x2
//! y   = x2
//! ```
//!
//! with inertia `J = M L^2 / 3`. The output is the pendulum angle, the first
//! state the angular velocity, and the additive disturbance enters the
//! velocity equation. Identification data is recorded by driving the plant
//! open loop with a dithered piecewise-constant input.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DVector, Vector2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("invalid excitation config: {0}")]
    InvalidExcitation(String),
    #[error("invalid disturbance profile: {0}")]
    InvalidDisturbance(String),
    #[error("input sequence must be nonempty")]
    EmptyInputs,
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Physical parameters of the pendulum. The inertia is always `M L^2 / 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PendulumParamsToml")]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
    pub gravity: f64,
    pub sampling_time: f64,
    #[serde(skip_serializing)]
    inertia: f64,
}

/// Serde surface for [`PendulumParams`]; the inertia is derived, not read.
#[derive(Deserialize)]
struct PendulumParamsToml {
    #[serde(default = "default_mass")]
    mass: f64,
    #[serde(default = "default_length")]
    length: f64,
    #[serde(default = "default_friction")]
    friction: f64,
    #[serde(default = "default_gravity")]
    gravity: f64,
    #[serde(default = "default_sampling_time")]
    sampling_time: f64,
}

fn default_mass() -> f64 {
    1.0
}
fn default_length() -> f64 {
    1.0
}
fn default_friction() -> f64 {
    0.1
}
fn default_gravity() -> f64 {
    9.81
}
fn default_sampling_time() -> f64 {
    1.0 / 30.0
}

impl TryFrom<PendulumParamsToml> for PendulumParams {
    type Error = PlantError;

    fn try_from(v: PendulumParamsToml) -> Result<Self, PlantError> {
        PendulumParams::new(v.mass, v.length, v.friction, v.gravity, v.sampling_time)
    }
}

impl PendulumParams {
    pub fn new(
        mass: f64,
        length: f64,
        friction: f64,
        gravity: f64,
        sampling_time: f64,
    ) -> Result<Self, PlantError> {
        if mass.is_nan() || mass <= 0.0 || length.is_nan() || length <= 0.0 {
            return Err(PlantError::InvalidParams(format!(
                "mass and length must be positive, got M={mass}, L={length}"
            )));
        }
        if friction.is_nan() || friction < 0.0 {
            return Err(PlantError::InvalidParams(format!(
                "friction must be nonnegative, got b={friction}"
            )));
        }
        if sampling_time.is_nan() || sampling_time <= 0.0 {
            return Err(PlantError::InvalidParams(format!(
                "sampling time must be positive, got Ts={sampling_time}"
            )));
        }
        Ok(Self {
            mass,
            length,
            friction,
            gravity,
            sampling_time,
            inertia: mass * length * length / 3.0,
        })
    }

    /// Benchmark constants: M = 1 kg, L = 1 m, b = 0.1, g = 9.81, Ts = 1/30 s.
    pub fn benchmark() -> Self {
        Self::new(1.0, 1.0, 0.1, 9.81, 1.0 / 30.0).expect("benchmark constants are valid")
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Equilibrium state for output setpoint `y_r`: zero velocity, angle `y_r`.
    pub fn equilibrium_state(&self, y_r: f64) -> Vector2<f64> {
        Vector2::new(0.0, y_r)
    }

    /// Torque holding the pendulum at angle `y_r`: `u_r = M g L / 2 * sin(y_r)`.
    pub fn equilibrium_input(&self, y_r: f64) -> f64 {
        0.5 * self.mass * self.gravity * self.length * y_r.sin()
    }
}

/// One plant step. Returns the successor state and the output of the
/// *current* state.
pub fn pendulum_step(
    params: &PendulumParams,
    x: &Vector2<f64>,
    u: f64,
    d: f64,
) -> (Vector2<f64>, f64) {
    let ts = params.sampling_time;
    let j = params.inertia();
    let x1 = (1.0 - params.friction * ts / j) * x[0] + ts / j * u
        - params.mass * params.length * params.gravity * ts / (2.0 * j) * x[1].sin()
        + d;
    let x2 = ts * x[0] + x[1];
    (Vector2::new(x1, x2), x[1])
}

/// Piecewise-constant disturbance: `(start_step, value)` segments, first
/// segment starting at step 0, start steps strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DisturbanceSegment>")]
pub struct DisturbanceProfile {
    segments: Vec<DisturbanceSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSegment {
    pub start: usize,
    pub value: f64,
}

impl TryFrom<Vec<DisturbanceSegment>> for DisturbanceProfile {
    type Error = PlantError;

    fn try_from(segments: Vec<DisturbanceSegment>) -> Result<Self, PlantError> {
        DisturbanceProfile::new(segments)
    }
}

impl DisturbanceProfile {
    pub fn new(segments: Vec<DisturbanceSegment>) -> Result<Self, PlantError> {
        match segments.first() {
            None => {
                return Err(PlantError::InvalidDisturbance(
                    "profile needs at least one segment".into(),
                ))
            }
            Some(first) if first.start != 0 => {
                return Err(PlantError::InvalidDisturbance(format!(
                    "first segment must start at step 0, got {}",
                    first.start
                )))
            }
            _ => {}
        }
        for w in segments.windows(2) {
            if w[1].start <= w[0].start {
                return Err(PlantError::InvalidDisturbance(format!(
                    "segment starts must be strictly increasing ({} then {})",
                    w[0].start, w[1].start
                )));
            }
        }
        Ok(Self { segments })
    }

    /// The all-zero profile used for identification runs.
    pub fn zero() -> Self {
        Self::new(vec![DisturbanceSegment {
            start: 0,
            value: 0.0,
        }])
        .expect("zero profile is valid")
    }

    pub fn value_at(&self, step: usize) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|seg| seg.start <= step)
            .map(|seg| seg.value)
            .expect("first segment starts at 0")
    }

    pub fn segments(&self) -> &[DisturbanceSegment] {
        &self.segments
    }
}

/// Multisine dither: a fixed number of sinusoids with frequencies spread
/// uniformly over a normalized band (1 = Nyquist) and seeded random phases,
/// rescaled so the dither lies within the amplitude range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultisineConfig {
    /// `[lo, hi]` bounds on the dither signal.
    pub amplitude: [f64; 2],
    /// Normalized frequency band `[f_lo, f_hi]` with 1 at the Nyquist rate.
    pub band: [f64; 2],
    pub num_sines: usize,
}

impl Default for MultisineConfig {
    fn default() -> Self {
        Self {
            amplitude: [-0.2, 0.2],
            band: [0.0, 1.0],
            num_sines: 25,
        }
    }
}

/// Excitation = piecewise-constant carrier plus multisine dither. The carrier
/// level list cycles if the requested length outruns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationConfig {
    /// `(hold_steps, level)` pairs with levels within ±1.
    pub base_levels: Vec<(usize, f64)>,
    #[serde(default)]
    pub multisine: MultisineConfig,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        // Carrier levels span ±1. The holds are short: long holds let the
        // discretized swing pump itself over the top, while 10-step holds
        // keep the open-loop response below |x2| ≈ 2.2 rad.
        Self {
            base_levels: vec![
                (10, 0.4),
                (10, -1.0),
                (10, 0.7),
                (10, -0.3),
                (10, 1.0),
                (10, -0.7),
                (10, 0.1),
                (10, -0.5),
                (10, 0.9),
                (10, -0.9),
                (10, 0.25),
                (10, -0.15),
            ],
            multisine: MultisineConfig::default(),
        }
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self.base_levels.is_empty() {
            return Err(PlantError::InvalidExcitation(
                "carrier needs at least one level".into(),
            ));
        }
        for &(hold, level) in &self.base_levels {
            if hold == 0 {
                return Err(PlantError::InvalidExcitation(
                    "carrier hold lengths must be at least 1 step".into(),
                ));
            }
            if level.is_nan() || level.abs() > 1.0 {
                return Err(PlantError::InvalidExcitation(format!(
                    "carrier level {level} outside ±1"
                )));
            }
        }
        let [lo, hi] = self.multisine.amplitude;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(PlantError::InvalidExcitation(format!(
                "amplitude range [{lo}, {hi}] is empty"
            )));
        }
        let [f_lo, f_hi] = self.multisine.band;
        if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= 1.0) {
            return Err(PlantError::InvalidExcitation(format!(
                "band [{f_lo}, {f_hi}] must satisfy 0 <= f_lo < f_hi <= 1"
            )));
        }
        if self.multisine.num_sines == 0 {
            return Err(PlantError::InvalidExcitation(
                "multisine needs at least one sinusoid".into(),
            ));
        }
        Ok(())
    }
}

/// Generates the excitation signal: carrier plus dither, deterministic for a
/// fixed seed.
pub fn generate_excitation(
    config: &ExcitationConfig,
    length: usize,
    seed: u64,
) -> Result<Vec<f64>, PlantError> {
    config.validate()?;
    if length == 0 {
        return Err(PlantError::InvalidExcitation(
            "excitation length must be at least 1".into(),
        ));
    }

    let mut carrier = Vec::with_capacity(length);
    'outer: loop {
        for &(hold, level) in &config.base_levels {
            for _ in 0..hold {
                carrier.push(level);
                if carrier.len() == length {
                    break 'outer;
                }
            }
        }
    }

    let ms = &config.multisine;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..ms.num_sines)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    // Midpoint spread keeps the frequencies strictly inside the band, away
    // from DC and the Nyquist rate.
    let [f_lo, f_hi] = ms.band;
    let freqs: Vec<f64> = (0..ms.num_sines)
        .map(|j| f_lo + (j as f64 + 0.5) * (f_hi - f_lo) / ms.num_sines as f64)
        .collect();

    let raw: Vec<f64> = (0..length)
        .map(|k| {
            freqs
                .iter()
                .zip(&phases)
                .map(|(f, phi)| (std::f64::consts::PI * f * k as f64 + phi).sin())
                .sum()
        })
        .collect();
    let (raw_min, raw_max) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });

    let [a_lo, a_hi] = ms.amplitude;
    let signal = carrier
        .iter()
        .zip(&raw)
        .map(|(&c, &m)| {
            let dither = if raw_max > raw_min {
                a_lo + (m - raw_min) * (a_hi - a_lo) / (raw_max - raw_min)
            } else {
                0.5 * (a_lo + a_hi)
            };
            c + dither
        })
        .collect();
    Ok(signal)
}

/// Recorded state/input/output/disturbance trajectories. All four sequences
/// have `s + 1` entries where `s` is the number of applied inputs; the final
/// input is held so that increments are defined up to the last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
}

impl Dataset {
    /// Number of recorded samples minus one (the `s` in a length-`s+1` record).
    pub fn num_transitions(&self) -> usize {
        self.x.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.u[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.y[0].len()
    }

    /// `x_k - x_{k-1}`, defined for `k` in `1..=s`.
    pub fn delta_x(&self, k: usize) -> DVector<f64> {
        &self.x[k] - &self.x[k - 1]
    }

    pub fn delta_u(&self, k: usize) -> DVector<f64> {
        &self.u[k] - &self.u[k - 1]
    }

    pub fn delta_y(&self, k: usize) -> DVector<f64> {
        &self.y[k] - &self.y[k - 1]
    }

    /// Writes the pendulum-shaped CSV (`k,x1,x2,u,y,d`) with full double
    /// precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PlantError> {
        writeln!(w, "k,x1,x2,u,y,d")?;
        for k in 0..self.x.len() {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                k, self.x[k][0], self.x[k][1], self.u[k][0], self.y[k][0], self.d[k][0]
            )?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), PlantError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, PlantError> {
        let mut x = Vec::new();
        let mut u = Vec::new();
        let mut y = Vec::new();
        let mut d = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "k,x1,x2,u,y,d" {
                    return Err(PlantError::Parse {
                        line: 1,
                        msg: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(PlantError::Parse {
                    line: i + 1,
                    msg: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, PlantError> {
                s.trim().parse().map_err(|e| PlantError::Parse {
                    line: i + 1,
                    msg: format!("bad float {s:?}: {e}"),
                })
            };
            x.push(DVector::from_vec(vec![parse(fields[1])?, parse(fields[2])?]));
            u.push(DVector::from_vec(vec![parse(fields[3])?]));
            y.push(DVector::from_vec(vec![parse(fields[4])?]));
            d.push(DVector::from_vec(vec![parse(fields[5])?]));
        }
        if x.is_empty() {
            return Err(PlantError::Parse {
                line: 0,
                msg: "dataset has no rows".into(),
            });
        }
        Ok(Self { x, u, y, d })
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self, PlantError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Drives the plant open loop with `inputs` from `x0` under the given
/// disturbance profile and records the full trajectory.
pub fn collect_dataset(
    params: &PendulumParams,
    inputs: &[f64],
    x0: Vector2<f64>,
    disturbance: &DisturbanceProfile,
) -> Result<Dataset, PlantError> {
    if inputs.is_empty() {
        return Err(PlantError::EmptyInputs);
    }
    let s = inputs.len();
    let mut x = Vec::with_capacity(s + 1);
    let mut u = Vec::with_capacity(s + 1);
    let mut y = Vec::with_capacity(s + 1);
    let mut d = Vec::with_capacity(s + 1);

    let mut state = x0;
    for (k, &uk) in inputs.iter().enumerate() {
        let dk = disturbance.value_at(k);
        let (next, yk) = pendulum_step(params, &state, uk, dk);
        x.push(DVector::from_column_slice(state.as_slice()));
        u.push(DVector::from_vec(vec![uk]));
        y.push(DVector::from_vec(vec![yk]));
        d.push(DVector::from_vec(vec![dk]));
        state = next;
    }
    // Final sample: output of the terminal state, input held.
    x.push(DVector::from_column_slice(state.as_slice()));
    u.push(DVector::from_vec(vec![inputs[s - 1]]));
    y.push(DVector::from_vec(vec![state[1]]));
    d.push(DVector::from_vec(vec![disturbance.value_at(s)]));

    Ok(Dataset { x, u, y, d })
}
