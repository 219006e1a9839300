//! Discretized Brownian driving functions `ξ_t = √κ B_t`.
//!
//! Paths live on an equally spaced [`TimeGrid`] and are held piecewise
//! constant within each step by the Loewner solvers.
//!
//! # Generator
//!
//! Raw standard normals come from a counter-based stream: the key is
//! `ChaCha8Rng::seed_from_u64(seed)` and increment `k` consumes exactly the
//! two 64-bit words at word position `4k` (ChaCha words are 32 bits). The
//! two words are mapped to uniforms on `(0, 1]` with 53-bit resolution and
//! combined by the Box–Muller cosine branch. Every increment is therefore a
//! pure function of `(seed, k)`, see [`standard_normal`].

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrivingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("serialization failed: {0}")]
    Serialization(String),
}

/// Equally spaced times `0, dt, …, T` with `dt = T / n_steps`.
///
/// A zero horizon is accepted and describes the degenerate grid on which
/// every flow is the identity; sampling refuses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self, DrivingError> {
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(DrivingError::InvalidArgument(format!(
                "horizon must be finite and non-negative, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(DrivingError::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Time of grid point `k`, computed as `k·T/n` so no rounding accumulates.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    pub fn is_degenerate(&self) -> bool {
        self.horizon == 0.0
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if self.is_degenerate() {
            return (t == 0.0).then_some(0);
        }
        let k = (t / self.horizon * self.n_steps as f64).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let tol = 1e-9 * self.horizon.max(1.0);
        ((self.time(k) - t).abs() <= tol).then_some(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Sampled,
    Reversed,
    Explicit,
}

/// Driving values `ξ_0, …, ξ_n` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    grid: TimeGrid,
    kappa: f64,
    values: Vec<f64>,
    seed: u64,
    origin: Origin,
}

/// JSON form of a path: `{kappa, T, n_steps, seed, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingRecord {
    pub kappa: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl DrivingPath {
    /// A caller-supplied path. `values` must have `n_steps + 1` entries.
    pub fn explicit(grid: TimeGrid, kappa: f64, values: Vec<f64>) -> Result<Self, DrivingError> {
        check_kappa(kappa)?;
        if values.len() != grid.n_steps() + 1 {
            return Err(DrivingError::InvalidArgument(format!(
                "expected {} driving values, got {}",
                grid.n_steps() + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DrivingError::InvalidArgument("driving values must be finite".into()));
        }
        Ok(Self {
            grid,
            kappa,
            values,
            seed: 0,
            origin: Origin::Explicit,
        })
    }

    /// The path `ξ ≡ value`.
    pub fn constant(grid: TimeGrid, kappa: f64, value: f64) -> Result<Self, DrivingError> {
        Self::explicit(grid, kappa, vec![value; grid.n_steps() + 1])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn to_record(&self) -> DrivingRecord {
        DrivingRecord {
            kappa: self.kappa,
            horizon: self.grid.horizon(),
            n_steps: self.grid.n_steps(),
            seed: self.seed,
            values: self.values.clone(),
        }
    }

    /// Rebuilds a path from its JSON record; the origin becomes `explicit`.
    pub fn from_record(record: DrivingRecord) -> Result<Self, DrivingError> {
        let grid = TimeGrid::new(record.horizon, record.n_steps)?;
        let mut path = Self::explicit(grid, record.kappa, record.values)?;
        path.seed = record.seed;
        Ok(path)
    }

    pub fn to_json(&self) -> Result<String, DrivingError> {
        serde_json::to_string_pretty(&self.to_record()).map_err(|e| DrivingError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, DrivingError> {
        let record: DrivingRecord =
            serde_json::from_str(text).map_err(|e| DrivingError::Serialization(e.to_string()))?;
        Self::from_record(record)
    }

    /// Writes `t,xi` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DrivingError> {
        let mut csv = csv::Writer::from_writer(writer);
        let ser = |e: csv::Error| DrivingError::Serialization(e.to_string());
        csv.write_record(["t", "xi"]).map_err(ser)?;
        for (k, xi) in self.values.iter().enumerate() {
            csv.write_record([self.grid.time(k).to_string(), xi.to_string()])
                .map_err(ser)?;
        }
        csv.flush().map_err(|e| DrivingError::Serialization(e.to_string()))
    }
}

fn check_kappa(kappa: f64) -> Result<(), DrivingError> {
    if kappa.is_finite() && kappa > 0.0 {
        Ok(())
    } else {
        Err(DrivingError::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )))
    }
}

/// Counter-keyed standard normal stream for one seed.
#[derive(Debug, Clone)]
struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn seek(&mut self, k: u64) {
        self.rng.set_word_pos(4 * u128::from(k));
    }

    fn next_normal(&mut self) -> f64 {
        let u1 = unit_open_closed(self.rng.next_u64());
        let u2 = unit_open_closed(self.rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The raw standard normal behind increment `k` of any path with this seed.
pub fn standard_normal(seed: u64, k: u64) -> f64 {
    let mut stream = NormalStream::new(seed);
    stream.seek(k);
    stream.next_normal()
}

/// Samples `ξ_0 = 0`, `ξ_{k+1} = ξ_k + √(κ·dt)·Z_k` with `Z_k = standard_normal(seed, k)`.
pub fn sample_brownian(grid: TimeGrid, kappa: f64, seed: u64) -> Result<DrivingPath, DrivingError> {
    check_kappa(kappa)?;
    if grid.is_degenerate() {
        return Err(DrivingError::InvalidArgument("cannot sample on an empty grid".into()));
    }
    let scale = (kappa * grid.dt()).sqrt();
    let mut stream = NormalStream::new(seed);
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut xi = 0.0;
    values.push(xi);
    for _ in 0..grid.n_steps() {
        xi += scale * stream.next_normal();
        values.push(xi);
    }
    Ok(DrivingPath {
        grid,
        kappa,
        values,
        seed,
        origin: Origin::Sampled,
    })
}

/// `ξ̃_k = ξ_{n−k}` on the same grid.
pub fn reverse_driving(path: &DrivingPath) -> DrivingPath {
    let mut values = path.values.clone();
    values.reverse();
    DrivingPath {
        values,
        origin: Origin::Reversed,
        ..path.clone()
    }
}

/// `Σ_k (ξ_{k+1} − ξ_k)²`, which estimates `κ·T` for sampled paths.
pub fn quadratic_variation(path: &DrivingPath) -> f64 {
    path.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}
