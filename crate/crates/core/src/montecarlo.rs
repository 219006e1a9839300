//! Ensemble experiments on the backward flow.
//!
//! Every sample `i` uses its own driving path seeded by
//! [`sample_seed`]`(master_seed, i)`. Per-sample results are collected in
//! index order and reduced sequentially with compensated summation, so the
//! reports do not depend on the number of worker threads.

use std::io::Write;

use num::complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::{reverse_driving, sample_brownian, DrivingError, DrivingPath, TimeGrid};
use crate::loewner::{apply_map, evolve_backward, evolve_forward, ComposedEvolution, LoewnerError};
use crate::numeric::{splitmix64, CompensatedSum};
use crate::observables::{one_point_along, ObservableError, ObservableForm, ObservableSpec};

/// `|z|` beyond which a checkpoint counts as a departure.
pub const Z_THRESHOLD: f64 = 3.0;
/// Inverse-consistency error constant: pass when `max ≤ C·√dt`.
pub const INVERSE_CONSTANT: f64 = 10.0;
pub const DEFAULT_EPS_STOP: f64 = 1e-3;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("output: {0}")]
    Output(String),
}

/// Seed of sample `index`.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Runs `f` on a pool with `workers` threads (`None`: rayon's default).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, McError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| McError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub kappa: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub observable: ObservableSpec,
    /// Grid times at which the ensemble mean is tested.
    pub checkpoints: Vec<f64>,
    pub eps_stop: f64,
}

impl McConfig {
    /// One-point power observable at `y` with five evenly spaced
    /// checkpoints `T/5, 2T/5, …, T`.
    pub fn one_point(
        kappa: f64,
        y: f64,
        exponents: (f64, f64),
        horizon: f64,
        n_steps: usize,
        n_samples: usize,
        master_seed: u64,
    ) -> Result<Self, McError> {
        let observable = ObservableSpec::one_point(y, exponents.0, exponents.1)?;
        let grid = TimeGrid::new(horizon, n_steps)?;
        Ok(Self {
            kappa,
            horizon,
            n_steps,
            n_samples,
            master_seed,
            observable,
            checkpoints: default_checkpoints(&grid, 5),
            eps_stop: DEFAULT_EPS_STOP,
        })
    }

    fn grid(&self) -> Result<TimeGrid, McError> {
        Ok(TimeGrid::new(self.horizon, self.n_steps)?)
    }

    fn checkpoint_steps(&self, grid: &TimeGrid) -> Result<Vec<usize>, McError> {
        let steps: Vec<usize> = self
            .checkpoints
            .iter()
            .map(|&t| {
                grid.index_of(t)
                    .ok_or_else(|| McError::ConfigInvalid(format!("checkpoint {t} is not a grid time")))
            })
            .collect::<Result<_, _>>()?;
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McError::ConfigInvalid("checkpoints must be strictly increasing".into()));
        }
        Ok(steps)
    }

    pub fn validate(&self) -> Result<(), McError> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(McError::ConfigInvalid(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(McError::ConfigInvalid("horizon must be positive".into()));
        }
        if self.n_samples < MIN_SAMPLES {
            return Err(McError::ConfigInvalid(format!(
                "n_samples must be at least {MIN_SAMPLES}"
            )));
        }
        if self.eps_stop.is_nan() || self.eps_stop < 0.0 {
            return Err(McError::ConfigInvalid("eps_stop must be non-negative".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(McError::ConfigInvalid("at least one checkpoint is required".into()));
        }
        if !matches!(self.observable.form(), ObservableForm::OnePointPower { .. }) {
            return Err(McError::ConfigInvalid(
                "only one-point power observables can be simulated".into(),
            ));
        }
        self.checkpoint_steps(&self.grid()?)?;
        Ok(())
    }
}

/// `T/k, 2T/k, …, T`, snapped to grid times.
pub fn default_checkpoints(grid: &TimeGrid, count: usize) -> Vec<f64> {
    let n = grid.n_steps();
    let count = count.clamp(1, n);
    let mut steps: Vec<usize> = (1..=count).map(|j| (j * n).div_ceil(count)).collect();
    steps.dedup();
    steps.into_iter().map(|k| grid.time(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub n_alive: usize,
    pub n_stopped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub kappa: f64,
    pub initial_value: f64,
    pub n_samples: usize,
    pub records: Vec<CheckpointRecord>,
    /// All checkpoints within [`Z_THRESHOLD`].
    pub verdict: bool,
}

impl McReport {
    pub fn max_abs_z(&self) -> f64 {
        self.records.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `t,mean,stderr,z,n_alive,n_stopped`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), McError> {
        let mut csv = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| McError::Output(e.to_string());
        csv.write_record(["t", "mean", "stderr", "z", "n_alive", "n_stopped"])
            .map_err(io)?;
        for r in &self.records {
            csv.write_record([
                r.t.to_string(),
                r.mean.to_string(),
                r.stderr.to_string(),
                r.z.to_string(),
                r.n_alive.to_string(),
                r.n_stopped.to_string(),
            ])
            .map_err(io)?;
        }
        csv.flush().map_err(|e| McError::Output(e.to_string()))
    }
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mut sum = CompensatedSum::default();
    values.clone().for_each(|v| sum.add(v));
    let mean = sum.total() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut sq = CompensatedSum::default();
    values.for_each(|v| sq.add((v - mean) * (v - mean)));
    let variance = sq.total() / (n - 1) as f64;
    (mean, (variance / n as f64).sqrt())
}

fn z_score(mean: f64, target: f64, stderr: f64) -> f64 {
    let diff = mean - target;
    if stderr > 0.0 {
        diff / stderr
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Tests `E[M_t] = M_0` for a one-point observable under the backward flow,
/// with optional stopping near the driving value.
pub fn run_martingale_test(config: &McConfig) -> Result<McReport, McError> {
    config.validate()?;
    let grid = config.grid()?;
    let steps = config.checkpoint_steps(&grid)?;
    let ObservableForm::OnePointPower { a, b } = config.observable.form() else {
        unreachable!("validated above");
    };
    let y = config.observable.points()[0].y;
    let samples: Vec<Vec<(f64, bool)>> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, bool)>, McError> {
            let path = sample_brownian(grid, config.kappa, sample_seed(config.master_seed, i))?;
            let evo = evolve_backward(&path);
            let values = one_point_along(&evo, y, a, b, &steps, config.eps_stop)?;
            Ok(values.into_iter().map(|v| (v.value, v.stopped_at.is_some())).collect())
        })
        .collect::<Result<_, _>>()?;

    let initial_value = crate::observables::real_power(y, b)?;
    let n = config.n_samples;
    let records: Vec<CheckpointRecord> = steps
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (mean, stderr) = mean_and_stderr(samples.iter().map(|s| s[j].0), n);
            let n_stopped = samples.iter().filter(|s| s[j].1).count();
            CheckpointRecord {
                t: grid.time(k),
                mean,
                stderr,
                z: z_score(mean, initial_value, stderr),
                n_alive: n - n_stopped,
                n_stopped,
            }
        })
        .collect();
    let verdict = records.iter().all(|r| r.z.abs() <= Z_THRESHOLD);
    Ok(McReport {
        kappa: config.kappa,
        initial_value,
        n_samples: n,
        records,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub kappa: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    /// Test points `[re, im]`, each with `im ≥ 1`.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseReport {
    pub kappa: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub per_sample: Vec<f64>,
}

impl InverseReport {
    /// CSV with columns `sample,max_error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), McError> {
        let mut csv = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| McError::Output(e.to_string());
        csv.write_record(["sample", "max_error"]).map_err(io)?;
        for (i, e) in self.per_sample.iter().enumerate() {
            csv.write_record([i.to_string(), e.to_string()]).map_err(io)?;
        }
        csv.flush().map_err(|e| McError::Output(e.to_string()))
    }
}

/// `max_z |g_T(φ(z)) − z|` where `g_T` is the forward chain of `path` and
/// `φ` the backward chain of the reversed path.
pub fn inverse_error_for_path(path: &DrivingPath, points: &[Complex64]) -> Result<f64, McError> {
    let forward = evolve_forward(path);
    let backward = evolve_backward(&reverse_driving(path));
    let mut worst: f64 = 0.0;
    for &z in points {
        let w = apply_map(&backward, z, backward.len())?;
        let back = apply_map(&forward, w, forward.len())?;
        worst = worst.max((back - z).norm());
    }
    Ok(worst)
}

pub fn run_inverse_consistency(config: &InverseConfig) -> Result<InverseReport, McError> {
    if config.points.iter().any(|p| p[1].is_nan() || p[1] < 1.0) {
        return Err(McError::ConfigInvalid("test points need Im z >= 1".into()));
    }
    if config.n_samples == 0 {
        return Err(McError::ConfigInvalid("n_samples must be positive".into()));
    }
    let grid = TimeGrid::new(config.horizon, config.n_steps)?;
    let points: Vec<Complex64> = config.points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    let per_sample: Vec<f64> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<f64, McError> {
            if grid.is_degenerate() {
                return Ok(0.0);
            }
            let path = sample_brownian(grid, config.kappa, sample_seed(config.master_seed, i))?;
            inverse_error_for_path(&path, &points)
        })
        .collect::<Result<_, _>>()?;
    let max_error = per_sample.iter().copied().fold(0.0, f64::max);
    let mut sum = CompensatedSum::default();
    per_sample.iter().for_each(|&e| sum.add(e));
    let mean_error = sum.total() / per_sample.len() as f64;
    let tolerance = INVERSE_CONSTANT * grid.dt().sqrt();
    Ok(InverseReport {
        kappa: config.kappa,
        horizon: config.horizon,
        n_steps: config.n_steps,
        n_samples: config.n_samples,
        max_error,
        mean_error,
        tolerance,
        pass: max_error <= tolerance,
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedConfig {
    pub kappa: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub points: Vec<[f64; 2]>,
    /// Drive both legs with the same path.
    pub shared_driving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedPointStats {
    pub re_z: f64,
    pub im_z: f64,
    pub survival_fraction: f64,
    pub mean_re: f64,
    pub mean_im: f64,
    pub std_im: f64,
    pub containment_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedReport {
    pub kappa: f64,
    pub horizon: f64,
    pub n_samples: usize,
    pub shared_driving: bool,
    pub points: Vec<ComposedPointStats>,
    pub containment_violations: usize,
}

impl ComposedReport {
    /// CSV with one row per test point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), McError> {
        let mut csv = csv::Writer::from_writer(writer);
        for p in &self.points {
            csv.serialize(p).map_err(|e| McError::Output(e.to_string()))?;
        }
        csv.flush().map_err(|e| McError::Output(e.to_string()))
    }
}

enum ComposedOutcome {
    Survived(Complex64),
    Halted,
}

/// Simulates `h_T ∘ g_T` over an ensemble and records image statistics.
pub fn run_composed_stats(config: &ComposedConfig) -> Result<ComposedReport, McError> {
    if config.points.iter().any(|p| p[1].is_nan() || p[1] <= 0.0) {
        return Err(McError::ConfigInvalid(
            "points must lie in the open upper half-plane".into(),
        ));
    }
    if config.n_samples == 0 {
        return Err(McError::ConfigInvalid("n_samples must be positive".into()));
    }
    let grid = TimeGrid::new(config.horizon, config.n_steps)?;
    let points: Vec<Complex64> = config.points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    let outcomes: Vec<Vec<ComposedOutcome>> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<ComposedOutcome>, McError> {
            if grid.is_degenerate() {
                return Ok(points.iter().map(|&z| ComposedOutcome::Survived(z)).collect());
            }
            let backward_seed = sample_seed(config.master_seed, 2 * i);
            let first = sample_brownian(grid, config.kappa, backward_seed)?;
            let composed = if config.shared_driving {
                ComposedEvolution::shared(&first)
            } else {
                let second = sample_brownian(grid, config.kappa, sample_seed(config.master_seed, 2 * i + 1))?;
                ComposedEvolution::new(&first, &second)?
            };
            Ok(points
                .iter()
                .map(|&z| match composed.apply(z, composed.forward.len()) {
                    Ok(w) => ComposedOutcome::Survived(w),
                    Err(_) => ComposedOutcome::Halted,
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;

    let mut total_violations = 0;
    let stats = points
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let images: Vec<Complex64> = outcomes
                .iter()
                .filter_map(|o| match o[j] {
                    ComposedOutcome::Survived(w) => Some(w),
                    ComposedOutcome::Halted => None,
                })
                .collect();
            let violations = images.iter().filter(|w| w.im < 0.0).count();
            total_violations += violations;
            let n = images.len();
            let (mean_re, _) = mean_and_stderr(images.iter().map(|w| w.re), n.max(1));
            let (mean_im, se_im) = mean_and_stderr(images.iter().map(|w| w.im), n.max(1));
            ComposedPointStats {
                re_z: z.re,
                im_z: z.im,
                survival_fraction: n as f64 / config.n_samples as f64,
                mean_re,
                mean_im,
                std_im: se_im * (n as f64).sqrt(),
                containment_violations: violations,
            }
        })
        .collect();
    Ok(ComposedReport {
        kappa: config.kappa,
        horizon: config.horizon,
        n_samples: config.n_samples,
        shared_driving: config.shared_driving,
        points: stats,
        containment_violations: total_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| sample_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn default_checkpoints_are_grid_times() {
        let grid = TimeGrid::new(0.05, 500).unwrap();
        let cps = default_checkpoints(&grid, 5);
        assert_eq!(cps.len(), 5);
        assert_eq!(*cps.last().unwrap(), 0.05);
        assert!(cps.iter().all(|&t| grid.index_of(t).is_some()));
    }

    #[test]
    fn constant_observable_is_exact() {
        let config = McConfig::one_point(4.0, 1.0, (0.0, 0.0), 0.05, 50, 200, 3).unwrap();
        let report = run_martingale_test(&config).unwrap();
        for r in &report.records {
            assert_eq!(r.mean, 1.0);
            assert_eq!(r.z, 0.0);
            assert_eq!(r.n_alive + r.n_stopped, 200);
        }
        assert!(report.verdict);
    }

    #[test]
    fn config_validation() {
        let mut config = McConfig::one_point(4.0, 1.0, (-3.0, 3.0), 0.05, 50, 200, 3).unwrap();
        config.n_samples = 10;
        assert!(matches!(config.validate(), Err(McError::ConfigInvalid(_))));
        config.n_samples = 200;
        config.checkpoints = vec![0.0123];
        assert!(matches!(config.validate(), Err(McError::ConfigInvalid(_))));
        config.checkpoints = vec![0.05];
        assert!(config.validate().is_ok());
    }

    #[test]
    fn zero_driving_inverse_is_exact() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let path = DrivingPath::constant(grid, 4.0, 0.0).unwrap();
        let pts = [Complex64::new(0.0, 1.0), Complex64::new(2.0, 1.5)];
        assert!(inverse_error_for_path(&path, &pts).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_horizon_inverse_and_composed() {
        let inv = run_inverse_consistency(&InverseConfig {
            kappa: 4.0,
            horizon: 0.0,
            n_steps: 10,
            n_samples: 5,
            master_seed: 1,
            points: vec![[0.0, 1.0]],
        })
        .unwrap();
        assert_eq!(inv.max_error, 0.0);
        let comp = run_composed_stats(&ComposedConfig {
            kappa: 4.0,
            horizon: 0.0,
            n_steps: 10,
            n_samples: 5,
            master_seed: 1,
            points: vec![[0.5, 1.0]],
            shared_driving: false,
        })
        .unwrap();
        assert_eq!(comp.points[0].mean_re, 0.5);
        assert_eq!(comp.points[0].mean_im, 1.0);
        assert_eq!(comp.points[0].survival_fraction, 1.0);
    }
}
