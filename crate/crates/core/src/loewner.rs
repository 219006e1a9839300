//! Chordal Loewner chains built from exact slit maps, the zipper trace, the
//! whole-plane flow transplanted to the upper half-plane, and the composed
//! forward/backward process.
//!
//! With the driving value `ξ` held fixed over a step of length `dt`, the
//! chordal equations `∂g = ±2/(g − ξ)` integrate in closed form:
//!
//! ```text
//! forward   w ↦ ξ + sqrt((w − ξ)² + 4dt)
//! backward  w ↦ ξ + sqrt((w − ξ)² − 4dt)
//! ```
//!
//! where `sqrt` is the branch [`slit_sqrt`]. A [`LoewnerEvolution`] is the
//! ordered chain of these maps, one per grid step, with step `k` holding
//! `ξ_k`.

use std::io::Write;
use std::sync::Arc;

use num::complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::{DrivingError, DrivingPath, TimeGrid};

/// Points whose distance-type discriminant falls below this are swallowed.
pub const SWALLOW_EPS: f64 = 1e-12;
/// Slack on `Im w ≥ 0` before an inverse step reports a branch violation.
pub const BRANCH_EPS: f64 = 1e-9;
/// Distance from a pole of `tan` at which radial runs abort.
pub const TAN_POLE_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoewnerError {
    #[error("point swallowed by the hull at step {step}")]
    Swallowed { step: usize },
    #[error("branch violation at step {step}: intermediate point {re}{im:+}i left the half-plane")]
    BranchViolation { step: usize, re: f64, im: f64 },
    #[error("trace tip unresolved at index {index}")]
    TipUnresolved { index: usize },
    #[error("driving value at index {index} is within {TAN_POLE_EPS} of a pole of tan")]
    TanPole { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Driving(#[from] DrivingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// `sqrt(u² + c)` on the branch with non-negative imaginary part that is
/// asymptotic to `u` at infinity, for `Im u ≥ 0`.
///
/// Writing `u² + c = p + iq` and `r = |p + iq|`:
///
/// ```text
/// p ≥ 0:  a = sqrt((r + p)/2),  b = |q| / (2a)
/// p < 0:  b = sqrt((r − p)/2),  a = |q| / (2b)
/// result = sgn(Re u)·a + i·b      (sgn(0) = +1)
/// ```
///
/// For `Im u > 0` the sign of `q = 2 Re u Im u` is that of `Re u`, so the
/// square of the result is exactly `p + iq`. On the real axis the result is
/// `sgn(u)·sqrt(u² + c)` when that is real and `i·sqrt(−u² − c)` otherwise.
pub fn slit_sqrt(u: Complex64, c: f64) -> Complex64 {
    let p = (u.re - u.im) * (u.re + u.im) + c;
    let q = 2.0 * u.re * u.im;
    let r = p.hypot(q);
    let (a, b) = if p >= 0.0 {
        let a = (0.5 * (r + p)).sqrt();
        (a, if a > 0.0 { q.abs() / (2.0 * a) } else { 0.0 })
    } else {
        let b = (0.5 * (r - p)).sqrt();
        (q.abs() / (2.0 * b), b)
    };
    let sign = if u.re < 0.0 { -1.0 } else { 1.0 };
    Complex64::new(sign * a, b)
}

/// One exact slit map with the driving value held over `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryMap {
    pub xi: f64,
    pub dt: f64,
    pub direction: Direction,
}

impl ElementaryMap {
    fn shift(&self) -> f64 {
        4.0 * self.dt * self.direction.sign()
    }

    pub fn apply(&self, w: Complex64) -> Complex64 {
        self.xi + slit_sqrt(w - self.xi, self.shift())
    }

    /// `(w − ξ) / sqrt((w − ξ)² ± 4dt)`.
    pub fn derivative(&self, w: Complex64) -> Complex64 {
        let u = w - self.xi;
        u / slit_sqrt(u, self.shift())
    }

    pub fn invert(&self, w: Complex64) -> Complex64 {
        self.xi + slit_sqrt(w - self.xi, -self.shift())
    }
}

/// Ordered chain of elementary maps realizing `g_t` on the grid of its
/// driving path.
#[derive(Debug, Clone)]
pub struct LoewnerEvolution {
    steps: Vec<ElementaryMap>,
    direction: Direction,
    source: Arc<DrivingPath>,
}

/// JSON metadata `{kappa, direction, T, n_steps, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionMetadata {
    pub kappa: f64,
    pub direction: Direction,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub seed: u64,
}

/// Image of a point together with the chain-rule derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapValue {
    pub image: Complex64,
    pub derivative: Complex64,
}

fn build(path: &DrivingPath, direction: Direction) -> LoewnerEvolution {
    let grid = path.grid();
    let steps = if grid.is_degenerate() {
        Vec::new()
    } else {
        let dt = grid.dt();
        path.values()[..grid.n_steps()]
            .iter()
            .map(|&xi| ElementaryMap { xi, dt, direction })
            .collect()
    };
    LoewnerEvolution {
        steps,
        direction,
        source: Arc::new(path.clone()),
    }
}

/// Forward chain `∂g = 2/(g − ξ)` with `ξ` held at each step's left endpoint.
pub fn evolve_forward(path: &DrivingPath) -> LoewnerEvolution {
    build(path, Direction::Forward)
}

/// Backward chain `∂g = −2/(g − ξ)`, mapping `H` into `H` minus a slit.
pub fn evolve_backward(path: &DrivingPath) -> LoewnerEvolution {
    build(path, Direction::Backward)
}

impl LoewnerEvolution {
    pub fn steps(&self) -> &[ElementaryMap] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn kappa(&self) -> f64 {
        self.source.kappa()
    }

    pub fn path(&self) -> &DrivingPath {
        &self.source
    }

    pub fn grid(&self) -> &TimeGrid {
        self.source.grid()
    }

    /// Time reached after `step` elementary maps.
    pub fn time_at(&self, step: usize) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.grid().time(step)
        }
    }

    /// The driving value in force at grid point `step`.
    pub fn xi_at(&self, step: usize) -> f64 {
        self.source.value(step)
    }

    /// The sub-chain made of steps `from..to`.
    pub fn segment(&self, from: usize, to: usize) -> Result<LoewnerEvolution, LoewnerError> {
        if from > to || to > self.steps.len() {
            return Err(LoewnerError::InvalidArgument(format!(
                "segment {from}..{to} outside 0..{}",
                self.steps.len()
            )));
        }
        Ok(LoewnerEvolution {
            steps: self.steps[from..to].to_vec(),
            direction: self.direction,
            source: Arc::clone(&self.source),
        })
    }

    pub fn metadata(&self) -> EvolutionMetadata {
        EvolutionMetadata {
            kappa: self.kappa(),
            direction: self.direction,
            horizon: self.grid().horizon(),
            n_steps: self.grid().n_steps(),
            seed: self.source.seed(),
        }
    }

    fn check_upto(&self, up_to: usize) -> Result<(), LoewnerError> {
        if up_to > self.steps.len() {
            return Err(LoewnerError::InvalidArgument(format!(
                "step index {up_to} exceeds chain length {}",
                self.steps.len()
            )));
        }
        Ok(())
    }

    /// Applies steps `0..up_to` to `z`, tracking the derivative. Forward
    /// chains report swallowing: an interior point whose image lands on the
    /// real line, a point hitting the singularity, or a boundary point
    /// crossing the driving value between steps.
    pub fn evaluate(&self, z: Complex64, up_to: usize) -> Result<MapValue, LoewnerError> {
        self.check_upto(up_to)?;
        if !(z.re.is_finite() && z.im.is_finite()) || z.im < 0.0 {
            return Err(LoewnerError::InvalidArgument(format!(
                "point {z} is not in the closed upper half-plane"
            )));
        }
        let mut w = z;
        let mut derivative = Complex64::new(1.0, 0.0);
        let mut side: Option<bool> = None;
        for (step, map) in self.steps[..up_to].iter().enumerate() {
            let u = w - map.xi;
            let root = slit_sqrt(u, map.shift());
            if self.direction == Direction::Forward {
                if u.norm_sqr() <= SWALLOW_EPS {
                    return Err(LoewnerError::Swallowed { step });
                }
                if w.im > 0.0 {
                    if root.im <= SWALLOW_EPS {
                        return Err(LoewnerError::Swallowed { step });
                    }
                } else {
                    let positive = u.re > 0.0;
                    if side.is_some_and(|s| s != positive) {
                        return Err(LoewnerError::Swallowed { step });
                    }
                    side = Some(positive);
                }
            }
            derivative *= u / root;
            w = map.xi + root;
        }
        Ok(MapValue { image: w, derivative })
    }

    /// Inverts steps `0..up_to`, last step first.
    pub fn invert_upto(&self, w: Complex64, up_to: usize) -> Result<Complex64, LoewnerError> {
        self.check_upto(up_to)?;
        let mut z = w;
        for step in (0..up_to).rev() {
            if !(z.re.is_finite() && z.im.is_finite()) || z.im < -BRANCH_EPS * (1.0 + z.norm()) {
                return Err(LoewnerError::BranchViolation {
                    step,
                    re: z.re,
                    im: z.im,
                });
            }
            let z_in = Complex64::new(z.re, z.im.max(0.0));
            z = self.steps[step].invert(z_in);
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(LoewnerError::BranchViolation {
                step: 0,
                re: z.re,
                im: z.im,
            });
        }
        Ok(z)
    }

    /// Writes `t,re_gamma,im_gamma` rows for the given step indices; tips
    /// that cannot be resolved are written as `NaN`.
    pub fn write_trace_csv<W: Write>(&self, indices: &[usize], writer: W) -> Result<(), LoewnerError> {
        let tips = trace(self, indices)?;
        let mut csv = csv::Writer::from_writer(writer);
        let ser = |e: csv::Error| LoewnerError::InvalidArgument(e.to_string());
        csv.write_record(["t", "re_gamma", "im_gamma"]).map_err(ser)?;
        for (&k, tip) in indices.iter().zip(tips) {
            let (re, im) = tip.map(|g| (g.re, g.im)).unwrap_or((f64::NAN, f64::NAN));
            csv.write_record([self.time_at(k).to_string(), re.to_string(), im.to_string()])
                .map_err(ser)?;
        }
        csv.flush().map_err(|e| LoewnerError::InvalidArgument(e.to_string()))
    }
}

pub fn apply_map(evo: &LoewnerEvolution, z: Complex64, up_to: usize) -> Result<Complex64, LoewnerError> {
    evo.evaluate(z, up_to).map(|v| v.image)
}

pub fn apply_derivative(evo: &LoewnerEvolution, z: Complex64, up_to: usize) -> Result<Complex64, LoewnerError> {
    evo.evaluate(z, up_to).map(|v| v.derivative)
}

/// Inverse of the whole chain.
pub fn invert_map(evo: &LoewnerEvolution, w: Complex64) -> Result<Complex64, LoewnerError> {
    evo.invert_upto(w, evo.len())
}

/// Tip samples `γ_k` of a forward chain, by unzipping the driving value held
/// over the last applied step: `γ_k = g_k⁻¹(ξ_{k−1})`, `γ_0 = ξ_0`.
pub fn trace(evo: &LoewnerEvolution, indices: &[usize]) -> Result<Vec<Result<Complex64, LoewnerError>>, LoewnerError> {
    if evo.direction() != Direction::Forward {
        return Err(LoewnerError::InvalidArgument(
            "trace requires a forward evolution".into(),
        ));
    }
    Ok(indices
        .iter()
        .map(|&k| {
            if k > evo.len() {
                return Err(LoewnerError::InvalidArgument(format!(
                    "trace index {k} exceeds chain length {}",
                    evo.len()
                )));
            }
            if k == 0 {
                return Ok(Complex64::new(evo.xi_at(0), 0.0));
            }
            let tip_image = Complex64::new(evo.steps()[k - 1].xi, 0.0);
            evo.invert_upto(tip_image, k)
                .map_err(|_| LoewnerError::TipUnresolved { index: k })
        })
        .collect())
}

/// Step control for [`evolve_wholeplane`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialControl {
    /// Halt when `|g − η|` drops below this.
    pub eps_sing: f64,
    /// Largest RK4 sub-step.
    pub max_substep: f64,
    /// Sub-steps are sized so that `|Δg| ≤ rel_increment·|g − η|`.
    pub rel_increment: f64,
    /// Budget of sub-steps per grid step before halting.
    pub max_substeps_per_step: usize,
}

impl Default for RadialControl {
    fn default() -> Self {
        Self {
            eps_sing: 1e-4,
            max_substep: 1e-2,
            rel_increment: 1e-3,
            max_substeps_per_step: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RadialStatus {
    Completed,
    /// `|g − η|` fell below `eps_sing` during grid step `step`.
    SingularityHalt {
        step: usize,
    },
    /// The integrator produced a state below the real axis during `step`.
    LeftHalfPlane {
        step: usize,
    },
    /// The sub-step budget ran out during `step`.
    StepBudget {
        step: usize,
    },
}

/// States of the whole-plane flow at each retained grid time.
#[derive(Debug, Clone)]
pub struct RadialEvolution {
    pub states: Vec<Complex64>,
    pub status: RadialStatus,
    pub substeps: usize,
    pub control: RadialControl,
    path: Arc<DrivingPath>,
}

impl RadialEvolution {
    pub fn path(&self) -> &DrivingPath {
        &self.path
    }

    pub fn completed(&self) -> bool {
        self.status == RadialStatus::Completed
    }
}

/// Right-hand side `−(1 + g²)/2 · (1 + ηg)/(g − η)`.
pub fn wholeplane_velocity(g: Complex64, eta: f64) -> Complex64 {
    -(1.0 + g * g) * 0.5 * (1.0 + eta * g) / (g - eta)
}

fn rk4(g: Complex64, eta: f64, h: f64) -> Complex64 {
    let k1 = wholeplane_velocity(g, eta);
    let k2 = wholeplane_velocity(g + k1 * (0.5 * h), eta);
    let k3 = wholeplane_velocity(g + k2 * (0.5 * h), eta);
    let k4 = wholeplane_velocity(g + k3 * h, eta);
    g + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
}

/// Integrates the whole-plane flow on the half-plane with `η_t = tan ξ_t`
/// held over each grid step, using adaptively sub-divided RK4.
pub fn evolve_wholeplane(
    path: &DrivingPath,
    z: Complex64,
    control: RadialControl,
) -> Result<RadialEvolution, LoewnerError> {
    if !(z.re.is_finite() && z.im.is_finite()) || z.im <= 0.0 {
        return Err(LoewnerError::InvalidArgument(format!(
            "initial point {z} must lie in H"
        )));
    }
    let grid = path.grid();
    let n = if grid.is_degenerate() { 0 } else { grid.n_steps() };
    let half_pi = std::f64::consts::FRAC_PI_2;
    for (index, &xi) in path.values()[..n].iter().enumerate() {
        if (xi.rem_euclid(std::f64::consts::PI) - half_pi).abs() < TAN_POLE_EPS {
            return Err(LoewnerError::TanPole { index });
        }
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity(n + 1);
    states.push(z);
    let mut g = z;
    let mut substeps = 0usize;
    let mut status = RadialStatus::Completed;
    'grid: for step in 0..n {
        let eta = path.value(step).tan();
        let mut remaining = dt;
        let mut used = 0usize;
        while remaining > 0.0 {
            let distance = (g - eta).norm();
            if distance < control.eps_sing {
                status = RadialStatus::SingularityHalt { step };
                break 'grid;
            }
            if used >= control.max_substeps_per_step {
                status = RadialStatus::StepBudget { step };
                break 'grid;
            }
            let speed = wholeplane_velocity(g, eta).norm();
            let mut h = remaining.min(control.max_substep);
            if speed > 0.0 {
                h = h.min(control.rel_increment * distance / speed);
            }
            // avoid a sliver sub-step at the end of the grid step
            if remaining - h < 1e-3 * h {
                h = remaining;
            }
            g = rk4(g, eta, h);
            remaining -= h;
            used += 1;
            if !(g.re.is_finite() && g.im.is_finite()) || g.im < 0.0 {
                status = RadialStatus::LeftHalfPlane { step };
                break 'grid;
            }
        }
        substeps += used;
        states.push(g);
    }
    Ok(RadialEvolution {
        states,
        status,
        substeps,
        control,
        path: Arc::new(path.clone()),
    })
}

/// The composed process `h_t ∘ g_t`: `g` forward with driving `ξ_{t,2}`,
/// `h` backward with driving `ξ_{t,1}`, both on the same grid.
#[derive(Debug, Clone)]
pub struct ComposedEvolution {
    pub backward: LoewnerEvolution,
    pub forward: LoewnerEvolution,
}

impl ComposedEvolution {
    pub fn new(backward_driver: &DrivingPath, forward_driver: &DrivingPath) -> Result<Self, LoewnerError> {
        if backward_driver.grid() != forward_driver.grid() {
            return Err(LoewnerError::InvalidArgument(
                "composed drivings need identical grids".into(),
            ));
        }
        Ok(Self {
            backward: evolve_backward(backward_driver),
            forward: evolve_forward(forward_driver),
        })
    }

    /// Uses one driving for both legs.
    pub fn shared(driver: &DrivingPath) -> Self {
        Self {
            backward: evolve_backward(driver),
            forward: evolve_forward(driver),
        }
    }

    /// `h_k(g_k(z))` after `up_to` synchronous steps.
    pub fn apply(&self, z: Complex64, up_to: usize) -> Result<Complex64, LoewnerError> {
        let inner = apply_map(&self.forward, z, up_to)?;
        let inner = Complex64::new(inner.re, inner.im.max(0.0));
        let outer = apply_map(&self.backward, inner, up_to)?;
        if !(outer.re.is_finite() && outer.im.is_finite()) || outer.im < -BRANCH_EPS {
            return Err(LoewnerError::BranchViolation {
                step: up_to,
                re: outer.re,
                im: outer.im,
            });
        }
        Ok(outer)
    }
}

/// `h_T(g_T(z))` where `g` is driven forward by `path2` and `h` backward by `path1`.
pub fn compose_forward_backward(
    path1: &DrivingPath,
    path2: &DrivingPath,
    z: Complex64,
) -> Result<Complex64, LoewnerError> {
    let composed = ComposedEvolution::new(path1, path2)?;
    composed.apply(z, composed.forward.len())
}
