//! Covariant boundary fields along Loewner flows, the drift generator of the
//! backward flow, and the one-point exponent oracle.
//!
//! Under the backward flow a boundary point `y` evolves with
//! `X_t = g_t(y) − ξ_t` obeying `dX = −2/X dt − dξ` and
//! `d log g′_t(y) = 2/X² dt`. For `M = (g′)^a X^b` Itô's formula gives the
//! drift `(2a − 2b + κ b(b − 1)/2) · M/X²`, so `M` is a local martingale
//! exactly when `a = b − κ b(b − 1)/4`.

use num::complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cft::KacLabel;
use crate::loewner::{Direction, LoewnerError, LoewnerEvolution};

/// Closest a boundary point may sit to the driving value in the generator.
pub const MIN_SEPARATION: f64 = 1e-6;
/// Relative finite-difference step for first derivatives.
pub const FIRST_DERIVATIVE_STEP: f64 = 1e-5;
/// Relative finite-difference step for the second derivative in `ξ`.
pub const SECOND_DERIVATIVE_STEP: f64 = 1e-4;
/// Tolerance used when auditing drift residuals of exponent pairs.
pub const AUDIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error("real power of non-positive base {base} with exponent {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("boundary derivative {re}{im:+}i is not a positive real number")]
    NonPositiveDerivative { re: f64, im: f64 },
    #[error("boundary point {y} is within {MIN_SEPARATION} of the driving value {xi}")]
    PointsTooClose { y: f64, xi: f64 },
    #[error("invalid observable: {0}")]
    InvalidSpec(String),
}

/// A boundary insertion `φ_h(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum ObservableForm {
    /// `(g′(y))^a (g(y) − ξ)^b` with `a` the insertion weight.
    OnePointPower { a: f64, b: f64 },
    /// Any caller-supplied function of `(ξ, y_1, …, y_n)`.
    GenericCallable,
}

/// Boundary insertions, the boundary-condition-changing operator at the
/// tip (always `(1,2)`), and the functional form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    points: Vec<BoundaryPoint>,
    bcc: KacLabel,
    form: ObservableForm,
}

fn validate_points(points: &[BoundaryPoint]) -> Result<(), ObservableError> {
    for (i, p) in points.iter().enumerate() {
        if !p.y.is_finite() || !p.weight.is_finite() {
            return Err(ObservableError::InvalidSpec("non-finite point or weight".into()));
        }
        if p.y == 0.0 {
            return Err(ObservableError::InvalidSpec("points must differ from xi_0 = 0".into()));
        }
        if points[..i].iter().any(|q| q.y == p.y) {
            return Err(ObservableError::InvalidSpec(format!("duplicate point {}", p.y)));
        }
    }
    Ok(())
}

impl ObservableSpec {
    pub fn generic(points: Vec<BoundaryPoint>) -> Result<Self, ObservableError> {
        validate_points(&points)?;
        Ok(Self {
            points,
            bcc: KacLabel::DEGENERATE_12,
            form: ObservableForm::GenericCallable,
        })
    }

    pub fn one_point(y: f64, a: f64, b: f64) -> Result<Self, ObservableError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(ObservableError::InvalidSpec("non-finite exponents".into()));
        }
        let points = vec![BoundaryPoint { y, weight: a }];
        validate_points(&points)?;
        Ok(Self {
            points,
            bcc: KacLabel::DEGENERATE_12,
            form: ObservableForm::OnePointPower { a, b },
        })
    }

    pub fn points(&self) -> &[BoundaryPoint] {
        &self.points
    }

    pub fn bcc(&self) -> KacLabel {
        self.bcc
    }

    pub fn form(&self) -> ObservableForm {
        self.form
    }
}

/// `(g′_t(z))^h` together with the image point `g_t(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariantValue {
    pub factor: Complex64,
    pub image: Complex64,
}

/// Covariant factor of a weight-`h` primary at `z` after `step` maps. On
/// the real axis the derivative must be a positive real number and the
/// power is taken in the reals; interior points use the principal branch.
pub fn covariant_field(
    evo: &LoewnerEvolution,
    z: Complex64,
    h: f64,
    step: usize,
) -> Result<CovariantValue, ObservableError> {
    let value = evo.evaluate(z, step)?;
    if h == 0.0 {
        return Ok(CovariantValue {
            factor: Complex64::new(1.0, 0.0),
            image: value.image,
        });
    }
    let d = value.derivative;
    let factor = if z.im == 0.0 {
        if d.im.abs() > 1e-12 * d.norm() || d.re <= 0.0 {
            return Err(ObservableError::NonPositiveDerivative { re: d.re, im: d.im });
        }
        Complex64::new(d.re.powf(h), 0.0)
    } else {
        d.powf(h)
    };
    Ok(CovariantValue {
        factor,
        image: value.image,
    })
}

/// `x^p` in the reals; negative bases only for integral exponents.
pub fn real_power(base: f64, exponent: f64) -> Result<f64, ObservableError> {
    let integral = exponent.fract() == 0.0 && (base != 0.0 || exponent > 0.0);
    if base > 0.0 || exponent == 0.0 || integral {
        Ok(base.powf(exponent))
    } else {
        Err(ObservableError::NegativeBase { base, exponent })
    }
}

/// Scalar function of `(ξ, y_1, …, y_n)`.
pub type Correlator<'a> = dyn Fn(f64, &[f64]) -> f64 + 'a;

struct Derivatives {
    value: f64,
    d2_xi: f64,
    d_y: Vec<f64>,
    separation: f64,
}

fn derivatives(spec: &ObservableSpec, f: &Correlator<'_>, xi: f64) -> Result<Derivatives, ObservableError> {
    let ys: Vec<f64> = spec.points.iter().map(|p| p.y).collect();
    let mut separation = f64::INFINITY;
    for &y in &ys {
        if (y - xi).abs() <= MIN_SEPARATION {
            return Err(ObservableError::PointsTooClose { y, xi });
        }
        separation = separation.min((y - xi).abs());
    }
    if ys.is_empty() {
        separation = 1.0;
    }
    let value = f(xi, &ys);
    let h2 = SECOND_DERIVATIVE_STEP * separation;
    let d2_xi = (f(xi + h2, &ys) - 2.0 * value + f(xi - h2, &ys)) / (h2 * h2);
    let h1 = FIRST_DERIVATIVE_STEP * separation;
    let mut shifted = ys.clone();
    let d_y = (0..ys.len())
        .map(|i| {
            shifted[i] = ys[i] + h1;
            let up = f(xi, &shifted);
            shifted[i] = ys[i] - h1;
            let down = f(xi, &shifted);
            shifted[i] = ys[i];
            (up - down) / (2.0 * h1)
        })
        .collect();
    Ok(Derivatives {
        value,
        d2_xi,
        d_y,
        separation,
    })
}

/// Drift generator of the backward flow in the flat frame:
/// `(κ/2)∂²_ξ F − 2 Σ_α [∂_{y_α}F/(y_α − ξ) − h_α F/(y_α − ξ)²]`.
pub fn bpz_generator(spec: &ObservableSpec, f: &Correlator<'_>, kappa: f64, xi: f64) -> Result<f64, ObservableError> {
    let d = derivatives(spec, f, xi)?;
    let mut sum = 0.0;
    for (p, dy) in spec.points.iter().zip(&d.d_y) {
        let x = p.y - xi;
        sum += dy / x - p.weight * d.value / (x * x);
    }
    Ok(0.5 * kappa * d.d2_xi - 2.0 * sum)
}

/// [`bpz_generator`] divided by the natural scale `|F| / min_α |y_α − ξ|²`.
pub fn bpz_relative_residual(
    spec: &ObservableSpec,
    f: &Correlator<'_>,
    kappa: f64,
    xi: f64,
) -> Result<f64, ObservableError> {
    let residual = bpz_generator(spec, f, kappa, xi)?;
    let d = derivatives(spec, f, xi)?;
    let scale = d.value.abs() / (d.separation * d.separation);
    Ok(if scale > 0.0 {
        residual.abs() / scale
    } else {
        residual.abs()
    })
}

/// Second-order null-vector operator acting on the insertion point `z`:
/// `b² ∂²_z G + Σ_α [h_α G/(z_α − z)² − ∂_{z_α}G/(z_α − z)]`.
pub fn null_vector_operator(
    spec: &ObservableSpec,
    g: &Correlator<'_>,
    b_squared: f64,
    z: f64,
) -> Result<f64, ObservableError> {
    let d = derivatives(spec, g, z)?;
    let mut sum = 0.0;
    for (p, dy) in spec.points.iter().zip(&d.d_y) {
        let x = p.y - z;
        sum += p.weight * d.value / (x * x) - dy / x;
    }
    Ok(b_squared * d.d2_xi + sum)
}

/// Drift coefficient `2a − 2b + κ b(b − 1)/2` of `(g′)^a (g − ξ)^b`.
pub fn drift_residual(kappa: f64, a: f64, b: f64) -> f64 {
    2.0 * a - 2.0 * b + 0.5 * kappa * b * (b - 1.0)
}

/// Roots of `(κ/4) b² − (1 + κ/4) b + h = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExponentRoots {
    /// Larger root first.
    Real { roots: [f64; 2] },
    /// Conjugate pair `re ± i·im`.
    Complex { re: f64, im: f64 },
}

impl ExponentRoots {
    pub fn real(&self) -> Option<[f64; 2]> {
        match *self {
            ExponentRoots::Real { roots } => Some(roots),
            ExponentRoots::Complex { .. } => None,
        }
    }
}

/// Exponents `b` making `(g′)^h (g − ξ)^b` drift-free under the backward flow.
pub fn one_point_exponents(kappa: f64, h: f64) -> ExponentRoots {
    let a = 0.25 * kappa;
    let b = -(1.0 + 0.25 * kappa);
    let c = h;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return ExponentRoots::Complex {
            re: -b / (2.0 * a),
            im: (-disc).sqrt() / (2.0 * a),
        };
    }
    // b < 0, so -b + sqrt(disc) never cancels
    let q = -0.5 * (b - disc.sqrt());
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { 0.0 };
    ExponentRoots::Real {
        roots: [r1.max(r2), r1.min(r2)],
    }
}

/// Value of a one-point observable, with the step at which it was frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePointValue {
    pub value: f64,
    pub stopped_at: Option<usize>,
}

/// `(g′_k(y))^a (g_k(y) − ξ_k)^b` at each requested step of a backward
/// chain, with the stopping rule: the first step `k` at which
/// `|X_k| ≤ eps_stop` or `X_k² ≤ 4dt` (the next map would lift the point
/// into the slit) freezes the value at `M_k`. `steps` must be sorted.
pub fn one_point_along(
    evo: &LoewnerEvolution,
    y: f64,
    a: f64,
    b: f64,
    steps: &[usize],
    eps_stop: f64,
) -> Result<Vec<OnePointValue>, ObservableError> {
    if evo.direction() != Direction::Backward {
        return Err(ObservableError::InvalidSpec(
            "one-point observables need a backward evolution".into(),
        ));
    }
    if !y.is_finite() {
        return Err(ObservableError::InvalidSpec("boundary point must be finite".into()));
    }
    if steps.windows(2).any(|w| w[0] > w[1]) || steps.last().is_some_and(|&s| s > evo.len()) {
        return Err(ObservableError::InvalidSpec(
            "checkpoint steps must be sorted and within the chain".into(),
        ));
    }
    let observe =
        |g_prime: f64, x: f64| -> Result<f64, ObservableError> { Ok(real_power(g_prime, a)? * real_power(x, b)?) };
    let mut out = Vec::with_capacity(steps.len());
    let mut w = y;
    let mut g_prime = 1.0;
    let mut frozen: Option<(f64, usize)> = None;
    let mut next = steps.iter().peekable();
    let maps = evo.steps();
    for k in 0..=evo.len() {
        if next.peek().is_none() {
            break;
        }
        if frozen.is_none() {
            let x = w - evo.xi_at(k);
            let four_dt = if k < maps.len() { 4.0 * maps[k].dt } else { 0.0 };
            if x.abs() <= eps_stop || (k < maps.len() && x * x <= four_dt) {
                frozen = Some((observe(g_prime, x)?, k));
            } else {
                let current = observe(g_prime, x)?;
                while next.peek() == Some(&&k) {
                    out.push(OnePointValue {
                        value: current,
                        stopped_at: None,
                    });
                    next.next();
                }
                if k < maps.len() {
                    let root = x.signum() * (x * x - four_dt).sqrt();
                    g_prime *= x / root;
                    w = maps[k].xi + root;
                }
                continue;
            }
        }
        let (value, at) = frozen.expect("frozen above");
        while next.peek() == Some(&&k) {
            out.push(OnePointValue {
                value,
                stopped_at: Some(at),
            });
            next.next();
        }
    }
    Ok(out)
}

/// [`one_point_along`] at a single step.
pub fn eval_one_point(
    evo: &LoewnerEvolution,
    y: f64,
    a: f64,
    b: f64,
    step: usize,
    eps_stop: f64,
) -> Result<OnePointValue, ObservableError> {
    Ok(one_point_along(evo, y, a, b, &[step], eps_stop)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
    pub satisfied: bool,
}

impl PairCheck {
    pub fn new(kappa: f64, a: f64, b: f64) -> Self {
        let residual = drift_residual(kappa, a, b);
        Self {
            a,
            b,
            residual,
            satisfied: residual.abs() <= AUDIT_TOLERANCE,
        }
    }
}

/// Drift audit of the printed one-point pair `a = b = −1 − 8/κ²` against
/// the pairs with `a = h_(1,3) = −1 − 8/κ` and `b` from the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentAudit {
    pub kappa: f64,
    pub printed: PairCheck,
    pub candidates: Vec<PairCheck>,
}

pub fn audit_printed_exponents(kappa: f64) -> ExponentAudit {
    let printed_exponent = -1.0 - 8.0 / (kappa * kappa);
    let printed = PairCheck::new(kappa, printed_exponent, printed_exponent);
    let a = -1.0 - 8.0 / kappa;
    let candidates = match one_point_exponents(kappa, a) {
        ExponentRoots::Real { roots } => roots.iter().map(|&b| PairCheck::new(kappa, a, b)).collect(),
        ExponentRoots::Complex { .. } => Vec::new(),
    };
    ExponentAudit {
        kappa,
        printed,
        candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::{DrivingPath, TimeGrid};
    use crate::loewner::{evolve_backward, evolve_forward};

    fn zero_backward(t: f64, n: usize) -> LoewnerEvolution {
        evolve_backward(&DrivingPath::constant(TimeGrid::new(t, n).unwrap(), 4.0, 0.0).unwrap())
    }

    #[test]
    fn covariant_field_basics() {
        let evo = zero_backward(0.25, 1);
        let z = Complex64::new(3.0, 0.0);
        let v = covariant_field(&evo, z, 2.0, 1).unwrap();
        assert!((v.factor.re - 9.0 / 8.0).abs() < 1e-12);
        assert!((v.image.re - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            covariant_field(&evo, z, 0.0, 1).unwrap().factor,
            Complex64::new(1.0, 0.0)
        );
        let id = covariant_field(&evo, Complex64::new(0.5, 0.5), 1.7, 0).unwrap();
        assert_eq!(id.factor, Complex64::new(1.0, 0.0));
        assert_eq!(id.image, Complex64::new(0.5, 0.5));
    }

    #[test]
    fn covariant_field_flags_slit_points() {
        // y = 0.5 is carried into the slit, where the derivative is imaginary
        let evo = zero_backward(0.25, 1);
        assert!(matches!(
            covariant_field(&evo, Complex64::new(0.5, 0.0), 1.5, 1),
            Err(ObservableError::NonPositiveDerivative { .. })
        ));
        assert_eq!(
            covariant_field(&evo, Complex64::new(0.5, 0.0), 0.0, 1)
                .unwrap()
                .factor
                .re,
            1.0
        );
    }

    #[test]
    fn real_power_rules() {
        assert_eq!(real_power(-2.0, 3.0).unwrap(), -8.0);
        assert!(real_power(-2.0, 0.5).is_err());
        assert!(real_power(0.0, -1.0).is_err());
        assert_eq!(real_power(0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn exponent_roots() {
        let r = one_point_exponents(3.0, 0.0).real().unwrap();
        assert!((r[0] - (1.0 + 4.0 / 3.0)).abs() < 1e-14 && r[1].abs() < 1e-14);
        let r = one_point_exponents(4.0, -3.0).real().unwrap();
        assert!((r[0] - 3.0).abs() < 1e-14 && (r[1] + 1.0).abs() < 1e-14);
        for kappa in [2.0, 8.0 / 3.0, 6.0] {
            let r = one_point_exponents(kappa, -1.0 - 8.0 / kappa).real().unwrap();
            assert!((r[0] - (1.0 + 8.0 / kappa)).abs() < 1e-12);
            assert!((r[1] + 4.0 / kappa).abs() < 1e-12);
        }
        assert!(matches!(one_point_exponents(4.0, 5.0), ExponentRoots::Complex { .. }));
    }

    #[test]
    fn generator_of_constant_is_zero() {
        let spec = ObservableSpec::generic(vec![BoundaryPoint { y: 1.0, weight: 0.0 }]).unwrap();
        assert_eq!(bpz_generator(&spec, &|_, _| 1.0, 4.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn generator_rejects_close_points() {
        let spec = ObservableSpec::generic(vec![BoundaryPoint { y: 1.0, weight: 0.0 }]).unwrap();
        assert!(matches!(
            bpz_generator(&spec, &|_, _| 1.0, 4.0, 1.0 - 1e-7),
            Err(ObservableError::PointsTooClose { .. })
        ));
    }

    #[test]
    fn power_law_residual_tracks_exponent_condition() {
        let kappa = 3.0;
        let b = 0.7;
        let h = b - kappa * b * (b - 1.0) / 4.0;
        let f = move |xi: f64, ys: &[f64]| (ys[0] - xi).powf(b);
        let good = ObservableSpec::generic(vec![BoundaryPoint { y: 1.3, weight: h }]).unwrap();
        assert!(bpz_relative_residual(&good, &f, kappa, 0.2).unwrap() <= 1e-6);
        let bad = ObservableSpec::generic(vec![BoundaryPoint {
            y: 1.3,
            weight: h + 0.3,
        }])
        .unwrap();
        assert!(bpz_relative_residual(&bad, &f, kappa, 0.2).unwrap() > 0.1);
    }

    #[test]
    fn one_point_closed_forms() {
        let evo = zero_backward(0.125, 1);
        let v = eval_one_point(&evo, 2.0, 1.0, 1.0, 1, 1e-3).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        assert_eq!(v.stopped_at, None);
        assert_eq!(eval_one_point(&evo, 2.0, 0.0, 0.0, 1, 1e-3).unwrap().value, 1.0);
        assert!((eval_one_point(&evo, 2.0, -3.0, 3.0, 0, 1e-3).unwrap().value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn one_point_stops_near_the_driver() {
        let evo = zero_backward(1.0, 100);
        // X² shrinks by 4dt per step from 0.01, so the next step would enter the slit
        let v = eval_one_point(&evo, 0.1, 1.0, 1.0, 100, 1e-3).unwrap();
        assert_eq!(v.stopped_at, Some(0));
        assert!((v.value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn one_point_requires_backward() {
        let p = DrivingPath::constant(TimeGrid::new(1.0, 4).unwrap(), 4.0, 0.0).unwrap();
        assert!(eval_one_point(&evolve_forward(&p), 1.0, 1.0, 1.0, 1, 1e-3).is_err());
    }

    #[test]
    fn audit_at_kappa_four() {
        let audit = audit_printed_exponents(4.0);
        assert!((audit.printed.residual - 7.5).abs() < 1e-12);
        assert!(!audit.printed.satisfied);
        let pairs: Vec<(f64, f64)> = audit.candidates.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(pairs.len(), 2);
        assert!((pairs[0].0 + 3.0).abs() < 1e-12 && (pairs[0].1 - 3.0).abs() < 1e-12);
        assert!((pairs[1].1 + 1.0).abs() < 1e-12);
        assert!(audit.candidates.iter().all(|p| p.satisfied));
    }

    #[test]
    fn spec_validation() {
        assert!(ObservableSpec::one_point(0.0, 1.0, 1.0).is_err());
        let dup = vec![
            BoundaryPoint { y: 1.0, weight: 0.0 },
            BoundaryPoint { y: 1.0, weight: 1.0 },
        ];
        assert!(ObservableSpec::generic(dup).is_err());
        let spec = ObservableSpec::one_point(1.0, -3.0, 3.0).unwrap();
        assert_eq!(spec.bcc(), KacLabel::DEGENERATE_12);
        assert_eq!(spec.points()[0].weight, -3.0);
    }
}
