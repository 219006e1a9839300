//! Dictionary between the SLE parameter `κ` and the generalized Liouville
//! theory: `b² = ±κ/4`, `Q² = b² + 2 + b⁻²`, `c = 1 + 6Q²` and the Kac
//! weights `h_(r,s) = α(Q − α)`.
//!
//! Everything is expressed through `b²` alone, so the matter sector (pure
//! imaginary `b`) stays real. The generic `*_of` functions work for `f64`
//! and for exact rationals alike.

use std::fmt;
use std::str::FromStr;

use num::complex::Complex64;
use num::{BigRational, FromPrimitive, Num, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::rational_to_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CftError {
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(String),
    #[error("Kac labels must be positive integers, got ({0}, {1})")]
    InvalidLabel(u32, u32),
    #[error("unknown sector {0:?}; expected liouville or matter")]
    UnknownSector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Liouville,
    Matter,
}

impl Sector {
    /// Sign of `b²` relative to `κ/4`.
    pub fn sign(self) -> i32 {
        match self {
            Sector::Liouville => 1,
            Sector::Matter => -1,
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sector::Liouville => "liouville",
            Sector::Matter => "matter",
        })
    }
}

impl FromStr for Sector {
    type Err = CftError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "liouville" | "gravity" => Ok(Sector::Liouville),
            "matter" => Ok(Sector::Matter),
            _ => Err(CftError::UnknownSector(s.to_string())),
        }
    }
}

/// `b² = sign·κ/4`.
pub fn b_squared_of<T: Num + Clone + FromPrimitive>(kappa: &T, sector: Sector) -> T {
    let four = T::from_i32(4).unwrap();
    let b2 = kappa.clone() / four;
    if sector.sign() > 0 {
        b2
    } else {
        T::zero() - b2
    }
}

/// `Q² = (b + 1/b)² = b² + 2 + 1/b²`.
pub fn q_squared_of<T: Num + Clone + FromPrimitive>(b_squared: &T) -> T {
    b_squared.clone() + T::from_i32(2).unwrap() + T::one() / b_squared.clone()
}

/// `c = 1 + 6Q²`.
pub fn central_charge_of<T: Num + Clone + FromPrimitive>(b_squared: &T) -> T {
    T::one() + T::from_i32(6).unwrap() * q_squared_of(b_squared)
}

/// `h_(r,s) = ((1 − r²)b² + 2(1 − rs) + (1 − s²)/b²) / 4`, the expansion
/// of `α(Q − α)` with `α = Q/2 − (br + s/b)/2`.
pub fn kac_weight_of<T: Num + Clone + FromPrimitive>(b_squared: &T, r: u32, s: u32) -> T {
    let int = |v: i64| T::from_i64(v).unwrap();
    let (r, s) = (i64::from(r), i64::from(s));
    let sum = int(1 - r * r) * b_squared.clone() + int(2 * (1 - r * s)) + int(1 - s * s) / b_squared.clone();
    sum / int(4)
}

/// Sector parameters in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CftParams {
    pub kappa: f64,
    pub sector: Sector,
    pub b_squared: f64,
    pub q_squared: f64,
    pub c: f64,
}

/// Sector parameters in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCftParams {
    pub kappa: BigRational,
    pub sector: Sector,
    pub b_squared: BigRational,
    pub q_squared: BigRational,
    pub c: BigRational,
}

pub fn params_from_kappa(kappa: f64, sector: Sector) -> Result<CftParams, CftError> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(CftError::NonPositiveKappa(kappa.to_string()));
    }
    let b_squared = b_squared_of(&kappa, sector);
    Ok(CftParams {
        kappa,
        sector,
        b_squared,
        q_squared: q_squared_of(&b_squared),
        c: central_charge_of(&b_squared),
    })
}

pub fn params_from_kappa_exact(kappa: &BigRational, sector: Sector) -> Result<ExactCftParams, CftError> {
    if !kappa.is_positive() {
        return Err(CftError::NonPositiveKappa(kappa.to_string()));
    }
    let b_squared = b_squared_of(kappa, sector);
    Ok(ExactCftParams {
        kappa: kappa.clone(),
        sector,
        q_squared: q_squared_of(&b_squared),
        c: central_charge_of(&b_squared),
        b_squared,
    })
}

impl ExactCftParams {
    pub fn kac_weight(&self, label: KacLabel) -> BigRational {
        kac_weight_of(&self.b_squared, label.r, label.s)
    }

    pub fn to_f64(&self) -> CftParams {
        CftParams {
            kappa: rational_to_f64(&self.kappa),
            sector: self.sector,
            b_squared: rational_to_f64(&self.b_squared),
            q_squared: rational_to_f64(&self.q_squared),
            c: rational_to_f64(&self.c),
        }
    }
}

pub fn central_charge(params: &CftParams) -> f64 {
    params.c
}

/// Degenerate field label `(r, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KacLabel {
    pub r: u32,
    pub s: u32,
}

impl KacLabel {
    pub const IDENTITY: KacLabel = KacLabel { r: 1, s: 1 };
    pub const DEGENERATE_12: KacLabel = KacLabel { r: 1, s: 2 };
    pub const DEGENERATE_21: KacLabel = KacLabel { r: 2, s: 1 };
    pub const DEGENERATE_13: KacLabel = KacLabel { r: 1, s: 3 };

    pub fn new(r: u32, s: u32) -> Result<Self, CftError> {
        if r == 0 || s == 0 {
            return Err(CftError::InvalidLabel(r, s));
        }
        Ok(Self { r, s })
    }

    pub fn weight(&self, params: &CftParams) -> f64 {
        kac_weight_of(&params.b_squared, self.r, self.s)
    }

    /// Momentum `α = Q/2 − (br + s/b)/2`, complex in the matter sector.
    pub fn alpha(&self, params: &CftParams) -> Complex64 {
        let b = Complex64::new(params.b_squared, 0.0).sqrt();
        let q = b + 1.0 / b;
        q * 0.5 - (b * f64::from(self.r) + f64::from(self.s) / b) * 0.5
    }
}

pub fn kac_dimension(params: &CftParams, r: u32, s: u32) -> Result<f64, CftError> {
    Ok(KacLabel::new(r, s)?.weight(params))
}

/// Liouville and matter central charges at the same `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub c_liouville: f64,
    pub c_matter: f64,
    pub sum: f64,
}

pub fn coupling_check(kappa: f64) -> Result<Coupling, CftError> {
    let c_liouville = params_from_kappa(kappa, Sector::Liouville)?.c;
    let c_matter = params_from_kappa(kappa, Sector::Matter)?.c;
    Ok(Coupling {
        c_liouville,
        c_matter,
        sum: c_liouville + c_matter,
    })
}

/// Exact `(c_L, c_M, c_L + c_M)`.
pub fn coupling_check_exact(kappa: &BigRational) -> Result<(BigRational, BigRational, BigRational), CftError> {
    let l = params_from_kappa_exact(kappa, Sector::Liouville)?.c;
    let m = params_from_kappa_exact(kappa, Sector::Matter)?.c;
    let sum = &l + &m;
    Ok((l, m, sum))
}

/// One row of the `cft-table` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CftRow {
    pub kappa: f64,
    pub c_l: f64,
    pub c_m: f64,
    pub sum: f64,
    pub h12_l: f64,
    pub h12_m: f64,
    pub h13_l: f64,
}

pub fn cft_row(kappa: f64) -> Result<CftRow, CftError> {
    let l = params_from_kappa(kappa, Sector::Liouville)?;
    let m = params_from_kappa(kappa, Sector::Matter)?;
    Ok(CftRow {
        kappa,
        c_l: l.c,
        c_m: m.c,
        sum: l.c + m.c,
        h12_l: KacLabel::DEGENERATE_12.weight(&l),
        h12_m: KacLabel::DEGENERATE_12.weight(&m),
        h13_l: KacLabel::DEGENERATE_13.weight(&l),
    })
}

/// Exact-mode row, for rational `κ`.
pub fn cft_row_exact(kappa: &BigRational) -> Result<CftRow, CftError> {
    let l = params_from_kappa_exact(kappa, Sector::Liouville)?;
    let m = params_from_kappa_exact(kappa, Sector::Matter)?;
    let sum = &l.c + &m.c;
    Ok(CftRow {
        kappa: rational_to_f64(kappa),
        c_l: rational_to_f64(&l.c),
        c_m: rational_to_f64(&m.c),
        sum: rational_to_f64(&sum),
        h12_l: rational_to_f64(&l.kac_weight(KacLabel::DEGENERATE_12)),
        h12_m: rational_to_f64(&m.kac_weight(KacLabel::DEGENERATE_12)),
        h13_l: rational_to_f64(&l.kac_weight(KacLabel::DEGENERATE_13)),
    })
}
