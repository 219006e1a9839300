//! Exact Verma module arithmetic for the Virasoro algebra.
//!
//! Vectors are rational combinations of PBW monomials
//! `L_{-λ1} ⋯ L_{-λk} |h⟩` with `λ1 ≥ ⋯ ≥ λk ≥ 1`, keyed by the partition
//! `λ`. Mode operators are applied by normal-ordering words with
//! `[L_m, L_n] = (m − n) L_{m+n} + (c/12)(m³ − m) δ_{m+n,0}`.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cft::{b_squared_of, central_charge_of, kac_weight_of, Sector};

/// Largest level accepted when building monomials from user input.
pub const MAX_LEVEL: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VirasoroError {
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(BigRational),
    #[error("partition {0:?} is not a non-increasing list of positive integers")]
    InvalidPartition(Vec<u32>),
    #[error("level {0} exceeds the cap {MAX_LEVEL}")]
    LevelCap(u32),
    #[error("vector is not a combination of |h> and the null vector: {0}")]
    DecompositionFailure(String),
    #[error("integer {0} does not fit in 64 bits")]
    Overflow(BigInt),
}

/// Non-increasing sequence of positive integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self, VirasoroError> {
        if parts.contains(&0) || parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(VirasoroError::InvalidPartition(parts));
        }
        Ok(Self(parts))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn level(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Mode word `[-λ1, …, -λk]`, leftmost operator first.
    fn word(&self) -> Vec<i64> {
        self.0.iter().map(|&p| -i64::from(p)).collect()
    }
}

/// Element of the Verma module `V(c, h)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VermaVector {
    coefficients: BTreeMap<Partition, BigRational>,
    h: BigRational,
    c: BigRational,
}

impl VermaVector {
    pub fn zero(h: BigRational, c: BigRational) -> Self {
        Self {
            coefficients: BTreeMap::new(),
            h,
            c,
        }
    }

    /// The highest-weight vector `|h⟩`.
    pub fn highest_weight(h: BigRational, c: BigRational) -> Self {
        let mut v = Self::zero(h, c);
        v.coefficients.insert(Partition::empty(), BigRational::one());
        v
    }

    /// `L_{-λ1} ⋯ L_{-λk} |h⟩`.
    pub fn monomial(parts: Vec<u32>, h: BigRational, c: BigRational) -> Result<Self, VirasoroError> {
        let partition = Partition::new(parts)?;
        if partition.level() > MAX_LEVEL {
            return Err(VirasoroError::LevelCap(partition.level()));
        }
        let mut v = Self::zero(h, c);
        v.coefficients.insert(partition, BigRational::one());
        Ok(v)
    }

    pub fn h(&self) -> &BigRational {
        &self.h
    }

    pub fn c(&self) -> &BigRational {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Partition, &BigRational)> {
        self.coefficients.iter()
    }

    pub fn coefficient(&self, parts: &[u32]) -> BigRational {
        self.coefficients
            .get(&Partition(parts.to_vec()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn levels(&self) -> BTreeSet<u32> {
        self.coefficients.keys().map(Partition::level).collect()
    }

    /// False for mixed-level vectors such as images of `W_{-1}²`.
    pub fn is_homogeneous(&self) -> bool {
        self.levels().len() <= 1
    }

    fn accumulate(&mut self, partition: Partition, value: BigRational) {
        if value.is_zero() {
            return;
        }
        match self.coefficients.entry(partition) {
            Entry::Vacant(slot) => {
                slot.insert(value);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += value;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        let mut out = Self::zero(self.h.clone(), self.c.clone());
        if factor.is_zero() {
            return out;
        }
        for (p, v) in &self.coefficients {
            out.coefficients.insert(p.clone(), v * factor);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.h == other.h && self.c == other.c, "vectors from different modules");
        let mut out = self.clone();
        for (p, v) in &other.coefficients {
            out.accumulate(p.clone(), v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-BigRational::one()))
    }
}

impl fmt::Display for VermaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (p, v)) in self.coefficients.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({v})")?;
            for part in p.parts() {
                write!(f, " L_{{-{part}}}")?;
            }
            f.write_str(" |h>")?;
        }
        Ok(())
    }
}

/// Normal-orders `coef · L_{w1} ⋯ L_{wk} |h⟩` into `out`.
fn reduce_word(coef: BigRational, word: Vec<i64>, out: &mut VermaVector) {
    let twelve = BigRational::from_integer(12.into());
    let mut stack = vec![(coef, word)];
    while let Some((coef, mut word)) = stack.pop() {
        if coef.is_zero() {
            continue;
        }
        if let Some(i) = word.windows(2).position(|w| w[0] > w[1]) {
            let (a, b) = (word[i], word[i + 1]);
            let mut commuted = word.clone();
            commuted.splice(i..i + 2, [a + b]);
            stack.push((&coef * BigRational::from_integer((a - b).into()), commuted));
            if a + b == 0 {
                let mut central = word.clone();
                central.drain(i..i + 2);
                let anomaly = BigRational::from_integer((a * a * a - a).into());
                stack.push((&coef * &out.c * anomaly / &twelve, central));
            }
            word.swap(i, i + 1);
            stack.push((coef, word));
            continue;
        }
        match word.last().copied() {
            Some(m) if m > 0 => {}
            Some(0) => {
                word.pop();
                let scaled = &coef * &out.h;
                stack.push((scaled, word));
            }
            _ => {
                let parts = word.iter().map(|&m| (-m) as u32).collect();
                out.accumulate(Partition(parts), coef);
            }
        }
    }
}

/// `L_n v`.
pub fn l_action(n: i64, v: &VermaVector) -> VermaVector {
    let mut out = VermaVector::zero(v.h.clone(), v.c.clone());
    for (p, coef) in &v.coefficients {
        let mut word = Vec::with_capacity(p.0.len() + 1);
        word.push(n);
        word.extend(p.word());
        reduce_word(coef.clone(), word, &mut out);
    }
    out
}

/// Annihilated by `L_1` and `L_2`, hence by every positive mode.
pub fn is_singular(v: &VermaVector) -> bool {
    l_action(1, v).is_zero() && l_action(2, v).is_zero()
}

/// `(coeff · L_{-1}² + L_{-2}) |h⟩`.
pub fn level_two_vector(coeff: &BigRational, h: BigRational, c: BigRational) -> VermaVector {
    let mut v = VermaVector::zero(h, c);
    v.accumulate(Partition(vec![1, 1]), coeff.clone());
    v.accumulate(Partition(vec![2]), BigRational::one());
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullVectorCheck {
    pub vector: VermaVector,
    pub singular: bool,
}

fn check_kappa(kappa: &BigRational) -> Result<(), VirasoroError> {
    if kappa.is_positive() {
        Ok(())
    } else {
        Err(VirasoroError::NonPositiveKappa(kappa.clone()))
    }
}

/// `(b² L_{-1}² + L_{-2}) |h_(1,2) + shift⟩` with `b² = ±κ/4`.
pub fn null_vector_12_shifted(
    kappa: &BigRational,
    sector: Sector,
    shift: &BigRational,
) -> Result<NullVectorCheck, VirasoroError> {
    check_kappa(kappa)?;
    let b2 = b_squared_of(kappa, sector);
    let h = kac_weight_of(&b2, 1, 2) + shift;
    let vector = level_two_vector(&b2, h, central_charge_of(&b2));
    let singular = is_singular(&vector);
    Ok(NullVectorCheck { vector, singular })
}

/// `(b⁻² L_{-1}² + L_{-2}) |h_(2,1) + shift⟩` with `b² = ±κ/4`.
pub fn null_vector_21_shifted(
    kappa: &BigRational,
    sector: Sector,
    shift: &BigRational,
) -> Result<NullVectorCheck, VirasoroError> {
    check_kappa(kappa)?;
    let b2 = b_squared_of(kappa, sector);
    let h = kac_weight_of(&b2, 2, 1) + shift;
    let vector = level_two_vector(&b2.recip(), h, central_charge_of(&b2));
    let singular = is_singular(&vector);
    Ok(NullVectorCheck { vector, singular })
}

pub fn null_vector_12(kappa: &BigRational, sector: Sector) -> Result<NullVectorCheck, VirasoroError> {
    null_vector_12_shifted(kappa, sector, &BigRational::zero())
}

pub fn null_vector_21(kappa: &BigRational, sector: Sector) -> Result<NullVectorCheck, VirasoroError> {
    null_vector_21_shifted(kappa, sector, &BigRational::zero())
}

/// `W_{-1} = (L_{-1} + L_1)/2`.
pub fn w_minus_one(v: &VermaVector) -> VermaVector {
    l_action(-1, v)
        .add(&l_action(1, v))
        .scale(&BigRational::new(1.into(), 2.into()))
}

/// `W_{-2} = (L_0 + L_{-2})/4`.
pub fn w_minus_two(v: &VermaVector) -> VermaVector {
    l_action(0, v)
        .add(&l_action(-2, v))
        .scale(&BigRational::new(1.into(), 4.into()))
}

/// `(2W_{-2} + (κ/2) W_{-1}²) v`.
pub fn radial_generator(kappa: &BigRational, v: &VermaVector) -> VermaVector {
    let half_kappa = kappa / BigRational::from_integer(2.into());
    w_minus_two(v)
        .scale(&BigRational::from_integer(2.into()))
        .add(&w_minus_one(&w_minus_one(v)).scale(&half_kappa))
}

/// `−(2 + κ)(6 + κ)/(8κ)`.
pub fn w_eigenvalue_formula(kappa: &BigRational) -> BigRational {
    let int = |v: i64| BigRational::from_integer(v.into());
    -(int(2) + kappa) * (int(6) + kappa) / (int(8) * kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WEigenvalue {
    /// Coefficient `λ` of `|h⟩`.
    pub eigenvalue: BigRational,
    /// Coefficient `μ` of the `(1,2)` null vector.
    pub null_coefficient: BigRational,
    pub remainder_is_null_multiple: bool,
}

/// Decomposes `(2W_{-2} + (κ/2)W_{-1}²)|h_(1,2)⟩ = λ|h⟩ + μN` in the
/// Liouville sector.
pub fn w_eigenvalue(kappa: &BigRational) -> Result<WEigenvalue, VirasoroError> {
    let null = null_vector_12(kappa, Sector::Liouville)?.vector;
    let ground = VermaVector::highest_weight(null.h.clone(), null.c.clone());
    let image = radial_generator(kappa, &ground);
    let mu = image.coefficient(&[2]);
    let lambda = image.coefficient(&[]);
    let remainder = image.sub(&ground.scale(&lambda)).sub(&null.scale(&mu));
    if !remainder.is_zero() {
        return Err(VirasoroError::DecompositionFailure(remainder.to_string()));
    }
    Ok(WEigenvalue {
        eigenvalue: lambda,
        null_coefficient: mu,
        remainder_is_null_multiple: true,
    })
}

/// JSON report emitted by `virasoro-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirasoroReport {
    pub kappa: String,
    pub sector: Sector,
    pub singular_12: bool,
    pub singular_21: bool,
    pub w_eigenvalue_num: i64,
    pub w_eigenvalue_den: i64,
    pub matches_formula: bool,
}

fn to_i64(v: &BigInt) -> Result<i64, VirasoroError> {
    v.to_i64().ok_or_else(|| VirasoroError::Overflow(v.clone()))
}

/// The radial eigenvalue is always computed in the Liouville sector;
/// `sector` selects where the null vectors are checked.
pub fn virasoro_report(kappa: &BigRational, sector: Sector) -> Result<VirasoroReport, VirasoroError> {
    let singular_12 = null_vector_12(kappa, sector)?.singular;
    let singular_21 = null_vector_21(kappa, sector)?.singular;
    let w = w_eigenvalue(kappa)?;
    let matches_formula =
        w.eigenvalue == w_eigenvalue_formula(kappa) && w.null_coefficient == BigRational::new(1.into(), 2.into());
    Ok(VirasoroReport {
        kappa: kappa.to_string(),
        sector,
        singular_12,
        singular_21,
        w_eigenvalue_num: to_i64(w.eigenvalue.numer())?,
        w_eigenvalue_den: to_i64(w.eigenvalue.denom())?,
        matches_formula,
    })
}
