//! Forward and time-reversed chordal Loewner evolution driven by Brownian
//! motion, Liouville-sector martingale observables along the backward flow,
//! and exact Virasoro checks of the degenerate null vectors.
//!
//! Module map:
//!
//! * [`driving`]: discretized driving functions `ξ_t = √κ B_t`.
//! * [`loewner`]: exact slit-map chains (forward and backward), the zipper
//!   trace, the whole-plane flow on the half-plane and the composed process.
//! * [`cft`]: the `κ ↔ b²` dictionary, central charges and Kac weights.
//! * [`virasoro`]: exact-rational Verma module arithmetic.
//! * [`observables`]: covariant fields, the boundary drift generator and
//!   the one-point exponent oracle.
//! * [`montecarlo`]: ensemble martingale tests and consistency experiments.
//! * [`cli`]: the `revsle` command line front end.

pub mod cft;
pub mod cli;
pub mod driving;
pub mod loewner;
pub mod montecarlo;
pub mod observables;
pub mod virasoro;

mod numeric;

pub use numeric::parse_rational;

pub use num::complex::Complex64;
