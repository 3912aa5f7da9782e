//! Classical thermal processes on finite energy spectra: thermo-majorisation,
//! synthesis of elementary detailed-balanced steps, decomposition of
//! Gibbs-preserving maps into thermo-permutations, thermal cones,
//! Jaynes-Cummings transition bounds and relaxation dynamics.
//!
//! Every routine that can be exact is generic over [`Scalar`], implemented for
//! `f64` and for arbitrary-precision [`Rational`].

pub mod birkhoff;
pub mod cone;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod jaynes_cummings;
pub mod lp;
pub mod majorization;
pub mod model;
pub mod numeric;
pub mod synthesis;
pub mod thermalization;

pub use error::{Result, ThermoError};
pub use gibbs::{make_gibbs_context, GibbsContext, RationalGibbs};
pub use model::{
    is_detailed_balanced, is_gibbs_preserving, validate_stochastic, ConvexDecomposition,
    DecompositionTerm, EdpStep, Population, StochasticMatrix, ThermoPermutation,
};
pub use numeric::{Rational, Scalar};
