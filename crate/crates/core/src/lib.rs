//! Hardness instances for weakly learning noisy halfspaces with polynomial
//! threshold functions: label-cover generation, the point-sign test sampler,
//! folding, completeness witnesses, labeling decoders and a battery of
//! structural checks for the polynomial identities the analysis relies on.

pub mod decode;
pub mod lemma_lab;
pub mod gauss;
pub mod hermite;
pub mod label_cover;
pub mod poly;
pub mod ptf;
pub mod reduction;

pub use poly::{Coeff, Monomial, PolyError, Polynomial, Rational, VarId};
