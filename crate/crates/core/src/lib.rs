//! Classification of conducting objects from the spectral signature of their
//! magnetic polarizability tensor (MPT).
//!
//! The pipeline runs in stages, one module per stage:
//!
//! * [`tensor`] - complex symmetric rank-2 tensors, principal invariants,
//!   eigenvalues and rotation.
//! * [`signature`] - spectral signatures (MPT tabulated over angular
//!   frequency), file formats, and the exact conducting permeable sphere.
//! * [`dictionary`] - labelled sample dictionaries: material/size variation,
//!   frequency scaling, additive noise, rotation-invariant feature vectors,
//!   train/test splits and leave-one-geometry-out splits.
//! * [`classify`] - six multiclass probabilistic classifiers trained from
//!   scratch on a dictionary.
//! * [`eval`] - confusion matrices, per-class metrics, Cohen's kappa,
//!   posterior percentile summaries, Monte Carlo cross validation, and
//!   bias/variance estimation.

pub mod classify;
pub mod dictionary;
pub mod eval;
pub mod rng;
pub mod signature;
pub mod tensor;
