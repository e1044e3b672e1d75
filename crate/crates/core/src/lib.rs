//! Haar analysis on abstract good grids: unbalanced Haar wavelets, Besov
//! norms of positive and negative smoothness, Dirac masses and dipoles, and
//! dipole decompositions of negative-smoothness distributions.

pub mod besov;
pub mod dipole_decomp;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod haar;
pub mod io;
pub mod particles;
pub mod scalar;

pub use besov::{Convention, DistCoeffs, HolderReport, NormReport};
pub use dipole_decomp::{AnchorRule, DCCoeffs, DDRep, DipoleBasis, Member};
pub use error::{Error, Result};
pub use experiments::{ExperimentKind, ExperimentReport, ExperimentSpec};
pub use grid::{Address, CellId, GoodGrid, NodeId};
pub use haar::{HaarPair, StepFunction, WaveletId};
pub use particles::{Particle, ParticleConfig, TruncatedDist};
pub use scalar::{ComplexRational, Rational, Scalar};
